//! The three fusion modes on random embeddings, and the directional nature
//! of asymmetric cross-attention.

use connfuse::fusion::{cross_attention, Fusion, FusionConfig, FusionMode};
use connfuse::numcore::{Mat, ParamStore, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n, d) = (10, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h_f = Mat::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0));
    let h_s = Mat::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0));

    for mode in FusionMode::ALL {
        let mut store = ParamStore::new();
        let cfg = FusionConfig { mode, dropout: 0.0, ..FusionConfig::default() };
        let fusion = Fusion::new(&mut store, d, &cfg, &mut rng)?;
        let tape = Tape::new();
        let b = store.bind(&tape);
        let z = fusion.forward(tape.constant(h_f.clone()), tape.constant(h_s.clone()), &b, false, 0)?;
        println!("{:<10} output {:?}, {} parameters", mode.as_str(), z.shape(), store.num_scalars());

        if mode == FusionMode::Asymmetric {
            let att = cross_attention(tape.constant(h_f.clone()), tape.constant(h_s.clone()), &fusion.blocks[0].attention, &b)?;
            for (h, w) in att.weights.iter().enumerate() {
                let w = w.value();
                let entropy: f64 = w.iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum::<f64>() / n as f64;
                println!("  head {h}: mean row entropy {entropy:.3} (uniform {:.3})", (n as f64).ln());
            }
            let mut nudged = h_s.clone();
            nudged.row_mut(0).mapv_inplace(|v| v + 1.0);
            let z2 = fusion.forward(tape.constant(h_f.clone()), tape.constant(nudged), &b, false, 0)?;
            let moved = (0..n).filter(|&i| z2.value().row(i) != z.value().row(i)).count();
            println!("  nudging one structural row moves {moved} of {n} outputs");
        }
    }
    Ok(())
}
