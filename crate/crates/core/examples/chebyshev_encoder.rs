//! Locality of Chebyshev filters: an impulse on one node of a ring spreads
//! at most `K - 1` hops through a single layer.

use connfuse::gcn::{cheb_conv, ChebLayer, Encoder, EncoderConfig};
use connfuse::numcore::{Mat, ParamStore, Tape};
use connfuse::popgraph::scaled_laplacian;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 12;
    let edges: Vec<(usize, usize)> = (0..n).map(|i| (i.min((i + 1) % n), i.max((i + 1) % n))).collect();
    let lap = scaled_laplacian(n, &edges, &vec![1.0; n])?;
    let mut impulse = Mat::zeros((n, 1));
    impulse[[0, 0]] = 1.0;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for order in 1..=4 {
        let mut store = ParamStore::new();
        let layer = ChebLayer::new(&mut store, "ring", 1, 1, order, &mut rng)?;
        let tape = Tape::new();
        let b = store.bind(&tape);
        let out = cheb_conv(tape.constant(impulse.clone()), tape.constant(lap.clone()), &layer, &b)?;
        let reached: Vec<usize> = out.value().column(0).iter().enumerate().filter(|(_, v)| v.abs() > 1e-12).map(|(i, _)| i).collect();
        println!("K = {order}: nonzero at nodes {reached:?}");
    }

    let mut store = ParamStore::new();
    let features = Mat::from_shape_fn((n, 3), |(i, j)| ((i * 3 + j) as f64).sin());
    let encoder = Encoder::new(&mut store, "enc", 3, EncoderConfig::default(), &mut rng)?;
    let tape = Tape::new();
    let b = store.bind(&tape);
    let h = encoder.encode(tape.constant(features), tape.constant(lap), &b, false, 0)?;
    println!("four-layer encoder: {:?} -> {:?} ({} parameters)", (n, 3), h.shape(), store.num_scalars());
    Ok(())
}
