mod common;

use std::rc::Rc;

use connfuse::gcn::{cheb_conv, cheb_conv_with, ChebEvaluation, ChebLayer, Encoder, EncoderConfig};
use connfuse::numcore::{Mat, ParamStore, Tape};
use connfuse::popgraph::scaled_laplacian;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{eigenvalues, random_graph, random_mat, spectral_filter};

fn max_abs(a: &Mat, b: &Mat) -> f64 {
    (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[test]
fn recurrence_matches_eigendecomposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for trial in 0..20 {
        let n = 6;
        let (edges, weights) = random_graph(n, 0.6, &mut rng);
        let lap = scaled_laplacian(n, &edges, &weights).unwrap();
        let mut store = ParamStore::new();
        let (d_in, d_out) = if trial % 2 == 0 { (4, 3) } else { (2, 5) };
        let layer = ChebLayer::new(&mut store, "l", d_in, d_out, 3, &mut rng).unwrap();
        *store.get_mut(layer.bias) = random_mat(1, d_out, &mut rng);
        let x = random_mat(n, d_in, &mut rng);
        let thetas: Vec<Mat> = layer.thetas.iter().map(|&id| store.get(id).clone()).collect();
        let expect = spectral_filter(&lap, &x, &thetas, store.get(layer.bias));
        for mode in [ChebEvaluation::Recurrence, ChebEvaluation::Clenshaw] {
            let tape = Tape::new();
            let b = store.bind(&tape);
            let got = cheb_conv_with(tape.constant(x.clone()), tape.constant(lap.clone()), &layer, &b, mode).unwrap();
            let err = max_abs(&got.value(), &expect);
            assert!(err < 1e-8, "trial {trial} {mode:?}: {err:e}");
        }
    }
}

#[test]
fn laplacian_spectrum_in_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.random_range(2..9);
        let (edges, weights) = random_graph(n, 0.5, &mut rng);
        let lap = scaled_laplacian(n, &edges, &weights).unwrap();
        assert_eq!(lap, lap.t());
        for l in eigenvalues(&lap) {
            assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&l), "eigenvalue {l}");
        }
    }
    let empty = scaled_laplacian(4, &[], &[]).unwrap();
    assert_eq!(empty, -Mat::eye(4));
    let pair = scaled_laplacian(2, &[(0, 1)], &[1.0]).unwrap();
    assert_eq!(pair, Mat::from_elem((2, 2), -0.5));
}

#[test]
fn higher_order_with_zero_coefficients_reduces_to_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (edges, weights) = random_graph(7, 0.5, &mut rng);
    let lap = scaled_laplacian(7, &edges, &weights).unwrap();
    let x = random_mat(7, 3, &mut rng);
    let mut base = ParamStore::new();
    let one = ChebLayer::new(&mut base, "k1", 3, 2, 1, &mut rng).unwrap();
    let reference = {
        let tape = Tape::new();
        let b = base.bind(&tape);
        let v = cheb_conv(tape.constant(x.clone()), tape.constant(lap.clone()), &one, &b).unwrap();
        let out = v.value().clone();
        out
    };
    for k in 2..6 {
        let mut store = ParamStore::new();
        let layer = ChebLayer::new(&mut store, "k", 3, 2, k, &mut rng).unwrap();
        *store.get_mut(layer.thetas[0]) = base.get(one.thetas[0]).clone();
        for &id in &layer.thetas[1..] {
            store.get_mut(id).fill(0.0);
        }
        let tape = Tape::new();
        let b = store.bind(&tape);
        let v = cheb_conv(tape.constant(x.clone()), tape.constant(lap.clone()), &layer, &b).unwrap();
        assert!(max_abs(&v.value(), &reference) < 1e-15, "K = {k}");
    }
}

#[test]
fn encoder_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 9;
    let (edges, weights) = random_graph(n, 0.5, &mut rng);
    let lap = scaled_laplacian(n, &edges, &weights).unwrap();
    let x = random_mat(n, 5, &mut rng);
    let mut store = ParamStore::new();
    let enc = Encoder::new(&mut store, "e", 5, EncoderConfig::default(), &mut rng).unwrap();
    for b in store.values_mut() {
        if b.nrows() == 1 {
            b.mapv_inplace(|_| 0.1);
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.reverse();
    perm.swap(0, 4);
    let px = Mat::from_shape_fn(x.dim(), |(i, j)| x[[perm[i], j]]);
    let plap = Mat::from_shape_fn(lap.dim(), |(i, j)| lap[[perm[i], perm[j]]]);
    let tape = Tape::new();
    let bind = store.bind(&tape);
    let h = enc.encode(tape.constant(x), tape.constant(lap), &bind, false, 0).unwrap();
    let ph = enc.encode(tape.constant(px), tape.constant(plap), &bind, false, 0).unwrap();
    let h = h.value();
    let expect = Mat::from_shape_fn(h.dim(), |(i, j)| h[[perm[i], j]]);
    assert!(max_abs(&ph.value(), &expect) < 1e-9);
}

#[test]
fn loss_reaches_edge_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let n = 8;
    let (edges, weights) = random_graph(n, 0.7, &mut rng);
    let edges: Rc<[(usize, usize)]> = Rc::from(edges);
    let mut store = ParamStore::new();
    let enc = Encoder::new(&mut store, "e", 4, EncoderConfig { dropout: 0.0, ..EncoderConfig::default() }, &mut rng).unwrap();
    let w_id = store.add("w", Mat::from_shape_vec((1, weights.len()), weights).unwrap());
    let tape = Tape::new();
    let b = store.bind(&tape);
    let lap = b[w_id].scaled_laplacian(n, edges).unwrap();
    let h = enc.encode(tape.constant(random_mat(n, 4, &mut rng)), lap, &b, false, 0).unwrap();
    let grads = tape.backward(h.sum()).unwrap();
    assert!(grads.get_or_zeros(b[w_id]).iter().any(|g| g.abs() > 1e-12));
}
