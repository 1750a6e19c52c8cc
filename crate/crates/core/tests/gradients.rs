//! Central-difference checks for every differentiable operation and for
//! each assembled network layout.

use std::rc::Rc;

use connfuse::fusion::FusionMode;
use connfuse::harness::GradCheckInstance;
use connfuse::model::ModalityMode;
use connfuse::numcore::{
    concat_cols, grad_check, Binding, GradCheckOptions, Mat, Objective, ParamId, ParamStore, Tape, TensorError, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type OpFn = for<'t> fn(&[Var<'t>]) -> Result<Var<'t>, TensorError>;

/// `sum(op(inputs) ⊙ probe)` with a fixed random probe.
struct OpObjective {
    op: OpFn,
    inputs: Vec<ParamId>,
}

impl Objective for OpObjective {
    fn loss<'t>(&self, tape: &'t Tape, params: &Binding<'t>) -> Result<Var<'t>, TensorError> {
        let inputs: Vec<Var<'t>> = self.inputs.iter().map(|&id| params[id]).collect();
        let out = (self.op)(&inputs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let probe = Mat::from_shape_simple_fn(out.shape(), || rng.random_range(-1.0..1.0));
        Ok(out.mul(tape.constant(probe))?.sum())
    }
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// Entries bounded away from zero so piecewise ops stay on one branch.
fn away_from_zero(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_shape_simple_fn((rows, cols), || {
        let v: f64 = rng.random_range(0.1..1.0);
        if rng.random::<bool>() {
            v
        } else {
            -v
        }
    })
}

fn check(name: &str, inputs: Vec<Mat>, op: OpFn) {
    let mut store = ParamStore::new();
    let inputs = inputs
        .into_iter()
        .enumerate()
        .map(|(k, m)| store.add(format!("{name}.{k}"), m))
        .collect();
    let report = grad_check(
        &OpObjective { op, inputs },
        &store,
        GradCheckOptions {
            samples_per_param: usize::MAX,
            ..GradCheckOptions::default()
        },
    )
    .unwrap();
    assert!(
        report.max_rel_error < 1e-6,
        "{name}: max relative error {:.3e} at {}{:?} (analytic {}, numeric {})",
        report.max_rel_error,
        report.worst_param,
        report.worst_index,
        report.analytic,
        report.numeric
    );
}

#[test]
fn elementwise_and_linear_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    check("matmul", vec![random(3, 4, &mut rng), random(4, 2, &mut rng)], |v| v[0].matmul(v[1]));
    check("transpose", vec![random(3, 4, &mut rng)], |v| Ok(v[0].t()));
    check("add", vec![random(3, 4, &mut rng), random(3, 4, &mut rng)], |v| v[0].add(v[1]));
    check("sub", vec![random(3, 4, &mut rng), random(3, 4, &mut rng)], |v| v[0].sub(v[1]));
    check("mul", vec![random(3, 4, &mut rng), random(3, 4, &mut rng)], |v| v[0].mul(v[1]));
    check("add_row", vec![random(3, 4, &mut rng), random(1, 4, &mut rng)], |v| v[0].add_row(v[1]));
    check("scale", vec![random(3, 4, &mut rng)], |v| Ok(v[0].scale(-2.5)));
    check("add_scalar", vec![random(3, 4, &mut rng)], |v| Ok(v[0].add_scalar(0.7)));
    check("sum", vec![random(3, 4, &mut rng)], |v| Ok(v[0].sum()));
    check("self_product", vec![random(3, 3, &mut rng)], |v| v[0].matmul(v[0].t()));
}

#[test]
fn piecewise_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    check("relu", vec![away_from_zero(4, 5, &mut rng)], |v| Ok(v[0].relu()));
    check("clamp", vec![away_from_zero(4, 5, &mut rng)], |v| Ok(v[0].clamp(-0.05, 0.05)));
    check("dropout", vec![random(4, 5, &mut rng)], |v| v[0].dropout(0.3, true, 5));
}

#[test]
fn smooth_nonlinearities() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    check("gelu", vec![random(4, 5, &mut rng) * 3.0], |v| Ok(v[0].gelu()));
    check("softmax_rows", vec![random(4, 5, &mut rng) * 2.0], |v| Ok(v[0].softmax_rows()));
    check(
        "layer_norm",
        vec![random(4, 6, &mut rng), random(1, 6, &mut rng), random(1, 6, &mut rng)],
        |v| v[0].layer_norm(v[1], v[2]),
    );
    check("row_normalize", vec![random(4, 3, &mut rng)], |v| Ok(v[0].row_normalize()));
    check("cross_entropy", vec![random(5, 2, &mut rng) * 2.0], |v| {
        v[0].cross_entropy(&[(0, 1), (1, 0), (3, 1), (4, 0)])
    });
}

#[test]
fn structural_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    check("slice_cols", vec![random(3, 6, &mut rng)], |v| v[0].slice_cols(1, 4));
    check("concat_cols", vec![random(3, 2, &mut rng), random(3, 3, &mut rng)], |v| {
        concat_cols(&[v[0], v[1], v[0]])
    });
    check("sym_pairs", vec![random(4, 4, &mut rng)], |v| {
        v[0].sym_pairs(Rc::from(vec![(0, 1), (0, 3), (2, 3)]))
    });
    let weights = Mat::from_shape_simple_fn((1, 5), || rng.random_range(0.1..0.9));
    check("scaled_laplacian", vec![weights], |v| {
        v[0].scaled_laplacian(5, Rc::from(vec![(0, 1), (0, 2), (1, 3), (2, 4), (3, 4)]))
    });
}

#[test]
fn pae_edge_weights_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    check("pae", vec![random(5, 3, &mut rng)], |v| {
        let edges: Rc<[(usize, usize)]> = Rc::from(vec![(0, 1), (0, 4), (1, 2), (2, 3), (3, 4)]);
        connfuse::popgraph::pae_edge_weights(v[0], &edges)
    });
}

#[test]
fn every_network_layout() {
    for modality in ModalityMode::ALL {
        for fusion in FusionMode::ALL {
            if modality != ModalityMode::Multimodal && fusion != FusionMode::Asymmetric {
                continue;
            }
            let report = GradCheckInstance {
                modality,
                fusion,
                n_subjects: 8,
                feature_dim: 6,
                embedding_dim: 8,
                seed: 3,
            }
            .run()
            .unwrap();
            assert!(
                report.max_rel_error < 1e-4,
                "{modality}/{fusion}: {:.3e} at {}{:?}",
                report.max_rel_error,
                report.worst_param,
                report.worst_index
            );
        }
    }
}
