use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{Binding, ParamStore};
use super::tape::{Tape, Var};
use super::TensorError;

/// A scalar loss built from a parameter binding.
pub trait Objective {
    fn loss<'t>(&self, tape: &'t Tape, params: &Binding<'t>) -> Result<Var<'t>, TensorError>;
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference half step.
    pub step: f64,
    /// Entries sampled per parameter tensor; all entries when larger.
    pub samples_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            samples_per_param: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub entries_checked: usize,
}

fn eval<O: Objective>(objective: &O, store: &ParamStore) -> Result<f64, TensorError> {
    let tape = Tape::new();
    let binding = store.bind(&tape);
    Ok(objective.loss(&tape, &binding)?.item())
}

/// Compares analytic gradients with central differences on sampled entries.
///
/// Relative error per entry is `|a - fd| / max(|a|, |fd|, 1e-8)`.
pub fn grad_check<O: Objective>(
    objective: &O,
    store: &ParamStore,
    options: GradCheckOptions,
) -> Result<GradCheckReport, TensorError> {
    let tape = Tape::new();
    let binding = store.bind(&tape);
    let loss = objective.loss(&tape, &binding)?;
    let first = loss.item();
    let grads = binding.collect(&tape.backward(loss)?);
    let second = eval(objective, store)?;
    if first.to_bits() != second.to_bits() {
        return Err(TensorError::NonDeterministic { first, second });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        entries_checked: 0,
    };
    let mut probe = store.clone();
    for id in store.ids() {
        let value = store.get(id);
        let len = value.len();
        if len == 0 {
            continue;
        }
        let cols = value.ncols();
        let picks: Vec<usize> = if len <= options.samples_per_param {
            (0..len).collect()
        } else {
            let mut v = sample(&mut rng, len, options.samples_per_param).into_vec();
            v.sort_unstable();
            v
        };
        for flat in picks {
            let idx = (flat / cols, flat % cols);
            let original = value[idx];
            probe.get_mut(id)[idx] = original + options.step;
            let plus = eval(objective, &probe)?;
            probe.get_mut(id)[idx] = original - options.step;
            let minus = eval(objective, &probe)?;
            probe.get_mut(id)[idx] = original;

            let numeric = (plus - minus) / (2.0 * options.step);
            let analytic = grads[id.index()][idx];
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            let rel = (analytic - numeric).abs() / denom;
            report.entries_checked += 1;
            if rel > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = rel;
                report.worst_param = store.name(id).to_string();
                report.worst_index = idx;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
