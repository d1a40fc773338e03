use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{Bindings, ParamStore};
use super::tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter name, element index, analytic, numeric) at the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
    pub coords_checked: usize,
}

/// Compares reverse-mode gradients with central differences.
///
/// `loss` builds a scalar on a fresh tape from bound parameters. At most
/// `max_per_param` coordinates of each parameter are checked, sampled
/// deterministically from `seed` when the parameter is larger. The error
/// at a coordinate is `|analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(store: &ParamStore, eps: f64, max_per_param: usize, seed: u64, loss: F) -> GradCheckReport
where
    F: Fn(&mut Tape, &Bindings) -> Var,
{
    assert!((1e-7..=1e-3).contains(&eps), "finite-difference step {eps} outside [1e-7, 1e-3]");
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let out = loss(&mut tape, &bound);
    tape.backward(out);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::new();
    for (p, param) in store.params().iter().enumerate() {
        let n = param.value.len();
        if n <= max_per_param {
            coords.extend((0..n).map(|k| (p, k)));
        } else {
            let mut idx = sample(&mut rng, n, max_per_param).into_vec();
            idx.sort_unstable();
            coords.extend(idx.into_iter().map(|k| (p, k)));
        }
    }

    let eval = |s: &ParamStore| {
        let mut t = Tape::new();
        let b = s.bind(&mut t);
        let v = loss(&mut t, &b);
        t.scalar(v)
    };

    let mut probe = store.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, coords_checked: coords.len() };
    for &(p, k) in &coords {
        let analytic = tape.grad(bound.vars()[p])[k];
        let orig = store.params()[p].value[k];
        probe.params_mut()[p].value[k] = orig + eps;
        let plus = eval(&probe);
        probe.params_mut()[p].value[k] = orig - eps;
        let minus = eval(&probe);
        probe.params_mut()[p].value[k] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let err = (analytic - numeric).abs() / numeric.abs().max(1.0);
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = err.max(report.max_rel_error);
            report.worst = Some((store.params()[p].name.clone(), k, analytic, numeric));
        }
    }
    report
}
