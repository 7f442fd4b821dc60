//! Central-difference verification of analytic gradients.

use super::{Grads, ParamStore};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Relative error is `|a - n| / max(|a|, |n|, floor)`; the floor keeps
    /// near-zero gradients from turning round-off into large ratios.
    pub floor: f64,
    /// Checks every entry when `None`, otherwise an evenly strided subset of
    /// at most this many entries per parameter tensor.
    pub max_entries_per_param: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            tolerance: 1e-4,
            floor: 1e-3,
            max_entries_per_param: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: Option<String>,
    pub worst_index: usize,
    pub entries_checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Compares `analytic` against central differences of `f` for every
/// trainable parameter in `store`.
pub fn finite_diff_check<F>(
    store: &ParamStore<f64>,
    analytic: &Grads<f64>,
    mut f: F,
    config: &GradCheckConfig,
) -> GradCheckReport
where
    F: FnMut(&ParamStore<f64>) -> f64,
{
    let mut work = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: None,
        worst_index: 0,
        entries_checked: 0,
        tolerance: config.tolerance,
    };
    let ids: Vec<_> = store.ids().filter(|&id| store.param(id).trainable).collect();
    for id in ids {
        let n = store.value(id).len();
        let stride = match config.max_entries_per_param {
            Some(k) if k > 0 && n > k => n.div_ceil(k),
            _ => 1,
        };
        for i in (0..n).step_by(stride) {
            let original = work.value(id).data()[i];
            work.value_mut(id).data_mut()[i] = original + config.epsilon;
            let plus = f(&work);
            work.value_mut(id).data_mut()[i] = original - config.epsilon;
            let minus = f(&work);
            work.value_mut(id).data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * config.epsilon);
            let a = analytic.get(id).data()[i];
            let denom = a.abs().max(numeric.abs()).max(config.floor);
            let rel = (a - numeric).abs() / denom;
            report.entries_checked += 1;
            if rel > report.max_rel_error || report.worst_param.is_none() {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst_param = Some(store.param(id).name.clone());
                report.worst_index = i;
            }
        }
    }
    report
}
