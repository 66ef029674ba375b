use serde::{Deserialize, Serialize};

use crate::stats::{Estimate, RunningStats};

/// Bounds on `a . D(beta) a` at one `(beta, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub beta: f64,
    pub direction: Vec<f64>,
    /// `(label, estimate)` for each test function
    pub variational: Vec<(String, Estimate)>,
    pub everest: Estimate,
    pub closed_form: Option<f64>,
    pub empirical: Estimate,
}

impl BoundReport {
    /// The test function with the smallest estimate.
    pub fn best_variational(&self) -> Option<&(String, Estimate)> {
        self.variational
            .iter()
            .min_by(|a, b| a.1.value.total_cmp(&b.1.value))
    }

    /// `best - (D_emp - k * combined stderr)`; nonnegative when consistent.
    pub fn consistency_margin(&self, k: f64) -> Option<f64> {
        self.best_variational().map(|(_, v)| {
            let se = v.stderr.hypot(self.empirical.stderr);
            v.value - (self.empirical.value - k * se)
        })
    }

    pub fn is_consistent(&self, k: f64) -> bool {
        self.consistency_margin(k).is_some_and(|m| m >= 0.0)
    }

    pub fn nonnegative(&self) -> bool {
        self.variational.iter().all(|(_, e)| e.value >= 0.0)
            && self.everest.value >= 0.0
            && self.closed_form.is_none_or(|c| c >= 0.0)
    }
}

/// Estimate of `Tr(D) |a|^2 - a . D a` from per-environment row-major
/// matrices; it is nonnegative for a positive semidefinite `D`.
pub fn trace_bound_gap(per_env: &[Vec<f64>], a: &[f64]) -> Estimate {
    let d = a.len();
    let a2: f64 = a.iter().map(|v| v * v).sum();
    per_env
        .iter()
        .map(|m| {
            let tr: f64 = (0..d).map(|i| m[i * d + i]).sum();
            let mut q = 0.0;
            for i in 0..d {
                for j in 0..d {
                    q += a[i] * m[i * d + j] * a[j];
                }
            }
            tr * a2 - q
        })
        .collect::<RunningStats>()
        .estimate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consistency_uses_best_function() {
        let r = BoundReport {
            beta: 10.0,
            direction: vec![1.0, 0.0],
            variational: vec![
                ("zero".into(), Estimate::new(2.0, 0.1, 100)),
                ("cluster_N10".into(), Estimate::new(0.5, 0.05, 100)),
            ],
            everest: Estimate::new(3.0, 0.2, 100),
            closed_form: Some(4.0),
            empirical: Estimate::new(0.6, 0.03, 100),
        };
        assert_eq!(r.best_variational().unwrap().0, "cluster_N10");
        let m = r.consistency_margin(3.0).unwrap();
        assert!((m - (0.5 - 0.6 + 3.0 * 0.05f64.hypot(0.03))).abs() < 1e-15);
        assert!(r.is_consistent(3.0) && !r.is_consistent(1.0) && r.nonnegative());
    }

    #[test]
    fn trace_gap_of_psd_matrices() {
        let per_env = vec![vec![2.0, 0.5, 0.5, 1.0], vec![1.0, -0.2, -0.2, 3.0]];
        for a in [[1.0, 0.0], [0.6, 0.8], [-0.8, 0.6]] {
            assert!(trace_bound_gap(&per_env, &a).value >= 0.0);
        }
        let g = trace_bound_gap(&per_env, &[1.0, 0.0]);
        assert!((g.value - 2.0).abs() < 1e-15);
    }
}
