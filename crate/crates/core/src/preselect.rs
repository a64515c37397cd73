//! Data-independent elimination of redundant constraints.
//!
//! Redundancy is a property of the physical model alone, so it can be
//! detected before any data exist: each constraint maps to an alpha vector,
//! and a constraint is redundant when its alpha (nearly) lies in the span of
//! the alphas already chosen. Candidates are ranked by
//!
//! ```text
//! r_n = ||psi_n||^2 / ||alpha_n||^2
//! ```
//!
//! the fraction of the vector surviving projection onto the selected span
//! (so r = 1 for a fresh direction, r = 0 for an exact copy). The pool grows
//! greedily by the largest ratio — most independent first — until the best
//! remaining ratio falls below the threshold.
//!
//! The scan keeps one running residual per candidate, updated against each
//! newly selected direction; this is the same orthogonalization the forward
//! stage performs, evaluated incrementally.

use ndarray::Array1;

use crate::model::ConstraintSystem;
use crate::wgeom::{as_slice, dot_w, norm2_w};
use crate::{Error, Result};

/// The selected pool, in selection order, with the ratio that admitted each
/// index.
#[derive(Debug, Clone)]
pub struct PreselectReport {
    pool: Vec<usize>,
    ratios: Vec<f64>,
    threshold: f64,
    degenerate: bool,
}

impl PreselectReport {
    /// Selected constraint indices (0-based), most independent first.
    pub fn pool(&self) -> &[usize] {
        &self.pool
    }

    /// The ratio `r` of each pool entry at the step it was chosen.
    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// True when every alpha vector was identically zero (a single-component
    /// kernel); the pool is then empty and downstream fitting is impossible.
    pub fn degenerate(&self) -> bool {
        self.degenerate
    }
}

/// Greedily selects numerically independent constraints by the ratio
/// criterion, with `threshold` in (0, 1].
///
/// The result depends only on the kernel and the measure, never on observed
/// data.
pub fn preselect(sys: &ConstraintSystem, threshold: f64) -> Result<PreselectReport> {
    if !threshold.is_finite() || threshold <= 0.0 || threshold > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "preselect threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let m = sys.m();
    let w = sys.mu().as_slice();

    let mut residuals: Vec<Option<Array1<f64>>> = Vec::with_capacity(m);
    let mut alpha_norm2 = Vec::with_capacity(m);
    for l in 0..m {
        let alpha = sys.alpha(l)?;
        let n2 = norm2_w(as_slice(alpha), w);
        alpha_norm2.push(n2);
        // zero alphas can never be selected; drop them from the scan
        residuals.push(if n2 > 0.0 { Some(alpha.clone()) } else { None });
    }
    if alpha_norm2.iter().all(|&n2| n2 == 0.0) {
        return Ok(PreselectReport {
            pool: Vec::new(),
            ratios: Vec::new(),
            threshold,
            degenerate: true,
        });
    }

    let mut pool = Vec::new();
    let mut ratios = Vec::new();
    loop {
        let mut best: Option<(usize, f64)> = None;
        for (n, res) in residuals.iter().enumerate() {
            let Some(r) = res else { continue };
            let ratio = norm2_w(as_slice(r), w) / alpha_norm2[n];
            if best.is_none_or(|(_, b)| ratio > b) {
                best = Some((n, ratio));
            }
        }
        let Some((chosen, ratio)) = best else { break };
        if ratio < threshold {
            break;
        }
        let psi = residuals[chosen]
            .take()
            .expect("chosen candidate is active");
        let psi_n2 = norm2_w(as_slice(&psi), w);
        pool.push(chosen);
        ratios.push(ratio);
        if psi_n2 <= 0.0 {
            break;
        }
        for res in residuals.iter_mut().flatten() {
            let coef = dot_w(as_slice(&psi), as_slice(res), w) / psi_n2;
            res.scaled_add(-coef, &psi);
        }
    }
    Ok(PreselectReport {
        pool,
        ratios,
        threshold,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive;
    use crate::oracle;
    use crate::synth::NormalSampler;
    use crate::wgeom::Measure;
    use ndarray::{array, Array2};

    #[test]
    fn first_pick_is_lowest_index_with_nonzero_alpha() {
        // All nonzero alphas score exactly 1 at the first step.
        let kernel = Array2::from_shape_fn((5, 4), |(i, j)| ((i + j) as f64 * 0.3).cos());
        let sys =
            ConstraintSystem::new(kernel, Array1::zeros(5), Measure::uniform(5), None).unwrap();
        let report = preselect(&sys, 1e-8).unwrap();
        assert_eq!(report.pool()[0], 0);
        assert_eq!(report.ratios()[0], 1.0);
    }

    #[test]
    fn duplicated_row_never_enters_the_pool() {
        let kernel = Array2::from_shape_vec(
            (4, 3),
            vec![
                1.0, 0.4, 0.2, //
                1.0, 0.4, 0.2, // exact copy of row 0
                0.3, 0.9, 0.5, //
                0.8, 0.1, 0.6,
            ],
        )
        .unwrap();
        let sys =
            ConstraintSystem::new(kernel, Array1::zeros(4), Measure::uniform(4), None).unwrap();
        let report = preselect(&sys, 1e-8).unwrap();
        assert!(!report.pool().contains(&1));
        assert!(report.pool().contains(&0));
    }

    #[test]
    fn single_component_kernel_yields_empty_degenerate_pool() {
        let kernel = Array2::from_shape_vec((3, 1), vec![0.5, 1.5, 2.5]).unwrap();
        let sys =
            ConstraintSystem::new(kernel, Array1::zeros(3), Measure::uniform(3), None).unwrap();
        let report = preselect(&sys, 1e-8).unwrap();
        assert!(report.pool().is_empty());
        assert!(report.degenerate());
    }

    #[test]
    fn ratios_are_bounded_and_above_threshold() {
        let mut rng = NormalSampler::new(42);
        let kernel = Array2::from_shape_fn((20, 10), |_| rng.sample());
        let sys =
            ConstraintSystem::new(kernel, Array1::zeros(20), Measure::uniform(20), None).unwrap();
        let threshold = 1e-8;
        let report = preselect(&sys, threshold).unwrap();
        for &r in report.ratios() {
            assert!(r >= threshold);
            assert!(r <= 1.0 + 1e-10);
        }
        // ratios are produced by a greedy max, so they decrease
        for pair in report.ratios().windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-10));
        }
    }

    #[test]
    fn output_is_independent_of_data_and_sigma() {
        let mut rng = NormalSampler::new(7);
        let kernel = Array2::from_shape_fn((12, 6), |_| rng.sample());
        let mk = |fobs: Array1<f64>, sigma: Option<Array1<f64>>| {
            ConstraintSystem::new(kernel.clone(), fobs, Measure::uniform(12), sigma).unwrap()
        };
        let a = preselect(&mk(Array1::zeros(12), None), 1e-8).unwrap();
        let b = preselect(
            &mk(
                Array1::from_shape_fn(12, |i| (i as f64).sin() * 100.0),
                Some(Array1::from_elem(12, 3.0)),
            ),
            1e-8,
        )
        .unwrap();
        assert_eq!(a.pool(), b.pool());
        assert_eq!(a.ratios(), b.ratios());
    }

    #[test]
    fn pool_size_is_bounded_by_alpha_rank() {
        let mut rng = NormalSampler::new(99);
        let kernel = Array2::from_shape_fn((15, 6), |_| rng.sample());
        let sys =
            ConstraintSystem::new(kernel, Array1::zeros(15), Measure::uniform(15), None).unwrap();
        let report = preselect(&sys, 1e-8).unwrap();
        let rank = oracle::numerical_rank(&sys, 1e-12).unwrap();
        assert!(report.pool().len() <= rank);
        // the centering projector leaves at most N-1 directions
        assert!(report.pool().len() <= 5);
        let _ = derive(&sys);
    }

    #[test]
    fn threshold_is_validated() {
        let sys =
            ConstraintSystem::new(Array2::eye(2), array![1.0, 0.0], Measure::uniform(2), None)
                .unwrap();
        assert!(preselect(&sys, 0.0).is_err());
        assert!(preselect(&sys, 1.5).is_err());
        assert!(preselect(&sys, -0.1).is_err());
        assert!(preselect(&sys, 1.0).is_ok());
    }
}
