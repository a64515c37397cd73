//! Assembly of the q=1/2 MaxEnt distribution and its entropy.
//!
//! A fitted state with selected constraints `l_1..l_k` and multipliers
//! `lambda_1..lambda_k` determines the half-power components
//!
//! ```text
//! phalf_n = (1/N) (1 - sum_j g_{l_j} lambda_j) + sum_j f[l_j][n] lambda_j
//! ```
//!
//! whose sum is exactly one: the uniform coefficient absorbs whatever the
//! constraint rows contribute. Components may be negative — the construction
//! does not impose positivity, and clipping would break the projection
//! identity the multipliers satisfy. Probabilities proper are the squares.

use ndarray::Array1;

use crate::forward::BiorthState;
use crate::model::ConstraintSystem;
use crate::{Error, Result};

/// Sum tolerance for the q=1/2 normalization `sum_n phalf_n = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// The N-vector of half-power components `p_n^{1/2}`, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfDistribution {
    phalf: Array1<f64>,
}

impl HalfDistribution {
    /// Wraps a component vector, checking the unit-sum normalization.
    pub fn new(phalf: Array1<f64>) -> Result<Self> {
        if phalf.is_empty() {
            return Err(Error::InvalidParameter(
                "distribution must have at least one component".into(),
            ));
        }
        let sum: f64 = phalf.iter().sum();
        if !sum.is_finite() || (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidParameter(format!(
                "half-power components must sum to 1 (got {sum})"
            )));
        }
        Ok(Self { phalf })
    }

    /// The uniform distribution `phalf_n = 1/N`.
    pub fn uniform(n: usize) -> Self {
        Self {
            phalf: Array1::from_elem(n, 1.0 / n as f64),
        }
    }

    pub fn len(&self) -> usize {
        self.phalf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phalf.is_empty()
    }

    /// The half-power components `p_n^{1/2}`.
    pub fn components(&self) -> &Array1<f64> {
        &self.phalf
    }

    /// Probabilities proper: the squared components.
    pub fn probabilities(&self) -> Array1<f64> {
        self.phalf.mapv(|x| x * x)
    }

    /// Assembles the distribution directly from selected kernel rows and
    /// multipliers, without a full fitted state. `selected` holds 0-based
    /// row indices.
    pub fn from_multipliers(
        sys: &ConstraintSystem,
        selected: &[usize],
        lambdas: &[f64],
    ) -> Result<Self> {
        if selected.len() != lambdas.len() {
            return Err(Error::DimensionMismatch {
                expected: selected.len(),
                got: lambdas.len(),
            });
        }
        let n = sys.n();
        let mut v = Array1::zeros(n);
        for (&l, &lam) in selected.iter().zip(lambdas) {
            if l >= sys.m() {
                return Err(Error::IndexOutOfRange {
                    index: l,
                    len: sys.m(),
                });
            }
            v.scaled_add(lam, &sys.row(l));
        }
        // The uniform coefficient cancels the row contributions so the total
        // is one. When the multipliers are large and cancelling (the
        // ill-conditioned regime), v can dwarf the final components, so the
        // additions v_i + c round at v's scale; a second pass folds that
        // rounding back into the coefficient once the values are small.
        let nf = n as f64;
        let c = (1.0 - kahan_sum(v.iter().copied())) / nf;
        let mut phalf = v + c;
        let excess = (kahan_sum(phalf.iter().copied()) - 1.0) / nf;
        if excess != 0.0 {
            phalf -= excess;
        }
        Ok(Self { phalf })
    }
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in values {
        let y = x - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Assembles the distribution encoded by a fitted state.
///
/// With no selections the result is uniform; the k=1 identity-kernel
/// instance with lambda = 1 collapses to the first basis vector.
pub fn assemble(sys: &ConstraintSystem, state: &BiorthState) -> Result<HalfDistribution> {
    HalfDistribution::from_multipliers(sys, state.selected(), state.lambdas())
}

/// Non-extensive entropy at q = 1/2: `2 (1 - sum_n phalf_n^2)`.
///
/// Uses the unit-sum normalization; negative components enter through their
/// squares.
pub fn entropy_q(phalf: &HalfDistribution) -> f64 {
    let s2: f64 = phalf.components().iter().map(|x| x * x).sum();
    2.0 * (1.0 - s2)
}
