//! Forward greedy selection with adaptive biorthogonalization.
//!
//! The fitted object is a [`BiorthState`]: an ordered set of selected
//! constraint indices together with
//!
//! * `psi_j` — the orthogonal (Gram-Schmidt) residual basis of the selected
//!   alpha vectors,
//! * `dual_n` — the biorthogonal family, `<dual_n | alpha_m> = delta_nm`,
//! * `lambda_n` — the Lagrange multipliers, i.e. the coefficients of the
//!   orthogonal projection of `ftilde` on the selected alpha span,
//! * `projection` — that projection, maintained incrementally.
//!
//! Each extension orthogonalizes the incoming alpha against the psi basis,
//! then updates the existing duals and multipliers in place:
//!
//! ```text
//! dual_new   = psi / ||psi||^2
//! dual_n    -= <dual_n | alpha_new> dual_new
//! lambda_new = <dual_new | ftilde>
//! lambda_n  -= <dual_n | alpha_new> lambda_new
//! ```
//!
//! Candidates are ranked by the residual-energy reduction
//! `e_n = <psi_n | ftilde>^2 / ||psi_n||^2`, and the fit stops once the
//! assembled distribution predicts the observations within the noise budget
//! `||epsilon||^2` with `epsilon_i = t sigma_i`.

use ndarray::Array1;

use crate::distribution::assemble;
use crate::model::{predict, ConstraintSystem, DerivedData};
use crate::wgeom::{as_slice, dist2, dot_w, norm2_w, DataVector, Measure};
use crate::{Error, Result};

/// A candidate is admissible only while `||psi||^2 / ||alpha||^2` stays
/// above this ratio; below it the candidate is treated as numerically
/// dependent on the selected span.
pub const DEPENDENCE_RATIO: f64 = 1e-12;

/// Selected indices, residual basis, dual basis, and multipliers.
#[derive(Debug, Clone)]
pub struct BiorthState {
    pub(crate) mu: Measure,
    pub(crate) selected: Vec<usize>,
    pub(crate) alphas: Vec<Array1<f64>>,
    pub(crate) psis: Vec<Array1<f64>>,
    pub(crate) psi_norm2: Vec<f64>,
    pub(crate) duals: Vec<Array1<f64>>,
    pub(crate) lambdas: Vec<f64>,
    pub(crate) projection: DataVector,
}

impl BiorthState {
    /// An empty state (k = 0) over the system's measure.
    pub fn new(sys: &ConstraintSystem) -> Self {
        Self {
            mu: sys.mu().clone(),
            selected: Vec::new(),
            alphas: Vec::new(),
            psis: Vec::new(),
            psi_norm2: Vec::new(),
            duals: Vec::new(),
            lambdas: Vec::new(),
            projection: Array1::zeros(sys.m()),
        }
    }

    /// Number of selected constraints.
    pub fn k(&self) -> usize {
        self.selected.len()
    }

    /// Selected constraint indices (0-based), in selection order.
    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    /// Lagrange multipliers, aligned with [`Self::selected`].
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Biorthogonal dual vectors, aligned with [`Self::selected`].
    pub fn duals(&self) -> &[Array1<f64>] {
        &self.duals
    }

    /// Squared norms of the orthogonal residual basis.
    pub fn psi_norm2(&self) -> &[f64] {
        &self.psi_norm2
    }

    /// The projection of `ftilde` onto the selected alpha span.
    pub fn projection(&self) -> &DataVector {
        &self.projection
    }

    pub fn measure(&self) -> &Measure {
        &self.mu
    }

    /// Adds constraint `l_new` and updates duals, multipliers, and the
    /// projection via the biorthogonal recursions.
    pub fn extend(&mut self, sys: &ConstraintSystem, d: &DerivedData, l_new: usize) -> Result<()> {
        if self.selected.contains(&l_new) {
            return Err(Error::DuplicateIndex { index: l_new });
        }
        let alpha_new = sys.alpha(l_new)?.clone();
        let w = self.mu.as_slice();
        let alpha_norm2 = norm2_w(as_slice(&alpha_new), w);
        let (psi, psi_n2) = mgs_residual(&alpha_new, &self.psis, &self.psi_norm2, w);
        let ratio = if alpha_norm2 > 0.0 {
            psi_n2 / alpha_norm2
        } else {
            0.0
        };
        if ratio < DEPENDENCE_RATIO {
            return Err(Error::DependentCandidate {
                index: l_new,
                ratio,
            });
        }

        let dual_new = &psi / psi_n2;
        let lambda_new = dot_w(as_slice(&psi), as_slice(d.ftilde()), w) / psi_n2;
        for n in 0..self.k() {
            let c = dot_w(as_slice(&self.duals[n]), as_slice(&alpha_new), w);
            self.duals[n].scaled_add(-c, &dual_new);
            self.lambdas[n] -= c * lambda_new;
        }
        self.projection.scaled_add(lambda_new, &psi);
        self.selected.push(l_new);
        self.alphas.push(alpha_new);
        self.psis.push(psi);
        self.psi_norm2.push(psi_n2);
        self.duals.push(dual_new);
        self.lambdas.push(lambda_new);
        Ok(())
    }

    /// Recomputes duals, multipliers, projection, and the psi basis from
    /// scratch by a dense Gram solve on the stored alphas. Used as an
    /// optional drift-control pass during long fits.
    #[allow(clippy::needless_range_loop)]
    pub fn reorthogonalize(&mut self, d: &DerivedData) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Ok(());
        }
        let w = self.mu.as_slice();
        let mut gram = vec![vec![0.0; k]; k];
        let mut b = vec![0.0; k];
        for j in 0..k {
            b[j] = dot_w(as_slice(&self.alphas[j]), as_slice(d.ftilde()), w);
            for t in j..k {
                let v = dot_w(as_slice(&self.alphas[j]), as_slice(&self.alphas[t]), w);
                gram[j][t] = v;
                gram[t][j] = v;
            }
        }
        let lu = LuFactors::new(gram)?;
        self.lambdas = lu.solve(b);
        for n in 0..k {
            let mut e = vec![0.0; k];
            e[n] = 1.0;
            let coeffs = lu.solve(e);
            let mut dual = Array1::zeros(self.projection.len());
            for (c, a) in coeffs.iter().zip(&self.alphas) {
                dual.scaled_add(*c, a);
            }
            self.duals[n] = dual;
        }
        let mut projection = Array1::zeros(self.projection.len());
        for (lam, a) in self.lambdas.iter().zip(&self.alphas) {
            projection.scaled_add(*lam, a);
        }
        self.projection = projection;
        self.rebuild_psis();
        Ok(())
    }

    /// Re-orthogonalizes the stored alphas in order, refreshing the psi
    /// basis.
    pub(crate) fn rebuild_psis(&mut self) {
        let w = self.mu.as_slice();
        let mut psis: Vec<Array1<f64>> = Vec::with_capacity(self.alphas.len());
        let mut norms = Vec::with_capacity(self.alphas.len());
        for a in &self.alphas {
            let (psi, n2) = mgs_residual(a, &psis, &norms, w);
            psis.push(psi);
            norms.push(n2);
        }
        self.psis = psis;
        self.psi_norm2 = norms;
    }

    /// Largest deviation of `<dual_n | alpha_m>` from the identity, a
    /// diagnostic for the biorthogonality invariant.
    pub fn biorthogonality_deviation(&self) -> f64 {
        let w = self.mu.as_slice();
        let mut worst = 0.0f64;
        for (n, dual) in self.duals.iter().enumerate() {
            for (m, alpha) in self.alphas.iter().enumerate() {
                let v = dot_w(as_slice(dual), as_slice(alpha), w);
                let target = if n == m { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }

    /// Largest componentwise deviation between the maintained projection and
    /// `sum_n lambda_n alpha_n`, relative to the projection scale.
    pub fn projection_consistency(&self) -> f64 {
        let mut recomputed: Array1<f64> = Array1::zeros(self.projection.len());
        for (lam, a) in self.lambdas.iter().zip(&self.alphas) {
            recomputed.scaled_add(*lam, a);
        }
        let scale = self
            .projection
            .iter()
            .fold(0.0f64, |acc, x| acc.max(x.abs()))
            .max(1e-300);
        let mut worst = 0.0f64;
        for (a, b) in self.projection.iter().zip(recomputed.iter()) {
            worst = worst.max((a - b).abs());
        }
        worst / scale
    }
}

/// Residual of `alpha` against the orthogonal basis, and its squared norm.
pub(crate) fn mgs_residual(
    alpha: &Array1<f64>,
    psis: &[Array1<f64>],
    psi_norm2: &[f64],
    w: &[f64],
) -> (Array1<f64>, f64) {
    let mut r = alpha.clone();
    for (psi, &n2) in psis.iter().zip(psi_norm2) {
        let coef = dot_w(as_slice(psi), as_slice(&r), w) / n2;
        r.scaled_add(-coef, psi);
    }
    let n2 = norm2_w(as_slice(&r), w);
    (r, n2)
}

/// Residual-energy scores `e_n = <psi_n | ftilde>^2 / ||psi_n||^2` for every
/// constraint. Already-selected and numerically dependent candidates score
/// negative infinity.
pub fn score_candidates(
    state: &BiorthState,
    sys: &ConstraintSystem,
    d: &DerivedData,
) -> Result<Vec<f64>> {
    let w = state.mu.as_slice();
    let ftilde = as_slice(d.ftilde());
    let mut scores = vec![f64::NEG_INFINITY; sys.m()];
    for (n, score) in scores.iter_mut().enumerate() {
        if state.selected.contains(&n) {
            continue;
        }
        let alpha = sys.alpha(n)?;
        let alpha_norm2 = norm2_w(as_slice(alpha), w);
        if alpha_norm2 <= 0.0 {
            continue;
        }
        let (psi, psi_n2) = mgs_residual(alpha, &state.psis, &state.psi_norm2, w);
        if psi_n2 / alpha_norm2 < DEPENDENCE_RATIO {
            continue;
        }
        let e = dot_w(as_slice(&psi), ftilde, w);
        *score = e * e / psi_n2;
    }
    Ok(scores)
}

/// The noise budget terminating a fit: `||epsilon||^2` with
/// `epsilon_i = t sigma_i`, plus an optional cap on the number of
/// selections.
#[derive(Debug, Clone)]
pub struct StopRule {
    t: f64,
    epsilon_norm2: f64,
    max_k: Option<usize>,
}

impl StopRule {
    /// Builds the budget from per-datum standard deviations:
    /// `||epsilon||^2 = t^2 sum_i sigma_i^2 mu_i`. With inverse-variance
    /// weights this is exactly `t^2 M`.
    pub fn from_sigma(sigma: &Array1<f64>, mu: &Measure, t: f64) -> Result<Self> {
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "stopping factor t must be positive, got {t}"
            )));
        }
        if sigma.len() != mu.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                got: sigma.len(),
            });
        }
        if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidParameter(
                "standard deviations must be finite and non-negative".into(),
            ));
        }
        let epsilon_norm2 = t * t * norm2_w(as_slice(sigma), mu.as_slice());
        Ok(Self {
            t,
            epsilon_norm2,
            max_k: None,
        })
    }

    /// A budget with an explicitly given `||epsilon||^2`.
    pub fn fixed(t: f64, epsilon_norm2: f64) -> Result<Self> {
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "stopping factor t must be positive, got {t}"
            )));
        }
        if !epsilon_norm2.is_finite() || epsilon_norm2 < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "epsilon_norm2 must be non-negative, got {epsilon_norm2}"
            )));
        }
        Ok(Self {
            t,
            epsilon_norm2,
            max_k: None,
        })
    }

    pub fn with_max_k(mut self, max_k: usize) -> Self {
        self.max_k = Some(max_k);
        self
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn epsilon_norm2(&self) -> f64 {
        self.epsilon_norm2
    }

    pub fn max_k(&self) -> Option<usize> {
        self.max_k
    }
}

/// Which condition terminated a forward fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The prediction residual dropped below the noise budget.
    ResidualBelowThreshold,
    /// The cap on the number of selections was reached.
    MaxSelections,
    /// No admissible candidate remained in the pool.
    PoolExhausted,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::ResidualBelowThreshold => "residual-below-threshold",
            StopReason::MaxSelections => "max-selections",
            StopReason::PoolExhausted => "pool-exhausted",
        }
    }
}

/// A completed forward fit.
#[derive(Debug, Clone)]
pub struct ForwardFit {
    pub state: BiorthState,
    pub reason: StopReason,
    /// `dist2(f_pred, f_obs, mu)` of the final state.
    pub residual2: f64,
}

/// Extra fitting knobs, all off by default.
#[derive(Debug, Clone, Default)]
pub struct ForwardOptions {
    /// Run a dense re-orthogonalization pass after every this many
    /// extensions.
    pub reorthogonalize_every: Option<usize>,
}

/// The weighted residual of the prediction assembled from a state.
pub fn prediction_residual2(sys: &ConstraintSystem, state: &BiorthState) -> Result<f64> {
    let phalf = assemble(sys, state)?;
    let fp = predict(sys, &phalf)?;
    dist2(&fp, sys.fobs(), sys.mu())
}

/// Greedy forward fit: repeatedly extends with the highest-scoring
/// candidate (lowest index on ties) from `pool` (all constraints when
/// `None`) until the prediction residual drops below the budget, the pool or
/// admissible candidates run out, or `max_k` is reached.
pub fn fit_forward(
    sys: &ConstraintSystem,
    d: &DerivedData,
    stop: &StopRule,
    pool: Option<&[usize]>,
) -> Result<ForwardFit> {
    fit_forward_with(sys, d, stop, pool, &ForwardOptions::default())
}

pub fn fit_forward_with(
    sys: &ConstraintSystem,
    d: &DerivedData,
    stop: &StopRule,
    pool: Option<&[usize]>,
    opts: &ForwardOptions,
) -> Result<ForwardFit> {
    let mut in_pool = vec![pool.is_none(); sys.m()];
    if let Some(p) = pool {
        if p.is_empty() {
            return Err(Error::InvalidParameter("empty candidate pool".into()));
        }
        for &i in p {
            if i >= sys.m() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: sys.m(),
                });
            }
            in_pool[i] = true;
        }
    }

    let mut state = BiorthState::new(sys);
    loop {
        let residual2 = prediction_residual2(sys, &state)?;
        if residual2 < stop.epsilon_norm2() {
            return Ok(ForwardFit {
                state,
                reason: StopReason::ResidualBelowThreshold,
                residual2,
            });
        }
        if let Some(max_k) = stop.max_k() {
            if state.k() >= max_k {
                return Ok(ForwardFit {
                    state,
                    reason: StopReason::MaxSelections,
                    residual2,
                });
            }
        }
        let scores = score_candidates(&state, sys, d)?;
        let mut best: Option<(usize, f64)> = None;
        for (i, &s) in scores.iter().enumerate() {
            if !in_pool[i] || s == f64::NEG_INFINITY {
                continue;
            }
            // strict comparison keeps the lowest index on ties
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((i, s));
            }
        }
        match best {
            None if state.k() == 0 => return Err(Error::NoAdmissibleCandidate),
            None => {
                return Ok(ForwardFit {
                    state,
                    reason: StopReason::PoolExhausted,
                    residual2,
                });
            }
            Some((idx, _)) => state.extend(sys, d, idx)?,
        }
        if let Some(every) = opts.reorthogonalize_every {
            if every > 0 && state.k().is_multiple_of(every) {
                state.reorthogonalize(d)?;
            }
        }
    }
}

/// LU factorization with partial pivoting for the small dense solves of the
/// re-orthogonalization pass.
struct LuFactors {
    lu: Vec<Vec<f64>>,
    perm: Vec<usize>,
}

#[allow(clippy::needless_range_loop)]
impl LuFactors {
    fn new(mut a: Vec<Vec<f64>>) -> Result<Self> {
        let n = a.len();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
                .expect("non-empty pivot range");
            if a[pivot_row][col] == 0.0 {
                return Err(Error::IllConditionedGram {
                    pivot_ratio: f64::INFINITY,
                });
            }
            a.swap(col, pivot_row);
            perm.swap(col, pivot_row);
            for row in col + 1..n {
                let factor = a[row][col] / a[col][col];
                a[row][col] = factor;
                for t in col + 1..n {
                    a[row][t] -= factor * a[col][t];
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    fn solve(&self, b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = b[self.perm[i]];
            for j in 0..i {
                acc -= self.lu[i][j] * y[j];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..n {
                acc -= self.lu[i][j] * y[j];
            }
            y[i] = acc / self.lu[i][i];
        }
        y
    }
}
