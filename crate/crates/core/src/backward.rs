//! Backward removal of Lagrange multipliers.
//!
//! Removing constraint `l_j` from a fitted state must leave the survivors
//! describing the orthogonal projection onto the *reduced* span, which makes
//! removal a genuine recomputation, not a deletion. The dual vectors and
//! multipliers of the survivors update in closed form:
//!
//! ```text
//! dual_n   -= dual_j <dual_j | dual_n> / ||dual_j||^2
//! lambda_n -= <dual_n | dual_j> lambda_j / ||dual_j||^2
//! ```
//!
//! and the projection loses exactly `lambda_j^2 / ||dual_j||^2` of its
//! energy, which is also the removal-relevance score: the best multiplier to
//! drop is the one whose removal perturbs the projection least.

use ndarray::Array1;

use crate::distribution::assemble;
use crate::forward::{BiorthState, StopRule};
use crate::model::{predict, ConstraintSystem};
use crate::wgeom::{as_slice, dist2, dot_w, norm2_w};
use crate::{Error, Result};

/// Relevance of each multiplier: `lambda_j^2 / ||dual_j||^2`. The removal
/// candidate is the argmin.
pub fn removal_scores(state: &BiorthState) -> Vec<f64> {
    let w = state.measure().as_slice();
    state
        .lambdas()
        .iter()
        .zip(state.duals())
        .map(|(lam, dual)| lam * lam / norm2_w(as_slice(dual), w))
        .collect()
}

/// The projection energy lost by removing position `j`:
/// `||P_k ftilde||^2 - ||P_{k/j} ftilde||^2 = lambda_j^2 / ||dual_j||^2`.
pub fn energy_drop(state: &BiorthState, j: usize) -> Result<f64> {
    let k = state.k();
    if j >= k {
        return Err(Error::PositionOutOfRange { position: j, k });
    }
    let w = state.measure().as_slice();
    let lam = state.lambdas()[j];
    Ok(lam * lam / norm2_w(as_slice(&state.duals()[j]), w))
}

/// Removes the multiplier at position `j` (0-based), recomputing the
/// surviving duals and multipliers and rebuilding the psi bookkeeping by
/// re-orthogonalizing the surviving alphas in their stored order.
pub fn remove(state: &mut BiorthState, j: usize) -> Result<()> {
    let k = state.k();
    if j >= k {
        return Err(Error::PositionOutOfRange { position: j, k });
    }
    let w = state.mu.as_slice();
    let dual_j = state.duals[j].clone();
    let lambda_j = state.lambdas[j];
    let d2 = norm2_w(as_slice(&dual_j), w);
    if d2 <= 0.0 {
        // a valid state has <dual_j | alpha_j> = 1, so this cannot happen
        // unless the state was corrupted
        return Err(Error::IllConditionedGram {
            pivot_ratio: f64::INFINITY,
        });
    }
    for n in 0..k {
        if n == j {
            continue;
        }
        let h = dot_w(as_slice(&state.duals[n]), as_slice(&dual_j), w) / d2;
        state.duals[n].scaled_add(-h, &dual_j);
        state.lambdas[n] -= h * lambda_j;
    }
    state.selected.remove(j);
    state.alphas.remove(j);
    state.duals.remove(j);
    state.lambdas.remove(j);
    state.rebuild_psis();

    let mut projection: Array1<f64> = Array1::zeros(state.projection.len());
    for (lam, a) in state.lambdas.iter().zip(&state.alphas) {
        projection.scaled_add(*lam, a);
    }
    state.projection = projection;
    Ok(())
}

/// Result of a prune pass.
#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub state: BiorthState,
    /// How many multipliers were removed and kept removed.
    pub removed: usize,
    /// `dist2(f_pred, f_obs, mu)` of the returned state.
    pub residual2: f64,
}

/// Repeatedly removes the least relevant multiplier while the assembled
/// prediction stays within the budget; the first removal that would violate
/// it is rolled back (snapshot restore) and pruning stops.
pub fn prune(state: BiorthState, sys: &ConstraintSystem, stop: &StopRule) -> Result<PruneOutcome> {
    let mut state = state;
    let mut removed = 0;
    while state.k() > 0 {
        let scores = removal_scores(&state);
        let mut j_best = 0;
        for (j, &s) in scores.iter().enumerate() {
            if s < scores[j_best] {
                j_best = j;
            }
        }
        let snapshot = state.clone();
        remove(&mut state, j_best)?;
        let residual2 = residual2_of(sys, &state)?;
        if residual2 < stop.epsilon_norm2() {
            removed += 1;
        } else {
            state = snapshot;
            break;
        }
    }
    let residual2 = residual2_of(sys, &state)?;
    Ok(PruneOutcome {
        state,
        removed,
        residual2,
    })
}

fn residual2_of(sys: &ConstraintSystem, state: &BiorthState) -> Result<f64> {
    let phalf = assemble(sys, state)?;
    let fp = predict(sys, &phalf)?;
    dist2(&fp, sys.fobs(), sys.mu())
}
