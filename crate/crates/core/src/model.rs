//! The constraint system and its derived quantities.
//!
//! A [`ConstraintSystem`] holds the dense M x N kernel `f[i][n]`, the
//! observed data `f_obs`, the measure, and optional per-datum standard
//! deviations. From it we derive
//!
//! * `g_i = sum_n f[i][n]` — the image of the uniform component,
//! * `ftilde = f_obs - g/N` — the data with the uniform component removed,
//! * `alpha_l` — the data-space image of constraint `l` after removing the
//!   uniform direction: `alpha_l[i] = sum_n f[i][n] f[l][n] - g_i g_l / N`.
//!
//! The alpha vectors drive every selection stage. They are independent of
//! the measure: the basis normalization `mu_i <i|j> = delta_ij` makes the
//! bra contractions collapse to plain kernel entries, so the measure enters
//! only through inner products taken *on* alpha vectors afterwards.

use std::sync::OnceLock;

use ndarray::{Array1, Array2, ArrayView1};

use crate::distribution::HalfDistribution;
use crate::wgeom::{DataVector, Measure};
use crate::{Error, Result};

/// Kernel, observed data, measure, and optional noise levels.
///
/// Immutable after construction; the alpha cache fills lazily and
/// idempotently, so shared references are safe across threads.
#[derive(Debug)]
pub struct ConstraintSystem {
    kernel: Array2<f64>,
    fobs: Array1<f64>,
    mu: Measure,
    sigma: Option<Array1<f64>>,
    g: OnceLock<Array1<f64>>,
    alphas: Vec<OnceLock<Array1<f64>>>,
}

impl ConstraintSystem {
    pub fn new(
        kernel: Array2<f64>,
        fobs: Array1<f64>,
        mu: Measure,
        sigma: Option<Array1<f64>>,
    ) -> Result<Self> {
        let (m, n) = kernel.dim();
        if n < 1 || m < 1 {
            return Err(Error::InvalidParameter(
                "kernel must have at least one row and one column".into(),
            ));
        }
        if fobs.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: fobs.len(),
            });
        }
        if mu.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: mu.len(),
            });
        }
        if let Some(s) = &sigma {
            if s.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: s.len(),
                });
            }
            if s.iter().any(|x| !x.is_finite() || *x <= 0.0) {
                return Err(Error::InvalidParameter(
                    "standard deviations must be finite and positive".into(),
                ));
            }
        }
        if kernel.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "kernel entries must be finite".into(),
            ));
        }
        let mut alphas = Vec::with_capacity(m);
        alphas.resize_with(m, OnceLock::new);
        Ok(Self {
            kernel,
            fobs,
            mu,
            sigma,
            g: OnceLock::new(),
            alphas,
        })
    }

    /// Number of constraints (data points).
    pub fn m(&self) -> usize {
        self.kernel.nrows()
    }

    /// Number of distribution components.
    pub fn n(&self) -> usize {
        self.kernel.ncols()
    }

    pub fn kernel(&self) -> &Array2<f64> {
        &self.kernel
    }

    pub fn fobs(&self) -> &Array1<f64> {
        &self.fobs
    }

    pub fn mu(&self) -> &Measure {
        &self.mu
    }

    pub fn sigma(&self) -> Option<&Array1<f64>> {
        self.sigma.as_ref()
    }

    /// Kernel row `i` (the image of constraint `i` over the components).
    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.kernel.row(i)
    }

    fn g(&self) -> &Array1<f64> {
        self.g.get_or_init(|| row_sums(&self.kernel))
    }

    /// The alpha vector of constraint `l` (0-based), computed on first use
    /// and cached.
    pub fn alpha(&self, l: usize) -> Result<&Array1<f64>> {
        if l >= self.m() {
            return Err(Error::IndexOutOfRange {
                index: l,
                len: self.m(),
            });
        }
        Ok(self.alphas[l].get_or_init(|| {
            let g = self.g();
            let n = self.n() as f64;
            // column l of F F^T minus g * g_l / N
            let mut a = self.kernel.dot(&self.kernel.row(l));
            let scale = g[l] / n;
            a.scaled_add(-scale, g);
            a
        }))
    }
}

fn row_sums(kernel: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(kernel.rows().into_iter().map(|r| r.iter().sum()))
}

/// `g` and `ftilde`, the data-side quantities derived from a system.
#[derive(Debug, Clone)]
pub struct DerivedData {
    g: Array1<f64>,
    ftilde: Array1<f64>,
}

impl DerivedData {
    /// Row sums of the kernel: the image of the uniform component.
    pub fn g(&self) -> &Array1<f64> {
        &self.g
    }

    /// The observed data with the uniform component removed.
    pub fn ftilde(&self) -> &Array1<f64> {
        &self.ftilde
    }
}

/// Computes `g_i = sum_n kernel[i][n]` and `ftilde = f_obs - g/N`.
pub fn derive(sys: &ConstraintSystem) -> DerivedData {
    let g = row_sums(sys.kernel());
    let n = sys.n() as f64;
    let ftilde = sys.fobs() - &(&g / n);
    DerivedData { g, ftilde }
}

/// Predicted data vector `f_pred_i = sum_n kernel[i][n] * phalf_n`.
pub fn predict(sys: &ConstraintSystem, phalf: &HalfDistribution) -> Result<DataVector> {
    if phalf.len() != sys.n() {
        return Err(Error::DimensionMismatch {
            expected: sys.n(),
            got: phalf.len(),
        });
    }
    Ok(sys.kernel().dot(phalf.components()))
}
