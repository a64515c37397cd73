//! Synthetic benchmark generation: kernels, ground truths, noisy data.
//!
//! Two analytic kernel families are built in:
//!
//! * exponential decays `f[i][n] = exp(-n * 0.01 * i)` (1-based `i`, `n`) —
//!   an extremely ill-conditioned inversion;
//! * Lorentzian decays `f[i][n] = 1 / (1 + 0.01 (i - 100 - n)^2)` — much
//!   more benign.
//!
//! Ground truths are tabulated Gaussian mixtures over the component index,
//! normalized to a configured total (1 by default, so the truth is itself a
//! unit-sum half-power vector). Observations add zero-mean Gaussian noise
//! with `sigma_i` equal to `noise_fraction * |f_true_i|`, floored at a tiny
//! multiple of the data scale so inverse-variance weights stay finite.
//!
//! Reproducibility: all randomness comes from [`NormalSampler`] — a ChaCha8
//! stream keyed by the 64-bit seed, turned into uniforms by taking the top
//! 53 bits, and into normals by the Box-Muller transform. The same spec and
//! seed produce bit-identical data on any platform.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative floor applied to the noise levels: `sigma_i` never drops below
/// this fraction of `max |f_true|`.
pub const SIGMA_FLOOR_REL: f64 = 1e-12;

/// Deterministic standard-normal stream: ChaCha8 keyed by a 64-bit seed,
/// Box-Muller transform on 53-bit uniforms.
#[derive(Debug, Clone)]
pub struct NormalSampler {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform draw in (0, 1].
    pub fn uniform(&mut self) -> f64 {
        let bits = self.rng.next_u64() >> 11;
        1.0 - (bits as f64) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw.
    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Exponential,
    Lorentzian,
    Custom,
}

/// Which weighting an experiment is meant to be analyzed with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureMode {
    Uniform,
    InverseVariance,
}

impl MeasureMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MeasureMode::Uniform => "uniform",
            MeasureMode::InverseVariance => "inverse-variance",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthSpec {
    /// An explicit length-N vector.
    Tabulated(Vec<f64>),
    /// `p_n = sum_c w_c exp(-(n - center_c)^2 / (2 width_c^2))`, tabulated at
    /// n = 1..N and rescaled so the components sum to `total`.
    GaussianMixture {
        components: Vec<GaussianComponent>,
        #[serde(default = "default_total")]
        total: f64,
    },
}

fn default_total() -> f64 {
    1.0
}

fn default_t() -> f64 {
    1.1
}

/// Everything needed to generate one synthetic experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kernel_family: KernelFamily,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    /// `sigma_i` as a fraction of `|f_true_i|`.
    pub noise_fraction: f64,
    pub seed: u64,
    pub measure_mode: MeasureMode,
    pub truth: TruthSpec,
    /// Tabulated kernel rows; required when `kernel_family` is `custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<Vec<f64>>>,
    /// Stopping factor the experiment is meant to be fitted with.
    #[serde(default = "default_t")]
    pub t: f64,
}

impl ExperimentSpec {
    /// The exponential benchmark: M=100, N=50, 20% noise. The published
    /// truth curve is not recoverable, so the default is a two-bump mixture
    /// of comparable shape.
    pub fn example1(seed: u64) -> Self {
        Self {
            kernel_family: KernelFamily::Exponential,
            m: 100,
            n: 50,
            noise_fraction: 0.20,
            seed,
            measure_mode: MeasureMode::InverseVariance,
            truth: TruthSpec::GaussianMixture {
                components: vec![
                    GaussianComponent {
                        weight: 1.0,
                        center: 15.0,
                        width: 5.0,
                    },
                    GaussianComponent {
                        weight: 0.8,
                        center: 35.0,
                        width: 7.0,
                    },
                ],
                total: 1.0,
            },
            kernel: None,
            t: 1.1,
        }
    }

    /// The Lorentzian benchmark: M=700, N=450, 10% noise, uniform
    /// weighting, five-bump truth (a stand-in of comparable shape).
    pub fn example2(seed: u64) -> Self {
        Self {
            kernel_family: KernelFamily::Lorentzian,
            m: 700,
            n: 450,
            noise_fraction: 0.10,
            seed,
            measure_mode: MeasureMode::Uniform,
            truth: TruthSpec::GaussianMixture {
                components: vec![
                    GaussianComponent {
                        weight: 1.0,
                        center: 60.0,
                        width: 8.0,
                    },
                    GaussianComponent {
                        weight: 1.15,
                        center: 140.0,
                        width: 8.5,
                    },
                    GaussianComponent {
                        weight: 0.85,
                        center: 225.0,
                        width: 7.5,
                    },
                    GaussianComponent {
                        weight: 1.05,
                        center: 310.0,
                        width: 9.0,
                    },
                    GaussianComponent {
                        weight: 0.95,
                        center: 390.0,
                        width: 8.0,
                    },
                ],
                total: 1.0,
            },
            kernel: None,
            t: 1.1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.m < 1 || self.n < 1 {
            return Err(Error::InvalidParameter("M and N must be at least 1".into()));
        }
        if !self.noise_fraction.is_finite() || self.noise_fraction < 0.0 {
            return Err(Error::InvalidParameter(
                "noise_fraction must be non-negative".into(),
            ));
        }
        if let TruthSpec::GaussianMixture { components, total } = &self.truth {
            if components.iter().any(|c| {
                !(c.weight.is_finite() && c.weight > 0.0) || !(c.width.is_finite() && c.width > 0.0)
            }) {
                return Err(Error::InvalidParameter(
                    "mixture weights and widths must be positive".into(),
                ));
            }
            if !total.is_finite() || *total <= 0.0 {
                return Err(Error::InvalidParameter(
                    "mixture total must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Tabulates the kernel of a spec.
pub fn make_kernel(spec: &ExperimentSpec) -> Result<Array2<f64>> {
    spec.validate()?;
    let (m, n) = (spec.m, spec.n);
    match spec.kernel_family {
        KernelFamily::Exponential => Ok(Array2::from_shape_fn((m, n), |(i, j)| {
            let x = 0.01 * (i + 1) as f64;
            (-((j + 1) as f64) * x).exp()
        })),
        KernelFamily::Lorentzian => Ok(Array2::from_shape_fn((m, n), |(i, j)| {
            let num = (i + 1) as f64 - 100.0 - (j + 1) as f64;
            1.0 / (1.0 + 0.01 * num * num)
        })),
        KernelFamily::Custom => {
            let rows = spec.kernel.as_ref().ok_or_else(|| {
                Error::InvalidParameter("custom kernel family requires kernel rows".into())
            })?;
            if rows.len() != m || rows.iter().any(|r| r.len() != n) {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: rows.len(),
                });
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            Array2::from_shape_vec((m, n), flat).map_err(|e| Error::InvalidParameter(e.to_string()))
        }
    }
}

/// Tabulates the ground-truth vector of a spec over n = 1..N.
///
/// An empty mixture tabulates to the zero vector; callers should treat that
/// as a degenerate experiment.
pub fn make_truth(spec: &ExperimentSpec) -> Result<Array1<f64>> {
    spec.validate()?;
    match &spec.truth {
        TruthSpec::Tabulated(p) => {
            if p.len() != spec.n {
                return Err(Error::DimensionMismatch {
                    expected: spec.n,
                    got: p.len(),
                });
            }
            Ok(Array1::from_vec(p.clone()))
        }
        TruthSpec::GaussianMixture { components, total } => {
            let mut p = Array1::zeros(spec.n);
            for c in components {
                for (idx, v) in p.iter_mut().enumerate() {
                    let x = (idx + 1) as f64 - c.center;
                    *v += c.weight * (-x * x / (2.0 * c.width * c.width)).exp();
                }
            }
            let sum: f64 = p.iter().sum();
            if sum > 0.0 {
                p *= total / sum;
            }
            Ok(p)
        }
    }
}

/// Noiseless data, noisy data, and per-datum noise levels.
#[derive(Debug, Clone)]
pub struct Observation {
    pub f_true: Array1<f64>,
    pub f_obs: Array1<f64>,
    pub sigma: Array1<f64>,
}

/// Applies the kernel to the truth and distorts each datum with seeded
/// Gaussian noise of level `noise_fraction * |f_true_i|`.
pub fn observe(
    spec: &ExperimentSpec,
    kernel: &Array2<f64>,
    p_true: &Array1<f64>,
) -> Result<Observation> {
    spec.validate()?;
    if kernel.nrows() != spec.m || kernel.ncols() != spec.n || p_true.len() != spec.n {
        return Err(Error::DimensionMismatch {
            expected: spec.n,
            got: p_true.len(),
        });
    }
    let f_true = kernel.dot(p_true);
    let scale = f_true.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let floor = SIGMA_FLOOR_REL * scale;
    let sigma = f_true.mapv(|x| (spec.noise_fraction * x.abs()).max(floor));
    let f_obs = if spec.noise_fraction > 0.0 {
        let mut rng = NormalSampler::new(spec.seed);
        let mut out = f_true.clone();
        for (o, s) in out.iter_mut().zip(sigma.iter()) {
            *o += s * rng.sample();
        }
        out
    } else {
        f_true.clone()
    };
    Ok(Observation {
        f_true,
        f_obs,
        sigma,
    })
}
