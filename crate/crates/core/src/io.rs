//! File formats: dataset, candidate pool, fitted state, run report, CSV.
//!
//! All JSON files are written pretty-printed with a trailing newline from
//! `serde` structs, so re-running a stage on the same inputs reproduces the
//! bytes exactly (the run report's `timing_ms` field is the one documented
//! exception). Indices are 1-based in every file and report; the library is
//! 0-based internally.
//!
//! Dataset schema: `{M, N, kernel, f_obs, sigma, f_true?, p_true?, seed}`
//! where `kernel` is either nested rows or a generator spec
//! `{"family": "exponential" | "lorentzian"}` tabulated from `M` and `N`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::model::ConstraintSystem;
use crate::synth::{self, ExperimentSpec, KernelFamily, MeasureMode};
use crate::wgeom::Measure;
use crate::{Error, Result};

/// On-disk form of the kernel: explicit rows or a named generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelField {
    Rows(Vec<Vec<f64>>),
    Generator { family: KernelFamily },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub kernel: KernelField,
    pub f_obs: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_true: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_true: Option<Vec<f64>>,
    pub seed: u64,
}

/// A loaded dataset with the kernel tabulated.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub kernel: Array2<f64>,
    /// `Some` when the kernel came from a named family (kept so saving the
    /// dataset stays compact).
    pub family: Option<KernelFamily>,
    pub f_obs: Array1<f64>,
    pub sigma: Array1<f64>,
    pub f_true: Option<Array1<f64>>,
    pub p_true: Option<Array1<f64>>,
    pub seed: u64,
}

impl Dataset {
    /// Generates a dataset from an experiment spec (kernel, truth, noisy
    /// observation).
    pub fn generate(spec: &ExperimentSpec) -> Result<Self> {
        let kernel = synth::make_kernel(spec)?;
        let p_true = synth::make_truth(spec)?;
        let obs = synth::observe(spec, &kernel, &p_true)?;
        if obs.sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Schema(
                "generated noise levels are not all positive (zero truth?)".into(),
            ));
        }
        let family = match spec.kernel_family {
            KernelFamily::Custom => None,
            f => Some(f),
        };
        Ok(Self {
            kernel,
            family,
            f_obs: obs.f_obs,
            sigma: obs.sigma,
            f_true: Some(obs.f_true),
            p_true: Some(p_true),
            seed: spec.seed,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        let file: DatasetFile = serde_json::from_str(&text)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        Self::from_file(file)
    }

    pub fn from_file(file: DatasetFile) -> Result<Self> {
        let (m, n) = (file.m, file.n);
        let (kernel, family) = match file.kernel {
            KernelField::Rows(rows) => {
                if rows.len() != m || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Schema(format!(
                        "kernel rows do not match M={m}, N={n}"
                    )));
                }
                let flat: Vec<f64> = rows.into_iter().flatten().collect();
                let kernel = Array2::from_shape_vec((m, n), flat)
                    .map_err(|e| Error::Schema(e.to_string()))?;
                (kernel, None)
            }
            KernelField::Generator { family } => {
                if family == KernelFamily::Custom {
                    return Err(Error::Schema(
                        "custom kernels must be given as explicit rows".into(),
                    ));
                }
                let spec = ExperimentSpec {
                    kernel_family: family,
                    m,
                    n,
                    noise_fraction: 0.0,
                    seed: 0,
                    measure_mode: MeasureMode::Uniform,
                    truth: synth::TruthSpec::Tabulated(vec![0.0; n]),
                    kernel: None,
                    t: 1.0,
                };
                (synth::make_kernel(&spec)?, Some(family))
            }
        };
        let check_len = |name: &str, len: usize, expected: usize| -> Result<()> {
            if len != expected {
                return Err(Error::Schema(format!(
                    "{name} has length {len}, expected {expected}"
                )));
            }
            Ok(())
        };
        check_len("f_obs", file.f_obs.len(), m)?;
        check_len("sigma", file.sigma.len(), m)?;
        if file.sigma.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::Schema("sigma entries must be positive".into()));
        }
        if let Some(ft) = &file.f_true {
            check_len("f_true", ft.len(), m)?;
        }
        if let Some(pt) = &file.p_true {
            check_len("p_true", pt.len(), n)?;
        }
        Ok(Self {
            kernel,
            family,
            f_obs: Array1::from_vec(file.f_obs),
            sigma: Array1::from_vec(file.sigma),
            f_true: file.f_true.map(Array1::from_vec),
            p_true: file.p_true.map(Array1::from_vec),
            seed: file.seed,
        })
    }

    pub fn to_file(&self) -> DatasetFile {
        let kernel = match self.family {
            Some(f) => KernelField::Generator { family: f },
            None => KernelField::Rows(self.kernel.rows().into_iter().map(|r| r.to_vec()).collect()),
        };
        DatasetFile {
            m: self.kernel.nrows(),
            n: self.kernel.ncols(),
            kernel,
            f_obs: self.f_obs.to_vec(),
            sigma: self.sigma.to_vec(),
            f_true: self.f_true.as_ref().map(|v| v.to_vec()),
            p_true: self.p_true.as_ref().map(|v| v.to_vec()),
            seed: self.seed,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, &self.to_file())
    }

    /// Builds the constraint system under the requested weighting.
    pub fn system(&self, mode: MeasureMode) -> Result<ConstraintSystem> {
        let m = self.kernel.nrows();
        let mu = match mode {
            MeasureMode::Uniform => Measure::uniform(m),
            MeasureMode::InverseVariance => Measure::from_sigma(&self.sigma)?,
        };
        ConstraintSystem::new(
            self.kernel.clone(),
            self.f_obs.clone(),
            mu,
            Some(self.sigma.clone()),
        )
    }
}

/// Pool file: 1-based candidate indices in selection order plus the ratio
/// that admitted each.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolFile {
    pub threshold: f64,
    pub pool: Vec<usize>,
    pub ratios: Vec<f64>,
    #[serde(default)]
    pub degenerate: bool,
}

/// Fitted-state file: enough to reproduce the state by replaying the
/// selections against the dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    /// 1-based selected constraint indices, in selection order.
    pub selected: Vec<usize>,
    pub multipliers: Vec<f64>,
    pub measure: MeasureMode,
    pub t: f64,
    pub epsilon_norm2: f64,
    pub residual2: f64,
}

/// Run report written by `fit` and `prune`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub command: String,
    pub k: usize,
    /// 1-based selected constraint indices.
    pub selected: Vec<usize>,
    pub multipliers: Vec<f64>,
    pub residual2: f64,
    pub epsilon_norm2: f64,
    pub t: f64,
    pub measure: MeasureMode,
    pub stop_reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removed: Option<usize>,
    pub entropy: f64,
    pub timing_ms: u64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

pub fn to_one_based(indices: &[usize]) -> Vec<usize> {
    indices.iter().map(|i| i + 1).collect()
}

pub fn from_one_based(indices: &[usize], m: usize) -> Result<Vec<usize>> {
    indices
        .iter()
        .map(|&i| {
            if i < 1 || i > m {
                Err(Error::Schema(format!(
                    "index {i} outside the 1-based range 1..={m}"
                )))
            } else {
                Ok(i - 1)
            }
        })
        .collect()
}

/// Distribution CSV: `n,p_half,p` with 1-based `n`.
pub fn distribution_csv(phalf: &crate::HalfDistribution) -> String {
    let mut out = String::from("n,p_half,p\n");
    for (idx, v) in phalf.components().iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", idx + 1, v, v * v));
    }
    out
}

/// Prediction CSV: `i,f_obs,f_pred[,f_true],sigma` with 1-based `i`; the
/// `f_true` column appears only when the dataset carries it.
pub fn prediction_csv(data: &Dataset, f_pred: &Array1<f64>) -> String {
    let mut out = String::new();
    match &data.f_true {
        Some(ft) => {
            out.push_str("i,f_obs,f_pred,f_true,sigma\n");
            for i in 0..data.f_obs.len() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    i + 1,
                    data.f_obs[i],
                    f_pred[i],
                    ft[i],
                    data.sigma[i]
                ));
            }
        }
        None => {
            out.push_str("i,f_obs,f_pred,sigma\n");
            for i in 0..data.f_obs.len() {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    i + 1,
                    data.f_obs[i],
                    f_pred[i],
                    data.sigma[i]
                ));
            }
        }
    }
    out
}
