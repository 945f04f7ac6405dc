//! Experiment configuration, presets, reports and dataset ingestion.

mod data;
mod presets;
mod report;

pub use data::{ingest_dataset, read_dataset, write_dataset, DataFormat, Dataset};
pub use presets::{preset, preset_names, presets, Scale};
pub use report::{
    fit_learning_curve, fit_report_exponent, fit_slope, read_curve_csv, ExponentFit, LearningCurveReport, ReplicaPoint,
    SectorFit, SpectrumReport,
};

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{arg, Error, Result};
use crate::geometry::{Architecture, InputSpace, Stride};
use crate::kernels::Kernel;
use crate::regression::{learning_curve, CurveSpec, RidgePolicy};
use crate::spectrum::{eigenvalues_fourier, eigenvalues_quadrature, SpectrumTable};
use crate::theory::{
    bound_exponent, capacity_exponent, fit_tail, optimal_lambda_exponent, predicted_exponent, replica_error,
    source_exponent, spectral_bias_error, ModeSpectrum, TailLaw, TargetSpec,
};

fn default_tolerance() -> f64 {
    0.15
}

/// One teacher-student learning-curve experiment, as read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub teacher: Architecture,
    pub student: Architecture,
    pub space: InputSpace,
    #[serde(default)]
    pub stride: Stride,
    pub n_list: Vec<usize>,
    pub n_test: usize,
    pub trials: usize,
    pub seed: u64,
    pub ridge: RidgePolicy,
    #[serde(default)]
    pub noise_std: f64,
    /// Also compute the replica prediction for the same `n` values.
    #[serde(default)]
    pub replica: bool,
    /// Allowed `|beta_hat - beta|` for `--assert`.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Output directory; not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn curve_spec(&self) -> CurveSpec {
        CurveSpec {
            teacher: Kernel::new(self.teacher.clone(), self.stride),
            student: Kernel::new(self.student.clone(), self.stride),
            space: self.space,
            n_list: self.n_list.clone(),
            n_test: self.n_test,
            trials: self.trials,
            seed: self.seed,
            ridge: self.ridge.clone(),
            noise_std: self.noise_std,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return arg(format!("config name `{}` must be a nonempty path component", self.name));
        }
        if self.space == InputSpace::External {
            return arg("experiments sample their inputs; `external` is not allowed");
        }
        if !(self.tolerance > 0.0) {
            return arg("tolerance must be positive");
        }
        self.curve_spec().validate()
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let json = serde_json::to_string(&c).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn target(&self) -> Result<TargetSpec> {
        TargetSpec::from_teacher(&self.teacher, &self.student)
    }
}

/// Runs the learning curve and attaches the theory predictions; writes nothing.
pub fn run_experiment(config: &ExperimentConfig) -> Result<LearningCurveReport> {
    config.validate()?;
    let start = Instant::now();
    let curve = learning_curve(&config.curve_spec())?;
    let failures: Vec<String> = curve
        .trials
        .iter()
        .filter_map(|t| t.failure.as_ref().map(|f| format!("n={} trial={}: {f}", t.n, t.trial)))
        .collect();
    let fit = fit_learning_curve(&curve.points).map_err(|e| log::warn!("{}: no exponent fit: {e}", config.name)).ok();
    let target = config.target().map_err(|e| log::warn!("{}: no prediction: {e}", config.name)).ok();
    let predicted_beta = target.as_ref().and_then(|t| predicted_exponent(&config.student, t).ok());
    let bound_beta = target.as_ref().and_then(|t| bound_exponent(&config.student, t).ok());
    let (lambda_fit, predicted_lambda_slope) = if matches!(config.ridge, RidgePolicy::Optimal { .. }) {
        let pts: Vec<(f64, f64)> = curve.points.iter().filter_map(|p| p.lambda_star.map(|l| (p.n as f64, l))).collect();
        let slope = target
            .as_ref()
            .and_then(|t| source_exponent(&config.student, t).ok())
            .and_then(|r| optimal_lambda_exponent(capacity_exponent(&config.student), r).ok());
        (fit_slope(&pts).map_err(|e| log::warn!("{}: no ridge fit: {e}", config.name)).ok(), slope)
    } else {
        (None, None)
    };
    let replica = if config.replica {
        let n: Vec<f64> = config.n_list.iter().map(|&n| n as f64).collect();
        let ridge = match config.ridge {
            RidgePolicy::Fixed { lambda } => lambda,
            _ => 0.0,
        };
        Some(replica_curve(&config.teacher, &config.student, &n, ridge)?)
    } else {
        None
    };
    Ok(LearningCurveReport {
        name: config.name.clone(),
        config_hash: config.hash(),
        config: config.clone(),
        points: curve.points,
        fit,
        predicted_beta,
        bound_beta,
        lambda_fit,
        predicted_lambda_slope,
        replica,
        failures,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Spectrum of one top-layer window of `arch`, at a resolution suited to its
/// patch count.
pub fn window_table(arch: &Architecture) -> Result<SpectrumTable> {
    let window = Architecture::new(arch.filter_sizes().to_vec(), 1, arch.kind())?;
    let p = window.num_patches();
    match (window.filter(1), p) {
        (2, 1) => eigenvalues_fourier(&window, 8192, 1 << 16),
        (2, 2) => eigenvalues_fourier(&window, 256, 1024),
        (2, 3) => eigenvalues_fourier(&window, 32, 128),
        (_, 1) => eigenvalues_quadrature(&window, 1024, 2048),
        (_, 2) => eigenvalues_quadrature(&window, 96, 192),
        _ => Err(Error::Resolution(format!("no spectrum resolution configured for a window of {p} patches"))),
    }
}

/// Mode spectrum of `student` with target powers from a `teacher` field on the
/// shared product-harmonic basis, extended by fitted power-law tails up to
/// `max_rank`.
pub fn replica_spectrum(teacher: &Architecture, student: &Architecture, max_rank: f64) -> Result<ModeSpectrum> {
    if teacher.input_dim() != student.input_dim() || teacher.filter(1) != student.filter(1) {
        return arg("teacher and student must share d and s_1");
    }
    let windows = student.top_multiplicity();
    if teacher.top_multiplicity() % windows != 0 {
        return Err(Error::Domain("the teacher field spans several student windows".into()));
    }
    let s_table = window_table(student)?;
    let spec = if teacher == student {
        ModeSpectrum::from_table(&s_table, windows, None)?
    } else {
        let t_window =
            Architecture::new(teacher.filter_sizes().to_vec(), teacher.top_multiplicity() / windows, teacher.kind())?;
        let t_table = if t_window.num_patches() == s_table.p() {
            match s_table.method.as_str() {
                "fourier" => eigenvalues_fourier(&t_window, s_table.k_max, s_table.resolution)?,
                _ => eigenvalues_quadrature(&t_window, s_table.k_max, s_table.resolution)?,
            }
        } else {
            return arg("teacher window does not match the student window");
        };
        ModeSpectrum::from_table(&s_table, windows, Some(&t_table))?
    };
    let eig = fit_tail(&spec, |m| m.eigenvalue)?;
    let moment = fit_tail(&spec, |m| m.moment).unwrap_or(TailLaw { amplitude: 0.0, exponent: eig.exponent });
    if max_rank > spec.total_multiplicity() {
        spec.with_tail(eig, moment, max_rank)
    } else {
        Ok(spec)
    }
}

/// Replica and spectral-bias predictions at each `n`.
pub fn replica_curve(
    teacher: &Architecture,
    student: &Architecture,
    n: &[f64],
    ridge: f64,
) -> Result<Vec<ReplicaPoint>> {
    let n_max = n.iter().copied().fold(1.0, f64::max);
    let spec = replica_spectrum(teacher, student, 1000.0 * n_max)?;
    n.iter()
        .map(|&n| {
            Ok(ReplicaPoint {
                n,
                replica: replica_error(&spec, n, ridge)?,
                spectral_bias: spectral_bias_error(&spec, n),
            })
        })
        .collect()
}

/// Eigenvalue table of `arch` with per-sector and rank-decay fits.
pub fn run_spectrum(arch: &Architecture, k_max: usize, resolution: Option<usize>) -> Result<SpectrumReport> {
    let table = if arch.filter(1) == 2 {
        let grid = match resolution {
            Some(g) => g,
            None => crate::spectrum::default_grid_size(arch.num_patches())?,
        };
        eigenvalues_fourier(arch, k_max, grid)
    } else {
        eigenvalues_quadrature(arch, k_max, resolution.unwrap_or(4 * k_max.max(16)))
    }
    .map_err(|e| match e {
        Error::Resolution(m) => Error::Resolution(format!("{m} (try a smaller --k-max or an explicit --resolution)")),
        e => e,
    })?;
    SpectrumReport::from_table(table)
}
