//! Report artifacts: learning-curve CSV/JSON, spectrum reports and exponent fits.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::{arg, Error, Result};
use crate::regression::CurvePoint;
use crate::spectrum::{
    default_window, fit_power_law, mercer_sum_check, rank_decay, sector_ray, PowerLawFit, SpectrumTable,
};

/// `eps ~ n^{-beta}` fitted on log-log axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub beta: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaPoint {
    pub n: f64,
    pub replica: f64,
    pub spectral_bias: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurveReport {
    pub name: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub points: Vec<CurvePoint>,
    pub fit: Option<ExponentFit>,
    pub predicted_beta: Option<f64>,
    pub bound_beta: Option<f64>,
    /// Slope of `log lambda*` against `log n`, stored with `beta = -slope`.
    pub lambda_fit: Option<ExponentFit>,
    pub predicted_lambda_slope: Option<f64>,
    pub replica: Option<Vec<ReplicaPoint>>,
    pub failures: Vec<String>,
    pub wall_clock_secs: f64,
}

type Triple = (f64, f64, f64);

fn decade(points: &[Triple]) -> Result<(Vec<Triple>, (f64, f64))> {
    let n_max = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let window = (n_max / 10.0, n_max);
    let sel: Vec<_> = points.iter().copied().filter(|p| p.0 >= window.0).collect();
    if sel.len() < 4 {
        return Err(Error::Resolution(format!(
            "{} points in the last decade {window:?}; at least 4 are needed",
            sel.len()
        )));
    }
    if let Some(p) = sel.iter().find(|p| !(p.1 > 0.0)) {
        return Err(Error::Domain(format!("nonpositive value {} at n = {}", p.1, p.0)));
    }
    Ok((sel, window))
}

/// Weighted least squares of `log mean` on `log n` over the last decade of `n`,
/// with weights from the standard error of `log mean`. Falls back to equal weights
/// when any standard deviation is zero.
pub fn fit_learning_curve(points: &[CurvePoint]) -> Result<ExponentFit> {
    let pts: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|p| (p.n as f64, p.mean_error, p.std_error / (p.mean_error * (p.trials_ok.max(1) as f64).sqrt())))
        .collect();
    let (sel, window) = decade(&pts)?;
    let logs: Vec<(f64, f64)> = sel.iter().map(|p| (p.0.ln(), p.1.ln())).collect();
    let (slope, _, stderr) = if sel.iter().all(|p| p.2 > 0.0) {
        let w: Vec<f64> = sel.iter().map(|p| 1.0 / (p.2 * p.2)).collect();
        crate::fit::wls(&logs, &w)
    } else {
        crate::fit::ols(&logs)
    };
    Ok(ExponentFit { beta: -slope, stderr, window, points: sel.len() })
}

/// Unweighted log-log fit of `(x, y)` over the last decade of `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<ExponentFit> {
    let pts: Vec<(f64, f64, f64)> = points.iter().map(|&(x, y)| (x, y, 0.0)).collect();
    let (sel, window) = decade(&pts)?;
    let logs: Vec<(f64, f64)> = sel.iter().map(|p| (p.0.ln(), p.1.ln())).collect();
    let (slope, _, stderr) = crate::fit::ols(&logs);
    Ok(ExponentFit { beta: -slope, stderr, window, points: sel.len() })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl LearningCurveReport {
    /// CSV with a leading `# config_hash=` line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# config_hash={}", self.config_hash)?;
        writeln!(w, "n,mean_error,std_error,trials_ok,lambda_star")?;
        for p in &self.points {
            writeln!(w, "{},{},{},{},{}", p.n, p.mean_error, p.std_error, p.trials_ok, opt(p.lambda_star))?;
        }
        Ok(())
    }

    pub fn write_replica_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# config_hash={}", self.config_hash)?;
        writeln!(w, "n,eps_replica,eps_spectral_bias")?;
        for p in self.replica.iter().flatten() {
            writeln!(w, "{},{},{}", p.n, p.replica, p.spectral_bias)?;
        }
        Ok(())
    }

    /// `curve.csv`, `meta.json` and, with a replica curve, `replica.csv` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut csv = Vec::new();
        self.write_csv(&mut csv)?;
        fs::write(dir.join("curve.csv"), csv)?;
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(self)?)?;
        if self.replica.is_some() {
            let mut r = Vec::new();
            self.write_replica_csv(&mut r)?;
            fs::write(dir.join("replica.csv"), r)?;
        }
        Ok(())
    }

    /// Reference exponent: the source-capacity rate for noisy, optimally
    /// regularised runs and the ridgeless prediction otherwise.
    pub fn expected_beta(&self) -> Option<f64> {
        if self.config.noise_std > 0.0 && matches!(self.config.ridge, crate::regression::RidgePolicy::Optimal { .. }) {
            self.bound_beta
        } else {
            self.predicted_beta
        }
    }

    /// `|beta_hat - beta|` within the configured tolerance.
    pub fn passes(&self) -> bool {
        match (self.fit, self.expected_beta()) {
            (Some(f), Some(b)) => (f.beta - b).abs() <= self.config.tolerance,
            _ => false,
        }
    }
}

/// Reads a curve CSV; returns its embedded config hash and the points.
pub fn read_curve_csv(path: &Path) -> Result<(Option<String>, Vec<CurvePoint>)> {
    let file = BufReader::new(fs::File::open(path)?);
    let mut hash = None;
    let mut points = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(h) = rest.trim().strip_prefix("config_hash=") {
                hash = Some(h.trim().to_string());
            }
            continue;
        }
        if line.is_empty() || line.starts_with("n,") {
            continue;
        }
        let bad = |what: &str| Error::Parse(format!("{}: line {}: {what}", path.display(), i + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 3 {
            return Err(bad("expected at least n,mean_error,std_error"));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(&e.to_string()));
        points.push(CurvePoint {
            n: f[0].trim().parse().map_err(|e: std::num::ParseIntError| bad(&e.to_string()))?,
            mean_error: num(f[1])?,
            std_error: num(f[2])?,
            trials_ok: match f.get(3) {
                Some(s) if !s.trim().is_empty() => {
                    s.trim().parse().map_err(|e: std::num::ParseIntError| bad(&e.to_string()))?
                }
                _ => 1,
            },
            lambda_star: match f.get(4) {
                Some(s) if !s.trim().is_empty() => Some(num(s)?),
                _ => None,
            },
        });
    }
    Ok((hash, points))
}

/// Fits a curve CSV. The embedded hash must equal `expected` (or, when that is
/// `None`, the hash in a sibling `meta.json`) unless `force` is set.
pub fn fit_report_exponent(path: &Path, expected: Option<&str>, force: bool) -> Result<ExponentFit> {
    let (found, points) = read_curve_csv(path)?;
    let sidecar;
    let expected = match expected {
        Some(e) => Some(e),
        None => {
            let meta = path.with_file_name("meta.json");
            sidecar = if meta.exists() {
                let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(meta)?)?;
                v.get("config_hash").and_then(|h| h.as_str()).map(str::to_string)
            } else {
                None
            };
            sidecar.as_deref()
        }
    };
    if let Some(exp) = expected {
        let found_s = found.clone().unwrap_or_default();
        if found_s != exp && !force {
            return Err(Error::HashMismatch { expected: exp.to_string(), found: found_s });
        }
    }
    if points.len() < 4 {
        return arg(format!("{} points in {}; at least 4 are needed", points.len(), path.display()));
    }
    fit_learning_curve(&points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorFit {
    pub layer: usize,
    pub fit: Option<PowerLawFit>,
    /// `-(2 nu + d_eff(l))`.
    pub predicted: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    #[serde(skip)]
    pub table: Option<SpectrumTable>,
    pub arch: String,
    pub k_max: usize,
    pub method: String,
    pub resolution: usize,
    pub sectors: Vec<SectorFit>,
    pub rank_fit: Option<PowerLawFit>,
    pub mercer_residual: f64,
    /// Entries above the grid-error threshold.
    pub nonzero_modes: usize,
}

impl SpectrumReport {
    pub fn from_table(table: SpectrumTable) -> Result<Self> {
        let arch = table.arch.clone();
        let sectors = (1..=arch.depth())
            .map(|l| {
                let predicted = -(2.0 * arch.nu() + arch.effective_dim(l).expect("layer in range") as f64);
                match sector_ray(&table, l).and_then(|ray| fit_power_law(&ray, default_window(table.k_max))) {
                    Ok(f) => SectorFit { layer: l, fit: Some(f), predicted, error: None },
                    Err(e) => SectorFit { layer: l, fit: None, predicted, error: Some(e.to_string()) },
                }
            })
            .collect();
        let floor = table.grid_error();
        Ok(Self {
            arch: arch.to_string(),
            k_max: table.k_max,
            method: table.method.clone(),
            resolution: table.resolution,
            sectors,
            rank_fit: rank_decay(&table).ok(),
            mercer_residual: mercer_sum_check(&table, &arch)?,
            nonzero_modes: table.entries.iter().filter(|e| e.eigenvalue.abs() > floor).count(),
            table: Some(table),
        })
    }

    /// `spectrum.csv` and `spectrum.json` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        if let Some(t) = &self.table {
            t.write_csv(fs::File::create(dir.join("spectrum.csv"))?)?;
        }
        fs::write(dir.join("spectrum.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64) -> Vec<CurvePoint> {
        [128, 256, 512, 1024, 2048, 4096, 8192]
            .iter()
            .map(|&n| CurvePoint { n, mean_error: f(n as f64), std_error: 0.0, trials_ok: 16, lambda_star: None })
            .collect()
    }

    #[test]
    fn exact_power_laws() {
        let f = fit_learning_curve(&synthetic(|n| 1.0 / n)).unwrap();
        assert!((f.beta - 1.0).abs() < 1e-12 && f.stderr < 1e-12);
        assert_eq!(f.points, 4);
        let f = fit_learning_curve(&synthetic(|n| 5.0 * n.powf(-0.625))).unwrap();
        assert!((f.beta - 0.625).abs() < 1e-12);
        assert!(fit_learning_curve(&synthetic(|n| 1.0 / n)[..2]).is_err());
    }

    #[test]
    fn weights_follow_standard_errors() {
        // A noisy outlier with huge variance barely moves the fit.
        let mut pts = synthetic(|n| 1.0 / n);
        for p in &mut pts {
            p.std_error = 0.01 * p.mean_error;
        }
        pts[5].mean_error *= 3.0;
        pts[5].std_error = 100.0 * pts[5].mean_error;
        let f = fit_learning_curve(&pts).unwrap();
        assert!((f.beta - 1.0).abs() < 1e-3, "{f:?}");
    }
}
