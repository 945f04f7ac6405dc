//! Closed-form learning-curve exponents and the replica / spectral-bias predictors.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::geometry::{effective_dim, Architecture};
use crate::spectrum::{PowerLawFit, SpectrumTable};

/// Target function class: depends on one layer-`layer` meta-patch of the student
/// and has `smoothness` finite-norm derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub layer: usize,
    pub smoothness: f64,
    pub teacher: Option<String>,
}

impl TargetSpec {
    pub fn new(layer: usize, smoothness: f64) -> Result<Self> {
        if layer == 0 {
            return arg("target layer is 1-based");
        }
        if !(smoothness > 0.0) {
            return arg(format!("smoothness {smoothness} must be positive"));
        }
        Ok(Self { layer, smoothness, teacher: None })
    }

    /// Target drawn from a hierarchical teacher: smoothness `nu_T`, supported on the
    /// smallest student meta-patch covering a teacher top-layer meta-patch.
    pub fn from_teacher(teacher: &Architecture, student: &Architecture) -> Result<Self> {
        if teacher.input_dim() != student.input_dim() {
            return arg(format!(
                "teacher d = {} differs from student d = {}",
                teacher.input_dim(),
                student.input_dim()
            ));
        }
        let field = teacher.meta_patch_len(teacher.depth());
        let layer = (1..=student.depth()).find(|&l| student.meta_patch_len(l) >= field).ok_or_else(|| {
            Error::Domain(format!(
                "teacher receptive field {field} exceeds the student's top meta-patch {}",
                student.meta_patch_len(student.depth())
            ))
        })?;
        let window = student.meta_patch_len(layer);
        if window % field != 0 {
            return Err(Error::Domain(format!(
                "teacher receptive field {field} does not tile student meta-patches of {window}"
            )));
        }
        Ok(Self { layer, smoothness: teacher.nu(), teacher: Some(teacher.fingerprint()) })
    }

    fn check(&self, student: &Architecture) -> Result<()> {
        if self.layer == 0 || self.layer > student.depth() {
            return arg(format!("target layer {} outside 1..={}", self.layer, student.depth()));
        }
        if !(self.smoothness > 0.0) {
            return arg("smoothness must be positive");
        }
        Ok(())
    }
}

fn dims(student: &Architecture, target: &TargetSpec) -> Result<(f64, f64, f64, f64)> {
    target.check(student)?;
    let d_l = effective_dim(student, target.layer)? as f64;
    let d_top = effective_dim(student, student.depth())? as f64;
    Ok((target.smoothness, student.nu(), d_l, d_top))
}

/// `beta = [2m / (2 nu + d_eff(l))] [(2 nu + d_eff(L)) / d_eff(L)]`.
pub fn predicted_exponent(student: &Architecture, target: &TargetSpec) -> Result<f64> {
    let (m, nu, d_l, d_top) = dims(student, target)?;
    Ok(2.0 * m / (2.0 * nu + d_l) * (2.0 * nu + d_top) / d_top)
}

/// Source-capacity rate of the optimally regularised estimator.
pub fn bound_exponent(student: &Architecture, target: &TargetSpec) -> Result<f64> {
    let (m, nu, d_l, d_top) = dims(student, target)?;
    let a = 2.0 * m * (2.0 * nu + d_top);
    Ok(a / (a + (2.0 * nu + d_l) * d_top))
}

/// Rate for a fully-connected kernel on inputs of dimension `dim`.
pub fn fully_connected_exponent(smoothness: f64, dim: usize) -> Result<f64> {
    if !(smoothness > 0.0) || dim == 0 {
        return arg("smoothness and dimension must be positive");
    }
    Ok(2.0 * smoothness / (2.0 * smoothness + dim as f64))
}

/// Supremum of the admissible capacity exponents, `1 + 2 nu / d_eff(L)`.
pub fn capacity_exponent(student: &Architecture) -> f64 {
    1.0 + 2.0 * student.nu() / effective_dim(student, student.depth()).expect("top layer exists") as f64
}

/// Largest admissible source exponent, `r = 2m / (2 nu + d_eff(l))`.
pub fn source_exponent(student: &Architecture, target: &TargetSpec) -> Result<f64> {
    let (m, nu, d_l, _) = dims(student, target)?;
    Ok(2.0 * m / (2.0 * nu + d_l))
}

/// Exponent of the optimal ridge schedule, `-alpha / (alpha r + 1)`.
pub fn optimal_lambda_exponent(alpha: f64, r: f64) -> Result<f64> {
    if !(alpha >= 1.0) || !(r > 0.0) {
        return arg(format!("need alpha >= 1 and r > 0, got ({alpha}, {r})"));
    }
    Ok(-alpha / (alpha * r + 1.0))
}

/// `lambda_n = n^{-alpha / (alpha r + 1)}` with unit prefactor.
pub fn optimal_lambda_schedule(alpha: f64, r: f64, n: f64) -> Result<f64> {
    if !(n > 0.0) {
        return arg("n must be positive");
    }
    Ok(n.powf(optimal_lambda_exponent(alpha, r)?))
}

/// A block of `multiplicity` eigenmodes sharing an eigenvalue and a target power
/// `moment = E[c^2]` per mode. Multiplicities may be fractional for binned tails.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub eigenvalue: f64,
    pub multiplicity: f64,
    pub moment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpectrum {
    modes: Vec<Mode>,
}

/// `A rho^{exponent}` as a function of the rank.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailLaw {
    pub amplitude: f64,
    pub exponent: f64,
}

impl From<PowerLawFit> for TailLaw {
    fn from(f: PowerLawFit) -> Self {
        Self { amplitude: f.intercept.exp(), exponent: f.exponent }
    }
}

impl TailLaw {
    /// Mean of the law over ranks `(a, b]`.
    fn bin_mean(&self, a: f64, b: f64) -> f64 {
        let e = self.exponent + 1.0;
        let integral = if e.abs() < 1e-12 { (b / a).ln() } else { (b.powf(e) - a.powf(e)) / e };
        self.amplitude * integral / (b - a)
    }
}

/// Geometric bin ratio of synthetic tails.
const TAIL_BIN_RATIO: f64 = 1.01;

impl ModeSpectrum {
    pub fn new(mut modes: Vec<Mode>) -> Result<Self> {
        if let Some(m) = modes.iter().find(|m| !(m.eigenvalue >= 0.0) || !(m.moment >= 0.0) || !(m.multiplicity > 0.0))
        {
            return arg(format!("invalid mode {m:?}"));
        }
        modes.sort_by(|a, b| b.eigenvalue.total_cmp(&a.eigenvalue));
        Ok(Self { modes })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn total_multiplicity(&self) -> f64 {
        self.modes.iter().map(|m| m.multiplicity).sum()
    }

    pub fn total_power(&self) -> f64 {
        self.modes.iter().map(|m| m.multiplicity * m.moment).sum()
    }

    /// `Lambda_rho = rho^{-a}`, `E[c_rho^2] = rho^{-b}` for ranks `1..=count`; ranks
    /// beyond 1000 are log-binned.
    pub fn power_law(a: f64, b: f64, count: usize) -> Result<Self> {
        let exact = count.min(1000);
        let mut modes: Vec<Mode> = (1..=exact)
            .map(|r| Mode { eigenvalue: (r as f64).powf(-a), multiplicity: 1.0, moment: (r as f64).powf(-b) })
            .collect();
        let eig = TailLaw { amplitude: 1.0, exponent: -a };
        let mom = TailLaw { amplitude: 1.0, exponent: -b };
        // Ranks are centred: mode r covers (r - 1/2, r + 1/2].
        append_tail(&mut modes, exact as f64 + 0.5, count as f64 + 0.5, eig, mom);
        Self::new(modes)
    }

    /// Complete part of a spectrum table (eigenvalues above the largest one touching
    /// the truncation boundary). The table describes one top-layer window; the
    /// kernel averages `windows` independent copies, which keeps the constant mode
    /// and splits every other eigenvalue over `windows` copies. Target moments come
    /// from `teacher` on the shared basis, or equal the eigenvalues when `None`.
    pub fn from_table(table: &SpectrumTable, windows: usize, teacher: Option<&SpectrumTable>) -> Result<Self> {
        if windows == 0 {
            return arg("window count must be positive");
        }
        if table.arch.top_multiplicity() != 1 {
            return arg("tables must describe a single top-layer window");
        }
        let floor = table.grid_error();
        let boundary =
            table.entries.iter().filter(|e| e.k.contains(&table.k_max)).map(|e| e.eigenvalue).fold(floor, f64::max);
        let w = windows as f64;
        let mut modes = Vec::new();
        for e in table.entries.iter().filter(|e| e.eigenvalue > boundary) {
            let constant = e.k.iter().all(|&k| k == 0);
            let teacher_value = match teacher {
                Some(t) => t
                    .eigenvalue(&e.k)
                    .ok_or_else(|| Error::Argument(format!("teacher table lacks mode {:?}", e.k)))?
                    .max(0.0),
                None => e.eigenvalue,
            };
            let (scale, mult) = if constant { (1.0, e.degeneracy as f64) } else { (1.0 / w, e.degeneracy as f64 * w) };
            modes.push(Mode { eigenvalue: e.eigenvalue * scale, multiplicity: mult, moment: teacher_value * scale });
        }
        Self::new(modes)
    }

    /// Appends log-binned modes following `eig` and `moment` from the current last
    /// rank up to `max_rank`.
    pub fn with_tail(mut self, eig: TailLaw, moment: TailLaw, max_rank: f64) -> Result<Self> {
        if !(eig.exponent < 0.0) || !(eig.amplitude > 0.0) || !(moment.amplitude >= 0.0) {
            return arg(format!("tail laws must decay: {eig:?}, {moment:?}"));
        }
        let start = self.total_multiplicity();
        append_tail(&mut self.modes, start, max_rank, eig, moment);
        Self::new(self.modes)
    }
}

/// Power law of `value(mode)` against rank, fitted over the last decade of ranks
/// on the modes where the value is positive.
pub fn fit_tail(spec: &ModeSpectrum, value: impl Fn(&Mode) -> f64) -> Result<TailLaw> {
    let top = spec.total_multiplicity();
    let mut pts = Vec::new();
    let mut rank = 0.0;
    for m in &spec.modes {
        let centre = rank + 0.5 * m.multiplicity;
        rank += m.multiplicity;
        let v = value(m);
        if centre >= top / 10.0 && v > 0.0 {
            pts.push((centre.ln(), v.ln()));
        }
    }
    if pts.len() < 8 {
        return Err(Error::Resolution(format!("{} positive tail points; at least 8 are needed", pts.len())));
    }
    let (b, a, _) = crate::fit::ols(&pts);
    Ok(TailLaw { amplitude: a.exp(), exponent: b })
}

fn append_tail(modes: &mut Vec<Mode>, start: f64, end: f64, eig: TailLaw, moment: TailLaw) {
    let mut a = start;
    while a < end {
        let b = (a * TAIL_BIN_RATIO).max(a + 1.0).min(end);
        modes.push(Mode { eigenvalue: eig.bin_mean(a, b), multiplicity: b - a, moment: moment.bin_mean(a, b) });
        a = b;
    }
}

fn check_inputs(n: f64, ridge: f64) -> Result<()> {
    if !(n > 0.0) {
        return arg(format!("n = {n} must be positive"));
    }
    if !(ridge >= 0.0) {
        return arg(format!("ridge {ridge} must be nonnegative"));
    }
    Ok(())
}

/// `1 - lambda/z - (1/n) sum mult Lambda / (Lambda + z)`, increasing in `z`.
fn kappa_residual(spec: &ModeSpectrum, n: f64, ridge: f64, z: f64) -> f64 {
    let s: f64 = spec.modes.iter().map(|m| m.multiplicity * m.eigenvalue / (m.eigenvalue + z)).sum();
    1.0 - ridge / z - s / n
}

/// Solves `z = lambda + (1/n) sum_rho Lambda_rho z / (Lambda_rho + z)` for the
/// positive root `z = kappa / n`, by bisection in `log z`. Returns 0 in the
/// ridgeless case when there are no more modes than samples.
pub fn replica_kappa(spec: &ModeSpectrum, n: f64, ridge: f64) -> Result<f64> {
    check_inputs(n, ridge)?;
    let trace: f64 = spec.modes.iter().map(|m| m.multiplicity * m.eigenvalue).sum();
    let hi0 = ridge + trace / n;
    if hi0 == 0.0 {
        return Ok(0.0);
    }
    if ridge == 0.0 {
        let active: f64 = spec.modes.iter().filter(|m| m.eigenvalue > 0.0).map(|m| m.multiplicity).sum();
        if active <= n {
            return Ok(0.0);
        }
    }
    let mut hi = hi0;
    let mut lo = if ridge > 0.0 { ridge } else { hi * 0.5 };
    let mut steps = 0;
    while kappa_residual(spec, n, ridge, lo) > 0.0 {
        hi = lo;
        lo *= 1e-3;
        steps += 1;
        if steps > 100 || lo < f64::MIN_POSITIVE {
            return Err(Error::Numerical(format!("no bracket for the replica equation at n = {n}")));
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-13 * hi {
            return Ok((lo * hi).sqrt());
        }
        let mid = (lo * hi).sqrt();
        if kappa_residual(spec, n, ridge, mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::Numerical(format!("replica bisection did not converge at n = {n}")))
}

/// Replica generalisation error
/// `eps = dz/dlambda * sum mult z^2 / (Lambda + z)^2 E[c^2]`, with the derivative
/// from the implicit function theorem. `n = 0` returns the total target power.
pub fn replica_error(spec: &ModeSpectrum, n: f64, ridge: f64) -> Result<f64> {
    replica_error_noisy(spec, n, ridge, 0.0)
}

/// As [`replica_error`] with label noise of variance `noise_var`, which adds
/// `noise_var * gamma / (1 - gamma)`.
pub fn replica_error_noisy(spec: &ModeSpectrum, n: f64, ridge: f64, noise_var: f64) -> Result<f64> {
    if n == 0.0 {
        return Ok(spec.total_power());
    }
    let z = replica_kappa(spec, n, ridge)?;
    if z == 0.0 {
        return Ok(0.0);
    }
    let mut gamma = 0.0;
    let mut bias = 0.0;
    for m in &spec.modes {
        let q = 1.0 / (m.eigenvalue + z);
        gamma += m.multiplicity * m.eigenvalue * m.eigenvalue * q * q;
        bias += m.multiplicity * m.moment * z * z * q * q;
    }
    gamma /= n;
    if !(gamma < 1.0) {
        return Err(Error::Numerical(format!("replica derivative singular at n = {n} (gamma = {gamma})")));
    }
    Ok((bias + noise_var * gamma) / (1.0 - gamma))
}

/// Target power outside the `n` leading modes; fractional blocks are split.
pub fn spectral_bias_error(spec: &ModeSpectrum, n: f64) -> f64 {
    let mut rank = 0.0;
    let mut err = 0.0;
    for m in &spec.modes {
        let learned = (n - rank).clamp(0.0, m.multiplicity);
        err += (m.multiplicity - learned) * m.moment;
        rank += m.multiplicity;
    }
    err
}

/// Whether `sum Lambda^{1/alpha}` and `sum Lambda^{-r} E[c^2]` converge, judged from
/// power-law fits of the summands against rank over the last decade of ranks.
pub fn source_capacity_check(spec: &ModeSpectrum, alpha: f64, r: f64) -> Result<(bool, bool)> {
    if !(alpha > 0.0) || !(r >= 0.0) {
        return arg(format!("need alpha > 0 and r >= 0, got ({alpha}, {r})"));
    }
    let top = spec.total_multiplicity();
    let mut cap = Vec::new();
    let mut src = Vec::new();
    let mut rank = 0.0;
    for m in &spec.modes {
        let centre = rank + 0.5 * m.multiplicity;
        rank += m.multiplicity;
        if centre < top / 10.0 || m.eigenvalue <= 0.0 {
            continue;
        }
        cap.push((centre, m.eigenvalue.powf(1.0 / alpha)));
        if m.moment > 0.0 {
            src.push((centre, m.eigenvalue.powf(-r) * m.moment));
        }
    }
    let fit = |pts: &[(f64, f64)]| -> Result<f64> {
        if pts.len() < 8 {
            return Err(Error::Resolution(format!("{} tail points; at least 8 are needed", pts.len())));
        }
        let logs: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
        Ok(crate::fit::ols(&logs).0)
    };
    Ok((fit(&cap)? < -1.0, fit(&src)? < -1.0))
}
