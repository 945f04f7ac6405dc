//! Gaussian-random-field teachers, kernel ridge regression and learning curves.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::geometry::{sample_inputs_with, InputSpace};
use crate::kernels::{GramMatrix, Kernel};
use crate::linalg::{matvec, Cholesky};
use crate::rng::{self, Purpose, Rng};

/// Relative size of the ridgeless jitter and of the first Cholesky jitter.
pub const JITTER_REL: f64 = 1e-12;

/// One realisation of the teacher field on a set of points.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherSample {
    /// Noiseless field values `f*(x)`.
    pub field: Vec<f64>,
    /// Label noise, all zero when `noise_std == 0`.
    pub noise: Vec<f64>,
    pub seed: u64,
    pub teacher: String,
    pub noise_std: f64,
}

impl TeacherSample {
    pub fn labels(&self) -> Vec<f64> {
        self.field.iter().zip(&self.noise).map(|(f, e)| f + e).collect()
    }
}

fn standard_normals(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Field values `L z` from a jittered Cholesky factor of the (owned) Gram data.
fn field_from_gram(data: Vec<f64>, n: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    let trace: f64 = (0..n).map(|i| data[i * n + i]).sum();
    let chol = Cholesky::factor(data, n, JITTER_REL * trace / n as f64)?;
    Ok(chol.mul_lower(&standard_normals(rng, n)))
}

/// Samples a zero-mean Gaussian field with covariance `gram`, plus i.i.d. noise of
/// standard deviation `noise_std` on every entry.
pub fn sample_teacher(gram: &GramMatrix, seed: u64, noise_std: f64) -> Result<TeacherSample> {
    if !gram.is_square() {
        return arg("teacher gram must be square");
    }
    if noise_std < 0.0 {
        return arg("noise standard deviation must be nonnegative");
    }
    let n = gram.rows();
    let field = field_from_gram(gram.as_slice().to_vec(), n, &mut rng::stream(seed, Purpose::Teacher, 0, 0))?;
    let noise = if noise_std > 0.0 {
        let mut r = rng::stream(seed, Purpose::Noise, 0, 0);
        standard_normals(&mut r, n).into_iter().map(|v| noise_std * v).collect()
    } else {
        vec![0.0; n]
    };
    Ok(TeacherSample { field, noise, seed, teacher: gram.arch.clone(), noise_std })
}

/// Dual coefficients of the kernel ridge regression estimate.
#[derive(Clone, Debug)]
pub struct Predictor {
    pub alpha: Vec<f64>,
    /// Requested ridge.
    pub ridge: f64,
    /// Diagonal shift actually added to the Gram matrix (`n * ridge`, or the
    /// ridgeless jitter, possibly escalated).
    pub shift: f64,
    /// `||(K + shift I) alpha - y|| / ||y||`.
    pub residual: f64,
}

fn residual(k: &[f64], n: usize, shift: f64, alpha: &[f64], y: &[f64]) -> Vec<f64> {
    let ka = matvec(k, n, n, alpha);
    (0..n).map(|i| y[i] - ka[i] - shift * alpha[i]).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Solves `(K + n lambda I) alpha = y`. `lambda = 0` substitutes the ridgeless jitter
/// `lambda_0 = 1e-12 trace(K) / n`.
pub fn krr_fit(gram: &GramMatrix, y: &[f64], ridge: f64) -> Result<Predictor> {
    let n = gram.rows();
    if !gram.is_square() || y.len() != n {
        return arg(format!("gram {}x{} incompatible with {} labels", gram.rows(), gram.cols(), y.len()));
    }
    if !(ridge >= 0.0) {
        return arg(format!("ridge {ridge} must be nonnegative"));
    }
    let lambda = if ridge == 0.0 { JITTER_REL * gram.trace() / n as f64 } else { ridge };
    let k = gram.as_slice();
    let chol = Cholesky::factor(k.to_vec(), n, n as f64 * lambda)?;
    let shift = chol.jitter;
    let mut alpha = y.to_vec();
    chol.solve_in_place(&mut alpha);
    let ynorm = norm(y).max(f64::MIN_POSITIVE);
    let mut r = residual(k, n, shift, &alpha, y);
    // Iterative refinement absorbs the rounding of ill-conditioned ridgeless solves.
    for _ in 0..3 {
        if norm(&r) <= 1e-10 * ynorm {
            break;
        }
        chol.solve_in_place(&mut r);
        alpha.iter_mut().zip(&r).for_each(|(a, d)| *a += d);
        r = residual(k, n, shift, &alpha, y);
    }
    Ok(Predictor { alpha, ridge, shift, residual: norm(&r) / ynorm })
}

/// `cross_gram * alpha` for a cross Gram of shape `m x n`.
pub fn predict(pred: &Predictor, cross_gram: &GramMatrix) -> Result<Vec<f64>> {
    if cross_gram.cols() != pred.alpha.len() {
        return arg(format!("cross gram has {} columns for {} coefficients", cross_gram.cols(), pred.alpha.len()));
    }
    Ok(matvec(cross_gram.as_slice(), cross_gram.rows(), cross_gram.cols(), &pred.alpha))
}

/// Mean squared error.
pub fn test_error(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return arg(format!("{} predictions for {} targets", predictions.len(), targets.len()));
    }
    if predictions.is_empty() {
        return arg("test error of an empty set");
    }
    Ok(predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / predictions.len() as f64)
}

/// Log-spaced grid of `count` ridges from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Test error for every ridge in `grid`, and the minimising ridge.
pub fn optimal_ridge(
    gram: &GramMatrix,
    y: &[f64],
    cross_gram: &GramMatrix,
    targets: &[f64],
    grid: &[f64],
) -> Result<(f64, Vec<(f64, f64)>)> {
    if grid.len() < 16 {
        return arg(format!("ridge grid has {} points; at least 16 are required", grid.len()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0]) || w[0] <= 0.0) {
        return arg("ridge grid must be positive and increasing");
    }
    let curve = grid
        .iter()
        .map(|&l| {
            let p = krr_fit(gram, y, l)?;
            Ok((l, test_error(&predict(&p, cross_gram)?, targets)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let best = curve.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1)).map(|c| c.0).unwrap();
    Ok((best, curve))
}

/// Minimum of a sampled curve refined by a parabola through the grid minimum and
/// its neighbours in `(log lambda, log error)`; clamps to the grid ends.
pub fn refine_minimum(curve: &[(f64, f64)]) -> f64 {
    let i = (0..curve.len()).min_by(|&a, &b| curve[a].1.total_cmp(&curve[b].1)).unwrap();
    if i == 0 || i + 1 == curve.len() {
        return curve[i].0;
    }
    let (x0, x1, x2) = (curve[i - 1].0.ln(), curve[i].0.ln(), curve[i + 1].0.ln());
    let (y0, y1, y2) = (curve[i - 1].1.ln(), curve[i].1.ln(), curve[i + 1].1.ln());
    let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
    if a <= 0.0 {
        return curve[i].0;
    }
    (-b / (2.0 * a)).clamp(x0, x2).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RidgePolicy {
    Ridgeless,
    Fixed {
        lambda: f64,
    },
    /// Grid search on the test split; the grid is log-spaced.
    Optimal {
        lo: f64,
        hi: f64,
        points: usize,
    },
}

impl RidgePolicy {
    pub fn grid(&self) -> Option<Vec<f64>> {
        match self {
            RidgePolicy::Optimal { lo, hi, points } => Some(log_grid(*lo, *hi, *points)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub teacher: Kernel,
    pub student: Kernel,
    pub space: InputSpace,
    pub n_list: Vec<usize>,
    pub n_test: usize,
    pub trials: usize,
    pub seed: u64,
    pub ridge: RidgePolicy,
    pub noise_std: f64,
}

impl CurveSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.teacher.arch.input_dim();
        if self.student.arch.input_dim() != d {
            return arg(format!(
                "teacher dimension {d} differs from student dimension {}",
                self.student.arch.input_dim()
            ));
        }
        if let InputSpace::Multisphere { s } = self.space {
            if d % s != 0 {
                return arg(format!("multisphere patch size {s} does not divide d = {d}"));
            }
        }
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[1] <= w[0]) || self.n_list[0] == 0 {
            return arg("n_list must be nonempty, positive and strictly ascending");
        }
        if self.trials < 2 {
            return arg("at least two trials are required");
        }
        if self.n_test == 0 {
            return arg("n_test must be positive");
        }
        if self.noise_std < 0.0 {
            return arg("noise_std must be nonnegative");
        }
        if let RidgePolicy::Optimal { lo, hi, points } = self.ridge {
            if points < 16 || !(lo > 0.0 && hi > lo) {
                return arg("optimal-ridge grid needs >= 16 points and 0 < lo < hi");
            }
        }
        if let RidgePolicy::Fixed { lambda } = self.ridge {
            if !(lambda >= 0.0) {
                return arg("fixed ridge must be nonnegative");
            }
        }
        Ok(())
    }
}

/// Outcome of one `(n, trial)` unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub n: usize,
    pub trial: usize,
    /// Test error at the policy's ridge (`None` for the optimal policy, whose
    /// selection happens across trials).
    pub error: Option<f64>,
    /// `(lambda, error)` over the grid for the optimal policy.
    pub ridge_curve: Option<Vec<(f64, f64)>>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub trials_ok: usize,
    /// Selected ridge for the optimal policy.
    pub lambda_star: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
    pub trials: Vec<TrialOutcome>,
}

/// Runs one unit: sample `n + n_test` points, draw the teacher jointly on them,
/// fit the student on the first `n` and measure the error on the rest against the
/// noiseless field.
pub fn run_trial(spec: &CurveSpec, n_index: usize, trial: usize) -> Result<TrialOutcome> {
    let n = spec.n_list[n_index];
    let total = n + spec.n_test;
    let d = spec.teacher.arch.input_dim();
    let (a, b) = (n_index as u32, trial as u32);
    let mut in_rng = rng::stream(spec.seed, Purpose::Inputs, a, b);
    let inputs = sample_inputs_with(spec.space, d, total, spec.seed, &mut in_rng)?;
    let joint = spec.teacher.gram(&inputs, None)?;
    let matched = spec.teacher == spec.student;
    let (k_train, k_cross) = if matched {
        (joint.block(0..n, 0..n), joint.block(n..total, 0..n))
    } else {
        let train = inputs.slice(0..n);
        let test = inputs.slice(n..total);
        (spec.student.gram(&train, None)?, spec.student.gram(&test, Some(&train))?)
    };
    let field = field_from_gram(joint.into_data(), total, &mut rng::stream(spec.seed, Purpose::Teacher, a, b))?;
    let mut y = field[..n].to_vec();
    if spec.noise_std > 0.0 {
        let mut r = rng::stream(spec.seed, Purpose::Noise, a, b);
        y.iter_mut().for_each(|v| *v += spec.noise_std * r.sample::<f64, _>(StandardNormal));
    }
    let targets = &field[n..];
    let outcome = |error, ridge_curve| TrialOutcome { n, trial, error, ridge_curve, failure: None };
    match &spec.ridge {
        RidgePolicy::Ridgeless | RidgePolicy::Fixed { .. } => {
            let lambda = if let RidgePolicy::Fixed { lambda } = spec.ridge { lambda } else { 0.0 };
            let p = krr_fit(&k_train, &y, lambda)?;
            Ok(outcome(Some(test_error(&predict(&p, &k_cross)?, targets)?), None))
        }
        RidgePolicy::Optimal { .. } => {
            let grid = spec.ridge.grid().unwrap();
            let (_, curve) = optimal_ridge(&k_train, &y, &k_cross, targets, &grid)?;
            Ok(outcome(None, Some(curve)))
        }
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Learning curve over `spec.n_list`. Units run in parallel on the current rayon
/// pool; each draws from its own counter streams, so the result is a pure function
/// of the spec.
pub fn learning_curve(spec: &CurveSpec) -> Result<LearningCurve> {
    spec.validate()?;
    let units: Vec<(usize, usize)> =
        (0..spec.n_list.len()).flat_map(|i| (0..spec.trials).map(move |t| (i, t))).collect();
    let trials: Vec<TrialOutcome> = units
        .par_iter()
        .map(|&(i, t)| {
            run_trial(spec, i, t).unwrap_or_else(|e| {
                log::warn!("trial {t} at n = {} failed: {e}", spec.n_list[i]);
                TrialOutcome {
                    n: spec.n_list[i],
                    trial: t,
                    error: None,
                    ridge_curve: None,
                    failure: Some(e.to_string()),
                }
            })
        })
        .collect();
    let mut points = Vec::with_capacity(spec.n_list.len());
    for &n in &spec.n_list {
        let ok: Vec<&TrialOutcome> = trials.iter().filter(|o| o.n == n && o.failure.is_none()).collect();
        if (ok.len() as f64) < 0.8 * spec.trials as f64 {
            return Err(Error::Numerical(format!("only {} of {} trials survived at n = {n}", ok.len(), spec.trials)));
        }
        let point = match spec.ridge {
            RidgePolicy::Optimal { .. } => {
                let grid = spec.ridge.grid().unwrap();
                let mean_curve: Vec<(f64, f64)> = (0..grid.len())
                    .map(|g| {
                        (
                            grid[g],
                            ok.iter().map(|o| o.ridge_curve.as_ref().unwrap()[g].1).sum::<f64>() / ok.len() as f64,
                        )
                    })
                    .collect();
                let g = (0..grid.len()).min_by(|&a, &b| mean_curve[a].1.total_cmp(&mean_curve[b].1)).unwrap();
                let at_best: Vec<f64> = ok.iter().map(|o| o.ridge_curve.as_ref().unwrap()[g].1).collect();
                let (mean, std) = mean_std(&at_best);
                CurvePoint {
                    n,
                    mean_error: mean,
                    std_error: std,
                    trials_ok: ok.len(),
                    lambda_star: Some(refine_minimum(&mean_curve)),
                }
            }
            _ => {
                let errs: Vec<f64> = ok.iter().map(|o| o.error.unwrap()).collect();
                let (mean, std) = mean_std(&errs);
                CurvePoint { n, mean_error: mean, std_error: std, trials_ok: ok.len(), lambda_star: None }
            }
        };
        points.push(point);
    }
    Ok(LearningCurve { points, trials })
}
