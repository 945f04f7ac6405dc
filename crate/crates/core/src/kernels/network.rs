//! Finite-width hierarchical network and Monte-Carlo estimates of its covariance.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{arg, Result};
use crate::geometry::Architecture;
use crate::linalg;
use crate::rng::{self, Purpose, Rng};

pub const DEFAULT_MC_WIDTH: usize = 1024;

#[inline]
fn relu(z: f64) -> f64 {
    std::f64::consts::SQRT_2 * z.max(0.0)
}

/// Weights of a network with widths `H_1..H_L`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkWeights {
    widths: Vec<usize>,
    /// `H_1 x s_1`.
    pub first: Vec<f64>,
    /// For `l = 2..=L`: `H_l x H_{l-1} x s_l`.
    pub hidden: Vec<Vec<f64>>,
    /// `H_L x p_L`.
    pub readout: Vec<f64>,
}

impl NetworkWeights {
    fn shapes(arch: &Architecture, widths: &[usize]) -> Result<(usize, Vec<usize>, usize)> {
        if widths.len() != arch.depth() || widths.contains(&0) {
            return arg(format!("need {} positive widths, got {widths:?}", arch.depth()));
        }
        let first = widths[0] * arch.filter(1);
        let hidden = (2..=arch.depth()).map(|l| widths[l - 1] * widths[l - 2] * arch.filter(l)).collect();
        let readout = widths[arch.depth() - 1] * arch.top_multiplicity();
        Ok((first, hidden, readout))
    }

    pub fn zeros(arch: &Architecture, widths: &[usize]) -> Result<Self> {
        let (f, h, r) = Self::shapes(arch, widths)?;
        Ok(Self {
            widths: widths.to_vec(),
            first: vec![0.0; f],
            hidden: h.iter().map(|&k| vec![0.0; k]).collect(),
            readout: vec![0.0; r],
        })
    }

    /// I.i.d. standard normal weights.
    pub fn sample(arch: &Architecture, widths: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut w = Self::zeros(arch, widths)?;
        let mut fill = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
        fill(&mut w.first);
        w.hidden.iter_mut().for_each(&mut fill);
        fill(&mut w.readout);
        Ok(w)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }
}

/// Output of the finite-width network on input `x`.
pub fn network_forward(arch: &Architecture, widths: &[usize], w: &NetworkWeights, x: &[f64]) -> Result<f64> {
    let (f, h, r) = NetworkWeights::shapes(arch, widths)?;
    if w.widths != widths || w.first.len() != f || w.readout.len() != r || w.hidden.iter().map(Vec::len).ne(h) {
        return arg("weights do not match architecture and widths");
    }
    if x.len() != arch.input_dim() {
        return arg(format!("input length {} != {}", x.len(), arch.input_dim()));
    }
    let s1 = arch.filter(1);
    let p1 = arch.num_patches();
    // act[h * p + i]: post-activation of neuron h at position i.
    let mut act = vec![0.0; widths[0] * p1];
    for hh in 0..widths[0] {
        let wh = &w.first[hh * s1..(hh + 1) * s1];
        for (i, patch) in x.chunks(s1).enumerate() {
            act[hh * p1 + i] = relu(wh.iter().zip(patch).map(|(a, b)| a * b).sum());
        }
    }
    let mut p = p1;
    for l in 2..=arch.depth() {
        let (hp, hl, s) = (widths[l - 2], widths[l - 1], arch.filter(l));
        let pn = p / s;
        let norm = 1.0 / ((hp * s) as f64).sqrt();
        let wl = &w.hidden[l - 2];
        let mut next = vec![0.0; hl * pn];
        for hh in 0..hl {
            for i in 0..pn {
                let mut z = 0.0;
                for h2 in 0..hp {
                    let wv = &wl[(hh * hp + h2) * s..(hh * hp + h2 + 1) * s];
                    let fv = &act[h2 * p + i * s..h2 * p + (i + 1) * s];
                    z += wv.iter().zip(fv).map(|(a, b)| a * b).sum::<f64>();
                }
                next[hh * pn + i] = relu(z * norm);
            }
        }
        act = next;
        p = pn;
    }
    let hl = widths[arch.depth() - 1];
    let out: f64 = w.readout.iter().zip(&act).map(|(a, b)| a * b).sum();
    Ok(out / ((hl * p) as f64).sqrt())
}

fn mc_checks(arch: &Architecture, widths: &[usize], n_samples: usize, x: &[f64], y: &[f64]) -> Result<()> {
    if n_samples < 100 {
        return arg(format!("{n_samples} samples requested; at least 100 are required"));
    }
    NetworkWeights::shapes(arch, widths)?;
    if x.len() != arch.input_dim() || y.len() != arch.input_dim() {
        return arg("input dimension mismatch");
    }
    Ok(())
}

fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One joint draw of `(f(x), f(y))` layer by layer.
///
/// Given the post-activations of layer `l-1`, the preactivations of a layer-`l`
/// neuron at every (input, position) pair are jointly Gaussian with covariance
/// `F F^T / (H_{l-1} s_l)`, where row `F_r` holds the window of activations feeding
/// position `r`. Drawing them from that covariance has the same law as drawing the
/// `H_{l-1} s_l` weights of the neuron, at a fraction of the cost. The first layer
/// and the readout are sampled literally.
fn conditional_draw(arch: &Architecture, widths: &[usize], inputs: [&[f64]; 2], rng: &mut Rng) -> Result<[f64; 2]> {
    let s1 = arch.filter(1);
    let p1 = arch.num_patches();
    // act[a][h * p + i]
    let mut act = [vec![0.0; widths[0] * p1], vec![0.0; widths[0] * p1]];
    let mut wv = vec![0.0; s1];
    for hh in 0..widths[0] {
        wv.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        for (a, x) in inputs.iter().enumerate() {
            for (i, patch) in x.chunks(s1).enumerate() {
                act[a][hh * p1 + i] = relu(wv.iter().zip(patch).map(|(u, v)| u * v).sum());
            }
        }
    }
    let mut p = p1;
    for l in 2..=arch.depth() {
        let (hp, hl, s) = (widths[l - 2], widths[l - 1], arch.filter(l));
        let pn = p / s;
        let rows = 2 * pn;
        let scale = 1.0 / (hp * s) as f64;
        let mut cov = vec![0.0; rows * rows];
        for r in 0..rows {
            let (a, i) = (r / pn, r % pn);
            for q in r..rows {
                let (b, j) = (q / pn, q % pn);
                let mut c = 0.0;
                for h2 in 0..hp {
                    let u = &act[a][h2 * p + i * s..h2 * p + (i + 1) * s];
                    let v = &act[b][h2 * p + j * s..h2 * p + (j + 1) * s];
                    c += u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
                }
                cov[r * rows + q] = c * scale;
                cov[q * rows + r] = c * scale;
            }
        }
        let (vals, vecs) = linalg::sym_eigen(&cov, rows)?;
        let roots: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
        let mut next = [vec![0.0; hl * pn], vec![0.0; hl * pn]];
        let mut g = vec![0.0; rows];
        for hh in 0..hl {
            g.iter_mut().zip(&roots).for_each(|(v, r)| *v = r * rng.sample::<f64, _>(StandardNormal));
            for r in 0..rows {
                let z: f64 = (0..rows).map(|k| vecs[k * rows + r] * g[k]).sum();
                next[r / pn][hh * pn + r % pn] = relu(z);
            }
        }
        act = next;
        p = pn;
    }
    let hl = widths[arch.depth() - 1];
    let norm = 1.0 / ((hl * p) as f64).sqrt();
    let mut out = [0.0; 2];
    for (a, b) in act[0][..hl * p].iter().zip(&act[1][..hl * p]) {
        let w: f64 = rng.sample(StandardNormal);
        out[0] += w * a;
        out[1] += w * b;
    }
    Ok([out[0] * norm, out[1] * norm])
}

/// Monte-Carlo estimate of `E[f(x) f(y)]` over random initialisations, returned
/// with its standard error. Sample `i` uses its own counter stream, so the result
/// does not depend on the number of threads.
pub fn monte_carlo_rfk(
    arch: &Architecture,
    widths: &[usize],
    n_samples: usize,
    x: &[f64],
    y: &[f64],
    seed: u64,
) -> Result<(f64, f64)> {
    mc_checks(arch, widths, n_samples, x, y)?;
    let prods = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, Purpose::MonteCarlo, 0, i as u32);
            conditional_draw(arch, widths, [x, y], &mut rng).map(|[a, b]| a * b)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_and_stderr(&prods))
}

/// Same estimate obtained by sampling every weight and running [`network_forward`].
/// Costs `O(H^2)` normals per sample; meant for small widths.
pub fn monte_carlo_rfk_literal(
    arch: &Architecture,
    widths: &[usize],
    n_samples: usize,
    x: &[f64],
    y: &[f64],
    seed: u64,
) -> Result<(f64, f64)> {
    mc_checks(arch, widths, n_samples, x, y)?;
    let prods = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, Purpose::Weights, 0, i as u32);
            let w = NetworkWeights::sample(arch, widths, &mut rng)?;
            Ok(network_forward(arch, widths, &w, x)? * network_forward(arch, widths, &w, y)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_and_stderr(&prods))
}
