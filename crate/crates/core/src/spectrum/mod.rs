//! Eigenvalues of multi-dot-product kernels on the multisphere.
//!
//! For `s = 2` the eigenfunctions are products of Fourier modes and the eigenvalues
//! are the coefficients of a `p`-dimensional discrete Fourier transform of
//! `K(cos theta_1, .., cos theta_p)`. For `s >= 3` each axis is projected onto
//! Gegenbauer polynomials with a Gauss–Jacobi rule.

pub mod quadrature;

use std::io::Write;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::geometry::{Architecture, MetaPatchIndex};
use crate::kernels::kernel_on_overlaps;
use quadrature::{gauss_jacobi, gegenbauer_all, sphere_area_ratio};

/// Largest grid (in points) the Fourier path will allocate: 2^27 complex values, 2 GiB.
pub const MAX_GRID_POINTS: usize = 1 << 27;

/// Relative level (to the largest eigenvalue) below which a computed eigenvalue is
/// indistinguishable from zero on the grid.
pub const GRID_ERROR_REL: f64 = 1e-12;

/// Default resolution per transform dimension.
pub fn default_grid_size(p: usize) -> Result<usize> {
    match p {
        1 => Ok(1 << 16),
        2 => Ok(4096),
        3 => Ok(512),
        4 => Ok(64),
        _ => arg(format!("Fourier grids support p <= 4, got {p}")),
    }
}

/// Number of spherical harmonics of degree `k` on `S^{s-1}`.
pub fn degeneracy(k: usize, s: usize) -> Result<u64> {
    if s < 2 {
        return arg(format!("sphere dimension s = {s} must be at least 2"));
    }
    if k == 0 {
        return Ok(1);
    }
    // (2k+s-2)/k * C(s+k-3, k-1), kept exact in integers.
    let binom = binomial((s + k - 3) as u128, (k - 1) as u128);
    let num = (2 * k + s - 2) as u128 * binom;
    u64::try_from(num / k as u128).map_err(|_| Error::Argument(format!("degeneracy of k={k}, s={s} overflows")))
}

fn binomial(n: u128, r: u128) -> u128 {
    let r = r.min(n - r.min(n));
    (0..r).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

pub fn multi_degeneracy(k: &[usize], s: usize) -> Result<u64> {
    k.iter().try_fold(1u64, |acc, &ki| Ok(acc.saturating_mul(degeneracy(ki, s)?)))
}

/// Where a multi-index lives in the sector decomposition.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Sector {
    Constant,
    Layer { layer: usize, location: MetaPatchIndex },
    Null,
}

impl Sector {
    pub fn label(&self, arch: &Architecture) -> String {
        match self {
            Sector::Constant => "constant".into(),
            Sector::Null => "null".into(),
            Sector::Layer { layer, location } => format!("l{layer}@{}", location.flat(arch).unwrap_or(usize::MAX)),
        }
    }

    pub fn layer(&self) -> Option<usize> {
        match self {
            Sector::Layer { layer, .. } => Some(*layer),
            _ => None,
        }
    }
}

/// Smallest layer whose meta-patch contains every nonzero component of `k`.
pub fn classify_sector(k: &[usize], arch: &Architecture) -> Result<Sector> {
    let p = arch.num_patches();
    if k.len() != p {
        return arg(format!("multi-index has {} components, expected {p}", k.len()));
    }
    let nonzero: Vec<usize> = (0..p).filter(|&i| k[i] != 0).collect();
    let (Some(&first), Some(&last)) = (nonzero.first(), nonzero.last()) else {
        return Ok(Sector::Constant);
    };
    for l in 1..=arch.depth() {
        // First-layer patches per layer-l meta-patch.
        let group = arch.meta_patch_len(l) / arch.filter(1);
        if first / group == last / group {
            let location = MetaPatchIndex::from_flat(arch, l, first / group)?;
            return Ok(Sector::Layer { layer: l, location });
        }
    }
    Ok(Sector::Null)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub k: Vec<usize>,
    pub eigenvalue: f64,
    pub sector: Sector,
    pub degeneracy: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTable {
    pub arch: Architecture,
    pub s: usize,
    pub k_max: usize,
    /// `"fourier"` or `"quadrature"`.
    pub method: String,
    /// Grid points (Fourier) or quadrature nodes per axis.
    pub resolution: usize,
    /// Entries for all of `[0, k_max]^p`, first component slowest.
    pub entries: Vec<SpectrumEntry>,
}

impl SpectrumTable {
    pub fn p(&self) -> usize {
        self.arch.num_patches()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.entries.iter().map(|e| e.eigenvalue).fold(0.0, f64::max)
    }

    /// Threshold below which eigenvalues count as numerically zero.
    pub fn grid_error(&self) -> f64 {
        GRID_ERROR_REL * self.max_eigenvalue()
    }

    fn flat_index(&self, k: &[usize]) -> Option<usize> {
        if k.len() != self.p() || k.iter().any(|&v| v > self.k_max) {
            return None;
        }
        Some(k.iter().fold(0, |acc, &v| acc * (self.k_max + 1) + v))
    }

    pub fn get(&self, k: &[usize]) -> Option<&SpectrumEntry> {
        self.flat_index(k).map(|i| &self.entries[i])
    }

    pub fn eigenvalue(&self, k: &[usize]) -> Option<f64> {
        self.get(k).map(|e| e.eigenvalue)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut cw = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.p()).map(|i| format!("k{i}")).collect();
        header.extend(["sector", "eigenvalue", "degeneracy"].map(String::from));
        cw.write_record(&header)?;
        for e in &self.entries {
            let mut rec: Vec<String> = e.k.iter().map(|v| v.to_string()).collect();
            rec.push(e.sector.label(&self.arch));
            rec.push(format!("{:e}", e.eigenvalue));
            rec.push(e.degeneracy.to_string());
            cw.write_record(&rec)?;
        }
        cw.flush()?;
        Ok(())
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "arch": self.arch.fingerprint(),
            "s": self.s,
            "p": self.p(),
            "k_max": self.k_max,
            "method": self.method,
            "resolution": self.resolution,
            "grid_error": self.grid_error(),
            "mercer_residual": mercer_sum_check(self, &self.arch).ok(),
        })
    }
}

fn build_table(
    arch: &Architecture,
    k_max: usize,
    method: &str,
    resolution: usize,
    values: Vec<f64>,
) -> Result<SpectrumTable> {
    let p = arch.num_patches();
    let s = arch.filter(1);
    let mut entries = Vec::with_capacity(values.len());
    let mut k = vec![0usize; p];
    for v in values {
        entries.push(SpectrumEntry {
            k: k.clone(),
            eigenvalue: v,
            sector: classify_sector(&k, arch)?,
            degeneracy: multi_degeneracy(&k, s)?,
        });
        for i in (0..p).rev() {
            k[i] += 1;
            if k[i] <= k_max {
                break;
            }
            k[i] = 0;
        }
    }
    Ok(SpectrumTable { arch: arch.clone(), s, k_max, method: method.into(), resolution, entries })
}

/// Fourier eigenvalues of the kernel of `arch` (requires `s_1 = 2`).
pub fn eigenvalues_fourier(arch: &Architecture, k_max: usize, grid_size: usize) -> Result<SpectrumTable> {
    let a = arch.clone();
    eigenvalues_fourier_fn(arch, k_max, grid_size, move |t| kernel_on_overlaps(&a, t).expect("overlap count matches"))
}

/// Fourier eigenvalues of an arbitrary function `f(t_1, .., t_p)` of the patch
/// cosines, with `arch` supplying `p` and the sector structure.
pub fn eigenvalues_fourier_fn<F>(arch: &Architecture, k_max: usize, grid_size: usize, f: F) -> Result<SpectrumTable>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if arch.filter(1) != 2 {
        return arg("the Fourier path needs filter size s_1 = 2");
    }
    let p = arch.num_patches();
    if p > 4 {
        return arg(format!("Fourier grids support p <= 4, got {p}"));
    }
    let n = grid_size;
    if !n.is_power_of_two() || n < 4 * k_max.max(1) {
        return Err(Error::Resolution(format!(
            "grid size {n} must be a power of two >= 4 k_max = {}; raise the grid or lower k_max",
            4 * k_max.max(1)
        )));
    }
    let total = n.checked_pow(p as u32).filter(|&t| t <= MAX_GRID_POINTS).ok_or_else(|| {
        Error::Resolution(format!(
            "a {n}^{p} grid exceeds the {MAX_GRID_POINTS}-point memory guard; lower the grid size"
        ))
    })?;
    let cos: Vec<f64> = (0..n).map(|j| (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos()).collect();
    let mut grid = vec![Complex::new(0.0, 0.0); total];
    // Last axis is contiguous; evaluate in slabs of the first axis.
    let slab = total / n;
    grid.par_chunks_mut(slab).enumerate().for_each(|(j0, chunk)| {
        let mut t = vec![0.0; p];
        for (r, out) in chunk.iter_mut().enumerate() {
            t[0] = cos[j0];
            let mut rem = r;
            for axis in (1..p).rev() {
                t[axis] = cos[rem % n];
                rem /= n;
            }
            *out = Complex::new(f(&t), 0.0);
        }
    });
    let fft = FftPlanner::new().plan_fft_forward(n);
    for axis in 0..p {
        let stride = n.pow((p - 1 - axis) as u32);
        let block = stride * n;
        // Lines along `axis`: for each block, `stride` interleaved lines.
        grid.par_chunks_mut(block).for_each(|blk| {
            let mut line = vec![Complex::new(0.0, 0.0); n];
            let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            for off in 0..stride {
                for (j, v) in line.iter_mut().enumerate() {
                    *v = blk[off + j * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, v) in line.iter().enumerate() {
                    blk[off + j * stride] = *v;
                }
            }
        });
    }
    let norm = 1.0 / total as f64;
    let kk = k_max + 1;
    let values = (0..kk.pow(p as u32))
        .map(|flat| {
            let mut rem = flat;
            let mut idx = 0;
            let mut mult = 1;
            for _ in 0..p {
                idx += (rem % kk) * mult;
                rem /= kk;
                mult *= n;
            }
            grid[idx].re * norm
        })
        .collect();
    build_table(arch, k_max, "fourier", n, values)
}

/// Gegenbauer-projection eigenvalues of the kernel of `arch` (`p <= 3`).
pub fn eigenvalues_quadrature(arch: &Architecture, k_max: usize, quad_order: usize) -> Result<SpectrumTable> {
    let a = arch.clone();
    eigenvalues_quadrature_fn(arch, k_max, quad_order, move |t| {
        kernel_on_overlaps(&a, t).expect("overlap count matches")
    })
}

pub fn eigenvalues_quadrature_fn<F>(arch: &Architecture, k_max: usize, quad_order: usize, f: F) -> Result<SpectrumTable>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let p = arch.num_patches();
    let s = arch.filter(1);
    if p > 3 {
        return arg(format!("quadrature supports p <= 3, got {p}"));
    }
    if quad_order < 2 * k_max.max(1) {
        return Err(Error::Resolution(format!(
            "quadrature order {quad_order} below 2 k_max = {}; raise the order",
            2 * k_max.max(1)
        )));
    }
    let n = quad_order;
    if n.checked_pow(p as u32).is_none_or(|t| t > MAX_GRID_POINTS) {
        return Err(Error::Resolution(format!("{n}^{p} quadrature nodes exceed the memory guard")));
    }
    let alpha = 0.5 * (s as f64 - 3.0);
    let (nodes, weights) = gauss_jacobi(n, alpha, alpha)?;
    let c = sphere_area_ratio(s);
    let kk = k_max + 1;
    // proj[k * n + j] = c w_j P_{k,s}(t_j)
    let mut proj = vec![0.0; kk * n];
    for j in 0..n {
        let pk = gegenbauer_all(k_max, s, nodes[j]);
        for k in 0..kk {
            proj[k * n + j] = c * weights[j] * pk[k];
        }
    }
    let total = n.pow(p as u32);
    let slab = total / n;
    let mut vals = vec![0.0; total];
    vals.par_chunks_mut(slab).enumerate().for_each(|(j0, chunk)| {
        let mut t = vec![0.0; p];
        for (r, out) in chunk.iter_mut().enumerate() {
            t[0] = nodes[j0];
            let mut rem = r;
            for axis in (1..p).rev() {
                t[axis] = nodes[rem % n];
                rem /= n;
            }
            *out = f(&t);
        }
    });
    // Contract one axis at a time: shape (kk^a, n, n^(p-1-a)) -> (kk^a, kk, n^(p-1-a)).
    let mut cur = vals;
    for axis in 0..p {
        let outer = kk.pow(axis as u32);
        let inner = n.pow((p - 1 - axis) as u32);
        let mut next = vec![0.0; outer * kk * inner];
        next.par_chunks_mut(kk * inner).enumerate().for_each(|(o, dst)| {
            let src = &cur[o * n * inner..(o + 1) * n * inner];
            for k in 0..kk {
                let row = &proj[k * n..(k + 1) * n];
                let out = &mut dst[k * inner..(k + 1) * inner];
                for (j, &w) in row.iter().enumerate() {
                    let line = &src[j * inner..(j + 1) * inner];
                    for (o2, v) in out.iter_mut().zip(line) {
                        *o2 += w * v;
                    }
                }
            }
        });
        cur = next;
    }
    build_table(arch, k_max, "quadrature", n, cur)
}

/// `K(all t = 1) - sum_k Lambda_k N(k)`: the part of the diagonal not captured by
/// the truncated table.
pub fn mercer_sum_check(table: &SpectrumTable, arch: &Architecture) -> Result<f64> {
    let k1 = kernel_on_overlaps(arch, &vec![1.0; arch.num_patches()])?;
    Ok(k1 - table.entries.iter().map(|e| e.eigenvalue * e.degeneracy as f64).sum::<f64>())
}

/// Least-squares line through `(log x, log y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub window: (f64, f64),
}

/// Fits `y = e^intercept x^exponent` over points with `x` inside `window`.
pub fn fit_power_law(points: &[(f64, f64)], window: (f64, f64)) -> Result<PowerLawFit> {
    if window.0 >= window.1 {
        return arg(format!("empty fit window {window:?}"));
    }
    let sel: Vec<(f64, f64)> = points.iter().copied().filter(|&(x, _)| x >= window.0 && x <= window.1).collect();
    if sel.len() < 8 {
        return Err(Error::Resolution(format!("{} points in window {window:?}; need at least 8", sel.len())));
    }
    if let Some(&(x, y)) = sel.iter().find(|&&(x, y)| !(y > 0.0) || !(x > 0.0)) {
        return Err(Error::Domain(format!("nonpositive value {y:e} at {x} inside the fit window")));
    }
    let logs: Vec<(f64, f64)> = sel.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let (b, a, se) = crate::fit::ols(&logs);
    Ok(PowerLawFit { exponent: b, intercept: a, stderr: se, window })
}

/// Default fit window: the octave and a half below `k_max / 2`.
pub fn default_window(k_max: usize) -> (f64, f64) {
    let hi = k_max as f64 / 2.0;
    (hi / 2f64.powf(1.5), hi)
}

/// `(|k|, Lambda)` along the diagonal of the first meta-patch of layer `l`, even
/// `k` only (odd and even components carry different prefactors), dropping values
/// at or below the grid error.
pub fn sector_ray(table: &SpectrumTable, l: usize) -> Result<Vec<(f64, f64)>> {
    let arch = &table.arch;
    if l == 0 || l > arch.depth() {
        return arg(format!("layer {l} outside 1..={}", arch.depth()));
    }
    let width = arch.meta_patch_len(l) / arch.filter(1);
    let floor = table.grid_error();
    let mut out = Vec::new();
    for k in (2..=table.k_max).step_by(2) {
        let mut idx = vec![0; table.p()];
        idx[..width].fill(k);
        let v = table.eigenvalue(&idx).expect("index inside table");
        if v > floor {
            out.push((k as f64, v));
        }
    }
    Ok(out)
}

/// Rank-ordered decay `Lambda(rho)` fitted on the part of the table known to be
/// complete: every eigenvalue above the largest one touching the `k_max` boundary.
pub fn rank_decay(table: &SpectrumTable) -> Result<PowerLawFit> {
    let floor = table.grid_error();
    let boundary =
        table.entries.iter().filter(|e| e.k.contains(&table.k_max)).map(|e| e.eigenvalue).fold(floor, f64::max);
    let mut vals: Vec<(f64, u64)> =
        table.entries.iter().filter(|e| e.eigenvalue > boundary).map(|e| (e.eigenvalue, e.degeneracy)).collect();
    vals.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = Vec::with_capacity(vals.len());
    let mut rank = 0u64;
    for (v, deg) in vals {
        // Centre of the block of ranks this degenerate eigenvalue occupies.
        points.push((rank as f64 + 0.5 * (deg as f64 + 1.0), v));
        rank += deg;
    }
    let top = rank as f64;
    if points.len() < 8 || top < 64.0 {
        return Err(Error::Resolution(format!(
            "only {rank} complete modes above the truncation boundary; tail too short"
        )));
    }
    // The last decade of complete ranks.
    fit_power_law(&points, (top / 10.0, top))
}

/// Parses a sector label written by [`Sector::label`].
pub fn parse_sector(label: &str, arch: &Architecture) -> Result<Sector> {
    match label {
        "constant" => Ok(Sector::Constant),
        "null" => Ok(Sector::Null),
        _ => {
            let bad = || Error::Parse(format!("bad sector label `{label}`"));
            let rest = label.strip_prefix('l').ok_or_else(bad)?;
            let (layer, flat) = rest.split_once('@').ok_or_else(bad)?;
            let layer: usize = layer.parse().map_err(|_| bad())?;
            let flat: usize = flat.parse().map_err(|_| bad())?;
            Ok(Sector::Layer { layer, location: MetaPatchIndex::from_flat(arch, layer, flat)? })
        }
    }
}
