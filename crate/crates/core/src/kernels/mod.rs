//! Hierarchical RFK/NTK kernels and Gram matrices.
//!
//! Both the multisphere recursion and its norm-weighted extension to `R^d` share one
//! iterative evaluator: layer-1 values are written into flat buffers and every
//! higher layer compacts them in place by averaging windows of size `s_l`.

mod io;
mod network;

pub use io::{read_gram_binary, read_gram_csv, write_gram_binary, write_gram_csv};
pub use network::{monte_carlo_rfk, monte_carlo_rfk_literal, network_forward, NetworkWeights, DEFAULT_MC_WIDTH};

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::geometry::{Architecture, InputBatch, InputSpace, KernelKind, Stride};
use crate::linalg;

/// Half-width of the band outside `[-1, 1]` that is silently clamped.
pub const CLAMP_BAND: f64 = 1e-9;

fn clamp_checked(t: f64) -> Result<f64> {
    if !(-1.0 - CLAMP_BAND..=1.0 + CLAMP_BAND).contains(&t) {
        return Err(Error::Argument(format!("cosine {t} outside [-1, 1] beyond tolerance")));
    }
    Ok(t.clamp(-1.0, 1.0))
}

/// `kappa_0(t) = (pi - arccos t) / pi`.
pub fn kappa0(t: f64) -> Result<f64> {
    Ok(k0(clamp_checked(t)?))
}

/// `kappa_1(t) = ((pi - arccos t) t + sqrt(1 - t^2)) / pi`.
pub fn kappa1(t: f64) -> Result<f64> {
    Ok(k1(clamp_checked(t)?))
}

/// Cosines this close to 1 are rounding noise of an exact 1; `kappa_0` has a square
/// root singularity there, so a few ulps would otherwise cost ~1e-8.
const SNAP_TO_ONE: f64 = 1.0 - 8.0 * f64::EPSILON;

#[inline]
fn k0(t: f64) -> f64 {
    if t >= SNAP_TO_ONE {
        return 1.0;
    }
    (PI - t.acos()) / PI
}

#[inline]
fn k1(t: f64) -> f64 {
    ((PI - t.acos()) * t + (1.0 - t * t).max(0.0).sqrt()) / PI
}

/// Cosines between corresponding first-layer patches of two multisphere points.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlapTable {
    pub values: Vec<f64>,
}

pub fn overlaps(x: &[f64], y: &[f64], arch: &Architecture) -> Result<OverlapTable> {
    let d = arch.input_dim();
    if x.len() != d || y.len() != d {
        return arg(format!("inputs of length {} and {} for dimension {d}", x.len(), y.len()));
    }
    let s = arch.filter(1);
    let values = x.chunks(s).zip(y.chunks(s)).map(|(a, b)| clamp_checked(dot(a, b))).collect::<Result<Vec<_>>>()?;
    Ok(OverlapTable { values })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Reusable buffers for one kernel evaluation.
#[derive(Default, Clone)]
struct Scratch {
    k: Vec<f64>,
    n: Vec<f64>,
    nx: Vec<f64>,
    ny: Vec<f64>,
}

impl Scratch {
    fn reset(&mut self, len: usize, with_norms: bool) {
        self.k.clear();
        self.n.clear();
        self.k.resize(len, 0.0);
        self.n.resize(len, 0.0);
        if with_norms {
            self.nx.clear();
            self.ny.clear();
            self.nx.resize(len, 0.0);
            self.ny.resize(len, 0.0);
        }
    }
}

/// Runs layers `2..=L` and the final average over whatever is left in `sc`.
/// Without norms every patch is taken to have unit norm.
fn propagate(upper: &[usize], kind: KernelKind, with_norms: bool, sc: &mut Scratch) -> f64 {
    let mut len = sc.k.len();
    for &s in upper {
        let inv = 1.0 / s as f64;
        let m = len / s;
        for j in 0..m {
            let w = j * s..(j + 1) * s;
            let mk = sc.k[w.clone()].iter().sum::<f64>() * inv;
            let (nxy, u) = if with_norms {
                let nx = (sc.nx[w.clone()].iter().map(|v| v * v).sum::<f64>() * inv).sqrt();
                let ny = (sc.ny[w.clone()].iter().map(|v| v * v).sum::<f64>() * inv).sqrt();
                sc.nx[j] = nx;
                sc.ny[j] = ny;
                let nxy = nx * ny;
                (nxy, (mk / nxy).clamp(-1.0, 1.0))
            } else {
                (1.0, mk.clamp(-1.0, 1.0))
            };
            let k = nxy * k1(u);
            if kind == KernelKind::Ntk {
                let mn = sc.n[w].iter().sum::<f64>() * inv;
                sc.n[j] = k + mn * k0(u);
            }
            sc.k[j] = k;
        }
        len = m;
    }
    let top = match kind {
        KernelKind::Rfk => &sc.k[..len],
        KernelKind::Ntk => &sc.n[..len],
    };
    top.iter().sum::<f64>() / len as f64
}

fn recurse_sphere(arch: &Architecture, t: &[f64], sc: &mut Scratch) -> f64 {
    sc.reset(t.len(), false);
    for (i, &ti) in t.iter().enumerate() {
        let ti = ti.clamp(-1.0, 1.0);
        sc.k[i] = k1(ti);
        sc.n[i] = sc.k[i] + ti * k0(ti);
    }
    propagate(&arch.filter_sizes()[1..], arch.kind(), false, sc)
}

fn check_table(arch: &Architecture, table: &OverlapTable) -> Result<()> {
    if table.values.len() != arch.num_patches() {
        return arg(format!("overlap table has {} entries, expected {}", table.values.len(), arch.num_patches()));
    }
    Ok(())
}

/// Random-feature kernel of `arch` on the multisphere, as a function of the patch overlaps.
pub fn rfk(arch: &Architecture, table: &OverlapTable) -> Result<f64> {
    check_table(arch, table)?;
    Ok(recurse_sphere(&arch.with_kind(KernelKind::Rfk), &table.values, &mut Scratch::default()))
}

/// Neural tangent kernel of `arch` on the multisphere.
pub fn ntk(arch: &Architecture, table: &OverlapTable) -> Result<f64> {
    check_table(arch, table)?;
    Ok(recurse_sphere(&arch.with_kind(KernelKind::Ntk), &table.values, &mut Scratch::default()))
}

/// The kernel of `arch` (kind taken from the architecture) on patch overlaps.
pub fn kernel_on_overlaps(arch: &Architecture, t: &[f64]) -> Result<f64> {
    if t.len() != arch.num_patches() {
        return arg(format!("{} overlaps given, expected {}", t.len(), arch.num_patches()));
    }
    Ok(recurse_sphere(arch, t, &mut Scratch::default()))
}

/// Kernel evaluator bound to an architecture and patch stride.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Kernel {
    pub arch: Architecture,
    #[serde(default)]
    pub stride: Stride,
}

impl Kernel {
    pub fn new(arch: Architecture, stride: Stride) -> Self {
        Self { arch, stride }
    }

    /// Evaluates on multisphere points, skipping all norm bookkeeping.
    fn eval_sphere(&self, x: &[f64], y: &[f64], sc: &mut Scratch) -> f64 {
        let s = self.arch.filter(1);
        sc.reset(x.len() / s, false);
        for (i, (a, b)) in x.chunks(s).zip(y.chunks(s)).enumerate() {
            let t = dot(a, b).clamp(-1.0, 1.0);
            let k = k1(t);
            sc.k[i] = k;
            sc.n[i] = k + t * k0(t);
        }
        propagate(&self.arch.filter_sizes()[1..], self.arch.kind(), false, sc)
    }

    fn eval_rd(&self, x: &[f64], y: &[f64], sc: &mut Scratch) -> Result<f64> {
        let s = self.arch.filter(1);
        let d = x.len();
        let count = match self.stride {
            Stride::Filter => d / s,
            Stride::One => d,
        };
        let step = match self.stride {
            Stride::Filter => s,
            Stride::One => 1,
        };
        sc.reset(count, true);
        for i in 0..count {
            let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
            for j in 0..s {
                let c = (i * step + j) % d;
                xy += x[c] * y[c];
                xx += x[c] * x[c];
                yy += y[c] * y[c];
            }
            let (nx, ny) = (xx.sqrt(), yy.sqrt());
            if nx == 0.0 || ny == 0.0 {
                return Err(Error::Domain(format!("patch {i} has zero norm; its angle is undefined")));
            }
            let nxy = nx * ny;
            let t = (xy / nxy).clamp(-1.0, 1.0);
            sc.k[i] = nxy * k1(t);
            sc.n[i] = sc.k[i] + xy * k0(t);
            sc.nx[i] = nx;
            sc.ny[i] = ny;
        }
        Ok(propagate(&self.arch.filter_sizes()[1..], self.arch.kind(), true, sc))
    }

    fn check_dims(&self, x: &[f64], y: &[f64]) -> Result<()> {
        let d = self.arch.input_dim();
        if x.len() != d || y.len() != d {
            return arg(format!("inputs of length {} and {} for dimension {d}", x.len(), y.len()));
        }
        Ok(())
    }

    /// Norm-weighted evaluation valid for arbitrary inputs in `R^d`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dims(x, y)?;
        self.eval_rd(x, y, &mut Scratch::default())
    }

    /// Whether points from `space` may use the unit-norm fast path.
    fn sphere_path(&self, space: InputSpace) -> bool {
        self.stride == Stride::Filter && space == (InputSpace::Multisphere { s: self.arch.filter(1) })
    }

    /// Gram matrix `K(x_i, y_j)`; symmetric (upper triangle mirrored) when `other` is `None`.
    pub fn gram(&self, batch: &InputBatch, other: Option<&InputBatch>) -> Result<GramMatrix> {
        gram(self, batch, other)
    }
}

/// `kernel_rd` with the architecture's kind: norm-weighted recursion on `R^d`.
pub fn kernel_rd(arch: &Architecture, x: &[f64], y: &[f64], stride: Stride) -> Result<f64> {
    Kernel::new(arch.clone(), stride).eval(x, y)
}

/// Symmetric (or rectangular cross) kernel matrix with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    pub arch: String,
    pub space: String,
}

impl GramMatrix {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>, arch: String, space: String) -> Result<Self> {
        if data.len() != rows * cols {
            return arg(format!("{} entries for a {rows}x{cols} matrix", data.len()));
        }
        Ok(Self { rows, cols, data, arch, space })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Copies the block `rows x cols`.
    pub fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> GramMatrix {
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for i in rows.clone() {
            data.extend_from_slice(&self.row(i)[cols.clone()]);
        }
        GramMatrix { rows: rows.len(), cols: cols.len(), data, arch: self.arch.clone(), space: self.space.clone() }
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i + 1..self.cols.min(self.rows) {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Smallest eigenvalue from a dense symmetric eigensolver.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        if !self.is_square() {
            return arg("eigenvalues need a square matrix");
        }
        let ev = linalg::sym_eigenvalues(&self.data, self.rows)?;
        Ok(ev.first().copied().unwrap_or(0.0))
    }

    /// Checks symmetry to `1e-12` and `min eig >= -1e-10 trace / n`.
    pub fn check_invariants(&self) -> Result<()> {
        let asym = self.max_asymmetry();
        if asym > 1e-12 {
            return Err(Error::Numerical(format!("gram asymmetry {asym:e}")));
        }
        let floor = -1e-10 * self.trace() / self.rows as f64;
        let min = self.min_eigenvalue()?;
        if min < floor {
            return Err(Error::Numerical(format!("gram min eigenvalue {min:e} below {floor:e}")));
        }
        Ok(())
    }
}

pub fn gram(kernel: &Kernel, batch: &InputBatch, other: Option<&InputBatch>) -> Result<GramMatrix> {
    let d = kernel.arch.input_dim();
    if batch.dim() != d || other.is_some_and(|o| o.dim() != d) {
        return arg(format!("batch dimension does not match architecture dimension {d}"));
    }
    let (ys, symmetric) = match other {
        Some(o) => (o, false),
        None => (batch, true),
    };
    let fast = kernel.sphere_path(batch.space) && kernel.sphere_path(ys.space);
    let (n, m) = (batch.len(), ys.len());
    let mut data = vec![0.0; n * m];
    data.par_chunks_mut(m.max(1)).enumerate().try_for_each_init(Scratch::default, |sc, (i, row)| {
        let x = batch.row(i);
        let start = if symmetric { i } else { 0 };
        for (j, out) in row.iter_mut().enumerate().skip(start) {
            let y = ys.row(j);
            *out = if fast { kernel.eval_sphere(x, y, sc) } else { kernel.eval_rd(x, y, sc)? };
        }
        Ok::<(), Error>(())
    })?;
    if symmetric {
        for i in 0..n {
            for j in 0..i {
                data[i * n + j] = data[j * n + i];
            }
        }
    }
    let space = if symmetric || batch.space == ys.space {
        batch.space.name()
    } else {
        format!("{}|{}", batch.space.name(), ys.space.name())
    };
    Ok(GramMatrix { rows: n, cols: m, data, arch: kernel.arch.fingerprint(), space })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_inputs, InputSpace};
    use proptest::prelude::*;

    const INV_PI: f64 = 1.0 / PI;

    #[test]
    fn kappa_boundaries() {
        assert_eq!(kappa0(1.0).unwrap(), 1.0);
        assert_eq!(kappa0(-1.0).unwrap(), 0.0);
        assert_eq!(kappa0(0.0).unwrap(), 0.5);
        assert_eq!(kappa1(1.0).unwrap(), 1.0);
        assert_eq!(kappa1(-1.0).unwrap(), 0.0);
        assert!((kappa1(0.0).unwrap() - INV_PI).abs() < 1e-15);
        assert_eq!(kappa1(1.0 + 5e-10).unwrap(), 1.0);
        assert!(kappa0(1.0 + 1e-6).is_err());
        assert!(kappa1(-1.0 - 1e-6).is_err());
        assert!(kappa1(f64::NAN).is_err());
    }

    fn table(v: f64, p: usize) -> OverlapTable {
        OverlapTable { values: vec![v; p] }
    }

    #[test]
    fn recursion_special_values() {
        let a1 = Architecture::ntk(&[2], 3).unwrap();
        let a2 = Architecture::ntk(&[2, 2], 1).unwrap();
        assert!((rfk(&a1, &table(1.0, 3)).unwrap() - 1.0).abs() < 1e-15);
        assert!((rfk(&a2, &table(1.0, 2)).unwrap() - 1.0).abs() < 1e-15);
        assert!(rfk(&a1, &table(-1.0, 3)).unwrap().abs() < 1e-15);
        assert!((rfk(&a2, &table(-1.0, 2)).unwrap() - INV_PI).abs() < 1e-15);
        assert!(ntk(&a1, &table(-1.0, 3)).unwrap().abs() < 1e-15);
        assert!((ntk(&a1, &table(0.0, 3)).unwrap() - INV_PI).abs() < 1e-15);
        for (sizes, expect) in [(vec![2], 2.0), (vec![2, 3], 3.0), (vec![3, 2, 2], 4.0), (vec![2, 2, 2, 2], 5.0)] {
            let a = Architecture::ntk(&sizes, 2).unwrap();
            assert!((ntk(&a, &table(1.0, a.num_patches())).unwrap() - expect).abs() < 1e-12);
        }
        assert!(rfk(&a2, &table(1.0, 3)).is_err());
    }

    #[test]
    fn overlap_examples() {
        let a = Architecture::ntk(&[2], 2).unwrap();
        let x = [1.0, 0.0, 0.0, 1.0];
        let y = [-1.0, 0.0, 0.0, -1.0];
        let z = [0.0, 1.0, 1.0, 0.0];
        assert_eq!(overlaps(&x, &x, &a).unwrap().values, vec![1.0, 1.0]);
        assert_eq!(overlaps(&x, &y, &a).unwrap().values, vec![-1.0, -1.0]);
        assert_eq!(overlaps(&x, &z, &a).unwrap().values, vec![0.0, 0.0]);
        assert!(overlaps(&x[..2], &x, &a).is_err());
    }

    /// Direct transcription of the R^d definition, written without the shared
    /// evaluator: explicit per-layer vectors and norms recomputed from raw patches.
    fn reference_rd(sizes: &[usize], kind: KernelKind, x: &[f64], y: &[f64]) -> f64 {
        let s1 = sizes[0];
        let patches = |v: &[f64]| -> Vec<Vec<f64>> { v.chunks(s1).map(|c| c.to_vec()).collect() };
        let (px, py) = (patches(x), patches(y));
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut nx: Vec<f64> = px.iter().map(|p| norm(p)).collect();
        let mut ny: Vec<f64> = py.iter().map(|p| norm(p)).collect();
        let mut kr = Vec::new();
        let mut kn = Vec::new();
        for i in 0..px.len() {
            let xy: f64 = px[i].iter().zip(&py[i]).map(|(a, b)| a * b).sum();
            let t = xy / (nx[i] * ny[i]);
            let k1v = ((PI - t.acos()) * t + (1.0 - t * t).sqrt()) / PI;
            let k0v = (PI - t.acos()) / PI;
            kr.push(nx[i] * ny[i] * k1v);
            kn.push(nx[i] * ny[i] * k1v + xy * k0v);
        }
        for &s in &sizes[1..] {
            let mut kr2 = Vec::new();
            let mut kn2 = Vec::new();
            let mut nx2 = Vec::new();
            let mut ny2 = Vec::new();
            for j in 0..kr.len() / s {
                let a = (j * s..(j + 1) * s).map(|i| nx[i] * nx[i]).sum::<f64>() / s as f64;
                let b = (j * s..(j + 1) * s).map(|i| ny[i] * ny[i]).sum::<f64>() / s as f64;
                let (a, b) = (a.sqrt(), b.sqrt());
                let mr = (j * s..(j + 1) * s).map(|i| kr[i]).sum::<f64>() / s as f64;
                let mn = (j * s..(j + 1) * s).map(|i| kn[i]).sum::<f64>() / s as f64;
                let u = (mr / (a * b)).clamp(-1.0, 1.0);
                let r = a * b * ((PI - u.acos()) * u + (1.0 - u * u).sqrt()) / PI;
                kr2.push(r);
                kn2.push(r + mn * (PI - u.acos()) / PI);
                nx2.push(a);
                ny2.push(b);
            }
            kr = kr2;
            kn = kn2;
            nx = nx2;
            ny = ny2;
        }
        let top = if kind == KernelKind::Rfk { kr } else { kn };
        top.iter().sum::<f64>() / top.len() as f64
    }

    #[test]
    fn rd_matches_reference_transcription() {
        for kind in [KernelKind::Ntk, KernelKind::Rfk] {
            let a = Architecture::new(vec![2, 2], 1, kind).unwrap();
            let b = sample_inputs(InputSpace::Hypercube, &a, 10, 4).unwrap();
            for i in 0..5 {
                let (x, y) = (b.row(2 * i), b.row(2 * i + 1));
                let got = kernel_rd(&a, x, y, Stride::Filter).unwrap();
                let want = reference_rd(&[2, 2], kind, x, y);
                assert!((got - want).abs() < 1e-13, "{kind:?}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn rd_scaled_copy_reduces_to_norm_products() {
        let a = Architecture::rfk(&[2], 3).unwrap();
        let x = [0.3, 0.9, 0.2, 0.5, 0.7, 0.1];
        let c = 2.5;
        let y: Vec<f64> = x.iter().map(|v| c * v).collect();
        let want = x.chunks(2).map(|p| c * (p[0] * p[0] + p[1] * p[1])).sum::<f64>() / 3.0;
        assert!((kernel_rd(&a, &x, &y, Stride::Filter).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn rd_rejects_zero_patch() {
        let a = Architecture::ntk(&[2], 2).unwrap();
        let x = [0.0, 0.0, 1.0, 1.0];
        assert!(matches!(kernel_rd(&a, &x, &x, Stride::Filter), Err(Error::Domain(_))));
    }

    #[test]
    fn gram_examples() {
        let a = Architecture::rfk(&[2, 2], 1).unwrap();
        let k = Kernel::new(a.clone(), Stride::Filter);
        let one = sample_inputs(InputSpace::Multisphere { s: 2 }, &a, 1, 0).unwrap();
        let g = k.gram(&one, None).unwrap();
        assert!((g.get(0, 0) - 1.0).abs() < 1e-15);

        let b = sample_inputs(InputSpace::Multisphere { s: 2 }, &a, 3, 0).unwrap();
        let mut rows = b.as_slice().to_vec();
        rows.extend_from_slice(b.row(1));
        let dup = InputBatch::from_rows(rows, 4, b.space, 0).unwrap();
        let g = k.gram(&dup, None).unwrap();
        for j in 0..4 {
            assert_eq!(g.get(1, j), g.get(3, j));
        }
        g.check_invariants().unwrap();

        let big = sample_inputs(InputSpace::Multisphere { s: 2 }, &a.with_kind(KernelKind::Ntk), 64, 5).unwrap();
        let g = Kernel::new(a.with_kind(KernelKind::Ntk), Stride::Filter).gram(&big, None).unwrap();
        assert!(g.min_eigenvalue().unwrap() >= -1e-10 * g.trace() / 64.0);
        g.check_invariants().unwrap();
    }

    #[test]
    fn cross_gram_matches_pointwise() {
        let a = Architecture::ntk(&[2, 2], 2).unwrap();
        let k = Kernel::new(a.clone(), Stride::One);
        let x = sample_inputs(InputSpace::Hypercube, &a, 4, 1).unwrap();
        let y = sample_inputs(InputSpace::Hypercube, &a, 3, 2).unwrap();
        let g = k.gram(&x, Some(&y)).unwrap();
        assert_eq!((g.rows(), g.cols()), (4, 3));
        for i in 0..4 {
            for j in 0..3 {
                assert_eq!(g.get(i, j), k.eval(x.row(i), y.row(j)).unwrap());
            }
        }
    }

    #[test]
    fn stride_one_uses_wrapped_patches() {
        // Stride one on a shallow kernel averages over all d wrapped patches.
        let a = Architecture::rfk(&[2], 2).unwrap();
        let x = [0.2, 0.4, 0.6, 0.8];
        let y = [0.9, 0.1, 0.3, 0.7];
        let patches_x = crate::geometry::split_patches(&x, 2, 1).unwrap();
        let patches_y = crate::geometry::split_patches(&y, 2, 1).unwrap();
        let want = patches_x
            .iter()
            .zip(&patches_y)
            .map(|(p, q)| {
                let (np, nq) = (dot(p, p).sqrt(), dot(q, q).sqrt());
                np * nq * k1(dot(p, q) / (np * nq))
            })
            .sum::<f64>()
            / 4.0;
        assert!((kernel_rd(&a, &x, &y, Stride::One).unwrap() - want).abs() < 1e-15);
    }

    fn arch_strategy() -> impl Strategy<Value = Architecture> {
        (prop::collection::vec(2usize..4, 1..4), 1usize..3, any::<bool>()).prop_map(|(s, p, ntk)| {
            Architecture::new(s, p, if ntk { KernelKind::Ntk } else { KernelKind::Rfk }).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kappas_monotone(a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(kappa0(lo).unwrap() <= kappa0(hi).unwrap());
            prop_assert!(kappa1(lo).unwrap() <= kappa1(hi).unwrap());
            // Convexity of kappa_1 at the midpoint.
            let mid = kappa1(0.5 * (lo + hi)).unwrap();
            prop_assert!(mid <= 0.5 * (kappa1(lo).unwrap() + kappa1(hi).unwrap()) + 1e-15);
        }

        #[test]
        fn symmetric_bounded_and_maximal_on_diagonal(a in arch_strategy(), seed in any::<u64>()) {
            let b = sample_inputs(InputSpace::Multisphere { s: a.filter(1) }, &a, 2, seed).unwrap();
            let k = Kernel::new(a.clone(), Stride::Filter);
            let g = k.gram(&b, None).unwrap();
            let (x, y) = (b.row(0), b.row(1));
            let xy = k.eval(x, y).unwrap();
            prop_assert_eq!(xy.to_bits(), k.eval(y, x).unwrap().to_bits());
            let bound = match a.kind() { KernelKind::Rfk => 1.0, KernelKind::Ntk => (a.depth() + 1) as f64 };
            prop_assert!((g.get(0, 0) - bound).abs() < 1e-12, "diag {} bound {}", g.get(0, 0), bound);
            prop_assert!(g.get(0, 1) <= bound + 1e-12);
            prop_assert!(g.get(0, 1).abs() <= bound + 1e-12);
            if a.kind() == KernelKind::Rfk { prop_assert!(g.get(0, 1) >= 0.0); }
        }

        #[test]
        fn rd_restricts_to_multisphere(a in arch_strategy(), seed in any::<u64>()) {
            let b = sample_inputs(InputSpace::Multisphere { s: a.filter(1) }, &a, 2, seed).unwrap();
            let (x, y) = (b.row(0), b.row(1));
            let t = overlaps(x, y, &a).unwrap();
            let sphere = match a.kind() { KernelKind::Rfk => rfk(&a, &t).unwrap(), KernelKind::Ntk => ntk(&a, &t).unwrap() };
            prop_assert!((kernel_rd(&a, x, y, Stride::Filter).unwrap() - sphere).abs() < 1e-12);
        }

        #[test]
        fn window_permutation_invariance(seed in any::<u64>(), perm in 0usize..6) {
            // Permute the three children of the first layer-2 node identically in x and y.
            let a = Architecture::ntk(&[2, 3], 2).unwrap();
            let b = sample_inputs(InputSpace::Multisphere { s: 2 }, &a, 2, seed).unwrap();
            let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let permute = |v: &[f64]| {
                let mut out = v.to_vec();
                for (dst, &src) in orders[perm].iter().enumerate() {
                    out[2 * dst..2 * dst + 2].copy_from_slice(&v[2 * src..2 * src + 2]);
                }
                out
            };
            let k = Kernel::new(a, Stride::Filter);
            let base = k.eval(b.row(0), b.row(1)).unwrap();
            let moved = k.eval(&permute(b.row(0)), &permute(b.row(1))).unwrap();
            prop_assert!((base - moved).abs() < 1e-14);
        }

        #[test]
        fn random_grams_are_psd(seed in any::<u64>(), cube in any::<bool>()) {
            let a = Architecture::ntk(&[2, 2], 1).unwrap();
            let space = if cube { InputSpace::Hypercube } else { InputSpace::Multisphere { s: 2 } };
            let b = sample_inputs(space, &a, 24, seed).unwrap();
            let g = Kernel::new(a, Stride::Filter).gram(&b, None).unwrap();
            prop_assert!(g.check_invariants().is_ok());
        }
    }
}
