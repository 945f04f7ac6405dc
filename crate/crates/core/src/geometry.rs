//! Architectures, patch and meta-patch indexing, and input sampling.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::rng::{self, Purpose, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rfk,
    Ntk,
}

impl KernelKind {
    /// Smoothness exponent of the kernel at coinciding points.
    pub fn nu(self) -> f64 {
        match self {
            KernelKind::Ntk => 0.5,
            KernelKind::Rfk => 1.5,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ArchitectureRepr {
    kind: KernelKind,
    filters: Vec<usize>,
    #[serde(default = "one")]
    top: usize,
}

fn one() -> usize {
    1
}

/// Hierarchical CNN skeleton: filter sizes `(s_1, .., s_L)`, top multiplicity `p_L`
/// and kernel kind.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ArchitectureRepr", into = "ArchitectureRepr")]
pub struct Architecture {
    filter_sizes: Vec<usize>,
    top_multiplicity: usize,
    kind: KernelKind,
}

impl TryFrom<ArchitectureRepr> for Architecture {
    type Error = Error;
    fn try_from(r: ArchitectureRepr) -> Result<Self> {
        Architecture::new(r.filters, r.top, r.kind)
    }
}

impl From<Architecture> for ArchitectureRepr {
    fn from(a: Architecture) -> Self {
        ArchitectureRepr { kind: a.kind, filters: a.filter_sizes, top: a.top_multiplicity }
    }
}

impl Architecture {
    pub fn new(filter_sizes: Vec<usize>, top_multiplicity: usize, kind: KernelKind) -> Result<Self> {
        if filter_sizes.is_empty() {
            return arg("an architecture needs at least one hidden layer");
        }
        if let Some(s) = filter_sizes.iter().find(|&&s| s < 2) {
            return arg(format!("filter size {s} is below 2"));
        }
        if top_multiplicity == 0 {
            return arg("top multiplicity p_L must be at least 1");
        }
        Ok(Self { filter_sizes, top_multiplicity, kind })
    }

    pub fn ntk(filter_sizes: &[usize], top: usize) -> Result<Self> {
        Self::new(filter_sizes.to_vec(), top, KernelKind::Ntk)
    }

    pub fn rfk(filter_sizes: &[usize], top: usize) -> Result<Self> {
        Self::new(filter_sizes.to_vec(), top, KernelKind::Rfk)
    }

    pub fn with_kind(&self, kind: KernelKind) -> Self {
        Self { kind, ..self.clone() }
    }

    pub fn filter_sizes(&self) -> &[usize] {
        &self.filter_sizes
    }

    /// Filter size of layer `l` (1-based).
    pub fn filter(&self, l: usize) -> usize {
        self.filter_sizes[l - 1]
    }

    pub fn top_multiplicity(&self) -> usize {
        self.top_multiplicity
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    /// Number of hidden layers `L`.
    pub fn depth(&self) -> usize {
        self.filter_sizes.len()
    }

    pub fn nu(&self) -> f64 {
        self.kind.nu()
    }

    pub fn input_dim(&self) -> usize {
        self.top_multiplicity * self.filter_sizes.iter().product::<usize>()
    }

    /// Length of a layer-`l` meta-patch, `prod_{l' <= l} s_l'`.
    pub fn meta_patch_len(&self, l: usize) -> usize {
        self.filter_sizes[..l].iter().product()
    }

    /// Number of layer-`l` patches `p_l = d / prod_{l' <= l} s_l'`.
    pub fn patch_count(&self, l: usize) -> usize {
        self.input_dim() / self.meta_patch_len(l)
    }

    /// `p = p_1`, the number of first-layer patches.
    pub fn num_patches(&self) -> usize {
        self.patch_count(1)
    }

    pub fn effective_dim(&self, l: usize) -> Result<usize> {
        effective_dim(self, l)
    }

    /// Compact identifier, also accepted by `FromStr`: `ntk:2,2x1`.
    pub fn fingerprint(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            KernelKind::Ntk => "ntk",
            KernelKind::Rfk => "rfk",
        };
        let sizes: Vec<String> = self.filter_sizes.iter().map(|s| s.to_string()).collect();
        write!(f, "{kind}:{}x{}", sizes.join(","), self.top_multiplicity)
    }
}

impl FromStr for Architecture {
    type Err = Error;

    /// Parses `kind:s1,s2,...[xP]`, e.g. `ntk:2,2` or `rfk:3,2x2`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("architecture `{s}` is not of the form kind:s1,s2,..[xP]"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let kind = match kind.trim().to_ascii_lowercase().as_str() {
            "ntk" => KernelKind::Ntk,
            "rfk" => KernelKind::Rfk,
            _ => return Err(bad()),
        };
        let (sizes, top) = match rest.split_once('x') {
            Some((a, b)) => (a, b.trim().parse::<usize>().map_err(|_| bad())?),
            None => (rest, 1),
        };
        let sizes =
            sizes.split(',').map(|t| t.trim().parse::<usize>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
        Architecture::new(sizes, top, kind)
    }
}

/// `d_eff(l) = (s_1 - 1) prod_{l'=2..l} s_l'`.
pub fn effective_dim(arch: &Architecture, l: usize) -> Result<usize> {
    if l == 0 || l > arch.depth() {
        return arg(format!("layer {l} outside 1..={}", arch.depth()));
    }
    Ok((arch.filter(1) - 1) * arch.filter_sizes[1..l].iter().product::<usize>())
}

/// Patch extraction scheme of the first layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stride {
    /// Stride equal to the filter size: disjoint patches.
    #[default]
    Filter,
    /// Stride one with circular wrap-around: `d` overlapping patches.
    One,
}

impl Stride {
    /// Maps an integer stride onto the two supported schemes.
    pub fn from_step(step: usize, s1: usize) -> Result<Self> {
        match step {
            1 => Ok(Stride::One),
            s if s == s1 => Ok(Stride::Filter),
            s => arg(format!("stride {s} unsupported; use 1 or the filter size {s1}")),
        }
    }
}

/// Splits `x` into `s`-dimensional patches. With `stride == s` the patches are
/// disjoint; with `stride == 1` there are `d` patches wrapping around the end.
pub fn split_patches(x: &[f64], s: usize, stride: usize) -> Result<Vec<Vec<f64>>> {
    let d = x.len();
    if s == 0 || s > d {
        return arg(format!("patch size {s} invalid for length {d}"));
    }
    if stride == s {
        if d % s != 0 {
            return arg(format!("patch size {s} does not divide {d}"));
        }
        Ok(x.chunks(s).map(<[f64]>::to_vec).collect())
    } else if stride == 1 {
        Ok((0..d).map(|i| (0..s).map(|j| x[(i + j) % d]).collect()).collect())
    } else {
        arg(format!("stride {stride} unsupported; use 1 or {s}"))
    }
}

/// Address of a neuron's receptive field: a layer and the branch indices
/// `(i_{l+1}, .., i_{L+1})` leading from it to the output. Indices are 0-based;
/// the final `i_{L+1}` is omitted when `p_L = 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetaPatchIndex {
    pub layer: usize,
    pub path: Vec<usize>,
}

impl MetaPatchIndex {
    pub fn new(layer: usize, path: Vec<usize>) -> Self {
        Self { layer, path }
    }

    /// Ranges of the branch indices for a layer-`l` address.
    fn ranges(arch: &Architecture, l: usize) -> Vec<usize> {
        let mut r: Vec<usize> = arch.filter_sizes[l..].to_vec();
        if arch.top_multiplicity > 1 {
            r.push(arch.top_multiplicity);
        }
        r
    }

    pub fn validate(&self, arch: &Architecture) -> Result<()> {
        let l = self.layer;
        if l == 0 || l > arch.depth() {
            return arg(format!("layer {l} outside 1..={}", arch.depth()));
        }
        let ranges = Self::ranges(arch, l);
        if ranges.len() != self.path.len() {
            return arg(format!("path {:?} should have {} entries at layer {l}", self.path, ranges.len()));
        }
        for (i, (&b, &r)) in self.path.iter().zip(&ranges).enumerate() {
            if b >= r {
                return arg(format!("branch index {b} at position {i} exceeds range {r}"));
            }
        }
        Ok(())
    }

    /// Position of this meta-patch among the `p_l` meta-patches of its layer.
    pub fn flat(&self, arch: &Architecture) -> Result<usize> {
        self.validate(arch)?;
        let ranges = Self::ranges(arch, self.layer);
        let mut flat = 0;
        for (&b, &r) in self.path.iter().zip(&ranges).rev() {
            flat = flat * r + b;
        }
        Ok(flat)
    }

    pub fn from_flat(arch: &Architecture, layer: usize, mut flat: usize) -> Result<Self> {
        if layer == 0 || layer > arch.depth() {
            return arg(format!("layer {layer} outside 1..={}", arch.depth()));
        }
        if flat >= arch.patch_count(layer) {
            return arg(format!("flat index {flat} exceeds {} meta-patches", arch.patch_count(layer)));
        }
        let path = Self::ranges(arch, layer)
            .into_iter()
            .map(|r| {
                let b = flat % r;
                flat /= r;
                b
            })
            .collect();
        Ok(Self { layer, path })
    }

    /// Coordinate range covered by this meta-patch.
    pub fn span(&self, arch: &Architecture) -> Result<std::ops::Range<usize>> {
        let len = arch.meta_patch_len(self.layer);
        let start = self.flat(arch)? * len;
        Ok(start..start + len)
    }
}

/// The contiguous block of coordinates forming the receptive field `idx`.
pub fn meta_patch<'a>(x: &'a [f64], arch: &Architecture, idx: &MetaPatchIndex) -> Result<&'a [f64]> {
    if x.len() != arch.input_dim() {
        return arg(format!("input has length {}, architecture expects {}", x.len(), arch.input_dim()));
    }
    Ok(&x[idx.span(arch)?])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum InputSpace {
    /// Product of unit spheres `S^{s-1}`, one per `s`-patch.
    Multisphere { s: usize },
    /// Uniform in `[0, 1]^d`.
    Hypercube,
    /// Standard normal in `R^d`.
    Gaussian,
    /// Points read from a file; cannot be sampled.
    External,
}

impl InputSpace {
    pub fn name(&self) -> String {
        match self {
            InputSpace::Multisphere { s } => format!("multisphere{s}"),
            InputSpace::Hypercube => "hypercube".into(),
            InputSpace::Gaussian => "gaussian".into(),
            InputSpace::External => "external".into(),
        }
    }
}

impl FromStr for InputSpace {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "hypercube" | "cube" => Ok(InputSpace::Hypercube),
            "gaussian" | "normal" => Ok(InputSpace::Gaussian),
            "external" => Ok(InputSpace::External),
            _ => t
                .strip_prefix("multisphere")
                .and_then(|r| r.trim_start_matches([':', '=']).parse::<usize>().ok())
                .filter(|&s| s >= 2)
                .map(|s| InputSpace::Multisphere { s })
                .ok_or_else(|| Error::Parse(format!("unknown input space `{s}`"))),
        }
    }
}

/// `n` points in `R^d`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct InputBatch {
    points: Vec<f64>,
    n: usize,
    d: usize,
    pub space: InputSpace,
    pub seed: u64,
}

impl InputBatch {
    pub fn from_rows(points: Vec<f64>, d: usize, space: InputSpace, seed: u64) -> Result<Self> {
        if d == 0 || points.len() % d != 0 {
            return arg(format!("{} values do not form rows of length {d}", points.len()));
        }
        Ok(Self { n: points.len() / d, points, d, space, seed })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }

    /// Rows `range` as a new batch.
    pub fn slice(&self, range: std::ops::Range<usize>) -> InputBatch {
        InputBatch {
            points: self.points[range.start * self.d..range.end * self.d].to_vec(),
            n: range.len(),
            d: self.d,
            space: self.space,
            seed: self.seed,
        }
    }
}

/// Draws `n` points of dimension `arch.input_dim()` from `space`, keyed by `seed`.
pub fn sample_inputs(space: InputSpace, arch: &Architecture, n: usize, seed: u64) -> Result<InputBatch> {
    let mut rng = rng::stream(seed, Purpose::Inputs, 0, 0);
    sample_inputs_with(space, arch.input_dim(), n, seed, &mut rng)
}

/// As [`sample_inputs`] but drawing from a caller-provided stream.
pub fn sample_inputs_with(space: InputSpace, d: usize, n: usize, seed: u64, rng: &mut Rng) -> Result<InputBatch> {
    if n == 0 {
        return arg("need at least one point");
    }
    let mut points = vec![0.0; n * d];
    match space {
        InputSpace::Multisphere { s } => {
            if d % s != 0 {
                return arg(format!("patch size {s} does not divide {d}"));
            }
            for patch in points.chunks_mut(s) {
                loop {
                    for v in patch.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                    let norm = patch.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        patch.iter_mut().for_each(|v| *v /= norm);
                        break;
                    }
                }
            }
        }
        InputSpace::Hypercube => points.iter_mut().for_each(|v| *v = rng.random::<f64>()),
        InputSpace::Gaussian => points.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)),
        InputSpace::External => return arg("external inputs cannot be sampled"),
    }
    InputBatch::from_rows(points, d, space, seed)
}
