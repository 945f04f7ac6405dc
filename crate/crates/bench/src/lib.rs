//! Shared fixtures for the benchmarks in `benches/`.

use hcnk::geometry::sample_inputs;
use hcnk::{Architecture, GramMatrix, InputBatch, InputSpace, Kernel, Stride};

/// `n` multisphere points for `arch`.
pub fn inputs(arch: &Architecture, n: usize) -> InputBatch {
    sample_inputs(InputSpace::Multisphere { s: arch.filter(1) }, arch, n, 17).expect("sampling")
}

/// Square Gram matrix of `n` points.
pub fn gram(arch: &Architecture, n: usize) -> GramMatrix {
    Kernel::new(arch.clone(), Stride::Filter).gram(&inputs(arch, n), None).expect("gram")
}
