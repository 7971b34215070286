//! Problem builders shared by the benchmarks.

use fracvar_core::assemble::{assemble_system, AssemblyParams, SparseSystem};
use fracvar_core::{graded_interval_mesh, uniform_tri_mesh, ExponentField, PrismMesh};

/// Prism over an `m × m` mesh with `k` layers and an exponent that varies
/// across the triangles.
pub fn prism(m: usize, k: usize) -> PrismMesh {
    PrismMesh::new(uniform_tri_mesh(m), graded_interval_mesh(k, 1.05 / 0.32, 4.0).expect("valid grading"))
}

pub fn exponent(prism: &PrismMesh) -> ExponentField {
    let values = (0..prism.tri.num_triangles()).map(|t| 0.05 + 0.9 * ((t * 37) % 17) as f64 / 16.0).collect();
    ExponentField { values }
}

pub fn system(prism: &PrismMesh) -> SparseSystem {
    let f = |x: [f64; 2]| 0.5 + 0.3 * (6.0 * x[0]).sin() * x[1];
    assemble_system(prism, &exponent(prism), &AssemblyParams { theta: 1e-10, mu: 2900.0 }, &f).expect("assembly")
}
