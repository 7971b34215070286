//! Adaptive selection of the piecewise-constant exponent field.
//!
//! The TV-smoothed image is interpolated onto the current triangulation, its
//! elementwise gradient feeds the edge indicator
//! `E(g; λ) = 1 - 1/(1 + |g|²/λ²)`, Dörfler marking selects triangles, and
//! newest-vertex bisection refines them. After the last round the exponent
//! is `S = 1 - E(g; ν)`, clamped into `[S_FLOOR, S_MAX]`.
//!
//! Gradients are taken with respect to the unit-square coordinates and
//! multiplied by `grad_scale` before entering either indicator. Triangles
//! whose diameter is below `min_diameter_px` pixel widths are left out of the
//! marking: the interpolant of a pixel image has no detail below that scale.

use rayon::prelude::*;

use crate::assemble::p1_gradients;
use crate::error::{ensure, Result};
use crate::imgio::{sample_bilinear, ImageGrid};
use crate::mesh::{bisect, signed_area, TriMesh};
use crate::tv::{tv_denoise, TvConfig, TvOutput};

pub const S_FLOOR: f64 = 1e-3;
pub const S_MAX: f64 = 1.0 - 1e-3;

/// Per-triangle exponent `s_E`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentField {
    pub values: Vec<f64>,
}

impl ExponentField {
    pub fn constant(mesh: &TriMesh, s: f64) -> Self {
        Self { values: vec![s; mesh.num_triangles()] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorField {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectParams {
    pub zeta: f64,
    pub tol_tv: f64,
    pub tv_max_iter: usize,
    pub n_refine: usize,
    pub lambda: f64,
    pub beta: f64,
    pub nu: f64,
    /// Multiplies every gradient before it enters an edge indicator.
    pub grad_scale: f64,
    /// Smallest diameter, in pixel widths, a triangle may have and still be
    /// marked; 0 refines without limit.
    pub min_diameter_px: f64,
}

impl Default for SelectParams {
    fn default() -> Self {
        Self {
            zeta: 0.2,
            tol_tv: 1e-4,
            tv_max_iter: 100_000,
            n_refine: 8,
            lambda: 300.0,
            beta: 0.99,
            nu: 200.0,
            grad_scale: 16.0,
            min_diameter_px: 0.7,
        }
    }
}

impl SelectParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.zeta > 0.0, "zeta must be positive");
        ensure!(self.tol_tv > 0.0, "tol_tv must be positive");
        ensure!(self.lambda > 0.0, "lambda must be positive");
        ensure!(self.nu > 0.0, "nu must be positive");
        ensure!(self.grad_scale > 0.0, "grad_scale must be positive");
        ensure!(self.min_diameter_px >= 0.0, "min_diameter_px must be non-negative");
        ensure!(self.beta > 0.0 && self.beta <= 1.0, "beta must lie in (0,1], got {}", self.beta);
        Ok(())
    }
}

/// Statistics of one refinement round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundStats {
    pub round: usize,
    pub triangles: usize,
    pub vertices: usize,
    pub marked: usize,
    pub estimator_max: f64,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub mesh: TriMesh,
    pub s: ExponentField,
    pub u_tv: TvOutput,
    pub rounds: Vec<RoundStats>,
}

impl Selection {
    /// `round,triangles,vertices,marked,estimator_max` followed by a final
    /// row of S statistics.
    pub fn rounds_csv(&self) -> String {
        let mut out = String::from("round,triangles,vertices,marked,estimator_max\n");
        for r in &self.rounds {
            out.push_str(&format!("{},{},{},{},{:e}\n", r.round, r.triangles, r.vertices, r.marked, r.estimator_max));
        }
        out
    }

    /// `(min, median, max)` of S.
    pub fn s_stats(&self) -> (f64, f64, f64) {
        let mut v = self.s.values.clone();
        v.sort_by(f64::total_cmp);
        (v[0], v[v.len() / 2], v[v.len() - 1])
    }
}

pub fn interpolate_to_mesh(grid: &ImageGrid, mesh: &TriMesh) -> Vec<f64> {
    mesh.vertices.iter().map(|&p| sample_bilinear(grid, p)).collect()
}

pub fn element_gradients(mesh: &TriMesh, nodal: &[f64]) -> Result<Vec<[f64; 2]>> {
    ensure!(nodal.len() == mesh.num_vertices(), "nodal vector length does not match mesh");
    (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let p = mesh.corners(t);
            let area = signed_area(p[0], p[1], p[2]);
            ensure!(area > 0.0, "triangle {t} is degenerate");
            let g = p1_gradients(p, area);
            let v = mesh.triangles[t];
            let mut out = [0.0; 2];
            for i in 0..3 {
                out[0] += nodal[v[i]] * g[i][0];
                out[1] += nodal[v[i]] * g[i][1];
            }
            Ok(out)
        })
        .collect()
}

#[inline]
pub fn edge_indicator(grad_norm_sq: f64, lambda: f64) -> f64 {
    let q = grad_norm_sq / (lambda * lambda);
    // 1 - 1/(1+q) without cancellation for small q
    q / (1.0 + q)
}

pub fn edge_estimator(grads: &[[f64; 2]], lambda: f64) -> EstimatorField {
    EstimatorField { values: grads.iter().map(|g| edge_indicator(g[0] * g[0] + g[1] * g[1], lambda)).collect() }
}

/// Smallest set carrying a `beta` fraction of the total squared estimator,
/// taken greedily in descending order with ties by ascending index.
pub fn dorfler_mark(est: &EstimatorField, beta: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..est.values.len()).collect();
    order.sort_by(|&a, &b| est.values[b].total_cmp(&est.values[a]).then(a.cmp(&b)));
    // summing in sorted order makes beta = 1 reach the total exactly
    let total: f64 = order.iter().map(|&t| est.values[t].powi(2)).sum();
    if total == 0.0 {
        return Vec::new();
    }
    let target = beta * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for t in order {
        if acc >= target {
            break;
        }
        acc += est.values[t].powi(2);
        marked.push(t);
    }
    marked
}

/// `S = clamp(1 - E(g; ν), S_FLOOR, S_MAX)` per triangle.
pub fn exponent_from_gradients(grads: &[[f64; 2]], nu: f64) -> ExponentField {
    ExponentField {
        values: grads
            .iter()
            .map(|g| (1.0 - edge_indicator(g[0] * g[0] + g[1] * g[1], nu)).clamp(S_FLOOR, S_MAX))
            .collect(),
    }
}

pub fn select_s(grid: &ImageGrid, params: &SelectParams, mesh0: &TriMesh) -> Result<Selection> {
    params.validate()?;
    let tv_cfg = TvConfig { zeta: params.zeta, tol: params.tol_tv, max_iter: params.tv_max_iter, ..TvConfig::default() };
    let u_tv = tv_denoise(grid, &tv_cfg)?;
    select_s_from_smoothed(u_tv, params, mesh0)
}

/// Refinement loop and exponent assignment given an already smoothed image.
pub fn select_s_from_smoothed(u_tv: TvOutput, params: &SelectParams, mesh0: &TriMesh) -> Result<Selection> {
    params.validate()?;
    let scaled = |mesh: &TriMesh| -> Result<Vec<[f64; 2]>> {
        let nodal = interpolate_to_mesh(&u_tv.image, mesh);
        let mut g = element_gradients(mesh, &nodal)?;
        g.iter_mut().for_each(|v| *v = [v[0] * params.grad_scale, v[1] * params.grad_scale]);
        Ok(g)
    };
    let img = &u_tv.image;
    let min_diameter = params.min_diameter_px / img.width().min(img.height()) as f64;
    let mut mesh = mesh0.clone();
    let mut rounds = Vec::with_capacity(params.n_refine);
    for round in 0..params.n_refine {
        let grads = scaled(&mesh)?;
        let mut est = edge_estimator(&grads, params.lambda);
        let estimator_max = est.values.iter().cloned().fold(0.0, f64::max);
        if min_diameter > 0.0 {
            for (t, e) in est.values.iter_mut().enumerate() {
                if mesh.diameter(t) < min_diameter {
                    *e = 0.0;
                }
            }
        }
        let marked = dorfler_mark(&est, params.beta);
        rounds.push(RoundStats {
            round,
            triangles: mesh.num_triangles(),
            vertices: mesh.num_vertices(),
            marked: marked.len(),
            estimator_max,
        });
        if marked.is_empty() {
            continue;
        }
        mesh = bisect(&mesh, &marked)?;
    }
    let grads = scaled(&mesh)?;
    let s = exponent_from_gradients(&grads, params.nu);
    Ok(Selection { mesh, s, u_tv, rounds })
}
