//! Prism finite-element assembly of the truncated weighted extension problem
//!
//! ```text
//! ∫_{Ω×(0,τ)} y^δ(x) (∇V·∇W + θ V W) + μ ∫_Ω s(x)² V(·,0) W(·,0) = μ ∫_Ω s(x)² f W(·,0)
//! ```
//!
//! with `δ = 1 - 2s` constant per triangle. On a prism `E × (a,b)` the
//! weight depends on `y` only, so every element integral factors into a
//! P1 triangle matrix times a 2×2 weighted interval matrix, and the interval
//! matrices are closed-form moments of `y^δ`.

use rayon::prelude::*;

use crate::error::{ensure, Result};
use crate::imgio::Field2d;
use crate::mesh::{signed_area, Point, PrismMesh, TriMesh};
use crate::sparse::CsrMatrix;
use crate::sselect::ExponentField;

pub type Mat2 = [[f64; 2]; 2];
pub type Mat3 = [[f64; 3]; 3];

/// `∫_a^b y^(δ+p) dy`.
pub fn y_moment(a: f64, b: f64, delta: f64, p: u32) -> f64 {
    let e = delta + p as f64 + 1.0;
    debug_assert!(e > 0.0 && b > a && a >= 0.0);
    if a == 0.0 {
        b.powf(e) / e
    } else {
        // a^e (exp(e ln(b/a)) - 1) / e keeps accuracy for e → 0
        a.powf(e) * (e * ((b - a) / a).ln_1p()).exp_m1() / e
    }
}

/// Weighted mass `W0[i][j] = ∫ y^δ ψᵢψⱼ` and stiffness `W2[i][j] = ∫ y^δ ψᵢ'ψⱼ'`
/// for the hat functions `ψ₀ = (b-y)/h`, `ψ₁ = (y-a)/h` on `(a, b)`.
pub fn interval_weight_matrices(a: f64, b: f64, delta: f64) -> (Mat2, Mat2) {
    let h = b - a;
    let m0 = y_moment(a, b, delta, 0);
    let k = m0 / (h * h);
    let w2 = [[k, -k], [-k, k]];
    let [w00, w01, w11] = weighted_mass_entries(a, b, delta);
    (([[w00, w01], [w01, w11]]), w2)
}

/// `(W0₀₀, W0₀₁, W0₁₁)` computed as `h ∫_0^1 (a + h t)^δ q(t) dt` with
/// `q ∈ {(1-t)², t(1-t), t²}`.
fn weighted_mass_entries(a: f64, b: f64, delta: f64) -> [f64; 3] {
    let h = b - a;
    if a == 0.0 {
        let s = b.powf(delta + 1.0);
        return [
            s * 2.0 / ((delta + 1.0) * (delta + 2.0) * (delta + 3.0)),
            s / ((delta + 2.0) * (delta + 3.0)),
            s / (delta + 3.0),
        ];
    }
    let r = h / a;
    if r <= 0.5 {
        // (1 + r t)^δ = Σ C(δ,n) (r t)^n against Beta-type integrals of q
        let mut c = 1.0;
        let mut rn = 1.0;
        let mut acc = [0.0f64; 3];
        for n in 0..200 {
            let nf = n as f64;
            let t = c * rn;
            let terms = [
                t * 2.0 / ((nf + 1.0) * (nf + 2.0) * (nf + 3.0)),
                t / ((nf + 2.0) * (nf + 3.0)),
                t / (nf + 3.0),
            ];
            for (a, d) in acc.iter_mut().zip(terms) {
                *a += d;
            }
            if t.abs() < 1e-18 * acc[2].abs() {
                break;
            }
            c *= (delta - nf) / (nf + 1.0);
            rn *= r;
        }
        let scale = h * a.powf(delta);
        return acc.map(|v| v * scale);
    }
    let m0 = y_moment(a, b, delta, 0);
    let m1 = y_moment(a, b, delta, 1);
    let m2 = y_moment(a, b, delta, 2);
    let hh = h * h;
    [
        (b * b * m0 - 2.0 * b * m1 + m2) / hh,
        ((a + b) * m1 - m2 - a * b * m0) / hh,
        (m2 - 2.0 * a * m1 + a * a * m0) / hh,
    ]
}

/// P1 stiffness and mass matrices of a triangle.
pub fn triangle_matrices(p: [Point; 3]) -> Result<(Mat3, Mat3)> {
    let area = signed_area(p[0], p[1], p[2]);
    ensure!(area > 0.0, "degenerate or clockwise triangle (area {area:e})");
    let g = p1_gradients(p, area);
    let mut a = [[0.0; 3]; 3];
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            m[i][j] = area / 12.0 * if i == j { 2.0 } else { 1.0 };
        }
    }
    Ok((a, m))
}

/// Gradients of the three barycentric hat functions.
pub fn p1_gradients(p: [Point; 3], area: f64) -> [[f64; 2]; 3] {
    let inv = 0.5 / area;
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let b = p[(i + 1) % 3];
        let c = p[(i + 2) % 3];
        g[i] = [(b[1] - c[1]) * inv, (c[0] - b[0]) * inv];
    }
    g
}

/// Seven-point rule exact for polynomials of degree 5: barycentric points and
/// weights normalized to sum to one.
pub fn degree5_rule() -> [([f64; 3], f64); 7] {
    let sq = 15f64.sqrt();
    let a1 = (6.0 - sq) / 21.0;
    let a2 = (6.0 + sq) / 21.0;
    let w1 = (155.0 - sq) / 1200.0;
    let w2 = (155.0 + sq) / 1200.0;
    let c = 1.0 / 3.0;
    [
        ([c, c, c], 9.0 / 40.0),
        ([a1, a1, 1.0 - 2.0 * a1], w1),
        ([a1, 1.0 - 2.0 * a1, a1], w1),
        ([1.0 - 2.0 * a1, a1, a1], w1),
        ([a2, a2, 1.0 - 2.0 * a2], w2),
        ([a2, 1.0 - 2.0 * a2, a2], w2),
        ([1.0 - 2.0 * a2, a2, a2], w2),
    ]
}

/// `∫_E f φᵢ` for the three hat functions of `E` using [`degree5_rule`].
pub fn load_integrals(p: [Point; 3], f: &dyn Field2d) -> [f64; 3] {
    let area = signed_area(p[0], p[1], p[2]);
    let mut out = [0.0; 3];
    for (bc, w) in degree5_rule() {
        let x = [
            bc[0] * p[0][0] + bc[1] * p[1][0] + bc[2] * p[2][0],
            bc[0] * p[0][1] + bc[1] * p[1][1] + bc[2] * p[2][1],
        ];
        let fx = f.value(x) * w * area;
        for i in 0..3 {
            out[i] += fx * bc[i];
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyParams {
    /// Zeroth-order stabilization θ.
    pub theta: f64,
    /// Fidelity weight μ.
    pub mu: f64,
}

impl AssemblyParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.theta > 0.0 && self.theta.is_finite(), "theta must be positive, got {}", self.theta);
        ensure!(self.mu > 0.0 && self.mu.is_finite(), "mu must be positive, got {}", self.mu);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

impl SparseSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }
}

/// Sorted vertex neighbor lists (each list contains the vertex itself).
pub fn vertex_neighbors(tri: &TriMesh) -> Vec<Vec<usize>> {
    let mut nb: Vec<Vec<usize>> = (0..tri.num_vertices()).map(|i| vec![i]).collect();
    for t in &tri.triangles {
        for &i in t {
            nb[i].extend_from_slice(t);
        }
    }
    nb.iter_mut().for_each(|l| {
        l.sort_unstable();
        l.dedup();
    });
    nb
}

/// Tensor sparsity: row `(k, i)` couples to `(k', j)` for `|k - k'| ≤ 1` and
/// `j` a neighbor of `i`.
fn prism_pattern(prism: &PrismMesh) -> CsrMatrix {
    let nv = prism.num_vertices();
    let nl = prism.num_layers();
    let nb = vertex_neighbors(&prism.tri);
    let mut rows = Vec::with_capacity(nv * nl);
    for k in 0..nl {
        for list in &nb {
            let lo = k.saturating_sub(1);
            let hi = (k + 1).min(nl - 1);
            let mut r = Vec::with_capacity(list.len() * (hi - lo + 1));
            for kk in lo..=hi {
                r.extend(list.iter().map(|j| kk * nv + j));
            }
            rows.push(r);
        }
    }
    CsrMatrix::from_pattern(rows)
}

/// Per-interval weighted matrices for one exponent: `[W0₀₀, W0₀₁, W0₁₁, W2 scale]`.
fn interval_table(nodes: &[f64], delta: f64) -> Vec<[f64; 4]> {
    nodes
        .windows(2)
        .map(|w| {
            let (w0, w2) = interval_weight_matrices(w[0], w[1], delta);
            [w0[0][0], w0[0][1], w0[1][1], w2[0][0]]
        })
        .collect()
}

pub fn assemble_system(
    prism: &PrismMesh,
    s: &ExponentField,
    params: &AssemblyParams,
    f: &dyn Field2d,
) -> Result<SparseSystem> {
    params.validate()?;
    let tri = &prism.tri;
    let nt = tri.num_triangles();
    ensure!(
        s.values.len() == nt,
        "exponent field has {} values for {} triangles",
        s.values.len(),
        nt
    );
    for (t, &v) in s.values.iter().enumerate() {
        ensure!(v > 0.0 && v < 1.0, "exponent on triangle {t} is {v}, outside (0,1)");
    }
    let nodes = &prism.interval.nodes;
    let nv = prism.num_vertices();
    let nl = prism.num_layers();

    let elems: Vec<(Mat3, Mat3)> = (0..nt)
        .into_par_iter()
        .map(|t| triangle_matrices(tri.corners(t)))
        .collect::<Result<_>>()?;
    let weights: Vec<Vec<[f64; 4]>> =
        s.values.par_iter().map(|&sv| interval_table(nodes, 1.0 - 2.0 * sv)).collect();

    let mut matrix = prism_pattern(prism);
    let theta = params.theta;
    let bounds: Vec<usize> = (0..=nl).map(|k| k * nv).collect();
    matrix.split_rows_mut(&bounds).into_par_iter().enumerate().for_each(|(k, mut block)| {
        // the layer-k rows see interval k-1 from above (local index 1) and
        // interval k from below (local index 0)
        let sides: [(usize, usize); 2] = [(k.wrapping_sub(1), 1), (k, 0)];
        for &(iv, local) in &sides {
            if iv >= nl - 1 {
                continue;
            }
            for t in 0..nt {
                let (a, m) = &elems[t];
                let [w00, w01, w11, w2] = weights[t][iv];
                let w0 = [[w00, w01], [w01, w11]];
                let w2m = [[w2, -w2], [-w2, w2]];
                let v = tri.triangles[t];
                for li in 0..3 {
                    let row = k * nv + v[li];
                    for ly in 0..2 {
                        let col_layer = iv + ly;
                        for lj in 0..3 {
                            let val = a[li][lj] * w0[local][ly]
                                + m[li][lj] * w2m[local][ly]
                                + theta * m[li][lj] * w0[local][ly];
                            block.add(row, col_layer * nv + v[lj], val);
                        }
                    }
                }
            }
        }
        if k == 0 {
            for t in 0..nt {
                let (_, m) = &elems[t];
                let c = params.mu * s.values[t] * s.values[t];
                let v = tri.triangles[t];
                for li in 0..3 {
                    for lj in 0..3 {
                        block.add(v[li], v[lj], c * m[li][lj]);
                    }
                }
            }
        }
    });

    let loads: Vec<[f64; 3]> = (0..nt).into_par_iter().map(|t| load_integrals(tri.corners(t), f)).collect();
    let mut rhs = vec![0.0; nv * nl];
    for t in 0..nt {
        let c = params.mu * s.values[t] * s.values[t];
        let v = tri.triangles[t];
        for li in 0..3 {
            rhs[v[li]] += c * loads[t][li];
        }
    }
    Ok(SparseSystem { matrix, rhs })
}
