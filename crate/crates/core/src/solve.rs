//! Preconditioned conjugate gradients, a dense Cholesky oracle, and trace
//! extraction/rasterization.

use rayon::prelude::*;

use crate::assemble::SparseSystem;
use crate::error::{ensure, Error, Result};
use crate::imgio::ImageGrid;
use crate::mesh::{PointLocator, PrismMesh, TriMesh};
use crate::sparse::{dot, norm2, CsrMatrix};

pub const DENSE_CAP: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_relative_residual: f64,
    pub converged: bool,
}

/// `10·√n`, the default iteration budget.
pub fn default_max_iter(n: usize) -> usize {
    ((10.0 * (n as f64).sqrt()).ceil() as usize).max(1)
}

pub trait Preconditioner: Sync {
    /// `z = P⁻¹ r`.
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let d = a.diag();
        for (i, v) in d.iter().enumerate() {
            if !(*v > 0.0) {
                return Err(Error::NotPositiveDefinite { index: i, pivot: *v });
            }
        }
        Ok(Self { inv_diag: d.iter().map(|v| 1.0 / v).collect() })
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

/// Block-diagonal preconditioner with one block per triangulation vertex
/// holding all of its layers. Each block is the tridiagonal restriction of
/// the matrix to the vertical dof line, factored once as `LDLᵀ`.
pub struct VerticalLine {
    nv: usize,
    nl: usize,
    /// Per vertex, layer-major: pivots `d_k` and subdiagonal multipliers `l_k`.
    pivots: Vec<f64>,
    mult: Vec<f64>,
}

pub fn vertical_line_preconditioner(system: &SparseSystem, prism: &PrismMesh) -> Result<VerticalLine> {
    let nv = prism.num_vertices();
    let nl = prism.num_layers();
    ensure!(system.dim() == nv * nl, "system size {} does not match prism dofs {}", system.dim(), nv * nl);
    let a = &system.matrix;
    let mut pivots = vec![0.0; nv * nl];
    let mut mult = vec![0.0; nv * nl];
    for i in 0..nv {
        let base = i * nl;
        for k in 0..nl {
            let diag = a.get(k * nv + i, k * nv + i);
            let d = if k == 0 {
                diag
            } else {
                let off = a.get(k * nv + i, (k - 1) * nv + i);
                let l = off / pivots[base + k - 1];
                mult[base + k] = l;
                diag - l * off
            };
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite { index: k * nv + i, pivot: d });
            }
            pivots[base + k] = d;
        }
    }
    Ok(VerticalLine { nv, nl, pivots, mult })
}

impl Preconditioner for VerticalLine {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let (nv, nl) = (self.nv, self.nl);
        let mut lines = vec![0.0; nv * nl];
        for k in 0..nl {
            for i in 0..nv {
                lines[i * nl + k] = r[k * nv + i];
            }
        }
        lines.par_chunks_mut(nl).enumerate().for_each(|(i, x)| {
            let base = i * nl;
            for k in 1..nl {
                x[k] -= self.mult[base + k] * x[k - 1];
            }
            for k in 0..nl {
                x[k] /= self.pivots[base + k];
            }
            for k in (0..nl - 1).rev() {
                x[k] -= self.mult[base + k + 1] * x[k + 1];
            }
        });
        for k in 0..nl {
            for i in 0..nv {
                z[k * nv + i] = lines[i * nl + k];
            }
        }
    }
}

pub fn pcg(
    system: &SparseSystem,
    precond: &dyn Preconditioner,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, SolveReport) {
    pcg_observed(system, precond, tol, max_iter, |_, _| {})
}

/// PCG from a zero initial guess, calling `observe(n, xⁿ)` after every
/// update. On non-convergence the iterate with the smallest residual is
/// returned.
pub fn pcg_observed(
    system: &SparseSystem,
    precond: &dyn Preconditioner,
    tol: f64,
    max_iter: usize,
    mut observe: impl FnMut(usize, &[f64]),
) -> (Vec<f64>, SolveReport) {
    let a = &system.matrix;
    let b = &system.rhs;
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return (x, SolveReport { iterations: 0, final_relative_residual: 0.0, converged: true });
    }
    let mut r = b.clone();
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    let mut best = (rel, x.clone());
    let mut it = 0;
    while it < max_iter {
        it += 1;
        a.mul_vec_into(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            break;
        }
        let alpha = rz / pq;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * q[k];
        }
        observe(it, &x);
        rel = norm2(&r) / bnorm;
        if rel <= tol {
            return (x, SolveReport { iterations: it, final_relative_residual: rel, converged: true });
        }
        if rel < best.0 {
            best.0 = rel;
            best.1.copy_from_slice(&x);
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    let (rel, x) = if rel <= best.0 { (rel, x) } else { best };
    (x, SolveReport { iterations: it, final_relative_residual: rel, converged: rel <= tol })
}

/// Dense Cholesky `A = L Lᵀ`; returns `L` and the pivots `L_kk²`.
pub fn dense_cholesky(a: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    let mut pivots = Vec::with_capacity(n);
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        pivots.push(d);
        let ljj = d.sqrt();
        l[j][j] = ljj;
        let (head, tail) = l.split_at_mut(j + 1);
        let lj = &head[j];
        tail.par_iter_mut().enumerate().for_each(|(off, li)| {
            let i = j + 1 + off;
            let mut s = a[i][j];
            for k in 0..j {
                s -= li[k] * lj[k];
            }
            li[j] = s / ljj;
        });
    }
    Ok((l, pivots))
}

#[derive(Debug, Clone)]
pub struct DenseSolution {
    pub x: Vec<f64>,
    pub pivots: Vec<f64>,
}

/// Dense factorization solve for systems up to [`DENSE_CAP`] unknowns.
pub fn dense_solve(system: &SparseSystem) -> Result<DenseSolution> {
    dense_solve_capped(system, DENSE_CAP)
}

pub fn dense_solve_capped(system: &SparseSystem, cap: usize) -> Result<DenseSolution> {
    let n = system.dim();
    ensure!(n <= cap, "dense oracle limited to {cap} unknowns, got {n}");
    let (l, pivots) = dense_cholesky(&system.matrix.to_dense())?;
    let mut y = system.rhs.clone();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i][k] * y[k];
        }
        y[i] /= l[i][i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k][i] * y[k];
        }
        y[i] /= l[i][i];
    }
    Ok(DenseSolution { x: y, pivots })
}

/// Layer-0 entries of a cylinder solution.
pub fn extract_trace(solution: &[f64], prism: &PrismMesh) -> Result<Vec<f64>> {
    ensure!(
        solution.len() == prism.num_dofs(),
        "solution has {} entries, prism has {} dofs",
        solution.len(),
        prism.num_dofs()
    );
    Ok(solution[..prism.num_vertices()].to_vec())
}

/// Evaluates the P1 field at every pixel center, clamped to `[0,1]`.
pub fn rasterize_trace(trace: &[f64], mesh: &TriMesh, width: usize, height: usize) -> Result<ImageGrid> {
    ensure!(trace.len() == mesh.num_vertices(), "trace length does not match mesh vertices");
    ensure!(width > 0 && height > 0, "image dimensions must be positive");
    let loc = PointLocator::new(mesh);
    let mut values = vec![0.0; width * height];
    values.par_chunks_mut(width).enumerate().for_each(|(row, out)| {
        for (col, v) in out.iter_mut().enumerate() {
            let x = [(col as f64 + 0.5) / width as f64, (row as f64 + 0.5) / height as f64];
            let (t, bc) = loc.locate(x);
            let tv = mesh.triangles[t];
            let val = bc[0] * trace[tv[0]] + bc[1] * trace[tv[1]] + bc[2] * trace[tv[2]];
            *v = val.clamp(0.0, 1.0);
        }
    });
    ImageGrid::new(width, height, values)
}
