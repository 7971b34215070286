//! End-to-end denoising run: exponent selection, TV baseline, cylinder
//! solve, scoring, and artifact output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::assemble::{assemble_system, AssemblyParams};
use crate::config::{ExperimentConfig, PreconditionerKind};
use crate::error::{Error, Result};
use crate::fixtures::FIXTURE_VERSION;
use crate::imgio::{save_pgm, ImageGrid};
use crate::mesh::{graded_interval_mesh, to_vtk, uniform_tri_mesh, PrismMesh, TriMesh};
use crate::metrics::{score, ScorePair};
use crate::solve::{
    default_max_iter, extract_trace, pcg, rasterize_trace, vertical_line_preconditioner, Jacobi, Preconditioner,
    SolveReport,
};
use crate::sselect::{select_s, ExponentField, SelectParams, Selection};
use crate::tv::{optimize_zeta, TvConfig, ZetaSearch};

/// Inputs of one run.
#[derive(Debug, Clone)]
pub struct DenoiseJob {
    pub label: String,
    pub noisy: ImageGrid,
    /// Enables scoring and the optimized-ζ TV baseline.
    pub truth: Option<ImageGrid>,
    pub config: ExperimentConfig,
    /// Written to `input.txt` next to the other artifacts when present.
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub select_ms: f64,
    pub baseline_ms: f64,
    pub assemble_ms: f64,
    pub solve_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub label: String,
    pub config: ExperimentConfig,
    pub width: usize,
    pub height: usize,
    pub triangles: usize,
    pub vertices: usize,
    pub dofs: usize,
    pub tau: f64,
    pub tv_iterations: usize,
    pub tv_converged: bool,
    pub tv_last_change: f64,
    pub s_min: f64,
    pub s_median: f64,
    pub s_max: f64,
    pub solve: SolveReport,
    pub zeta_star: Option<f64>,
    pub noisy_scores: Option<ScorePair>,
    pub tv_scores: Option<ScorePair>,
    pub new_scores: Option<ScorePair>,
    pub timings: Timings,
    pub files: Vec<PathBuf>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:e}"))
}

impl RunSummary {
    /// One header row and one value row. Timing columns start with `time_`.
    pub fn to_csv(&self) -> String {
        let mut cols: Vec<(String, String)> = vec![
            ("label".into(), self.label.clone()),
            ("fixture_version".into(), FIXTURE_VERSION.into()),
            ("width".into(), self.width.to_string()),
            ("height".into(), self.height.to_string()),
        ];
        for (k, v) in self.config.entries() {
            // lists are joined with ';' to keep the CSV flat
            cols.push((format!("cfg_{k}"), v.replace(',', ";")));
        }
        let sp = |s: Option<ScorePair>| (fmt_opt(s.map(|p| p.psnr)), fmt_opt(s.map(|p| p.ssim)));
        let (pn, sn) = sp(self.noisy_scores);
        let (pt, st) = sp(self.tv_scores);
        let (pw, sw) = sp(self.new_scores);
        cols.extend([
            ("triangles".into(), self.triangles.to_string()),
            ("vertices".into(), self.vertices.to_string()),
            ("dofs".into(), self.dofs.to_string()),
            ("tau".into(), format!("{:e}", self.tau)),
            ("tv_iterations".into(), self.tv_iterations.to_string()),
            ("tv_converged".into(), self.tv_converged.to_string()),
            ("tv_last_change".into(), format!("{:e}", self.tv_last_change)),
            ("s_min".into(), format!("{:e}", self.s_min)),
            ("s_median".into(), format!("{:e}", self.s_median)),
            ("s_max".into(), format!("{:e}", self.s_max)),
            ("pcg_iterations".into(), self.solve.iterations.to_string()),
            ("pcg_relative_residual".into(), format!("{:e}", self.solve.final_relative_residual)),
            ("pcg_converged".into(), self.solve.converged.to_string()),
            ("zeta_star".into(), fmt_opt(self.zeta_star)),
            ("psnr_noisy".into(), pn),
            ("ssim_noisy".into(), sn),
            ("psnr_tv".into(), pt),
            ("ssim_tv".into(), st),
            ("psnr_new".into(), pw),
            ("ssim_new".into(), sw),
            ("time_select_ms".into(), format!("{:e}", self.timings.select_ms)),
            ("time_baseline_ms".into(), format!("{:e}", self.timings.baseline_ms)),
            ("time_assemble_ms".into(), format!("{:e}", self.timings.assemble_ms)),
            ("time_solve_ms".into(), format!("{:e}", self.timings.solve_ms)),
            ("time_total_ms".into(), format!("{:e}", self.timings.total_ms)),
            (
                "files".into(),
                self.files.iter().map(|p| p.file_name().unwrap_or_default().to_string_lossy()).collect::<Vec<_>>().join(";"),
            ),
        ]);
        let mut out = String::new();
        let _ = writeln!(out, "{}", cols.iter().map(|c| c.0.as_str()).collect::<Vec<_>>().join(","));
        let _ = writeln!(out, "{}", cols.iter().map(|c| c.1.as_str()).collect::<Vec<_>>().join(","));
        out
    }
}

/// Everything a run produces in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub recon: ImageGrid,
    pub selection: Selection,
    pub baseline: Option<ZetaSearch>,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Cylinder solve for a given triangulation and exponent field.
pub fn solve_extension(
    mesh: &TriMesh,
    s: &ExponentField,
    image: &ImageGrid,
    cfg: &ExperimentConfig,
) -> Result<(PrismMesh, Vec<f64>, SolveReport, f64, f64)> {
    let tau = cfg.tau_for(mesh.num_triangles());
    let prism = PrismMesh::new(mesh.clone(), graded_interval_mesh(cfg.k_layers, cfg.gamma, tau)?);
    let t = Instant::now();
    let system = assemble_system(&prism, s, &AssemblyParams { theta: cfg.theta, mu: cfg.mu }, image)?;
    let assemble_ms = ms(t);
    let t = Instant::now();
    let pre: Box<dyn Preconditioner> = match cfg.preconditioner {
        PreconditionerKind::VerticalLine => Box::new(vertical_line_preconditioner(&system, &prism)?),
        PreconditionerKind::Jacobi => Box::new(Jacobi::new(&system.matrix)?),
    };
    let max_iter = cfg.pcg_max_iter.unwrap_or_else(|| default_max_iter(system.dim()));
    let (x, report) = pcg(&system, pre.as_ref(), cfg.pcg_tol, max_iter);
    let trace = extract_trace(&x, &prism)?;
    Ok((prism, trace, report, assemble_ms, ms(t)))
}

pub fn run_denoise(job: &DenoiseJob) -> Result<RunOutput> {
    let cfg = &job.config;
    cfg.validate()?;
    if let Some(t) = &job.truth {
        if !t.same_shape(&job.noisy) {
            return Err(Error::Config("truth image dimensions differ from the input".into()));
        }
    }
    let total = Instant::now();
    let (w, h) = (job.noisy.width(), job.noisy.height());

    let t = Instant::now();
    let params = SelectParams {
        zeta: cfg.zeta,
        tol_tv: cfg.tol_tv,
        tv_max_iter: cfg.tv_max_iter,
        n_refine: cfg.n_refine,
        lambda: cfg.lambda,
        beta: cfg.beta,
        nu: cfg.nu,
        grad_scale: cfg.grad_scale,
        min_diameter_px: cfg.min_diameter_px,
    };
    let selection = select_s(&job.noisy, &params, &uniform_tri_mesh(cfg.initial_mesh_m(w, h)))?;
    let select_ms = ms(t);

    let t = Instant::now();
    let baseline = match &job.truth {
        Some(truth) => {
            let tmpl = TvConfig { zeta: 1.0, tol: cfg.tol_tv_star, max_iter: cfg.tv_star_max_iter, ..TvConfig::default() };
            Some(optimize_zeta(&job.noisy, truth, &cfg.zeta_grid, &tmpl)?)
        }
        None => None,
    };
    let baseline_ms = ms(t);

    let (prism, trace, solve, assemble_ms, solve_ms) = solve_extension(&selection.mesh, &selection.s, &job.noisy, cfg)?;
    let recon = rasterize_trace(&trace, &selection.mesh, w, h)?;

    let (noisy_scores, tv_scores, new_scores) = match &job.truth {
        Some(truth) => (
            Some(score(&job.noisy, truth)?),
            Some(score(&baseline.as_ref().expect("baseline computed with truth").image, truth)?),
            Some(score(&recon, truth)?),
        ),
        None => (None, None, None),
    };
    let (s_min, s_median, s_max) = selection.s_stats();
    let summary = RunSummary {
        label: job.label.clone(),
        config: cfg.clone(),
        width: w,
        height: h,
        triangles: selection.mesh.num_triangles(),
        vertices: selection.mesh.num_vertices(),
        dofs: prism.num_dofs(),
        tau: prism.interval.tau,
        tv_iterations: selection.u_tv.iterations,
        tv_converged: selection.u_tv.converged,
        tv_last_change: selection.u_tv.last_relative_change,
        s_min,
        s_median,
        s_max,
        solve,
        zeta_star: baseline.as_ref().map(|b| b.zeta_star),
        noisy_scores,
        tv_scores,
        new_scores,
        timings: Timings { select_ms, baseline_ms, assemble_ms, solve_ms, total_ms: ms(total) },
        files: Vec::new(),
    };
    Ok(RunOutput { summary, recon, selection, baseline })
}

fn write(path: PathBuf, data: &[u8], files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, data).map_err(|e| Error::io(&path, e))?;
    files.push(path);
    Ok(())
}

/// Writes all artifacts into `dir` (created if missing) and records them in
/// the summary manifest. `summary.csv` is written last.
pub fn write_artifacts(out: &mut RunOutput, job: &DenoiseJob, dir: &Path) -> Result<()> {
    let noisy = &job.noisy;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let pgm = |name: &str, img: &ImageGrid, files: &mut Vec<PathBuf>| -> Result<()> {
        let p = dir.join(name);
        save_pgm(img, &p)?;
        files.push(p);
        Ok(())
    };
    pgm("recon.pgm", &out.recon, &mut files)?;
    pgm("u_tv.pgm", &out.selection.u_tv.image, &mut files)?;
    pgm("noisy.pgm", noisy, &mut files)?;
    if let Some(b) = &out.baseline {
        pgm("tv_opt.pgm", &b.image, &mut files)?;
        write(dir.join("tv_scores.csv"), b.to_csv().as_bytes(), &mut files)?;
    }
    if let Some(note) = &job.note {
        write(dir.join("input.txt"), note.as_bytes(), &mut files)?;
    }
    let mesh = &out.selection.mesh;
    write(dir.join("mesh.vtk"), to_vtk(mesh, &[]).as_bytes(), &mut files)?;
    write(dir.join("s_field.vtk"), to_vtk(mesh, &[("s", &out.selection.s.values)]).as_bytes(), &mut files)?;
    let (lo, med, hi) = out.selection.s_stats();
    let mut rounds = out.selection.rounds_csv();
    let _ = writeln!(rounds, "# s_min={lo:e} s_median={med:e} s_max={hi:e}");
    write(dir.join("rounds.csv"), rounds.as_bytes(), &mut files)?;
    files.push(dir.join("summary.csv"));
    out.summary.files = files;
    let csv = out.summary.to_csv();
    std::fs::write(dir.join("summary.csv"), csv).map_err(|e| Error::io(dir.join("summary.csv"), e))?;
    Ok(())
}

/// Outcome of a constant-exponent solve compared with the cosine-mode oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantSCheck {
    pub s: f64,
    pub relative_error: f64,
    pub fe_amplitude: f64,
    pub oracle_amplitude: f64,
    pub solve: SolveReport,
}

/// Solves the cylinder problem for constant `s` with data `cos(πx₁)` on an
/// `m × m` mesh and compares row-averaged traces with the exact modal
/// solution of the fractional problem, in relative L² over the columns.
pub fn constant_s_check(s: f64, mu: f64, m: usize, k_layers: usize, tau: f64) -> Result<ConstantSCheck> {
    use crate::verify::constant_s_trace_oracle;
    use std::f64::consts::PI;
    let tri = uniform_tri_mesh(m);
    let interval = graded_interval_mesh(k_layers, 1.05 / s, tau)?;
    let prism = PrismMesh::new(tri, interval);
    let f = |x: [f64; 2]| (PI * x[0]).cos();
    let field = ExponentField::constant(&prism.tri, s);
    let system = assemble_system(&prism, &field, &AssemblyParams { theta: 1e-10, mu }, &f)?;
    let pre = vertical_line_preconditioner(&system, &prism)?;
    let (x, solve) = pcg(&system, &pre, 1e-10, 20 * default_max_iter(system.dim()));
    let trace = extract_trace(&x, &prism)?;
    let oracle = constant_s_trace_oracle(&|x: f64| (PI * x).cos(), s, mu, 64)?;
    // the uniform mesh has m+1 vertices per row, numbered row by row
    let (mut err, mut norm) = (0.0, 0.0);
    let mut fe_amp = 0.0f64;
    for col in 0..=m {
        let avg = (0..=m).map(|row| trace[row * (m + 1) + col]).sum::<f64>() / (m + 1) as f64;
        let x = prism.tri.vertices[col][0];
        let o = oracle.eval(x);
        err += (avg - o) * (avg - o);
        norm += o * o;
        fe_amp = fe_amp.max(avg.abs());
    }
    Ok(ConstantSCheck {
        s,
        relative_error: (err / norm).sqrt(),
        fe_amplitude: fe_amp,
        oracle_amplitude: oracle.eval(0.0).abs(),
        solve,
    })
}

/// Drops `time_*` columns from a summary CSV.
pub fn strip_timing_columns(csv: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let keep: Vec<bool> = header.iter().map(|h| !h.starts_with("time_")).collect();
    let filter = |line: &str| {
        line.split(',').zip(&keep).filter(|(_, k)| **k).map(|(v, _)| v).collect::<Vec<_>>().join(",")
    };
    let mut out = filter(&header.join(","));
    for l in lines {
        out.push('\n');
        out.push_str(&filter(l));
    }
    out
}
