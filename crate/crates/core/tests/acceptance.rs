//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use std::time::{Duration, Instant};

use fracvar_core::assemble::{assemble_system, AssemblyParams};
use fracvar_core::mesh::{bisect, GradedIntervalMesh, Point};
use fracvar_core::pipeline::{constant_s_check, strip_timing_columns, write_artifacts, RunOutput};
use fracvar_core::quad::{integrate, integrate_power_weight};
use fracvar_core::solve::{dense_solve, pcg, vertical_line_preconditioner};
use fracvar_core::verify::{
    a2_quotient, disc_trace_energy, trace_battery, CrossSection, WeightSpec,
};
use fracvar_core::{
    add_gaussian_noise, experiment_defaults, graded_interval_mesh, run_denoise, uniform_tri_mesh, DenoiseJob,
    ExampleId, ExperimentConfig, ExponentField, PrismMesh, TriMesh,
};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn unit(rng: &mut Xoshiro256PlusPlus) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

// ---------------------------------------------------------------------------
// 1. prism element integrals

/// `∫_a^b y^δ g(y) dy` by adaptive quadrature; the `a = 0` piece goes through
/// the power-weight substitution.
fn weighted(a: f64, b: f64, delta: f64, g: impl Fn(f64) -> f64 + Copy) -> f64 {
    if a == 0.0 {
        integrate_power_weight(g, delta, b, 0.0, 1e-14).value
    } else {
        integrate(|y| y.powf(delta) * g(y), a, b, 0.0, 1e-14).value
    }
}

/// Triangle stiffness from edge normals and mass from the edge-midpoint rule.
fn triangle_oracle(p: [Point; 3]) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    // gradient of the hat at corner i is the inward normal of the opposite edge over 2·area
    let grad = |i: usize| {
        let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        [-(b[1] - a[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)]
    };
    let g = [grad(0), grad(1), grad(2)];
    let mut k = [[0.0; 3]; 3];
    let mut m = [[0.0; 3]; 3];
    // hats at the midpoints of edges (0,1), (1,2), (2,0)
    let mids = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            m[i][j] = area / 3.0 * mids.iter().map(|q| q[i] * q[j]).sum::<f64>();
        }
    }
    (k, m)
}

fn element_exactness() -> Outcome {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut worst_case = String::new();
    for sample in 0..1000 {
        // random counterclockwise triangle with a sane aspect ratio
        let p = loop {
            let p: [Point; 3] = std::array::from_fn(|_| [unit(&mut rng), unit(&mut rng)]);
            let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
            if area.abs() > 0.02 {
                break if area > 0.0 { p } else { [p[0], p[2], p[1]] };
            }
        };
        let b = 10f64.powf(-3.0 + 4.0 * unit(&mut rng));
        let a = b * (0.01 + 0.98 * unit(&mut rng));
        // δ ∈ (-0.998, 1); δ = 1 would mean s = 0, outside the admissible exponents
        let delta = -0.998 + 1.998 * unit(&mut rng);
        let delta = delta.min(1.0 - 1e-12);
        let s = 0.5 * (1.0 - delta);
        let theta = 10f64.powf(-10.0 + 4.0 * unit(&mut rng));
        let mu = 10f64.powf(4.0 * unit(&mut rng));

        let tri = TriMesh { vertices: p.to_vec(), triangles: vec![[0, 1, 2]], refinement_edge: vec![0], parent: vec![None] };
        let prism = PrismMesh::new(tri, GradedIntervalMesh { nodes: vec![0.0, a, b], tau: b, gamma: 1.0 });
        let sys = assemble_system(
            &prism,
            &ExponentField { values: vec![s] },
            &AssemblyParams { theta, mu },
            &|_: [f64; 2]| 0.0,
        )
        .expect("assembly");

        let (k, m) = triangle_oracle(p);
        // 1-D blocks on each interval, hats ψ0 = (hi - y)/h, ψ1 = (y - lo)/h
        let blocks: Vec<([[f64; 2]; 2], [[f64; 2]; 2])> = [(0.0, a), (a, b)]
            .iter()
            .map(|&(lo, hi)| {
                let h = hi - lo;
                let psi = move |i: usize, y: f64| if i == 0 { (hi - y) / h } else { (y - lo) / h };
                let mut w0 = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        w0[i][j] = weighted(lo, hi, delta, move |y| psi(i, y) * psi(j, y));
                    }
                }
                let d = weighted(lo, hi, delta, |_| 1.0) / (h * h);
                (w0, [[d, -d], [-d, d]])
            })
            .collect();
        let mut expect = vec![vec![0.0; 9]; 9];
        for (iv, (w0, w2)) in blocks.iter().enumerate() {
            for (ly, lz) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                for i in 0..3 {
                    for j in 0..3 {
                        expect[(iv + ly) * 3 + i][(iv + lz) * 3 + j] +=
                            k[i][j] * w0[ly][lz] + m[i][j] * w2[ly][lz] + theta * m[i][j] * w0[ly][lz];
                    }
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                expect[i][j] += mu * s * s * m[i][j];
            }
        }
        let got = sys.matrix.to_dense();
        let scale = expect.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
        for r in 0..9 {
            for c in 0..9 {
                let e = expect[r][c];
                let err = (got[r][c] - e).abs() / e.abs().max(1e-9 * scale);
                if err > worst {
                    worst = err;
                    worst_case = format!("sample {sample}: a={a:.3e} b={b:.3e} δ={delta:.4}");
                }
            }
        }
    }
    outcome(worst < 1e-10, format!("1000 prisms, max relative error {worst:.2e} ({worst_case})"))
}

// ---------------------------------------------------------------------------
// 2. PCG against dense factorization

fn solver_equivalence() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    let coarse = uniform_tri_mesh(4);
    let marked: Vec<usize> = (0..coarse.num_triangles()).filter(|t| t % 3 == 0).collect();
    let meshes = [("uniform 8x8, K=20", uniform_tri_mesh(8), 20), ("bisected 4x4, K=30", bisect(&coarse, &marked).expect("bisection"), 30)];
    for (name, tri, k) in meshes {
        let nt = tri.num_triangles();
        let s = ExponentField { values: (0..nt).map(|t| 0.05 + 0.9 * ((t * 7919) % 101) as f64 / 100.0).collect() };
        let prism = PrismMesh::new(tri, graded_interval_mesh(k, 1.05 / 0.32, 3.0).expect("grading"));
        let f = |x: [f64; 2]| (3.0 * x[0]).sin() + x[1] * x[1];
        let sys = assemble_system(&prism, &s, &AssemblyParams { theta: 1e-10, mu: 2900.0 }, &f).expect("assembly");
        let dense = match dense_solve(&sys) {
            Ok(d) => d,
            Err(e) => {
                pass = false;
                details.push(format!("{name}: dense factorization failed: {e}"));
                continue;
            }
        };
        let pre = vertical_line_preconditioner(&sys, &prism).expect("preconditioner");
        let (x, report) = pcg(&sys, &pre, 1e-13, 20_000);
        let err = rel_l2(&x, &dense.x);
        let min_pivot = dense.pivots.iter().cloned().fold(f64::INFINITY, f64::min);
        let ok = sys.dim() <= 2000 && err < 1e-8 && min_pivot > 0.0 && sys.matrix.is_symmetric();
        pass &= ok;
        details.push(format!(
            "{name}: {} dofs, {} iterations, rel l2 {err:.2e}, min pivot {min_pivot:.2e}",
            sys.dim(),
            report.iterations
        ));
    }
    outcome(pass, details.join("; "))
}

// ---------------------------------------------------------------------------
// 3-6. analytic checks

fn constant_exponent_oracle() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for s in [0.3, 0.5, 0.7] {
        match constant_s_check(s, 10.0, 32, 40, 10.0) {
            Ok(c) => {
                pass &= c.relative_error < 0.05 && c.solve.converged;
                parts.push(format!("s={s}: {:.2e}", c.relative_error));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("s={s}: {e}"));
            }
        }
    }
    outcome(pass, format!("relative L2 errors {}", parts.join(", ")))
}

fn trace_theorem() -> Outcome {
    let cases = trace_battery(100, 1);
    let worst = cases.iter().map(|c| c.ratio).fold(0.0f64, f64::max);
    let finite = cases.iter().all(|c| c.ratio.is_finite());
    outcome(finite && worst <= 6.0, format!("{} cases, max ratio {worst:.4}", cases.len()))
}

fn a2_blowup() -> Outcome {
    let radii = [0.4, 0.2, 0.1, 0.05, 0.025];
    let q: Vec<f64> = radii
        .iter()
        .map(|&r| a2_quotient(&WeightSpec::PowerLaw(1.0), CrossSection::Ball, r, 0.5).expect("quotient"))
        .collect();
    let increasing = q.windows(2).all(|w| w[1] > w[0]);
    let growth = q[4] / q[0];
    let mut control = 0.0f64;
    for delta in [-0.9, -0.5, 0.0, 0.3, 0.8] {
        for &r in &radii {
            let v = a2_quotient(&WeightSpec::ConstantDelta(delta), CrossSection::Ball, r, 0.5).expect("quotient");
            control = control.max((v - 1.0 / (1.0 - delta * delta)).abs());
        }
    }
    outcome(
        increasing && growth > 10.0 && control < 1e-6,
        format!("quotients {q:.4?}, last/first {growth:.3}, constant-δ deviation {control:.1e}"),
    )
}

fn disc_energy() -> Outcome {
    let e1 = disc_trace_energy(0.125, 1e-12).expect("kappa 1/8");
    let e0 = disc_trace_energy(0.0, 1e-12).expect("kappa 0");
    let rejected = disc_trace_energy(0.25, 1e-12).is_err();
    let pass = (e1 - 17.0 / 30.0).abs() < 1e-6 && (e0 - 5.0 / 12.0).abs() < 1e-6 && rejected;
    outcome(pass, format!("E(1/8) = {e1:.9}, E(0) = {e0:.9}, kappa = 1/4 rejected: {rejected}"))
}

// ---------------------------------------------------------------------------
// 7-9. end-to-end runs

const RUN_BUDGET: Duration = Duration::from_secs(300);

/// Fixture run with the preset parameters and the default noise seed.
fn fixture_job(id: ExampleId, sigma: f64, tweak: impl FnOnce(&mut ExperimentConfig)) -> DenoiseJob {
    let mut config = experiment_defaults(id);
    config.sigma = sigma;
    tweak(&mut config);
    let truth = id.generate(config.size).expect("fixture");
    let noisy = add_gaussian_noise(&truth, sigma, config.seed);
    DenoiseJob { label: format!("{id}-{sigma}"), noisy, truth: Some(truth), config, note: None }
}

struct TimedRun {
    out: RunOutput,
    elapsed: Duration,
}

fn timed(job: &DenoiseJob) -> fracvar_core::Result<TimedRun> {
    let t = Instant::now();
    let out = run_denoise(job)?;
    Ok(TimedRun { out, elapsed: t.elapsed() })
}

fn describe(r: &TimedRun) -> String {
    let s = &r.out.summary;
    let (tv, new) = (s.tv_scores.expect("scored"), s.new_scores.expect("scored"));
    format!(
        "new {:.3} dB / {:.4}, tv* {:.3} dB / {:.4} (zeta* {}), {:.0} s",
        new.psnr,
        new.ssim,
        tv.psnr,
        tv.ssim,
        s.zeta_star.unwrap_or(f64::NAN),
        r.elapsed.as_secs_f64()
    )
}

fn image_orderings(stripes_01: &fracvar_core::Result<TimedRun>) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let stripes_015 = timed(&fixture_job(ExampleId::Stripes, 0.15, |_| {}));
    for (name, run) in [("stripes σ=0.1", stripes_01), ("stripes σ=0.15", &stripes_015)] {
        match run {
            Ok(r) => {
                let s = &r.out.summary;
                let ok = s.new_scores.unwrap().ssim > s.tv_scores.unwrap().ssim && r.elapsed < RUN_BUDGET;
                pass &= ok;
                parts.push(format!("{name}: {} [{}]", describe(r), if ok { "ok" } else { "fails" }));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    drop(stripes_015);
    match timed(&fixture_job(ExampleId::Shapes, 0.1, |_| {})) {
        Ok(r) => {
            let s = &r.out.summary;
            let (tv, new) = (s.tv_scores.unwrap(), s.new_scores.unwrap());
            let ok = new.psnr > tv.psnr && new.ssim > tv.ssim && r.elapsed < RUN_BUDGET;
            pass &= ok;
            parts.push(format!("shapes σ=0.1: {} [{}]", describe(&r), if ok { "ok" } else { "fails" }));
        }
        Err(e) => {
            pass = false;
            parts.push(format!("shapes σ=0.1: {e}"));
        }
    }
    outcome(pass, parts.join("\n      "))
}

fn determinism() -> Outcome {
    let job = fixture_job(ExampleId::Stripes, 0.1, |c| c.n_refine = 5);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
    let tmp = tempfile::tempdir().expect("tempdir");
    let mut outputs = Vec::new();
    for rep in 0..2 {
        let dir = tmp.path().join(format!("run{rep}"));
        let res = pool.install(|| -> fracvar_core::Result<()> {
            let mut out = run_denoise(&job)?;
            write_artifacts(&mut out, &job, &dir)
        });
        if let Err(e) = res {
            return outcome(false, format!("run {rep}: {e}"));
        }
        let recon = std::fs::read(dir.join("recon.pgm")).expect("recon.pgm");
        let summary = std::fs::read_to_string(dir.join("summary.csv")).expect("summary.csv");
        outputs.push((recon, strip_timing_columns(&summary)));
    }
    let same_recon = outputs[0].0 == outputs[1].0;
    let same_summary = outputs[0].1 == outputs[1].1;
    outcome(
        same_recon && same_summary,
        format!("stripes single-thread x2: recon.pgm identical {same_recon}, summary.csv identical {same_summary}"),
    )
}

fn theta_insensitivity(reference: &fracvar_core::Result<TimedRun>) -> Outcome {
    let base = match reference {
        Ok(r) => r.out.summary.new_scores.unwrap(),
        Err(e) => return outcome(false, format!("theta = 1e-10 run: {e}")),
    };
    let other = match timed(&fixture_job(ExampleId::Stripes, 0.1, |c| c.theta = 1e-9)) {
        Ok(r) => r.out.summary.new_scores.unwrap(),
        Err(e) => return outcome(false, format!("theta = 1e-9 run: {e}")),
    };
    let dp = (base.psnr - other.psnr).abs();
    let ds = (base.ssim - other.ssim).abs();
    outcome(dp < 0.1 && ds < 0.002, format!("|ΔPSNR| = {dp:.2e} dB, |ΔSSIM| = {ds:.2e}"))
}

fn main() {
    // the libtest-style flags cargo passes (--list, filters) are accepted and ignored,
    // except that listing must not run the suite
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    // FRACVAR_ACCEPTANCE=1,2,6 runs a subset
    let only: Option<Vec<u32>> = std::env::var("FRACVAR_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |id: u32| only.as_ref().is_none_or(|o| o.contains(&id));
    let mut failures = 0;
    let mut report = |id: u32, name: &str, budget: Option<u64>, f: &mut dyn FnMut() -> Outcome| {
        if !wanted(id) {
            return;
        }
        let t = Instant::now();
        let mut o = f();
        let elapsed = t.elapsed();
        if let Some(limit) = budget.filter(|&b| elapsed > Duration::from_secs(b)) {
            o.pass = false;
            o.detail.push_str(&format!(" [over the {limit} s budget]"));
        }
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {id} {name} ({:.1} s): {}", elapsed.as_secs_f64(), o.detail);
        if !o.pass {
            failures += 1;
        }
    };
    report(1, "element integrals", Some(30), &mut element_exactness);
    report(2, "solver equivalence", Some(10), &mut solver_equivalence);
    report(3, "constant-exponent oracle", Some(120), &mut constant_exponent_oracle);
    report(4, "trace bound", Some(60), &mut trace_theorem);
    report(5, "A2 blow-up", Some(60), &mut a2_blowup);
    report(6, "discontinuous-trace energy", Some(10), &mut disc_energy);
    let stripes = if wanted(7) || wanted(9) {
        timed(&fixture_job(ExampleId::Stripes, 0.1, |_| {}))
    } else {
        Err(fracvar_core::Error::Config("not requested".into()))
    };
    report(7, "image orderings", None, &mut || image_orderings(&stripes));
    report(8, "determinism", None, &mut determinism);
    report(9, "theta insensitivity", None, &mut || theta_insensitivity(&stripes));
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
