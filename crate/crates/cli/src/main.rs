//! `fracvar`: denoising runs and verification sweeps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracvar_core::error::Error;
use fracvar_core::fixtures::fixture_sidecar;
use fracvar_core::pipeline::{constant_s_check, write_artifacts};
use fracvar_core::verify::{
    a2_quotient, disc_trace_energy, disc_trace_energy_closed_form, trace_battery, CrossSection, WeightSpec,
};
use fracvar_core::{
    add_gaussian_noise, experiment_defaults, load_pgm, run_denoise, DenoiseJob, ExampleId, ExperimentConfig,
};

const EX_OK: u8 = 0;
const EX_FAIL: u8 = 1;
const EX_NOT_CONVERGED: u8 = 2;
const EX_USAGE: u8 = 64;
const EX_SOFTWARE: u8 = 70;
const EX_IOERR: u8 = 74;

#[derive(Parser)]
#[command(name = "fracvar", version, about = "Variable-exponent fractional denoising")]
struct Cli {
    /// Worker threads; 1 gives the reference deterministic schedule.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Denoise an image or a generated fixture and write all artifacts.
    Denoise(DenoiseArgs),
    /// Run a numerical verification sweep.
    Verify {
        #[command(subcommand)]
        target: VerifyTarget,
    },
}

#[derive(Args)]
struct DenoiseArgs {
    /// Observed image (PGM).
    #[arg(long, conflicts_with = "fixture")]
    input: Option<PathBuf>,
    /// Generated test image: shapes or stripes.
    #[arg(long)]
    fixture: Option<String>,
    /// Clean reference for scoring and the TV baseline.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Parameter set to start from (defaults to the fixture's, or shapes).
    #[arg(long)]
    preset: Option<String>,
    /// `key = value` file applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, env = "FRACVAR_OUT_DIR", default_value = "fracvar-out")]
    out_dir: PathBuf,
    /// Noise level; with --input the file is treated as the clean image.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum VerifyTarget {
    /// Cube quotient sweep for the power-law exponent |x|^q.
    A2 {
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        #[arg(long, default_value_t = 0.5)]
        y0: f64,
        #[arg(long, env = "FRACVAR_OUT_DIR", default_value = "fracvar-out")]
        out_dir: PathBuf,
    },
    /// Trace-inequality battery over random fields and exponent profiles.
    Trace {
        #[arg(long, default_value_t = 20)]
        fields: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, env = "FRACVAR_OUT_DIR", default_value = "fracvar-out")]
        out_dir: PathBuf,
    },
    /// Energy of the extension whose trace jumps across a line.
    Discenergy {
        #[arg(long, default_value_t = 0.125)]
        kappa: f64,
        #[arg(long, env = "FRACVAR_OUT_DIR", default_value = "fracvar-out")]
        out_dir: PathBuf,
    },
    /// Constant-exponent solves against the cosine-mode solution.
    Oracle {
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.7")]
        s: Vec<f64>,
        #[arg(long, default_value_t = 10.0)]
        mu: f64,
        #[arg(long, default_value_t = 32)]
        m: usize,
        #[arg(long, default_value_t = 40)]
        k_layers: usize,
        #[arg(long, default_value_t = 10.0)]
        tau: f64,
        #[arg(long, env = "FRACVAR_OUT_DIR", default_value = "fracvar-out")]
        out_dir: PathBuf,
    },
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EX_USAGE, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } | Error::Pgm { .. } => EX_IOERR,
            Error::Config(_) => EX_USAGE,
            _ => EX_SOFTWARE,
        };
        Self { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EX_USAGE } else { EX_OK });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EX_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EX_SOFTWARE);
        }
    }
    let result = match cli.command {
        Command::Denoise(args) => denoise(args),
        Command::Verify { target } => verify(target),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn build_config(args: &DenoiseArgs, fixture: Option<ExampleId>) -> Result<ExperimentConfig, Failure> {
    let preset = match (&args.preset, fixture) {
        (Some(p), _) => Some(p.parse::<ExampleId>()?),
        (None, f) => f,
    };
    let mut cfg = preset.map(experiment_defaults).unwrap_or_default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| Failure {
            code: if path.exists() { EX_IOERR } else { EX_USAGE },
            message: format!("cannot read config {}: {e}", path.display()),
        })?;
        cfg.apply_text(&text)?;
    }
    if let Some(s) = args.sigma {
        cfg.sigma = s;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    for o in &args.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| Failure::usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_existing(path: &Path, what: &str) -> Result<fracvar_core::ImageGrid, Failure> {
    if !path.is_file() {
        return Err(Failure::usage(format!("{what} {} does not exist", path.display())));
    }
    Ok(load_pgm(path)?)
}

fn denoise(args: DenoiseArgs) -> Result<u8, Failure> {
    let fixture = args.fixture.as_deref().map(str::parse::<ExampleId>).transpose()?;
    if fixture.is_none() && args.input.is_none() {
        return Err(Failure::usage("one of --input or --fixture is required"));
    }
    let cfg = build_config(&args, fixture)?;

    // everything is read and validated before the output directory is touched
    let (label, noisy, truth, note) = match (fixture, &args.input) {
        (Some(id), _) => {
            if args.truth.is_some() {
                return Err(Failure::usage("--truth cannot be combined with --fixture"));
            }
            let clean = id.generate(cfg.size)?;
            let noisy = add_gaussian_noise(&clean, cfg.sigma, cfg.seed);
            (id.to_string(), noisy, Some(clean), fixture_sidecar(id, cfg.size, cfg.sigma, cfg.seed))
        }
        (None, Some(path)) => {
            let img = load_existing(path, "input")?;
            let label = path.file_stem().map_or("input".into(), |s| s.to_string_lossy().into_owned());
            match (args.sigma, &args.truth) {
                (Some(_), Some(_)) => return Err(Failure::usage("--sigma treats --input as the clean image; drop --truth")),
                (Some(sigma), None) => {
                    let noisy = add_gaussian_noise(&img, sigma, cfg.seed);
                    let note = format!("input = {}\nsigma = {sigma:e}\nseed = {}\n", path.display(), cfg.seed);
                    (label, noisy, Some(img), note)
                }
                (None, truth) => {
                    let truth = truth.as_deref().map(|t| load_existing(t, "truth")).transpose()?;
                    (label, img, truth, format!("input = {}\n", path.display()))
                }
            }
        }
        (None, None) => unreachable!("checked above"),
    };

    let job = DenoiseJob { label, noisy, truth, config: cfg, note: Some(note) };
    let mut out = run_denoise(&job)?;
    write_artifacts(&mut out, &job, &args.out_dir)?;

    let s = &out.summary;
    println!("{}: {} triangles, {} dofs, tau {:.4}", s.label, s.triangles, s.dofs, s.tau);
    println!(
        "pcg: {} iterations, relative residual {:.3e}{}",
        s.solve.iterations,
        s.solve.final_relative_residual,
        if s.solve.converged { "" } else { " (NOT CONVERGED)" }
    );
    for (name, sc) in [("noisy", s.noisy_scores), ("tv", s.tv_scores), ("new", s.new_scores)] {
        if let Some(sc) = sc {
            println!("{name:>5}: PSNR {:.4} dB  SSIM {:.4}", sc.psnr, sc.ssim);
        }
    }
    println!("artifacts in {}", args.out_dir.display());
    Ok(if s.solve.converged { EX_OK } else { EX_NOT_CONVERGED })
}

/// Parameter checks inside the verification routines surface as contract
/// errors; on the command line they are argument errors.
fn bad_argument(e: Error) -> Failure {
    match e {
        Error::Contract(msg) => Failure::usage(msg),
        other => other.into(),
    }
}

fn write_csv(dir: &Path, name: &str, body: &str) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure { code: EX_IOERR, message: format!("{}: {e}", dir.display()) })?;
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| Failure { code: EX_IOERR, message: format!("{}: {e}", path.display()) })?;
    Ok(path)
}

fn verify(target: VerifyTarget) -> Result<u8, Failure> {
    match target {
        VerifyTarget::A2 { q, y0, out_dir } => {
            let radii = [0.4, 0.2, 0.1, 0.05, 0.025];
            let mut csv = String::from("r,quotient\n");
            let mut values = Vec::new();
            for r in radii {
                let v = a2_quotient(&WeightSpec::PowerLaw(q), CrossSection::Ball, r, y0).map_err(bad_argument)?;
                let _ = writeln!(csv, "{r:e},{v:e}");
                println!("R = {r:<6} quotient = {v:.6}");
                values.push(v);
            }
            let path = write_csv(&out_dir, "verify_a2.csv", &csv)?;
            let increasing = values.windows(2).all(|w| w[1] > w[0]);
            println!("last/first = {:.4}; written {}", values[4] / values[0], path.display());
            if increasing {
                Ok(EX_OK)
            } else {
                eprintln!("quotient sequence is not strictly increasing");
                Ok(EX_FAIL)
            }
        }
        VerifyTarget::Trace { fields, seed, out_dir } => {
            let cases = trace_battery(fields, seed);
            let mut csv = String::from("field,profile,ratio\n");
            for c in &cases {
                let _ = writeln!(csv, "{},{},{:e}", c.field, c.profile, c.ratio);
            }
            let path = write_csv(&out_dir, "verify_trace.csv", &csv)?;
            let worst = cases.iter().max_by(|a, b| a.ratio.total_cmp(&b.ratio)).ok_or_else(|| Failure::usage("--fields must be positive"))?;
            println!("{} cases, max ratio {:.6} (field {}, {}); written {}", cases.len(), worst.ratio, worst.field, worst.profile, path.display());
            let bad: Vec<_> = cases.iter().filter(|c| !(c.ratio <= 6.0)).collect();
            for c in &bad {
                eprintln!("ratio {} exceeds 6 for field {} profile {}", c.ratio, c.field, c.profile);
            }
            Ok(if bad.is_empty() { EX_OK } else { EX_FAIL })
        }
        VerifyTarget::Discenergy { kappa, out_dir } => {
            let value = disc_trace_energy(kappa, 1e-12).map_err(bad_argument)?;
            let exact = disc_trace_energy_closed_form(kappa);
            let path = write_csv(&out_dir, "verify_discenergy.csv", &format!("kappa,energy,closed_form\n{kappa:e},{value:e},{exact:e}\n"))?;
            println!("kappa = {kappa}: energy {value:.6} (closed form {exact:.6}); written {}", path.display());
            if (value - exact).abs() <= 1e-6 {
                Ok(EX_OK)
            } else {
                eprintln!("energy differs from the closed form by {:e}", (value - exact).abs());
                Ok(EX_FAIL)
            }
        }
        VerifyTarget::Oracle { s, mu, m, k_layers, tau, out_dir } => {
            let mut csv = String::from("s,relative_error,fe_amplitude,oracle_amplitude,pcg_iterations\n");
            let mut ok = true;
            for sv in s {
                if !(sv > 0.0 && sv < 1.0) {
                    return Err(Failure::usage(format!("s must lie in (0,1), got {sv}")));
                }
                let c = constant_s_check(sv, mu, m, k_layers, tau)?;
                let _ = writeln!(
                    csv,
                    "{:e},{:e},{:e},{:e},{}",
                    c.s, c.relative_error, c.fe_amplitude, c.oracle_amplitude, c.solve.iterations
                );
                println!("s = {sv}: relative L2 error {:.3e} (amplitude {:.4} vs {:.4})", c.relative_error, c.fe_amplitude, c.oracle_amplitude);
                if !(c.relative_error < 0.05 && c.solve.converged) {
                    eprintln!("s = {sv}: error {:.3e} or solver did not converge", c.relative_error);
                    ok = false;
                }
            }
            let path = write_csv(&out_dir, "verify_oracle.csv", &csv)?;
            println!("written {}", path.display());
            Ok(if ok { EX_OK } else { EX_FAIL })
        }
    }
}
