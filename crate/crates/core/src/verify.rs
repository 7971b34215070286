//! Numerical checks of the weighted extension space.
//!
//! * [`a2_quotient`]: cube averages of `y^δ(x)` and its reciprocal, whose
//!   product stays bounded for Muckenhoupt A₂ weights and blows up for
//!   power-law exponents vanishing at a point.
//! * [`trace_ratio`]: the ratio of the `s²`-weighted trace norm to the
//!   weighted energy norm on `(0,1)×(0,1)`, which the trace inequality bounds
//!   by 6.
//! * [`disc_trace_energy`]: energy of a function whose trace jumps.
//! * [`constant_s_trace_oracle`]: Neumann cosine-mode solution of the
//!   fractional problem for constant `s`.

use std::f64::consts::PI;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{ensure, Result};
use crate::quad::{integrate, integrate_power_weight};
use crate::special::extension_constant;

const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightSpec {
    /// `w = y^δ` with `δ ∈ (-1, 1]`.
    ConstantDelta(f64),
    /// `s(x) = |x|^q`, `δ(x) = 1 - 2|x|^q`.
    PowerLaw(f64),
}

impl WeightSpec {
    fn validate(&self) -> Result<()> {
        match *self {
            WeightSpec::ConstantDelta(d) => ensure!(d > -1.0 && d <= 1.0, "delta must lie in (-1,1], got {d}"),
            WeightSpec::PowerLaw(q) => ensure!(q > 0.0, "power-law exponent must be positive, got {q}"),
        }
        Ok(())
    }

    /// `δ` at distance `r` from the origin.
    fn delta(&self, r: f64) -> f64 {
        match *self {
            WeightSpec::ConstantDelta(d) => d,
            WeightSpec::PowerLaw(q) => 1.0 - 2.0 * r.powf(q),
        }
    }
}

/// Shape of the x-cross-section of the cube `Q = S × (0, y0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossSection {
    /// Disc of radius R.
    Ball,
    /// Square of half-width R.
    Square,
}

/// y-averages over `(0, y0)` of `y^δ` and `y^-δ`.
fn y_averages(delta: f64, y0: f64) -> (f64, f64) {
    let plus = y0.powf(delta) / (1.0 + delta);
    // 1/(1-δ) is infinite at δ = 1 (s = 0); callers integrate it against a
    // vanishing measure
    let minus = if delta < 1.0 { y0.powf(-delta) / (1.0 - delta) } else { f64::INFINITY };
    (plus, minus)
}

/// `(avg_Q w)(avg_Q w⁻¹)` for the cube centered at the origin.
pub fn a2_quotient(w: &WeightSpec, section: CrossSection, r: f64, y0: f64) -> Result<f64> {
    a2_quotient_at(w, section, [0.0, 0.0], r, y0)
}

/// As [`a2_quotient`] for a cube with x-center `center`.
pub fn a2_quotient_at(w: &WeightSpec, section: CrossSection, center: [f64; 2], r: f64, y0: f64) -> Result<f64> {
    w.validate()?;
    ensure!(r > 0.0 && r < 1.0, "R must lie in (0,1), got {r}");
    ensure!(y0 > 0.0 && y0 < 1.0, "y0 must lie in (0,1), got {y0}");
    let reach = (center[0].powi(2) + center[1].powi(2)).sqrt()
        + match section {
            CrossSection::Ball => r,
            CrossSection::Square => r * 2f64.sqrt(),
        };
    if let WeightSpec::PowerLaw(_) = w {
        ensure!(reach <= 1.0, "cube reaches |x| = {reach} where s(x) = |x|^q exceeds 1");
    }
    let centered = center == [0.0, 0.0];
    let (plus, minus) = match (section, centered) {
        (CrossSection::Ball, true) => {
            // radial: (2/R²) ∫_0^R g(ρ) ρ dρ
            let avg = |pick: fn((f64, f64)) -> f64| {
                let v = integrate(|rho| pick(y_averages(w.delta(rho), y0)) * rho, 0.0, r, 0.0, QUAD_TOL).value;
                2.0 * v / (r * r)
            };
            (avg(|p| p.0), avg(|p| p.1))
        }
        (CrossSection::Square, true) => {
            // one eighth of the square: φ ∈ (0, π/4), ρ ∈ (0, R / cos φ), area R²/2
            let avg = |pick: fn((f64, f64)) -> f64| {
                let v = integrate(
                    |phi| {
                        integrate(|rho| pick(y_averages(w.delta(rho), y0)) * rho, 0.0, r / phi.cos(), 0.0, QUAD_TOL)
                            .value
                    },
                    0.0,
                    PI / 4.0,
                    0.0,
                    QUAD_TOL,
                )
                .value;
                2.0 * v / (r * r)
            };
            (avg(|p| p.0), avg(|p| p.1))
        }
        (section, false) => {
            let inner = |pick: fn((f64, f64)) -> f64, x: f64| -> f64 {
                let (lo, hi) = match section {
                    CrossSection::Square => (center[1] - r, center[1] + r),
                    CrossSection::Ball => {
                        let h = (r * r - (x - center[0]).powi(2)).max(0.0).sqrt();
                        (center[1] - h, center[1] + h)
                    }
                };
                integrate(|y| pick(y_averages(w.delta(x.hypot(y)), y0)), lo, hi, 0.0, QUAD_TOL).value
            };
            let area = match section {
                CrossSection::Square => 4.0 * r * r,
                CrossSection::Ball => PI * r * r,
            };
            let avg = |pick: fn((f64, f64)) -> f64| {
                integrate(|x| inner(pick, x), center[0] - r, center[0] + r, 0.0, QUAD_TOL).value / area
            };
            (avg(|p| p.0), avg(|p| p.1))
        }
    };
    let q = plus * minus;
    ensure!(q >= 1.0 - 1e-9, "A2 quotient {q} below 1 violates Cauchy-Schwarz");
    Ok(q)
}

/// A smooth function on the cylinder with its gradient `(∂ₓ, ∂_y)`.
pub trait CylinderField {
    fn value(&self, x: f64, y: f64) -> f64;
    fn grad(&self, x: f64, y: f64) -> [f64; 2];
}

/// `P(x,y)·exp(-((x-cx)² + (y-cy)²)/(2w²))` with `P` a full quadratic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpField {
    /// Coefficients of `1, x, y, xy, x², y²`.
    pub coef: [f64; 6],
    pub center: [f64; 2],
    pub width: f64,
}

impl BumpField {
    fn poly(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let c = &self.coef;
        let p = c[0] + c[1] * x + c[2] * y + c[3] * x * y + c[4] * x * x + c[5] * y * y;
        let px = c[1] + c[3] * y + 2.0 * c[4] * x;
        let py = c[2] + c[3] * x + 2.0 * c[5] * y;
        (p, px, py)
    }

    fn bump(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        (-(dx * dx + dy * dy) / (2.0 * self.width * self.width)).exp()
    }
}

impl CylinderField for BumpField {
    fn value(&self, x: f64, y: f64) -> f64 {
        self.poly(x, y).0 * self.bump(x, y)
    }

    fn grad(&self, x: f64, y: f64) -> [f64; 2] {
        let (p, px, py) = self.poly(x, y);
        let g = self.bump(x, y);
        let w2 = self.width * self.width;
        [
            (px - p * (x - self.center[0]) / w2) * g,
            (py - p * (y - self.center[1]) / w2) * g,
        ]
    }
}

/// `e^{-y}`, constant in x.
pub struct ExpDecay;

impl CylinderField for ExpDecay {
    fn value(&self, _x: f64, y: f64) -> f64 {
        (-y).exp()
    }
    fn grad(&self, _x: f64, y: f64) -> [f64; 2] {
        [0.0, -(-y).exp()]
    }
}

pub struct ZeroField;

impl CylinderField for ZeroField {
    fn value(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }
    fn grad(&self, _x: f64, _y: f64) -> [f64; 2] {
        [0.0, 0.0]
    }
}

/// `‖u(·,0)‖_{L²(0,1; 4s²)} / ‖u‖_{H((0,1)×(0,1); y^(1-2s))}` where the energy
/// norm includes `u²` and `|∇u|²`. A zero field gives 0.
pub fn trace_ratio(u: &dyn CylinderField, s: &dyn Fn(f64) -> f64, rel_tol: f64) -> f64 {
    // splitting at the midpoint keeps kinks and steps of the test profiles on
    // a panel boundary
    let outer = |f: &dyn Fn(f64) -> f64| {
        integrate(f, 0.0, 0.5, 0.0, rel_tol).value + integrate(f, 0.5, 1.0, 0.0, rel_tol).value
    };
    let trace_sq = outer(&|x: f64| {
        let sv = s(x);
        4.0 * sv * sv * u.value(x, 0.0).powi(2)
    });
    let energy_sq = outer(&|x: f64| {
        let delta = 1.0 - 2.0 * s(x);
        integrate_power_weight(
            |y| {
                let g = u.grad(x, y);
                u.value(x, y).powi(2) + g[0] * g[0] + g[1] * g[1]
            },
            delta,
            1.0,
            0.0,
            rel_tol,
        )
        .value
    });
    if trace_sq == 0.0 && energy_sq == 0.0 {
        return 0.0;
    }
    (trace_sq / energy_sq).sqrt()
}

/// Named exponent profiles on `(0,1)` used by the trace battery.
pub fn s_profiles() -> Vec<(&'static str, Box<dyn Fn(f64) -> f64 + Sync>)> {
    let clip = |v: f64| v.clamp(1e-3, 1.0 - 1e-3);
    vec![
        ("const_0.25", Box::new(|_| 0.25)),
        ("const_0.5", Box::new(|_| 0.5)),
        ("abs_dist", Box::new(move |x: f64| clip((x - 0.5).abs()))),
        ("sine", Box::new(move |x: f64| clip(0.5 + 0.45 * (2.0 * PI * x).sin()))),
        ("step", Box::new(|x: f64| if x < 0.5 { 0.05 } else { 0.95 })),
    ]
}

fn unit(rng: &mut Xoshiro256PlusPlus) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Deterministic battery of random bump fields.
pub fn random_fields(count: usize, seed: u64) -> Vec<BumpField> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut coef = [0.0; 6];
            for c in coef.iter_mut() {
                *c = 4.0 * unit(&mut rng) - 2.0;
            }
            BumpField {
                coef,
                center: [unit(&mut rng), 0.6 * unit(&mut rng)],
                width: 0.08 + 0.5 * unit(&mut rng),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceCase {
    pub field: usize,
    pub profile: &'static str,
    pub ratio: f64,
}

/// Every field against every profile.
pub fn trace_battery(fields: usize, seed: u64) -> Vec<TraceCase> {
    use rayon::prelude::*;
    let f = random_fields(fields, seed);
    let profiles = s_profiles();
    let pairs: Vec<(usize, usize)> = (0..fields).flat_map(|i| (0..profiles.len()).map(move |p| (i, p))).collect();
    pairs
        .par_iter()
        .map(|&(i, p)| TraceCase { field: i, profile: profiles[p].0, ratio: trace_ratio(&f[i], &*profiles[p].1, 1e-8) })
        .collect()
}

/// Energy `∫_0^1 ∫_{-√y}^{√y} y^(1-2κ) |∇u|² dx dy` of the function whose
/// trace is the indicator of `x ≥ 0`, with `|∇u|² = 1/(4y) + x²/(16y³)`.
/// The x-integral is done in closed form, leaving
/// `∫_0^1 y^(-1/2-2κ) (1/24 + y/2) dy`.
pub fn disc_trace_energy(kappa: f64, rel_tol: f64) -> Result<f64> {
    ensure!(kappa >= 0.0, "kappa must be non-negative, got {kappa}");
    ensure!(kappa < 0.25, "energy diverges for kappa >= 1/4, got {kappa}");
    let delta = -0.5 - 2.0 * kappa;
    Ok(integrate_power_weight(|y| 1.0 / 24.0 + 0.5 * y, delta, 1.0, 0.0, rel_tol).value)
}

pub fn disc_trace_energy_closed_form(kappa: f64) -> f64 {
    0.5 / (1.5 - 2.0 * kappa) + (1.0 / 24.0) / (0.5 - 2.0 * kappa)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalConstants {
    pub s: f64,
    pub d_s: f64,
}

impl FractionalConstants {
    pub fn new(s: f64) -> Result<Self> {
        ensure!(s > 0.0 && s < 1.0, "s must lie in (0,1), got {s}");
        Ok(Self { s, d_s: extension_constant(s) })
    }

    /// Fidelity weight `ζ = μ s² / d_s` of the equivalent fractional problem.
    pub fn zeta(&self, mu: f64) -> f64 {
        mu * self.s * self.s / self.d_s
    }
}

/// Cosine-mode representation `Σ_k c_k cos(kπx)` of a trace on `(0,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalTrace {
    pub coeffs: Vec<f64>,
}

impl ModalTrace {
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().enumerate().map(|(k, c)| c * (k as f64 * PI * x).cos()).sum()
    }
}

/// Solution of `(-Δ)^s u + ζ (u - f) = 0` on `(0,1)` with Neumann conditions,
/// `ζ = μ s²/d_s`: `û_k = ζ f̂_k / ((kπ)^(2s) + ζ)` for `k ≤ mode_cap`.
pub fn constant_s_trace_oracle(f: &dyn Fn(f64) -> f64, s: f64, mu: f64, mode_cap: usize) -> Result<ModalTrace> {
    ensure!(mu > 0.0, "mu must be positive");
    let consts = FractionalConstants::new(s)?;
    let zeta = consts.zeta(mu);
    let coeffs = (0..=mode_cap)
        .map(|k| {
            let kf = k as f64;
            let norm = if k == 0 { 1.0 } else { 2.0 };
            let fk = norm * integrate(|x| f(x) * (kf * PI * x).cos(), 0.0, 1.0, 1e-14, 1e-12).value;
            let lam_s = (kf * PI).powf(2.0 * s);
            zeta * fk / (lam_s + zeta)
        })
        .collect();
    Ok(ModalTrace { coeffs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_weight_quotient() {
        for sec in [CrossSection::Ball, CrossSection::Square] {
            let q = a2_quotient(&WeightSpec::ConstantDelta(0.0), sec, 0.3, 0.5).unwrap();
            assert!((q - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_delta_closed_form_and_invariance() {
        for &d in &[-0.9, -0.3, 0.5, 0.99] {
            let expect = 1.0 / (1.0 - d * d);
            for sec in [CrossSection::Ball, CrossSection::Square] {
                for (c, r, y0) in [([0.0, 0.0], 0.2, 0.999_999), ([0.3, -0.1], 0.1, 0.5), ([-0.2, 0.25], 0.4, 0.05)] {
                    let q = a2_quotient_at(&WeightSpec::ConstantDelta(d), sec, c, r, y0).unwrap();
                    assert!(((q - expect) / expect).abs() < 1e-6, "d={d} {sec:?} {c:?}: {q} vs {expect}");
                }
            }
        }
    }

    #[test]
    fn power_law_blows_up() {
        let rs = [0.4, 0.2, 0.1, 0.05, 0.025];
        for sec in [CrossSection::Ball, CrossSection::Square] {
            let qs: Vec<f64> = rs.iter().map(|&r| a2_quotient(&WeightSpec::PowerLaw(1.0), sec, r, 0.5).unwrap()).collect();
            for w in qs.windows(2) {
                assert!(w[1] > w[0], "{sec:?}: {qs:?}");
            }
            if sec == CrossSection::Ball {
                assert!(qs[4] / qs[0] > 10.0, "{qs:?}");
            }
        }
    }

    #[test]
    fn power_law_square_matches_cartesian() {
        let polar = a2_quotient(&WeightSpec::PowerLaw(1.0), CrossSection::Square, 0.2, 0.5).unwrap();
        let shifted = a2_quotient_at(&WeightSpec::PowerLaw(1.0), CrossSection::Square, [1e-9, 0.0], 0.2, 0.5).unwrap();
        assert!(((polar - shifted) / polar).abs() < 1e-5, "{polar} vs {shifted}");
    }

    #[test]
    fn a2_contract() {
        let w = WeightSpec::PowerLaw(1.0);
        assert!(a2_quotient(&w, CrossSection::Ball, 1.2, 0.5).is_err());
        assert!(a2_quotient(&w, CrossSection::Ball, 0.3, 1.5).is_err());
        assert!(a2_quotient(&w, CrossSection::Square, 0.8, 0.5).is_err());
        assert!(a2_quotient(&WeightSpec::ConstantDelta(-1.0), CrossSection::Ball, 0.3, 0.5).is_err());
    }

    #[test]
    fn trace_ratio_closed_forms() {
        assert_eq!(trace_ratio(&ZeroField, &|_| 0.5, 1e-10), 0.0);
        let r = trace_ratio(&ExpDecay, &|_| 0.5, 1e-12);
        let expect = 1.0 / (1.0 - (-2.0f64).exp()).sqrt();
        assert!((r - expect).abs() < 1e-9, "{r} vs {expect}");
        assert!(r > 1.0 && r <= 6.0);
    }

    #[test]
    fn bump_gradient_matches_finite_differences() {
        for f in random_fields(5, 3) {
            let (x, y, h) = (0.37, 0.21, 1e-6);
            let g = f.grad(x, y);
            let gx = (f.value(x + h, y) - f.value(x - h, y)) / (2.0 * h);
            let gy = (f.value(x, y + h) - f.value(x, y - h)) / (2.0 * h);
            assert!((g[0] - gx).abs() < 1e-6 * (1.0 + gx.abs()));
            assert!((g[1] - gy).abs() < 1e-6 * (1.0 + gy.abs()));
        }
    }

    #[test]
    fn small_battery_respects_bound() {
        let cases = trace_battery(4, 11);
        assert_eq!(cases.len(), 20);
        assert!(cases.iter().all(|c| c.ratio.is_finite() && c.ratio <= 6.0), "{cases:?}");
    }

    #[test]
    fn disc_energy_values() {
        let e = disc_trace_energy(0.125, 1e-12).unwrap();
        assert!((e - 17.0 / 30.0).abs() < 1e-10);
        assert!((disc_trace_energy_closed_form(0.125) - 17.0 / 30.0).abs() < 1e-15);
        let e0 = disc_trace_energy(0.0, 1e-12).unwrap();
        assert!((e0 - 5.0 / 12.0).abs() < 1e-10);
        let e24 = disc_trace_energy(0.24, 1e-12).unwrap();
        assert!(((e24 - disc_trace_energy_closed_form(0.24)) / e24).abs() < 1e-8);
        assert!(e24 > e && e24.is_finite());
        assert!(disc_trace_energy(0.25, 1e-10).is_err());
        assert!(disc_trace_energy(0.3, 1e-10).is_err());
    }

    #[test]
    fn disc_energy_matches_direct_double_integral() {
        // oracle: integrate the gradient formula over x numerically as well
        let kappa = 0.125;
        let inner = |y: f64| {
            let s = y.sqrt();
            integrate(|x| y.powf(1.0 - 2.0 * kappa) * (0.25 / y + x * x / (16.0 * y.powi(3))), -s, s, 0.0, 1e-12).value
        };
        let direct = integrate(inner, 0.0, 1.0, 0.0, 1e-10).value;
        assert!((direct - 17.0 / 30.0).abs() < 1e-7, "{direct}");
    }

    #[test]
    fn fractional_constants() {
        let c = FractionalConstants::new(0.5).unwrap();
        assert!((c.d_s - 1.0).abs() < 1e-15);
        assert!(FractionalConstants::new(1.0).is_err());
    }

    #[test]
    fn oracle_examples() {
        let one = constant_s_trace_oracle(&|_| 1.0, 0.4, 3.0, 6).unwrap();
        for &x in &[0.0, 0.3, 0.9] {
            assert!((one.eval(x) - 1.0).abs() < 1e-12);
        }
        let tr = constant_s_trace_oracle(&|x: f64| (PI * x).cos(), 0.5, 1.0, 8).unwrap();
        let amp = 0.25 / (PI + 0.25);
        assert!((tr.coeffs[1] - amp).abs() < 1e-12);
        assert!((amp - 0.0737).abs() < 1e-4);
        assert!(tr.coeffs.iter().enumerate().all(|(k, c)| k == 1 || c.abs() < 1e-12));
        let mean_only = constant_s_trace_oracle(&|x: f64| x * x, 0.7, 5.0, 0).unwrap();
        assert_eq!(mean_only.coeffs.len(), 1);
        assert!((mean_only.eval(0.2) - 1.0 / 3.0).abs() < 1e-12);
    }
}
