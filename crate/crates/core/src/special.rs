//! Gamma function and the extension normalization constant.

use std::f64::consts::PI;

// Lanczos approximation, g = 7, n = 9 (the coefficient set popularized by
// Numerical Recipes 3rd ed. / Godfrey); relative error below 1e-15 on the
// positive axis.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = LANCZOS[0];
        let t = x + LANCZOS_G + 0.5;
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

/// `d_s = 2^(1-2s) Γ(1-s) / Γ(s)` for `s ∈ (0,1)`.
pub fn extension_constant(s: f64) -> f64 {
    assert!(s > 0.0 && s < 1.0, "s must lie in (0,1), got {s}");
    2f64.powf(1.0 - 2.0 * s) * gamma(1.0 - s) / gamma(s)
}
