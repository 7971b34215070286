//! PSNR and SSIM against a reference image, dynamic range 1.
//!
//! SSIM follows the original reference parameters: 11×11 Gaussian window
//! with σ = 1.5, K₁ = 0.01, K₂ = 0.03, evaluated at every pixel with
//! symmetric (half-sample mirror) padding and averaged.

use crate::error::{ensure, Result};
use crate::imgio::ImageGrid;

const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScorePair {
    /// dB; `f64::INFINITY` for identical images.
    pub psnr: f64,
    pub ssim: f64,
}

pub fn score(a: &ImageGrid, b: &ImageGrid) -> Result<ScorePair> {
    Ok(ScorePair { psnr: psnr(a, b)?, ssim: ssim(a, b)? })
}

pub fn mse(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    ensure!(
        a.same_shape(b),
        "image shapes differ: {}x{} vs {}x{}",
        a.width(),
        a.height(),
        b.width(),
        b.height()
    );
    let sum: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

pub fn psnr(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (k, wk) in w.iter_mut().enumerate() {
        let d = k as f64 - c;
        *wk = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

#[inline]
fn mirror(k: isize, n: usize) -> usize {
    let n = n as isize;
    let mut k = k;
    loop {
        if k < 0 {
            k = -k - 1;
        } else if k >= n {
            k = 2 * n - k - 1;
        } else {
            return k as usize;
        }
    }
}

/// Separable Gaussian filter with symmetric padding.
fn blur(values: &[f64], width: usize, height: usize, w: &[f64; WINDOW]) -> Vec<f64> {
    let r = (WINDOW / 2) as isize;
    let mut tmp = vec![0.0; values.len()];
    for i in 0..height {
        let row = &values[i * width..(i + 1) * width];
        for j in 0..width {
            let mut acc = 0.0;
            for (k, wk) in w.iter().enumerate() {
                acc += wk * row[mirror(j as isize + k as isize - r, width)];
            }
            tmp[i * width + j] = acc;
        }
    }
    let mut out = vec![0.0; values.len()];
    for i in 0..height {
        for j in 0..width {
            let mut acc = 0.0;
            for (k, wk) in w.iter().enumerate() {
                acc += wk * tmp[mirror(i as isize + k as isize - r, height) * width + j];
            }
            out[i * width + j] = acc;
        }
    }
    out
}

pub fn ssim(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    ensure!(a.same_shape(b), "image shapes differ");
    ensure!(
        a.width() >= WINDOW && a.height() >= WINDOW,
        "SSIM needs at least {WINDOW}x{WINDOW} pixels, got {}x{}",
        a.width(),
        a.height()
    );
    let (w, h) = (a.width(), a.height());
    let win = gaussian_window();
    let x = a.values();
    let y = b.values();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let mu_x = blur(x, w, h, &win);
    let mu_y = blur(y, w, h, &win);
    let e_xx = blur(&xx, w, h, &win);
    let e_yy = blur(&yy, w, h, &win);
    let e_xy = blur(&xy, w, h, &win);
    let c1 = (K1 * 1.0).powi(2);
    let c2 = (K2 * 1.0).powi(2);
    let mut total = 0.0;
    for k in 0..x.len() {
        let (mx, my) = (mu_x[k], mu_y[k]);
        let sxx = e_xx[k] - mx * mx;
        let syy = e_yy[k] - my * my;
        let sxy = e_xy[k] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * sxy + c2))
            / ((mx * mx + my * my + c1) * (sxx + syy + c2));
    }
    Ok(total / x.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgio::add_gaussian_noise;

    fn pattern(w: usize, h: usize) -> ImageGrid {
        ImageGrid::from_fn(w, h, |i, j| 0.5 + 0.4 * ((i as f64 * 0.3).sin() * (j as f64 * 0.2).cos()))
    }

    #[test]
    fn identical_images() {
        let a = pattern(16, 13);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_offset_psnr() {
        let a = ImageGrid::filled(12, 12, 0.3);
        let b = ImageGrid::filled(12, 12, 0.4);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn shifted_luminance_lowers_ssim() {
        let a = pattern(20, 20);
        let b = ImageGrid::new(20, 20, a.values().iter().map(|v| v + 0.5).collect()).unwrap();
        let s = ssim(&a, &b).unwrap();
        assert!(s < 1.0 && s > 0.0, "{s}");
    }

    #[test]
    fn contract_violations() {
        let a = ImageGrid::filled(12, 12, 0.3);
        let b = ImageGrid::filled(12, 11, 0.3);
        assert!(psnr(&a, &b).is_err());
        assert!(ssim(&a, &b).is_err());
        let small = ImageGrid::filled(10, 10, 0.1);
        assert!(ssim(&small, &small).is_err());
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let a = pattern(48, 48);
        let mut last = f64::INFINITY;
        for &s in &[0.02, 0.05, 0.1] {
            let p = psnr(&a, &add_gaussian_noise(&a, s, 11)).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn metrics_are_symmetric() {
        let a = pattern(24, 17);
        let b = add_gaussian_noise(&a, 0.07, 5);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn window_is_normalized_and_mirror_pads() {
        let w = gaussian_window();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(mirror(-1, 5), 0);
        assert_eq!(mirror(-3, 5), 2);
        assert_eq!(mirror(5, 5), 4);
        assert_eq!(mirror(7, 5), 2);
        // a constant image blurs to itself
        let flat = vec![0.25; 36];
        assert!(blur(&flat, 6, 6, &w).iter().all(|v| (v - 0.25).abs() < 1e-15));
    }
}
