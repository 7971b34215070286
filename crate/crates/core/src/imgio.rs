//! Grayscale image grids, Netpbm PGM I/O, seeded Gaussian noise and
//! continuous bilinear sampling on the unit square.
//!
//! Pixel `(i, j)` (row `i`, column `j`) of a `width × height` grid has its
//! center at `((j + 0.5) / width, (i + 0.5) / height)` in `[0,1]²`.
//!
//! Noise uses Xoshiro256++ (seeded through SplitMix64 by
//! `SeedableRng::seed_from_u64`, `rand_xoshiro` 0.6) and the Marsaglia polar
//! variant of Box–Muller; uniforms are the top 53 bits of each `u64`. Both
//! normals of every accepted pair are consumed in order.

use std::fs;
use std::path::Path;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{ensure, Error, PgmErrorKind, Result};

/// Row-major grayscale intensity field.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        ensure!(width > 0 && height > 0, "image dimensions must be positive, got {width}x{height}");
        ensure!(
            values.len() == width * height,
            "image of {width}x{height} needs {} values, got {}",
            width * height,
            values.len()
        );
        ensure!(values.iter().all(|v| v.is_finite()), "image values must be finite");
        Ok(Self { width, height, values })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0);
        Self { width, height, values: vec![value; width * height] }
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0);
        let mut values = Vec::with_capacity(width * height);
        for i in 0..height {
            for j in 0..width {
                values.push(f(i, j));
            }
        }
        Self { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.width + col] = v;
    }

    /// Center of pixel `(row, col)` in the unit square.
    #[inline]
    pub fn pixel_center(&self, row: usize, col: usize) -> [f64; 2] {
        [(col as f64 + 0.5) / self.width as f64, (row as f64 + 0.5) / self.height as f64]
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn clamped(mut self) -> Self {
        for v in &mut self.values {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// A scalar function on the unit square.
pub trait Field2d: Sync {
    fn value(&self, x: [f64; 2]) -> f64;
}

impl Field2d for ImageGrid {
    fn value(&self, x: [f64; 2]) -> f64 {
        sample_bilinear(self, x)
    }
}

impl<F: Fn([f64; 2]) -> f64 + Sync> Field2d for F {
    fn value(&self, x: [f64; 2]) -> f64 {
        self(x)
    }
}

/// Bilinear interpolation between pixel centers, constant beyond the
/// outermost centers.
pub fn sample_bilinear(grid: &ImageGrid, x: [f64; 2]) -> f64 {
    let (j0, tx) = lattice_coord(x[0], grid.width);
    let (i0, ty) = lattice_coord(x[1], grid.height);
    let j1 = (j0 + 1).min(grid.width - 1);
    let i1 = (i0 + 1).min(grid.height - 1);
    let top = grid.get(i0, j0) * (1.0 - tx) + grid.get(i0, j1) * tx;
    let bottom = grid.get(i1, j0) * (1.0 - tx) + grid.get(i1, j1) * tx;
    top * (1.0 - ty) + bottom * ty
}

fn lattice_coord(x: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let c = (x * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
    let k = (c.floor() as usize).min(n - 2);
    (k, c - k as f64)
}

/// Adds i.i.d. `N(0, sigma²)` noise from the seeded stream and clamps to `[0,1]`.
pub fn add_gaussian_noise(grid: &ImageGrid, sigma: f64, seed: u64) -> ImageGrid {
    let noise = gaussian_samples(grid.len(), sigma, seed);
    let values = grid.values.iter().zip(&noise).map(|(v, n)| (v + n).clamp(0.0, 1.0)).collect();
    ImageGrid { width: grid.width, height: grid.height, values }
}

/// The raw (unclamped) perturbations used by [`add_gaussian_noise`].
pub fn gaussian_samples(count: usize, sigma: f64, seed: u64) -> Vec<f64> {
    assert!(sigma >= 0.0, "sigma must be non-negative");
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let (a, b) = polar_pair(&mut rng);
        out.push(sigma * a);
        if out.len() < count {
            out.push(sigma * b);
        }
    }
    out
}

fn polar_pair(rng: &mut Xoshiro256PlusPlus) -> (f64, f64) {
    loop {
        let u = 2.0 * unit_f64(rng.next_u64()) - 1.0;
        let v = 2.0 * unit_f64(rng.next_u64()) - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            let factor = (-2.0 * s.ln() / s).sqrt();
            return (u * factor, v * factor);
        }
    }
}

#[inline]
fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

/// Writes binary P5 with maxval 255.
pub fn save_pgm(grid: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(grid)).map_err(|e| Error::io(path, e))
}

pub fn encode_pgm(grid: &ImageGrid) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", grid.width, grid.height);
    let mut out = Vec::with_capacity(header.len() + grid.len());
    out.extend_from_slice(header.as_bytes());
    out.extend(grid.values.iter().map(|&v| quantize(v)));
    out
}

#[inline]
fn quantize(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

pub fn decode_pgm(bytes: &[u8]) -> Result<ImageGrid> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(2);
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(Error::Pgm {
                offset: 0,
                kind: PgmErrorKind::UnsupportedMagic(String::from_utf8_lossy(other).into_owned()),
            })
        }
    };
    let width = cur.header_number("width")?;
    let height = cur.header_number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.header_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Pgm {
            offset: 2,
            kind: PgmErrorKind::MalformedHeader("zero image dimension"),
        });
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Pgm { offset: maxval_at, kind: PgmErrorKind::MaxvalOutOfRange(maxval) });
    }
    let (w, h) = (width as usize, height as usize);
    let n = w * h;
    let scale = 1.0 / maxval as f64;
    let mut values = Vec::with_capacity(n);

    if binary {
        // exactly one whitespace byte separates maxval from the raster
        match cur.peek() {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => {
                return Err(Error::Pgm {
                    offset: cur.pos,
                    kind: PgmErrorKind::MalformedHeader("missing whitespace before raster"),
                })
            }
        }
        let bps = if maxval > 255 { 2 } else { 1 };
        let start = cur.pos;
        let available = bytes.len() - start;
        if available < n * bps {
            return Err(Error::Pgm {
                offset: start,
                kind: PgmErrorKind::Truncated { expected: n * bps, found: available },
            });
        }
        for k in 0..n {
            let at = start + k * bps;
            let raw = if bps == 1 {
                bytes[at] as u64
            } else {
                u16::from_be_bytes([bytes[at], bytes[at + 1]]) as u64
            };
            if raw > maxval {
                return Err(Error::Pgm { offset: at, kind: PgmErrorKind::SampleAboveMaxval(raw) });
            }
            values.push(raw as f64 * scale);
        }
    } else {
        for _ in 0..n {
            cur.skip_space_and_comments();
            let at = cur.pos;
            if cur.peek().is_none() {
                return Err(Error::Pgm {
                    offset: at,
                    kind: PgmErrorKind::Truncated { expected: n, found: values.len() },
                });
            }
            let raw = cur.number().ok_or(Error::Pgm { offset: at, kind: PgmErrorKind::BadSample })?;
            if raw > maxval {
                return Err(Error::Pgm { offset: at, kind: PgmErrorKind::SampleAboveMaxval(raw) });
            }
            values.push(raw as f64 * scale);
        }
    }
    Ok(ImageGrid { width: w, height: h, values })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> &[u8] {
        let end = (self.pos + n).min(self.bytes.len());
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        s
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(c) = self.peek() {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Option<u64> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok()?.parse().ok()
    }

    fn header_number(&mut self, what: &'static str) -> Result<u64> {
        let before = self.pos;
        self.skip_space_and_comments();
        if self.pos == before {
            // fields must be separated by whitespace
            return Err(Error::Pgm { offset: self.pos, kind: PgmErrorKind::MalformedHeader(what) });
        }
        let at = self.pos;
        self.number().ok_or(Error::Pgm { offset: at, kind: PgmErrorKind::MalformedHeader(what) })
    }
}
