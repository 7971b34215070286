//! Synthetic test images and the parameter sets of the three examples.
//!
//! Geometry in unit-square coordinates (x to the right, y down the rows),
//! evaluated at pixel centers:
//!
//! * shapes: disc centered at (0.28, 0.30) with radius 0.14; square
//!   [0.58, 0.85] × [0.15, 0.42]; triangle (0.2, 0.6), (0.2, 0.9), (0.65, 0.75)
//!   whose two slanted edges have slopes ±1/3. Intensity 1 on background 0.
//! * stripes: six vertical stripes 0.8, 0.7, 0.6, 0.5, 0.4, 0.35 from left to
//!   right, each `size / 6` columns wide with the remainder in the last one.

use std::fmt;
use std::str::FromStr;

use crate::config::ExperimentConfig;
use crate::error::{ensure, Error, Result};
use crate::imgio::ImageGrid;

/// Bumped whenever fixture geometry or intensities change.
pub const FIXTURE_VERSION: &str = "fixtures-v1";

pub const STRIPE_LEVELS: [f64; 6] = [0.8, 0.7, 0.6, 0.5, 0.4, 0.35];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleId {
    Shapes,
    Stripes,
    Cameraman,
}

impl FromStr for ExampleId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shapes" => Ok(ExampleId::Shapes),
            "stripes" => Ok(ExampleId::Stripes),
            "cameraman" => Ok(ExampleId::Cameraman),
            _ => Err(Error::Config(format!("unknown example {s:?} (expected shapes, stripes or cameraman)"))),
        }
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExampleId::Shapes => "shapes",
            ExampleId::Stripes => "stripes",
            ExampleId::Cameraman => "cameraman",
        })
    }
}

impl ExampleId {
    /// Whether the image is generated in-repo (cameraman must be supplied).
    pub fn is_synthetic(&self) -> bool {
        !matches!(self, ExampleId::Cameraman)
    }

    pub fn generate(&self, size: usize) -> Result<ImageGrid> {
        match self {
            ExampleId::Shapes => make_shapes_image(size),
            ExampleId::Stripes => make_stripes_image(size),
            ExampleId::Cameraman => Err(Error::Config("the cameraman image is not bundled; pass --input".into())),
        }
    }
}

fn in_shapes(x: f64, y: f64) -> bool {
    let disc = (x - 0.28).powi(2) + (y - 0.30).powi(2) <= 0.14 * 0.14;
    let square = (0.58..=0.85).contains(&x) && (0.15..=0.42).contains(&y);
    let tri = x >= 0.2 && y >= 0.6 + (x - 0.2) / 3.0 && y <= 0.9 - (x - 0.2) / 3.0;
    disc || square || tri
}

pub fn make_shapes_image(size: usize) -> Result<ImageGrid> {
    ensure!(size >= 64, "shapes fixture needs size >= 64, got {size}");
    let n = size as f64;
    Ok(ImageGrid::from_fn(size, size, |i, j| {
        if in_shapes((j as f64 + 0.5) / n, (i as f64 + 0.5) / n) {
            1.0
        } else {
            0.0
        }
    }))
}

pub fn make_stripes_image(size: usize) -> Result<ImageGrid> {
    ensure!(size >= 6, "stripes fixture needs at least 6 columns, got {size}");
    let w = size / 6;
    Ok(ImageGrid::from_fn(size, size, |_, j| STRIPE_LEVELS[(j / w).min(5)]))
}

/// Parameter set of an example; everything not listed is shared.
pub fn experiment_defaults(id: ExampleId) -> ExperimentConfig {
    let base = ExperimentConfig::default();
    match id {
        ExampleId::Shapes => ExperimentConfig { lambda: 300.0, nu: 200.0, mu: 8050.0, size: 128, ..base },
        ExampleId::Stripes => ExperimentConfig { lambda: 15.0, nu: 100.0, mu: 2900.0, size: 96, ..base },
        ExampleId::Cameraman => ExperimentConfig { lambda: 0.7, nu: 20.0, mu: 1e4, ..base },
    }
}

/// Sidecar text stored next to a written fixture.
pub fn fixture_sidecar(id: ExampleId, size: usize, sigma: f64, seed: u64) -> String {
    format!(
        "version = {FIXTURE_VERSION}\nfixture = {id}\nsize = {size}\nsigma = {sigma:e}\nseed = {seed}\nnoise = xoshiro256++ polar gaussian, clamped to [0,1]\n"
    )
}
