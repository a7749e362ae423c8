use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::contact::Ground;

/// Terrain profile in the sagittal plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Terrain {
    Flat {
        #[serde(default)]
        height: f64,
    },
    /// Raised-cosine bumps `h = peak/2 (1 - cos 2π(x - start)/λ)` on
    /// `[start, start + length]`, flat elsewhere.
    Wave {
        #[serde(default = "default_start")]
        start: f64,
        #[serde(default = "default_length")]
        length: f64,
        #[serde(default = "default_peak")]
        peak: f64,
        #[serde(default = "default_wavelength")]
        wavelength: f64,
    },
}

fn default_start() -> f64 {
    0.5
}
fn default_length() -> f64 {
    11.5
}
fn default_peak() -> f64 {
    0.2
}
fn default_wavelength() -> f64 {
    2.3
}

impl Default for Terrain {
    fn default() -> Self {
        Terrain::Flat { height: 0.0 }
    }
}

impl Terrain {
    pub fn wave() -> Self {
        Terrain::Wave { start: default_start(), length: default_length(), peak: default_peak(), wavelength: default_wavelength() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        match *self {
            Terrain::Flat { height } if height.is_finite() => Ok(()),
            Terrain::Flat { .. } => Err(SimError::Config("terrain.height must be finite".into())),
            Terrain::Wave { start, length, peak, wavelength } => {
                if !(start.is_finite() && length > 0.0 && wavelength > 0.0 && peak.is_finite()) {
                    return Err(SimError::Config("terrain wave needs finite start, positive length and wavelength".into()));
                }
                let periods = length / wavelength;
                if (periods - periods.round()).abs() > 1e-9 * periods.max(1.0) {
                    return Err(SimError::Config(format!(
                        "terrain.length ({length}) must be a whole number of wavelengths ({wavelength}) for a continuous profile"
                    )));
                }
                Ok(())
            }
        }
    }

    fn phase(&self, x: f64) -> Option<(f64, f64, f64)> {
        match *self {
            Terrain::Wave { start, length, peak, wavelength } if x >= start && x <= start + length => {
                let k = 2.0 * PI / wavelength;
                Some((k * (x - start), k, 0.5 * peak))
            }
            _ => None,
        }
    }
}

impl Ground for Terrain {
    fn height(&self, x: f64) -> f64 {
        match (self, self.phase(x)) {
            (Terrain::Flat { height }, _) => *height,
            (_, Some((p, _, a))) => a * (1.0 - p.cos()),
            _ => 0.0,
        }
    }

    fn slope(&self, x: f64) -> f64 {
        self.phase(x).map_or(0.0, |(p, k, a)| a * k * p.sin())
    }

    fn curvature(&self, x: f64) -> f64 {
        self.phase(x).map_or(0.0, |(p, k, a)| a * k * k * p.cos())
    }
}
