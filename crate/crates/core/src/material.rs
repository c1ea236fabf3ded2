//! Material constants and the continuous bond degradation law.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::SetupError;

/// Kinematic idealisation that selects the bond-constant closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionMode {
    OneD,
    PlaneStress,
    PlaneStrain,
    ThreeD,
}

impl DimensionMode {
    pub fn dimension(self) -> usize {
        match self {
            DimensionMode::OneD => 1,
            DimensionMode::PlaneStress | DimensionMode::PlaneStrain => 2,
            DimensionMode::ThreeD => 3,
        }
    }
}

/// Elastic parameters of the bond network.
///
/// `thickness` is only read in the plane modes and `area` only in 1D. Both
/// fall back to the grid spacing (`Δx` and `Δx²`) when the scenario leaves
/// them out; see [`MaterialParams::resolved`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialParams {
    pub youngs_modulus: f64,
    pub density: f64,
    pub mode: DimensionMode,
    pub thickness: Option<f64>,
    pub area: Option<f64>,
    pub horizon: f64,
}

impl MaterialParams {
    /// Fills the geometric factor the mode needs from the grid spacing.
    pub fn resolved(mut self, spacing: f64) -> Self {
        match self.mode {
            DimensionMode::PlaneStress | DimensionMode::PlaneStrain => {
                self.thickness.get_or_insert(spacing);
            }
            DimensionMode::OneD => {
                self.area.get_or_insert(spacing * spacing);
            }
            DimensionMode::ThreeD => {}
        }
        self
    }

    pub fn validate(&self) -> Result<(), SetupError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SetupError::Material(format!("{name} must be positive, got {v}")))
            }
        };
        positive("Young's modulus", self.youngs_modulus)?;
        positive("density", self.density)?;
        positive("horizon", self.horizon)?;
        if let Some(h) = self.thickness {
            positive("thickness", h)?;
        }
        if let Some(a) = self.area {
            positive("cross-section area", a)?;
        }
        Ok(())
    }

    /// Pairwise stiffness coefficient `c` in Pa/m⁴.
    pub fn bond_constant(&self) -> Result<f64, SetupError> {
        bond_constant(self)
    }
}

/// Closed-form bond constant for each dimension mode.
pub fn bond_constant(mat: &MaterialParams) -> Result<f64, SetupError> {
    mat.validate()?;
    let e = mat.youngs_modulus;
    let d = mat.horizon;
    let c = match mat.mode {
        DimensionMode::OneD => {
            let a = mat
                .area
                .ok_or_else(|| SetupError::Material("1D mode needs a cross-section area".into()))?;
            2.0 * e / (PI * d * d * a)
        }
        DimensionMode::PlaneStress => {
            let h = mat
                .thickness
                .ok_or_else(|| SetupError::Material("plane stress needs a thickness".into()))?;
            9.0 * e / (PI * d * d * d * h)
        }
        DimensionMode::PlaneStrain => {
            let h = mat
                .thickness
                .ok_or_else(|| SetupError::Material("plane strain needs a thickness".into()))?;
            48.0 * e / (5.0 * PI * d * d * d * h)
        }
        DimensionMode::ThreeD => 12.0 * e / (PI * d * d * d * d),
    };
    Ok(c)
}

/// Parameters of the tanh-shaped degradation between onset and critical stretch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamageLaw {
    /// Stretch at which degradation starts (`s_m`).
    pub onset_stretch: f64,
    /// Stretch at which a bond carries no force (`s_c`).
    pub critical_stretch: f64,
    /// Steepness of the transition (`β ≥ 0`).
    pub rate: f64,
    /// Evaluate the law at the historical maximum stretch so cracks never heal.
    #[serde(default = "default_irreversible")]
    pub irreversible: bool,
}

fn default_irreversible() -> bool {
    true
}

impl DamageLaw {
    pub fn new(onset_stretch: f64, critical_stretch: f64, rate: f64) -> Self {
        Self {
            onset_stretch,
            critical_stretch,
            rate,
            irreversible: true,
        }
    }

    pub fn validate(&self) -> Result<(), SetupError> {
        if !(self.onset_stretch > 0.0 && self.onset_stretch < self.critical_stretch) {
            return Err(SetupError::Material(format!(
                "damage law needs 0 < s_m < s_c, got s_m = {}, s_c = {}",
                self.onset_stretch, self.critical_stretch
            )));
        }
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(SetupError::Material(format!(
                "degradation rate must be non-negative, got {}",
                self.rate
            )));
        }
        Ok(())
    }

    fn band_argument(&self, s: f64) -> f64 {
        let (sm, sc) = (self.onset_stretch, self.critical_stretch);
        self.rate * (sm + sc - 2.0 * s) / (sm - sc)
    }

    /// Degradation factor `T_s ∈ [0, 1]`.
    pub fn degradation(&self, s: f64) -> f64 {
        if s <= self.onset_stretch {
            1.0
        } else if s >= self.critical_stretch {
            0.0
        } else {
            0.5 * (1.0 - self.band_argument(s).tanh())
        }
    }

    /// `dT_s/ds`. Zero on the two constant branches.
    pub fn slope(&self, s: f64) -> f64 {
        if s <= self.onset_stretch || s >= self.critical_stretch {
            return 0.0;
        }
        let t = self.band_argument(s).tanh();
        self.rate / (self.onset_stretch - self.critical_stretch) * (1.0 - t * t)
    }

    /// Size of the step the law takes at either band edge, `½(1 − tanh β)`.
    pub fn edge_jump(&self) -> f64 {
        0.5 * (1.0 - self.rate.tanh())
    }

    pub fn in_band(&self, s: f64) -> bool {
        s > self.onset_stretch && s < self.critical_stretch
    }
}

/// Free-function form of [`DamageLaw::degradation`].
pub fn degradation(s: f64, law: &DamageLaw) -> f64 {
    law.degradation(s)
}
