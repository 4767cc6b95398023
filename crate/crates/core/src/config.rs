use serde::{Deserialize, Serialize};

use crate::error::{EsnError, Result};

/// Hyperparameters shared by every construction path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EsnConfig {
    pub units: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub spectral_radius: f64,
    pub leak_rate: f64,
    pub input_scaling: f64,
    pub connectivity_r: f64,
    pub connectivity_in: f64,
    pub connectivity_fb: f64,
    pub ridge_alpha: f64,
    pub use_bias: bool,
    pub use_feedback: bool,
    pub seed: u64,
    pub washout: usize,
}

impl Default for EsnConfig {
    fn default() -> Self {
        Self {
            units: 100,
            d_in: 1,
            d_out: 1,
            spectral_radius: 0.9,
            leak_rate: 1.0,
            input_scaling: 1.0,
            connectivity_r: 1.0,
            connectivity_in: 1.0,
            connectivity_fb: 1.0,
            ridge_alpha: 1e-8,
            use_bias: true,
            use_feedback: false,
            seed: 0,
            washout: 100,
        }
    }
}

fn in_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(EsnError::InvalidConfig(format!(
            "{name} must lie in (0, 1], got {v}"
        )))
    }
}

impl EsnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.units == 0 || self.d_in == 0 || self.d_out == 0 {
            return Err(EsnError::InvalidConfig(
                "units, d_in and d_out must be positive".into(),
            ));
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius.is_finite()) {
            return Err(EsnError::InvalidConfig(format!(
                "spectral_radius must be positive, got {}",
                self.spectral_radius
            )));
        }
        if !(self.input_scaling > 0.0 && self.input_scaling.is_finite()) {
            return Err(EsnError::InvalidConfig(format!(
                "input_scaling must be positive, got {}",
                self.input_scaling
            )));
        }
        in_unit("leak_rate", self.leak_rate)?;
        in_unit("connectivity_r", self.connectivity_r)?;
        in_unit("connectivity_in", self.connectivity_in)?;
        in_unit("connectivity_fb", self.connectivity_fb)?;
        if !(self.ridge_alpha >= 0.0) {
            return Err(EsnError::InvalidConfig(format!(
                "ridge_alpha must be nonnegative, got {}",
                self.ridge_alpha
            )));
        }
        Ok(())
    }

    /// Width `N'` of the extended state `[1, y(t-1), r(t)]`.
    pub fn extended_width(&self) -> usize {
        self.units + self.prefix_width()
    }

    /// Columns placed before the reservoir block in the extended state.
    pub fn prefix_width(&self) -> usize {
        usize::from(self.use_bias) + if self.use_feedback { self.d_out } else { 0 }
    }
}
