use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("invalid printer profile: {0}")]
pub struct ProfileError(pub String);

/// Nozzle and process constants. Lengths in mm, speeds in mm/s, `alpha` in
/// radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrinterProfile {
    /// Inner nozzle diameter.
    pub w: f64,
    /// Outer nozzle diameter.
    pub tau: f64,
    /// Inclination of the nozzle sides.
    pub alpha: f64,
    /// Base layer thickness.
    pub h: f64,
    pub f_ini: f64,
    pub f_min: f64,
    /// Slicing-plane position within the layer, in `[0, h]`.
    pub s: f64,
    /// Track width.
    pub d: f64,
    pub filament_diameter: f64,
}

impl Default for PrinterProfile {
    fn default() -> Self {
        PrinterProfile {
            w: 0.8,
            tau: 1.25,
            alpha: 45f64.to_radians(),
            h: 0.6,
            f_ini: 20.0,
            f_min: 13.0,
            s: 0.3,
            d: 0.8,
            filament_diameter: 2.85,
        }
    }
}

impl PrinterProfile {
    pub fn with_s(mut self, s: f64) -> Self {
        self.s = s;
        self
    }

    pub fn filament_area(&self) -> f64 {
        std::f64::consts::PI * self.filament_diameter * self.filament_diameter / 4.0
    }

    /// Lower and upper bound on the vertical displacement of a vertex.
    pub fn window(&self) -> (f64, f64) {
        (self.s - self.h, self.s)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let fields = [
            ("w", self.w),
            ("tau", self.tau),
            ("alpha", self.alpha),
            ("h", self.h),
            ("f_ini", self.f_ini),
            ("f_min", self.f_min),
            ("s", self.s),
            ("d", self.d),
            ("filament_diameter", self.filament_diameter),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(ProfileError(format!("{name} must be finite")));
        }
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(ProfileError(msg.into())) };
        check(self.w > 0.0 && self.w < self.tau, "need 0 < w < tau")?;
        check(self.alpha > 0.0 && self.alpha <= FRAC_PI_2 + 1e-12, "need 0 < alpha <= 90 degrees")?;
        check(self.h > 0.0, "need h > 0")?;
        check(self.f_min > 0.0 && self.f_min <= self.f_ini, "need 0 < f_min <= f_ini")?;
        check(self.s >= 0.0 && self.s <= self.h, "need 0 <= s <= h")?;
        check(self.d > 0.0, "need d > 0")?;
        check(self.filament_diameter > 0.0, "need filament_diameter > 0")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_centered() {
        let p = PrinterProfile::default();
        p.validate().unwrap();
        assert_eq!(p.window(), (-0.3, 0.3));
    }

    #[test]
    fn rejects_bad_values() {
        let p = PrinterProfile::default();
        assert!(PrinterProfile { alpha: 0.0, ..p }.validate().is_err());
        assert!(PrinterProfile { tau: 0.5, ..p }.validate().is_err());
        assert!(PrinterProfile { s: 0.7, ..p }.validate().is_err());
        assert!(PrinterProfile { f_min: 25.0, ..p }.validate().is_err());
        assert!(PrinterProfile { h: f64::NAN, ..p }.validate().is_err());
    }
}
