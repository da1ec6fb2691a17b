use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, Gamma};

use crate::error::{Result, TribeError};

/// Double-gamma haemodynamic response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hrf {
    pub peak_shape: f64,
    pub undershoot_shape: f64,
    pub scale_s: f64,
    pub undershoot_ratio: f64,
    pub length_s: f64,
}

impl Default for Hrf {
    fn default() -> Self {
        Hrf {
            peak_shape: 6.0,
            undershoot_shape: 16.0,
            scale_s: 1.0,
            undershoot_ratio: 1.0 / 6.0,
            length_s: 32.0,
        }
    }
}

impl Hrf {
    pub fn validate(&self) -> Result<()> {
        if self.peak_shape > 1.0
            && self.undershoot_shape > 1.0
            && self.scale_s > 0.0
            && self.undershoot_ratio >= 0.0
            && self.length_s > 0.0
        {
            Ok(())
        } else {
            Err(TribeError::InvalidConfig(format!("invalid HRF {self:?}")))
        }
    }

    /// Response at lag `t` seconds; zero outside `[0, length_s)`.
    pub fn at(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= self.length_s {
            return 0.0;
        }
        let rate = 1.0 / self.scale_s;
        let peak = Gamma::new(self.peak_shape, rate).expect("validated shape");
        let under = Gamma::new(self.undershoot_shape, rate).expect("validated shape");
        peak.pdf(t) - self.undershoot_ratio * under.pdf(t)
    }

    /// Lag of the maximum, searched on a 0.01 s grid.
    pub fn peak_time(&self) -> f64 {
        (1..(self.length_s * 100.0) as usize)
            .map(|i| i as f64 / 100.0)
            .max_by(|a, b| self.at(*a).total_cmp(&self.at(*b)))
            .unwrap_or(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_shape() {
        let h = Hrf::default();
        let peak = h.peak_time();
        assert!((4.5..=5.5).contains(&peak), "peak at {peak}");
        // undershoot is negative around 15 s
        assert!(h.at(15.0) < 0.0);
        assert_eq!(h.at(0.0), 0.0);
        assert_eq!(h.at(40.0), 0.0);
        // gamma(6, 1) density at 5 s: 5^5 e^-5 / 120
        let expected = 5f64.powi(5) * (-5f64).exp() / 120.0
            - (5f64.powi(15) * (-5f64).exp() / 1_307_674_368_000.0) / 6.0;
        assert!((h.at(5.0) - expected).abs() < 1e-12);
    }
}
