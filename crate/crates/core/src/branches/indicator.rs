use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid;
use crate::error::{Error, Result};

/// Threshold `tau` and steepness `k` of the smooth indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothIndicatorParams {
    pub tau: f64,
    pub k: f64,
}

impl Default for SmoothIndicatorParams {
    fn default() -> Self {
        SmoothIndicatorParams { tau: 0.5, k: 10.0 }
    }
}

impl SmoothIndicatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::config("indicator.tau", "must lie in (0, 1)"));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::config("indicator.k", "must be positive"));
        }
        Ok(())
    }
}

/// `H(x) = 1 / (1 + exp(-k (x - tau) / (1 - tau)))`.
pub fn smooth_indicator(x: f64, p: SmoothIndicatorParams) -> f64 {
    sigmoid(p.k * (x - p.tau) / (1.0 - p.tau))
}

/// `dH/dx = k / (1 - tau) · H (1 - H)`.
pub fn smooth_indicator_grad(x: f64, p: SmoothIndicatorParams) -> f64 {
    let h = smooth_indicator(x, p);
    p.k / (1.0 - p.tau) * h * (1.0 - h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn midpoint_and_reference_value() {
        let p = SmoothIndicatorParams::default();
        assert_eq!(smooth_indicator(0.5, p), 0.5);
        let expect = 1.0 / (1.0 + (-5.0f64).exp());
        assert!((smooth_indicator(0.75, p) - expect).abs() < 1e-12);
        let steep = SmoothIndicatorParams { tau: 0.5, k: 200.0 };
        assert!(smooth_indicator(1.0, steep) > 1.0 - 1e-12);
        assert!(smooth_indicator(0.0, steep) < 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(SmoothIndicatorParams { tau: 1.0, k: 1.0 }.validate().is_err());
        assert!(SmoothIndicatorParams { tau: 0.3, k: 0.0 }.validate().is_err());
    }

    proptest! {
        #[test]
        fn strictly_increasing(a in 0.0f64..1.0, d in 1e-6f64..0.5, tau in 0.05f64..0.95, k in 0.5f64..20.0) {
            let p = SmoothIndicatorParams { tau, k };
            prop_assert!(smooth_indicator(a, p) < smooth_indicator(a + d, p));
            prop_assert!((smooth_indicator(tau, p) - 0.5).abs() < 1e-15);
        }

        #[test]
        fn grad_matches_difference(x in 0.0f64..1.0, tau in 0.05f64..0.95, k in 0.5f64..20.0) {
            let p = SmoothIndicatorParams { tau, k };
            let e = 1e-6;
            let fd = (smooth_indicator(x + e, p) - smooth_indicator(x - e, p)) / (2.0 * e);
            let g = smooth_indicator_grad(x, p);
            prop_assert!((fd - g).abs() <= 1e-6 * g.abs().max(1e-3));
        }
    }
}
