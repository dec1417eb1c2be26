//! Learning-rate control from the measured change in total variation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrAction {
    Shrink,
    Grow,
    Hold,
}

/// Multiplicative controller targeting `TV̂ ≈ ε/2` with dead band
/// `[β ε/2, ε/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrController {
    eta: f64,
    alpha: f64,
    beta: f64,
    epsilon: f64,
}

impl LrController {
    pub fn new(eta: f64, alpha: f64, beta: f64, epsilon: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(invalid(format!("learning rate {eta} must be positive")));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(invalid(format!("alpha {alpha} must be nonnegative")));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(invalid(format!("beta {beta} outside [0, 1]")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid(format!("epsilon {epsilon} must be positive")));
        }
        Ok(Self {
            eta,
            alpha,
            beta,
            epsilon,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn target(&self) -> f64 {
        0.5 * self.epsilon
    }

    pub fn update(&mut self, tv_hat: f64) -> Result<LrAction> {
        if !(tv_hat >= 0.0 && tv_hat.is_finite()) {
            return Err(invalid(format!(
                "tv_hat {tv_hat} must be finite and nonnegative"
            )));
        }
        let target = self.target();
        let action = if tv_hat > target {
            self.eta /= 1.0 + self.alpha;
            LrAction::Shrink
        } else if tv_hat < self.beta * target {
            self.eta *= 1.0 + self.alpha;
            LrAction::Grow
        } else {
            LrAction::Hold
        };
        Ok(action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctrl() -> LrController {
        LrController::new(3e-4, 0.03, 0.5, 0.1).unwrap()
    }

    #[test]
    fn branches() {
        let mut c = ctrl();
        assert_eq!(c.update(0.06).unwrap(), LrAction::Shrink);
        assert_eq!(c.eta(), 3e-4 / 1.03);
        let mut c = ctrl();
        assert_eq!(c.update(0.02).unwrap(), LrAction::Grow);
        assert_eq!(c.eta(), 3e-4 * 1.03);
        let mut c = ctrl();
        assert_eq!(c.update(0.03).unwrap(), LrAction::Hold);
        assert_eq!(c.eta(), 3e-4);
        assert!(c.update(-1.0).is_err());
    }

    proptest! {
        #[test]
        fn eta_stays_within_geometric_envelope(tvs in proptest::collection::vec(0.0f64..0.2, 0..200)) {
            let mut c = ctrl();
            for tv in &tvs {
                c.update(*tv).unwrap();
                prop_assert!(c.eta() > 0.0);
            }
            let t = tvs.len() as i32;
            prop_assert!(c.eta() <= 3e-4 * 1.03f64.powi(t) * (1.0 + 1e-12));
            prop_assert!(c.eta() >= 3e-4 * 1.03f64.powi(-t) * (1.0 - 1e-12));
        }
    }
}
