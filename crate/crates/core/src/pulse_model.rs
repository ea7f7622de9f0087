//! The scalar pulse-chase response ψ and its two monotone branches.
//!
//! ψ is zero for non-positive times, rises concavely to `psi_max` at `tau0`
//! and then decays convexly towards `residual`:
//!
//! ```text
//! ψ0(t) = psi_max (1 - exp(-rise t)) / (1 - exp(-rise tau0))     0 <= t <= tau0
//! ψ1(t) = residual + (psi_max - residual) exp(-decay (t - tau0))   t > tau0
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid pulse model parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

/// Which monotone piece of ψ an inverse or a weight refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    /// Increasing piece on `[0, tau0]`.
    Rise = 0,
    /// Decreasing piece on `[tau0, ∞)`.
    Decay = 1,
}

impl Branch {
    pub fn from_bit(bit: u8) -> Branch {
        if bit == 0 {
            Branch::Rise
        } else {
            Branch::Decay
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseModel {
    pub tau0: f64,
    pub psi_max: f64,
    pub residual: f64,
    pub rise_rate: f64,
    pub decay_rate: f64,
}

impl Default for PulseModel {
    fn default() -> Self {
        PulseModel {
            tau0: 2.0,
            psi_max: 1.0,
            residual: 0.1,
            rise_rate: 1.5,
            decay_rate: 0.3,
        }
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}

impl PulseModel {
    pub fn new(
        tau0: f64,
        psi_max: f64,
        residual: f64,
        rise_rate: f64,
        decay_rate: f64,
    ) -> Result<Self, ModelError> {
        let m = PulseModel {
            tau0,
            psi_max,
            residual,
            rise_rate,
            decay_rate,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        positive("tau0", self.tau0)?;
        positive("psi_max", self.psi_max)?;
        positive("residual", self.residual)?;
        positive("rise_rate", self.rise_rate)?;
        positive("decay_rate", self.decay_rate)?;
        if self.residual >= self.psi_max {
            return Err(ModelError::InvalidParameter {
                name: "residual",
                value: self.residual,
                reason: "must be < psi_max",
            });
        }
        Ok(())
    }

    /// `1 - exp(-rise tau0)`, the normaliser of the rising branch.
    fn rise_norm(&self) -> f64 {
        -(-self.rise_rate * self.tau0).exp_m1()
    }

    pub fn psi(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t <= self.tau0 {
            self.psi_max * (-(-self.rise_rate * t).exp_m1()) / self.rise_norm()
        } else {
            self.residual
                + (self.psi_max - self.residual) * (-self.decay_rate * (t - self.tau0)).exp()
        }
    }

    /// ψ′(t). Zero for `t < 0` and, by convention, at the peak `t == tau0`.
    /// At `t == 0` the right derivative of the rising branch is returned.
    pub fn derivative(&self, t: f64) -> f64 {
        if t < 0.0 || t == self.tau0 {
            0.0
        } else if t < self.tau0 {
            self.branch_derivative(Branch::Rise, t)
        } else {
            self.branch_derivative(Branch::Decay, t)
        }
    }

    /// Analytic derivative of the closed-form expression of one branch,
    /// evaluated without regard to the branch's domain.
    pub fn branch_derivative(&self, branch: Branch, t: f64) -> f64 {
        match branch {
            Branch::Rise => {
                self.psi_max * self.rise_rate * (-self.rise_rate * t).exp() / self.rise_norm()
            }
            Branch::Decay => {
                -self.decay_rate
                    * (self.psi_max - self.residual)
                    * (-self.decay_rate * (t - self.tau0)).exp()
            }
        }
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        if t < 0.0 || t == self.tau0 {
            0.0
        } else if t < self.tau0 {
            -self.rise_rate * self.branch_derivative(Branch::Rise, t)
        } else {
            -self.decay_rate * self.branch_derivative(Branch::Decay, t)
        }
    }

    /// Inverse of one branch. `None` when `b` has no preimage on that branch.
    pub fn branch_inverse(&self, branch: Branch, b: f64) -> Option<f64> {
        if !b.is_finite() || b < 0.0 || b > self.psi_max {
            return None;
        }
        match branch {
            Branch::Rise => {
                if b == self.psi_max {
                    return Some(self.tau0);
                }
                // 1 - exp(-r t) = b / psi_max * norm
                let x = b / self.psi_max * self.rise_norm();
                Some((-(-x).ln_1p() / self.rise_rate).clamp(0.0, self.tau0))
            }
            Branch::Decay => {
                if b <= self.residual {
                    return None;
                }
                if b == self.psi_max {
                    return Some(self.tau0);
                }
                let ratio = (b - self.residual) / (self.psi_max - self.residual);
                Some((self.tau0 - ratio.ln() / self.decay_rate).max(self.tau0))
            }
        }
    }

    /// `sup |ψ′|`, attained at `t = 0` on the rising branch.
    pub fn lipschitz(&self) -> f64 {
        self.branch_derivative(Branch::Rise, 0.0)
            .max(self.branch_derivative(Branch::Decay, self.tau0).abs())
    }

    /// `sup |ψ″|` over both branches.
    pub fn derivative_lipschitz(&self) -> f64 {
        (self.rise_rate * self.branch_derivative(Branch::Rise, 0.0))
            .max((self.decay_rate * self.branch_derivative(Branch::Decay, self.tau0)).abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_at_landmarks() {
        let m = PulseModel::default();
        assert_eq!(m.psi(-3.0), 0.0);
        assert_eq!(m.psi(0.0), 0.0);
        assert!((m.psi(m.tau0) - m.psi_max).abs() < 1e-15);
        assert!((m.psi(m.tau0 + 50.0 / m.decay_rate) - m.residual).abs() < 1e-6);
    }

    #[test]
    fn derivative_conventions() {
        let m = PulseModel::default();
        assert_eq!(m.derivative(-1.0), 0.0);
        assert_eq!(m.derivative(m.tau0), 0.0);
        assert!(m.derivative(0.0) > 0.0);
        assert!(m.derivative(1.0) > 0.0);
        assert!(m.derivative(3.0) < 0.0);
        let t = m.tau0 / 2.0;
        let h = 1e-6;
        let fd = (m.psi(t + h) - m.psi(t - h)) / (2.0 * h);
        let a = m.derivative(t);
        assert!((a - fd).abs() <= 1e-5 * (1.0 + a.abs()));
    }

    #[test]
    fn inverse_landmarks() {
        let m = PulseModel::default();
        assert_eq!(m.branch_inverse(Branch::Rise, 0.0), Some(0.0));
        assert_eq!(m.branch_inverse(Branch::Decay, m.psi_max), Some(m.tau0));
        assert_eq!(m.branch_inverse(Branch::Rise, m.psi_max), Some(m.tau0));
        assert_eq!(m.branch_inverse(Branch::Decay, m.residual / 2.0), None);
        assert_eq!(m.branch_inverse(Branch::Decay, m.residual), None);
        assert_eq!(m.branch_inverse(Branch::Rise, m.psi_max + 0.1), None);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PulseModel::new(2.0, 1.0, 1.0, 1.5, 0.3).is_err());
        assert!(PulseModel::new(0.0, 1.0, 0.1, 1.5, 0.3).is_err());
        assert!(PulseModel::new(2.0, 1.0, 0.1, f64::NAN, 0.3).is_err());
        assert!(PulseModel::new(2.0, 1.0, 0.1, 1.5, 0.3).is_ok());
    }

    #[test]
    fn lipschitz_bounds_sampled_derivatives() {
        let m = PulseModel::default();
        let l = m.lipschitz();
        let l2 = m.derivative_lipschitz();
        for k in 0..2000 {
            let t = -1.0 + 0.01 * k as f64;
            assert!(m.derivative(t).abs() <= l + 1e-12);
            assert!(m.second_derivative(t).abs() <= l2 + 1e-12);
        }
    }
}
