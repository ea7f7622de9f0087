//! Timing profiles, the second-difference operator and breakpoint structure.
//!
//! Indices are 0-based in this API; the I/O layer converts to 1-based.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spline;

/// Minimum number of samples between consecutive breakpoints (borders
/// included) for the spaced class used by the uniqueness results.
pub const MIN_BREAK_SPACING: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("profile needs at least 3 samples, got {0}")]
    TooShort(usize),
    #[error("grid spacing must be finite and > 0, got {0}")]
    BadSpacing(f64),
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("breakpoints must be strictly increasing from 0 to {last}")]
    BadBreakpoints { last: usize },
    #[error("segment [{start}, {end}] has {count} positively weighted samples, need 2")]
    Underdetermined {
        start: usize,
        end: usize,
        count: usize,
    },
    #[error("refit normal equations are singular")]
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingProfile {
    pub values: Vec<f64>,
    /// Grid spacing in kb.
    pub dx: f64,
}

impl TimingProfile {
    pub fn new(values: Vec<f64>, dx: f64) -> Result<Self, ProfileError> {
        if values.len() < 3 {
            return Err(ProfileError::TooShort(values.len()));
        }
        if !(dx.is_finite() && dx > 0.0) {
            return Err(ProfileError::BadSpacing(dx));
        }
        Ok(TimingProfile { values, dx })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Sorted breakpoint indices, always starting at 0 and ending at `n - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Breakpoints {
    pub indices: Vec<usize>,
}

impl Breakpoints {
    /// Number of interior breakpoints.
    pub fn count(&self) -> usize {
        self.indices.len() - 2
    }

    pub fn interior(&self) -> &[usize] {
        &self.indices[1..self.indices.len() - 1]
    }

    pub fn from_interior(n: usize, interior: &[usize]) -> Result<Self, ProfileError> {
        let mut indices = Vec::with_capacity(interior.len() + 2);
        indices.push(0);
        indices.extend_from_slice(interior);
        indices.push(n - 1);
        let bp = Breakpoints { indices };
        bp.check(n)?;
        Ok(bp)
    }

    fn check(&self, n: usize) -> Result<(), ProfileError> {
        let ok = self.indices.len() >= 2
            && self.indices[0] == 0
            && *self.indices.last().unwrap() == n - 1
            && self.indices.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(())
        } else {
            Err(ProfileError::BadBreakpoints { last: n - 1 })
        }
    }

    pub fn min_gap(&self) -> usize {
        self.indices.windows(2).map(|w| w[1] - w[0]).min().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Membership {
    pub in_pc: bool,
    pub in_pc_neq: bool,
    pub in_pc_geq: bool,
}

/// `(Lτ)_i = τ_{i-1} - 2τ_i + τ_{i+1}` for the `n - 2` interior samples.
pub fn second_difference(tau: &[f64]) -> Result<Vec<f64>, ProfileError> {
    if tau.len() < 3 {
        return Err(ProfileError::TooShort(tau.len()));
    }
    Ok(tau.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).collect())
}

/// `Lᵀu` for `u` of length `n - 2`.
pub fn second_difference_adjoint(u: &[f64]) -> Vec<f64> {
    let n = u.len() + 2;
    let mut out = vec![0.0; n];
    for (r, &v) in u.iter().enumerate() {
        out[r] += v;
        out[r + 1] -= 2.0 * v;
        out[r + 2] += v;
    }
    out
}

/// `1e-9 · (1 + max|τ|)`.
pub fn default_tolerance(tau: &[f64]) -> f64 {
    1e-9 * (1.0 + tau.iter().fold(0.0f64, |a, &v| a.max(v.abs())))
}

pub fn breakpoints(tau: &[f64], tol: f64) -> Result<Breakpoints, ProfileError> {
    let l = second_difference(tau)?;
    let mut indices = vec![0];
    indices.extend(
        l.iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > tol)
            .map(|(r, _)| r + 1),
    );
    indices.push(tau.len() - 1);
    Ok(Breakpoints { indices })
}

pub fn membership(tau: &[f64], c: usize, tol: f64) -> Result<Membership, ProfileError> {
    membership_with_spacing(tau, c, tol, MIN_BREAK_SPACING)
}

pub fn membership_with_spacing(
    tau: &[f64],
    c: usize,
    tol: f64,
    spacing: usize,
) -> Result<Membership, ProfileError> {
    let bp = breakpoints(tau, tol)?;
    let in_pc = bp.count() <= c;
    let in_pc_neq = in_pc
        && tau.iter().all(|&v| v >= 0.0)
        && tau.windows(2).all(|w| (w[1] - w[0]).abs() > tol);
    let in_pc_geq = in_pc_neq && bp.min_gap() >= spacing;
    Ok(Membership {
        in_pc,
        in_pc_neq,
        in_pc_geq,
    })
}

/// Weighted least-squares continuous piecewise-linear fit with knots fixed at
/// the interior breakpoints. Entries with zero weight do not influence the fit.
pub fn project_piecewise_linear_refit(
    bp: &Breakpoints,
    weights: &[f64],
    targets: &[f64],
) -> Result<Vec<f64>, ProfileError> {
    let n = weights.len();
    if n < 3 {
        return Err(ProfileError::TooShort(n));
    }
    if targets.len() != n {
        return Err(ProfileError::LengthMismatch {
            what: "targets",
            got: targets.len(),
            expected: n,
        });
    }
    bp.check(n)?;
    for s in bp.indices.windows(2) {
        let count = (s[0]..=s[1]).filter(|&i| weights[i] != 0.0).count();
        if count < 2 {
            return Err(ProfileError::Underdetermined {
                start: s[0],
                end: s[1],
                count,
            });
        }
    }
    let wsq: Vec<f64> = weights.iter().map(|w| w * w).collect();
    let sys = spline::assemble(&bp.indices, &wsq, targets);
    let coef =
        spline::solve_tridiagonal(&sys.diag, &sys.off, &sys.rhs).ok_or(ProfileError::Singular)?;
    Ok(spline::expand(&bp.indices, &coef, n))
}
