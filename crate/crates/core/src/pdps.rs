//! Primal-dual proximal splitting for the nonconvex problem
//!
//! ```text
//! min_τ ‖z − Ψ(τ)‖² + γ ‖Lτ‖₁ ,
//! ```
//!
//! written as `min_τ max_y γ‖Lτ‖₁ + ⟨Ψ(τ), y⟩ − G*(y)` with `G(u) = ‖u − z‖²`
//! and `G*(y) = ¼‖y‖² + ⟨y, z⟩`. One iteration is
//!
//! ```text
//! τ⁺ = prox_{σ1 γ ‖L·‖₁}(τ − σ1 Ψ′(τ) y)
//! y⁺ = prox_{σ2 G*}(y + σ2 (2Ψ(τ⁺) − Ψ(τ)))
//! ```
//!
//! The primal prox is a unit-weight generalized lasso. The dual prox is affine:
//! `argmin_y σ(¼y² + yz) + ½(y − v)²` gives `y = (v − σz) / (1 + σ/2)`.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forward::{forward, Read};
use crate::genlasso::{self, GenLassoProblem, SolveOptions};
use crate::parallel;
use crate::preprocess::BranchData;
use crate::pulse_model::PulseModel;
use crate::solver::{self, CandidateReport, SolveError, SolveParams, SolveReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdpsError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("iterates diverged after {iterations} iterations")]
    Diverged { iterations: usize },
    #[error("inner prox failed: {0}")]
    Prox(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpsConfig {
    pub gamma: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub l_psi: f64,
    pub l_psi_prime: f64,
    pub rho_y: f64,
    pub stop_tol: f64,
    pub max_iter: usize,
}

impl Default for PdpsConfig {
    fn default() -> Self {
        PdpsConfig::with_step_rule(1.0, 1.0, 1.0, 1.0, 1.0)
            .expect("default constants are valid")
    }
}

impl PdpsConfig {
    /// Largest primal step allowed by the step rule for the given `σ2`.
    pub fn max_sigma1(sigma2: f64, l_psi: f64, l_psi_prime: f64, rho_y: f64) -> f64 {
        1.0 / (sigma2 * l_psi * l_psi + l_psi_prime * rho_y / 2.0)
    }

    /// Config with `σ1` at the step-rule bound.
    pub fn with_step_rule(
        gamma: f64,
        sigma2: f64,
        l_psi: f64,
        l_psi_prime: f64,
        rho_y: f64,
    ) -> Result<Self, PdpsError> {
        let cfg = PdpsConfig {
            gamma,
            sigma1: Self::max_sigma1(sigma2, l_psi, l_psi_prime, rho_y),
            sigma2,
            l_psi,
            l_psi_prime,
            rho_y,
            stop_tol: 1e-5,
            max_iter: 20_000,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PdpsError> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(PdpsError::InvalidConfig(format!("{name} must be > 0, got {v}")))
            }
        };
        pos("sigma1", self.sigma1)?;
        pos("sigma2", self.sigma2)?;
        pos("stop_tol", self.stop_tol)?;
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(PdpsError::InvalidConfig(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        for (name, v) in [
            ("l_psi", self.l_psi),
            ("l_psi_prime", self.l_psi_prime),
            ("rho_y", self.rho_y),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(PdpsError::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        let bound = Self::max_sigma1(self.sigma2, self.l_psi, self.l_psi_prime, self.rho_y);
        if self.sigma1 > bound * (1.0 + 1e-12) {
            return Err(PdpsError::InvalidConfig(format!(
                "sigma1 = {} exceeds the step bound {}",
                self.sigma1, bound
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpsResult {
    pub tau: Vec<f64>,
    pub y: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    /// Objective at the start and every 100 iterations.
    pub history: Vec<f64>,
}

/// `‖z − Ψ(τ)‖² + γ‖Lτ‖₁`.
pub fn objective(model: &PulseModel, z: &[f64], tau: &[f64], gamma: f64) -> f64 {
    let fit: f64 = z
        .iter()
        .zip(tau)
        .map(|(&zi, &t)| (zi - model.psi(t)).powi(2))
        .sum();
    let tv: f64 = tau
        .windows(3)
        .map(|v| (v[0] - 2.0 * v[1] + v[2]).abs())
        .sum();
    fit + gamma * tv
}

/// Proximal map of `σ G*` with `G*(y) = ¼y² + yz`, coordinatewise.
pub fn dual_prox(v: f64, z: f64, sigma: f64) -> f64 {
    (v - sigma * z) / (1.0 + 0.5 * sigma)
}

const DIVERGENCE: f64 = 1e8;

pub fn pdps_solve(
    model: &PulseModel,
    z: &[f64],
    tau_init: &[f64],
    cfg: &PdpsConfig,
) -> Result<PdpsResult, PdpsError> {
    cfg.validate()?;
    let n = z.len();
    if n < 3 || tau_init.len() != n {
        return Err(PdpsError::InvalidInput(format!(
            "signal has {} samples and initial point {}",
            n,
            tau_init.len()
        )));
    }
    if tau_init.iter().chain(z).any(|v| !v.is_finite()) {
        return Err(PdpsError::InvalidInput("non-finite input".into()));
    }
    let lambda = cfg.sigma1 * cfg.gamma;
    let ones = vec![1.0; n];
    let mut tau = tau_init.to_vec();
    let mut psi = forward(model, &tau);
    let mut y: Vec<f64> = psi.iter().zip(z).map(|(p, zi)| 2.0 * (p - zi)).collect();
    let mut history = vec![objective(model, z, &tau, cfg.gamma)];
    let mut warm: Option<Vec<f64>> = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let point: Vec<f64> = tau
            .iter()
            .zip(&y)
            .map(|(&t, &yi)| t - cfg.sigma1 * model.derivative(t) * yi)
            .collect();
        let next = if lambda == 0.0 {
            point
        } else {
            let p = GenLassoProblem {
                target: point,
                weights: ones.clone(),
                lambda,
            };
            let opts = SolveOptions {
                tol: 1e-9,
                max_iter: 50_000,
                warm_start: warm.take(),
            };
            let sol = match genlasso::solve_dual(&p, &opts) {
                Ok(s) => s,
                Err(genlasso::GenLassoError::MaxIter(s)) => *s,
                Err(e) => return Err(PdpsError::Prox(e.to_string())),
            };
            warm = Some(sol.dual_u);
            sol.tau
        };
        let psi_next = forward(model, &next);
        for i in 0..n {
            let v = y[i] + cfg.sigma2 * (2.0 * psi_next[i] - psi[i]);
            y[i] = dual_prox(v, z[i], cfg.sigma2);
        }
        let change = next
            .iter()
            .zip(&tau)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        tau = next;
        psi = psi_next;
        let size = tau
            .iter()
            .chain(&y)
            .fold(0.0f64, |a, &v| if v.is_finite() { a.max(v.abs()) } else { f64::INFINITY });
        if size > DIVERGENCE {
            return Err(PdpsError::Diverged { iterations });
        }
        if iterations % 100 == 0 {
            history.push(objective(model, z, &tau, cfg.gamma));
        }
        if change <= cfg.stop_tol {
            converged = true;
            break;
        }
    }
    let objective = objective(model, z, &tau, cfg.gamma);
    Ok(PdpsResult {
        tau,
        y,
        iterations,
        converged,
        objective,
        history,
    })
}

/// Replaces non-finite entries by linear interpolation between the nearest
/// finite neighbours, with constant extension at the ends. `None` when no
/// entry is finite.
pub fn fill_markers(v: &[f64]) -> Option<Vec<f64>> {
    let finite: Vec<usize> = (0..v.len()).filter(|&i| v[i].is_finite()).collect();
    let (&first, &last) = (finite.first()?, finite.last()?);
    let mut out = v.to_vec();
    for x in out.iter_mut().take(first) {
        *x = v[first];
    }
    for x in out.iter_mut().skip(last + 1) {
        *x = v[last];
    }
    for w in finite.windows(2) {
        let (a, b) = (w[0], w[1]);
        for (i, x) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            let t = (i - a) as f64 / (b - a) as f64;
            *x = (1.0 - t) * v[a] + t * v[b];
        }
    }
    Some(out)
}

fn initial_point(bd: &BranchData, d: &[u8]) -> Option<Vec<f64>> {
    let raw: Vec<f64> = d
        .iter()
        .enumerate()
        .map(|(i, &b)| if b == 1 { bd.z1[i] } else { bd.z0[i] })
        .collect();
    fill_markers(&raw)
}

/// PDPS started from the branch inverse of every candidate assignment, scored
/// and reported like [`solver::dna_inverse`].
pub fn adapted_pdps(
    model: &PulseModel,
    read: &Read,
    params: &SolveParams,
    cfg: &PdpsConfig,
) -> Result<SolveReport, SolveError> {
    let start = Instant::now();
    solver::check_read(read)?;
    cfg.validate()
        .map_err(|e| SolveError::InvalidInput(e.to_string()))?;
    if solver::is_zero_read(model, read, params) {
        return Ok(solver::zero_read_report(read, "pdps-adapted", start));
    }
    let (bd, cs) = solver::prepare(model, read, params)?;
    let solved = parallel::map(params.execution, &cs.candidates, |d| {
        let t0 = Instant::now();
        let outcome = match initial_point(&bd, d) {
            Some(init) => pdps_solve(model, &bd.signal, &init, cfg),
            None => Err(PdpsError::InvalidInput(
                "no sample has a preimage on the chosen branches".into(),
            )),
        };
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        match outcome {
            Ok(res) => {
                let f = solver::score(&bd, d, &res.tau, params.scoring);
                let flag = (!res.converged).then(|| format!("not converged after {} iterations", res.iterations));
                (
                    CandidateReport {
                        d: d.clone(),
                        objective: Some(f),
                        kkt: None,
                        ms,
                        error: flag,
                    },
                    Some(res.tau),
                )
            }
            Err(PdpsError::Diverged { iterations }) => (
                CandidateReport {
                    d: d.clone(),
                    objective: None,
                    kkt: None,
                    ms,
                    error: Some(format!("diverged after {iterations} iterations")),
                },
                None,
            ),
            Err(e) => (
                CandidateReport {
                    d: d.clone(),
                    objective: None,
                    kkt: None,
                    ms,
                    error: Some(e.to_string()),
                },
                None,
            ),
        }
    });
    let (per_candidate, mut taus): (Vec<CandidateReport>, Vec<Option<Vec<f64>>>) =
        solved.into_iter().unzip();
    let Some(sel) = solver::select(&per_candidate) else {
        return Err(SolveError::AllSolvesFailed(
            per_candidate.into_iter().filter_map(|c| c.error).collect(),
        ));
    };
    let d_star = per_candidate[sel.index].d.clone();
    let tau_reg = taus[sel.index].take().expect("selected candidate has a solution");
    let mut flags = Vec::new();
    if let Some(e) = &per_candidate[sel.index].error {
        flags.push(e.clone());
    }
    let (tau_star, breakpoints, events) =
        solver::finish(&bd, &d_star, &tau_reg, read, params, &mut flags);
    Ok(SolveReport {
        solver: "pdps-adapted".to_string(),
        tau_star,
        tau_star_regularized: tau_reg,
        d_star,
        objective: sel.objective,
        per_candidate,
        breakpoints,
        events,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        flags,
    })
}
