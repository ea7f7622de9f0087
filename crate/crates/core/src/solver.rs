//! Global solver: one weighted generalized lasso per candidate branch
//! assignment, selection by the unregularised data fit, then a debiasing refit
//! of the winner and event extraction.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forward::Read;
use crate::genlasso::{self, GenLassoProblem, SolveOptions};
use crate::parallel::{self, Execution};
use crate::preprocess::{self, BranchData, CandidateSet};
use crate::profile::{self, Breakpoints};
use crate::pulse_model::PulseModel;

/// Fastest plausible fork speed in kb/min; steeper segments are not reported
/// as forks.
pub const MAX_FORK_SPEED: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("candidate set is empty")]
    NoCandidates,
    #[error("all {} candidate solves failed; first error: {}", .0.len(), .0.first().map(String::as_str).unwrap_or(""))]
    AllSolvesFailed(Vec<String>),
    #[error("solver diverged: {0}")]
    Diverged(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    pub s_a: usize,
    pub m_a: usize,
    pub lambda: f64,
    /// Moving-average smoothing of the signal before inversion.
    pub smoothing: bool,
    /// Threshold for the zero set; `None` uses `1e-6 · psi_max`.
    pub zero_tol: Option<f64>,
    /// Minimum |slope| (minutes per sample) for a fork event; `None` uses
    /// `dx / MAX_FORK_SPEED`.
    pub min_slope: Option<f64>,
    pub genlasso_tol: f64,
    pub max_iter: usize,
    pub scoring: Scoring,
    pub execution: Execution,
}

/// Which solution of a candidate the data fit is evaluated on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scoring {
    /// The regularised solution itself.
    Relaxed,
    /// Its piecewise-linear refit on its own knots (falls back to the
    /// regularised solution when the refit is not determined).
    #[default]
    Refit,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            s_a: preprocess::DEFAULT_WINDOW,
            m_a: preprocess::DEFAULT_SUBDIVISIONS,
            lambda: genlasso::DEFAULT_LAMBDA,
            smoothing: true,
            zero_tol: None,
            min_slope: None,
            genlasso_tol: 1e-8,
            max_iter: 50_000,
            scoring: Scoring::default(),
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Origin,
    Terminus,
    SlopeChange,
    Fork,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    /// Knot index, or first index of a fork segment.
    pub index: usize,
    /// Last index of a fork segment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<usize>,
    /// τ at `index`.
    pub time: f64,
    /// Fork speed in kb/min.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
    /// Sign of the fork's slope: +1 moves towards higher positions.
    pub direction: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub d: Vec<u8>,
    /// Data-fit objective; `None` when the solve failed.
    pub objective: Option<f64>,
    pub kkt: Option<f64>,
    pub ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solver: String,
    pub tau_star: Vec<f64>,
    pub tau_star_regularized: Vec<f64>,
    pub d_star: Vec<u8>,
    pub objective: f64,
    pub per_candidate: Vec<CandidateReport>,
    pub breakpoints: Breakpoints,
    pub events: Vec<Event>,
    pub wall_ms: f64,
    pub flags: Vec<String>,
}

/// `½ Σ_{d_i=1} w1_i² (τ_i − z1_i)² + ½ Σ_{d_i=0} w0_i² (τ_i − z0_i)²`, skipping
/// samples whose chosen branch has no preimage.
pub fn objective_f(bd: &BranchData, d: &[u8], tau: &[f64]) -> f64 {
    let mut f = 0.0;
    for (i, (&b, &t)) in d.iter().zip(tau).enumerate() {
        let (w, z) = if b == 1 {
            (bd.w1[i], bd.z1[i])
        } else {
            (bd.w0[i], bd.z0[i])
        };
        if w != 0.0 && z.is_finite() {
            f += 0.5 * w * w * (t - z) * (t - z);
        }
    }
    f
}

fn milliseconds(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

pub(crate) fn check_read(read: &Read) -> Result<(), SolveError> {
    read.validate()
        .map_err(|e| SolveError::InvalidInput(e.to_string()))?;
    if read.z.len() < 6 {
        return Err(SolveError::InvalidInput(format!(
            "read {} has {} samples, need at least 6",
            read.id,
            read.z.len()
        )));
    }
    Ok(())
}

/// Branch data, zero set and candidate set of a read.
pub fn prepare(
    model: &PulseModel,
    read: &Read,
    params: &SolveParams,
) -> Result<(BranchData, CandidateSet), SolveError> {
    let bd = preprocess::branch_data(model, &read.z, params.smoothing);
    let tol = params
        .zero_tol
        .unwrap_or_else(|| preprocess::default_zero_tol(model));
    let zero = preprocess::zero_set(&read.z, tol);
    let cs = preprocess::candidate_set(&bd, &zero, params.s_a, params.m_a)
        .map_err(|e| SolveError::InvalidInput(e.to_string()))?;
    if cs.candidates.is_empty() {
        return Err(SolveError::NoCandidates);
    }
    Ok((bd, cs))
}

pub(crate) fn zero_read_report(read: &Read, solver: &str, start: Instant) -> SolveReport {
    let n = read.z.len();
    SolveReport {
        solver: solver.to_string(),
        tau_star: vec![0.0; n],
        tau_star_regularized: vec![0.0; n],
        d_star: vec![0; n],
        objective: 0.0,
        per_candidate: Vec::new(),
        breakpoints: Breakpoints {
            indices: vec![0, n - 1],
        },
        events: Vec::new(),
        wall_ms: milliseconds(start),
        flags: vec!["zero-read".to_string()],
    }
}

pub(crate) fn is_zero_read(model: &PulseModel, read: &Read, params: &SolveParams) -> bool {
    let tol = params
        .zero_tol
        .unwrap_or_else(|| preprocess::default_zero_tol(model));
    read.z.iter().all(|&v| v <= tol)
}

pub(crate) struct Selection {
    pub index: usize,
    pub objective: f64,
}

/// Smallest objective; ties go to the earliest (lexicographically smallest)
/// candidate.
pub(crate) fn select(per_candidate: &[CandidateReport]) -> Option<Selection> {
    per_candidate
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.objective.map(|f| (i, f)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(index, objective)| Selection { index, objective })
}

/// Knots of `tau_reg` reduced to one per cluster, where clusters are runs of
/// knots less than `spacing / 2` apart. Each cluster keeps its sharpest kink,
/// which is then moved within the cluster span to the position with the best
/// refit (one sweep, left to right).
pub fn compress_knots(
    bd: &BranchData,
    d: &[u8],
    tau_reg: &[f64],
    spacing: usize,
) -> Result<Breakpoints, profile::ProfileError> {
    let n = tau_reg.len();
    let bp = profile::breakpoints(tau_reg, profile::default_tolerance(tau_reg))?;
    let lt = profile::second_difference(tau_reg)?;
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &k in bp.interior() {
        match clusters.last_mut() {
            Some(c) if 2 * (k - c[c.len() - 1]) < spacing => c.push(k),
            _ => clusters.push(vec![k]),
        }
    }
    let mut reps: Vec<usize> = clusters
        .iter()
        .map(|c| {
            *c.iter()
                .max_by(|&&a, &&b| lt[a - 1].abs().total_cmp(&lt[b - 1].abs()).then(b.cmp(&a)))
                .expect("clusters are non-empty")
        })
        .collect();
    let (target, weights) = bd.target_and_weights(d);
    let misfit = |knots: &[usize]| -> Option<f64> {
        let bp = Breakpoints::from_interior(n, knots).ok()?;
        let t = profile::project_piecewise_linear_refit(&bp, &weights, &target).ok()?;
        Some(objective_f(bd, d, &t))
    };
    for (j, c) in clusters.iter().enumerate() {
        if c.len() == 1 {
            continue;
        }
        let mut best = (misfit(&reps), reps[j]);
        for k in c[0]..=c[c.len() - 1] {
            if k == best.1 {
                continue;
            }
            reps[j] = k;
            let f = misfit(&reps);
            if let Some(v) = f {
                if best.0.is_none_or(|b| v < b) {
                    best = (f, k);
                }
            }
        }
        reps[j] = best.1;
    }
    Breakpoints::from_interior(n, &reps)
}

/// Weighted piecewise-linear least squares on the compressed knots of
/// `tau_reg`.
pub(crate) fn refit(bd: &BranchData, d: &[u8], tau_reg: &[f64]) -> Result<Vec<f64>, profile::ProfileError> {
    let (target, weights) = bd.target_and_weights(d);
    let bp = compress_knots(bd, d, tau_reg, profile::MIN_BREAK_SPACING)?;
    profile::project_piecewise_linear_refit(&bp, &weights, &target)
}

/// Selection score of one candidate solution.
pub(crate) fn score(bd: &BranchData, d: &[u8], tau_reg: &[f64], scoring: Scoring) -> f64 {
    match scoring {
        Scoring::Relaxed => objective_f(bd, d, tau_reg),
        Scoring::Refit => match refit(bd, d, tau_reg) {
            Ok(t) => objective_f(bd, d, &t),
            Err(_) => objective_f(bd, d, tau_reg),
        },
    }
}

/// Refit of the winner on its own knots, breakpoints and events.
pub(crate) fn finish(
    bd: &BranchData,
    d: &[u8],
    tau_reg: &[f64],
    read: &Read,
    params: &SolveParams,
    flags: &mut Vec<String>,
) -> (Vec<f64>, Breakpoints, Vec<Event>) {
    let tau = match refit(bd, d, tau_reg) {
        Ok(t) => t,
        Err(e) => {
            flags.push(format!("refit-failed: {e}"));
            tau_reg.to_vec()
        }
    };
    let bp = profile::breakpoints(&tau, profile::default_tolerance(&tau)).expect("n >= 3");
    let min_slope = params.min_slope.unwrap_or(read.dx / MAX_FORK_SPEED);
    let events = extract_events(&tau, read.dx, &bp, min_slope);
    (tau, bp, events)
}

/// Solves one read by enumerating the reduced candidate set.
pub fn dna_inverse(
    model: &PulseModel,
    read: &Read,
    params: &SolveParams,
) -> Result<SolveReport, SolveError> {
    let start = Instant::now();
    check_read(read)?;
    if !(params.lambda.is_finite() && params.lambda >= 0.0) {
        return Err(SolveError::InvalidInput(format!(
            "lambda must be finite and >= 0, got {}",
            params.lambda
        )));
    }
    if is_zero_read(model, read, params) {
        return Ok(zero_read_report(read, "dna-inverse", start));
    }
    let (bd, cs) = prepare(model, read, params)?;
    let opts = SolveOptions {
        tol: params.genlasso_tol,
        max_iter: params.max_iter,
        warm_start: None,
    };
    let solved = parallel::map(params.execution, &cs.candidates, |d| {
        let t0 = Instant::now();
        let (target, weights) = bd.target_and_weights(d);
        let outcome = GenLassoProblem::new(target, weights, params.lambda)
            .and_then(|p| genlasso::solve_dual(&p, &opts));
        let ms = milliseconds(t0);
        match outcome {
            Ok(sol) => {
                let f = score(&bd, d, &sol.tau, params.scoring);
                (
                    CandidateReport {
                        d: d.clone(),
                        objective: Some(f),
                        kkt: Some(sol.kkt_residual),
                        ms,
                        error: None,
                    },
                    Some(sol.tau),
                )
            }
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
    let Some(sel) = select(&per_candidate) else {
        return Err(SolveError::AllSolvesFailed(
            per_candidate.into_iter().filter_map(|c| c.error).collect(),
        ));
    };
    let d_star = per_candidate[sel.index].d.clone();
    let tau_reg = taus[sel.index].take().expect("selected candidate has a solution");
    let mut flags = Vec::new();
    let (tau_star, breakpoints, events) = finish(&bd, &d_star, &tau_reg, read, params, &mut flags);
    Ok(SolveReport {
        solver: "dna-inverse".to_string(),
        tau_star,
        tau_star_regularized: tau_reg,
        d_star,
        objective: sel.objective,
        per_candidate,
        breakpoints,
        events,
        wall_ms: milliseconds(start),
        flags,
    })
}

/// Origins, termini and slope changes at the interior knots, and one fork per
/// segment steep enough to be a plausible fork.
pub fn extract_events(tau: &[f64], dx: f64, bp: &Breakpoints, min_slope: f64) -> Vec<Event> {
    let idx = &bp.indices;
    let slopes: Vec<f64> = idx
        .windows(2)
        .map(|w| (tau[w[1]] - tau[w[0]]) / (w[1] - w[0]) as f64)
        .collect();
    let sign = |s: f64| -> i8 {
        if s > 0.0 {
            1
        } else if s < 0.0 {
            -1
        } else {
            0
        }
    };
    let mut events = Vec::new();
    for (s, w) in idx.windows(2).enumerate() {
        if s > 0 {
            let k = w[0];
            let (l, r) = (sign(slopes[s - 1]), sign(slopes[s]));
            let kind = match (l, r) {
                (-1, 1) => EventKind::Origin,
                (1, -1) => EventKind::Terminus,
                _ => EventKind::SlopeChange,
            };
            events.push(Event {
                kind,
                index: k,
                end: None,
                time: tau[k],
                speed: None,
                direction: 0,
            });
        }
        let slope = slopes[s];
        if slope.abs() >= min_slope && slope != 0.0 {
            events.push(Event {
                kind: EventKind::Fork,
                index: w[0],
                end: Some(w[1]),
                time: tau[w[0]],
                speed: Some(dx / slope.abs()),
                direction: sign(slope),
            });
        }
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::forward;

    fn count(events: &[Event], kind: EventKind) -> usize {
        events.iter().filter(|e| e.kind == kind).count()
    }

    #[test]
    fn events_v_and_lambda() {
        let v: Vec<f64> = (0..21).map(|i| (i as f64 - 10.0).abs()).collect();
        let bp = profile::breakpoints(&v, 1e-9).unwrap();
        let ev = extract_events(&v, 0.1, &bp, 0.02);
        assert_eq!(count(&ev, EventKind::Origin), 1);
        assert_eq!(count(&ev, EventKind::Fork), 2);
        for e in ev.iter().filter(|e| e.kind == EventKind::Fork) {
            assert!((e.speed.unwrap() - 0.1).abs() < 1e-15);
        }
        let lam: Vec<f64> = v.iter().map(|x| 10.0 - x).collect();
        let ev = extract_events(&lam, 0.1, &bp, 0.02);
        assert_eq!(count(&ev, EventKind::Terminus), 1);
        assert_eq!(count(&ev, EventKind::Origin), 0);
    }

    #[test]
    fn events_monotone_slope_change() {
        let t: Vec<f64> = (0..30)
            .map(|i| if i < 15 { 0.1 * i as f64 } else { 1.5 + 0.3 * (i - 15) as f64 })
            .collect();
        let bp = profile::breakpoints(&t, 1e-9).unwrap();
        let ev = extract_events(&t, 0.1, &bp, 0.02);
        assert_eq!(count(&ev, EventKind::Origin), 0);
        assert_eq!(count(&ev, EventKind::Terminus), 0);
        assert_eq!(count(&ev, EventKind::Fork), 2);
        assert_eq!(count(&ev, EventKind::SlopeChange), 1);
    }

    #[test]
    fn objective_examples() {
        let m = PulseModel::default();
        let tau = [0.5, 1.0, 1.5, 2.5, 3.0, 3.5];
        let z = forward(&m, &tau);
        let bd = preprocess::branch_data(&m, &z, false);
        let d = [0, 0, 0, 1, 1, 1];
        assert!(objective_f(&bd, &d, &tau) < 1e-20);
        let mut off = tau;
        off[4] += 0.3;
        let f = objective_f(&bd, &d, &off);
        assert!((f - 0.5 * bd.w1[4].powi(2) * 0.09).abs() < 1e-14);
    }

    #[test]
    fn zero_read_is_trivial() {
        let m = PulseModel::default();
        let read = Read::new("z", vec![0.0; 50], 0.1).unwrap();
        let r = dna_inverse(&m, &read, &SolveParams::default()).unwrap();
        assert!(r.tau_star.iter().all(|&t| t == 0.0));
        assert!(r.events.is_empty());
        assert!(r.flags.iter().any(|f| f == "zero-read"));
    }

    #[test]
    fn monotone_read_inside_rise_is_one_line() {
        let m = PulseModel::default();
        let tau: Vec<f64> = (0..80).map(|i| 0.3 + 0.02 * i as f64).collect();
        let read = Read::new("mono", forward(&m, &tau), 0.1).unwrap();
        let params = SolveParams {
            smoothing: false,
            ..SolveParams::default()
        };
        let r = dna_inverse(&m, &read, &params).unwrap();
        assert!(r.d_star.iter().all(|&b| b == 0));
        assert_eq!(r.breakpoints.count(), 0);
        for (a, b) in r.tau_star.iter().zip(&tau) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}
