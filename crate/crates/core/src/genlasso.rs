//! Weighted generalized lasso with the second-difference operator,
//!
//! ```text
//! min_τ  ½ Σ_{i ∈ I⁺} w_i² (τ_i − z_i)² + λ ‖Lτ‖₁ ,
//! ```
//!
//! solved through its dual box QP
//!
//! ```text
//! min_u  ½ Σ_{i ∈ I⁺} (Lᵀu)_i² / w_i² − Σ_{i ∈ I⁺} z_i (Lᵀu)_i
//! s.t.   |u| ≤ λ,   (Lᵀu)_i = 0 for i ∈ I⁰ ,
//! ```
//!
//! where `I⁺` are the samples with positive weight and `I⁰` the rest. The
//! equality constraints are eliminated exactly: a run of `I⁰` forces `u` to be
//! affine across it, and a run touching a read end forces `u` to vanish next to
//! it. On the remaining free coordinates the box QP is solved by projected
//! Newton steps. For a fixed set of coordinates held at the bound the reduced
//! Newton point is the primal spline with knots at those coordinates, which is
//! a tridiagonal solve, so each iteration costs O(n).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::band::Band;
use crate::profile::second_difference;
use crate::spline;

#[derive(Debug, Clone, PartialEq)]
pub struct GenLassoProblem {
    /// Target `z`; entries with zero weight are ignored and may be infinite.
    pub target: Vec<f64>,
    /// Weights; only `|w|` matters.
    pub weights: Vec<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenLassoSolution {
    pub tau: Vec<f64>,
    /// Dual variable, one entry per row of `L`.
    pub dual_u: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenLassoError {
    #[error("invalid problem: {0}")]
    InvalidInput(String),
    #[error("only {positive} positively weighted samples, need at least 2")]
    RankDeficient { positive: usize },
    #[error("no convergence after {} iterations (kkt residual {:.3e})", .0.iterations, .0.kkt_residual)]
    MaxIter(Box<GenLassoSolution>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Starting dual point; projected onto the feasible set before use.
    pub warm_start: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: 50_000,
            warm_start: None,
        }
    }
}

pub const DEFAULT_LAMBDA: f64 = 8.0;

impl GenLassoProblem {
    pub fn new(target: Vec<f64>, weights: Vec<f64>, lambda: f64) -> Result<Self, GenLassoError> {
        let p = GenLassoProblem {
            target,
            weights,
            lambda,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn validate(&self) -> Result<(), GenLassoError> {
        let n = self.target.len();
        if n < 3 {
            return Err(GenLassoError::InvalidInput(format!(
                "need at least 3 samples, got {n}"
            )));
        }
        if self.weights.len() != n {
            return Err(GenLassoError::InvalidInput(format!(
                "{} weights for {} targets",
                self.weights.len(),
                n
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(GenLassoError::InvalidInput(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        for (i, (&w, &z)) in self.weights.iter().zip(&self.target).enumerate() {
            if !w.is_finite() {
                return Err(GenLassoError::InvalidInput(format!(
                    "weight {i} is not finite"
                )));
            }
            if w != 0.0 && !z.is_finite() {
                return Err(GenLassoError::InvalidInput(format!(
                    "target {i} is not finite but its weight is {w}"
                )));
            }
        }
        Ok(())
    }

    fn wsq(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w * w).collect()
    }

    /// `½ Σ_{I⁺} w²(τ − z)² + λ‖Lτ‖₁`.
    pub fn primal_objective(&self, tau: &[f64]) -> f64 {
        let fit: f64 = self
            .weights
            .iter()
            .zip(&self.target)
            .zip(tau)
            .filter(|((w, _), _)| **w != 0.0)
            .map(|((w, z), t)| 0.5 * w * w * (t - z) * (t - z))
            .sum();
        let tv: f64 = tau
            .windows(3)
            .map(|v| (v[0] - 2.0 * v[1] + v[2]).abs())
            .sum();
        fit + self.lambda * tv
    }
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Free(usize),
    Zero,
    /// Affine combination of two anchors (free coordinate or zero).
    Interp {
        left: Option<usize>,
        right: Option<usize>,
        t: f64,
    },
}

/// Null-space parameterisation of the dual equality constraints. The dual is
/// stored padded to length `n` with `U[0] = U[n-1] = 0`; `U[c]` multiplies
/// the row of `L` centred at sample `c`.
struct Reduced {
    slots: Vec<Slot>,
    centers: Vec<usize>,
}

impl Reduced {
    fn new(positive: &[bool]) -> Reduced {
        let n = positive.len();
        let mut slots: Vec<Option<Slot>> = vec![None; n];
        slots[0] = Some(Slot::Zero);
        slots[n - 1] = Some(Slot::Zero);
        let runs = zero_runs(positive);
        for &(a, b) in &runs {
            if a == 0 {
                for s in slots.iter_mut().take((b + 2).min(n)) {
                    *s = Some(Slot::Zero);
                }
            }
            if b == n - 1 {
                for s in slots.iter_mut().skip(a.saturating_sub(1)) {
                    *s = Some(Slot::Zero);
                }
            }
        }
        let mut centers = Vec::new();
        let mut index = vec![usize::MAX; n];
        for c in 1..n - 1 {
            if slots[c].is_none() && positive[c] {
                index[c] = centers.len();
                slots[c] = Some(Slot::Free(centers.len()));
                centers.push(c);
            }
        }
        let anchor = |slots: &[Option<Slot>], c: usize| match slots[c] {
            Some(Slot::Free(k)) => Some(k),
            _ => None,
        };
        for &(a, b) in &runs {
            if a == 0 || b == n - 1 {
                continue;
            }
            let (l, r) = (a - 1, b + 1);
            let left = anchor(&slots, l);
            let right = anchor(&slots, r);
            for c in a..=b {
                if slots[c].is_none() {
                    slots[c] = Some(Slot::Interp {
                        left,
                        right,
                        t: (c - l) as f64 / (r - l) as f64,
                    });
                }
            }
        }
        let slots = slots
            .into_iter()
            .map(|s| s.unwrap_or(Slot::Zero))
            .collect();
        Reduced { slots, centers }
    }

    fn dim(&self) -> usize {
        self.centers.len()
    }

    fn expand(&self, v: &[f64]) -> Vec<f64> {
        let val = |a: Option<usize>| a.map_or(0.0, |k| v[k]);
        self.slots
            .iter()
            .map(|s| match *s {
                Slot::Free(k) => v[k],
                Slot::Zero => 0.0,
                Slot::Interp { left, right, t } => (1.0 - t) * val(left) + t * val(right),
            })
            .collect()
    }

    fn adjoint(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (s, &gc) in self.slots.iter().zip(g) {
            match *s {
                Slot::Free(k) => out[k] += gc,
                Slot::Zero => {}
                Slot::Interp { left, right, t } => {
                    if let Some(k) = left {
                        out[k] += (1.0 - t) * gc;
                    }
                    if let Some(k) = right {
                        out[k] += t * gc;
                    }
                }
            }
        }
        out
    }
}

fn zero_runs(positive: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < positive.len() {
        if !positive[i] {
            let a = i;
            while i + 1 < positive.len() && !positive[i + 1] {
                i += 1;
            }
            runs.push((a, i));
        }
        i += 1;
    }
    runs
}

/// `Lᵀu` for the padded dual.
fn lt_padded(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    (0..n)
        .map(|i| {
            let l = if i > 0 { u[i - 1] } else { 0.0 };
            let r = if i + 1 < n { u[i + 1] } else { 0.0 };
            l - 2.0 * u[i] + r
        })
        .collect()
}

/// `Lτ` placed at the row centres of a length-`n` vector (ends zero).
fn l_padded(tau: &[f64]) -> Vec<f64> {
    let n = tau.len();
    let mut out = vec![0.0; n];
    for c in 1..n - 1 {
        out[c] = tau[c - 1] - 2.0 * tau[c] + tau[c + 1];
    }
    out
}

/// Fills zero-weight runs: straight line between the neighbours for interior
/// runs, extension of the adjacent segment for runs touching a read end.
fn fill_zero_runs(tau: &mut [f64], positive: &[bool]) {
    let n = tau.len();
    let runs = zero_runs(positive);
    for &(a, b) in &runs {
        if a > 0 && b < n - 1 {
            let (l, r) = (a - 1, b + 1);
            for i in a..=b {
                let t = (i - l) as f64 / (r - l) as f64;
                tau[i] = (1.0 - t) * tau[l] + t * tau[r];
            }
        }
    }
    for &(a, b) in &runs {
        if a == 0 && b + 2 < n {
            let slope = tau[b + 2] - tau[b + 1];
            for i in 0..=b {
                tau[i] = tau[b + 1] - slope * (b + 1 - i) as f64;
            }
        }
        if b == n - 1 && a >= 2 && a > 0 {
            let slope = tau[a - 1] - tau[a - 2];
            for i in a..n {
                tau[i] = tau[a - 1] + slope * (i + 1 - a) as f64;
            }
        }
    }
}

struct Evaluation {
    /// `z − Lᵀu / w²` on I⁺, zero on I⁰.
    tau: Vec<f64>,
    q: f64,
    grad: Vec<f64>,
}

struct Solver<'a> {
    z: &'a [f64],
    wsq: Vec<f64>,
    positive: Vec<bool>,
    lambda: f64,
    red: Reduced,
}

struct NewtonPoint {
    v: Vec<f64>,
    tau: Vec<f64>,
    signs_ok: bool,
}

impl<'a> Solver<'a> {
    fn evaluate(&self, v: &[f64]) -> Evaluation {
        let u = self.red.expand(v);
        let a = lt_padded(&u);
        let n = self.z.len();
        let mut tau = vec![0.0; n];
        let mut q = 0.0;
        for i in 0..n {
            if self.positive[i] {
                tau[i] = self.z[i] - a[i] / self.wsq[i];
                q += 0.5 * a[i] * a[i] / self.wsq[i] - self.z[i] * a[i];
            }
        }
        let lt = l_padded(&tau);
        let g: Vec<f64> = lt.iter().map(|x| -x).collect();
        let grad = self.red.adjoint(&g);
        Evaluation { tau, q, grad }
    }

    fn q(&self, v: &[f64]) -> f64 {
        let a = lt_padded(&self.red.expand(v));
        (0..self.z.len())
            .filter(|&i| self.positive[i])
            .map(|i| 0.5 * a[i] * a[i] / self.wsq[i] - self.z[i] * a[i])
            .sum()
    }

    fn project(&self, v: &mut [f64]) {
        for x in v.iter_mut() {
            *x = x.clamp(-self.lambda, self.lambda);
        }
    }

    /// Minimiser of the dual over the face where the coordinates in `bound`
    /// sit at `sign · λ`, computed from the primal spline with knots there.
    fn newton_point(&self, bound: &[(usize, f64)]) -> Option<NewtonPoint> {
        let n = self.z.len();
        let mut nodes = Vec::with_capacity(bound.len() + 2);
        nodes.push(0);
        nodes.extend(bound.iter().map(|&(k, _)| self.red.centers[k]));
        nodes.push(n - 1);
        let mut sys = spline::assemble(&nodes, &self.wsq, self.z);
        for (j, &(_, s)) in bound.iter().enumerate() {
            let m = j + 1;
            let hl = (nodes[m] - nodes[m - 1]) as f64;
            let hr = (nodes[m + 1] - nodes[m]) as f64;
            let ls = self.lambda * s;
            sys.rhs[m - 1] -= ls / hl;
            sys.rhs[m] += ls * (1.0 / hl + 1.0 / hr);
            sys.rhs[m + 1] -= ls / hr;
        }
        let coef = spline::solve_tridiagonal(&sys.diag, &sys.off, &sys.rhs)?;
        let tau = spline::expand(&nodes, &coef, n);
        let scale = 1.0 + tau.iter().fold(0.0f64, |a, &t| a.max(t.abs()));
        let signs_ok = bound
            .iter()
            .enumerate()
            .all(|(j, &(_, s))| s * spline::kink(&nodes, &coef, j + 1) >= -1e-11 * scale);

        // Dual from Lᵀu = w²(z − τ), integrated from the left end.
        let mut u = vec![0.0; n];
        let r = |i: usize| {
            if self.positive[i] {
                self.wsq[i] * (self.z[i] - tau[i])
            } else {
                0.0
            }
        };
        if n > 2 {
            u[1] = r(0);
            for i in 1..n - 2 {
                u[i + 1] = r(i) + 2.0 * u[i] - u[i - 1];
            }
        }
        let mut v: Vec<f64> = self.red.centers.iter().map(|&c| u[c]).collect();
        for &(k, s) in bound {
            v[k] = s * self.lambda;
        }
        Some(NewtonPoint { v, tau, signs_ok })
    }

    /// Exact solution from a guess of the signed bound set. The set is
    /// corrected a few times: knots whose kink has the wrong sign are released
    /// and coordinates that left the box are bound.
    fn crossover(&self, bound: &[(usize, f64)]) -> Option<(Vec<f64>, Vec<f64>)> {
        let lam = self.lambda;
        let mut bound = bound.to_vec();
        for _ in 0..8 {
            let np = self.newton_point(&bound)?;
            let inside = np.v.iter().all(|x| x.abs() <= lam * (1.0 + 1e-12));
            if inside && np.signs_ok {
                let mut v = np.v;
                self.project(&mut v);
                return Some((v, np.tau));
            }
            let grad = self.evaluate(&np.v).grad;
            let mut is_bound = vec![false; np.v.len()];
            let mut next = Vec::with_capacity(bound.len());
            for &(k, s) in &bound {
                is_bound[k] = true;
                if -s * grad[k] > 0.0 {
                    next.push((k, s));
                }
            }
            for (k, &x) in np.v.iter().enumerate() {
                if !is_bound[k] && x.abs() > lam {
                    next.push((k, x.signum()));
                }
            }
            next.sort_by_key(|&(k, _)| k);
            if next == bound {
                return None;
            }
            bound = next;
        }
        None
    }

    /// Rows of `Lᵀ E` on `I⁺` in reduced coordinates.
    fn reduced_rows(&self) -> Vec<(usize, Vec<(usize, f64)>)> {
        let n = self.z.len();
        let mut rows = Vec::new();
        for i in (0..n).filter(|&i| self.positive[i]) {
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(4);
            let mut push = |k: usize, c: f64| match row.iter_mut().find(|e| e.0 == k) {
                Some(e) => e.1 += c,
                None => row.push((k, c)),
            };
            for (c, coef) in [(i.wrapping_sub(1), 1.0), (i, -2.0), (i + 1, 1.0)] {
                if c >= n {
                    continue;
                }
                match self.red.slots[c] {
                    Slot::Free(k) => push(k, coef),
                    Slot::Zero => {}
                    Slot::Interp { left, right, t } => {
                        if let Some(k) = left {
                            push(k, coef * (1.0 - t));
                        }
                        if let Some(k) = right {
                            push(k, coef * t);
                        }
                    }
                }
            }
            rows.push((i, row));
        }
        rows
    }

    /// Primal-dual interior point iteration on the reduced box QP; each Newton
    /// system is banded. Tries an exact crossover once the duality gap is
    /// small. Returns the last iterate when no crossover succeeds.
    fn interior_point(&self, max_iter: usize) -> (Vec<f64>, Option<Vec<f64>>, usize) {
        let m = self.red.dim();
        let lam = self.lambda;
        let rows = self.reduced_rows();
        let p = rows
            .iter()
            .flat_map(|(_, r)| r.iter().flat_map(move |a| r.iter().map(move |b| a.0.abs_diff(b.0))))
            .max()
            .unwrap_or(0);
        let mut hess = Band::zeros(m, p);
        let mut lin = vec![0.0; m];
        for (i, row) in &rows {
            let d = 1.0 / self.wsq[*i];
            for &(a, ca) in row {
                lin[a] += ca * self.z[*i];
                for &(b, cb) in row {
                    if a >= b {
                        hess.add(a, b, d * ca * cb);
                    }
                }
            }
        }
        let residual_norm = |v: &[f64], mu1: &[f64], mu2: &[f64], t: f64| -> f64 {
            let hv = hess.mul(v);
            let mut r = 0.0;
            for k in 0..m {
                let rd = hv[k] - lin[k] + mu1[k] - mu2[k];
                let c1 = mu1[k] * (lam - v[k]) - 1.0 / t;
                let c2 = mu2[k] * (lam + v[k]) - 1.0 / t;
                r += rd * rd + c1 * c1 + c2 * c2;
            }
            r.sqrt()
        };

        let mut v = vec![0.0; m];
        let scale = lin.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(1e-300);
        let mut mu1 = vec![scale / lam; m];
        let mut mu2 = vec![scale / lam; m];
        let mut t = 1e-10;
        let mut step = f64::INFINITY;
        let mut iterations = 0;
        while iterations < max_iter.min(500) {
            iterations += 1;
            let s1: Vec<f64> = v.iter().map(|x| lam - x).collect();
            let s2: Vec<f64> = v.iter().map(|x| lam + x).collect();
            let gap: f64 = (0..m).map(|k| mu1[k] * s1[k] + mu2[k] * s2[k]).sum();
            let ev = self.evaluate(&v);
            if gap <= 1e-4 * (1.0 + ev.q.abs()) {
                let bound: Vec<(usize, f64)> = (0..m)
                    .filter_map(|k| {
                        if mu1[k] > s1[k] {
                            Some((k, 1.0))
                        } else if mu2[k] > s2[k] {
                            Some((k, -1.0))
                        } else {
                            None
                        }
                    })
                    .collect();
                if let Some((vv, tau)) = self.crossover(&bound) {
                    return (vv, Some(tau), iterations);
                }
            }
            if gap <= 1e-14 * (1.0 + ev.q.abs()) {
                break;
            }
            if step >= 0.2 {
                t = (4.0 * m as f64 / gap).max(1.2 * t);
            }
            let hv = hess.mul(&v);
            let mut sys = hess.clone();
            let mut rhs = vec![0.0; m];
            for k in 0..m {
                sys.rows[k][0] += mu1[k] / s1[k] + mu2[k] / s2[k];
                rhs[k] = -(hv[k] - lin[k]) - (1.0 / s1[k] - 1.0 / s2[k]) / t;
            }
            let Some(dv) = sys.solve(&rhs) else {
                break;
            };
            let dmu1: Vec<f64> = (0..m)
                .map(|k| (1.0 / t - mu1[k] * s1[k] + mu1[k] * dv[k]) / s1[k])
                .collect();
            let dmu2: Vec<f64> = (0..m)
                .map(|k| (1.0 / t - mu2[k] * s2[k] - mu2[k] * dv[k]) / s2[k])
                .collect();
            step = 1.0f64;
            for k in 0..m {
                if dmu1[k] < 0.0 {
                    step = step.min(-0.99 * mu1[k] / dmu1[k]);
                }
                if dmu2[k] < 0.0 {
                    step = step.min(-0.99 * mu2[k] / dmu2[k]);
                }
            }
            let r0 = residual_norm(&v, &mu1, &mu2, t);
            let mut accepted = false;
            for _ in 0..60 {
                let nv: Vec<f64> = (0..m).map(|k| v[k] + step * dv[k]).collect();
                let feasible = nv.iter().all(|x| x.abs() < lam);
                if feasible {
                    let n1: Vec<f64> = (0..m).map(|k| mu1[k] + step * dmu1[k]).collect();
                    let n2: Vec<f64> = (0..m).map(|k| mu2[k] + step * dmu2[k]).collect();
                    if residual_norm(&nv, &n1, &n2, t) <= (1.0 - 0.01 * step) * r0 {
                        v = nv;
                        mu1 = n1;
                        mu2 = n2;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        (v, None, iterations)
    }

    fn lipschitz(&self) -> f64 {
        let m = self.red.dim();
        let mut x = vec![1.0 / (m as f64).sqrt(); m];
        let mut est = 0.0;
        for _ in 0..50 {
            let a = lt_padded(&self.red.expand(&x));
            let scaled: Vec<f64> = a
                .iter()
                .enumerate()
                .map(|(i, v)| if self.positive[i] { v / self.wsq[i] } else { 0.0 })
                .collect();
            let y = self.red.adjoint(&l_padded(&scaled));
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 1.0;
            }
            est = norm;
            x = y.iter().map(|v| v / norm).collect();
        }
        1.1 * est
    }
}

/// Solves the weighted generalized lasso through its dual.
pub fn solve_dual(p: &GenLassoProblem, opts: &SolveOptions) -> Result<GenLassoSolution, GenLassoError> {
    p.validate()?;
    let n = p.len();
    let positive: Vec<bool> = p.weights.iter().map(|&w| w != 0.0).collect();
    let count = positive.iter().filter(|&&b| b).count();
    if count < 2 {
        return Err(GenLassoError::RankDeficient { positive: count });
    }
    let wsq = p.wsq();
    let solver = Solver {
        z: &p.target,
        wsq,
        positive: positive.clone(),
        lambda: p.lambda,
        red: Reduced::new(&positive),
    };
    let m = solver.red.dim();

    let masked: Vec<f64> = (0..n)
        .map(|i| if positive[i] { p.target[i] } else { 0.0 })
        .collect();
    let lz = second_difference(&masked).expect("n >= 3");
    let threshold = opts.tol * (1.0 + lz.iter().fold(0.0f64, |a, &x| a.max(x.abs())));

    let mut v = match &opts.warm_start {
        Some(u0) if u0.len() == n - 2 && p.lambda > 0.0 => {
            let mut v: Vec<f64> = solver.red.centers.iter().map(|&c| u0[c - 1]).collect();
            solver.project(&mut v);
            v
        }
        _ => vec![0.0; m],
    };

    let mut lipschitz: Option<f64> = None;
    let mut exact_tau: Option<Vec<f64>> = None;
    let mut converged = false;
    let mut iterations = 0;

    if p.lambda == 0.0 || m == 0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        converged = true;
    }

    if !converged {
        if opts.warm_start.is_some() {
            let bound: Vec<(usize, f64)> = v
                .iter()
                .enumerate()
                .filter(|(_, x)| x.abs() >= p.lambda * (1.0 - 1e-9))
                .map(|(k, x)| (k, x.signum()))
                .collect();
            iterations += 1;
            if let Some((vv, tau)) = solver.crossover(&bound) {
                v = vv;
                exact_tau = Some(tau);
                converged = true;
            }
        }
    }
    if !converged {
        let (vv, tau, its) = solver.interior_point(opts.max_iter);
        iterations += its;
        if let Some(tau) = tau {
            exact_tau = Some(tau);
            converged = true;
            v = vv;
        } else if opts.warm_start.is_none() {
            v = vv;
        }
    }

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let ev = solver.evaluate(&v);
        let pg = v
            .iter()
            .zip(&ev.grad)
            .map(|(&x, &g)| (x - (x - g).clamp(-p.lambda, p.lambda)).abs())
            .fold(0.0f64, f64::max);
        if pg <= threshold {
            converged = true;
            break;
        }
        let eps = pg.min(1e-3 * p.lambda);
        let bound: Vec<(usize, f64)> = (0..m)
            .filter_map(|k| {
                if v[k] >= p.lambda - eps && ev.grad[k] < 0.0 {
                    Some((k, 1.0))
                } else if v[k] <= -p.lambda + eps && ev.grad[k] > 0.0 {
                    Some((k, -1.0))
                } else {
                    None
                }
            })
            .collect();

        let mut stepped = false;
        if let Some(np) = solver.newton_point(&bound) {
            let inside = np
                .v
                .iter()
                .all(|x| x.abs() <= p.lambda * (1.0 + 1e-12));
            if inside && np.signs_ok {
                v = np.v;
                solver.project(&mut v);
                exact_tau = Some(np.tau);
                converged = true;
                break;
            }
            let dir: Vec<f64> = np.v.iter().zip(&v).map(|(a, b)| a - b).collect();
            let mut alpha = 1.0;
            while alpha > 1e-10 {
                let mut trial: Vec<f64> = v.iter().zip(&dir).map(|(x, d)| x + alpha * d).collect();
                solver.project(&mut trial);
                let decrease: f64 = trial
                    .iter()
                    .zip(&v)
                    .zip(&ev.grad)
                    .map(|((t, x), g)| g * (t - x))
                    .sum();
                if decrease < 0.0 && solver.q(&trial) <= ev.q + 1e-4 * decrease {
                    v = trial;
                    stepped = true;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if !stepped {
            let l = *lipschitz.get_or_insert_with(|| solver.lipschitz());
            for (x, g) in v.iter_mut().zip(&ev.grad) {
                *x -= g / l;
            }
            solver.project(&mut v);
        }
    }

    let u = solver.red.expand(&v);
    let tau = match exact_tau {
        Some(t) => t,
        None => {
            let mut t = solver.evaluate(&v).tau;
            fill_zero_runs(&mut t, &positive);
            t
        }
    };
    let mut sol = GenLassoSolution {
        tau,
        dual_u: u[1..n - 1].to_vec(),
        kkt_residual: 0.0,
        iterations,
        converged,
    };
    sol.kkt_residual = kkt_check(p, &sol);
    if converged {
        Ok(sol)
    } else {
        Err(GenLassoError::MaxIter(Box::new(sol)))
    }
}

/// Largest violation of the optimality conditions: stationarity on `I⁺`, the
/// box, complementary slackness, and the equality conditions on `I⁰`.
pub fn kkt_check(p: &GenLassoProblem, s: &GenLassoSolution) -> f64 {
    let n = p.len();
    if s.tau.len() != n || s.dual_u.len() + 2 != n {
        return f64::INFINITY;
    }
    let lam = p.lambda;
    let ltu = crate::profile::second_difference_adjoint(&s.dual_u);
    let ltau = second_difference(&s.tau).expect("n >= 3");
    let tau_scale = crate::profile::default_tolerance(&s.tau);
    let u_tol = 1e-9 * (1.0 + lam);
    let mut worst = 0.0f64;
    for i in 0..n {
        let w = p.weights[i];
        if w != 0.0 {
            worst = worst.max((w * w * (s.tau[i] - p.target[i]) + ltu[i]).abs());
        } else {
            worst = worst.max(ltu[i].abs());
        }
    }
    for (r, (&u, &l)) in s.dual_u.iter().zip(&ltau).enumerate() {
        worst = worst.max(u.abs() - lam);
        if u.abs() < lam - u_tol {
            worst = worst.max(l.abs());
        }
        if l.abs() > tau_scale {
            worst = worst.max((u - lam * l.signum()).abs());
        }
        if p.weights[r + 1] == 0.0 {
            worst = worst.max(l.abs());
        }
    }
    worst.max(0.0)
}
