//! Everything derived from a signal before solving: branch inverses, weights,
//! the zero set and the reduced set of branch assignments.
//!
//! A branch assignment `d` has `d_i = 1` when sample `i` is explained by the
//! decaying branch and `d_i = 0` for the rising branch.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pulse_model::{Branch, PulseModel};

pub const DEFAULT_WINDOW: usize = 60;
pub const DEFAULT_SUBDIVISIONS: usize = 3;
pub const DEFAULT_SMOOTHING_WINDOW: usize = 5;
/// Relative floor applied to non-zero weights.
pub const WEIGHT_FLOOR: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("smoothing window must be odd and >= 3, got {0}")]
    BadWindow(usize),
    #[error("window size and subdivisions must be >= 1 (s_A = {s_a}, m_A = {m_a})")]
    BadCandidateParams { s_a: usize, m_a: usize },
    #[error("signal needs at least 3 samples, got {0}")]
    TooShort(usize),
}

/// Centred moving average with uniform weights; near the ends the window
/// shrinks symmetrically.
pub fn smooth(z: &[f64], window: usize) -> Result<Vec<f64>, PreprocessError> {
    if window < 3 || window % 2 == 0 {
        return Err(PreprocessError::BadWindow(window));
    }
    let n = z.len();
    let half = window / 2;
    Ok((0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let s: f64 = z[i - h..=i + h].iter().sum();
            s / (2 * h + 1) as f64
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchData {
    /// Signal the inverses were computed from (smoothed or raw).
    pub signal: Vec<f64>,
    /// Rising-branch inverse, `+∞` where empty.
    pub z0: Vec<f64>,
    /// Decaying-branch inverse, `+∞` where empty.
    pub z1: Vec<f64>,
    /// ψ′ at `z0`, `>= 0`, zero where empty.
    pub w0: Vec<f64>,
    /// ψ′ at `z1`, `<= 0`, zero where empty.
    pub w1: Vec<f64>,
    /// `z1 − z0` where both exist, `+∞` otherwise.
    pub h: Vec<f64>,
}

impl BranchData {
    pub fn len(&self) -> usize {
        self.z0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z0.is_empty()
    }

    /// Target `z^d` and absolute weights `|w_d|` for an assignment.
    pub fn target_and_weights(&self, d: &[u8]) -> (Vec<f64>, Vec<f64>) {
        d.iter()
            .enumerate()
            .map(|(i, &b)| {
                if b == 1 {
                    (self.z1[i], self.w1[i].abs())
                } else {
                    (self.z0[i], self.w0[i].abs())
                }
            })
            .unzip()
    }
}

pub fn branch_data(model: &PulseModel, z: &[f64], smoothing: bool) -> BranchData {
    let signal = if smoothing && z.len() >= 3 {
        smooth(z, DEFAULT_SMOOTHING_WINDOW).expect("default window is valid")
    } else {
        z.to_vec()
    };
    let n = signal.len();
    let mut z0 = vec![f64::INFINITY; n];
    let mut z1 = vec![f64::INFINITY; n];
    let mut w0 = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    for (i, &b) in signal.iter().enumerate() {
        if let Some(t) = model.branch_inverse(Branch::Rise, b) {
            z0[i] = t;
            w0[i] = model.derivative(t);
        }
        if let Some(t) = model.branch_inverse(Branch::Decay, b) {
            z1[i] = t;
            w1[i] = model.derivative(t);
        }
    }
    let wmax = w0
        .iter()
        .chain(&w1)
        .fold(0.0f64, |a, &w| a.max(w.abs()));
    let floor = WEIGHT_FLOOR * wmax;
    for w in w0.iter_mut().chain(w1.iter_mut()) {
        if *w != 0.0 && w.abs() < floor {
            *w = floor.copysign(*w);
        }
    }
    let h = z0
        .iter()
        .zip(&z1)
        .map(|(&a, &b)| if a.is_finite() && b.is_finite() { b - a } else { f64::INFINITY })
        .collect();
    BranchData {
        signal,
        z0,
        z1,
        w0,
        w1,
        h,
    }
}

/// Default tolerance for the zero set: `1e-6 · psi_max`.
pub fn default_zero_tol(model: &PulseModel) -> f64 {
    1e-6 * model.psi_max
}

/// Indices `i` with `z_i <= tol` and `z_{i+1} <= tol`.
pub fn zero_set(z: &[f64], tol: f64) -> Vec<usize> {
    z.windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] <= tol && w[1] <= tol)
        .map(|(i, _)| i)
        .collect()
}

/// Index interval `[start, end]`, both inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
    /// Local minimum of h the window was built around.
    pub center: usize,
}

impl Window {
    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub osc_windows: Vec<Window>,
    pub zero_set: Vec<usize>,
    /// Distinct assignments in lexicographic order.
    pub candidates: Vec<Vec<u8>>,
    pub s_a: usize,
    pub m_a: usize,
}

impl CandidateSet {
    /// `2 (m_A + 1)^k`.
    pub fn bound(&self) -> f64 {
        2.0 * ((self.m_a + 1) as f64).powi(self.osc_windows.len() as i32)
    }
}

fn median(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

/// h used for centre detection: values above the peak (no preimage on either
/// branch) count as the junction itself, `h = 0`.
fn detection_profile(bd: &BranchData) -> Vec<f64> {
    bd.h
        .iter()
        .zip(&bd.z0)
        .map(|(&h, &z0)| if z0.is_infinite() { 0.0 } else { h })
        .collect()
}

/// Local minima of h over `±s_A/2` that stand out from the bulk of h.
pub fn oscillation_centers(bd: &BranchData, s_a: usize) -> Vec<usize> {
    let hd = detection_profile(bd);
    let n = hd.len();
    let mut finite: Vec<f64> = hd.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < 3 {
        return Vec::new();
    }
    finite.sort_by(f64::total_cmp);
    let med = median(&finite);
    let mut dev: Vec<f64> = finite.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let threshold = med - 0.5 * median(&dev);
    let half = s_a / 2;
    let mut centers = Vec::new();
    for i in 1..n.saturating_sub(1) {
        let v = hd[i];
        if !v.is_finite() || v >= threshold {
            continue;
        }
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let is_min = (lo..i).all(|j| !(hd[j] <= v)) && (i + 1..=hi).all(|j| !(hd[j] < v));
        if is_min {
            centers.push(i);
        }
    }
    centers
}

fn windows_around(centers: &[usize], n: usize, s_a: usize) -> Vec<Window> {
    let half = s_a / 2;
    let mut out: Vec<Window> = Vec::new();
    for &c in centers {
        let start = c.saturating_sub(half);
        let end = (start + s_a - 1).min(n - 1);
        if let Some(last) = out.last_mut() {
            let overlap = (last.end + 1).saturating_sub(start);
            if overlap > half {
                last.end = last.end.max(end);
                continue;
            }
        }
        out.push(Window { start, end, center: c });
    }
    out
}

/// Transition choices of one window. A transition at `t` makes `d` change
/// between `t - 1` and `t`.
struct WindowChoices {
    /// Offsets independent of the incoming value.
    fixed: Vec<usize>,
    /// Offset next to the window centre, resolved per incoming value.
    snapped: Option<[usize; 2]>,
}

/// Side of the centre sample: the branch whose inverse at the centre lines up
/// with the straight lines through the neighbours on either side.
fn centre_transition(bd: &BranchData, c: usize, left: u8) -> usize {
    let n = bd.len();
    if c < 2 || c + 2 >= n {
        return c;
    }
    let inv = |b: u8, i: usize| if b == 0 { bd.z0[i] } else { bd.z1[i] };
    let right = 1 - left;
    let pl = 2.0 * inv(left, c - 1) - inv(left, c - 2);
    let pr = 2.0 * inv(right, c + 1) - inv(right, c + 2);
    let miss = |x: f64| {
        let a = (x - pl).abs();
        let b = (x - pr).abs();
        let m = a.min(b);
        if m.is_finite() {
            m
        } else {
            f64::INFINITY
        }
    };
    let e_left = miss(inv(left, c));
    let e_right = miss(inv(right, c));
    if e_left < e_right {
        c + 1
    } else {
        c
    }
}

fn window_choices(bd: &BranchData, w: &Window, m_a: usize) -> WindowChoices {
    let len = w.end - w.start + 1;
    if len < 2 {
        return WindowChoices {
            fixed: Vec::new(),
            snapped: None,
        };
    }
    let clamp = |t: usize| t.clamp(w.start + 1, w.end);
    let mut offsets: Vec<usize> = (0..m_a)
        .map(|j| clamp(w.start + ((2 * j + 1) * len) / (2 * m_a)))
        .collect();
    let nearest = (0..m_a)
        .min_by_key(|&j| offsets[j].abs_diff(w.center))
        .expect("m_a >= 1");
    let snapped = if w.center > w.start && w.center < w.end {
        offsets.remove(nearest);
        Some([
            clamp(centre_transition(bd, w.center, 0)),
            clamp(centre_transition(bd, w.center, 1)),
        ])
    } else {
        None
    };
    WindowChoices {
        fixed: offsets,
        snapped,
    }
}

/// Builds the reduced candidate set: assignments constant outside the
/// oscillation windows, with at most one transition inside each window, and
/// zero on the zero set.
pub fn candidate_set(
    bd: &BranchData,
    zero: &[usize],
    s_a: usize,
    m_a: usize,
) -> Result<CandidateSet, PreprocessError> {
    if s_a == 0 || m_a == 0 {
        return Err(PreprocessError::BadCandidateParams { s_a, m_a });
    }
    let n = bd.len();
    if n < 3 {
        return Err(PreprocessError::TooShort(n));
    }
    let centers = oscillation_centers(bd, s_a);
    let windows = windows_around(&centers, n, s_a);
    let choices: Vec<WindowChoices> = windows.iter().map(|w| window_choices(bd, w, m_a)).collect();

    let mut zero_mask = vec![false; n];
    for &i in zero {
        if i < n {
            zero_mask[i] = true;
        }
    }

    let mut set = BTreeSet::new();
    let mut transitions = Vec::with_capacity(windows.len());
    for polarity in 0..=1u8 {
        enumerate(&choices, 0, polarity, &mut transitions, &mut |ts: &[usize]| {
            let mut d = vec![polarity; n];
            let mut value = polarity;
            let mut next = 0;
            for (i, slot) in d.iter_mut().enumerate() {
                while next < ts.len() && ts[next] == i {
                    value = 1 - value;
                    next += 1;
                }
                *slot = value;
            }
            if d.iter().zip(&zero_mask).all(|(&b, &z)| !z || b == 0) {
                set.insert(d);
            }
        });
    }
    Ok(CandidateSet {
        osc_windows: windows,
        zero_set: zero.to_vec(),
        candidates: set.into_iter().collect(),
        s_a,
        m_a,
    })
}

fn enumerate(
    choices: &[WindowChoices],
    k: usize,
    value: u8,
    ts: &mut Vec<usize>,
    emit: &mut dyn FnMut(&[usize]),
) {
    if k == choices.len() {
        emit(ts);
        return;
    }
    enumerate(choices, k + 1, value, ts, emit);
    let c = &choices[k];
    let snapped = c.snapped.map(|s| s[value as usize]);
    for t in c.fixed.iter().copied().chain(snapped) {
        ts.push(t);
        enumerate(choices, k + 1, 1 - value, ts, emit);
        ts.pop();
    }
}
