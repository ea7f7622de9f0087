//! The coordinatewise forward map, synthetic profiles and noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{self, TimingProfile, MIN_BREAK_SPACING};
use crate::pulse_model::PulseModel;

/// Default grid spacing: 0.1 kb per sample.
pub const DEFAULT_DX: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForwardError {
    #[error("n = {n} cannot hold {c} breakpoints with spacing {spacing}")]
    Infeasible { n: usize, c: usize, spacing: usize },
    #[error("invalid generator setting: {0}")]
    InvalidSetting(String),
    #[error("no profile satisfying the constraints found after {0} attempts")]
    Exhausted(usize),
    #[error("invalid read: {0}")]
    InvalidRead(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Read {
    pub id: String,
    pub z: Vec<f64>,
    pub dx: f64,
    pub ground_truth: Option<TimingProfile>,
    pub ground_truth_d: Option<Vec<u8>>,
}

impl Read {
    pub fn new(id: impl Into<String>, z: Vec<f64>, dx: f64) -> Result<Self, ForwardError> {
        let r = Read {
            id: id.into(),
            z,
            dx,
            ground_truth: None,
            ground_truth_d: None,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), ForwardError> {
        let n = self.z.len();
        if n < 3 {
            return Err(ForwardError::InvalidRead(format!(
                "read {} has {} samples, need at least 3",
                self.id, n
            )));
        }
        if !(self.dx.is_finite() && self.dx > 0.0) {
            return Err(ForwardError::InvalidRead(format!(
                "read {} has grid spacing {}",
                self.id, self.dx
            )));
        }
        if let Some(i) = self.z.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ForwardError::InvalidRead(format!(
                "read {} has invalid signal value {} at sample {}",
                self.id,
                self.z[i],
                i + 1
            )));
        }
        if let Some(t) = &self.ground_truth {
            if t.values.len() != n {
                return Err(ForwardError::InvalidRead(format!(
                    "read {}: ground truth has {} samples, signal has {}",
                    self.id,
                    t.values.len(),
                    n
                )));
            }
        }
        if let Some(d) = &self.ground_truth_d {
            if d.len() != n || d.iter().any(|&b| b > 1) {
                return Err(ForwardError::InvalidRead(format!(
                    "read {}: ground-truth branches must be {} bits",
                    self.id, n
                )));
            }
        }
        Ok(())
    }
}

/// Ψ(τ), applied coordinatewise.
pub fn forward(model: &PulseModel, tau: &[f64]) -> Vec<f64> {
    tau.iter().map(|&t| model.psi(t)).collect()
}

/// Diagonal of the Jacobian of Ψ at τ; Ψ acts coordinatewise, so the
/// off-diagonal entries are zero.
pub fn jacobian_diagonal(model: &PulseModel, tau: &[f64]) -> Vec<f64> {
    tau.iter().map(|&t| model.derivative(t)).collect()
}

/// `d̄_i = [τ̄_i > tau0]`.
pub fn true_branches(model: &PulseModel, tau: &[f64]) -> Vec<u8> {
    tau.iter().map(|&t| u8::from(t > model.tau0)).collect()
}

/// Number of sign changes of `τ - level` between consecutive samples, with the
/// index `i` of each change between `i` and `i + 1`.
pub fn level_crossings(tau: &[f64], level: f64) -> Vec<usize> {
    tau.windows(2)
        .enumerate()
        .filter(|(_, w)| (w[0] > level) != (w[1] > level))
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossingPolicy {
    /// Any number of crossings of the pulse end.
    Free,
    /// The profile stays on one side of the pulse end.
    NoCrossing,
    /// Exactly one crossing.
    Single,
    /// Exactly two crossings.
    VShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub n: usize,
    /// Number of interior breakpoints.
    pub breakpoints: usize,
    pub spacing_min: usize,
    /// Range of |slope| in minutes per sample.
    pub slope_range: (f64, f64),
    pub start_range: (f64, f64),
    pub tau_max: f64,
    pub policy: CrossingPolicy,
    /// Require a run of negative times, which the model maps to zero signal.
    pub zero_run: bool,
    /// Minimum distance between crossings of the pulse end; crossings also
    /// keep half this distance from the read ends.
    pub min_crossing_gap: usize,
}

impl ProfileSpec {
    pub fn new(n: usize, breakpoints: usize) -> Self {
        ProfileSpec {
            n,
            breakpoints,
            spacing_min: MIN_BREAK_SPACING,
            slope_range: (0.02, 0.1),
            start_range: (0.0, 8.0),
            tau_max: 15.0,
            policy: CrossingPolicy::Free,
            zero_run: false,
            min_crossing_gap: 0,
        }
    }

    pub fn policy(mut self, policy: CrossingPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn crossing_gap(mut self, gap: usize) -> Self {
        self.min_crossing_gap = gap;
        self
    }

    pub fn with_zero_run(mut self) -> Self {
        self.zero_run = true;
        self
    }

    fn check(&self) -> Result<(), ForwardError> {
        if self.spacing_min == 0 || self.n < 3 {
            return Err(ForwardError::InvalidSetting(
                "need n >= 3 and spacing_min >= 1".into(),
            ));
        }
        if self.n - 1 < (self.breakpoints + 1) * self.spacing_min {
            return Err(ForwardError::Infeasible {
                n: self.n,
                c: self.breakpoints,
                spacing: self.spacing_min,
            });
        }
        let (lo, hi) = self.slope_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(ForwardError::InvalidSetting(format!(
                "slope range ({lo}, {hi}) must be positive and ordered"
            )));
        }
        let (a, b) = self.start_range;
        if !(a <= b && a.is_finite() && b.is_finite()) {
            return Err(ForwardError::InvalidSetting(format!(
                "start range ({a}, {b}) must be ordered"
            )));
        }
        Ok(())
    }
}

const MAX_ATTEMPTS: usize = 100_000;

/// Draws a seeded random piecewise-linear profile with the requested structure.
///
/// Unless a zero run is requested the result is non-negative, has exactly
/// `spec.breakpoints` interior breakpoints spaced at least `spec.spacing_min`
/// apart, and no two consecutive samples are equal.
pub fn generate_profile(
    model: &PulseModel,
    spec: &ProfileSpec,
    seed: u64,
) -> Result<Vec<f64>, ForwardError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let tau = draw_profile(spec, &mut rng);
        if accept(model, spec, &tau) {
            return Ok(tau);
        }
    }
    Err(ForwardError::Exhausted(MAX_ATTEMPTS))
}

fn draw_profile(spec: &ProfileSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c = spec.breakpoints;
    let slack = spec.n - 1 - (c + 1) * spec.spacing_min;
    let mut cuts: Vec<usize> = (0..c).map(|_| rng.random_range(0..=slack)).collect();
    cuts.sort_unstable();
    let mut knots = vec![0usize];
    let mut prev_cut = 0;
    for &cut in &cuts {
        let last = *knots.last().unwrap();
        knots.push(last + spec.spacing_min + (cut - prev_cut));
        prev_cut = cut;
    }
    knots.push(spec.n - 1);

    let (lo, hi) = spec.slope_range;
    let mut slopes: Vec<f64> = Vec::with_capacity(c + 1);
    while slopes.len() < c + 1 {
        let mag = rng.random_range(lo..=hi);
        let s = if rng.random_bool(0.5) { mag } else { -mag };
        if let Some(&p) = slopes.last() {
            if (s - p).abs() < 0.25 * lo {
                continue;
            }
        }
        slopes.push(s);
    }

    let (a, b) = spec.start_range;
    let start = if spec.zero_run {
        rng.random_range(-3.0..=b)
    } else {
        rng.random_range(a..=b)
    };
    let mut tau = vec![0.0; spec.n];
    tau[0] = start;
    for s in 0..=c {
        let (k0, k1) = (knots[s], knots[s + 1]);
        let base = tau[k0];
        for i in k0 + 1..=k1 {
            tau[i] = base + slopes[s] * (i - k0) as f64;
        }
    }
    tau
}

fn accept(model: &PulseModel, spec: &ProfileSpec, tau: &[f64]) -> bool {
    if tau.iter().any(|&t| t > spec.tau_max) {
        return false;
    }
    let tol = profile::default_tolerance(tau);
    let bp = match profile::breakpoints(tau, tol) {
        Ok(bp) => bp,
        Err(_) => return false,
    };
    if bp.count() != spec.breakpoints || bp.min_gap() < spec.spacing_min {
        return false;
    }
    if spec.zero_run {
        let negatives = tau.iter().filter(|&&t| t < 0.0).count();
        if negatives < 3 || negatives == tau.len() {
            return false;
        }
    } else {
        match profile::membership_with_spacing(tau, spec.breakpoints, tol, spec.spacing_min) {
            Ok(m) if m.in_pc_geq => {}
            _ => return false,
        }
    }
    let crossings = level_crossings(tau, model.tau0);
    let count_ok = match spec.policy {
        CrossingPolicy::Free => true,
        CrossingPolicy::NoCrossing => crossings.is_empty(),
        CrossingPolicy::Single => crossings.len() == 1,
        CrossingPolicy::VShape => crossings.len() == 2,
    };
    if !count_ok {
        return false;
    }
    let gap = spec.min_crossing_gap;
    if gap > 0 {
        let margin = gap / 2;
        let n = tau.len();
        if crossings
            .iter()
            .any(|&i| i + 1 < margin || i + 1 + margin > n)
        {
            return false;
        }
        if crossings.windows(2).any(|w| w[1] - w[0] < gap) {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    Gaussian,
    #[default]
    Binomial,
}

/// Adds seeded measurement noise to a clean signal.
///
/// Gaussian noise is clipped at zero and damped tenfold on exact zeros.
/// Binomial thinning draws `Binomial(K, z/psi_max) / K · psi_max` with
/// `K = round(psi_max² / σ²)`, which has standard deviation at most `σ`.
pub fn add_noise(z: &[f64], seed: u64, sigma: f64, kind: NoiseKind, psi_max: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return z.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        NoiseKind::Gaussian => {
            let normal = Normal::new(0.0, sigma).expect("sigma is positive");
            z.iter()
                .map(|&v| {
                    let e = normal.sample(&mut rng);
                    let e = if v == 0.0 { 0.1 * e } else { e };
                    (v + e).max(0.0)
                })
                .collect()
        }
        NoiseKind::Binomial => {
            let k = (psi_max * psi_max / (sigma * sigma)).round().max(1.0) as u64;
            z.iter()
                .map(|&v| {
                    let p = (v / psi_max).clamp(0.0, 1.0);
                    let draw = Binomial::new(k, p).expect("p is a probability").sample(&mut rng);
                    draw as f64 / k as f64 * psi_max
                })
                .collect()
        }
    }
}

/// Settings for a synthetic read.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub profile: ProfileSpec,
    pub dx: f64,
    pub sigma: f64,
    pub noise: NoiseKind,
}

/// Generates a synthetic read with ground truth. The profile uses `seed`, the
/// noise a seed derived from it.
pub fn simulate_read(
    model: &PulseModel,
    spec: &SimulationSpec,
    id: impl Into<String>,
    seed: u64,
) -> Result<Read, ForwardError> {
    let tau = generate_profile(model, &spec.profile, seed)?;
    let clean = forward(model, &tau);
    let z = add_noise(
        &clean,
        seed ^ 0x9E37_79B9_7F4A_7C15,
        spec.sigma,
        spec.noise,
        model.psi_max,
    );
    let d = true_branches(model, &tau);
    let read = Read {
        id: id.into(),
        z,
        dx: spec.dx,
        ground_truth: Some(TimingProfile { values: tau, dx: spec.dx }),
        ground_truth_d: Some(d),
    };
    read.validate()?;
    Ok(read)
}

/// `count` reads with ids `read-0001`, `read-0002`, …; per-read seeds are
/// drawn from one generator seeded with `seed`.
pub fn simulate_batch(
    model: &PulseModel,
    spec: &SimulationSpec,
    count: usize,
    seed: u64,
) -> Result<Vec<Read>, ForwardError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let s: u64 = rng.random();
            simulate_read(model, spec, format!("read-{:04}", i + 1), s)
        })
        .collect()
}
