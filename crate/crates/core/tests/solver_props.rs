use dna_inverse::forward::{simulate_read, true_branches, SimulationSpec};
use dna_inverse::io::ReportRecord;
use dna_inverse::profile;
use dna_inverse::solver::{self, dna_inverse};
use dna_inverse::{Execution, NoiseKind, ProfileSpec, PulseModel, Read, SolveParams};
use proptest::prelude::*;

fn read(n: usize, c: usize, sigma: f64, seed: u64) -> Read {
    let spec = SimulationSpec {
        profile: ProfileSpec::new(n, c).crossing_gap(60),
        dx: 0.1,
        sigma,
        noise: NoiseKind::Binomial,
    };
    simulate_read(&PulseModel::default(), &spec, format!("r{seed}"), seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn selection_dominates_and_is_deterministic(
        n in 100usize..300,
        c in 0usize..5,
        noisy in prop::bool::ANY,
        seed in any::<u64>(),
    ) {
        let m = PulseModel::default();
        let r = read(n, c, if noisy { 0.05 } else { 0.0 }, seed);
        let params = SolveParams { lambda: 1e-3, smoothing: noisy, ..SolveParams::default() };
        let a = dna_inverse(&m, &r, &params).unwrap();
        let best = a
            .per_candidate
            .iter()
            .filter_map(|c| c.objective)
            .fold(f64::INFINITY, f64::min);
        prop_assert_eq!(a.objective, best);
        let winner = a.per_candidate.iter().find(|c| c.objective == Some(best)).unwrap();
        prop_assert_eq!(&winner.d, &a.d_star);

        let b = dna_inverse(&m, &r, &params).unwrap();
        let seq = SolveParams { execution: Execution::Sequential, ..params };
        let s = dna_inverse(&m, &r, &seq).unwrap();
        let strip = |x| ReportRecord::from_report(&r, &x).without_timing();
        let a = strip(a);
        prop_assert_eq!(&a, &strip(b));
        prop_assert_eq!(&a, &strip(s));
    }
}

/// Noiseless reads: knots land within two samples of the true ones.
#[test]
fn noiseless_breakpoints_match() {
    let m = PulseModel::default();
    let params = SolveParams { lambda: 1e-4, smoothing: false, ..SolveParams::default() };
    for seed in 0..100u64 {
        let r = read([100, 300][(seed % 2) as usize], (seed % 5) as usize, 0.0, seed);
        let truth = &r.ground_truth.as_ref().unwrap().values;
        let want = profile::breakpoints(truth, profile::default_tolerance(truth)).unwrap();
        let got = dna_inverse(&m, &r, &params).unwrap().breakpoints;
        assert_eq!(got.count(), want.count(), "seed {seed}: {got:?} vs {want:?}");
        for (a, b) in got.interior().iter().zip(want.interior()) {
            assert!(a.abs_diff(*b) <= 2, "seed {seed}: {got:?} vs {want:?}");
        }
    }
}

/// Binomial noise at σ = 0.05: outside the oscillation windows the selected
/// branches agree with the truth on at least 95% of the samples.
#[test]
fn noisy_branches_agree_outside_windows() {
    let m = PulseModel::default();
    let params = SolveParams { lambda: 1e-3, ..SolveParams::default() };
    let (mut agree, mut total) = (0usize, 0usize);
    for seed in 0..100u64 {
        let r = read(300, (seed % 5) as usize, 0.05, seed);
        let d_true = true_branches(&m, &r.ground_truth.as_ref().unwrap().values);
        let (_, cs) = solver::prepare(&m, &r, &params).unwrap();
        let d = dna_inverse(&m, &r, &params).unwrap().d_star;
        for i in (0..300).filter(|&i| !cs.osc_windows.iter().any(|w| w.contains(i))) {
            total += 1;
            agree += usize::from(d[i] == d_true[i]);
        }
    }
    let rate = agree as f64 / total as f64;
    assert!(rate >= 0.95, "agreement {rate}");
}
