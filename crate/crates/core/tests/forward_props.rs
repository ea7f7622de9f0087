use dna_inverse::forward::{add_noise, forward, generate_profile, true_branches};
use dna_inverse::pulse_model::Branch;
use dna_inverse::{NoiseKind, ProfileSpec, PulseModel};
use proptest::prelude::*;

fn spec() -> impl Strategy<Value = ProfileSpec> {
    (72usize..400, 0usize..5, prop::bool::ANY)
        .prop_map(|(n, c, zero_run)| {
            let s = ProfileSpec::new(n, c);
            if zero_run { s.with_zero_run() } else { s }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn branch_inverse_undoes_forward(spec in spec(), seed in any::<u64>()) {
        let m = PulseModel::default();
        let tau = generate_profile(&m, &spec, seed);
        prop_assume!(tau.is_ok());
        let tau = tau.unwrap();
        let z = forward(&m, &tau);
        let d = true_branches(&m, &tau);
        for i in 0..tau.len() {
            prop_assert!((0.0..=m.psi_max).contains(&z[i]));
            if tau[i] >= 0.0 {
                let back = m.branch_inverse(Branch::from_bit(d[i]), z[i]).unwrap();
                prop_assert!((back - tau[i]).abs() <= 1e-9, "i {}: {} vs {}", i, back, tau[i]);
            } else {
                prop_assert_eq!(z[i], 0.0);
            }
        }
    }

    #[test]
    fn noise_keeps_signal_valid(
        z in prop::collection::vec(0.0..=1.0f64, 1..200),
        seed in any::<u64>(),
        sigma in 0.0..0.3f64,
        gaussian in prop::bool::ANY,
    ) {
        let kind = if gaussian { NoiseKind::Gaussian } else { NoiseKind::Binomial };
        let noisy = add_noise(&z, seed, sigma, kind, 1.0);
        prop_assert_eq!(noisy.len(), z.len());
        prop_assert!(noisy.iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert_eq!(&noisy, &add_noise(&z, seed, sigma, kind, 1.0));
        if !gaussian {
            for (a, b) in z.iter().zip(&noisy) {
                if *a == 0.0 {
                    prop_assert_eq!(*b, 0.0);
                }
            }
        }
        prop_assert_eq!(add_noise(&z, seed, 0.0, kind, 1.0), z);
    }
}
