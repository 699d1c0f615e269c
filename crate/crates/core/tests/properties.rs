//! Cross-module invariants over random seeds, sizes and parameters.

use acfid::codec::{decode_dataset, encode_dataset, CompressedDataset};
use acfid::event::{canonical_deserialize, canonical_serialize, split_indices, validate_event};
use acfid::fidelity::{apply_adc_scale, excess_test, mmd2_unbiased, NullDistribution};
use acfid::generator::{generate_synthetic, HitLaw, SyntheticConfig};
use acfid::model::{fit, Mode, MomentumBinning, Tag};
use proptest::prelude::*;

fn config(seed: u64, n: usize, independent: bool) -> SyntheticConfig {
    let mut c = SyntheticConfig::default().with_seed(seed, n);
    if independent {
        c.hit_law = HitLaw::Independent;
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn canonical_form_round_trips(seed in any::<u64>(), n in 1usize..40, independent in any::<bool>()) {
        let ds = generate_synthetic(&config(seed, n, independent)).unwrap();
        let bytes = canonical_serialize(&ds);
        let back = canonical_deserialize(&bytes).unwrap();
        prop_assert_eq!(back.events(), ds.events());
        prop_assert_eq!(canonical_serialize(&back), bytes);
        prop_assert!(ds.events().iter().all(|e| validate_event(e).ok()));
    }

    #[test]
    fn splits_are_disjoint_and_exhaustive(n in 2usize..2000, seed in any::<u64>(), f in 0.01f64..0.99) {
        match split_indices(n, seed, f) {
            Ok((a, b)) => {
                prop_assert_eq!(a.len(), (n as f64 * f).floor() as usize);
                let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
            // Only a split that leaves one side empty may be refused.
            Err(_) => {
                let k = (n as f64 * f).floor() as usize;
                prop_assert!(k == 0 || k == n);
            }
        }
    }

    #[test]
    fn codec_closes_and_accounts_additively(
        seed in any::<u64>(),
        n_train in 2usize..120,
        n_test in 1usize..60,
        conditional in any::<bool>(),
        independent in any::<bool>(),
    ) {
        let train = generate_synthetic(&config(seed, n_train, independent)).unwrap();
        let test = generate_synthetic(&config(seed ^ 0x5555, n_test, independent)).unwrap();
        let mode = if conditional { Mode::Conditional } else { Mode::Unconditional };
        let m = fit(&train, mode, &MomentumBinning::uniform(5, 8.0).unwrap()).unwrap();
        let (cd, acc) = encode_dataset(&test, &m).unwrap();
        let restored = CompressedDataset::from_bytes(&cd.to_bytes()).unwrap();
        let decoded = decode_dataset(&restored, &m).unwrap();
        prop_assert_eq!(decoded.events(), test.events());

        for tag in Tag::ALL {
            let gap = acc.achieved_bits[tag.index()] as f64 - acc.section_ideal(tag);
            prop_assert!((-1e-6..=64.0).contains(&gap), "{:?} gap {}", tag, gap);
        }
        prop_assert!(acc.additivity_gap().abs() < 1e-6);
    }

    #[test]
    fn perturbation_keeps_events_valid(seed in any::<u64>(), eps in 0.0f64..2.0) {
        let ds = generate_synthetic(&config(seed, 20, false)).unwrap();
        let p = apply_adc_scale(&ds, eps).unwrap();
        prop_assert!(p.events().iter().all(|e| validate_event(e).ok()));
        let same = apply_adc_scale(&ds, 0.0).unwrap();
        prop_assert_eq!(same.events(), ds.events());
        for (a, b) in ds.events().iter().zip(p.events()) {
            prop_assert_eq!(a.strips, b.strips);
            prop_assert_eq!(a.momentum, b.momentum);
        }
    }

    #[test]
    fn excess_test_of_a_sample_with_itself_is_zero(x in prop::collection::vec(0.0f64..1e4, 2..30)) {
        let r = excess_test(&x, &x).unwrap();
        prop_assert_eq!(r.delta_l, 0.0);
        prop_assert_eq!(r.t, 0.0);
    }

    #[test]
    fn p_values_respect_floor_and_are_one_sided(
        null in prop::collection::vec(-5.0f64..5.0, 1..300),
        a in -6.0f64..6.0,
        b in -6.0f64..6.0,
    ) {
        let d = NullDistribution { t: null };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (p_lo, p_hi) = (d.p_value(lo), d.p_value(hi));
        prop_assert!(p_hi <= p_lo);
        for p in [p_lo, p_hi] {
            prop_assert!(p >= d.floor() && p <= 1.0);
        }
        prop_assert_eq!(d.p_value(f64::INFINITY), d.floor());
    }

    #[test]
    fn mmd_is_symmetric(
        x in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 2..20),
        y in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 2..20),
        sigma in 0.1f64..10.0,
    ) {
        let xy = mmd2_unbiased(&x, &y, sigma).unwrap();
        let yx = mmd2_unbiased(&y, &x, sigma).unwrap();
        prop_assert!((xy - yx).abs() <= 1e-12 * (1.0 + xy.abs()));
    }
}
