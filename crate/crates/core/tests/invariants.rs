// SPDX-License-Identifier: MIT OR Apache-2.0

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xattrib::metrics::{bleu, categorical_kl, rouge_l, sequence_kl};
use xattrib::search::{init_mask, sample_swap, xprompt_search, SearchConfig};
use xattrib::suite::planted_instance;
use xattrib::{GradientGuide, MaskState};

fn tokens() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..12, 0..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn swaps_preserve_cardinality(
        magnitudes in prop::collection::vec(0.0f64..5.0, 3..20),
        k_frac in 0.1f64..0.9,
        seed in any::<u64>(),
        temperature in 0.1f64..10.0,
    ) {
        let len = magnitudes.len();
        let k = ((len as f64 * k_frac) as usize).clamp(1, len - 1);
        let guide = GradientGuide::new(magnitudes, temperature).unwrap();
        let mut mask = init_mask(&guide, k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..30 {
            let (l, v) = sample_swap(&mask, &guide, &mut rng).unwrap();
            prop_assert!(mask.is_kept(l) && !mask.is_kept(v));
            mask.swap(l, v).unwrap();
            prop_assert_eq!(mask.k(), k);
            prop_assert_eq!(mask.ones(), len - k);
        }
    }

    #[test]
    fn search_trace_and_cardinality(seed in 0u64..1000, len in 4usize..14, k_frac in 0.1f64..0.9) {
        let k = ((len as f64 * k_frac) as usize).clamp(1, len - 1);
        let inst = planted_instance(seed, len, 4).unwrap();
        let r = xprompt_search(&inst.model, &inst.prompt, &inst.target, k, &SearchConfig::new(20, seed)).unwrap();
        prop_assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(r.final_mask(len).unwrap().ones(), len - k);
        prop_assert!(r.indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn overlap_metrics_stay_in_unit_interval(a in tokens(), b in tokens(), n in 1usize..5) {
        let s = bleu(&a, &b, n);
        prop_assert!((0.0..=1.0).contains(&s));
        let (p, r, f) = rouge_l(&a, &b);
        for v in [p, r, f] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(f <= p.max(r) + 1e-12);
        if !a.is_empty() {
            prop_assert_eq!(bleu(&a, &a, n), 1.0);
        }
    }

    #[test]
    fn kl_is_nonnegative(seed in 0u64..500, zeros in prop::collection::btree_set(0usize..10, 1..9)) {
        let inst = planted_instance(seed, 10, 4).unwrap();
        let zeros: Vec<usize> = zeros.into_iter().collect();
        let mask = MaskState::from_zeros(10, &zeros).unwrap();
        prop_assert!(sequence_kl(&inst.model, &inst.prompt, &inst.target, &mask).unwrap() >= 0.0);
    }

    #[test]
    fn categorical_kl_of_normalized_vectors(raw in prop::collection::vec(0.01f64..1.0, 2..8), shift in 0.0f64..2.0) {
        let norm = |v: &[f64]| {
            let z: f64 = v.iter().sum();
            v.iter().map(|x| (x / z).ln()).collect::<Vec<_>>()
        };
        let p = norm(&raw);
        let q = norm(&raw.iter().enumerate().map(|(i, x)| x + shift * i as f64).collect::<Vec<_>>());
        prop_assert!(categorical_kl(&q, &p) >= 0.0);
        prop_assert_eq!(categorical_kl(&p, &p), 0.0);
    }
}
