// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use common::seed7;
use xattrib::baselines::{integrated_gradients, leave_one_out, random_k};
use xattrib::model::{generate, RedundancyGroup};
use xattrib::suite::planted_instance;
use xattrib::{AttribError, ControlledToyLM, MaskState, ScoredGenerator, TokenSequence, ToyConfig};

#[test]
fn random_k_is_uniform_and_seeded() {
    let draws = 10_000;
    let mut counts = [0usize; 10];
    for seed in 0..draws {
        let r = random_k(10, 1, seed).unwrap();
        counts[r.indices[0]] += 1;
    }
    for c in counts {
        let freq = c as f64 / draws as f64;
        assert!((freq - 0.1).abs() <= 0.01, "{freq}");
    }
    assert_eq!(random_k(12, 4, 7).unwrap(), random_k(12, 4, 7).unwrap());
    let r = random_k(12, 4, 7).unwrap();
    assert!(r.indices.windows(2).all(|w| w[0] < w[1]));
    assert!(matches!(random_k(5, 5, 0), Err(AttribError::InvalidCardinality { k: 5, len: 5 })));
}

#[test]
fn leave_one_out_counts_and_scores() {
    let inst = planted_instance(3, 6, 5).unwrap();
    let loo = leave_one_out(&inst.model, &inst.prompt, &inst.target).unwrap();
    assert_eq!(loo.forward_calls, 7);
    assert_eq!(loo.gradient_calls, 0);
    let full = inst.model.log_likelihood(&inst.prompt, None, &inst.target).unwrap();
    for i in 0..6 {
        let mask = MaskState::from_zeros(6, &[i]).unwrap();
        let masked = inst.model.log_likelihood(&inst.prompt, Some(&mask), &inst.target).unwrap();
        assert!((loo.scores[i] - (full - masked)).abs() <= 1e-12);
        if inst.model.is_irrelevant(i) {
            assert!(loo.scores[i].abs() <= 1e-10);
        }
    }
}

#[test]
fn leave_one_out_misses_redundant_pair() {
    let config = ToyConfig {
        max_prompt_length: 8,
        influence_weights: vec![0.0; 8],
        redundancy_groups: vec![RedundancyGroup { positions: vec![2, 5], weight: 12.0 }],
        ..ToyConfig::with_seed(21)
    };
    let model = ControlledToyLM::new(config).unwrap();
    let prompt = TokenSequence::new(vec![10, 11, 12, 13, 14, 15, 16, 17], 50).unwrap();
    let target = generate(&model, &prompt, None, 6).unwrap();
    let loo = leave_one_out(&model, &prompt, &target).unwrap();
    assert!(loo.scores[2].abs() <= 1e-10 && loo.scores[5].abs() <= 1e-10);
    let both = MaskState::from_zeros(8, &[2, 5]).unwrap();
    let drop = model.log_likelihood(&prompt, None, &target).unwrap()
        - model.log_likelihood(&prompt, Some(&both), &target).unwrap();
    assert!(drop > 0.1, "masking the pair should matter, got {drop}");
}

#[test]
fn single_step_ig_is_gradient_magnitude() {
    let (model, prompt, target) = seed7();
    let ig = integrated_gradients(&model, &prompt, &target, 1).unwrap();
    let grad = model.mask_gradient(&prompt, &target, &[1.0; 8]).unwrap();
    for (s, g) in ig.scores.iter().zip(&grad) {
        assert!((s - g.abs()).abs() <= 1e-12);
    }
    assert_eq!(ig.gradient_calls, 1);
}

#[test]
fn ig_converges_with_more_steps() {
    let (model, prompt, target) = seed7();
    let coarse = integrated_gradients(&model, &prompt, &target, 256).unwrap();
    let fine = integrated_gradients(&model, &prompt, &target, 512).unwrap();
    assert_eq!(fine.gradient_calls, 512);
    for (i, (a, b)) in coarse.scores.iter().zip(&fine.scores).enumerate() {
        if b.abs() > 1e-9 {
            assert!((a - b).abs() / b.abs() <= 0.02, "component {i}: {a} vs {b}");
        }
    }
}

#[test]
fn ig_scores_irrelevant_positions_zero() {
    let inst = planted_instance(12, 16, 5).unwrap();
    let ig = integrated_gradients(&inst.model, &inst.prompt, &inst.target, 16).unwrap();
    for i in (0..16).filter(|&i| inst.model.is_irrelevant(i)) {
        assert!(ig.scores[i].abs() <= 1e-10);
    }
    assert!(matches!(
        integrated_gradients(&inst.model, &inst.prompt, &inst.target, 0),
        Err(AttribError::InvalidArgument(_))
    ));
}

#[test]
fn score_vectors_take_top_k_with_low_index_ties() {
    let inst = planted_instance(3, 6, 5).unwrap();
    let mut loo = leave_one_out(&inst.model, &inst.prompt, &inst.target).unwrap();
    loo.scores = vec![0.5, 2.0, 0.5, 2.0, 0.1, 0.5];
    assert_eq!(loo.top_k(3).unwrap(), vec![0, 1, 3]);
    let result = loo.into_attribution(2, 9).unwrap();
    assert_eq!(result.indices, vec![1, 3]);
    assert_eq!(result.method, "loo");
    assert!(result.trace.is_empty());
}
