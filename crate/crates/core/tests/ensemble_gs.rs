mod common;

use std::collections::BTreeMap;

use common::*;
use egsnas::audit::random_simplex;
use egsnas::egs::*;
use egsnas::gumbel::RngState;
use egsnas::tensor::{Tape, Tensor};
use egsnas::Error;
use proptest::prelude::*;

fn code_law(p: &[f64], m: usize, tau: f64, n: usize, seed: u64) -> BTreeMap<CodeMask, usize> {
    let mut rng = RngState::new(seed);
    let mut hist = BTreeMap::new();
    for _ in 0..n {
        *hist.entry(egs_sample(p, m, tau, &mut rng).unwrap().mask()).or_insert(0) += 1;
    }
    hist
}

fn freq(hist: &BTreeMap<CodeMask, usize>, code: CodeMask, n: usize) -> f64 {
    *hist.get(&code).unwrap_or(&0) as f64 / n as f64
}

#[test]
fn hard_is_max_of_component_hards() {
    let mut rng = RngState::new(1);
    for i in 0..10_000 {
        let k = 2 + i % 6;
        let m = 1 + i % 5;
        let p = random_simplex(k, &mut rng);
        let s = egs_sample(&p, m, 0.1 + (i % 7) as f64, &mut rng).unwrap();
        assert_eq!(s.components.len(), m);
        assert_eq!(s.sampling_count, m);
        for j in 0..k {
            let any = s.components.iter().any(|c| c.hard[j] == 1.0);
            assert_eq!(s.hard[j], any);
            let top = s.components.iter().map(|c| c.soft[j]).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(s.soft[j], top);
        }
        let ones = s.hard.iter().filter(|&&b| b).count();
        assert!(ones >= 1 && ones <= m.min(k));
    }
}

#[test]
fn single_sample_is_one_hot() {
    let mut rng = RngState::new(2);
    for _ in 0..1000 {
        let s = egs_sample(&[0.2, 0.5, 0.3], 1, 0.5, &mut rng).unwrap();
        assert_eq!(s.hard.iter().filter(|&&b| b).count(), 1);
        assert_eq!(s.soft, s.components[0].soft);
    }
}

#[test]
fn two_fair_draws_give_both_most_often() {
    let n = 100_000;
    let hist = code_law(&[0.5, 0.5], 2, 0.05, n, 3);
    let both = freq(&hist, CodeMask(0b11), n);
    let first = freq(&hist, CodeMask(0b01), n);
    let second = freq(&hist, CodeMask(0b10), n);
    assert!(within_sigmas(both, 0.5, n, 3.0), "{both}");
    assert!(within_sigmas(first, 0.25, n, 3.0), "{first}");
    assert!(within_sigmas(second, 0.25, n, 3.0), "{second}");
    assert!(both > first && both > second);
    assert_eq!(code_probability_oracle(&[0.5, 0.5], 2, CodeMask(0b11)), 0.5);
    assert_eq!(code_probability_oracle(&[0.5, 0.5], 2, CodeMask(0b01)), 0.25);
}

#[test]
fn marginal_oracle_examples() {
    assert_eq!(marginal_inclusion_oracle(&[0.0, 1.0], 3, 0), 0.0);
    assert_eq!(marginal_inclusion_oracle(&[0.0, 1.0], 3, 1), 1.0);
    let q = marginal_inclusion_oracle(&[0.2, 0.3, 0.5], 2, 2);
    assert!((q - 0.75).abs() < 1e-15);

    let n = 1_000_000;
    let mut rng = RngState::new(4);
    let hits = (0..n)
        .filter(|_| egs_sample(&[0.2, 0.3, 0.5], 2, 1.0, &mut rng).unwrap().hard[2])
        .count();
    assert!(within_sigmas(hits as f64 / n as f64, 0.75, n, 3.0));
}

#[test]
fn marginals_match_oracle_on_random_configurations() {
    let n = 100_000;
    let mut rng = RngState::new(5);
    for config in 0..20 {
        let k = 2 + rng.below(5);
        let m = 1 + rng.below(5);
        let p = random_simplex(k, &mut rng);
        let mut counts = vec![0usize; k];
        for _ in 0..n {
            let s = egs_sample(&p, m, 0.5, &mut rng).unwrap();
            for j in 0..k {
                counts[j] += usize::from(s.hard[j]);
            }
        }
        for j in 0..k {
            let q = marginal_inclusion_oracle(&p, m, j);
            let f = counts[j] as f64 / n as f64;
            assert!(within_sigmas(f, q, n, 3.0), "config {config} p={p:?} M={m} k={j}: {f} vs {q}");
        }
    }
}

#[test]
fn oracle_marginal_is_strictly_increasing_in_p() {
    for m in 1..=8 {
        let mut last = -1.0;
        for i in 0..=100 {
            let pk = i as f64 / 100.0;
            let q = marginal_inclusion_oracle(&[pk, 1.0 - pk], m, 0);
            assert!(q > last, "M={m} p={pk}");
            last = q;
        }
    }
}

#[test]
fn empirical_marginals_follow_probability_order() {
    let p = [0.1, 0.15, 0.3, 0.45];
    let n = 100_000;
    let mut rng = RngState::new(6);
    let mut counts = [0usize; 4];
    for _ in 0..n {
        let s = egs_sample(&p, 3, 0.2, &mut rng).unwrap();
        for j in 0..4 {
            counts[j] += usize::from(s.hard[j]);
        }
    }
    for j in 1..4 {
        let lo = counts[j - 1] as f64 / n as f64;
        let hi = counts[j] as f64 / n as f64;
        assert!(lo <= hi + 3.0 * (sigma(lo, n) + sigma(hi, n)), "{counts:?}");
    }
}

#[test]
fn code_oracle_sums_to_one_and_gives_marginals() {
    let mut rng = RngState::new(7);
    for _ in 0..50 {
        let k = 1 + rng.below(6);
        let m = 1 + rng.below(5);
        let p = random_simplex(k, &mut rng);
        let codes = reachable_codes(k, m).unwrap();
        let total: f64 = codes.iter().map(|&c| code_probability_oracle(&p, m, c)).sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
        for j in 0..k {
            let marginal: f64 = codes
                .iter()
                .filter(|c| c.contains(j))
                .map(|&c| code_probability_oracle(&p, m, c))
                .sum();
            assert!((marginal - marginal_inclusion_oracle(&p, m, j)).abs() < 1e-12);
        }
    }
}

/// Brute force over every M-tuple of categories.
fn exact_code_law(p: &[f64], m: usize) -> BTreeMap<CodeMask, f64> {
    let k = p.len();
    let mut law = BTreeMap::new();
    for tuple in 0..k.pow(m as u32) {
        let (mut t, mut mask, mut prob) = (tuple, CodeMask(0), 1.0);
        for _ in 0..m {
            mask = mask.union(CodeMask::one_hot(t % k));
            prob *= p[t % k];
            t /= k;
        }
        *law.entry(mask).or_insert(0.0) += prob;
    }
    law
}

#[test]
fn code_oracle_matches_tuple_enumeration() {
    let mut rng = RngState::new(8);
    for _ in 0..30 {
        let k = 1 + rng.below(5);
        let m = 1 + rng.below(4);
        let p = random_simplex(k, &mut rng);
        for (code, prob) in exact_code_law(&p, m) {
            assert!((code_probability_oracle(&p, m, code) - prob).abs() < 1e-12);
        }
    }
}

#[test]
fn reachable_code_examples() {
    let k2 = reachable_codes(2, 2).unwrap();
    assert_eq!(k2.into_iter().collect::<Vec<_>>(), vec![CodeMask(0b01), CodeMask(0b10), CodeMask(0b11)]);
    assert_eq!(proposition3_formula(2, 2), 3);
    let k3 = reachable_codes(3, 1).unwrap();
    assert_eq!(k3.into_iter().collect::<Vec<_>>(), vec![CodeMask(1), CodeMask(2), CodeMask(4)]);
    let k32 = reachable_codes(3, 2).unwrap();
    assert_eq!(k32.len(), 6);
    assert_eq!(proposition3_formula(3, 2), 9);
    assert!(k32.iter().all(|c| (1..=2).contains(&c.ones())));
}

#[test]
fn reachable_count_is_sum_of_binomials() {
    for k in 1..=10 {
        for m in 1..=4 {
            let expected: u128 = (1..=m.min(k)).map(|j| binomial(k as u64, j as u64)).sum();
            assert_eq!(reachable_codes(k, m).unwrap().len() as u128, expected, "K={k} M={m}");
        }
        assert_eq!(reachable_codes(k, 1).unwrap().len() as u128, proposition3_formula(k, 1));
    }
}

#[test]
fn empirical_support_is_reachable_and_complete() {
    let n = 100_000;
    for k in 1..=4 {
        for m in 1..=3 {
            let p: Vec<f64> = (1..=k).map(|i| i as f64 / (k * (k + 1) / 2) as f64).collect();
            let reachable = reachable_codes(k, m).unwrap();
            let hist = code_law(&p, m, 0.1, n, (10 * k + m) as u64);
            for code in hist.keys() {
                assert!(reachable.contains(code), "K={k} M={m} {code}");
            }
            for code in &reachable {
                if code_probability_oracle(&p, m, *code) > 0.0 {
                    assert!(hist.contains_key(code), "K={k} M={m} missing {code}");
                }
            }
        }
    }
}

#[test]
fn recode_examples_and_round_trip() {
    assert_eq!(
        recode_superposition(&[true, false, true]).unwrap(),
        vec![vec![true, false, false], vec![false, false, true]]
    );
    assert_eq!(recode_superposition(&[false, true, false]).unwrap(), vec![vec![false, true, false]]);
    assert!(matches!(recode_superposition(&[false; 3]), Err(Error::EmptyCode)));
    for bits in 1u32..16 {
        let code = CodeMask(bits).to_bits(4);
        let parts = recode_superposition(&code).unwrap();
        assert_eq!(parts.len(), bits.count_ones() as usize);
        let rebuilt: Vec<bool> = (0..4).map(|j| parts.iter().any(|v| v[j])).collect();
        assert_eq!(rebuilt, code);
    }
}

#[test]
fn invalid_arguments_rejected() {
    let mut rng = RngState::new(0);
    assert!(matches!(egs_sample(&[0.5, 0.5], 0, 1.0, &mut rng), Err(Error::InvalidSamplingCount(0))));
    assert!(matches!(egs_sample(&[0.5, 0.5], 2, 0.0, &mut rng), Err(Error::InvalidTemperature(_))));
    assert!(matches!(reachable_codes(17, 2), Err(Error::EnumerationBound { k: 17, .. })));
    assert!(matches!(reachable_codes(0, 2), Err(Error::EnumerationBound { .. })));
    assert!(reachable_codes(16, 1).is_ok());
    assert!(reachable_codes(3, 0).is_err());
}

#[test]
fn soft_code_gradients_reach_logits() {
    let mut rng = RngState::new(9);
    for k in 2..=8 {
        for m in 1..=8 {
            let logits = uniform_vec(&mut rng, k, -1.0, 1.0);
            let noise = EdgeNoise::draw(&mut rng, m, k).unwrap();
            let weights = uniform_vec(&mut rng, k, 0.5, 2.0);
            for relaxed in [false, true] {
                let mut tape = Tape::new();
                let z = tape.param(Tensor::vector(logits.clone()));
                let p = tape.softmax(z).unwrap();
                let lp = tape.log(p).unwrap();
                let code = egs_sample_var(&mut tape, lp, 0.5, &noise, relaxed).unwrap();
                let w = tape.constant(Tensor::vector(weights.clone()));
                let y = tape.mul(code.weights, w).unwrap();
                let loss = tape.sum(y).unwrap();
                let g = tape.backward(loss).unwrap();
                let grad = g.get(z).unwrap();
                assert!(grad.data().iter().all(|v| v.is_finite()), "K={k} M={m}");
                assert!(grad.data().iter().any(|&v| v != 0.0), "K={k} M={m} relaxed={relaxed}");
                let plain = egs_from_noise(&egsnas::space::softmax(&logits), 0.5, &noise);
                assert_eq!(code.hard, plain.hard);
            }
        }
    }
}

#[test]
fn straight_through_code_forwards_binary_values() {
    let mut rng = RngState::new(10);
    let noise = EdgeNoise::draw(&mut rng, 3, 4).unwrap();
    let mut tape = Tape::new();
    let z = tape.param(Tensor::vector(vec![0.1, 0.2, -0.3, 0.0]));
    let p = tape.softmax(z).unwrap();
    let lp = tape.log(p).unwrap();
    let code = egs_sample_var(&mut tape, lp, 1.0, &noise, false).unwrap();
    let forward: Vec<bool> = tape.value(code.weights).data().iter().map(|&v| v == 1.0).collect();
    assert_eq!(forward, code.hard);
    assert!(tape.value(code.weights).data().iter().all(|&v| v == 0.0 || v == 1.0));
}

proptest! {
    #[test]
    fn code_sample_invariants(seed in 0u64..5000, k in 1usize..9, m in 1usize..9, tau in 0.05f64..5.0) {
        let mut rng = RngState::new(seed);
        let p = random_simplex(k, &mut rng);
        let s = egs_sample(&p, m, tau, &mut rng).unwrap();
        let ones = s.mask().ones() as usize;
        prop_assert!(ones >= 1 && ones <= m.min(k));
        prop_assert!(reachable_codes(k, m).unwrap().contains(&s.mask()));
        prop_assert!(s.soft.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
