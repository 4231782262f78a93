use std::collections::HashMap;

use ce_survey::design::{pps_first_order, FrameOrder, Sampler, SchemeKind};
use ce_survey::variance::ht_mean;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Size-proportional probabilities summing to `n`, capped at one by repeated
/// rescaling of the uncapped units.
fn capped_probabilities(sizes: &[f64], n: f64) -> Vec<f64> {
    let mut pi = vec![0.0; sizes.len()];
    let mut capped = vec![false; sizes.len()];
    loop {
        let free: f64 = sizes.iter().zip(&capped).filter(|(_, &c)| !c).map(|(s, _)| s).sum();
        let room = n - capped.iter().filter(|&&c| c).count() as f64;
        let mut changed = false;
        for k in 0..sizes.len() {
            if !capped[k] {
                pi[k] = room * sizes[k] / free;
                if pi[k] >= 1.0 {
                    capped[k] = true;
                    pi[k] = 1.0;
                    changed = true;
                }
            }
        }
        if !changed {
            return pi;
        }
    }
}

/// Exact sample distribution of Tillé's elimination procedure: at each level
/// `k` the target is the capped size-proportional vector summing to `k` over
/// the remaining units, and a unit is dropped with probability
/// `1 − π^(k)/π^(k+1)`.
fn tille_distribution(sizes: &[f64], n: usize) -> HashMap<Vec<usize>, f64> {
    let big_n = sizes.len();
    let levels: Vec<Vec<f64>> = (0..=big_n).map(|k| capped_probabilities(sizes, k as f64)).collect();
    let mut dist: HashMap<Vec<usize>, f64> = HashMap::new();
    dist.insert((0..big_n).collect(), 1.0);
    for k in (n..big_n).rev() {
        let mut next: HashMap<Vec<usize>, f64> = HashMap::new();
        for (units, prob) in dist {
            for (pos, &u) in units.iter().enumerate() {
                let drop = 1.0 - levels[k][u] / levels[k + 1][u];
                if drop > 0.0 {
                    let mut rest = units.clone();
                    rest.remove(pos);
                    *next.entry(rest).or_insert(0.0) += prob * drop;
                }
            }
        }
        dist = next;
    }
    dist
}

#[test]
fn tille_matches_exhaustive_elimination() {
    let sizes = [1.0, 2.0, 3.5, 5.0, 8.0, 2.5];
    let n = 3;
    let dist = tille_distribution(&sizes, n);
    let total: f64 = dist.values().sum();
    assert!((total - 1.0).abs() < 1e-12);
    let target = pps_first_order(&sizes, n).unwrap();
    let sampler = Sampler::new(&target, SchemeKind::Tille, n, FrameOrder::AsGiven).unwrap();
    for i in 0..6 {
        let pi_i: f64 = dist.iter().filter(|(s, _)| s.contains(&i)).map(|(_, p)| p).sum();
        assert!((pi_i - sampler.inclusion_probabilities()[i]).abs() < 1e-12, "π_{i}");
        for j in 0..6 {
            let pij: f64 = dist.iter().filter(|(s, _)| s.contains(&i) && s.contains(&j)).map(|(_, p)| p).sum();
            assert!((pij - sampler.joint(i, j).unwrap()).abs() < 1e-12, "π_{i}{j}");
        }
    }
}

#[test]
fn tille_draw_frequencies_match_sample_distribution() {
    let sizes = [1.0, 2.0, 3.5, 5.0, 8.0, 2.5];
    let dist = tille_distribution(&sizes, 3);
    let target = pps_first_order(&sizes, 3).unwrap();
    let sampler = Sampler::new(&target, SchemeKind::Tille, 3, FrameOrder::AsGiven).unwrap();
    let reps = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for _ in 0..reps {
        *counts.entry(sampler.draw_positions(&mut rng).0).or_insert(0) += 1;
    }
    for (sample, &p) in &dist {
        let freq = *counts.get(sample).unwrap_or(&0) as f64 / reps as f64;
        let sd = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((freq - p).abs() < 4.5 * sd + 1e-9, "{sample:?}: {freq} vs {p}");
    }
    assert!(counts.keys().all(|s| dist.contains_key(s)));
}

#[test]
fn midzuno_matches_enumeration() {
    // first draw with probability p, then one of the remaining four uniformly
    let p = [0.1, 0.15, 0.2, 0.25, 0.3];
    let target = pps_first_order(&p, 1).unwrap();
    let sampler = Sampler::new(&target, SchemeKind::Midzuno, 2, FrameOrder::AsGiven).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let mut expect = 0.0;
            for first in 0..5 {
                for second in (0..5).filter(|&s| s != first) {
                    let pair = [first, second];
                    if pair.contains(&i) && pair.contains(&j) {
                        expect += p[first] / 4.0;
                    }
                }
            }
            assert!((sampler.joint(i, j).unwrap() - expect).abs() < 1e-12, "{i},{j}");
        }
    }
}

fn skewed_sizes() -> Vec<f64> {
    (0..20).map(|k| (0.23 * k as f64).exp() + 0.5 * (k % 3) as f64).collect()
}

#[test]
fn first_order_frequencies_all_schemes() {
    let sizes = skewed_sizes();
    let target = pps_first_order(&sizes, 5).unwrap();
    let reps = 100_000;
    for kind in SchemeKind::ALL {
        let sampler = Sampler::new(&target, kind, 5, FrameOrder::AsGiven).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(kind as u64 + 100);
        let mut hits = [0usize; 20];
        for _ in 0..reps {
            let (sel, _) = sampler.draw_positions(&mut rng);
            for k in sel {
                hits[k] += 1;
            }
        }
        let p_empty: f64 = if kind == SchemeKind::Poisson {
            sampler.inclusion_probabilities().iter().map(|p| 1.0 - p).product()
        } else {
            0.0
        };
        for (k, &h) in hits.iter().enumerate() {
            let p = sampler.inclusion_probabilities()[k] / (1.0 - p_empty);
            let freq = h as f64 / reps as f64;
            let sd = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((freq - p).abs() <= 4.0 * sd + 1e-12, "{kind} unit {k}: {freq} vs {p}");
        }
    }
}

#[test]
fn ht_mean_is_design_unbiased() {
    let sizes = skewed_sizes();
    let y: Vec<f64> = sizes.iter().enumerate().map(|(k, s)| s.sqrt() + (k % 4) as f64).collect();
    let truth = y.iter().sum::<f64>() / 20.0;
    let target = pps_first_order(&sizes, 5).unwrap();
    let reps = 100_000;
    for kind in SchemeKind::ALL.into_iter().filter(|k| k.is_fixed_size()) {
        let sampler = Sampler::new(&target, kind, 5, FrameOrder::AsGiven).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pi = sampler.inclusion_probabilities();
        let est: Vec<f64> = (0..reps)
            .map(|_| {
                let (sel, _) = sampler.draw_positions(&mut rng);
                let ys: Vec<f64> = sel.iter().map(|&k| y[k]).collect();
                let ps: Vec<f64> = sel.iter().map(|&k| pi[k]).collect();
                ht_mean(&ys, &ps, 20.0).unwrap()
            })
            .collect();
        let m = est.iter().sum::<f64>() / reps as f64;
        let sd = (est.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        assert!((m - truth).abs() <= 3.0 * sd / (reps as f64).sqrt(), "{kind}: {m} vs {truth}");
    }
}

#[test]
fn systematic_joint_has_structural_zeros_as_given() {
    let target = pps_first_order(&[1.0; 8], 4).unwrap();
    let sampler = Sampler::new(&target, SchemeKind::Systematic, 4, FrameOrder::AsGiven).unwrap();
    assert_eq!(sampler.joint(0, 1), Some(0.0));
    assert!((sampler.joint(0, 2).unwrap() - 0.5).abs() < 1e-15);
    let randomized = Sampler::new(&target, SchemeKind::Systematic, 4, FrameOrder::Randomized).unwrap();
    assert_eq!(randomized.joint(0, 1), None);
}
