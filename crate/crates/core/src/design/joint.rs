//! Monte Carlo inclusion frequencies. Replicate `r` uses seed `seed + r`, and
//! counts are integers, so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{PpsTarget, Sampler, SchemeSpec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const MIN_JOINT_REPS: usize = 1000;

fn replicate_rng(seed: u64, r: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64))
}

fn chunk_len(reps: usize) -> usize {
    (reps / (4 * rayon::current_num_threads().max(1))).max(64)
}

/// Empirical first-order inclusion frequencies over `reps` draws.
pub fn inclusion_frequencies(target: &PpsTarget, spec: &SchemeSpec, reps: usize) -> Result<Vec<f64>> {
    if reps == 0 {
        return Err(Error::Validation("reps must be positive".into()));
    }
    let sampler = Sampler::from_spec(target, spec)?.with_joint(false);
    let big_n = sampler.population_size();
    // discarded empty Poisson samples are draws too, so the frequencies
    // estimate the unconditional π
    let (counts, draws) = (0..reps)
        .into_par_iter()
        .with_min_len(chunk_len(reps))
        .fold(
            || (vec![0u64; big_n], 0u64),
            |(mut acc, draws), r| {
                let (sel, empty) = sampler.draw_positions(&mut replicate_rng(spec.seed, r));
                for k in sel {
                    acc[k] += 1;
                }
                (acc, draws + 1 + empty as u64)
            },
        )
        .reduce(
            || (vec![0u64; big_n], 0),
            |(a, da), (b, db)| (add_counts(a, b), da + db),
        );
    Ok(counts.into_iter().map(|c| c as f64 / draws as f64).collect())
}

/// Empirical pairwise inclusion frequencies (diagonal: first-order frequencies).
pub fn estimate_joint_pi_mc(target: &PpsTarget, spec: &SchemeSpec, reps: usize) -> Result<Matrix<f64>> {
    if reps < MIN_JOINT_REPS {
        return Err(Error::Validation(format!(
            "joint inclusion estimation needs at least {MIN_JOINT_REPS} replicates, got {reps}"
        )));
    }
    let sampler = Sampler::from_spec(target, spec)?.with_joint(false);
    let big_n = sampler.population_size();
    let counts = (0..reps)
        .into_par_iter()
        .with_min_len(chunk_len(reps))
        .fold(
            || vec![0u64; big_n * big_n],
            |mut acc, r| {
                let (sel, _) = sampler.draw_positions(&mut replicate_rng(spec.seed, r));
                for (a, &i) in sel.iter().enumerate() {
                    for &j in &sel[a..] {
                        acc[i * big_n + j] += 1;
                    }
                }
                acc
            },
        )
        .reduce(|| vec![0u64; big_n * big_n], add_counts);
    let scale = 1.0 / reps as f64;
    Ok(Matrix::from_fn(big_n, big_n, |i, j| {
        let (lo, hi) = (i.min(j), i.max(j));
        counts[lo * big_n + hi] as f64 * scale
    }))
}

fn add_counts(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}
