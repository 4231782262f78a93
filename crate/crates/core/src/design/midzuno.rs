//! Midzuno's scheme: one unit drawn with probability `p_i`, the remaining
//! `n − 1` by simple random sampling without replacement.

use rand::seq::index;
use rand::Rng;

#[derive(Debug, Clone)]
pub(crate) struct Midzuno {
    p: Vec<f64>,
    cum: Vec<f64>,
    n: usize,
}

impl Midzuno {
    pub(crate) fn new(p: &[f64], n: usize) -> Self {
        let mut acc = 0.0;
        let cum = p
            .iter()
            .map(|&x| {
                acc += x;
                acc
            })
            .collect();
        Self { p: p.to_vec(), cum, n }
    }

    fn big_n(&self) -> usize {
        self.p.len()
    }

    /// Induced first-order inclusion probabilities.
    pub(crate) fn inclusion(&self) -> Vec<f64> {
        let (n, big_n) = (self.n as f64, self.big_n() as f64);
        if self.n >= self.big_n() {
            return vec![1.0; self.big_n()];
        }
        self.p
            .iter()
            .map(|&p| p * (big_n - n) / (big_n - 1.0) + (n - 1.0) / (big_n - 1.0))
            .collect()
    }

    pub(crate) fn joint(&self, i: usize, j: usize) -> f64 {
        let (n, big_n) = (self.n as f64, self.big_n() as f64);
        if self.n >= self.big_n() {
            return 1.0;
        }
        if i == j {
            return self.p[i] * (big_n - n) / (big_n - 1.0) + (n - 1.0) / (big_n - 1.0);
        }
        let pij = self.p[i] + self.p[j];
        let pair_in_srs = if self.big_n() < 3 {
            0.0
        } else {
            (n - 1.0) * (n - 2.0) / ((big_n - 1.0) * (big_n - 2.0))
        };
        pij * (n - 1.0) / (big_n - 1.0) + (1.0 - pij) * pair_in_srs
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let big_n = self.big_n();
        if self.n >= big_n {
            return (0..big_n).collect();
        }
        let total = *self.cum.last().unwrap_or(&0.0);
        let u = rng.random::<f64>() * total;
        let first = self.cum.partition_point(|&c| c <= u).min(big_n - 1);
        let mut out: Vec<usize> = index::sample(rng, big_n - 1, self.n - 1)
            .into_iter()
            .map(|k| if k >= first { k + 1 } else { k })
            .collect();
        out.push(first);
        out.sort_unstable();
        out
    }
}
