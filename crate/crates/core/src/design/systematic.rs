//! Systematic πps selection over cumulated inclusion probabilities.

use rand::Rng;

#[derive(Debug, Clone)]
pub(crate) struct Systematic {
    /// Cumulative π in frame order, rescaled so the last entry is exactly `n`.
    cum: Vec<f64>,
    n: usize,
}

impl Systematic {
    /// `pi` must already be in frame order.
    pub(crate) fn new(pi: &[f64], n: usize) -> Self {
        let total: f64 = pi.iter().sum();
        let scale = if total > 0.0 { n as f64 / total } else { 0.0 };
        let mut cum = Vec::with_capacity(pi.len() + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for &p in pi {
            acc += p;
            cum.push(acc * scale);
        }
        if let Some(last) = cum.last_mut() {
            *last = n as f64;
        }
        Self { cum, n }
    }

    /// Positions (in frame order) hit by the points `u, u+1, …, u+n−1`.
    pub(crate) fn select(&self, u: f64) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n);
        let mut k = 0;
        for t in 0..self.n {
            let point = u + t as f64;
            while k + 1 < self.cum.len() && self.cum[k + 1] <= point {
                k += 1;
            }
            if k + 1 < self.cum.len() {
                out.push(k);
            }
        }
        out
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.select(rng.random::<f64>())
    }

    /// Set of random starts in `[0,1)` selecting position `k`, as at most two intervals.
    fn start_set(&self, k: usize) -> [(f64, f64); 2] {
        let (lo, hi) = (self.cum[k], self.cum[k + 1]);
        let len = (hi - lo).min(1.0);
        let s = lo - lo.floor();
        if s + len <= 1.0 {
            [(s, s + len), (0.0, 0.0)]
        } else {
            [(s, 1.0), (0.0, s + len - 1.0)]
        }
    }

    /// Exact joint inclusion probability of two frame positions: the
    /// measure of random starts selecting both.
    pub(crate) fn joint(&self, i: usize, j: usize) -> f64 {
        let a = self.start_set(i);
        let b = self.start_set(j);
        let mut total = 0.0;
        for &(a0, a1) in &a {
            for &(b0, b1) in &b {
                total += (a1.min(b1) - a0.max(b0)).max(0.0);
            }
        }
        total.min(1.0)
    }
}
