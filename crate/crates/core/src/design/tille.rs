//! Tillé's elimination procedure with exact pairwise inclusion probabilities.
//!
//! Units are ranked by decreasing π. At level `k` (a hypothetical sample
//! size between `n` and `m`) the capped proportional inclusion probabilities
//! are 1 for the top `a_k` ranks and `coef_k · π_r` for the rest. Going from
//! level `k` to `k − 1` eliminates one survivor; unit `r` is eliminated with
//! probability `1 − π_r^{(k−1)} / π_r^{(k)}`, which depends on `k` and `r`
//! only. Hence `π_rs = Π_k (1 − v_r^k − v_s^k)`.

use rand::Rng;

use crate::error::{Error, Result};

const PROB_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub(crate) struct TilleLevels {
    m: usize,
    n: usize,
    /// `order[rank]` is the unit position holding that rank.
    order: Vec<usize>,
    rank_of: Vec<usize>,
    /// π sorted descending.
    x: Vec<f64>,
    /// Number of capped ranks at each level `0..=m` (only `n..=m` meaningful).
    capped: Vec<usize>,
    coef: Vec<f64>,
    /// Pool survival ratio `coef_{k−1} / coef_k` for the step leaving level `k`.
    q: Vec<f64>,
    /// Step at which each rank is first exposed to elimination.
    band: Vec<usize>,
    log_q: Vec<f64>,
    zero_q: Vec<usize>,
    log_2q: Vec<f64>,
    zero_2q: Vec<usize>,
}

impl TilleLevels {
    pub(crate) fn new(pi: &[f64], n: usize) -> Result<Self> {
        let m = pi.len();
        if n > m {
            return Err(Error::Validation(format!("sample size {n} exceeds {m} units")));
        }
        if pi.iter().any(|&p| !(p > 0.0 && p < 1.0 + PROB_SLACK)) {
            return Err(Error::Validation(
                "elimination scheme needs every inclusion probability in (0,1]".into(),
            ));
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| pi[j].total_cmp(&pi[i]).then(i.cmp(&j)));
        let mut rank_of = vec![0; m];
        for (r, &i) in order.iter().enumerate() {
            rank_of[i] = r;
        }
        let x: Vec<f64> = order.iter().map(|&i| pi[i]).collect();
        let mut suffix = vec![0.0; m + 1];
        for r in (0..m).rev() {
            suffix[r] = suffix[r + 1] + x[r];
        }

        let mut capped = vec![0; m + 1];
        let mut coef = vec![f64::NAN; m + 1];
        capped[m] = m;
        let mut prev = 0;
        for k in n..m {
            let mut a = prev;
            let c = loop {
                if a >= k {
                    break 0.0;
                }
                let c = (k - a) as f64 / suffix[a];
                let mut b = a;
                while b < m && c * x[b] >= 1.0 {
                    b += 1;
                }
                if b == a {
                    break c;
                }
                a = b;
            };
            capped[k] = a;
            coef[k] = c;
            prev = a;
        }

        let mut q = vec![0.0; m + 1];
        for k in n + 1..m {
            q[k] = coef[k - 1] / coef[k];
        }
        let mut band = vec![0; m];
        for k in (n + 1..=m).rev() {
            for b in &mut band[capped[k - 1]..capped[k]] {
                *b = k;
            }
        }

        let mut levels = Self {
            m,
            n,
            order,
            rank_of,
            x,
            capped,
            coef,
            q,
            band,
            log_q: vec![0.0; m + 1],
            zero_q: vec![0; m + 1],
            log_2q: vec![0.0; m + 1],
            zero_2q: vec![0; m + 1],
        };
        for k in n + 1..=m {
            levels.check_step(k)?;
        }
        for k in n + 1..=m {
            let (lq, zq) = log_factor(levels.q[k]);
            let (l2, z2) = log_factor(2.0 * levels.q[k] - 1.0);
            levels.log_q[k] = levels.log_q[k - 1] + lq;
            levels.zero_q[k] = levels.zero_q[k - 1] + zq;
            levels.log_2q[k] = levels.log_2q[k - 1] + l2;
            levels.zero_2q[k] = levels.zero_2q[k - 1] + z2;
        }
        Ok(levels)
    }

    fn check_step(&self, k: usize) -> Result<()> {
        let band_ok = (self.capped[k - 1]..self.capped[k])
            .map(|r| self.band_elimination(k, r))
            .all(|v| (-PROB_SLACK..=1.0 + PROB_SLACK).contains(&v));
        let pool_ok = self.capped[k] == self.m
            || (-PROB_SLACK..=1.0 + PROB_SLACK).contains(&(1.0 - self.q[k]));
        if band_ok && pool_ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "elimination probability outside [0,1] at level {k}; cap the inclusion probabilities first"
            )))
        }
    }

    /// `π_r` at level `k − 1` for a rank uncapped at that level.
    fn level_pi(&self, k_minus_one: usize, r: usize) -> f64 {
        self.coef[k_minus_one] * self.x[r]
    }

    fn band_elimination(&self, k: usize, r: usize) -> f64 {
        1.0 - self.level_pi(k - 1, r)
    }

    /// Elimination probabilities of every unit (by position) for the step
    /// from level `k` to `k − 1`, all units assumed alive.
    pub(crate) fn elimination_probabilities(&self, k: usize) -> Vec<f64> {
        assert!(k > self.n && k <= self.m, "step {k} outside ({}, {}]", self.n, self.m);
        let mut v = vec![0.0; self.m];
        for (r, &i) in self.order.iter().enumerate() {
            v[i] = if r < self.capped[k - 1] {
                0.0
            } else if r < self.capped[k] {
                self.band_elimination(k, r)
            } else {
                1.0 - self.q[k]
            };
        }
        v
    }

    /// Positions of the selected units, ascending.
    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut alive = vec![true; self.m];
        let mut pool: Vec<usize> = Vec::with_capacity(self.m);
        for k in (self.n + 1..=self.m).rev() {
            let band = self.capped[k - 1]..self.capped[k];
            let pool_v = if pool.is_empty() { 0.0 } else { (1.0 - self.q[k]).max(0.0) };
            let band_v: Vec<f64> = band
                .clone()
                .map(|r| self.band_elimination(k, r).clamp(0.0, 1.0))
                .collect();
            let total = band_v.iter().sum::<f64>() + pool_v * pool.len() as f64;
            let mut u = rng.random::<f64>() * total;
            let mut eliminated = None;
            for (r, &v) in band.clone().zip(&band_v) {
                if u < v {
                    eliminated = Some(r);
                    break;
                }
                u -= v;
            }
            match eliminated {
                Some(r) => alive[r] = false,
                None => {
                    // rounding can leave u marginally past the band; fall into the pool
                    let slot = if pool_v > 0.0 {
                        ((u / pool_v) as usize).min(pool.len() - 1)
                    } else if !pool.is_empty() {
                        pool.len() - 1
                    } else {
                        // all mass in the band: take its last unit
                        let r = band.end - 1;
                        alive[r] = false;
                        pool.extend(band.filter(|&s| alive[s]));
                        continue;
                    };
                    alive[pool.swap_remove(slot)] = false;
                }
            }
            pool.extend(band.filter(|&r| alive[r]));
        }
        let mut sel: Vec<usize> = (0..self.m)
            .filter(|&r| alive[r])
            .map(|r| self.order[r])
            .collect();
        sel.sort_unstable();
        sel
    }

    /// Product of `q` over steps `lo..=hi`.
    fn prod_q(&self, lo: usize, hi: usize) -> f64 {
        range_product(&self.log_q, &self.zero_q, lo, hi)
    }

    fn prod_2q(&self, lo: usize, hi: usize) -> f64 {
        range_product(&self.log_2q, &self.zero_2q, lo, hi)
    }

    /// Exact joint inclusion probability of two unit positions.
    pub(crate) fn joint(&self, i: usize, j: usize) -> f64 {
        let (ri, rj) = (self.rank_of[i], self.rank_of[j]);
        if i == j {
            return self.x[ri].min(1.0);
        }
        let (bi, bj) = (self.band[ri], self.band[rj]);
        // ri enters elimination no later than rj in step order (higher step first)
        let (ri, rj, bi, bj) = if bi >= bj { (ri, rj, bi, bj) } else { (rj, ri, bj, bi) };
        let start = self.n + 1;
        let value = if bi == bj {
            let f = self.level_pi(bi - 1, ri) + self.level_pi(bi - 1, rj) - 1.0;
            f.max(0.0) * self.prod_2q(start, bi - 1)
        } else {
            let fi = self.level_pi(bi - 1, ri);
            let fj = (self.q[bj] + self.level_pi(bj - 1, rj) - 1.0).max(0.0);
            fi * self.prod_q(bj + 1, bi - 1) * fj * self.prod_2q(start, bj - 1)
        };
        value.clamp(0.0, 1.0)
    }
}

fn log_factor(f: f64) -> (f64, usize) {
    if f > 0.0 {
        (f.ln(), 0)
    } else {
        (0.0, 1)
    }
}

fn range_product(logs: &[f64], zeros: &[usize], lo: usize, hi: usize) -> f64 {
    if lo > hi {
        return 1.0;
    }
    if zeros[hi] != zeros[lo - 1] {
        return 0.0;
    }
    (logs[hi] - logs[lo - 1]).exp()
}
