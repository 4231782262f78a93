//! Unequal-probability sampling designs: Tillé elimination, Midzuno
//! (classic and πps), systematic πps and Poisson, with exact first-order
//! and, where available, exact pairwise inclusion probabilities.

mod joint;
mod midzuno;
mod systematic;
mod tille;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use joint::{estimate_joint_pi_mc, inclusion_frequencies};

use midzuno::Midzuno;
use systematic::Systematic;
use tille::TilleLevels;

/// Size shares and target first-order inclusion probabilities over the population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpsTarget {
    /// `p_i = c_i / Σc`.
    pub p: Vec<f64>,
    pub pi: Vec<f64>,
    /// Fixed (or, for Poisson, expected) sample size `Σπ_i`.
    pub n: usize,
}

impl PpsTarget {
    /// Target from given inclusion probabilities; `p` is taken proportional to `π`.
    pub fn from_inclusion(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::Validation("empty inclusion vector".into()));
        }
        if let Some(bad) = pi.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
            return Err(Error::Validation(format!(
                "inclusion probabilities must lie in (0,1], found {bad}"
            )));
        }
        let total: f64 = pi.iter().sum();
        let n = total.round() as usize;
        let p = pi.iter().map(|&x| x / total).collect();
        Ok(Self { p, pi, n })
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }
}

/// First-order probabilities proportional to size with iterative capping at 1.
pub fn pps_first_order(sizes: &[f64], n: usize) -> Result<PpsTarget> {
    let big_n = sizes.len();
    if big_n == 0 {
        return Err(Error::Validation("no units".into()));
    }
    if n == 0 || n > big_n {
        return Err(Error::Validation(format!(
            "sample size must lie in 1..={big_n}, got {n}"
        )));
    }
    if let Some(bad) = sizes.iter().find(|&&c| !(c > 0.0 && c.is_finite())) {
        return Err(Error::Validation(format!("sizes must be positive, found {bad}")));
    }
    let total: f64 = sizes.iter().sum();
    let p: Vec<f64> = sizes.iter().map(|&c| c / total).collect();
    let mut capped = vec![false; big_n];
    let mut pi = vec![0.0; big_n];
    loop {
        let n_capped = capped.iter().filter(|&&c| c).count();
        let free: f64 = sizes
            .iter()
            .zip(&capped)
            .filter(|(_, &c)| !c)
            .map(|(&s, _)| s)
            .sum();
        let remaining = (n - n_capped) as f64;
        let mut changed = false;
        for k in 0..big_n {
            if capped[k] {
                pi[k] = 1.0;
                continue;
            }
            pi[k] = remaining * sizes[k] / free;
            if pi[k] >= 1.0 {
                capped[k] = true;
                pi[k] = 1.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(PpsTarget { p, pi, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    /// Tillé's elimination procedure.
    Tille,
    /// First unit with probability `p_i`, then SRSWOR; induced π.
    Midzuno,
    /// Midzuno's πps method: the complement of an elimination sample on `1 − π`.
    MidzunoPips,
    Systematic,
    Poisson,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::Tille,
        SchemeKind::Midzuno,
        SchemeKind::MidzunoPips,
        SchemeKind::Systematic,
        SchemeKind::Poisson,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::Tille => "tille",
            SchemeKind::Midzuno => "midzuno",
            SchemeKind::MidzunoPips => "midzuno-pips",
            SchemeKind::Systematic => "systematic",
            SchemeKind::Poisson => "poisson",
        }
    }

    pub fn is_fixed_size(self) -> bool {
        self != SchemeKind::Poisson
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown scheme `{s}` (expected tille, midzuno, midzuno-pips, systematic or poisson)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameOrder {
    #[default]
    AsGiven,
    Randomized,
}

impl FromStr for FrameOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-given" => Ok(FrameOrder::AsGiven),
            "randomized" => Ok(FrameOrder::Randomized),
            _ => Err(Error::Validation(format!(
                "unknown frame order `{s}` (expected as-given or randomized)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub n: usize,
    #[serde(default)]
    pub frame_order: FrameOrder,
    pub seed: u64,
}

impl SchemeSpec {
    pub fn new(kind: SchemeKind, n: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            frame_order: FrameOrder::AsGiven,
            seed,
        }
    }
}

/// One realized sample. Unit ids are 1-based population positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDraw {
    pub indices: Vec<usize>,
    pub pi: Vec<f64>,
    pub joint_pi: Option<Matrix<f64>>,
    pub scheme: SchemeKind,
    /// Poisson only: empty samples discarded before this one.
    #[serde(default)]
    pub empty_redraws: usize,
}

impl SampleDraw {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Checks the structural invariants of a draw against a population size.
    pub fn validate(&self, big_n: usize) -> Result<()> {
        let n = self.indices.len();
        if n > big_n || self.pi.len() != n {
            return Err(Error::Validation("sample and π lengths disagree".into()));
        }
        let mut seen = self.indices.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != n || seen.iter().any(|&id| id == 0 || id > big_n) {
            return Err(Error::Validation("sample ids must be distinct and in 1..=N".into()));
        }
        if self.pi.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::Validation("sample π must lie in (0,1]".into()));
        }
        if let Some(jp) = &self.joint_pi {
            if jp.nrows() != n || jp.ncols() != n {
                return Err(Error::Validation("joint π must be n×n".into()));
            }
            for i in 0..n {
                if (jp[(i, i)] - self.pi[i]).abs() > 1e-12 {
                    return Err(Error::Validation("joint π diagonal must equal π".into()));
                }
                for j in 0..n {
                    let v = jp[(i, j)];
                    if (v - jp[(j, i)]).abs() > 1e-12
                        || v < 0.0
                        || v > self.pi[i].min(self.pi[j]) + 1e-12
                    {
                        return Err(Error::Validation(format!("joint π entry ({i},{j}) invalid")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Engine {
    /// Every non-certain unit is taken (or there are none).
    Census,
    Tille(TilleLevels),
    MidzunoPips(TilleLevels),
    Midzuno(Midzuno),
    Systematic(Systematic),
    Poisson,
}

/// Precomputed design ready for repeated draws.
#[derive(Debug, Clone)]
pub struct Sampler {
    kind: SchemeKind,
    frame_order: FrameOrder,
    /// Design first-order inclusion probabilities over the population.
    pi: Vec<f64>,
    certain: Vec<usize>,
    /// Non-certain units (0-based), in frame order.
    rest: Vec<usize>,
    rest_pos: Vec<Option<usize>>,
    rest_n: usize,
    engine: Engine,
    with_joint: bool,
}

const SUM_SLACK: f64 = 1e-9;

impl Sampler {
    pub fn new(target: &PpsTarget, kind: SchemeKind, n: usize, frame_order: FrameOrder) -> Result<Self> {
        let big_n = target.len();
        if big_n == 0 {
            return Err(Error::Validation("empty population".into()));
        }
        if target.p.len() != big_n {
            return Err(Error::Validation("size shares and π have different lengths".into()));
        }
        if n > big_n {
            return Err(Error::Validation(format!("sample size {n} exceeds population size {big_n}")));
        }
        if let Some(bad) = target.pi.iter().find(|&&x| !(x > 0.0 && x <= 1.0 + SUM_SLACK)) {
            return Err(Error::Validation(format!("target π must lie in (0,1], found {bad}")));
        }

        if kind == SchemeKind::Midzuno {
            if n == 0 {
                return Err(Error::Validation("Midzuno needs n ≥ 1".into()));
            }
            let m = Midzuno::new(&target.p, n);
            return Ok(Self {
                kind,
                frame_order,
                pi: m.inclusion(),
                certain: Vec::new(),
                rest: (0..big_n).collect(),
                rest_pos: (0..big_n).map(Some).collect(),
                rest_n: n,
                engine: Engine::Midzuno(m),
                with_joint: true,
            });
        }

        let total: f64 = target.pi.iter().sum();
        if kind.is_fixed_size() && (total - n as f64).abs() > SUM_SLACK * n.max(1) as f64 {
            return Err(Error::Validation(format!(
                "target π sums to {total}, not the sample size {n}"
            )));
        }
        let pi: Vec<f64> = target.pi.iter().map(|&x| x.min(1.0)).collect();

        if kind == SchemeKind::Poisson {
            let p_empty: f64 = pi.iter().map(|&x| (-x).ln_1p()).sum::<f64>().exp();
            if p_empty > 0.999 {
                return Err(Error::Validation(format!(
                    "Poisson design is empty with probability {p_empty:.4}"
                )));
            }
            return Ok(Self {
                kind,
                frame_order,
                pi,
                certain: Vec::new(),
                rest: (0..big_n).collect(),
                rest_pos: (0..big_n).map(Some).collect(),
                rest_n: n,
                engine: Engine::Poisson,
                with_joint: true,
            });
        }

        let certain: Vec<usize> = (0..big_n).filter(|&k| pi[k] >= 1.0).collect();
        let rest: Vec<usize> = (0..big_n).filter(|&k| pi[k] < 1.0).collect();
        let mut rest_pos = vec![None; big_n];
        for (pos, &k) in rest.iter().enumerate() {
            rest_pos[k] = Some(pos);
        }
        let rest_n = n - certain.len().min(n);
        let rest_pi: Vec<f64> = rest.iter().map(|&k| pi[k]).collect();

        let engine = if rest.is_empty() || rest_n == rest.len() {
            Engine::Census
        } else {
            match kind {
                SchemeKind::Tille => Engine::Tille(TilleLevels::new(&rest_pi, rest_n)?),
                SchemeKind::MidzunoPips => {
                    let complement: Vec<f64> = rest_pi.iter().map(|&x| 1.0 - x).collect();
                    Engine::MidzunoPips(TilleLevels::new(&complement, rest.len() - rest_n)?)
                }
                SchemeKind::Systematic => Engine::Systematic(Systematic::new(&rest_pi, rest_n)),
                SchemeKind::Midzuno | SchemeKind::Poisson => unreachable!("handled above"),
            }
        };
        Ok(Self {
            kind,
            frame_order,
            pi,
            certain,
            rest,
            rest_pos,
            rest_n,
            engine,
            with_joint: true,
        })
    }

    pub fn from_spec(target: &PpsTarget, spec: &SchemeSpec) -> Result<Self> {
        Self::new(target, spec.kind, spec.n, spec.frame_order)
    }

    /// Whether draws carry the pairwise inclusion matrix (default true).
    pub fn with_joint(mut self, on: bool) -> Self {
        self.with_joint = on;
        self
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn population_size(&self) -> usize {
        self.pi.len()
    }

    /// First-order inclusion probabilities of the design actually run.
    pub fn inclusion_probabilities(&self) -> &[f64] {
        &self.pi
    }

    /// True when exact pairwise probabilities are known for this design.
    pub fn has_exact_joint(&self) -> bool {
        !(matches!(self.engine, Engine::Systematic(_)) && self.frame_order == FrameOrder::Randomized)
    }

    /// Exact joint inclusion probability of two population positions (0-based).
    pub fn joint(&self, i: usize, j: usize) -> Option<f64> {
        if !self.has_exact_joint() {
            return None;
        }
        if i == j {
            return Some(self.pi[i]);
        }
        if matches!(self.engine, Engine::Poisson) {
            return Some(self.pi[i] * self.pi[j]);
        }
        let (pi_pos, pj_pos) = match (self.rest_pos[i], self.rest_pos[j]) {
            (Some(a), Some(b)) => (a, b),
            // a certainty unit is independent of everything
            _ => return Some(self.pi[i] * self.pi[j]),
        };
        Some(match &self.engine {
            Engine::Census => 1.0,
            Engine::Tille(t) => t.joint(pi_pos, pj_pos),
            Engine::MidzunoPips(t) => {
                let (ci, cj) = (1.0 - self.pi[i], 1.0 - self.pi[j]);
                (1.0 - ci - cj + t.joint(pi_pos, pj_pos)).clamp(0.0, self.pi[i].min(self.pi[j]))
            }
            Engine::Midzuno(m) => m.joint(pi_pos, pj_pos),
            Engine::Systematic(s) => s.joint(pi_pos, pj_pos),
            Engine::Poisson => unreachable!(),
        })
    }

    /// Selected population positions (0-based, ascending) and the number of
    /// discarded empty Poisson samples.
    pub fn draw_positions<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<usize>, usize) {
        let mut redraws = 0;
        let mut sel: Vec<usize> = match &self.engine {
            Engine::Census => self.rest.clone(),
            Engine::Tille(t) => t.draw(rng).into_iter().map(|p| self.rest[p]).collect(),
            Engine::MidzunoPips(t) => {
                let mut keep = vec![true; self.rest.len()];
                for p in t.draw(rng) {
                    keep[p] = false;
                }
                (0..self.rest.len()).filter(|&p| keep[p]).map(|p| self.rest[p]).collect()
            }
            Engine::Midzuno(m) => m.draw(rng),
            Engine::Systematic(s) => match self.frame_order {
                FrameOrder::AsGiven => s.draw(rng).into_iter().map(|p| self.rest[p]).collect(),
                FrameOrder::Randomized => {
                    let mut frame = self.rest.clone();
                    frame.shuffle(rng);
                    let pi: Vec<f64> = frame.iter().map(|&k| self.pi[k]).collect();
                    Systematic::new(&pi, self.rest_n)
                        .draw(rng)
                        .into_iter()
                        .map(|p| frame[p])
                        .collect()
                }
            },
            Engine::Poisson => loop {
                let s = poisson_raw(&self.pi, rng);
                if !s.is_empty() {
                    break s;
                }
                redraws += 1;
            },
        };
        sel.extend(&self.certain);
        sel.sort_unstable();
        (sel, redraws)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> SampleDraw {
        let (positions, empty_redraws) = self.draw_positions(rng);
        let pi: Vec<f64> = positions.iter().map(|&k| self.pi[k]).collect();
        let joint_pi = if self.with_joint && self.has_exact_joint() {
            let n = positions.len();
            Some(Matrix::from_fn(n, n, |a, b| {
                let (i, j) = (positions[a.min(b)], positions[a.max(b)]);
                self.joint(i, j).unwrap_or(f64::NAN)
            }))
        } else {
            None
        };
        SampleDraw {
            indices: positions.iter().map(|&k| k + 1).collect(),
            pi,
            joint_pi,
            scheme: self.kind,
            empty_redraws,
        }
    }

    /// Elimination probabilities at step `k → k−1` of a Tillé design over
    /// the non-certain units, indexed by population position; `None` for
    /// other schemes.
    pub fn tille_elimination_probabilities(&self, k: usize) -> Option<Vec<f64>> {
        match &self.engine {
            Engine::Tille(t) => {
                let v = t.elimination_probabilities(k);
                let mut out = vec![0.0; self.pi.len()];
                for (p, &unit) in self.rest.iter().enumerate() {
                    out[unit] = v[p];
                }
                Some(out)
            }
            _ => None,
        }
    }
}

/// One Poisson sample with no conditioning on a non-empty outcome.
pub fn poisson_raw<R: Rng + ?Sized>(pi: &[f64], rng: &mut R) -> Vec<usize> {
    pi.iter()
        .enumerate()
        .filter(|&(_, &p)| rng.random::<f64>() < p)
        .map(|(k, _)| k)
        .collect()
}

fn draw_with(target: &PpsTarget, spec: &SchemeSpec, kind: SchemeKind) -> Result<SampleDraw> {
    let spec = SchemeSpec { kind, ..*spec };
    let sampler = Sampler::from_spec(target, &spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(sampler.draw(&mut rng))
}

pub fn draw(target: &PpsTarget, spec: &SchemeSpec) -> Result<SampleDraw> {
    draw_with(target, spec, spec.kind)
}

pub fn draw_tille(target: &PpsTarget, spec: &SchemeSpec) -> Result<SampleDraw> {
    draw_with(target, spec, SchemeKind::Tille)
}

pub fn draw_midzuno(target: &PpsTarget, spec: &SchemeSpec) -> Result<SampleDraw> {
    draw_with(target, spec, SchemeKind::Midzuno)
}

pub fn draw_midzuno_pips(target: &PpsTarget, spec: &SchemeSpec) -> Result<SampleDraw> {
    draw_with(target, spec, SchemeKind::MidzunoPips)
}

pub fn draw_systematic(target: &PpsTarget, spec: &SchemeSpec) -> Result<SampleDraw> {
    draw_with(target, spec, SchemeKind::Systematic)
}

pub fn draw_poisson(target: &PpsTarget, spec: &SchemeSpec) -> Result<SampleDraw> {
    draw_with(target, spec, SchemeKind::Poisson)
}
