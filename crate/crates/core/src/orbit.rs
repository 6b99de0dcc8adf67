//! The projected walk `o.Y_n` on the Schreier set, its first-return tail and
//! graph distances on the Schreier graph.
//!
//! `T = inf{n ≥ 1 : o.Y_n = o}`; a step that leaves `o` fixed counts as a
//! return at that step.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use thiserror::Error;

use crate::num::{Real, Z_95};
use crate::seed::{self, stream};
use crate::tree::{sample_move, DegreeSequence, GeneratorMove, Site, TreeError};

#[derive(Debug, Error)]
pub enum OrbitError {
    #[error("n = {n} lies beyond the tabulated horizon {horizon}")]
    Extrapolation { n: f64, horizon: u64 },
    #[error("BFS cutoff must be positive")]
    InvalidCutoff,
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// One step of the orbit walk using its closed-form law: with probability
/// 1/2 the first digit is resampled uniformly, otherwise the digit after the
/// first non-zero digit is resampled uniformly (no-op at `o`).
pub fn step_shortcut<R: Rng + ?Sized>(m: &DegreeSequence, s: &Site, rng: &mut R) -> Site {
    let mut out = s.clone();
    step_shortcut_in_place(m, &mut out, rng);
    out
}

#[inline]
pub(crate) fn step_shortcut_in_place<R: Rng + ?Sized>(m: &DegreeSequence, s: &mut Site, rng: &mut R) {
    if rng.random::<bool>() {
        let v = rng.random_range(0..m.degree(1));
        s.set_digit(0, v as u8);
    } else if let Some(j) = s.first_nonzero() {
        let v = rng.random_range(0..m.degree(j + 2));
        s.set_digit(j + 1, v as u8);
    }
}

/// One step through an explicitly sampled generator.
pub fn step_exact<R: Rng + ?Sized>(
    m: &DegreeSequence,
    s: &Site,
    rng: &mut R,
) -> (GeneratorMove, Site) {
    let g = sample_move(m, rng);
    let mut out = s.clone();
    g.act(m, &mut out);
    (g, out)
}

/// Exact one-step law of the orbit walk from `s`, from the generator atoms.
pub fn transition_law(m: &DegreeSequence, s: &Site) -> Vec<(Site, f64)> {
    let mut law: FxHashMap<Site, f64> = FxHashMap::default();
    for (g, w) in GeneratorMove::atoms(m) {
        let mut t = s.clone();
        g.act(m, &mut t);
        *law.entry(t).or_default() += w;
    }
    let mut out: Vec<_> = law.into_iter().collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Monte Carlo estimate of `P(T > n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnTailEstimate<T> {
    pub n_grid: Vec<u64>,
    pub p_hat: Vec<T>,
    pub ci_low: Vec<T>,
    pub ci_high: Vec<T>,
    pub trials: u64,
    pub seed: u64,
    /// `survivors[n] = #{trajectories with T > n}` for every `n ≤ n_max`.
    survivors: Vec<u64>,
}

/// Wilson score interval at 95% for `k` successes out of `n`.
pub fn wilson_interval<T: Real>(k: u64, n: u64) -> (T, T) {
    let z = T::c(Z_95);
    let nn = T::from_count(n);
    let p = T::from_count(k) / nn;
    let z2 = z * z;
    let denom = T::one() + z2 / nn;
    let center = (p + z2 / (T::c(2.0) * nn)) / denom;
    let half = z / denom * (p * (T::one() - p) / nn + z2 / (T::c(4.0) * nn * nn)).sqrt();
    let lo = (center - half).max(T::zero()).min(p);
    let hi = (center + half).min(T::one()).max(p);
    (lo, hi)
}

/// Default reporting grid: `0..=16` densely, then powers of two, then `n_max`.
pub fn tail_grid(n_max: u64) -> Vec<u64> {
    let mut grid: Vec<u64> = (0..=16.min(n_max)).collect();
    let mut p = 32;
    while p <= n_max {
        grid.push(p);
        p *= 2;
    }
    if *grid.last().unwrap() != n_max {
        grid.push(n_max);
    }
    grid
}

impl<T: Real> ReturnTailEstimate<T> {
    /// Builds an estimate from observed return times (`None` = censored).
    pub fn from_return_times(
        return_times: &[Option<u64>],
        n_max: u64,
        seed: u64,
    ) -> Result<Self, OrbitError> {
        if return_times.is_empty() {
            return Err(OrbitError::InvalidArgument("need at least one trial".into()));
        }
        let trials = return_times.len() as u64;
        let mut returned_at = vec![0u64; n_max as usize + 1];
        for t in return_times.iter().flatten() {
            if *t <= n_max {
                returned_at[*t as usize] += 1;
            }
        }
        let mut survivors = Vec::with_capacity(n_max as usize + 1);
        let mut alive = trials;
        for r in returned_at {
            alive -= r;
            survivors.push(alive);
        }
        // T ≥ 1, so nobody has returned at n = 0
        survivors[0] = trials;
        let n_grid = tail_grid(n_max);
        let mut p_hat = Vec::with_capacity(n_grid.len());
        let mut ci_low = Vec::with_capacity(n_grid.len());
        let mut ci_high = Vec::with_capacity(n_grid.len());
        for &n in &n_grid {
            let k = survivors[n as usize];
            p_hat.push(T::from_count(k) / T::from_count(trials));
            let (lo, hi) = wilson_interval(k, trials);
            ci_low.push(lo);
            ci_high.push(hi);
        }
        Ok(ReturnTailEstimate { n_grid, p_hat, ci_low, ci_high, trials, seed, survivors })
    }

    pub fn n_max(&self) -> u64 {
        self.survivors.len() as u64 - 1
    }

    /// `P̂(T > n)` at any integer `n ≤ n_max`.
    pub fn p_at(&self, n: u64) -> Result<T, OrbitError> {
        let k = self
            .survivors
            .get(n as usize)
            .ok_or(OrbitError::Extrapolation { n: n as f64, horizon: self.n_max() })?;
        Ok(T::from_count(*k) / T::from_count(self.trials))
    }

    /// Wilson interval of `P(T > n)` at any integer `n ≤ n_max`.
    pub fn ci_at(&self, n: u64) -> Result<(T, T), OrbitError> {
        let k = self
            .survivors
            .get(n as usize)
            .ok_or(OrbitError::Extrapolation { n: n as f64, horizon: self.n_max() })?;
        Ok(wilson_interval(*k, self.trials))
    }

    pub fn survivors(&self) -> &[u64] {
        &self.survivors
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,p_hat,ci_low,ci_high,trials,seed")?;
        for i in 0..self.n_grid.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.n_grid[i], self.p_hat[i], self.ci_low[i], self.ci_high[i], self.trials, self.seed
            )?;
        }
        Ok(())
    }
}

/// First return time of `o` for one trajectory, censored at `n_max`.
pub fn sample_return_time<R: Rng + ?Sized>(m: &DegreeSequence, n_max: u64, rng: &mut R) -> Option<u64> {
    let mut s = Site::root();
    for n in 1..=n_max {
        step_shortcut_in_place(m, &mut s, rng);
        if s.is_root() {
            return Some(n);
        }
    }
    None
}

/// Monte Carlo estimate of `P(T > n)` for `n ≤ n_max` from `trials`
/// independent walks started at `o`.
///
/// Trajectory `i` uses the seed `seed::mix(seed, RETURN_TAIL, i)`; results are
/// collected in trajectory order, so the output is identical for any number
/// of worker threads.
pub fn estimate_return_tail<T: Real>(
    m: &DegreeSequence,
    n_max: u64,
    trials: u64,
    seed: u64,
) -> Result<ReturnTailEstimate<T>, OrbitError> {
    if n_max < 1 || trials < 1 {
        return Err(OrbitError::InvalidArgument(format!(
            "need n_max ≥ 1 and trials ≥ 1, got {n_max} and {trials}"
        )));
    }
    let times: Vec<Option<u64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::trajectory_rng(seed, stream::RETURN_TAIL, i);
            sample_return_time(m, n_max, &mut rng)
        })
        .collect();
    ReturnTailEstimate::from_return_times(&times, n_max, seed)
}

/// `q(n) = Σ_{i ≤ n} P̂(T > i)`, linearly interpolated between integers.
#[derive(Debug, Clone)]
pub struct CumulativeQ<T> {
    prefix: Vec<T>,
}

impl<T: Real> CumulativeQ<T> {
    pub fn horizon(&self) -> u64 {
        self.prefix.len() as u64 - 1
    }

    pub fn at(&self, n: u64) -> Result<T, OrbitError> {
        self.prefix
            .get(n as usize)
            .copied()
            .ok_or(OrbitError::Extrapolation { n: n as f64, horizon: self.horizon() })
    }

    pub fn eval(&self, x: T) -> Result<T, OrbitError> {
        let horizon = T::from_count(self.horizon());
        if !(x >= T::zero() && x <= horizon) {
            return Err(OrbitError::Extrapolation { n: x.to_f64_lossy(), horizon: self.horizon() });
        }
        let lo = x.floor();
        let i = lo.to_usize().unwrap();
        if lo == x || i + 1 >= self.prefix.len() {
            return Ok(self.prefix[i]);
        }
        let t = x - lo;
        Ok(self.prefix[i] * (T::one() - t) + self.prefix[i + 1] * t)
    }
}

pub fn cumulative_q<T: Real>(tail: &ReturnTailEstimate<T>) -> CumulativeQ<T> {
    let trials = T::from_count(tail.trials);
    let mut acc = T::zero();
    let prefix = tail
        .survivors
        .iter()
        .map(|&k| {
            acc = acc + T::from_count(k) / trials;
            acc
        })
        .collect();
    CumulativeQ { prefix }
}

/// Sites one generator away from `s` (excluding `s`).
pub fn neighbors(m: &DegreeSequence, s: &Site) -> Vec<Site> {
    let mut out = Vec::new();
    let a1 = s.digit(1);
    for v in 0..m.degree(1) as u8 {
        if v != a1 {
            let mut t = s.clone();
            t.set_digit(0, v);
            out.push(t);
        }
    }
    if let Some(j) = s.first_nonzero() {
        let cur = s.digit(j + 2);
        for v in 0..m.degree(j + 2) as u8 {
            if v != cur {
                let mut t = s.clone();
                t.set_digit(j + 1, v);
                out.push(t);
            }
        }
    }
    out
}

/// Breadth-first distance in the Schreier graph, where every generator of
/// `Π ∪ H` is one edge. Returns `None` when the distance exceeds `cutoff`.
pub fn schreier_distance(
    m: &DegreeSequence,
    a: &Site,
    b: &Site,
    cutoff: u32,
) -> Result<Option<u32>, OrbitError> {
    if cutoff == 0 {
        return Err(OrbitError::InvalidCutoff);
    }
    a.check(m)?;
    b.check(m)?;
    if a == b {
        return Ok(Some(0));
    }
    let mut seen: FxHashSet<Site> = FxHashSet::default();
    let mut queue = VecDeque::new();
    seen.insert(a.clone());
    queue.push_back((a.clone(), 0u32));
    while let Some((s, d)) = queue.pop_front() {
        if d >= cutoff {
            continue;
        }
        for t in neighbors(m, &s) {
            if t == *b {
                return Ok(Some(d + 1));
            }
            if seen.insert(t.clone()) {
                queue.push_back((t, d + 1));
            }
        }
    }
    Ok(None)
}

/// Exact Schreier distance by recursion on the highest differing level.
///
/// Sites agreeing above level `ℓ` are joined inside the level-`ℓ` block, and
/// the sub-blocks of that block indexed by digit `ℓ` only meet through the
/// cliques at the pivots `0^{ℓ-2} b` (`b ≠ 0`), so
/// `d(u, v) = min_b d(u|ℓ-1, pivot_b) + 1 + d(pivot_b, v|ℓ-1)`.
#[derive(Debug, Default)]
pub struct DistanceOracle {
    memo: FxHashMap<(Site, Site), u64>,
}

impl DistanceOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn distance(&mut self, m: &DegreeSequence, u: &Site, v: &Site) -> u64 {
        if u == v {
            return 0;
        }
        let key = if u < v { (u.clone(), v.clone()) } else { (v.clone(), u.clone()) };
        if let Some(&d) = self.memo.get(&key) {
            return d;
        }
        let top = u.depth().max(v.depth());
        let level = (1..=top).rev().find(|&l| u.digit(l) != v.digit(l)).unwrap();
        let d = if level == 1 {
            1
        } else {
            let lu = u.truncated(level - 1);
            let lv = v.truncated(level - 1);
            let mut best = u64::MAX;
            for b in 1..m.degree(level - 1) {
                let mut pivot = Site::root();
                pivot.set_digit(level - 2, b as u8);
                let d = self.distance(m, &lu, &pivot) + 1 + self.distance(m, &pivot, &lv);
                best = best.min(d);
            }
            best
        };
        self.memo.insert(key, d);
        d
    }

    /// Distance from the root ray `o`.
    pub fn from_root(&mut self, m: &DegreeSequence, s: &Site) -> u64 {
        self.distance(m, &Site::root(), s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::WalkRng;
    use rand::SeedableRng;

    fn site(m: &DegreeSequence, d: &[u8]) -> Site {
        Site::from_digits(m, d).unwrap()
    }

    #[test]
    fn shortcut_from_root_m2_stays_three_quarters() {
        let m = DegreeSequence::constant(2).unwrap();
        let mut rng = WalkRng::seed_from_u64(1);
        let n = 100_000;
        let stay = (0..n).filter(|_| step_shortcut(&m, &Site::root(), &mut rng).is_root()).count();
        let p = stay as f64 / n as f64;
        let sd = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!((p - 0.75).abs() < 3.0 * sd, "{p}");
    }

    #[test]
    fn exact_law_from_root_m2() {
        let m = DegreeSequence::constant(2).unwrap();
        let law = transition_law(&m, &Site::root());
        assert_eq!(law.len(), 2);
        assert_eq!(law[0], (Site::root(), 0.75));
        assert_eq!(law[1], (site(&m, &[1]), 0.25));
    }

    #[test]
    fn shortcut_h_branch_from_one() {
        let m = DegreeSequence::constant(2).unwrap();
        let law = transition_law(&m, &site(&m, &[1]));
        let get = |s: &Site| law.iter().find(|(t, _)| t == s).map(|x| x.1).unwrap_or(0.0);
        // Π branch: stay or go to o (1/4 each); H branch: stay or (1,1) (1/4 each)
        assert_eq!(get(&site(&m, &[1])), 0.5);
        assert_eq!(get(&site(&m, &[1, 1])), 0.25);
        assert_eq!(get(&Site::root()), 0.25);
    }

    #[test]
    fn exact_step_fixes_root_under_rho() {
        let m = DegreeSequence::constant(3).unwrap();
        for i in 0..3 {
            let mut s = Site::root();
            GeneratorMove::RhoPow(i).act(&m, &mut s);
            assert!(s.is_root());
        }
    }

    #[test]
    fn tail_basic_properties() {
        let m = DegreeSequence::constant(2).unwrap();
        let tail: ReturnTailEstimate<f64> = estimate_return_tail(&m, 64, 20_000, 3).unwrap();
        assert_eq!(tail.p_hat[0], 1.0);
        for w in tail.p_hat.windows(2) {
            assert!(w[1] <= w[0]);
        }
        for i in 0..tail.n_grid.len() {
            assert!(0.0 <= tail.ci_low[i] && tail.ci_low[i] <= tail.p_hat[i]);
            assert!(tail.p_hat[i] <= tail.ci_high[i] && tail.ci_high[i] <= 1.0);
        }
        // P(T > 1) = 1/4
        let (lo, hi) = tail.ci_at(1).unwrap();
        assert!(lo <= 0.25 && 0.25 <= hi, "{lo} {hi}");
        let q = cumulative_q(&tail);
        assert_eq!(q.at(0).unwrap(), 1.0);
        let q1 = q.at(1).unwrap();
        assert!((q1 - 1.25).abs() < hi - lo, "{q1}");
        assert!(q.at(65).is_err());
        assert!(q.eval(64.5).is_err());
    }

    #[test]
    fn tail_rejects_empty_arguments() {
        let m = DegreeSequence::constant(2).unwrap();
        assert!(estimate_return_tail::<f64>(&m, 0, 10, 1).is_err());
        assert!(estimate_return_tail::<f64>(&m, 10, 0, 1).is_err());
    }

    #[test]
    fn q_of_never_returning_walk() {
        let times = vec![None; 5];
        let tail = ReturnTailEstimate::<f64>::from_return_times(&times, 10, 0).unwrap();
        let q = cumulative_q(&tail);
        for n in 0..=10 {
            assert_eq!(q.at(n).unwrap(), (n + 1) as f64);
        }
        assert_eq!(q.eval(2.5).unwrap(), 3.5);
    }

    #[test]
    fn tail_csv_header() {
        let times = vec![Some(1), None];
        let tail = ReturnTailEstimate::<f64>::from_return_times(&times, 4, 9).unwrap();
        let mut buf = Vec::new();
        tail.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "n,p_hat,ci_low,ci_high,trials,seed");
        assert!(lines.next().unwrap().starts_with("0,1,"));
        assert!(lines.next().unwrap().starts_with("1,0.5,"));
    }

    #[test]
    fn distance_examples() {
        let m = DegreeSequence::constant(2).unwrap();
        let o = Site::root();
        assert_eq!(schreier_distance(&m, &o, &o, 5).unwrap(), Some(0));
        assert_eq!(schreier_distance(&m, &o, &site(&m, &[1]), 5).unwrap(), Some(1));
        assert_eq!(schreier_distance(&m, &o, &site(&m, &[0, 1]), 5).unwrap(), Some(3));
        assert_eq!(schreier_distance(&m, &o, &site(&m, &[1, 1]), 5).unwrap(), Some(2));
        assert_eq!(schreier_distance(&m, &o, &site(&m, &[0, 0, 0, 1]), 5).unwrap(), None);
        assert!(matches!(schreier_distance(&m, &o, &o, 0), Err(OrbitError::InvalidCutoff)));
    }

    #[test]
    fn m2_schreier_graph_is_a_ray() {
        // every non-root site has exactly two neighbours, o has one
        let m = DegreeSequence::constant(2).unwrap();
        assert_eq!(neighbors(&m, &Site::root()).len(), 1);
        for bits in 1u32..256 {
            let d: Vec<u8> = (0..8).map(|i| ((bits >> i) & 1) as u8).collect();
            assert_eq!(neighbors(&m, &site(&m, &d)).len(), 2);
        }
    }

    #[test]
    fn recursive_distance_matches_bfs() {
        for spec in ["2", "3", "4", "2,3|repeat", "2,4|periodic", "3,2,5,2|periodic:2"] {
            let m: DegreeSequence = spec.parse().unwrap();
            let mut rng = WalkRng::seed_from_u64(17);
            let mut oracle = DistanceOracle::new();
            for _ in 0..150 {
                let da = rng.random_range(0..6);
                let db = rng.random_range(0..6);
                let a: Vec<u8> = (1..=da).map(|l| rng.random_range(0..m.degree(l)) as u8).collect();
                let b: Vec<u8> = (1..=db).map(|l| rng.random_range(0..m.degree(l)) as u8).collect();
                let (a, b) = (site(&m, &a), site(&m, &b));
                let bfs = schreier_distance(&m, &a, &b, 10_000).unwrap().unwrap();
                assert_eq!(oracle.distance(&m, &a, &b), bfs as u64, "{spec} {a:?} {b:?}");
            }
        }
    }
}
