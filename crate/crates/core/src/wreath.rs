//! The switch-walk-switch walk on `Λ ≀_S M_m`.
//!
//! With the multiplication rule `(ℓ, g)(ℓ′, g′) = (ℓ ℓ′^{g⁻¹}, g g′)` and
//! `ℓ′^{g⁻¹}(s) = ℓ′(s.g)`, a switch applied after the base walk has reached
//! `Y` lands at the unique site `s` with `s.Y = o`, that is `s = o.Y⁻¹`.
//! Step `n` therefore multiplies the lamp at `o.Y_{n-1}⁻¹` (pre-switch),
//! moves `Y_n = Y_{n-1} G_n`, then multiplies the lamp at `o.Y_n⁻¹`
//! (post-switch). `Y_n⁻¹` is kept as a [`Portrait`] and updated by
//! `Y_n⁻¹ = G_n⁻¹ Y_{n-1}⁻¹`, so a step costs `O(depth)` instead of a replay
//! of the move log.
//!
//! Entropy is measured on the observable `(lamp configuration, o.Y_n)`,
//! a function of `X_n`, so its entropy is a lower bound for `H(X_n)`.

use std::hash::{DefaultHasher, Hash, Hasher};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::lamp::{shannon_entropy, LampFunctions, LampGroup};
use crate::num::Real;
use crate::orbit::DistanceOracle;
use crate::portrait::Portrait;
use crate::seed::{self, stream, WalkRng};
use crate::tree::{sample_move, DegreeSequence, GeneratorMove, Site, TreeError};

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("atom budget exceeded: {atoms:.3e} > {budget:.0e}")]
    AtomBudget { atoms: f64, budget: f64 },
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Exhaustive enumeration refuses more than this many weighted leaves.
pub const ATOM_BUDGET: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Eq)]
struct SiteRecord<E> {
    lamp: E,
    switches: u64,
}

/// State of one switch-walk-switch trajectory.
#[derive(Debug, Clone)]
pub struct WreathState<G: LampGroup> {
    group: G,
    m: DegreeSequence,
    sites: FxHashMap<Site, SiteRecord<G::Element>>,
    fwd: Site,
    inverse: Portrait,
    inverted_point: Site,
    move_log: Option<Vec<GeneratorMove>>,
    steps: u64,
}

impl<G: LampGroup> WreathState<G> {
    pub fn new(group: G, m: &DegreeSequence) -> Self {
        WreathState {
            group,
            m: m.clone(),
            sites: FxHashMap::default(),
            fwd: Site::root(),
            inverse: Portrait::identity(m),
            inverted_point: Site::root(),
            move_log: None,
            steps: 0,
        }
    }

    /// Same as [`Self::new`] but keeps every base move, which enables
    /// [`Self::move_log`] and a consistency check after each step in debug
    /// builds.
    pub fn with_move_log(group: G, m: &DegreeSequence) -> Self {
        let mut s = Self::new(group, m);
        s.move_log = Some(Vec::new());
        s
    }

    pub fn group(&self) -> &G {
        &self.group
    }

    pub fn degree_sequence(&self) -> &DegreeSequence {
        &self.m
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// `o.Y_n`.
    pub fn fwd(&self) -> &Site {
        &self.fwd
    }

    /// `o.Y_n⁻¹`, where the next pre-switch lands.
    pub fn inverted_point(&self) -> &Site {
        &self.inverted_point
    }

    pub fn move_log(&self) -> Option<&[GeneratorMove]> {
        self.move_log.as_deref()
    }

    /// Non-identity lamps.
    pub fn lamp_config(&self) -> impl Iterator<Item = (&Site, &G::Element)> {
        self.sites
            .iter()
            .filter(|(_, r)| !self.group.is_identity(&r.lamp))
            .map(|(s, r)| (s, &r.lamp))
    }

    pub fn lamp_at(&self, s: &Site) -> G::Element {
        self.sites.get(s).map_or_else(|| self.group.identity(), |r| r.lamp.clone())
    }

    /// Number of switches applied at each site so far (zero counts omitted).
    pub fn switch_counts(&self) -> impl Iterator<Item = (&Site, u64)> {
        self.sites.iter().map(|(s, r)| (s, r.switches))
    }

    pub fn total_switches(&self) -> u64 {
        self.sites.values().map(|r| r.switches).sum()
    }

    fn switch_at_inverted_point(&mut self, l: &G::Element) {
        let group = &self.group;
        let rec = self
            .sites
            .entry(self.inverted_point.clone())
            .or_insert_with(|| SiteRecord { lamp: group.identity(), switches: 0 });
        group.right_mul_assign(&mut rec.lamp, l);
        rec.switches += 1;
    }

    /// One step with prescribed switch values and base move.
    pub fn sws_step_with(&mut self, l: &G::Element, g: &GeneratorMove, l_post: &G::Element) {
        self.switch_at_inverted_point(l);
        g.act(&self.m, &mut self.fwd);
        self.inverse.left_mul(&g.inverse(&self.m));
        self.inverted_point = self.inverse.root_image();
        if let Some(log) = &mut self.move_log {
            log.push(*g);
            debug_assert_eq!(
                crate::tree::apply_word(&self.m, log, &Site::root()).unwrap(),
                self.fwd
            );
        }
        self.switch_at_inverted_point(l_post);
        self.steps += 1;
    }

    /// One step of the walk; randomness is drawn in the order pre-switch,
    /// base move, post-switch.
    pub fn sws_step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let support = self.group.switch_support();
        let l = support[rng.random_range(0..support.len())].clone();
        let g = sample_move(&self.m, rng);
        let l_post = support[rng.random_range(0..support.len())].clone();
        self.sws_step_with(&l, &g, &l_post);
    }

    /// `Σ_s |lamp(s)|_Λ`.
    pub fn lamp_length(&self) -> u64 {
        self.sites.values().map(|r| self.group.word_length(&r.lamp)).sum()
    }

    /// Canonical serialization of `(lamp configuration, o.Y_n)`: lamp sites
    /// in shortlex order with their values, then `o.Y_n`.
    pub fn observable_bytes(&self) -> Vec<u8> {
        let mut lit: Vec<(&Site, &G::Element)> = self.lamp_config().collect();
        lit.sort_unstable_by(|a, b| a.0.cmp(b.0));
        let mut out = Vec::with_capacity(16 * lit.len() + 16);
        encode_len(lit.len(), &mut out);
        for (s, e) in lit {
            encode_site(s, &mut out);
            self.group.encode(e, &mut out);
        }
        encode_site(&self.fwd, &mut out);
        out
    }

    /// Observable together with the switch count of every visited site.
    pub fn resolved_observable_bytes(&self) -> Vec<u8> {
        let mut out = self.observable_bytes();
        let mut counts: Vec<(&Site, u64)> = self.switch_counts().collect();
        counts.sort_unstable();
        encode_len(counts.len(), &mut out);
        for (s, c) in counts {
            encode_site(s, &mut out);
            encode_len(c as usize, &mut out);
        }
        out
    }

    /// 64-bit digest of [`Self::observable_bytes`].
    pub fn observable_digest(&self) -> u64 {
        digest(&self.observable_bytes())
    }
}

fn encode_len(n: usize, out: &mut Vec<u8>) {
    let mut v = n as u64;
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn encode_site(s: &Site, out: &mut Vec<u8>) {
    encode_len(s.depth(), out);
    out.extend_from_slice(s.digits());
}

pub fn digest(bytes: &[u8]) -> u64 {
    let mut h = DefaultHasher::new();
    bytes.hash(&mut h);
    h.finish()
}

/// `o.Y⁻¹` for `Y = g₁⋯g_n`, by applying `g_n⁻¹, …, g₁⁻¹` to `o` in turn.
/// Linear in the log length; [`WreathState`] maintains the same point
/// incrementally.
pub fn inverted_orbit_point(m: &DegreeSequence, move_log: &[GeneratorMove]) -> Result<Site, TreeError> {
    let mut s = Site::root();
    for g in move_log.iter().rev() {
        g.validate(m)?;
        g.inverse(m).act(m, &mut s);
    }
    Ok(s)
}

/// `Σ_s |lamp(s)|_Λ + d(o, o.Y_n)`, with the exact Schreier distance.
pub fn displacement_proxy<G: LampGroup>(state: &WreathState<G>, oracle: &mut DistanceOracle) -> u64 {
    state.lamp_length() + oracle.from_root(state.degree_sequence(), state.fwd())
}

/// `Σ_s h(N_s)` where `N_s` counts switches at `s`.
pub fn switch_count_entropy_proxy<T: Real>(
    counts: impl IntoIterator<Item = u64>,
    lamp: &LampFunctions<T>,
) -> T {
    counts.into_iter().fold(T::zero(), |acc, c| acc + lamp.entropy(c))
}

/// Plug-in entropy of an empirical sample, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyEstimate<T> {
    pub naive: T,
    /// `naive + (distinct - 1) / (2N)`.
    pub miller_madow: T,
    /// Delta-method standard error of the naive estimate.
    pub std_error: T,
    pub distinct: u64,
    pub samples: u64,
}

/// Biased-down estimate of the entropy of whatever the samples observe.
pub fn plug_in_entropy<T: Real, K: Hash + Eq>(samples: impl IntoIterator<Item = K>) -> EntropyEstimate<T> {
    let mut counts: FxHashMap<K, u64> = FxHashMap::default();
    let mut total = 0u64;
    for s in samples {
        *counts.entry(s).or_default() += 1;
        total += 1;
    }
    entropy_from_counts(counts.into_values(), total)
}

pub fn entropy_from_counts<T: Real>(counts: impl IntoIterator<Item = u64>, total: u64) -> EntropyEstimate<T> {
    if total == 0 {
        return EntropyEstimate {
            naive: T::zero(),
            miller_madow: T::zero(),
            std_error: T::zero(),
            distinct: 0,
            samples: 0,
        };
    }
    let n = T::from_count(total);
    let (mut h, mut h2, mut distinct) = (T::zero(), T::zero(), 0u64);
    for c in counts {
        if c == 0 {
            continue;
        }
        let p = T::from_count(c) / n;
        let l = p.ln();
        h = h - p * l;
        h2 = h2 + p * l * l;
        distinct += 1;
    }
    let var = (h2 - h * h).max(T::zero()) / n;
    EntropyEstimate {
        naive: h,
        miller_madow: h + T::from_count(distinct - 1) / (T::c(2.0) * n),
        std_error: var.sqrt(),
        distinct,
        samples: total,
    }
}

/// One independent step in each coordinate of the product walk.
pub fn product_step<A: LampGroup, B: LampGroup, R: Rng + ?Sized>(
    a: &mut WreathState<A>,
    b: &mut WreathState<B>,
    rng_a: &mut R,
    rng_b: &mut R,
) {
    a.sws_step(rng_a);
    b.sws_step(rng_b);
}

/// Grid-point records of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStats<T> {
    pub n_grid: Vec<u64>,
    pub displacement: Vec<T>,
    pub entropy_proxy: Vec<T>,
    pub observables: Vec<u64>,
    pub seed: u64,
}

fn check_grid(grid: &[u64], n_max: u64) -> Result<(), WalkError> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(WalkError::InvalidArgument("grid must be strictly increasing".into()));
    }
    if grid.last().is_some_and(|&n| n > n_max) {
        return Err(WalkError::InvalidArgument(format!("grid exceeds n_max = {n_max}")));
    }
    Ok(())
}

/// Default recording grid: `2^t` and `⌊2^{t+1/2}⌋` up to `n_max`, plus `n_max`.
pub fn default_grid(n_max: u64) -> Vec<u64> {
    let mut g = Vec::new();
    let mut t = 0;
    while (1u64 << t) <= n_max {
        g.push(1u64 << t);
        let half = (2f64.powf(t as f64 + 0.5)).floor() as u64;
        if half <= n_max {
            g.push(half);
        }
        t += 1;
    }
    g.push(n_max);
    g.sort_unstable();
    g.dedup();
    g.retain(|&n| n >= 1);
    g
}

fn record<G: LampGroup, T: Real>(
    state: &WreathState<G>,
    lamp: &LampFunctions<T>,
    oracle: &mut DistanceOracle,
    stats: &mut TrajectoryStats<T>,
) {
    stats.displacement.push(T::from_count(displacement_proxy(state, oracle)));
    stats
        .entropy_proxy
        .push(switch_count_entropy_proxy(state.switch_counts().map(|(_, c)| c), lamp));
    stats.observables.push(state.observable_digest());
}

/// Runs `n_max` steps from the identity with `WalkRng::seed_from_u64(seed)`,
/// recording the proxies at each grid point.
pub fn run_trajectory<G: LampGroup, T: Real>(
    group: &G,
    m: &DegreeSequence,
    lamp: &LampFunctions<T>,
    n_max: u64,
    grid: &[u64],
    seed: u64,
) -> Result<TrajectoryStats<T>, WalkError> {
    check_grid(grid, n_max)?;
    let mut rng = WalkRng::seed_from_u64(seed);
    let mut state = WreathState::new(group.clone(), m);
    let mut oracle = DistanceOracle::new();
    let mut stats = TrajectoryStats {
        n_grid: grid.to_vec(),
        displacement: Vec::with_capacity(grid.len()),
        entropy_proxy: Vec::with_capacity(grid.len()),
        observables: Vec::with_capacity(grid.len()),
        seed,
    };
    let mut next = 0;
    for n in 0..=n_max {
        if n > 0 {
            state.sws_step(&mut rng);
        }
        while next < grid.len() && grid[next] == n {
            record(&state, lamp, &mut oracle, &mut stats);
            next += 1;
        }
    }
    Ok(stats)
}

/// Grid-wise averages over a batch of trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary<T> {
    pub n_grid: Vec<u64>,
    pub mean_d: Vec<T>,
    pub se_d: Vec<T>,
    pub mean_proxy_h: Vec<T>,
    pub se_proxy_h: Vec<T>,
    pub plug_in: Vec<EntropyEstimate<T>>,
    pub trajectories: u64,
    pub seed: u64,
}

fn mean_se<T: Real>(xs: impl Iterator<Item = T> + Clone) -> (T, T) {
    let n = xs.clone().count();
    let nn = T::from_count(n as u64);
    let mean = xs.clone().sum::<T>() / nn;
    if n < 2 {
        return (mean, T::zero());
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<T>() / (nn - T::one());
    (mean, (var / nn).sqrt())
}

impl<T: Real> BatchSummary<T> {
    pub fn from_trajectories(stats: &[TrajectoryStats<T>], seed: u64) -> Self {
        let n_grid = stats.first().map(|s| s.n_grid.clone()).unwrap_or_default();
        let mut out = BatchSummary {
            n_grid: n_grid.clone(),
            mean_d: Vec::new(),
            se_d: Vec::new(),
            mean_proxy_h: Vec::new(),
            se_proxy_h: Vec::new(),
            plug_in: Vec::new(),
            trajectories: stats.len() as u64,
            seed,
        };
        for j in 0..n_grid.len() {
            let (m, s) = mean_se(stats.iter().map(|t| t.displacement[j]));
            out.mean_d.push(m);
            out.se_d.push(s);
            let (m, s) = mean_se(stats.iter().map(|t| t.entropy_proxy[j]));
            out.mean_proxy_h.push(m);
            out.se_proxy_h.push(s);
            out.plug_in.push(plug_in_entropy(stats.iter().map(|t| t.observables[j])));
        }
        out
    }

    /// CSV with header `n,mean_D,se_D,mean_proxy_H,se_proxy_H,distinct_observables`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,mean_D,se_D,mean_proxy_H,se_proxy_H,distinct_observables")?;
        for j in 0..self.n_grid.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.n_grid[j],
                self.mean_d[j],
                self.se_d[j],
                self.mean_proxy_h[j],
                self.se_proxy_h[j],
                self.plug_in[j].distinct
            )?;
        }
        Ok(())
    }
}

/// Runs `trajectories` independent walks in parallel. Trajectory `i` uses
/// `seed::mix(master_seed, stream, i)` and results are reduced in index
/// order, so the summary does not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn run_batch<G: LampGroup, T: Real>(
    group: &G,
    m: &DegreeSequence,
    lamp: &LampFunctions<T>,
    n_max: u64,
    grid: &[u64],
    trajectories: u64,
    master_seed: u64,
    stream_id: u64,
) -> Result<(BatchSummary<T>, Vec<TrajectoryStats<T>>), WalkError> {
    if trajectories == 0 {
        return Err(WalkError::InvalidArgument("need at least one trajectory".into()));
    }
    check_grid(grid, n_max)?;
    let stats: Vec<TrajectoryStats<T>> = (0..trajectories)
        .into_par_iter()
        .map(|i| run_trajectory(group, m, lamp, n_max, grid, seed::mix(master_seed, stream_id, i)))
        .collect::<Result<_, _>>()?;
    Ok((BatchSummary::from_trajectories(&stats, master_seed), stats))
}

/// Grid-point records of one product trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTrajectory<T> {
    pub left: TrajectoryStats<T>,
    pub right: TrajectoryStats<T>,
}

impl<T: Real> ProductTrajectory<T> {
    pub fn sum_displacement(&self, j: usize) -> T {
        self.left.displacement[j] + self.right.displacement[j]
    }

    pub fn max_displacement(&self, j: usize) -> T {
        self.left.displacement[j].max(self.right.displacement[j])
    }

    pub fn sum_entropy_proxy(&self, j: usize) -> T {
        self.left.entropy_proxy[j] + self.right.entropy_proxy[j]
    }

    pub fn joint_observable(&self, j: usize) -> (u64, u64) {
        (self.left.observables[j], self.right.observables[j])
    }
}

/// One trajectory of the product walk, stepping both coordinates with
/// [`product_step`].
#[allow(clippy::too_many_arguments)]
pub fn run_product_trajectory<A: LampGroup, B: LampGroup, T: Real>(
    (ga, ma, la): (&A, &DegreeSequence, &LampFunctions<T>),
    (gb, mb, lb): (&B, &DegreeSequence, &LampFunctions<T>),
    n_max: u64,
    grid: &[u64],
    master_seed: u64,
    index: u64,
) -> Result<ProductTrajectory<T>, WalkError> {
    check_grid(grid, n_max)?;
    let seed_a = seed::mix(master_seed, stream::PRODUCT_LEFT, index);
    let seed_b = seed::mix(master_seed, stream::PRODUCT_RIGHT, index);
    let mut rng_a = WalkRng::seed_from_u64(seed_a);
    let mut rng_b = WalkRng::seed_from_u64(seed_b);
    let mut a = WreathState::new(ga.clone(), ma);
    let mut b = WreathState::new(gb.clone(), mb);
    let (mut oa, mut ob) = (DistanceOracle::new(), DistanceOracle::new());
    let empty = |seed| TrajectoryStats {
        n_grid: grid.to_vec(),
        displacement: Vec::new(),
        entropy_proxy: Vec::new(),
        observables: Vec::new(),
        seed,
    };
    let (mut sa, mut sb) = (empty(seed_a), empty(seed_b));
    let mut next = 0;
    for n in 0..=n_max {
        if n > 0 {
            product_step(&mut a, &mut b, &mut rng_a, &mut rng_b);
        }
        while next < grid.len() && grid[next] == n {
            record(&a, la, &mut oa, &mut sa);
            record(&b, lb, &mut ob, &mut sb);
            next += 1;
        }
    }
    Ok(ProductTrajectory { left: sa, right: sb })
}

/// Exact law of the observable after `n` steps, by exhaustive enumeration.
#[derive(Debug, Clone)]
pub struct ExactObservableLaw {
    pub n: u32,
    /// Serialized observable and its probability, sorted by key.
    pub law: Vec<(Vec<u8>, f64)>,
    pub entropy: f64,
    pub mean_displacement: f64,
    /// Entropy of the observable refined by the switch counts.
    pub resolved_entropy: f64,
    pub mean_entropy_proxy: f64,
}

impl ExactObservableLaw {
    pub fn probability(&self, key: &[u8]) -> f64 {
        self.law
            .binary_search_by(|(k, _)| k.as_slice().cmp(key))
            .map_or(0.0, |i| self.law[i].1)
    }
}

/// Budget measure `(|supp L| · |Π| · k · |supp L|)^n` used to refuse large
/// enumerations.
pub fn oracle_atom_count<G: LampGroup>(group: &G, m: &DegreeSequence, n: u32) -> f64 {
    let l = group.switch_support().len() as f64;
    let pi: f64 = (1..=m.degree(1)).map(|x| x as f64).product();
    (l * pi * m.k() as f64 * l).powi(n as i32)
}

/// Enumerates every switch/move tuple of the first `n ≤ 5` steps.
pub fn exact_small_n_oracle<G: LampGroup>(
    group: &G,
    m: &DegreeSequence,
    lamp: &LampFunctions<f64>,
    n: u32,
) -> Result<ExactObservableLaw, WalkError> {
    if n > 5 {
        return Err(WalkError::InvalidArgument(format!("n = {n} exceeds 5")));
    }
    let atoms = oracle_atom_count(group, m, n);
    if atoms > ATOM_BUDGET {
        return Err(WalkError::AtomBudget { atoms, budget: ATOM_BUDGET });
    }
    let moves = GeneratorMove::atoms(m);
    let support = group.switch_support().to_vec();
    let w = 1.0 / support.len() as f64;
    let mut acc = OracleAcc::default();
    let mut oracle = DistanceOracle::new();
    let start = WreathState::with_move_log(group.clone(), m);
    enumerate(&start, n, 1.0, &moves, &support, w, lamp, &mut oracle, &mut acc);
    let mut law: Vec<(Vec<u8>, f64)> = acc.law.into_iter().collect();
    law.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let entropy = shannon_entropy(law.iter().map(|e| e.1));
    let resolved_entropy = shannon_entropy(acc.resolved.values().copied());
    Ok(ExactObservableLaw {
        n,
        law,
        entropy,
        mean_displacement: acc.mean_d,
        resolved_entropy,
        mean_entropy_proxy: acc.mean_h,
    })
}

#[derive(Default)]
struct OracleAcc {
    law: FxHashMap<Vec<u8>, f64>,
    resolved: FxHashMap<Vec<u8>, f64>,
    mean_d: f64,
    mean_h: f64,
}

#[allow(clippy::too_many_arguments)]
fn enumerate<G: LampGroup>(
    state: &WreathState<G>,
    remaining: u32,
    prob: f64,
    moves: &[(GeneratorMove, f64)],
    support: &[G::Element],
    w: f64,
    lamp: &LampFunctions<f64>,
    oracle: &mut DistanceOracle,
    acc: &mut OracleAcc,
) {
    if remaining == 0 {
        *acc.law.entry(state.observable_bytes()).or_default() += prob;
        *acc.resolved.entry(state.resolved_observable_bytes()).or_default() += prob;
        acc.mean_d += prob * displacement_proxy(state, oracle) as f64;
        acc.mean_h +=
            prob * switch_count_entropy_proxy(state.switch_counts().map(|(_, c)| c), lamp);
        return;
    }
    for l in support {
        for (g, pg) in moves {
            for l2 in support {
                let mut next = state.clone();
                next.sws_step_with(l, g, l2);
                enumerate(&next, remaining - 1, prob * w * pg * w, moves, support, w, lamp, oracle, acc);
            }
        }
    }
}
