//! Lamp groups `ℤ`, `ℤ₂` and `ℤ₂ ≀ ℤ` with their switch measures, word
//! lengths and the speed/entropy functions of the switch walk `R_k`.
//!
//! Switch measures are uniform on `{-1, 0, +1}` for `ℤ`, on `{id, flip}` for
//! `ℤ₂` and on `{walk ±1, flip, id}` for `ℤ₂ ≀ ℤ`. Entropies are in nats.

use std::collections::BTreeSet;
use std::fmt;
use std::hash::Hash;
use std::io::Write;
use std::str::FromStr;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, PartialEq)]
pub enum LampError {
    #[error("step count must be non-negative, got {0}")]
    NegativeSteps(i64),
    #[error("x = {x} lies outside the tabulated range [0, {horizon}]")]
    OutOfHorizon { x: f64, horizon: usize },
    #[error("unknown lamp group {0:?} (expected Z, Z2 or Z2wrZ)")]
    UnknownGroup(String),
}

/// A finitely generated lamp group with a fixed symmetric switch measure.
pub trait LampGroup: Clone + Send + Sync + 'static {
    type Element: Clone + Eq + Hash + fmt::Debug + Send + Sync;

    fn kind(&self) -> LampKind;
    fn identity(&self) -> Self::Element;
    fn is_identity(&self, e: &Self::Element) -> bool;
    fn mul(&self, a: &Self::Element, b: &Self::Element) -> Self::Element;
    fn invert(&self, a: &Self::Element) -> Self::Element;
    fn word_length(&self, a: &Self::Element) -> u64;
    /// Atoms of the switch measure, which is uniform on this list.
    fn switch_support(&self) -> &[Self::Element];
    /// Appends a canonical byte encoding.
    fn encode(&self, e: &Self::Element, out: &mut Vec<u8>);

    fn right_mul_assign(&self, a: &mut Self::Element, b: &Self::Element) {
        *a = self.mul(a, b);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LampKind {
    #[serde(rename = "Z")]
    Integers,
    #[serde(rename = "Z2")]
    Z2,
    #[serde(rename = "Z2wrZ")]
    Lamplighter,
}

impl fmt::Display for LampKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LampKind::Integers => "Z",
            LampKind::Z2 => "Z2",
            LampKind::Lamplighter => "Z2wrZ",
        })
    }
}

impl FromStr for LampKind {
    type Err = LampError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "Z" | "z" | "integers" => Ok(LampKind::Integers),
            "Z2" | "z2" => Ok(LampKind::Z2),
            "Z2wrZ" | "z2wrz" | "lamplighter" => Ok(LampKind::Lamplighter),
            other => Err(LampError::UnknownGroup(other.to_string())),
        }
    }
}

fn push_varint(mut v: u64, out: &mut Vec<u8>) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

#[derive(Debug, Clone)]
pub struct Integers {
    support: [i64; 3],
}

impl Default for Integers {
    fn default() -> Self {
        Integers { support: [-1, 0, 1] }
    }
}

impl LampGroup for Integers {
    type Element = i64;

    fn kind(&self) -> LampKind {
        LampKind::Integers
    }
    fn identity(&self) -> i64 {
        0
    }
    fn is_identity(&self, e: &i64) -> bool {
        *e == 0
    }
    fn mul(&self, a: &i64, b: &i64) -> i64 {
        a + b
    }
    fn invert(&self, a: &i64) -> i64 {
        -a
    }
    fn word_length(&self, a: &i64) -> u64 {
        a.unsigned_abs()
    }
    fn switch_support(&self) -> &[i64] {
        &self.support
    }
    fn encode(&self, e: &i64, out: &mut Vec<u8>) {
        push_varint(zigzag(*e), out);
    }
    fn right_mul_assign(&self, a: &mut i64, b: &i64) {
        *a += b;
    }
}

#[derive(Debug, Clone)]
pub struct Z2 {
    support: [bool; 2],
}

impl Default for Z2 {
    fn default() -> Self {
        Z2 { support: [false, true] }
    }
}

impl LampGroup for Z2 {
    type Element = bool;

    fn kind(&self) -> LampKind {
        LampKind::Z2
    }
    fn identity(&self) -> bool {
        false
    }
    fn is_identity(&self, e: &bool) -> bool {
        !*e
    }
    fn mul(&self, a: &bool, b: &bool) -> bool {
        a ^ b
    }
    fn invert(&self, a: &bool) -> bool {
        *a
    }
    fn word_length(&self, a: &bool) -> u64 {
        *a as u64
    }
    fn switch_support(&self) -> &[bool] {
        &self.support
    }
    fn encode(&self, e: &bool, out: &mut Vec<u8>) {
        out.push(*e as u8);
    }
}

/// Element of `ℤ₂ ≀ ℤ`: the set of lit lamps and the lamplighter position.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LamplighterElement {
    pub lamps: BTreeSet<i64>,
    pub pos: i64,
}

impl LamplighterElement {
    pub fn new(lamps: impl IntoIterator<Item = i64>, pos: i64) -> Self {
        LamplighterElement { lamps: lamps.into_iter().collect(), pos }
    }

    fn toggle(&mut self, x: i64) {
        if !self.lamps.remove(&x) {
            self.lamps.insert(x);
        }
    }
}

/// Word length in `ℤ₂ ≀ ℤ` for the generators `{walk ±1, flip}`: one flip
/// per lit lamp plus the shortest tour from 0 covering every lit lamp and
/// ending at the lamplighter position.
pub fn lamplighter_word_length(e: &LamplighterElement) -> u64 {
    let p = e.pos;
    let lo = e.lamps.first().map_or(0, |&x| x.min(0)).min(p);
    let hi = e.lamps.last().map_or(0, |&x| x.max(0)).max(p);
    let span = hi - lo;
    let left_first = -lo + span + (hi - p);
    let right_first = hi + span + (p - lo);
    e.lamps.len() as u64 + left_first.min(right_first) as u64
}

#[derive(Debug, Clone)]
pub struct Lamplighter {
    support: [LamplighterElement; 4],
}

impl Default for Lamplighter {
    fn default() -> Self {
        Lamplighter {
            support: [
                LamplighterElement::new([], 1),
                LamplighterElement::new([], -1),
                LamplighterElement::new([0], 0),
                LamplighterElement::default(),
            ],
        }
    }
}

impl LampGroup for Lamplighter {
    type Element = LamplighterElement;

    fn kind(&self) -> LampKind {
        LampKind::Lamplighter
    }
    fn identity(&self) -> LamplighterElement {
        LamplighterElement::default()
    }
    fn is_identity(&self, e: &LamplighterElement) -> bool {
        e.pos == 0 && e.lamps.is_empty()
    }
    /// `(A, p)(B, q) = (A Δ (B + p), p + q)`.
    fn mul(&self, a: &LamplighterElement, b: &LamplighterElement) -> LamplighterElement {
        let mut out = a.clone();
        self.right_mul_assign(&mut out, b);
        out
    }
    fn invert(&self, a: &LamplighterElement) -> LamplighterElement {
        LamplighterElement { lamps: a.lamps.iter().map(|x| x - a.pos).collect(), pos: -a.pos }
    }
    fn word_length(&self, a: &LamplighterElement) -> u64 {
        lamplighter_word_length(a)
    }
    fn switch_support(&self) -> &[LamplighterElement] {
        &self.support
    }
    fn encode(&self, e: &LamplighterElement, out: &mut Vec<u8>) {
        push_varint(zigzag(e.pos), out);
        push_varint(e.lamps.len() as u64, out);
        for &x in &e.lamps {
            push_varint(zigzag(x), out);
        }
    }
    fn right_mul_assign(&self, a: &mut LamplighterElement, b: &LamplighterElement) {
        for &x in &b.lamps {
            a.toggle(x + a.pos);
        }
        a.pos += b.pos;
    }
}

/// Exact law of `R_k` for `k = 0..=horizon`, by dynamic programming over the
/// distribution of group elements.
pub fn exact_switch_walk_laws<G: LampGroup>(group: &G, horizon: usize) -> Vec<Vec<(G::Element, f64)>> {
    let support = group.switch_support();
    let w = 1.0 / support.len() as f64;
    let mut cur: FxHashMap<G::Element, f64> = FxHashMap::default();
    cur.insert(group.identity(), 1.0);
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(cur.iter().map(|(e, p)| (e.clone(), *p)).collect());
    for _ in 0..horizon {
        let mut next: FxHashMap<G::Element, f64> = FxHashMap::default();
        for (e, p) in &cur {
            for s in support {
                *next.entry(group.mul(e, s)).or_default() += p * w;
            }
        }
        cur = next;
        out.push(cur.iter().map(|(e, p)| (e.clone(), *p)).collect());
    }
    out
}

/// Shannon entropy in nats of a probability vector (zero entries ignored).
pub fn shannon_entropy<T: Real>(probs: impl IntoIterator<Item = T>) -> T {
    probs
        .into_iter()
        .filter(|p| *p > T::zero())
        .fold(T::zero(), |acc, p| acc - p * p.ln())
}

/// Piecewise-linear interpolation of `values[i] = f(i)` at a real `x`.
pub fn interpolate<T: Real>(values: &[T], x: T) -> Result<T, LampError> {
    let horizon = values.len().saturating_sub(1);
    if values.is_empty() || !(x >= T::zero() && x <= T::from_count(horizon as u64)) {
        return Err(LampError::OutOfHorizon { x: x.to_f64_lossy(), horizon });
    }
    let lo = x.floor();
    let i = lo.to_usize().unwrap();
    if lo == x || i == horizon {
        return Ok(values[i]);
    }
    let t = x - lo;
    Ok(values[i] * (T::one() - t) + values[i + 1] * t)
}

/// How tabulated lamp functions continue past the exact horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extension<T> {
    /// Local CLT for a lattice walk with step variance `variance`:
    /// `h(k) ≈ ½ ln(2πe σ² k)`, `E|R_k| ≈ √(2σ²k/π)`.
    Gaussian { variance: T },
    Constant { entropy: T, mean_length: T },
    /// `h(k) ≈ c_h √k`, `E|R_k| ≈ c_len √k`, fitted on the exact table.
    Sqrt { entropy_coef: T, length_coef: T },
}

/// `h(k) = H(R_k)`, `E|R_k|`, `λ̄` and `λ̲` of the switch walk on a lamp group.
#[derive(Debug, Clone)]
pub struct LampFunctions<T> {
    kind: LampKind,
    entropy: Vec<T>,
    mean_length: Vec<T>,
    prefix_max: Vec<T>,
    suffix_min: Vec<T>,
    extension: Extension<T>,
}

/// Exact horizon used for `ℤ₂ ≀ ℤ`.
pub const LAMPLIGHTER_EXACT_HORIZON: usize = 10;
/// Exact horizon used for `ℤ`.
pub const INTEGER_EXACT_HORIZON: usize = 4096;

impl<T: Real> LampFunctions<T> {
    pub fn for_kind(kind: LampKind) -> Self {
        match kind {
            LampKind::Integers => Self::integers(INTEGER_EXACT_HORIZON),
            LampKind::Z2 => Self::z2(),
            LampKind::Lamplighter => Self::lamplighter(LAMPLIGHTER_EXACT_HORIZON),
        }
    }

    /// `ℤ` with steps uniform on `{-1, 0, 1}`; exact `k`-fold convolution up
    /// to `horizon`.
    pub fn integers(horizon: usize) -> Self {
        let third = T::one() / T::c(3.0);
        let mut dist = vec![T::one()];
        let mut entropy = vec![T::zero()];
        let mut mean_length = vec![T::zero()];
        for k in 1..=horizon {
            let mut next = vec![T::zero(); 2 * k + 1];
            for (i, &p) in dist.iter().enumerate() {
                let q = p * third;
                next[i] = next[i] + q;
                next[i + 1] = next[i + 1] + q;
                next[i + 2] = next[i + 2] + q;
            }
            dist = next;
            entropy.push(shannon_entropy(dist.iter().copied()));
            let mean: T = dist
                .iter()
                .enumerate()
                .map(|(i, &p)| p * T::from_count((i as i64 - k as i64).unsigned_abs()))
                .sum();
            mean_length.push(mean);
        }
        Self::from_tables(
            LampKind::Integers,
            entropy,
            mean_length,
            Extension::Gaussian { variance: T::c(2.0 / 3.0) },
        )
    }

    /// `ℤ₂` with steps uniform on `{id, flip}`: `R_k` is uniform for `k ≥ 1`.
    pub fn z2() -> Self {
        let ln2 = T::c(2.0).ln();
        let half = T::c(0.5);
        Self::from_tables(
            LampKind::Z2,
            vec![T::zero(), ln2],
            vec![T::zero(), half],
            Extension::Constant { entropy: ln2, mean_length: half },
        )
    }

    /// `ℤ₂ ≀ ℤ` with exact laws up to `horizon`, continued by `c √k`.
    pub fn lamplighter(horizon: usize) -> Self {
        let group = Lamplighter::default();
        let laws = exact_switch_walk_laws(&group, horizon);
        let mut entropy = Vec::with_capacity(horizon + 1);
        let mut mean_length = Vec::with_capacity(horizon + 1);
        for law in &laws {
            entropy.push(T::c(shannon_entropy(law.iter().map(|(_, p)| *p))));
            let mean: f64 = law.iter().map(|(e, p)| p * lamplighter_word_length(e) as f64).sum();
            mean_length.push(T::c(mean));
        }
        // least squares through the origin against √k on k = 1..=horizon
        let fit = |ys: &[T]| {
            let num: T = (1..ys.len()).map(|k| ys[k] * T::from_count(k as u64).sqrt()).sum();
            let den: T = (1..ys.len()).map(|k| T::from_count(k as u64)).sum();
            num / den
        };
        let extension =
            Extension::Sqrt { entropy_coef: fit(&entropy), length_coef: fit(&mean_length) };
        Self::from_tables(LampKind::Lamplighter, entropy, mean_length, extension)
    }

    fn from_tables(kind: LampKind, entropy: Vec<T>, mean_length: Vec<T>, extension: Extension<T>) -> Self {
        let mut prefix_max = Vec::with_capacity(mean_length.len());
        let mut acc = T::zero();
        for &v in &mean_length {
            acc = acc.max(v);
            prefix_max.push(acc);
        }
        let mut suffix_min = mean_length.clone();
        for i in (0..suffix_min.len().saturating_sub(1)).rev() {
            suffix_min[i] = suffix_min[i].min(suffix_min[i + 1]);
        }
        let mut f = LampFunctions { kind, entropy, mean_length, prefix_max, suffix_min, extension };
        // the model is non-decreasing, so the infimum past the table is its first value
        let after = f.model_mean_length(f.exact_horizon() as u64 + 1);
        for v in f.suffix_min.iter_mut() {
            *v = v.min(after);
        }
        f
    }

    pub fn kind(&self) -> LampKind {
        self.kind
    }

    pub fn exact_horizon(&self) -> usize {
        self.entropy.len() - 1
    }

    pub fn extension(&self) -> Extension<T> {
        self.extension
    }

    /// Whether `h(k)` and `E|R_k|` are exact (not from the extension model).
    pub fn is_exact(&self, k: u64) -> bool {
        match self.extension {
            Extension::Constant { .. } => true,
            _ => k as usize <= self.exact_horizon(),
        }
    }

    fn model_entropy(&self, k: u64) -> T {
        let kk = T::from_count(k);
        match self.extension {
            Extension::Gaussian { variance } => {
                T::c(0.5) * (T::c(2.0 * std::f64::consts::PI * std::f64::consts::E) * variance * kk).ln()
            }
            Extension::Constant { entropy, .. } => entropy,
            Extension::Sqrt { entropy_coef, .. } => entropy_coef * kk.sqrt(),
        }
    }

    fn model_mean_length(&self, k: u64) -> T {
        let kk = T::from_count(k);
        match self.extension {
            Extension::Gaussian { variance } => {
                (T::c(2.0) * variance * kk / T::c(std::f64::consts::PI)).sqrt()
            }
            Extension::Constant { mean_length, .. } => mean_length,
            Extension::Sqrt { length_coef, .. } => length_coef * kk.sqrt(),
        }
    }

    /// `h(k) = H(R_k)` in nats.
    pub fn entropy(&self, k: u64) -> T {
        match self.entropy.get(k as usize) {
            Some(v) => *v,
            None => self.model_entropy(k),
        }
    }

    /// `E|R_k|`.
    pub fn mean_length(&self, k: u64) -> T {
        match self.mean_length.get(k as usize) {
            Some(v) => *v,
            None => self.model_mean_length(k),
        }
    }

    /// `λ̄(k) = max_{j ≤ k} E|R_j|`.
    pub fn lambda_bar(&self, k: u64) -> T {
        match self.prefix_max.get(k as usize) {
            Some(v) => *v,
            None => self.prefix_max.last().copied().unwrap().max(self.model_mean_length(k)),
        }
    }

    /// `λ̲(k) = inf_{j ≥ k} E|R_j|`.
    pub fn lambda_inf(&self, k: u64) -> T {
        match self.suffix_min.get(k as usize) {
            Some(v) => *v,
            None => self.model_mean_length(k),
        }
    }

    fn interpolated(&self, x: T, f: impl Fn(u64) -> T) -> Result<T, LampError> {
        if !x.is_finite() || x < T::zero() {
            return Err(LampError::OutOfHorizon { x: x.to_f64_lossy(), horizon: usize::MAX });
        }
        let lo = x.floor();
        let i = lo.to_u64().unwrap();
        let a = f(i);
        if lo == x {
            return Ok(a);
        }
        let t = x - lo;
        Ok(a * (T::one() - t) + f(i + 1) * t)
    }

    /// `h` at a real argument, by linear interpolation between integers.
    pub fn entropy_at(&self, x: T) -> Result<T, LampError> {
        self.interpolated(x, |k| self.entropy(k))
    }

    pub fn lambda_bar_at(&self, x: T) -> Result<T, LampError> {
        self.interpolated(x, |k| self.lambda_bar(k))
    }

    pub fn lambda_inf_at(&self, x: T) -> Result<T, LampError> {
        self.interpolated(x, |k| self.lambda_inf(k))
    }

    /// Checked version of [`Self::entropy`] taking a signed step count.
    pub fn lamp_entropy(&self, k: i64) -> Result<T, LampError> {
        if k < 0 {
            return Err(LampError::NegativeSteps(k));
        }
        Ok(self.entropy(k as u64))
    }

    /// `(λ̄(k), λ̲(k))` for a signed step count.
    pub fn lamp_speed(&self, k: i64) -> Result<(T, T), LampError> {
        if k < 0 {
            return Err(LampError::NegativeSteps(k));
        }
        Ok((self.lambda_bar(k as u64), self.lambda_inf(k as u64)))
    }

    /// CSV with header `k,h_nats,lambda_bar,lambda_inf,exact_flag`.
    pub fn write_csv<W: Write>(&self, mut w: W, k_max: u64) -> std::io::Result<()> {
        writeln!(w, "k,h_nats,lambda_bar,lambda_inf,exact_flag")?;
        for k in 0..=k_max {
            writeln!(
                w,
                "{},{},{},{},{}",
                k,
                self.entropy(k),
                self.lambda_bar(k),
                self.lambda_inf(k),
                if self.is_exact(k) { "exact" } else { "extended" }
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_entropy_values() {
        let f = LampFunctions::<f64>::integers(64);
        assert_eq!(f.entropy(0), 0.0);
        assert!((f.entropy(1) - 3f64.ln()).abs() < 1e-14);
        // law (1,2,3,2,1)/9
        let h2 = shannon_entropy([1.0, 2.0, 3.0, 2.0, 1.0].map(|c| c / 9.0));
        assert!((f.entropy(2) - h2).abs() < 1e-14);
        assert!((h2 - 1.5230).abs() < 5e-5);
        assert!((f.mean_length(1) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn z2_entropy_is_log2() {
        let f = LampFunctions::<f64>::z2();
        assert_eq!(f.entropy(0), 0.0);
        assert_eq!(f.entropy(5), 2f64.ln());
        assert_eq!(f.lambda_bar(0), 0.0);
        assert_eq!(f.lambda_inf(0), 0.0);
        assert_eq!(f.lambda_inf(3), 0.5);
        assert!(f.is_exact(1000));
    }

    #[test]
    fn negative_steps_rejected() {
        let f = LampFunctions::<f64>::z2();
        assert_eq!(f.lamp_entropy(-1), Err(LampError::NegativeSteps(-1)));
        assert!(f.lamp_speed(-3).is_err());
    }

    #[test]
    fn speed_functions_are_ordered() {
        for kind in [LampKind::Integers, LampKind::Z2, LampKind::Lamplighter] {
            let f = LampFunctions::<f64>::for_kind(kind);
            let mut prev = 0.0;
            for k in 0..6000u64 {
                let (bar, inf) = f.lamp_speed(k as i64).unwrap();
                assert!(bar >= prev, "{kind} {k}");
                assert!(bar >= inf, "{kind} {k}");
                prev = bar;
            }
        }
    }

    #[test]
    fn integer_local_clt_slope() {
        let f = LampFunctions::<f64>::integers(1 << 14);
        let offsets: Vec<f64> =
            (6..=14).map(|t| f.entropy(1 << t) - 0.5 * ((1u64 << t) as f64).ln()).collect();
        let limit = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * 2.0 / 3.0).ln();
        for o in offsets {
            assert!((o - limit).abs() < 0.01, "{o} vs {limit}");
        }
    }

    #[test]
    fn lamplighter_entropy_is_order_sqrt() {
        let f = LampFunctions::<f64>::lamplighter(LAMPLIGHTER_EXACT_HORIZON);
        assert!(!f.is_exact(11));
        assert!(f.is_exact(10));
        for k in 16..=160u64 {
            let r = f.entropy(k) / (k as f64).sqrt();
            assert!((0.3..=3.0).contains(&r), "{k} {r}");
        }
    }

    #[test]
    fn interpolation_examples() {
        let table = [0.0, 1.0, 3.0];
        assert_eq!(interpolate(&table, 1.5).unwrap(), 2.0);
        assert_eq!(interpolate(&table, 2.0).unwrap(), 3.0);
        assert_eq!(interpolate(&table, 1.0).unwrap(), 1.0);
        assert!(interpolate(&table, 2.5).is_err());
        assert!(interpolate(&table, -0.5).is_err());
        let f = LampFunctions::<f64>::integers(16);
        let a = f.entropy_at(2.25).unwrap();
        assert!(a > f.entropy(2) && a < f.entropy(3));
    }

    #[test]
    fn lamplighter_word_length_examples() {
        assert_eq!(lamplighter_word_length(&LamplighterElement::default()), 0);
        assert_eq!(lamplighter_word_length(&LamplighterElement::new([1, 3], 0)), 8);
        assert_eq!(lamplighter_word_length(&LamplighterElement::new([], 2)), 2);
        assert_eq!(lamplighter_word_length(&LamplighterElement::new([0], 0)), 1);
    }

    #[test]
    fn lamplighter_group_laws() {
        let g = Lamplighter::default();
        let a = LamplighterElement::new([-2, 1], 3);
        let b = LamplighterElement::new([0, 4], -1);
        let ab = g.mul(&a, &b);
        assert_eq!(ab, LamplighterElement::new([-2, 1, 3, 7], 2));
        assert!(g.is_identity(&g.mul(&a, &g.invert(&a))));
        assert!(g.is_identity(&g.mul(&g.invert(&a), &a)));
        let c = LamplighterElement::new([5], 1);
        assert_eq!(g.mul(&g.mul(&a, &b), &c), g.mul(&a, &g.mul(&b, &c)));
    }

    #[test]
    fn parse_kind() {
        assert_eq!("Z2wrZ".parse::<LampKind>().unwrap(), LampKind::Lamplighter);
        assert_eq!(LampKind::Integers.to_string(), "Z");
        assert!("Q".parse::<LampKind>().is_err());
    }

    #[test]
    fn lamp_csv_rows() {
        let f = LampFunctions::<f64>::lamplighter(4);
        let mut buf = Vec::new();
        f.write_csv(&mut buf, 6).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "k,h_nats,lambda_bar,lambda_inf,exact_flag");
        assert!(lines[1].starts_with("0,0,0,0,exact"));
        assert!(lines[7].ends_with("extended"));
    }

    #[test]
    fn single_precision_tables() {
        let f = LampFunctions::<f32>::integers(32);
        assert!((f.entropy(1) - 3f32.ln()).abs() < 1e-6);
    }
}
