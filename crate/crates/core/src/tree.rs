//! Degree sequences, sites of the Schreier set and the generator action of
//! the piecewise mother group.
//!
//! A site is a ray of the tree with finitely many non-zero digits. It is
//! stored least-significant digit first with trailing zeros stripped, so the
//! all-zero ray `o` is the empty string.
//!
//! The group is generated by the root permutations `Π ≅ Sym(m₁)` and the
//! cyclic group `H = ⟨ρ⟩` of order `k = lcm{m₂, m₃, …}`. On a ray, `ρ^i` finds
//! the first non-zero digit `a_j` and adds `i` to `a_{j+1}` modulo
//! `m_{j+1}`; the all-zero ray is fixed.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

/// Largest supported branching factor.
pub const MAX_DEGREE: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("digit {digit} at level {level} is out of range for degree {degree}")]
    MalformedSite { level: usize, digit: u8, degree: usize },
    #[error("degree {0} is outside 2..={MAX_DEGREE}")]
    InvalidDegree(usize),
    #[error("degree sequence needs at least one explicit level")]
    EmptyPrefix,
    #[error("periodic block of length {block} exceeds prefix of length {prefix}")]
    BadBlock { block: usize, prefix: usize },
    #[error("cannot parse degree sequence {input:?}: {reason}")]
    Parse { input: String, reason: String },
    #[error("{0:?} is not a permutation of 0..{1}")]
    BadPermutation(Vec<usize>, usize),
    #[error("move {0} is not a generator for this degree sequence")]
    BadMove(String),
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// How the degree sequence continues past its explicit prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extension {
    /// `m_ℓ = m_L` for every `ℓ > L`.
    RepeatLast,
    /// The last `block` explicit degrees repeat forever.
    Periodic { block: usize },
}

/// Bounded degree sequence `m = (m_ℓ)_{ℓ ≥ 1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeSequence {
    prefix: Vec<u8>,
    extension: Extension,
    m_star: usize,
    k: usize,
    // lcm{m_j : j ≥ ℓ} for ℓ = 1..=prefix.len()+1 (index ℓ-1); the last entry
    // covers every level past the prefix.
    tail_lcm: Vec<usize>,
}

impl DegreeSequence {
    pub fn new(prefix: Vec<u8>, extension: Extension) -> Result<Self, TreeError> {
        if prefix.is_empty() {
            return Err(TreeError::EmptyPrefix);
        }
        for &d in &prefix {
            if !(2..=MAX_DEGREE).contains(&(d as usize)) {
                return Err(TreeError::InvalidDegree(d as usize));
            }
        }
        let block = match extension {
            Extension::RepeatLast => 1,
            Extension::Periodic { block } => {
                if block == 0 || block > prefix.len() {
                    return Err(TreeError::BadBlock { block, prefix: prefix.len() });
                }
                block
            }
        };
        let repeating = &prefix[prefix.len() - block..];
        let ext_lcm = repeating.iter().fold(1, |acc, &d| lcm(acc, d as usize));
        let mut tail_lcm = vec![ext_lcm; prefix.len() + 1];
        for l in (0..prefix.len()).rev() {
            tail_lcm[l] = lcm(tail_lcm[l + 1], prefix[l] as usize);
        }
        let m_star = prefix.iter().copied().max().unwrap() as usize;
        let k = tail_lcm[1];
        Ok(DegreeSequence { prefix, extension, m_star, k, tail_lcm })
    }

    /// Constant sequence `m_ℓ ≡ d`.
    pub fn constant(d: usize) -> Result<Self, TreeError> {
        if d > u8::MAX as usize {
            return Err(TreeError::InvalidDegree(d));
        }
        Self::new(vec![d as u8], Extension::RepeatLast)
    }

    /// Degree `m_ℓ` of level `ℓ ≥ 1`.
    #[inline]
    pub fn degree(&self, level: usize) -> usize {
        debug_assert!(level >= 1);
        let l = self.prefix.len();
        if level <= l {
            return self.prefix[level - 1] as usize;
        }
        match self.extension {
            Extension::RepeatLast => self.prefix[l - 1] as usize,
            Extension::Periodic { block } => {
                let offset = (level - l - 1) % block;
                self.prefix[l - block + offset] as usize
            }
        }
    }

    pub fn prefix(&self) -> &[u8] {
        &self.prefix
    }

    pub fn extension(&self) -> &Extension {
        &self.extension
    }

    pub fn m_star(&self) -> usize {
        self.m_star
    }

    /// Order of `H`: least common multiple of `m₂, m₃, …`.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Order of the section of `ρ` at depth `depth` on the zero spine, i.e.
    /// `lcm{m_ℓ : ℓ ≥ depth + 2}`.
    pub fn rho_order_at(&self, depth: usize) -> usize {
        let idx = (depth + 1).min(self.tail_lcm.len() - 1);
        self.tail_lcm[idx]
    }

    /// Number of sites whose non-zero digits all lie in levels `1..=depth`.
    pub fn ball_size(&self, depth: usize) -> usize {
        (1..=depth).map(|l| self.degree(l)).product()
    }
}

impl fmt::Display for DegreeSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits: Vec<String> = self.prefix.iter().map(|d| d.to_string()).collect();
        write!(f, "{}|", digits.join(","))?;
        match self.extension {
            Extension::RepeatLast => write!(f, "repeat"),
            Extension::Periodic { block } if block == self.prefix.len() => write!(f, "periodic"),
            Extension::Periodic { block } => write!(f, "periodic:{block}"),
        }
    }
}

/// Grammar: `d,d,…,d[|rule]` with `rule` one of `repeat`, `periodic`
/// (whole prefix repeats) or `periodic:<len>` (last `len` entries repeat).
/// Omitting the rule means `repeat`.
impl FromStr for DegreeSequence {
    type Err = TreeError;

    fn from_str(input: &str) -> Result<Self, Self::Err> {
        let parse_err = |reason: &str| TreeError::Parse {
            input: input.to_string(),
            reason: reason.to_string(),
        };
        if !input.is_ascii() {
            return Err(parse_err("non-ASCII input"));
        }
        let (head, rule) = match input.split_once('|') {
            Some((h, r)) => (h, r.trim()),
            None => (input, "repeat"),
        };
        let mut prefix = Vec::new();
        for tok in head.split(',') {
            let tok = tok.trim();
            let d: u8 = tok.parse().map_err(|_| parse_err(&format!("bad degree {tok:?}")))?;
            prefix.push(d);
        }
        let extension = match rule {
            "repeat" => Extension::RepeatLast,
            "periodic" => Extension::Periodic { block: prefix.len() },
            r => match r.strip_prefix("periodic:") {
                Some(n) => Extension::Periodic {
                    block: n.trim().parse().map_err(|_| parse_err("bad block length"))?,
                },
                None => return Err(parse_err(&format!("unknown extension rule {r:?}"))),
            },
        };
        DegreeSequence::new(prefix, extension)
    }
}

/// Permutation of `{0, …, n-1}` stored as a lookup table, `n ≤ MAX_DEGREE`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Perm {
    len: u8,
    map: [u8; MAX_DEGREE],
}

impl Perm {
    pub fn identity(n: usize) -> Self {
        assert!(n <= MAX_DEGREE);
        let mut map = [0u8; MAX_DEGREE];
        for (i, slot) in map.iter_mut().enumerate() {
            *slot = i as u8;
        }
        Perm { len: n as u8, map }
    }

    /// Cyclic shift `x ↦ x + shift (mod n)`.
    pub fn rotation(n: usize, shift: usize) -> Self {
        let mut p = Self::identity(n);
        for x in 0..n {
            p.map[x] = ((x + shift) % n) as u8;
        }
        p
    }

    pub fn from_images(images: &[usize]) -> Result<Self, TreeError> {
        let n = images.len();
        if n > MAX_DEGREE {
            return Err(TreeError::BadPermutation(images.to_vec(), n));
        }
        let mut seen = [false; MAX_DEGREE];
        let mut map = [0u8; MAX_DEGREE];
        for (i, &y) in images.iter().enumerate() {
            if y >= n || seen[y] {
                return Err(TreeError::BadPermutation(images.to_vec(), n));
            }
            seen[y] = true;
            map[i] = y as u8;
        }
        for (i, slot) in map.iter_mut().enumerate().skip(n) {
            *slot = i as u8;
        }
        Ok(Perm { len: n as u8, map })
    }

    /// Uniform random permutation (Fisher–Yates).
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut p = Self::identity(n);
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            p.map.swap(i, j);
        }
        p
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn apply(&self, x: usize) -> usize {
        self.map[x] as usize
    }

    pub fn images(&self) -> &[u8] {
        &self.map[..self.len()]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = *self;
        for x in 0..self.len() {
            inv.map[self.map[x] as usize] = x as u8;
        }
        inv
    }

    /// `x ↦ other(self(x))`: apply `self` first.
    pub fn then(&self, other: &Perm) -> Perm {
        debug_assert_eq!(self.len, other.len);
        let mut out = *self;
        for x in 0..self.len() {
            out.map[x] = other.map[self.map[x] as usize];
        }
        out
    }

    pub fn is_identity(&self) -> bool {
        (0..self.len()).all(|x| self.map[x] as usize == x)
    }

    /// All permutations of `{0, …, n-1}` in lexicographic order.
    pub fn all(n: usize) -> Vec<Perm> {
        fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Perm>) {
            let n = used.len();
            if prefix.len() == n {
                out.push(Perm::from_images(prefix).unwrap());
                return;
            }
            for y in 0..n {
                if !used[y] {
                    used[y] = true;
                    prefix.push(y);
                    rec(prefix, used, out);
                    prefix.pop();
                    used[y] = false;
                }
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
        out
    }
}

impl fmt::Debug for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.images())
    }
}

/// A point of the Schreier set `S`: the orbit of the all-zero ray.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct Site(SmallVec<[u8; 24]>);

impl Site {
    /// The all-zero ray `o`.
    pub fn root() -> Self {
        Site(SmallVec::new())
    }

    /// Builds a site from digits `a₁, a₂, …`, validating every digit and
    /// stripping trailing zeros.
    pub fn from_digits(m: &DegreeSequence, digits: &[u8]) -> Result<Self, TreeError> {
        let s = Site(digits.iter().copied().collect()).canonical();
        s.check(m)?;
        Ok(s)
    }

    /// Builds a site without checking digit ranges; trailing zeros are stripped.
    pub fn from_digits_unchecked(digits: &[u8]) -> Self {
        Site(digits.iter().copied().collect()).canonical()
    }

    pub fn check(&self, m: &DegreeSequence) -> Result<(), TreeError> {
        for (i, &a) in self.0.iter().enumerate() {
            let degree = m.degree(i + 1);
            if a as usize >= degree {
                return Err(TreeError::MalformedSite { level: i + 1, digit: a, degree });
            }
        }
        Ok(())
    }

    fn canonical(mut self) -> Self {
        self.canonicalize();
        self
    }

    #[inline]
    fn canonicalize(&mut self) {
        while self.0.last() == Some(&0) {
            self.0.pop();
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.0.last() != Some(&0)
    }

    #[inline]
    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    /// Digits `a₁, a₂, …` up to the last non-zero one.
    #[inline]
    pub fn digits(&self) -> &[u8] {
        &self.0
    }

    /// Digit at level `ℓ ≥ 1`; zero past the stored length.
    #[inline]
    pub fn digit(&self, level: usize) -> u8 {
        self.0.get(level - 1).copied().unwrap_or(0)
    }

    /// Index (0-based) of the highest non-zero digit plus one.
    #[inline]
    pub fn depth(&self) -> usize {
        self.0.len()
    }

    /// 0-based index of the first non-zero digit, if any.
    #[inline]
    pub fn first_nonzero(&self) -> Option<usize> {
        self.0.iter().position(|&a| a != 0)
    }

    /// Sets digit at 0-based index `idx`, extending with zeros as needed,
    /// and restores canonical form.
    #[inline]
    pub(crate) fn set_digit(&mut self, idx: usize, value: u8) {
        if idx >= self.0.len() {
            if value == 0 {
                return;
            }
            self.0.resize(idx + 1, 0);
        }
        self.0[idx] = value;
        self.canonicalize();
    }

    /// Keeps only digits at levels `1..=levels`.
    pub fn truncated(&self, levels: usize) -> Site {
        Site(self.0.iter().take(levels).copied().collect()).canonical()
    }
}

/// Shortlex: shorter digit strings first, then lexicographic on the stored
/// (least-significant first) digits.
impl Ord for Site {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Site {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            write!(f, "o")
        } else {
            write!(f, "{:?}", self.0.as_slice())
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One generator of `M_m`: a root permutation or a power of `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneratorMove {
    Pi(Perm),
    RhoPow(u32),
}

impl GeneratorMove {
    /// `ρ^i` with the exponent reduced modulo `k`.
    pub fn rho(m: &DegreeSequence, i: usize) -> Self {
        GeneratorMove::RhoPow((i % m.k()) as u32)
    }

    pub fn validate(&self, m: &DegreeSequence) -> Result<(), TreeError> {
        match self {
            GeneratorMove::Pi(p) if p.len() != m.degree(1) => {
                Err(TreeError::BadMove(format!("{self:?}")))
            }
            GeneratorMove::RhoPow(i) if *i as usize >= m.k() => {
                Err(TreeError::BadMove(format!("{self:?}")))
            }
            _ => Ok(()),
        }
    }

    /// In-place right action on a canonical, in-range site.
    #[inline]
    pub fn act(&self, m: &DegreeSequence, s: &mut Site) {
        match self {
            GeneratorMove::Pi(p) => {
                let a1 = s.digit(1) as usize;
                s.set_digit(0, p.apply(a1) as u8);
            }
            GeneratorMove::RhoPow(i) => rho_act(m, *i as usize, 0, s),
        }
    }

    pub fn inverse(&self, m: &DegreeSequence) -> Self {
        match self {
            GeneratorMove::Pi(p) => GeneratorMove::Pi(p.inverse()),
            GeneratorMove::RhoPow(i) => {
                let k = m.k();
                GeneratorMove::RhoPow(((k - *i as usize % k) % k) as u32)
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            GeneratorMove::Pi(p) => p.is_identity(),
            GeneratorMove::RhoPow(i) => *i == 0,
        }
    }

    /// Every atom of the step measure with its probability: uniform on `Π`
    /// with weight 1/2, uniform on `H` with weight 1/2.
    pub fn atoms(m: &DegreeSequence) -> Vec<(GeneratorMove, f64)> {
        let perms = Perm::all(m.degree(1));
        let wp = 0.5 / perms.len() as f64;
        let wh = 0.5 / m.k() as f64;
        perms
            .into_iter()
            .map(|p| (GeneratorMove::Pi(p), wp))
            .chain((0..m.k()).map(|i| (GeneratorMove::RhoPow(i as u32), wh)))
            .collect()
    }
}

/// `ρ_{from+1}^i` acting on the digits at 0-based indices `from..`.
#[inline]
pub(crate) fn rho_act(m: &DegreeSequence, i: usize, from: usize, s: &mut Site) {
    if let Some(off) = s.0.iter().skip(from).position(|&a| a != 0) {
        let target = from + off + 1;
        let degree = m.degree(target + 1);
        let shift = i % degree;
        if shift != 0 {
            let cur = s.digit(target + 1) as usize;
            s.set_digit(target, ((cur + shift) % degree) as u8);
        }
    }
}

/// Applies one generator to a site.
pub fn apply_move(m: &DegreeSequence, g: &GeneratorMove, s: &Site) -> Result<Site, TreeError> {
    g.validate(m)?;
    s.check(m)?;
    let mut out = s.clone();
    g.act(m, &mut out);
    Ok(out)
}

pub fn invert_move(m: &DegreeSequence, g: &GeneratorMove) -> GeneratorMove {
    g.inverse(m)
}

/// Draws from the even mixture of the uniform measures on `Π` and `H`.
pub fn sample_move<R: Rng + ?Sized>(m: &DegreeSequence, rng: &mut R) -> GeneratorMove {
    if rng.random::<bool>() {
        GeneratorMove::Pi(Perm::random(m.degree(1), rng))
    } else {
        GeneratorMove::RhoPow(rng.random_range(0..m.k()) as u32)
    }
}

/// Right action of a word: `s.(g₁g₂⋯) = ((s.g₁).g₂)⋯`.
pub fn apply_word(m: &DegreeSequence, word: &[GeneratorMove], s: &Site) -> Result<Site, TreeError> {
    s.check(m)?;
    let mut out = s.clone();
    for g in word {
        g.validate(m)?;
        g.act(m, &mut out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn site(m: &DegreeSequence, d: &[u8]) -> Site {
        Site::from_digits(m, d).unwrap()
    }

    fn cycle3() -> Perm {
        Perm::from_images(&[1, 2, 0]).unwrap()
    }

    #[test]
    fn parse_and_display() {
        let m: DegreeSequence = "2,2,3|repeat".parse().unwrap();
        assert_eq!(m.degree(1), 2);
        assert_eq!(m.degree(3), 3);
        assert_eq!(m.degree(40), 3);
        assert_eq!(m.k(), 6);
        assert_eq!(m.m_star(), 3);
        assert_eq!(m.to_string(), "2,2,3|repeat");

        let p: DegreeSequence = "2,4|periodic".parse().unwrap();
        assert_eq!((1..=6).map(|l| p.degree(l)).collect::<Vec<_>>(), vec![2, 4, 2, 4, 2, 4]);
        assert_eq!(p.k(), 4);

        let q: DegreeSequence = "3,2,5|periodic:2".parse().unwrap();
        assert_eq!((1..=7).map(|l| q.degree(l)).collect::<Vec<_>>(), vec![3, 2, 5, 2, 5, 2, 5]);
        assert_eq!(q.to_string(), "3,2,5|periodic:2");

        assert_eq!("4".parse::<DegreeSequence>().unwrap(), DegreeSequence::constant(4).unwrap());
    }

    #[test]
    fn parse_errors() {
        assert!("".parse::<DegreeSequence>().is_err());
        assert!("2,1".parse::<DegreeSequence>().is_err());
        assert!("2,x".parse::<DegreeSequence>().is_err());
        assert!("2,3|spiral".parse::<DegreeSequence>().is_err());
        assert!("2,3|periodic:3".parse::<DegreeSequence>().is_err());
        assert!("2,3|periodic:0".parse::<DegreeSequence>().is_err());
        assert!("2,3\u{00e9}".parse::<DegreeSequence>().is_err());
    }

    #[test]
    fn k_is_lcm_from_level_two() {
        // m₁ does not enter k
        let m: DegreeSequence = "5,2,2|repeat".parse().unwrap();
        assert_eq!(m.k(), 2);
        // lcm can exceed m*
        let m: DegreeSequence = "2,2,3|repeat".parse().unwrap();
        assert!(m.k() > m.m_star());
        assert_eq!(m.rho_order_at(0), 6);
        assert_eq!(m.rho_order_at(1), 3);
        assert_eq!(m.rho_order_at(10), 3);
    }

    #[test]
    fn rho_example_constant_three() {
        let m = DegreeSequence::constant(3).unwrap();
        assert_eq!(m.k(), 3);
        let s = site(&m, &[1, 0, 2]);
        let out = apply_move(&m, &GeneratorMove::RhoPow(1), &s).unwrap();
        assert_eq!(out.digits(), &[1, 1, 2]);
        let o = apply_move(&m, &GeneratorMove::RhoPow(2), &Site::root()).unwrap();
        assert!(o.is_root());
    }

    #[test]
    fn pi_examples() {
        let m = DegreeSequence::constant(3).unwrap();
        let out = apply_move(&m, &GeneratorMove::Pi(cycle3()), &Site::root()).unwrap();
        assert_eq!(out.digits(), &[1]);

        let m2 = DegreeSequence::constant(2).unwrap();
        let swap = Perm::from_images(&[1, 0]).unwrap();
        let out = apply_move(&m2, &GeneratorMove::Pi(swap), &site(&m2, &[1])).unwrap();
        assert!(out.is_root());
    }

    #[test]
    fn malformed_site_is_rejected() {
        let m = DegreeSequence::constant(2).unwrap();
        let bad = Site::from_digits_unchecked(&[1, 2]);
        assert!(matches!(
            apply_move(&m, &GeneratorMove::RhoPow(1), &bad),
            Err(TreeError::MalformedSite { level: 2, digit: 2, degree: 2 })
        ));
        assert!(Site::from_digits(&m, &[0, 3]).is_err());
    }

    #[test]
    fn bad_moves_are_rejected() {
        let m = DegreeSequence::constant(2).unwrap();
        assert!(apply_move(&m, &GeneratorMove::Pi(cycle3()), &Site::root()).is_err());
        assert!(apply_move(&m, &GeneratorMove::RhoPow(2), &Site::root()).is_err());
    }

    #[test]
    fn inverse_examples() {
        let m = DegreeSequence::constant(3).unwrap();
        assert_eq!(invert_move(&m, &GeneratorMove::RhoPow(1)), GeneratorMove::RhoPow(2));
        assert_eq!(invert_move(&m, &GeneratorMove::RhoPow(0)), GeneratorMove::RhoPow(0));
        let inv = Perm::from_images(&[2, 0, 1]).unwrap();
        assert_eq!(invert_move(&m, &GeneratorMove::Pi(cycle3())), GeneratorMove::Pi(inv));
    }

    #[test]
    fn word_examples() {
        let m = DegreeSequence::constant(2).unwrap();
        let swap = GeneratorMove::Pi(Perm::from_images(&[1, 0]).unwrap());
        let w = [swap, GeneratorMove::RhoPow(1)];
        assert_eq!(apply_word(&m, &w, &Site::root()).unwrap().digits(), &[1, 1]);
        let s = site(&m, &[0, 1, 1]);
        assert_eq!(apply_word(&m, &[], &s).unwrap(), s);
        let g = GeneratorMove::RhoPow(1);
        assert_eq!(apply_word(&m, &[g, g.inverse(&m)], &s).unwrap(), s);
    }

    #[test]
    fn identity_atom_probability_m1_2() {
        let m = DegreeSequence::constant(2).unwrap();
        let atoms = GeneratorMove::atoms(&m);
        assert_eq!(atoms.len(), 4);
        let p_pi_id: f64 = atoms
            .iter()
            .filter(|(g, _)| matches!(g, GeneratorMove::Pi(p) if p.is_identity()))
            .map(|(_, w)| w)
            .sum();
        assert_eq!(p_pi_id, 0.25);
        let total: f64 = atoms.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sampled_moves_fix_root_half_plus() {
        // P(fix o) = 1/2 + 1/(2 m₁)
        let m = DegreeSequence::constant(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 60_000;
        let fixed = (0..trials)
            .filter(|_| {
                let mut s = Site::root();
                sample_move(&m, &mut rng).act(&m, &mut s);
                s.is_root()
            })
            .count();
        let p = fixed as f64 / trials as f64;
        let expect = 0.5 + 0.5 / 3.0;
        let sd = (expect * (1.0 - expect) / trials as f64).sqrt();
        assert!((p - expect).abs() < 4.0 * sd, "{p}");
    }

    #[test]
    fn sampled_law_is_symmetric() {
        let m = DegreeSequence::constant(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = std::collections::HashMap::new();
        let n = 120_000;
        for _ in 0..n {
            *counts.entry(sample_move(&m, &mut rng)).or_insert(0usize) += 1;
        }
        for (g, &c) in &counts {
            let ci = counts.get(&g.inverse(&m)).copied().unwrap_or(0);
            let diff = c as f64 - ci as f64;
            assert!(diff.abs() < 5.0 * ((c + ci) as f64).sqrt(), "{g:?} {c} {ci}");
        }
    }

    fn arb_sequence() -> impl Strategy<Value = DegreeSequence> {
        (prop::collection::vec(2u8..=6, 1..6), any::<bool>()).prop_map(|(prefix, periodic)| {
            let ext = if periodic {
                Extension::Periodic { block: prefix.len() }
            } else {
                Extension::RepeatLast
            };
            DegreeSequence::new(prefix, ext).unwrap()
        })
    }

    fn arb_site(m: &DegreeSequence, seed: u64, depth: usize) -> Site {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d: Vec<u8> =
            (1..=depth).map(|l| rng.random_range(0..m.degree(l)) as u8).collect();
        Site::from_digits(m, &d).unwrap()
    }

    proptest! {
        #[test]
        fn rho_leaves_other_digits(m in arb_sequence(), seed in any::<u64>(), depth in 0usize..12, i in 0usize..60) {
            let s = arb_site(&m, seed, depth);
            let out = apply_move(&m, &GeneratorMove::rho(&m, i), &s).unwrap();
            prop_assert!(out.is_canonical());
            match s.first_nonzero() {
                None => prop_assert!(out.is_root()),
                Some(j) => {
                    for level in 1..=depth + 2 {
                        if level != j + 2 {
                            prop_assert_eq!(out.digit(level), s.digit(level));
                        }
                    }
                }
            }
        }

        #[test]
        fn rho_has_order_k_and_composes(m in arb_sequence(), seed in any::<u64>(), depth in 0usize..=12, i in 0usize..30, j in 0usize..30) {
            let s = arb_site(&m, seed, depth);
            let mut t = s.clone();
            for _ in 0..m.k() {
                GeneratorMove::RhoPow(1).act(&m, &mut t);
            }
            prop_assert_eq!(&t, &s);
            let two = apply_word(&m, &[GeneratorMove::rho(&m, j), GeneratorMove::rho(&m, i)], &s).unwrap();
            let one = apply_move(&m, &GeneratorMove::rho(&m, i + j), &s).unwrap();
            prop_assert_eq!(two, one);
        }

        #[test]
        fn canonical_roundtrip(m in arb_sequence(), seed in any::<u64>(), depth in 0usize..12, zeros in 0usize..4) {
            let s = arb_site(&m, seed, depth);
            let mut padded = s.digits().to_vec();
            padded.extend(std::iter::repeat_n(0, zeros));
            let again = Site::from_digits(&m, &padded).unwrap();
            prop_assert_eq!(&again, &s);
            prop_assert_eq!(again.truncated(64), s);
        }
    }
}
