//! Sparse section trees for elements of the piecewise mother group.
//!
//! An automorphism is stored by its local permutations on a finite trie;
//! every subtree hanging off the trie is either the identity or a power of
//! the shifted `ρ`. The representation supports left multiplication by a
//! generator in `O(depth · m*²)` and evaluation on a site in `O(depth)`,
//! which is what the switch-walk-switch walk needs to track `Y_n⁻¹`
//! without replaying the whole move log.
//!
//! Every touched node is collapsed back to a leaf when it equals one, so
//! the representation of a given element is canonical.

use smallvec::SmallVec;

use crate::tree::{rho_act, DegreeSequence, GeneratorMove, Perm, Site};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Id,
    /// `ρ^c` of the subtree rooted here.
    Rho(u32),
    Node(u32),
}

#[derive(Debug, Clone)]
struct Node {
    perm: Perm,
    children: SmallVec<[Section; 6]>,
}

/// Element of `M_m` as a sparse tree of sections.
#[derive(Debug, Clone)]
pub struct Portrait {
    m: DegreeSequence,
    root: Section,
    nodes: Vec<Node>,
    free: Vec<u32>,
}

impl Portrait {
    pub fn identity(m: &DegreeSequence) -> Self {
        Portrait { m: m.clone(), root: Section::Id, nodes: Vec::new(), free: Vec::new() }
    }

    pub fn degree_sequence(&self) -> &DegreeSequence {
        &self.m
    }

    pub fn is_identity(&self) -> bool {
        self.root == Section::Id
    }

    /// Number of explicit nodes currently in use.
    pub fn live_nodes(&self) -> usize {
        self.nodes.len() - self.free.len()
    }

    /// Replaces `self` by `g · self`.
    pub fn left_mul(&mut self, g: &GeneratorMove) {
        match g {
            GeneratorMove::Pi(p) => {
                if !p.is_identity() {
                    self.root = self.left_perm(self.root, 0, p);
                }
            }
            GeneratorMove::RhoPow(i) => {
                if *i != 0 {
                    self.root = self.left_rho(self.root, 0, *i as usize);
                }
            }
        }
    }

    /// Right action `s.self`.
    pub fn act(&self, s: &Site) -> Site {
        let mut out = s.clone();
        let mut sec = self.root;
        let mut depth = 0;
        loop {
            match sec {
                Section::Id => break,
                Section::Rho(c) => {
                    rho_act(&self.m, c as usize, depth, &mut out);
                    break;
                }
                Section::Node(ix) => {
                    let node = &self.nodes[ix as usize];
                    let a = s.digit(depth + 1) as usize;
                    out.set_digit(depth, node.perm.apply(a) as u8);
                    sec = node.children[a];
                    depth += 1;
                }
            }
        }
        out
    }

    /// Image of the all-zero ray, `o.self`.
    pub fn root_image(&self) -> Site {
        let mut digits: SmallVec<[u8; 24]> = SmallVec::new();
        let mut sec = self.root;
        while let Section::Node(ix) = sec {
            let node = &self.nodes[ix as usize];
            digits.push(node.perm.apply(0) as u8);
            sec = node.children[0];
        }
        // Id and ρ^c both fix the zero tail.
        Site::from_digits_unchecked(&digits)
    }

    fn alloc(&mut self, node: Node) -> u32 {
        match self.free.pop() {
            Some(ix) => {
                self.nodes[ix as usize] = node;
                ix
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        }
    }

    fn release(&mut self, ix: u32) {
        self.free.push(ix);
    }

    fn rho_leaf(&self, depth: usize, c: usize) -> Section {
        let c = c % self.m.rho_order_at(depth);
        if c == 0 {
            Section::Id
        } else {
            Section::Rho(c as u32)
        }
    }

    /// Section acting as the rotation by `c` on digit `depth + 1` only.
    fn tau_section(&mut self, depth: usize, c: usize) -> Section {
        let d = self.m.degree(depth + 1);
        if c.is_multiple_of(d) {
            return Section::Id;
        }
        let node = Node {
            perm: Perm::rotation(d, c % d),
            children: SmallVec::from_elem(Section::Id, d),
        };
        Section::Node(self.alloc(node))
    }

    fn expand(&mut self, sec: Section, depth: usize) -> u32 {
        let d = self.m.degree(depth + 1);
        match sec {
            Section::Node(ix) => ix,
            Section::Id => self.alloc(Node {
                perm: Perm::identity(d),
                children: SmallVec::from_elem(Section::Id, d),
            }),
            Section::Rho(c) => {
                let mut children = SmallVec::with_capacity(d);
                children.push(self.rho_leaf(depth + 1, c as usize));
                for _ in 1..d {
                    let t = self.tau_section(depth + 1, c as usize);
                    children.push(t);
                }
                self.alloc(Node { perm: Perm::identity(d), children })
            }
        }
    }

    /// `π · sec` where `π` permutes digit `depth + 1` at this vertex.
    fn left_perm(&mut self, sec: Section, depth: usize, p: &Perm) -> Section {
        let ix = self.expand(sec, depth);
        let node = &mut self.nodes[ix as usize];
        node.perm = p.then(&node.perm);
        let old = node.children.clone();
        for (x, child) in node.children.iter_mut().enumerate() {
            *child = old[p.apply(x)];
        }
        self.collapse(ix, depth)
    }

    /// `ρ^i · sec` where `sec` sits on the zero spine at `depth`.
    fn left_rho(&mut self, sec: Section, depth: usize, i: usize) -> Section {
        match sec {
            Section::Id => self.rho_leaf(depth, i),
            Section::Rho(c) => self.rho_leaf(depth, c as usize + i),
            Section::Node(ix) => {
                let d = self.m.degree(depth + 1);
                let d_next = self.m.degree(depth + 2);
                if !i.is_multiple_of(d_next) {
                    let rot = Perm::rotation(d_next, i % d_next);
                    for a in 1..d {
                        let child = self.nodes[ix as usize].children[a];
                        let updated = self.left_perm(child, depth + 1, &rot);
                        self.nodes[ix as usize].children[a] = updated;
                    }
                }
                let spine = self.nodes[ix as usize].children[0];
                let updated = self.left_rho(spine, depth + 1, i);
                self.nodes[ix as usize].children[0] = updated;
                self.collapse(ix, depth)
            }
        }
    }

    /// Turns node `ix` back into a leaf if it equals the identity or a
    /// power of `ρ`. Assumes its children are already canonical.
    fn collapse(&mut self, ix: u32, depth: usize) -> Section {
        let node = &self.nodes[ix as usize];
        if !node.perm.is_identity() {
            return Section::Node(ix);
        }
        if node.children.iter().all(|c| *c == Section::Id) {
            self.release(ix);
            return Section::Id;
        }
        let spine = match node.children[0] {
            Section::Id => 0,
            Section::Rho(c) => c as usize,
            Section::Node(_) => return Section::Node(ix),
        };
        // every off-spine child must be the same rotation of digit depth+2
        let d_next = self.m.degree(depth + 2);
        let mut shift = None;
        for child in &node.children[1..] {
            let s = match child {
                Section::Id => 0,
                Section::Rho(_) => return Section::Node(ix),
                Section::Node(j) => {
                    let n = &self.nodes[*j as usize];
                    if n.children.iter().any(|c| *c != Section::Id) {
                        return Section::Node(ix);
                    }
                    let s = n.perm.apply(0);
                    if n.perm != Perm::rotation(d_next, s) {
                        return Section::Node(ix);
                    }
                    s
                }
            };
            match shift {
                None => shift = Some(s),
                Some(prev) if prev != s => return Section::Node(ix),
                _ => {}
            }
        }
        let shift = shift.unwrap_or(0);
        let inner = self.m.rho_order_at(depth + 1);
        let order = self.m.rho_order_at(depth);
        let Some(c) = (spine..order).step_by(inner).find(|c| c % d_next == shift) else {
            return Section::Node(ix);
        };
        let off_spine: Vec<Section> = self.nodes[ix as usize].children[1..].to_vec();
        for child in off_spine {
            if let Section::Node(j) = child {
                self.release(j);
            }
        }
        self.release(ix);
        self.rho_leaf(depth, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{apply_word, sample_move};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_site(m: &DegreeSequence, rng: &mut ChaCha8Rng, depth: usize) -> Site {
        let d: Vec<u8> = (1..=depth).map(|l| rng.random_range(0..m.degree(l)) as u8).collect();
        Site::from_digits(m, &d).unwrap()
    }

    fn check_against_words(m: &DegreeSequence, seed: u64, len: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut portrait = Portrait::identity(m);
        let mut word = Vec::new();
        for step in 0..len {
            let g = sample_move(m, &mut rng);
            portrait.left_mul(&g);
            word.insert(0, g);
            if step % 7 == 0 {
                for _ in 0..5 {
                    let depth = rng.random_range(0..10);
                    let s = random_site(m, &mut rng, depth);
                    assert_eq!(portrait.act(&s), apply_word(m, &word, &s).unwrap());
                }
                let o = apply_word(m, &word, &Site::root()).unwrap();
                assert_eq!(portrait.root_image(), o);
            }
        }
    }

    #[test]
    fn matches_word_evaluation_constant_degrees() {
        for d in 2..=5 {
            let m = DegreeSequence::constant(d).unwrap();
            check_against_words(&m, d as u64, 400);
        }
    }

    #[test]
    fn matches_word_evaluation_mixed_degrees() {
        for (i, spec) in ["2,3|repeat", "2,4|periodic", "3,2,2,5|periodic:2", "4,2,3,2|repeat"]
            .iter()
            .enumerate()
        {
            let m: DegreeSequence = spec.parse().unwrap();
            check_against_words(&m, 100 + i as u64, 400);
        }
    }

    #[test]
    fn inverse_word_returns_to_identity() {
        let m: DegreeSequence = "2,3,2|periodic".parse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let word: Vec<_> = (0..200).map(|_| sample_move(&m, &mut rng)).collect();
        let mut p = Portrait::identity(&m);
        for g in &word {
            p.left_mul(g);
        }
        // word applied on the left in order gives g_n⋯g_1; undo with g_n⁻¹ first
        for g in word.iter().rev() {
            p.left_mul(&g.inverse(&m));
        }
        assert!(p.is_identity());
        assert_eq!(p.live_nodes(), 0);
    }

    #[test]
    fn rho_powers_stay_leaves() {
        let m = DegreeSequence::constant(3).unwrap();
        let mut p = Portrait::identity(&m);
        for _ in 0..3 {
            p.left_mul(&GeneratorMove::RhoPow(1));
            assert_eq!(p.live_nodes(), 0);
        }
        assert!(p.is_identity());
    }

    #[test]
    fn node_count_stays_moderate() {
        let m = DegreeSequence::constant(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = Portrait::identity(&m);
        for _ in 0..50_000 {
            p.left_mul(&sample_move(&m, &mut rng));
        }
        assert!(p.live_nodes() < 50_000, "{}", p.live_nodes());
    }
}
