//! Coordinate-sharing policies: which dual coordinates mix at which step.
//!
//! At step t, coordinate k is averaged with the matrix `P^k(t)`. A policy
//! produces that matrix from one of four schemes:
//!
//! * `Static`: a fixed matrix per coordinate, every step.
//! * `RoundRobin`: coordinates are split into d/m contiguous blocks of size
//!   m; the block active at step t uses the base matrix, the rest identity.
//! * `RandomSubset`: a fresh seeded m-subset of coordinates uses the base
//!   matrix each step. The seed is shared, so every node draws the same
//!   subset without communicating.
//! * `AllToAll`: per step and coordinate, a seeded coin picks the perfect
//!   averager (1/n) 1 1^T with probability rho, else identity.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seeding;
use crate::topology::MixingMatrix;

#[derive(Debug, Clone)]
pub enum SharePolicy {
    Static {
        per_coord: Vec<MixingMatrix>,
    },
    RoundRobin {
        base: MixingMatrix,
        m: usize,
        d: usize,
    },
    RandomSubset {
        base: MixingMatrix,
        m: usize,
        d: usize,
        seed: u64,
    },
    AllToAll {
        n: usize,
        d: usize,
        rho: f64,
        seed: u64,
    },
}

/// Borrowed view of the matrix applied to one coordinate at one step.
/// Lets the simulator skip work for identity and consensus steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixingAtom<'a> {
    Identity,
    Matrix(&'a MixingMatrix),
    Consensus,
}

impl MixingAtom<'_> {
    pub fn to_matrix(&self, n: usize) -> MixingMatrix {
        match self {
            MixingAtom::Identity => MixingMatrix::identity(n),
            MixingAtom::Consensus => MixingMatrix::consensus(n),
            MixingAtom::Matrix(m) => (*m).clone(),
        }
    }
}

impl SharePolicy {
    /// Same matrix for every coordinate, every step.
    pub fn static_uniform(p: MixingMatrix, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("dimension must be positive"));
        }
        Ok(SharePolicy::Static { per_coord: vec![p; d] })
    }

    /// One matrix per coordinate; all must have the same node count.
    pub fn static_per_coordinate(per_coord: Vec<MixingMatrix>) -> Result<Self> {
        if per_coord.is_empty() {
            return Err(Error::config("static policy needs at least one coordinate"));
        }
        let n = per_coord[0].n();
        if per_coord.iter().any(|p| p.n() != n) {
            return Err(Error::config("static policy matrices must share a node count"));
        }
        Ok(SharePolicy::Static { per_coord })
    }

    pub fn round_robin(base: MixingMatrix, m: usize, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("dimension must be positive"));
        }
        if m == 0 || m > d {
            return Err(Error::config(format!("round-robin block size m={m} must lie in 1..=d (d={d})")));
        }
        if d % m != 0 {
            return Err(Error::config(format!("round-robin block size m={m} must divide d={d}")));
        }
        Ok(SharePolicy::RoundRobin { base, m, d })
    }

    /// `m = 0` is allowed and means no coordinate is ever shared.
    pub fn random_subset(base: MixingMatrix, m: usize, d: usize, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("dimension must be positive"));
        }
        if m > d {
            return Err(Error::config(format!("subset size m={m} cannot exceed d={d}")));
        }
        Ok(SharePolicy::RandomSubset { base, m, d, seed })
    }

    pub fn all_to_all(n: usize, d: usize, rho: f64, seed: u64) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::config("dimensions must be positive"));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::config(format!("all-to-all probability rho={rho} must lie in [0, 1]")));
        }
        Ok(SharePolicy::AllToAll { n, d, rho, seed })
    }

    pub fn d(&self) -> usize {
        match self {
            SharePolicy::Static { per_coord } => per_coord.len(),
            SharePolicy::RoundRobin { d, .. }
            | SharePolicy::RandomSubset { d, .. }
            | SharePolicy::AllToAll { d, .. } => *d,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            SharePolicy::Static { per_coord } => per_coord[0].n(),
            SharePolicy::RoundRobin { base, .. } | SharePolicy::RandomSubset { base, .. } => base.n(),
            SharePolicy::AllToAll { n, .. } => *n,
        }
    }

    /// The seeded subset drawn at step t (`RandomSubset` only), sorted.
    pub fn subset_at(&self, t: usize) -> Option<Vec<usize>> {
        match self {
            SharePolicy::RandomSubset { m, d, seed, .. } => {
                let mut rng = seeding::stream_rng(*seed, &[t as u64]);
                let mut idx = rand::seq::index::sample(&mut rng, *d, *m).into_vec();
                idx.sort_unstable();
                Some(idx)
            }
            _ => None,
        }
    }

    /// Matrix view applied to coordinate k at step t.
    pub fn atom_at(&self, t: usize, k: usize) -> Result<MixingAtom<'_>> {
        if k >= self.d() {
            return Err(Error::config(format!("coordinate {k} out of range (d={})", self.d())));
        }
        Ok(match self {
            SharePolicy::Static { per_coord } => MixingAtom::Matrix(&per_coord[k]),
            SharePolicy::RoundRobin { base, m, d } => {
                let blocks = d / m;
                if k / m == t % blocks {
                    MixingAtom::Matrix(base)
                } else {
                    MixingAtom::Identity
                }
            }
            SharePolicy::RandomSubset { base, m, d, seed } => {
                if *m == 0 {
                    MixingAtom::Identity
                } else {
                    let mut rng = seeding::stream_rng(*seed, &[t as u64]);
                    let idx = rand::seq::index::sample(&mut rng, *d, *m);
                    if idx.iter().any(|j| j == k) {
                        MixingAtom::Matrix(base)
                    } else {
                        MixingAtom::Identity
                    }
                }
            }
            SharePolicy::AllToAll { rho, seed, .. } => {
                let coin: f64 = seeding::stream_rng(*seed, &[t as u64, k as u64]).gen();
                if coin < *rho {
                    MixingAtom::Consensus
                } else {
                    MixingAtom::Identity
                }
            }
        })
    }

    /// Dense form of [`SharePolicy::atom_at`].
    pub fn mixing_at(&self, t: usize, k: usize) -> Result<MixingMatrix> {
        Ok(self.atom_at(t, k)?.to_matrix(self.n()))
    }
}

/// E[P^k(t)^2] for the randomized policies:
/// subset: (m/d) P^2 + (1 - m/d) I; all-to-all: rho (1/n) 1 1^T + (1-rho) I.
/// Both schemes treat coordinates symmetrically, so k only gets bounds-checked.
pub fn expected_squared_mixing(policy: &SharePolicy, k: usize) -> Result<Array2<f64>> {
    if k >= policy.d() {
        return Err(Error::config(format!("coordinate {k} out of range (d={})", policy.d())));
    }
    match policy {
        SharePolicy::RandomSubset { base, m, d, .. } => {
            let q = *m as f64 / *d as f64;
            let p2 = base.matrix().dot(base.matrix());
            let n = base.n();
            let mut e = p2.mapv(|v| q * v);
            for i in 0..n {
                e[(i, i)] += 1.0 - q;
            }
            Ok(e)
        }
        SharePolicy::AllToAll { n, rho, .. } => {
            let mut e = Array2::from_elem((*n, *n), rho / *n as f64);
            for i in 0..*n {
                e[(i, i)] += 1.0 - rho;
            }
            Ok(e)
        }
        _ => Err(Error::config(
            "expected squared mixing is only defined for randomized policies",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{self, second_singular_value};
    use approx::assert_abs_diff_eq;

    fn ring_mixing(n: usize) -> MixingMatrix {
        topology::mixing_from_adjacency(topology::make_ring(n, 1).unwrap().adjacency()).unwrap()
    }

    #[test]
    fn static_policy_returns_base_everywhere() {
        let p = ring_mixing(5);
        let pol = SharePolicy::static_uniform(p.clone(), 3).unwrap();
        for (t, k) in [(0, 0), (1, 2), (17, 1), (999, 0)] {
            assert_eq!(pol.mixing_at(t, k).unwrap(), p);
        }
        assert!(pol.mixing_at(0, 3).is_err());
    }

    #[test]
    fn round_robin_blocks_rotate() {
        let p = ring_mixing(4);
        let pol = SharePolicy::round_robin(p.clone(), 2, 4).unwrap();
        // t on an even step: block {0,1} active; odd: block {2,3}.
        for t in 0..6 {
            for k in 0..4 {
                let active = matches!(pol.atom_at(t, k).unwrap(), MixingAtom::Matrix(_));
                let expect = (k / 2) == (t % 2);
                assert_eq!(active, expect, "t={t} k={k}");
            }
        }
    }

    #[test]
    fn round_robin_covers_each_coordinate_once_per_window() {
        let p = ring_mixing(4);
        let pol = SharePolicy::round_robin(p, 3, 12).unwrap();
        let blocks = 12 / 3;
        for start in [0usize, 4, 7] {
            let mut count = vec![0usize; 12];
            for t in start..start + blocks {
                for (k, c) in count.iter_mut().enumerate() {
                    if matches!(pol.atom_at(t, k).unwrap(), MixingAtom::Matrix(_)) {
                        *c += 1;
                    }
                }
            }
            assert!(count.iter().all(|&c| c == 1), "window at {start}: {count:?}");
        }
    }

    #[test]
    fn round_robin_rejects_non_divisor_block() {
        let p = ring_mixing(4);
        let err = SharePolicy::round_robin(p.clone(), 7, 30).unwrap_err();
        assert!(err.to_string().contains("divide"), "{err}");
        assert!(SharePolicy::round_robin(p.clone(), 0, 30).is_err());
        assert!(SharePolicy::round_robin(p, 31, 30).is_err());
    }

    #[test]
    fn full_block_round_robin_is_always_active() {
        let p = ring_mixing(4);
        let pol = SharePolicy::round_robin(p.clone(), 6, 6).unwrap();
        for t in 0..5 {
            for k in 0..6 {
                assert_eq!(pol.mixing_at(t, k).unwrap(), p);
            }
        }
    }

    #[test]
    fn subset_draws_are_shared_and_deterministic() {
        let p = ring_mixing(5);
        let a = SharePolicy::random_subset(p.clone(), 4, 10, 99).unwrap();
        let b = SharePolicy::random_subset(p, 4, 10, 99).unwrap();
        for t in 0..30 {
            assert_eq!(a.subset_at(t).unwrap(), b.subset_at(t).unwrap());
            assert_eq!(a.subset_at(t).unwrap().len(), 4);
            // atom_at agrees with the subset listing.
            let s = a.subset_at(t).unwrap();
            for k in 0..10 {
                let active = matches!(a.atom_at(t, k).unwrap(), MixingAtom::Matrix(_));
                assert_eq!(active, s.contains(&k));
            }
        }
        // Subsets vary over time.
        let distinct: std::collections::BTreeSet<Vec<usize>> =
            (0..30).map(|t| a.subset_at(t).unwrap()).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn empty_subset_never_shares() {
        let p = ring_mixing(5);
        let pol = SharePolicy::random_subset(p, 0, 6, 7).unwrap();
        for t in 0..10 {
            for k in 0..6 {
                assert_eq!(pol.atom_at(t, k).unwrap(), MixingAtom::Identity);
            }
        }
    }

    #[test]
    fn all_to_all_extreme_probabilities() {
        let always = SharePolicy::all_to_all(6, 4, 1.0, 5).unwrap();
        let never = SharePolicy::all_to_all(6, 4, 0.0, 5).unwrap();
        for t in 0..8 {
            for k in 0..4 {
                assert_eq!(always.atom_at(t, k).unwrap(), MixingAtom::Consensus);
                assert_eq!(never.atom_at(t, k).unwrap(), MixingAtom::Identity);
            }
        }
        assert!(SharePolicy::all_to_all(6, 4, 1.2, 5).is_err());
    }

    #[test]
    fn all_to_all_coin_frequency_matches_rho() {
        let pol = SharePolicy::all_to_all(4, 8, 0.3, 123).unwrap();
        let mut hits = 0usize;
        let total = 8 * 2000;
        for t in 0..2000 {
            for k in 0..8 {
                if pol.atom_at(t, k).unwrap() == MixingAtom::Consensus {
                    hits += 1;
                }
            }
        }
        let freq = hits as f64 / total as f64;
        assert!((freq - 0.3).abs() < 0.02, "frequency {freq}");
    }

    #[test]
    fn produced_matrices_are_doubly_stochastic() {
        let p = ring_mixing(5);
        let policies = vec![
            SharePolicy::static_uniform(p.clone(), 4).unwrap(),
            SharePolicy::round_robin(p.clone(), 2, 4).unwrap(),
            SharePolicy::random_subset(p.clone(), 2, 4, 3).unwrap(),
            SharePolicy::all_to_all(5, 4, 0.5, 3).unwrap(),
        ];
        for pol in &policies {
            for t in 0..6 {
                for k in 0..4 {
                    let m = pol.mixing_at(t, k).unwrap();
                    // from_matrix re-validates double stochasticity.
                    assert!(MixingMatrix::from_matrix(m.matrix().clone()).is_ok());
                }
            }
        }
    }

    #[test]
    fn expected_squared_all_to_all_formula() {
        let pol = SharePolicy::all_to_all(5, 3, 0.4, 1).unwrap();
        let e = expected_squared_mixing(&pol, 0).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = 0.4 / 5.0 + if i == j { 0.6 } else { 0.0 };
                assert_abs_diff_eq!(e[(i, j)], want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn expected_squared_subset_formula() {
        let p = ring_mixing(4);
        let pol = SharePolicy::random_subset(p.clone(), 2, 4, 1).unwrap();
        let e = expected_squared_mixing(&pol, 1).unwrap();
        let p2 = p.matrix().dot(p.matrix());
        for i in 0..4 {
            for j in 0..4 {
                let want = 0.5 * p2[(i, j)] + if i == j { 0.5 } else { 0.0 };
                assert_abs_diff_eq!(e[(i, j)], want, epsilon = 1e-15);
            }
        }
        // Expected matrix is itself doubly stochastic.
        assert!(MixingMatrix::from_matrix(e).is_ok());
    }

    #[test]
    fn expected_squared_rejects_deterministic_policies() {
        let p = ring_mixing(4);
        assert!(expected_squared_mixing(&SharePolicy::static_uniform(p.clone(), 4).unwrap(), 0).is_err());
        assert!(expected_squared_mixing(&SharePolicy::round_robin(p, 2, 4).unwrap(), 0).is_err());
    }

    #[test]
    fn expected_mixing_strengthens_with_rho_and_subset_size() {
        let sigma_a2a = |rho: f64| {
            let pol = SharePolicy::all_to_all(6, 4, rho, 1).unwrap();
            let e = MixingMatrix::from_matrix(expected_squared_mixing(&pol, 0).unwrap()).unwrap();
            second_singular_value(&e).unwrap()
        };
        assert!(sigma_a2a(0.9) < sigma_a2a(0.5));
        assert!(sigma_a2a(0.5) < sigma_a2a(0.2));

        let p = ring_mixing(6);
        let sigma_sub = |m: usize| {
            let pol = SharePolicy::random_subset(p.clone(), m, 8, 1).unwrap();
            let e = MixingMatrix::from_matrix(expected_squared_mixing(&pol, 0).unwrap()).unwrap();
            second_singular_value(&e).unwrap()
        };
        assert!(sigma_sub(8) < sigma_sub(4));
        assert!(sigma_sub(4) < sigma_sub(1));
    }
}
