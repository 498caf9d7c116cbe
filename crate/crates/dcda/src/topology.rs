//! Communication graphs and doubly stochastic mixing matrices.
//!
//! A mixing matrix is built from an adjacency matrix A via the lazy
//! Laplacian construction
//!
//! ```text
//!   P = I - (D - A) / (max_i D_ii + 1),     D = diag(A 1)
//! ```
//!
//! which is symmetric, doubly stochastic, and has a strictly positive
//! diagonal. Its second singular value controls how fast repeated mixing
//! forgets initial conditions; [`second_singular_value`] estimates it by
//! power iteration with the known leading pair (value 1, vector 1/sqrt(n))
//! deflated out.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seeding;

// ---------- Graphs ----------

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    adj: Array2<f64>,
}

impl Graph {
    /// Wrap a raw adjacency matrix: square, symmetric, 0/1 entries, zero
    /// diagonal.
    pub fn from_adjacency(adj: Array2<f64>) -> Result<Self> {
        let n = adj.nrows();
        if adj.ncols() != n {
            return Err(Error::config("adjacency matrix must be square"));
        }
        for i in 0..n {
            if adj[(i, i)] != 0.0 {
                return Err(Error::config(format!("adjacency diagonal must be zero (node {i})")));
            }
            for j in 0..n {
                let a = adj[(i, j)];
                if a != 0.0 && a != 1.0 {
                    return Err(Error::config(format!(
                        "adjacency entries must be 0 or 1, got {a} at ({i},{j})"
                    )));
                }
                if a != adj[(j, i)] {
                    return Err(Error::config(format!("adjacency must be symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Graph { n, adj })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn adjacency(&self) -> &Array2<f64> {
        &self.adj
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj.row(i).sum() as usize
    }

    pub fn is_connected(&self) -> bool {
        connected(&self.adj)
    }
}

/// Breadth-first reachability from node 0.
pub fn connected(adj: &Array2<f64>) -> bool {
    let n = adj.nrows();
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut queue = vec![0usize];
    seen[0] = true;
    while let Some(i) = queue.pop() {
        for j in 0..n {
            if adj[(i, j)] != 0.0 && !seen[j] {
                seen[j] = true;
                queue.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Complete graph on n >= 2 nodes.
pub fn make_full(n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::config(format!("full graph needs at least 2 nodes, got {n}")));
    }
    let adj = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { 1.0 });
    Graph::from_adjacency(adj)
}

/// Circulant ring: nodes i, j are adjacent when their circular distance is
/// at most l. `l >= n/2` yields the complete graph.
pub fn make_ring(n: usize, l: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::config(format!("ring needs at least 2 nodes, got {n}")));
    }
    if l < 1 {
        return Err(Error::config("ring connectivity l must be at least 1"));
    }
    let adj = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            return 0.0;
        }
        let diff = i.abs_diff(j);
        let dist = diff.min(n - diff);
        if dist <= l {
            1.0
        } else {
            0.0
        }
    });
    Graph::from_adjacency(adj)
}

const RANDOM_GRAPH_ATTEMPT_CAP: usize = 100_000;

/// Erdos-Renyi style draw: each pair is an edge independently with
/// probability p; resamples until connected (bounded number of attempts).
pub fn make_random(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(Error::config(format!("random graph needs at least 2 nodes, got {n}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::config(format!("edge probability must lie in (0, 1], got {p}")));
    }
    for attempt in 0..RANDOM_GRAPH_ATTEMPT_CAP {
        let mut rng = seeding::stream_rng(seed, &[attempt as u64]);
        let mut adj = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < p {
                    adj[(i, j)] = 1.0;
                    adj[(j, i)] = 1.0;
                }
            }
        }
        if connected(&adj) {
            return Graph::from_adjacency(adj);
        }
    }
    Err(Error::numerical(format!(
        "no connected graph with n={n}, p={p} after {RANDOM_GRAPH_ATTEMPT_CAP} attempts"
    )))
}

// ---------- Mixing matrices ----------

pub const DOUBLY_STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    p: Array2<f64>,
}

impl MixingMatrix {
    /// Validate and wrap a doubly stochastic matrix with nonnegative
    /// entries (row and column sums 1 within 1e-12).
    pub fn from_matrix(p: Array2<f64>) -> Result<Self> {
        let n = p.nrows();
        if p.ncols() != n || n == 0 {
            return Err(Error::config("mixing matrix must be square and non-empty"));
        }
        for i in 0..n {
            let mut row = 0.0;
            let mut col = 0.0;
            for j in 0..n {
                if p[(i, j)] < -DOUBLY_STOCHASTIC_TOL {
                    return Err(Error::config(format!(
                        "mixing entry ({i},{j}) is negative: {}",
                        p[(i, j)]
                    )));
                }
                row += p[(i, j)];
                col += p[(j, i)];
            }
            if (row - 1.0).abs() > DOUBLY_STOCHASTIC_TOL || (col - 1.0).abs() > DOUBLY_STOCHASTIC_TOL {
                return Err(Error::config(format!(
                    "mixing matrix not doubly stochastic at index {i} (row sum {row}, col sum {col})"
                )));
            }
        }
        Ok(MixingMatrix { p })
    }

    pub fn identity(n: usize) -> Self {
        MixingMatrix { p: Array2::eye(n) }
    }

    /// The perfect averager (1/n) 1 1^T.
    pub fn consensus(n: usize) -> Self {
        MixingMatrix { p: Array2::from_elem((n, n), 1.0 / n as f64) }
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.p
    }
}

/// Lazy-Laplacian doubly stochastic mixing from an adjacency matrix (either
/// a graph's adjacency or a masked copy of it; isolated nodes get identity
/// rows).
pub fn mixing_from_adjacency(adj: &Array2<f64>) -> Result<MixingMatrix> {
    let g = Graph::from_adjacency(adj.clone())?;
    let n = g.n();
    let degrees: Vec<f64> = (0..n).map(|i| adj.row(i).sum()).collect();
    let divisor = degrees.iter().fold(0.0_f64, |m, &d| m.max(d)) + 1.0;
    let p = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            1.0 - degrees[i] / divisor
        } else {
            adj[(i, j)] / divisor
        }
    });
    MixingMatrix::from_matrix(p)
}

// ---------- Second singular value ----------

const POWER_ITER_TOL: f64 = 1e-10;
const POWER_ITER_CAP: usize = 100_000;

/// Largest singular value of P restricted to the subspace orthogonal to the
/// all-ones vector, via power iteration on P^T P with deflation.
pub fn second_singular_value(p: &MixingMatrix) -> Result<f64> {
    let n = p.n();
    if n == 1 {
        // A 1x1 doubly stochastic matrix is [1]; there is no second
        // direction, and consensus is immediate.
        return Ok(0.0);
    }
    let m = p.matrix();

    let deflate = |v: &mut Array1<f64>| {
        let mean = v.sum() / n as f64;
        v.mapv_inplace(|a| a - mean);
    };

    // Deterministic seeded start so results are reproducible.
    let mut rng = seeding::stream_rng(0x5ec0_17d5, &[n as u64]);
    let mut v: Array1<f64> = Array1::from_shape_fn(n, |_| rng.gen::<f64>() - 0.5);
    deflate(&mut v);
    let nrm = v.dot(&v).sqrt();
    if nrm == 0.0 {
        return Err(Error::numerical("degenerate start vector in power iteration"));
    }
    v.mapv_inplace(|a| a / nrm);

    for _ in 0..POWER_ITER_CAP {
        let mut w = m.t().dot(&m.dot(&v));
        deflate(&mut w);
        let lambda = v.dot(&w); // Rayleigh quotient for sigma_2^2
        // Residual ||A v - lambda v|| with A the deflated P^T P.
        let mut res = 0.0_f64;
        for (wi, vi) in w.iter().zip(v.iter()) {
            res += (wi - lambda * vi) * (wi - lambda * vi);
        }
        if res.sqrt() <= POWER_ITER_TOL {
            return Ok(lambda.max(0.0).sqrt());
        }
        let wn = w.dot(&w).sqrt();
        if wn <= 1e-300 {
            // The deflated operator annihilates v: spectrum is {0}.
            return Ok(0.0);
        }
        v = w.mapv(|a| a / wn);
    }
    Err(Error::numerical(format!(
        "power iteration for the second singular value did not reach residual {POWER_ITER_TOL} in {POWER_ITER_CAP} iterations (n={n})"
    )))
}

// ---------- Products ----------

/// Forward product Phi(t, s) = P(t) P(t-1) ... P(s) of a stored sequence,
/// where `seq[r]` is the matrix applied at step r. Requires s <= t < seq.len().
pub fn mixing_product(seq: &[MixingMatrix], t: usize, s: usize) -> Result<Array2<f64>> {
    if s > t {
        return Err(Error::config(format!("mixing_product needs s <= t, got s={s}, t={t}")));
    }
    if t >= seq.len() {
        return Err(Error::config(format!(
            "mixing_product index t={t} out of range (sequence has {} matrices)",
            seq.len()
        )));
    }
    let n = seq[s].n();
    for m in &seq[s..=t] {
        if m.n() != n {
            return Err(Error::config("mixing_product sequence has mismatched sizes"));
        }
    }
    let mut phi = seq[s].matrix().clone();
    for r in (s + 1)..=t {
        phi = seq[r].matrix().dot(&phi);
    }
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn check_doubly_stochastic(p: &Array2<f64>, tol: f64) {
        let n = p.nrows();
        for i in 0..n {
            assert_abs_diff_eq!(p.row(i).sum(), 1.0, epsilon = tol);
            assert_abs_diff_eq!(p.column(i).sum(), 1.0, epsilon = tol);
            for j in 0..n {
                assert!(p[(i, j)] >= -tol);
            }
        }
    }

    #[test]
    fn full_graph_shape_and_degrees() {
        let g = make_full(5).unwrap();
        assert_eq!(g.n(), 5);
        for i in 0..5 {
            assert_eq!(g.degree(i), 4);
        }
        assert!(g.is_connected());
        assert!(make_full(1).is_err());
    }

    #[test]
    fn ring_degrees_and_edges() {
        let g = make_ring(6, 1).unwrap();
        for i in 0..6 {
            assert_eq!(g.degree(i), 2);
        }
        // Wide enough l gives the complete graph.
        let g2 = make_ring(4, 2).unwrap();
        assert_eq!(g2, make_full(4).unwrap());
        assert!(make_ring(6, 0).is_err());
    }

    #[test]
    fn random_graph_is_deterministic_and_connected() {
        let a = make_random(8, 0.3, 11).unwrap();
        let b = make_random(8, 0.3, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.is_connected());
        let c = make_random(8, 0.3, 12).unwrap();
        assert_ne!(a, c);
        // p = 1 gives the complete graph on the first attempt.
        assert_eq!(make_random(5, 1.0, 3).unwrap(), make_full(5).unwrap());
        assert!(make_random(5, 0.0, 3).is_err());
        assert!(make_random(5, 1.5, 3).is_err());
    }

    #[test]
    fn adjacency_validation_rejects_bad_input() {
        assert!(Graph::from_adjacency(array![[0.0, 1.0], [0.0, 0.0]]).is_err()); // asymmetric
        assert!(Graph::from_adjacency(array![[1.0, 1.0], [1.0, 0.0]]).is_err()); // diagonal
        assert!(Graph::from_adjacency(array![[0.0, 0.5], [0.5, 0.0]]).is_err()); // non-binary
    }

    #[test]
    fn full_graph_mixing_is_consensus() {
        let g = make_full(3).unwrap();
        let p = mixing_from_adjacency(g.adjacency()).unwrap();
        for v in p.matrix().iter() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn ring4_mixing_matches_hand_computation() {
        // Degrees are 2, divisor is 3: diagonal 1/3, neighbors 1/3, opposite 0.
        let g = make_ring(4, 1).unwrap();
        let p = mixing_from_adjacency(g.adjacency()).unwrap();
        let m = p.matrix();
        for i in 0..4 {
            assert_abs_diff_eq!(m[(i, i)], 1.0 / 3.0, epsilon = 1e-15);
            assert_abs_diff_eq!(m[(i, (i + 1) % 4)], 1.0 / 3.0, epsilon = 1e-15);
            assert_abs_diff_eq!(m[(i, (i + 2) % 4)], 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn isolated_nodes_get_identity_rows() {
        // Two nodes joined by an edge plus an isolated third node.
        let adj = array![[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let p = mixing_from_adjacency(&adj).unwrap();
        let m = p.matrix();
        assert_abs_diff_eq!(m[(2, 2)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(2, 0)], 0.0);
        assert_abs_diff_eq!(m[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(0, 1)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn empty_adjacency_yields_identity() {
        let adj = Array2::zeros((4, 4));
        let p = mixing_from_adjacency(&adj).unwrap();
        assert_eq!(p.matrix(), MixingMatrix::identity(4).matrix());
    }

    #[test]
    fn mixing_matrices_are_doubly_stochastic_with_positive_diagonal() {
        for seed in 0..25u64 {
            let g = make_random(4 + (seed as usize % 7), 0.4, seed).unwrap();
            let p = mixing_from_adjacency(g.adjacency()).unwrap();
            check_doubly_stochastic(p.matrix(), 1e-12);
            for i in 0..p.n() {
                assert!(p.matrix()[(i, i)] > 0.0, "diagonal must stay positive");
            }
            // Symmetric adjacency gives a symmetric mixing matrix.
            for i in 0..p.n() {
                for j in 0..p.n() {
                    assert_abs_diff_eq!(p.matrix()[(i, j)], p.matrix()[(j, i)]);
                }
            }
        }
    }

    #[test]
    fn mixing_validation_rejects_non_stochastic() {
        assert!(MixingMatrix::from_matrix(array![[0.5, 0.6], [0.5, 0.4]]).is_err());
        assert!(MixingMatrix::from_matrix(array![[1.5, -0.5], [-0.5, 1.5]]).is_err());
    }

    #[test]
    fn sigma2_of_consensus_is_zero() {
        let s = second_singular_value(&MixingMatrix::consensus(6)).unwrap();
        assert!(s <= 1e-8, "sigma2 of the perfect averager should vanish, got {s}");
    }

    #[test]
    fn sigma2_of_identity_is_one() {
        let s = second_singular_value(&MixingMatrix::identity(5)).unwrap();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn sigma2_of_ring4_is_one_third() {
        let g = make_ring(4, 1).unwrap();
        let p = mixing_from_adjacency(g.adjacency()).unwrap();
        let s = second_singular_value(&p).unwrap();
        assert_abs_diff_eq!(s, 1.0 / 3.0, epsilon = 1e-8);
    }

    #[test]
    fn sigma2_below_one_for_connected_graphs() {
        for seed in 0..15u64 {
            let g = make_random(5 + (seed as usize % 6), 0.5, 100 + seed).unwrap();
            let p = mixing_from_adjacency(g.adjacency()).unwrap();
            let s = second_singular_value(&p).unwrap();
            assert!(s < 1.0 - 1e-8, "connected graph must mix: sigma2 = {s}");
        }
    }

    #[test]
    fn sigma2_one_for_disconnected_mixing() {
        // Two disjoint edges: the indicator difference of the components is
        // invariant, so the deflated spectrum still contains 1.
        let adj = array![
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0]
        ];
        let p = mixing_from_adjacency(&adj).unwrap();
        let s = second_singular_value(&p).unwrap();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn product_with_equal_indices_is_single_matrix() {
        let g = make_ring(5, 1).unwrap();
        let p = mixing_from_adjacency(g.adjacency()).unwrap();
        let seq = vec![MixingMatrix::identity(5), p.clone(), MixingMatrix::identity(5)];
        let phi = mixing_product(&seq, 1, 1).unwrap();
        assert_eq!(&phi, p.matrix());
    }

    #[test]
    fn product_of_identities_is_identity() {
        let seq = vec![MixingMatrix::identity(3); 4];
        let phi = mixing_product(&seq, 3, 0).unwrap();
        assert_eq!(phi, Array2::eye(3));
    }

    #[test]
    fn product_rejects_bad_indices() {
        let seq = vec![MixingMatrix::identity(3); 2];
        assert!(mixing_product(&seq, 0, 1).is_err());
        assert!(mixing_product(&seq, 5, 0).is_err());
    }

    #[test]
    fn products_stay_doubly_stochastic() {
        let g = make_random(6, 0.5, 42).unwrap();
        let p = mixing_from_adjacency(g.adjacency()).unwrap();
        let seq = vec![p; 12];
        let phi = mixing_product(&seq, 11, 0).unwrap();
        check_doubly_stochastic(&phi, 1e-12);
    }

    #[test]
    fn column_consensus_decays_at_sigma2_rate() {
        // || Phi(t, s) e_i - 1/n ||_2 <= sigma2^(t-s+1) for a constant P.
        for (g, label) in [
            (make_ring(6, 1).unwrap(), "ring"),
            (make_random(7, 0.5, 9).unwrap(), "random"),
        ] {
            let n = g.n();
            let p = mixing_from_adjacency(g.adjacency()).unwrap();
            let sigma = second_singular_value(&p).unwrap();
            let seq = vec![p; 15];
            for span in [1usize, 4, 9, 15] {
                let phi = mixing_product(&seq, span - 1, 0).unwrap();
                for i in 0..n {
                    let mut dev = 0.0_f64;
                    for r in 0..n {
                        dev += (phi[(r, i)] - 1.0 / n as f64).powi(2);
                    }
                    let bound = sigma.powi(span as i32);
                    assert!(
                        dev.sqrt() <= bound + 1e-10,
                        "{label}: span {span}, node {i}: {} > {bound}",
                        dev.sqrt()
                    );
                }
            }
        }
    }
}
