//! Problem families, data generators, and subgradient oracles.
//!
//! Three convex families are supported, each paired with the prox geometry
//! it is normally run under:
//!
//! * `SvmHinge`: f_i(x) = ||x||^2/(2d) + c sum_j max(1 - l_ij <x, a_ij>, 0),
//!   Gaussian class clouds with means +-mu, squared prox, unconstrained;
//! * `LeastSquares`: f_i(x) = 1/2 ||A_i x - b_i||^2 with a planted model,
//!   squared prox, unconstrained;
//! * `L1Regression`: f_i(x) = ||A_i x - b_i||_1 with a planted simplex
//!   model and occasional large outliers, entropic prox on the simplex.
//!
//! Subgradients use the zero-at-kink tie rule: wherever the loss is not
//! differentiable (hinge margin exactly 1, l1 residual exactly 0) the
//! sample contributes nothing.

use ndarray::{Array1, Array2};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::prox::{FeasibleSet, NormKind, ProxFunction};
use crate::seeding;

// ---------- Types ----------

#[derive(Debug, Clone, PartialEq)]
pub enum Loss {
    SvmHinge { c: f64 },
    LeastSquares,
    L1Regression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeData {
    /// m x d feature (or design) matrix.
    pub features: Array2<f64>,
    /// Length-m targets: labels in {-1, +1} for the SVM, responses otherwise.
    pub targets: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub loss: Loss,
    pub nodes: Vec<NodeData>,
    pub feasible: FeasibleSet,
    pub prox: ProxFunction,
    pub norm: NormKind,
    /// Ground-truth parameter when the generator planted one.
    pub planted: Option<Array1<f64>>,
}

impl Problem {
    pub fn with_nodes(
        loss: Loss,
        nodes: Vec<NodeData>,
        feasible: FeasibleSet,
        prox: ProxFunction,
        norm: NormKind,
        planted: Option<Array1<f64>>,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::config("a problem needs at least one node"));
        }
        let (m, d) = (nodes[0].features.nrows(), nodes[0].features.ncols());
        if m == 0 || d == 0 {
            return Err(Error::config("node datasets must be non-empty"));
        }
        for (i, nd) in nodes.iter().enumerate() {
            if nd.features.nrows() != m || nd.features.ncols() != d {
                return Err(Error::config(format!("node {i} has mismatched feature shape")));
            }
            if nd.targets.len() != m {
                return Err(Error::config(format!("node {i} has mismatched target length")));
            }
        }
        feasible.validate_pairing(prox)?;
        if let Some(x) = &planted {
            if x.len() != d {
                return Err(Error::config("planted parameter has wrong dimension"));
            }
        }
        Ok(Problem { loss, nodes, feasible, prox, norm, planted })
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn m(&self) -> usize {
        self.nodes[0].features.nrows()
    }

    pub fn d(&self) -> usize {
        self.nodes[0].features.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMode {
    Exact,
    /// Minibatch of size b drawn without replacement, keyed by (seed, node, t)
    /// and scaled by m/b so the estimator is unbiased.
    Minibatch { b: usize, seed: u64 },
}

// ---------- Generators ----------

#[derive(Debug, Clone, Copy)]
pub struct SvmSpec {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    /// Class means are +- (mu_scale / sqrt(d)) * 1.
    pub mu_scale: f64,
    /// Per-component feature standard deviation.
    pub sigma: f64,
    /// Hinge weight c.
    pub c: f64,
}

impl SvmSpec {
    pub fn new(n: usize, m: usize, d: usize) -> Self {
        SvmSpec { n, m, d, mu_scale: 1.0, sigma: 1.0, c: 1.0 }
    }
}

fn check_dims(n: usize, m: usize, d: usize) -> Result<()> {
    if n == 0 || m == 0 || d == 0 {
        return Err(Error::config(format!("n, m, d must be positive (got {n}, {m}, {d})")));
    }
    Ok(())
}

/// Two Gaussian class clouds per node, labels drawn uniformly.
pub fn gen_svm(spec: &SvmSpec, seed: u64) -> Result<Problem> {
    check_dims(spec.n, spec.m, spec.d)?;
    if spec.sigma < 0.0 || spec.c <= 0.0 {
        return Err(Error::config("svm generator needs sigma >= 0 and c > 0"));
    }
    let mu = spec.mu_scale / (spec.d as f64).sqrt();
    let mut nodes = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut rng = seeding::stream_rng(seed, &[i as u64]);
        let mut features = Array2::zeros((spec.m, spec.d));
        let mut targets = Array1::zeros(spec.m);
        for j in 0..spec.m {
            let label = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            targets[j] = label;
            for k in 0..spec.d {
                let g: f64 = StandardNormal.sample(&mut rng);
                features[(j, k)] = label * mu + spec.sigma * g;
            }
        }
        nodes.push(NodeData { features, targets });
    }
    Problem::with_nodes(
        Loss::SvmHinge { c: spec.c },
        nodes,
        FeasibleSet::Unconstrained,
        ProxFunction::Squared,
        NormKind::L2,
        None,
    )
}

/// Held-out balanced test set drawn from the same class clouds.
#[derive(Debug, Clone)]
pub struct TestSet {
    pub features: Array2<f64>,
    pub labels: Array1<f64>,
}

pub fn gen_svm_test_set(spec: &SvmSpec, per_class: usize, seed: u64) -> TestSet {
    let mu = spec.mu_scale / (spec.d as f64).sqrt();
    let total = 2 * per_class;
    let mut rng = seeding::stream_rng(seed, &[u64::from(u32::MAX)]);
    let mut features = Array2::zeros((total, spec.d));
    let mut labels = Array1::zeros(total);
    for j in 0..total {
        let label = if j < per_class { 1.0 } else { -1.0 };
        labels[j] = label;
        for k in 0..spec.d {
            let g: f64 = StandardNormal.sample(&mut rng);
            features[(j, k)] = label * mu + spec.sigma * g;
        }
    }
    TestSet { features, labels }
}

/// Fraction of test points whose margin sign matches the label; the
/// degenerate prediction 0 counts as +1.
pub fn classification_accuracy(test: &TestSet, x: &Array1<f64>) -> f64 {
    let mut hits = 0usize;
    for j in 0..test.features.nrows() {
        let score = test.features.row(j).dot(x);
        let pred = if score >= 0.0 { 1.0 } else { -1.0 };
        if pred == test.labels[j] {
            hits += 1;
        }
    }
    hits as f64 / test.features.nrows() as f64
}

#[derive(Debug, Clone, Copy)]
pub struct LinregSpec {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub noise_sigma: f64,
}

impl LinregSpec {
    pub fn new(n: usize, m: usize, d: usize) -> Self {
        LinregSpec { n, m, d, noise_sigma: 0.5 }
    }
}

/// Planted least squares: standard Gaussian design, b = A x_true + noise.
pub fn gen_linreg(spec: &LinregSpec, seed: u64) -> Result<Problem> {
    check_dims(spec.n, spec.m, spec.d)?;
    if spec.noise_sigma < 0.0 {
        return Err(Error::config("noise sigma must be nonnegative"));
    }
    let mut rng = seeding::stream_rng(seed, &[u64::from(u32::MAX)]);
    let planted = Array1::from_shape_fn(spec.d, |_| StandardNormal.sample(&mut rng));
    let mut nodes = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut rng = seeding::stream_rng(seed, &[i as u64]);
        let features =
            Array2::from_shape_fn((spec.m, spec.d), |_| StandardNormal.sample(&mut rng));
        let mut targets = features.dot(&planted);
        for v in targets.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v += spec.noise_sigma * g;
        }
        nodes.push(NodeData { features, targets });
    }
    Problem::with_nodes(
        Loss::LeastSquares,
        nodes,
        FeasibleSet::Unconstrained,
        ProxFunction::Squared,
        NormKind::L2,
        Some(planted),
    )
}

#[derive(Debug, Clone, Copy)]
pub struct RobustSpec {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    /// Probability that a response is replaced by a wide outlier draw.
    pub outlier_prob: f64,
    pub outlier_sigma: f64,
    pub inlier_sigma: f64,
}

impl RobustSpec {
    pub fn new(n: usize, m: usize, d: usize) -> Self {
        RobustSpec { n, m, d, outlier_prob: 0.1, outlier_sigma: 10.0, inlier_sigma: 0.3 }
    }
}

/// Planted l1 regression on the simplex with occasional gross outliers.
pub fn gen_robust(spec: &RobustSpec, seed: u64) -> Result<Problem> {
    check_dims(spec.n, spec.m, spec.d)?;
    if !(0.0..=1.0).contains(&spec.outlier_prob) {
        return Err(Error::config("outlier probability must lie in [0, 1]"));
    }
    if spec.outlier_sigma < 0.0 || spec.inlier_sigma < 0.0 {
        return Err(Error::config("noise scales must be nonnegative"));
    }
    let mut rng = seeding::stream_rng(seed, &[u64::from(u32::MAX)]);
    // Uniform point on the simplex: normalized exponentials.
    let mut planted = Array1::from_shape_fn(spec.d, |_| {
        let u: f64 = rng.gen::<f64>();
        -(1.0 - u).ln()
    });
    let total = planted.sum();
    planted.mapv_inplace(|v| v / total);
    let mut nodes = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut rng = seeding::stream_rng(seed, &[i as u64]);
        let features =
            Array2::from_shape_fn((spec.m, spec.d), |_| StandardNormal.sample(&mut rng));
        let mut targets = features.dot(&planted);
        for v in targets.iter_mut() {
            let is_outlier = rng.gen::<f64>() < spec.outlier_prob;
            let g: f64 = StandardNormal.sample(&mut rng);
            *v += if is_outlier { spec.outlier_sigma * g } else { spec.inlier_sigma * g };
        }
        nodes.push(NodeData { features, targets });
    }
    Problem::with_nodes(
        Loss::L1Regression,
        nodes,
        FeasibleSet::Simplex,
        ProxFunction::Entropic,
        NormKind::L1,
        Some(planted),
    )
}

// ---------- Evaluation ----------

fn check_point(p: &Problem, i: usize, x: &Array1<f64>) -> Result<()> {
    if i >= p.n() {
        return Err(Error::config(format!("node index {i} out of range (n={})", p.n())));
    }
    if x.len() != p.d() {
        return Err(Error::config(format!("point has dimension {}, problem has {}", x.len(), p.d())));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::numerical("non-finite point in objective evaluation"));
    }
    Ok(())
}

/// Loss of a single sample (excluding any regularizer).
fn sample_loss(loss: &Loss, row: ndarray::ArrayView1<f64>, target: f64, x: &Array1<f64>) -> f64 {
    match loss {
        Loss::SvmHinge { c } => {
            let margin = target * row.dot(x);
            c * (1.0 - margin).max(0.0)
        }
        Loss::LeastSquares => {
            let r = row.dot(x) - target;
            0.5 * r * r
        }
        Loss::L1Regression => (row.dot(x) - target).abs(),
    }
}

/// Subgradient of a single sample's loss, accumulated into `g`.
fn accumulate_sample_subgradient(
    loss: &Loss,
    row: ndarray::ArrayView1<f64>,
    target: f64,
    x: &Array1<f64>,
    weight: f64,
    g: &mut Array1<f64>,
) {
    match loss {
        Loss::SvmHinge { c } => {
            let margin = target * row.dot(x);
            if margin < 1.0 {
                for (gk, ak) in g.iter_mut().zip(row.iter()) {
                    *gk -= weight * c * target * ak;
                }
            }
        }
        Loss::LeastSquares => {
            let r = row.dot(x) - target;
            for (gk, ak) in g.iter_mut().zip(row.iter()) {
                *gk += weight * r * ak;
            }
        }
        Loss::L1Regression => {
            let r = row.dot(x) - target;
            let s = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
            if s != 0.0 {
                for (gk, ak) in g.iter_mut().zip(row.iter()) {
                    *gk += weight * s * ak;
                }
            }
        }
    }
}

pub fn eval_local(p: &Problem, i: usize, x: &Array1<f64>) -> Result<f64> {
    check_point(p, i, x)?;
    let nd = &p.nodes[i];
    let mut total = 0.0;
    for j in 0..p.m() {
        total += sample_loss(&p.loss, nd.features.row(j), nd.targets[j], x);
    }
    if let Loss::SvmHinge { .. } = p.loss {
        let sq: f64 = x.iter().map(|v| v * v).sum();
        total += sq / (2.0 * p.d() as f64);
    }
    Ok(total)
}

/// Total objective: the sum of the node objectives.
pub fn eval_global(p: &Problem, x: &Array1<f64>) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..p.n() {
        total += eval_local(p, i, x)?;
    }
    Ok(total)
}

/// Exact subgradient of node i's objective at x.
pub fn subgradient(p: &Problem, i: usize, x: &Array1<f64>) -> Result<Array1<f64>> {
    check_point(p, i, x)?;
    let nd = &p.nodes[i];
    let mut g = Array1::zeros(p.d());
    for j in 0..p.m() {
        accumulate_sample_subgradient(&p.loss, nd.features.row(j), nd.targets[j], x, 1.0, &mut g);
    }
    if let Loss::SvmHinge { .. } = p.loss {
        let d = p.d() as f64;
        for (gk, xk) in g.iter_mut().zip(x.iter()) {
            *gk += xk / d;
        }
    }
    Ok(g)
}

/// Gradient oracle used by the simulator: exact, or an unbiased minibatch
/// estimator keyed by (seed, node, t).
pub fn stochastic_subgradient(
    p: &Problem,
    i: usize,
    x: &Array1<f64>,
    mode: GradientMode,
    t: usize,
) -> Result<Array1<f64>> {
    match mode {
        GradientMode::Exact => subgradient(p, i, x),
        GradientMode::Minibatch { b, seed } => {
            check_point(p, i, x)?;
            let m = p.m();
            if b == 0 || b > m {
                return Err(Error::config(format!("minibatch size b={b} must lie in 1..={m}")));
            }
            let mut rng = seeding::stream_rng(seed, &[i as u64, t as u64]);
            let mut batch = sample_indices(&mut rng, m, b).into_vec();
            // Fixed summation order keeps b = m bit-identical to the exact
            // subgradient.
            batch.sort_unstable();
            let nd = &p.nodes[i];
            let weight = m as f64 / b as f64;
            let mut g = Array1::zeros(p.d());
            for j in batch {
                accumulate_sample_subgradient(
                    &p.loss,
                    nd.features.row(j),
                    nd.targets[j],
                    x,
                    weight,
                    &mut g,
                );
            }
            if let Loss::SvmHinge { .. } = p.loss {
                let d = p.d() as f64;
                for (gk, xk) in g.iter_mut().zip(x.iter()) {
                    *gk += xk / d;
                }
            }
            Ok(g)
        }
    }
}

// ---------- Lipschitz estimation ----------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    pub value: f64,
    /// True when the value is a closed-form bound rather than a sampled sup.
    pub certified: bool,
}

const LIPSCHITZ_SAMPLES: usize = 10_000;
const LIPSCHITZ_MARGIN: f64 = 1.1;

/// Sampling radius for unconstrained problems: a generous ball around the
/// scale of the planted model (or the raw data scale for the SVM). Runs at
/// the supported scales stay well inside it; the engine audits that traced
/// subgradients never exceed the returned estimate.
fn sampling_radius(p: &Problem) -> f64 {
    match &p.planted {
        Some(x) => 4.0 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt()),
        None => 4.0 * (p.d() as f64).sqrt(),
    }
}

/// Per-node Lipschitz constant of the objectives in the problem's norm:
/// exact column-sum bound for l1 losses, otherwise an empirical sup of the
/// subgradient dual norm over sampled feasible points plus a 10% margin.
pub fn lipschitz_estimate(p: &Problem) -> LipschitzEstimate {
    if let Loss::L1Regression = p.loss {
        // ||A^T s||_inf <= max_k sum_j |A_jk| for any sign vector s.
        let mut worst = 0.0_f64;
        for nd in &p.nodes {
            for k in 0..p.d() {
                let col_sum: f64 = nd.features.column(k).iter().map(|v| v.abs()).sum();
                worst = worst.max(col_sum);
            }
        }
        return LipschitzEstimate { value: worst, certified: true };
    }

    let mut rng = seeding::stream_rng(0x11b5_c812, &[p.n() as u64, p.d() as u64]);
    let d = p.d();
    let radius = sampling_radius(p);
    let mut sup = 0.0_f64;
    for _ in 0..LIPSCHITZ_SAMPLES {
        let x = match p.feasible {
            FeasibleSet::Simplex => {
                let mut w = Array1::from_shape_fn(d, |_| -(1.0 - rng.gen::<f64>()).ln());
                let s = w.sum();
                w.mapv_inplace(|v| v / s);
                w
            }
            FeasibleSet::L2Ball { radius: r } => {
                let mut x: Array1<f64> =
                    Array1::from_shape_fn(d, |_| StandardNormal.sample(&mut rng));
                let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let u: f64 = rng.gen::<f64>();
                let scale = r * u.powf(1.0 / d as f64) / nrm.max(1e-300);
                x.mapv_inplace(|v| v * scale);
                x
            }
            FeasibleSet::Unconstrained => {
                let mut x: Array1<f64> =
                    Array1::from_shape_fn(d, |_| StandardNormal.sample(&mut rng));
                let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let u: f64 = rng.gen::<f64>();
                let scale = radius * u.powf(1.0 / d as f64) / nrm.max(1e-300);
                x.mapv_inplace(|v| v * scale);
                x
            }
        };
        for i in 0..p.n() {
            let g = subgradient(p, i, &x).expect("sampled point must be evaluable");
            sup = sup.max(p.norm.dual(&g));
        }
    }
    LipschitzEstimate { value: sup * LIPSCHITZ_MARGIN, certified: false }
}

// ---------- Dataset CSV ----------

/// One file per node: columns feat_0..feat_{d-1}, target; one row per sample.
pub fn write_node_csv(p: &Problem, i: usize, w: &mut impl Write) -> Result<()> {
    if i >= p.n() {
        return Err(Error::config(format!("node index {i} out of range")));
    }
    let d = p.d();
    for k in 0..d {
        write!(w, "feat_{k},")?;
    }
    writeln!(w, "target")?;
    let nd = &p.nodes[i];
    for j in 0..p.m() {
        for k in 0..d {
            write!(w, "{},", nd.features[(j, k)])?;
        }
        writeln!(w, "{}", nd.targets[j])?;
    }
    Ok(())
}

/// Parse a node dataset written by [`write_node_csv`].
pub fn read_node_csv(r: impl BufRead) -> Result<NodeData> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "empty dataset file".into() })??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[cols.len() - 1] != "target" {
        return Err(Error::Parse { line: 1, msg: "expected feat_* columns then target".into() });
    }
    let d = cols.len() - 1;
    let mut rows: Vec<f64> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} fields, got {}", d + 1, fields.len()),
            });
        }
        for f in &fields[..d] {
            rows.push(f.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad float {f:?}: {e}"),
            })?);
        }
        targets.push(fields[d].trim().parse::<f64>().map_err(|e| Error::Parse {
            line: lineno,
            msg: format!("bad float {:?}: {e}", fields[d]),
        })?);
    }
    if targets.is_empty() {
        return Err(Error::Parse { line: 2, msg: "dataset has no samples".into() });
    }
    let m = targets.len();
    let features = Array2::from_shape_vec((m, d), rows)
        .map_err(|e| Error::Parse { line: 2, msg: e.to_string() })?;
    Ok(NodeData { features, targets: Array1::from(targets) })
}
