//! The simulator: runs distributed coordinate dual averaging over a
//! policy, a channel model, and a gradient oracle, and records a trace.
//!
//! State and indexing. Every node i holds a dual vector z_i and a primal
//! iterate x_i. The run starts from z_i(1) = 0 and x_i(1) = prox of the
//! zero dual state. One step t of the loop then:
//!
//! 1. queries the gradient oracle at x_i(t),
//! 2. folds x_i(t) into the running average xhat_i(t),
//! 3. records metrics for step t (when the cadence says so),
//! 4. exchanges the scheduled dual coordinates through the channel and
//!    forms z_i(t+1), with the step-size alpha(t) prox giving x_i(t+1).
//!
//! Records therefore describe the state *before* step t's communication;
//! the cumulative message counter at step t counts the transmissions that
//! produced x(t).
//!
//! On perfect links the network-average dual obeys
//! `zbar(t+1) = zbar(t) + gbar(t)` exactly up to rounding; the engine
//! tracks the worst violation of that identity as a built-in audit.
//!
//! Quantized links transmit integer symbols for dual *changes* against a
//! shared baseline that sender and receivers advance identically. For
//! coordinates that sit out a step (identity mixing) nothing is sent and
//! the node applies the exact local update; the gradient mass accumulated
//! while a coordinate was silent is replayed at its next exchange, so with
//! an exact quantizer the trajectory coincides with the perfect-channel
//! run under the same schedule.

use ndarray::{Array1, Array2, Axis};

use crate::channel::{
    dither_at, noise_component, quantize_delta, reconstruct, ChannelModel, MessageRecord, Payload,
};
use crate::error::{Error, Result};
use crate::objectives::{
    classification_accuracy, eval_global, stochastic_subgradient, subgradient, GradientMode, Loss,
    Problem, TestSet,
};
use crate::prox::{prox_project, FeasibleSet, NormKind, StepSchedule};
use crate::schedule::{MixingAtom, SharePolicy};

/// Magnitude at which a dual variable is declared divergent.
const DIVERGENCE_LIMIT: f64 = 1e100;

// ---------- Configuration ----------

#[derive(Debug, Clone)]
pub enum ReferenceSpec {
    /// Solve the problem centrally before the run.
    Auto,
    /// Reuse a previously computed reference (e.g. across a sweep).
    Fixed(Reference),
    /// No reference: gap-based outputs become unavailable.
    Skip,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: Problem,
    pub policy: SharePolicy,
    pub channel: ChannelModel,
    pub gradient: GradientMode,
    /// Number of steps T.
    pub steps: usize,
    /// Step-size scale: alpha(t) = step_c / sqrt(t).
    pub step_c: f64,
    pub reference: ReferenceSpec,
    /// Record metrics at steps t with t % record_every == 0; the first and
    /// last steps are always recorded.
    pub record_every: usize,
    /// Keep a per-link log of everything transmitted. Memory heavy, meant
    /// for audits of short runs.
    pub log_messages: bool,
    /// Additionally store x, z, and the running average at recorded steps.
    pub record_state: bool,
    /// Held-out set for classification accuracy (hinge problems only).
    pub test_set: Option<TestSet>,
}

impl RunConfig {
    pub fn new(problem: Problem, policy: SharePolicy, steps: usize, step_c: f64) -> Self {
        RunConfig {
            problem,
            policy,
            channel: ChannelModel::Perfect,
            gradient: GradientMode::Exact,
            steps,
            step_c,
            reference: ReferenceSpec::Auto,
            record_every: 1,
            log_messages: false,
            record_state: false,
            test_set: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.policy.d() != self.problem.d() {
            return Err(Error::config(format!(
                "policy is over d={} coordinates but the problem has d={}",
                self.policy.d(),
                self.problem.d()
            )));
        }
        if self.policy.n() != self.problem.n() {
            return Err(Error::config(format!(
                "policy mixes n={} nodes but the problem has n={}",
                self.policy.n(),
                self.problem.n()
            )));
        }
        if self.steps == 0 {
            return Err(Error::config("a run needs at least one step"));
        }
        if self.record_every == 0 {
            return Err(Error::config("record_every must be at least 1"));
        }
        if let ChannelModel::Noisy { gamma2, .. } = self.channel {
            if !(gamma2 >= 0.0 && gamma2.is_finite()) {
                return Err(Error::config(format!("noise power gamma2 must be nonnegative, got {gamma2}")));
            }
        }
        if let Some(ts) = &self.test_set {
            if !matches!(self.problem.loss, Loss::SvmHinge { .. }) {
                return Err(Error::config("accuracy tracking only applies to hinge classification"));
            }
            if ts.features.ncols() != self.problem.d() {
                return Err(Error::config("test set dimension does not match the problem"));
            }
        }
        Ok(())
    }
}

// ---------- Trace ----------

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    /// Schedule value alpha(t) = C / sqrt(t).
    pub alpha: f64,
    /// Global objective at each node's running average.
    pub f: Vec<f64>,
    /// Dual-norm distance of each node's dual vector from the network
    /// average, ||zbar(t) - z_i(t)||.
    pub dual_dev: Vec<f64>,
    /// Dual norm of the average gradient at step t.
    pub gbar_norm: f64,
    /// Largest per-node gradient dual norm at step t.
    pub gmax_norm: f64,
    /// Largest pairwise distance between primal iterates.
    pub primal_spread: f64,
    /// Cumulative scalar transmissions over inter-node links before this
    /// step's exchange.
    pub messages: u64,
    pub accuracy: Option<Vec<f64>>,
    pub x: Option<Array2<f64>>,
    pub z: Option<Array2<f64>>,
    pub xhat: Option<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub x: Array1<f64>,
    pub f: f64,
    pub provenance: String,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<StepRecord>,
    pub reference: Option<Reference>,
    pub messages: Option<Vec<MessageRecord>>,
    /// Worst violation of the average-dual identity (perfect links only).
    pub avg_dual_drift: Option<f64>,
    /// Largest gradient dual norm seen anywhere in the run.
    pub grad_sup: f64,
    /// Running averages at the final step, one row per node.
    pub final_average: Array2<f64>,
    pub steps: usize,
    pub step_c: f64,
}

impl RunTrace {
    /// Per-node optimality gaps at a recorded step. Needs a reference.
    pub fn gaps(&self, record: &StepRecord) -> Result<Vec<f64>> {
        let r = self
            .reference
            .as_ref()
            .ok_or_else(|| Error::config("run has no reference; gaps are unavailable"))?;
        Ok(record.f.iter().map(|v| v - r.f).collect())
    }

    pub fn last(&self) -> &StepRecord {
        self.records.last().expect("a trace always records the final step")
    }
}

/// Largest pairwise distance between the rows of `x` in the given norm.
pub fn consensus_error(x: &Array2<f64>, norm: NormKind) -> f64 {
    let n = x.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = &x.row(i) - &x.row(j);
            worst = worst.max(norm.norm(&diff));
        }
    }
    worst
}

// ---------- The simulator ----------

pub fn dcda_run(cfg: &RunConfig) -> Result<RunTrace> {
    cfg.validate()?;
    let p = &cfg.problem;
    let (n, d) = (p.n(), p.d());
    let schedule = StepSchedule::new(cfg.step_c)?;

    let reference = match &cfg.reference {
        ReferenceSpec::Skip => None,
        ReferenceSpec::Fixed(r) => {
            if r.x.len() != d {
                return Err(Error::config("fixed reference has the wrong dimension"));
            }
            Some(r.clone())
        }
        ReferenceSpec::Auto => {
            Some(centralized_reference(p, ReferenceMode::Auto { horizon: cfg.steps })?)
        }
    };

    let mut z: Array2<f64> = Array2::zeros((n, d));
    let mut x: Array2<f64> = Array2::zeros((n, d));
    let x1 = prox_project(&Array1::zeros(d), schedule.alpha(0), p.prox, &p.feasible)?;
    for i in 0..n {
        x.row_mut(i).assign(&x1);
    }
    let mut xhat_sum: Array2<f64> = Array2::zeros((n, d));
    let mut g: Array2<f64> = Array2::zeros((n, d));

    // Quantizer state: public reconstruction baseline and the gradient mass
    // accumulated per coordinate since it was last exchanged.
    let mut recon: Array2<f64> = Array2::zeros((n, d));
    let mut gacc: Array2<f64> = Array2::zeros((n, d));

    let mut messages_cum: u64 = 0;
    let mut drift_max: f64 = 0.0;
    let mut grad_sup: f64 = 0.0;
    let mut records: Vec<StepRecord> = Vec::new();
    let mut log: Vec<MessageRecord> = Vec::new();

    for t in 1..=cfg.steps {
        for i in 0..n {
            let xi = x.row(i).to_owned();
            let gi = stochastic_subgradient(p, i, &xi, cfg.gradient, t)?;
            grad_sup = grad_sup.max(p.norm.dual(&gi));
            g.row_mut(i).assign(&gi);
        }
        xhat_sum += &x;

        if t == 1 || t == cfg.steps || t % cfg.record_every == 0 {
            records.push(make_record(cfg, t, &schedule, &x, &z, &g, &xhat_sum, messages_cum)?);
        }

        let mut znew: Array2<f64> = Array2::zeros((n, d));
        let mut step_msgs: u64 = 0;
        match &cfg.channel {
            ChannelModel::Perfect => {
                for k in 0..d {
                    let atom = cfg.policy.atom_at(t, k)?;
                    apply_atom_column(&atom, &z, k, &mut znew);
                    step_msgs += count_links(&atom, n);
                    if cfg.log_messages {
                        log_real_messages(&atom, &z, k, t, None, &mut log);
                    }
                }
                znew += &g;
            }
            ChannelModel::Noisy { gamma2, seed } => {
                let std = (gamma2 / d as f64).sqrt();
                for k in 0..d {
                    let atom = cfg.policy.atom_at(t, k)?;
                    apply_atom_column(&atom, &z, k, &mut znew);
                    // Receiver-side noise on inter-node links; a node's own
                    // contribution stays exact.
                    for (recv, send, w) in atom_links(&atom, n) {
                        let noise = std * noise_component(*seed, (send, recv), t, k);
                        znew[(recv, k)] += w * noise;
                        step_msgs += 1;
                        if cfg.log_messages {
                            log.push(MessageRecord {
                                t,
                                sender: send,
                                receiver: recv,
                                coord: k,
                                payload: Payload::Real(z[(send, k)] + noise),
                            });
                        }
                    }
                }
                znew += &g;
            }
            ChannelModel::Quantized { zoom, seed } => {
                let s = zoom.value(t);
                let mut symbols: Vec<f64> = vec![0.0; n];
                let mut deltas: Vec<f64> = vec![0.0; n];
                let mut raw: Vec<i64> = vec![0; n];
                for k in 0..d {
                    let atom = cfg.policy.atom_at(t, k)?;
                    if matches!(atom, MixingAtom::Identity) {
                        for i in 0..n {
                            znew[(i, k)] = z[(i, k)] + g[(i, k)];
                            gacc[(i, k)] += g[(i, k)];
                        }
                        continue;
                    }
                    for j in 0..n {
                        let delta = z[(j, k)] - recon[(j, k)];
                        let w = dither_at(*seed, j, k, t) + 0.5;
                        let u = quantize_delta(delta, s, w).map_err(|e| match e {
                            Error::Numerical(msg) => Error::Numerical(format!("step {t}: {msg}")),
                            other => other,
                        })?;
                        raw[j] = u;
                        deltas[j] = delta;
                        symbols[j] = reconstruct(u, s);
                    }
                    for i in 0..n {
                        let mixed = match &atom {
                            MixingAtom::Identity => unreachable!("handled above"),
                            MixingAtom::Consensus => symbols.iter().sum::<f64>() / n as f64,
                            MixingAtom::Matrix(pm) => {
                                let m = pm.matrix();
                                (0..n).map(|j| m[(i, j)] * symbols[j]).sum::<f64>()
                            }
                        };
                        znew[(i, k)] = z[(i, k)] + g[(i, k)] - gacc[(i, k)] + mixed;
                        gacc[(i, k)] = g[(i, k)];
                    }
                    for j in 0..n {
                        recon[(j, k)] += symbols[j];
                    }
                    for (recv, send, _) in atom_links(&atom, n) {
                        step_msgs += 1;
                        if cfg.log_messages {
                            log.push(MessageRecord {
                                t,
                                sender: send,
                                receiver: recv,
                                coord: k,
                                payload: Payload::Symbol {
                                    symbol: raw[send],
                                    scale: s,
                                    true_delta: deltas[send],
                                },
                            });
                        }
                    }
                }
            }
        }

        let mut worst = 0.0_f64;
        for v in znew.iter() {
            if !v.is_finite() {
                return Err(Error::Divergence {
                    step: t,
                    detail: "dual state became non-finite".into(),
                });
            }
            worst = worst.max(v.abs());
        }
        if worst > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                step: t,
                detail: format!("dual magnitude {worst:.3e} exceeds {DIVERGENCE_LIMIT:.0e}"),
            });
        }

        if matches!(cfg.channel, ChannelModel::Perfect) {
            let zbar_old = z.mean_axis(Axis(0)).expect("n > 0");
            let zbar_new = znew.mean_axis(Axis(0)).expect("n > 0");
            let gbar = g.mean_axis(Axis(0)).expect("n > 0");
            let drift = zbar_new
                .iter()
                .zip(zbar_old.iter())
                .zip(gbar.iter())
                .map(|((zn, zo), gb)| (zn - zo - gb).abs())
                .fold(0.0_f64, f64::max);
            drift_max = drift_max.max(drift);
        }

        let alpha = schedule.alpha(t);
        for i in 0..n {
            let xi = prox_project(&znew.row(i).to_owned(), alpha, p.prox, &p.feasible)?;
            x.row_mut(i).assign(&xi);
        }
        z = znew;
        messages_cum += step_msgs;
    }

    let t_final = cfg.steps as f64;
    let final_average = xhat_sum.mapv(|v| v / t_final);
    Ok(RunTrace {
        records,
        reference,
        messages: if cfg.log_messages { Some(log) } else { None },
        avg_dual_drift: if matches!(cfg.channel, ChannelModel::Perfect) {
            Some(drift_max)
        } else {
            None
        },
        grad_sup,
        final_average,
        steps: cfg.steps,
        step_c: cfg.step_c,
    })
}

/// Mix coordinate k of `z` through the atom into `znew`.
fn apply_atom_column(atom: &MixingAtom, z: &Array2<f64>, k: usize, znew: &mut Array2<f64>) {
    let n = z.nrows();
    match atom {
        MixingAtom::Identity => {
            for i in 0..n {
                znew[(i, k)] = z[(i, k)];
            }
        }
        MixingAtom::Consensus => {
            let mean = (0..n).map(|i| z[(i, k)]).sum::<f64>() / n as f64;
            for i in 0..n {
                znew[(i, k)] = mean;
            }
        }
        MixingAtom::Matrix(p) => {
            let m = p.matrix();
            for i in 0..n {
                znew[(i, k)] = (0..n).map(|j| m[(i, j)] * z[(j, k)]).sum::<f64>();
            }
        }
    }
}

/// Directed inter-node links (receiver, sender, weight) the atom listens on.
fn atom_links(atom: &MixingAtom, n: usize) -> Vec<(usize, usize, f64)> {
    match atom {
        MixingAtom::Identity => Vec::new(),
        MixingAtom::Consensus => {
            let w = 1.0 / n as f64;
            let mut links = Vec::with_capacity(n * (n - 1));
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        links.push((i, j, w));
                    }
                }
            }
            links
        }
        MixingAtom::Matrix(p) => {
            let m = p.matrix();
            let mut links = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if i != j && m[(i, j)] != 0.0 {
                        links.push((i, j, m[(i, j)]));
                    }
                }
            }
            links
        }
    }
}

fn count_links(atom: &MixingAtom, n: usize) -> u64 {
    match atom {
        MixingAtom::Identity => 0,
        MixingAtom::Consensus => (n * (n - 1)) as u64,
        MixingAtom::Matrix(p) => {
            let m = p.matrix();
            let mut c = 0u64;
            for i in 0..n {
                for j in 0..n {
                    if i != j && m[(i, j)] != 0.0 {
                        c += 1;
                    }
                }
            }
            c
        }
    }
}

fn log_real_messages(
    atom: &MixingAtom,
    z: &Array2<f64>,
    k: usize,
    t: usize,
    _noise: Option<()>,
    log: &mut Vec<MessageRecord>,
) {
    let n = z.nrows();
    for (recv, send, _) in atom_links(atom, n) {
        log.push(MessageRecord {
            t,
            sender: send,
            receiver: recv,
            coord: k,
            payload: Payload::Real(z[(send, k)]),
        });
    }
}

#[allow(clippy::too_many_arguments)]
fn make_record(
    cfg: &RunConfig,
    t: usize,
    schedule: &StepSchedule,
    x: &Array2<f64>,
    z: &Array2<f64>,
    g: &Array2<f64>,
    xhat_sum: &Array2<f64>,
    messages: u64,
) -> Result<StepRecord> {
    let p = &cfg.problem;
    let n = p.n();
    let xhat = xhat_sum.mapv(|v| v / t as f64);
    let mut f = Vec::with_capacity(n);
    for i in 0..n {
        let v = eval_global(p, &xhat.row(i).to_owned())?;
        if !v.is_finite() {
            return Err(Error::Divergence {
                step: t,
                detail: "objective overflowed at the running average".into(),
            });
        }
        f.push(v);
    }
    let zbar = z.mean_axis(Axis(0)).expect("n > 0");
    let dual_dev: Vec<f64> =
        (0..n).map(|i| p.norm.dual(&(&zbar - &z.row(i)))).collect();
    let gbar = g.mean_axis(Axis(0)).expect("n > 0");
    let gbar_norm = p.norm.dual(&gbar);
    let gmax_norm = (0..n).map(|i| p.norm.dual(&g.row(i).to_owned())).fold(0.0_f64, f64::max);
    let primal_spread = consensus_error(x, p.norm);
    let accuracy = cfg.test_set.as_ref().map(|ts| {
        (0..n).map(|i| classification_accuracy(ts, &xhat.row(i).to_owned())).collect()
    });
    Ok(StepRecord {
        t,
        alpha: schedule.alpha(t),
        f,
        dual_dev,
        gbar_norm,
        gmax_norm,
        primal_spread,
        messages,
        accuracy,
        x: cfg.record_state.then(|| x.clone()),
        z: cfg.record_state.then(|| z.clone()),
        xhat: cfg.record_state.then(|| xhat.clone()),
    })
}

// ---------- Centralized reference ----------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceMode {
    /// Closed form when available, otherwise a long centralized run sized
    /// from the simulation horizon.
    Auto { horizon: usize },
    /// Normal equations via conjugate gradients (unconstrained least
    /// squares only).
    ClosedForm,
    /// Single-machine dual averaging over the summed objective.
    DualAveraging { iters: usize },
}

pub fn centralized_reference(p: &Problem, mode: ReferenceMode) -> Result<Reference> {
    match mode {
        ReferenceMode::ClosedForm => closed_form_reference(p),
        ReferenceMode::DualAveraging { iters } => da_reference(p, iters),
        ReferenceMode::Auto { horizon } => {
            let iters = horizon.saturating_mul(100).clamp(10_000, 300_000);
            if matches!(p.loss, Loss::LeastSquares)
                && matches!(p.feasible, FeasibleSet::Unconstrained)
            {
                closed_form_reference(p).or_else(|_| da_reference(p, iters))
            } else {
                da_reference(p, iters)
            }
        }
    }
}

fn closed_form_reference(p: &Problem) -> Result<Reference> {
    if !matches!(p.loss, Loss::LeastSquares) || !matches!(p.feasible, FeasibleSet::Unconstrained) {
        return Err(Error::config(
            "closed-form reference only applies to unconstrained least squares",
        ));
    }
    let d = p.d();
    let mut h: Array2<f64> = Array2::zeros((d, d));
    let mut rhs: Array1<f64> = Array1::zeros(d);
    for nd in &p.nodes {
        h += &nd.features.t().dot(&nd.features);
        rhs += &nd.features.t().dot(&nd.targets);
    }
    // Conjugate gradients on the normal equations.
    let tol = 1e-10 * rhs.dot(&rhs).sqrt().max(1.0);
    let mut x: Array1<f64> = Array1::zeros(d);
    let mut r = rhs.clone();
    let mut dir = r.clone();
    let mut rs = r.dot(&r);
    for _ in 0..(20 * d) {
        if rs.sqrt() <= tol {
            break;
        }
        let hd = h.dot(&dir);
        let denom = dir.dot(&hd);
        if !(denom > 0.0) {
            return Err(Error::numerical("normal equations lost positive definiteness"));
        }
        let a = rs / denom;
        x = &x + &(&dir * a);
        r = &r - &(&hd * a);
        let rs_new = r.dot(&r);
        dir = &r + &(&dir * (rs_new / rs));
        rs = rs_new;
    }
    if rs.sqrt() > tol {
        return Err(Error::numerical("conjugate gradients did not reach the residual target"));
    }
    let f = eval_global(p, &x)?;
    Ok(Reference { x, f, provenance: "normal-equations".into(), warning: None })
}

const REFERENCE_C_GRID: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];

fn da_reference(p: &Problem, iters: usize) -> Result<Reference> {
    if iters == 0 {
        return Err(Error::config("reference run needs at least one iteration"));
    }
    let mut best: Option<(f64, Array1<f64>, f64, bool)> = None;
    for &c in &REFERENCE_C_GRID {
        if let Some((f, xhat, stable)) = da_single(p, iters, c)? {
            let better = best.as_ref().map_or(true, |(bf, ..)| f < *bf);
            if better {
                best = Some((f, xhat, c, stable));
            }
        }
    }
    let (f, x, c, stable) =
        best.ok_or_else(|| Error::numerical("every reference step size diverged"))?;
    Ok(Reference {
        x,
        f,
        provenance: format!("dual-averaging(iters={iters}, c={c})"),
        warning: (!stable).then(|| {
            "reference objective was still moving over the last 10% of iterations; \
             treat it as approximate"
                .to_string()
        }),
    })
}

/// One grid point of the centralized solver. `None` means this step size
/// blew up and should be skipped.
fn da_single(p: &Problem, iters: usize, c: f64) -> Result<Option<(f64, Array1<f64>, bool)>> {
    let d = p.d();
    let schedule = StepSchedule::new(c)?;
    let mut z: Array1<f64> = Array1::zeros(d);
    let mut sum: Array1<f64> = Array1::zeros(d);
    let mid = ((9 * iters) / 10).max(1);
    let mut f_mid: Option<f64> = None;
    for t in 1..=iters {
        let x = prox_project(&z, schedule.alpha(t - 1), p.prox, &p.feasible)?;
        sum += &x;
        for i in 0..p.n() {
            z += &subgradient(p, i, &x)?;
        }
        if !z.iter().all(|v| v.is_finite() && v.abs() <= DIVERGENCE_LIMIT) {
            return Ok(None);
        }
        if t == mid {
            let xm = sum.mapv(|v| v / t as f64);
            let fm = eval_global(p, &xm)?;
            if !fm.is_finite() {
                return Ok(None);
            }
            f_mid = Some(fm);
        }
    }
    let xhat = sum.mapv(|v| v / iters as f64);
    let f = eval_global(p, &xhat)?;
    if !f.is_finite() {
        return Ok(None);
    }
    let stable = match f_mid {
        Some(fm) => (f - fm).abs() <= 1e-6 * (1.0 + f.abs()),
        None => true,
    };
    Ok(Some((f, xhat, stable)))
}

// ---------- Trace CSV ----------

/// Column layout: t, node, f_gap, dual_consensus, primal_spread, gbar_norm,
/// alpha, and accuracy when tracked. One row per (recorded step, node);
/// network-level columns repeat across the nodes of a step.
pub fn write_trace_csv(trace: &RunTrace, w: &mut impl std::io::Write) -> Result<()> {
    let reference = trace
        .reference
        .as_ref()
        .ok_or_else(|| Error::config("cannot write a gap trace without a reference"))?;
    let with_acc = trace.records.first().is_some_and(|r| r.accuracy.is_some());
    if with_acc {
        writeln!(w, "t,node,f_gap,dual_consensus,primal_spread,gbar_norm,alpha,accuracy")?;
    } else {
        writeln!(w, "t,node,f_gap,dual_consensus,primal_spread,gbar_norm,alpha")?;
    }
    for rec in &trace.records {
        let consensus = rec.dual_dev.iter().copied().fold(0.0_f64, f64::max);
        for node in 0..rec.f.len() {
            write!(
                w,
                "{},{},{},{},{},{},{}",
                rec.t,
                node,
                rec.f[node] - reference.f,
                consensus,
                rec.primal_spread,
                rec.gbar_norm,
                rec.alpha
            )?;
            if with_acc {
                let acc = rec.accuracy.as_ref().expect("uniform accuracy columns");
                write!(w, ",{}", acc[node])?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub node: usize,
    pub f_gap: f64,
    pub dual_consensus: f64,
    pub primal_spread: f64,
    pub gbar_norm: f64,
    pub alpha: f64,
    pub accuracy: Option<f64>,
}

/// Parse a file produced by [`write_trace_csv`].
pub fn read_trace_csv(r: impl std::io::BufRead) -> Result<Vec<TraceRow>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "empty trace file".into() })??;
    let with_acc = match header.trim_end() {
        "t,node,f_gap,dual_consensus,primal_spread,gbar_norm,alpha" => false,
        "t,node,f_gap,dual_consensus,primal_spread,gbar_norm,alpha,accuracy" => true,
        other => {
            return Err(Error::Parse { line: 1, msg: format!("unrecognized trace header {other:?}") })
        }
    };
    let want = if with_acc { 8 } else { 7 };
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != want {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {want} fields, got {}", fields.len()),
            });
        }
        let p_usize = |s: &str| -> Result<usize> {
            s.trim().parse::<usize>().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad integer {s:?}: {e}"),
            })
        };
        let p_f64 = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad float {s:?}: {e}"),
            })
        };
        rows.push(TraceRow {
            t: p_usize(fields[0])?,
            node: p_usize(fields[1])?,
            f_gap: p_f64(fields[2])?,
            dual_consensus: p_f64(fields[3])?,
            primal_spread: p_f64(fields[4])?,
            gbar_norm: p_f64(fields[5])?,
            alpha: p_f64(fields[6])?,
            accuracy: if with_acc { Some(p_f64(fields[7])?) } else { None },
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 2, msg: "trace has no rows".into() });
    }
    Ok(rows)
}
