//! The `bounds` subcommand: evaluate convergence guarantees against a
//! recorded trace.
//!
//! Two kinds of value are emitted per recorded step. The certificate is
//! computed from the trace itself (step sizes, average-gradient norms,
//! dual deviations) and must dominate the measured gap on every prefix;
//! a violation is flagged in the output and fails the command. The model
//! bound is the a-priori closed form matching the configured policy,
//! channel, and gradient mode, evaluated at the same horizons.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use dcda::bounds::{
    bound_noisy, bound_quantized, bound_randomized, bound_round_robin, bound_static,
    bound_stochastic, bound_thm1_from_rows,
};
use dcda::channel::ZoomSchedule;
use dcda::engine::read_trace_csv;
use dcda::objectives::lipschitz_estimate;
use dcda::schedule::expected_squared_mixing;
use dcda::topology::{second_singular_value, MixingMatrix};
use dcda::{Error, Result};

use crate::config::{ChannelSpec, ExperimentConfig, GradientSpec, PolicySpec};
use crate::runner::{build_mixing, build_policy, build_problem, reference_for_bounds};

pub struct BoundsOutcome {
    pub out_path: PathBuf,
    pub rows: usize,
    pub violations: usize,
    pub final_measured: f64,
    pub final_certificate: f64,
    pub model: String,
    pub final_model_bound: f64,
}

/// Strip a `.trace.csv` suffix before appending `.bounds.csv`, so
/// `x.trace.csv` becomes `x.bounds.csv`.
pub fn default_out_path(trace_path: &Path) -> PathBuf {
    let s = trace_path.to_string_lossy();
    match s.strip_suffix(".trace.csv") {
        Some(stem) => PathBuf::from(format!("{stem}.bounds.csv")),
        None => PathBuf::from(format!("{s}.bounds.csv")),
    }
}

// Relative slack when comparing the measured gap against the certificate,
// covering rounding in the CSV round trip.
const VIOLATION_SLACK: f64 = 1e-9;

pub fn evaluate(
    cfg: &ExperimentConfig,
    trace_path: &Path,
    out_path: Option<PathBuf>,
) -> Result<BoundsOutcome> {
    let file = File::open(trace_path)?;
    let rows = read_trace_csv(BufReader::new(file))?;
    if rows.is_empty() {
        return Err(Error::config("the trace has no rows to evaluate"));
    }

    let problem = build_problem(cfg)?;
    let reference = reference_for_bounds(cfg, &problem)?;
    let psi_star = problem.prox.psi_nonneg(&reference.x);
    let l = lipschitz_estimate(&problem).value;
    let r = match cfg.r_override.or_else(|| problem.feasible.diameter(problem.norm)) {
        Some(r) => r,
        None => {
            return Err(Error::config(
                "the feasible set is unbounded, so no diameter is available; set bounds.r",
            ))
        }
    };
    let (n, d) = (problem.n(), problem.d());

    // Spectral quantity driving the consensus terms: the fixed matrix for
    // deterministic policies, the expected squared mixing matrix for
    // randomized ones.
    let sigma2 = match cfg.policy {
        PolicySpec::Static | PolicySpec::RoundRobin { .. } => {
            let mix = build_mixing(cfg)?.expect("deterministic policies run on a graph");
            second_singular_value(&mix)?
        }
        PolicySpec::RandomSubset { .. } | PolicySpec::AllToAll { .. } => {
            let policy = build_policy(cfg)?;
            let esq = expected_squared_mixing(&policy, 0)?;
            second_singular_value(&MixingMatrix::from_matrix(esq)?)?
        }
    };

    let certificate = bound_thm1_from_rows(&rows, psi_star, l)?;

    let nodes = rows.iter().take_while(|row| row.t == rows[0].t).count();
    let steps = rows.len() / nodes;
    let mut measured = Vec::with_capacity(steps);
    for ti in 0..steps {
        let worst = rows[ti * nodes..(ti + 1) * nodes]
            .iter()
            .map(|row| row.f_gap)
            .fold(f64::MIN, f64::max);
        measured.push((rows[ti * nodes].t, worst));
    }

    let mut model = match cfg.policy {
        PolicySpec::Static => "static",
        PolicySpec::RoundRobin { .. } => "round-robin",
        PolicySpec::RandomSubset { .. } => "randomized-subset",
        PolicySpec::AllToAll { .. } => "all-to-all",
    }
    .to_string();
    if matches!(cfg.gradient, GradientSpec::Minibatch { .. }) {
        model.push_str("+minibatch");
    }
    match cfg.channel {
        ChannelSpec::Perfect => {}
        ChannelSpec::Noisy { .. } => model.push_str("+noisy"),
        ChannelSpec::Quantized { .. } => model.push_str("+quantized"),
    }

    let model_bound_at = |t: usize| -> Result<f64> {
        let mut value = match cfg.policy {
            PolicySpec::Static => bound_static(psi_star, l, n, d, t, cfg.step_c, sigma2)?,
            PolicySpec::RoundRobin { m } => {
                bound_round_robin(psi_star, l, n, d, m, t, cfg.step_c, sigma2)?
            }
            PolicySpec::RandomSubset { .. } | PolicySpec::AllToAll { .. } => {
                bound_randomized(psi_star, l, n, d, t, cfg.step_c, sigma2, cfg.delta)?
            }
        };
        if matches!(cfg.gradient, GradientSpec::Minibatch { .. }) {
            value = bound_stochastic(value, l, r, t, cfg.delta)?;
        }
        match cfg.channel {
            ChannelSpec::Perfect => {}
            ChannelSpec::Noisy { gamma2 } => {
                value = bound_noisy(value, l, r, gamma2, n, d, t, cfg.step_c, sigma2, cfg.delta)?;
            }
            ChannelSpec::Quantized { s0, beta } => {
                let zoom = ZoomSchedule::geometric(s0, beta)?;
                let sigma2_per_coord = vec![sigma2; d];
                value = bound_quantized(
                    value,
                    l,
                    r,
                    &zoom,
                    &sigma2_per_coord,
                    n,
                    d,
                    t,
                    cfg.step_c,
                    cfg.delta,
                )?;
            }
        }
        Ok(value)
    };

    let out = out_path.unwrap_or_else(|| default_out_path(trace_path));
    let mut w = BufWriter::new(File::create(&out)?);
    writeln!(w, "t,max_gap,certificate,certificate_violated,model,model_bound")?;
    let mut violations = 0usize;
    let mut final_model = f64::NAN;
    for ((t, gap), (ct, cert)) in measured.iter().zip(&certificate) {
        debug_assert_eq!(t, ct);
        let violated = *gap > cert * (1.0 + VIOLATION_SLACK);
        if violated {
            violations += 1;
        }
        let mb = model_bound_at(*t)?;
        final_model = mb;
        writeln!(w, "{t},{gap},{cert},{violated},{model},{mb}")?;
    }
    w.flush().map_err(Error::Io)?;

    Ok(BoundsOutcome {
        out_path: out,
        rows: measured.len(),
        violations,
        final_measured: measured.last().expect("nonempty").1,
        final_certificate: certificate.last().expect("nonempty").1,
        model,
        final_model_bound: final_model,
    })
}
