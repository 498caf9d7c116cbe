//! Runnable convergence certificates.
//!
//! Two kinds of evaluator live here. The trace-driven certificate
//! ([`bound_thm1`]) takes measured quantities (step sizes, average-gradient
//! norms, dual consensus deviations) from a finished run together with two
//! problem constants and produces, for every node and every prefix length,
//! a number that must dominate that node's optimality gap. The closed-form
//! evaluators ([`bound_static`] and friends) predict gaps ahead of time
//! from policy and channel parameters alone.
//!
//! All formulas use natural logarithms. `psi_star` always means the prox
//! function evaluated at the comparator after shifting it to be zero at
//! its minimum over the feasible set (see `ProxFunction::psi_nonneg`);
//! without that normalization the leading term can go negative and the
//! certificate would be unsound.

use crate::channel::ZoomSchedule;
use crate::engine::{RunTrace, TraceRow};
use crate::error::{Error, Result};
use crate::prox::StepSchedule;

fn check_horizon(t_steps: usize) -> Result<()> {
    if t_steps == 0 {
        return Err(Error::config("bound needs a positive horizon"));
    }
    Ok(())
}

fn check_constants(psi_star: f64, l: f64) -> Result<()> {
    if !(psi_star >= 0.0 && psi_star.is_finite()) {
        return Err(Error::config(format!("psi_star must be a nonnegative shifted value, got {psi_star}")));
    }
    if !(l >= 0.0 && l.is_finite()) {
        return Err(Error::config(format!("lipschitz constant must be nonnegative, got {l}")));
    }
    Ok(())
}

fn check_gap_denominator(sigma2: f64, what: &str) -> Result<()> {
    if !((0.0..1.0).contains(&sigma2)) {
        return Err(Error::config(format!("{what} must lie in [0, 1), got {sigma2}")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::config(format!("confidence level delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

// ---------- Trace-driven certificate ----------

/// Certificate values at every recorded prefix, outer index = prefix
/// (step t = index + 1), inner index = node. The trace must have been
/// recorded at every step.
pub fn bound_thm1_series(trace: &RunTrace, psi_star: f64, l: f64) -> Result<Vec<Vec<f64>>> {
    check_constants(psi_star, l)?;
    for (idx, rec) in trace.records.iter().enumerate() {
        if rec.t != idx + 1 {
            return Err(Error::config(
                "trace-driven certificate needs a record at every step (record_every = 1)",
            ));
        }
    }
    if trace.records.is_empty() {
        return Err(Error::config("trace has no records"));
    }
    let n = trace.records[0].f.len();
    let nf = n as f64;
    let mut sum_alpha_gbar2 = 0.0_f64;
    let mut sum_alpha_dev_total = 0.0_f64;
    let mut sum_alpha_dev = vec![0.0_f64; n];
    let mut out = Vec::with_capacity(trace.records.len());
    for (idx, rec) in trace.records.iter().enumerate() {
        let t = idx + 1;
        // alpha(t - 1): alpha(0) equals alpha(1) for the 1/sqrt schedule.
        let alpha_prev = if t == 1 { trace.records[0].alpha } else { trace.records[t - 2].alpha };
        sum_alpha_gbar2 += alpha_prev * rec.gbar_norm * rec.gbar_norm;
        for (acc, dev) in sum_alpha_dev.iter_mut().zip(rec.dual_dev.iter()) {
            *acc += alpha_prev * dev;
            sum_alpha_dev_total += alpha_prev * dev;
        }
        let tf = t as f64;
        let head = psi_star / (tf * rec.alpha) + sum_alpha_gbar2 / tf
            + 2.0 * l * sum_alpha_dev_total / (nf * tf);
        let row: Vec<f64> =
            sum_alpha_dev.iter().map(|dev| nf * (head + l * dev / tf)).collect();
        out.push(row);
    }
    Ok(out)
}

/// Certificate at the full horizon, one value per node.
pub fn bound_thm1(trace: &RunTrace, psi_star: f64, l: f64) -> Result<Vec<f64>> {
    let mut series = bound_thm1_series(trace, psi_star, l)?;
    Ok(series.pop().expect("series has at least one prefix"))
}

/// Certificate recomputed from an exported trace file. File rows only keep
/// the worst dual deviation across nodes, so every per-node deviation is
/// replaced by that maximum; the result is a single, slightly looser value
/// per prefix that still dominates every node's gap.
pub fn bound_thm1_from_rows(rows: &[TraceRow], psi_star: f64, l: f64) -> Result<Vec<(usize, f64)>> {
    check_constants(psi_star, l)?;
    if rows.is_empty() {
        return Err(Error::config("trace rows are empty"));
    }
    let n = rows.iter().take_while(|r| r.t == rows[0].t).count();
    if n == 0 || rows.len() % n != 0 {
        return Err(Error::config("trace rows are not grouped by step"));
    }
    let steps = rows.len() / n;
    let nf = n as f64;
    let mut sum_alpha_gbar2 = 0.0_f64;
    let mut sum_alpha_dev = 0.0_f64;
    let mut out = Vec::with_capacity(steps);
    for ti in 0..steps {
        let rec = &rows[ti * n];
        if rec.t != ti + 1 {
            return Err(Error::config(
                "trace-driven certificate needs a row for every step (record_every = 1)",
            ));
        }
        for node in 0..n {
            if rows[ti * n + node].node != node {
                return Err(Error::config("trace rows are not ordered by node within a step"));
            }
        }
        let alpha_prev = if ti == 0 { rows[0].alpha } else { rows[(ti - 1) * n].alpha };
        sum_alpha_gbar2 += alpha_prev * rec.gbar_norm * rec.gbar_norm;
        sum_alpha_dev += alpha_prev * rec.dual_consensus;
        let tf = (ti + 1) as f64;
        let value = nf
            * (psi_star / (tf * rec.alpha)
                + sum_alpha_gbar2 / tf
                + 3.0 * l * sum_alpha_dev / tf);
        out.push((ti + 1, value));
    }
    Ok(out)
}

// ---------- Closed-form policy bounds ----------

/// Sum over t = 1..T of alpha(t - 1) for the 1/sqrt(t) schedule.
fn alpha_prev_sum(schedule: &StepSchedule, t_steps: usize) -> f64 {
    (1..=t_steps).map(|t| schedule.alpha(t - 1)).sum()
}

/// Static policies: every coordinate mixes through its fixed matrix each
/// step. `sigma2_max` is the largest second singular value across the
/// per-coordinate matrices.
pub fn bound_static(
    psi_star: f64,
    l: f64,
    n: usize,
    d: usize,
    t_steps: usize,
    step_c: f64,
    sigma2_max: f64,
) -> Result<f64> {
    check_constants(psi_star, l)?;
    check_horizon(t_steps)?;
    check_gap_denominator(sigma2_max, "sigma2_max")?;
    if n == 0 || d == 0 {
        return Err(Error::config("n and d must be positive"));
    }
    let schedule = StepSchedule::new(step_c)?;
    let tf = t_steps as f64;
    let log_term = ((n as f64).sqrt() * d as f64 * tf).ln();
    let per_step = 2.0 * (d.min(n) as f64) * log_term / (1.0 - sigma2_max) + 3.0;
    Ok(psi_star / (tf * schedule.alpha(t_steps))
        + l * l / tf * 4.0 * per_step * alpha_prev_sum(&schedule, t_steps))
}

/// Round-robin blocks of m coordinates over a base matrix with second
/// singular value `sigma2`.
#[allow(clippy::too_many_arguments)]
pub fn bound_round_robin(
    psi_star: f64,
    l: f64,
    n: usize,
    d: usize,
    m: usize,
    t_steps: usize,
    step_c: f64,
    sigma2: f64,
) -> Result<f64> {
    check_constants(psi_star, l)?;
    check_horizon(t_steps)?;
    check_gap_denominator(sigma2, "sigma2")?;
    if n == 0 || d == 0 || m == 0 || m > d || d % m != 0 {
        return Err(Error::config("round-robin bound needs m in 1..=d with m dividing d"));
    }
    let schedule = StepSchedule::new(step_c)?;
    let tf = t_steps as f64;
    let log_term = (2.0 * (n as f64).sqrt() * tf).ln();
    let per_step = 10.0 + 12.0 * d as f64 * log_term / (m as f64 * (1.0 - sigma2));
    Ok(psi_star / (tf * schedule.alpha(t_steps))
        + l * l / tf * per_step * alpha_prev_sum(&schedule, t_steps))
}

/// Randomized subset or gossip policies. `sigma2_esq` is the second
/// singular value of the expected squared mixing matrix
/// (see `schedule::expected_squared_mixing`); the statement holds with
/// probability at least 1 - delta.
#[allow(clippy::too_many_arguments)]
pub fn bound_randomized(
    psi_star: f64,
    l: f64,
    n: usize,
    d: usize,
    t_steps: usize,
    step_c: f64,
    sigma2_esq: f64,
    delta: f64,
) -> Result<f64> {
    check_constants(psi_star, l)?;
    check_horizon(t_steps)?;
    check_gap_denominator(sigma2_esq, "sigma2 of the expected squared mixing matrix")?;
    check_delta(delta)?;
    if n == 0 || d == 0 {
        return Err(Error::config("n and d must be positive"));
    }
    let schedule = StepSchedule::new(step_c)?;
    let tf = t_steps as f64;
    let log_term = (tf * d as f64 * (n as f64).powf(1.0 / 3.0) / delta).ln();
    let per_step = 10.0 + 18.0 * (d.min(n) as f64) * log_term / (1.0 - sigma2_esq);
    Ok(psi_star / (tf * schedule.alpha(t_steps))
        + l * l / tf * per_step * alpha_prev_sum(&schedule, t_steps))
}

/// Stochastic gradients on top of any policy bound: `base` is the
/// deterministic bound, `r` the feasible-set diameter in the primal norm.
/// Holds with probability at least 1 - delta.
pub fn bound_stochastic(base: f64, l: f64, r: f64, t_steps: usize, delta: f64) -> Result<f64> {
    check_horizon(t_steps)?;
    check_delta(delta)?;
    if !(base.is_finite() && l >= 0.0 && r >= 0.0) {
        return Err(Error::config("stochastic bound needs finite base and nonnegative l, r"));
    }
    Ok(base + l * r * (8.0 * (1.0 / delta).ln() / t_steps as f64).sqrt())
}

/// Additive penalty for Gaussian links with total noise power `gamma2`
/// split across d coordinates. Holds with probability at least 1 - delta.
#[allow(clippy::too_many_arguments)]
pub fn bound_noisy(
    base: f64,
    l: f64,
    r: f64,
    gamma2: f64,
    n: usize,
    d: usize,
    t_steps: usize,
    step_c: f64,
    sigma2_max: f64,
    delta: f64,
) -> Result<f64> {
    check_horizon(t_steps)?;
    check_delta(delta)?;
    check_gap_denominator(sigma2_max, "sigma2_max")?;
    if !(base.is_finite() && l >= 0.0 && r >= 0.0 && gamma2 >= 0.0 && gamma2.is_finite()) {
        return Err(Error::config("noisy bound needs finite base and nonnegative l, r, gamma2"));
    }
    if n == 0 || d == 0 {
        return Err(Error::config("n and d must be positive"));
    }
    let schedule = StepSchedule::new(step_c)?;
    let tf = t_steps as f64;
    let (nf, df) = (n as f64, d as f64);
    let gamma = gamma2.sqrt();
    let concentration = gamma * (r + 2.0 * l) * (2.0 * (3.0 / delta).ln() / (nf * tf)).sqrt();
    let drift = gamma2 * (1.0 + (8.0f64).sqrt() * (3.0 / delta).ln().sqrt()) / (nf * df * tf);
    let consensus = 3.0 * l / tf
        * (2.0 * gamma2 * (6.0 * tf * nf * df / delta).ln() / (1.0 - sigma2_max * sigma2_max))
            .sqrt();
    let alpha_sum = alpha_prev_sum(&schedule, t_steps);
    Ok(base + concentration + alpha_sum * (drift + consensus))
}

/// Worst-coordinate accumulated quantization energy
/// nu(t) = max_k sum_{r=0..t} s(r)^2 sigma2_k^{2 (t - r + 1)}, returned
/// for t = 1..=t_steps.
pub fn nu_sequence(zoom: &ZoomSchedule, sigma2_per_coord: &[f64], t_steps: usize) -> Result<Vec<f64>> {
    check_horizon(t_steps)?;
    if sigma2_per_coord.is_empty() {
        return Err(Error::config("nu needs at least one coordinate"));
    }
    for q in sigma2_per_coord {
        if !((0.0..=1.0).contains(q)) {
            return Err(Error::config(format!("per-coordinate sigma2 must lie in [0, 1], got {q}")));
        }
    }
    // nu_k obeys nu_k(t) = q^2 (nu_k(t-1) + s(t)^2) with nu_k(0) = q^2 s(0)^2.
    let mut per_coord: Vec<f64> =
        sigma2_per_coord.iter().map(|q| q * q * zoom.value(0) * zoom.value(0)).collect();
    let mut out = Vec::with_capacity(t_steps);
    for t in 1..=t_steps {
        let s2 = zoom.value(t) * zoom.value(t);
        for (nu, q) in per_coord.iter_mut().zip(sigma2_per_coord.iter()) {
            *nu = q * q * (*nu + s2);
        }
        out.push(per_coord.iter().copied().fold(0.0_f64, f64::max));
    }
    Ok(out)
}

/// Additive penalty for dithered quantized links with zoom schedule s(t).
/// Holds with probability at least 1 - delta.
#[allow(clippy::too_many_arguments)]
pub fn bound_quantized(
    base: f64,
    l: f64,
    r: f64,
    zoom: &ZoomSchedule,
    sigma2_per_coord: &[f64],
    n: usize,
    d: usize,
    t_steps: usize,
    step_c: f64,
    delta: f64,
) -> Result<f64> {
    check_horizon(t_steps)?;
    check_delta(delta)?;
    if !(base.is_finite() && l >= 0.0 && r >= 0.0) {
        return Err(Error::config("quantized bound needs finite base and nonnegative l, r"));
    }
    if n == 0 || d == 0 {
        return Err(Error::config("n and d must be positive"));
    }
    let schedule = StepSchedule::new(step_c)?;
    let nu = nu_sequence(zoom, sigma2_per_coord, t_steps)?;
    let tf = t_steps as f64;
    let (nf, df) = (n as f64, d as f64);
    let s_hat2 = (1..=t_steps).map(|t| zoom.value(t) * zoom.value(t)).sum::<f64>() / tf;
    let concentration = r * (s_hat2 * (1.0 / delta).ln() / tf).sqrt();
    let log_term = (2.0 * tf * nf * df / delta).ln();
    let mut tail = 0.0_f64;
    for t in 1..=t_steps {
        let s = zoom.value(t);
        let drift = (2.0 * s * l + s * s) / (nf * tf);
        let consensus = 3.0 * l / tf * (2.0 * nu[t - 1] * log_term).sqrt();
        tail += schedule.alpha(t - 1) * (drift + consensus);
    }
    Ok(base + concentration + tail)
}
