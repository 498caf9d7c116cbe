//! Link models between nodes: perfect, Gaussian-noisy, and quantized.
//!
//! Noisy links add an independent zero-mean Gaussian with per-component
//! variance `gamma^2 / d` to every transmitted component; the draw for link
//! (i, j) at step t, component k is keyed by `(seed, i, j, t, k)` and is
//! therefore reproducible and order-independent.
//!
//! Quantized links never carry real numbers. The sender transmits the
//! integer symbol
//!
//! ```text
//!   u = floor(delta / s(t) + dither)
//! ```
//!
//! for the change `delta` of its dual coordinate, with `s(t)` a shrinking
//! "zoom" step (geometric by default) known to everyone. The shared dither
//! for (sender, k, t) is drawn uniformly from [-1/2, 1/2); the sender feeds
//! `dither + 1/2` (a value in [0, 1)) into the floor above, which makes the
//! quantizer an unbiased randomized rounding with reconstruction error
//! strictly inside (-s(t), s(t)). Receivers use `s(t) * u` directly; no
//! dither subtraction happens anywhere.

use ndarray::Array1;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seeding;

// ---------- Zoom schedule ----------

/// Geometric quantizer step s(t) = s0 * beta^t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoomSchedule {
    s0: f64,
    beta: f64,
}

impl ZoomSchedule {
    /// `beta = 1` (a constant step) is accepted for analysis and tests;
    /// shrinking schedules need `beta < 1`.
    pub fn geometric(s0: f64, beta: f64) -> Result<Self> {
        if !(s0 > 0.0 && s0.is_finite()) {
            return Err(Error::config(format!("zoom step s0 must be positive, got {s0}")));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::config(format!("zoom factor beta must lie in (0, 1], got {beta}")));
        }
        Ok(ZoomSchedule { s0, beta })
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn value(&self, t: usize) -> f64 {
        self.s0 * self.beta.powi(t as i32)
    }
}

impl Default for ZoomSchedule {
    fn default() -> Self {
        ZoomSchedule { s0: 1.0, beta: 0.995 }
    }
}

// ---------- Channel models ----------

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    Perfect,
    Noisy { gamma2: f64, seed: u64 },
    Quantized { zoom: ZoomSchedule, seed: u64 },
}

impl ChannelModel {
    pub fn noisy(gamma2: f64, seed: u64) -> Result<Self> {
        if !(gamma2 >= 0.0 && gamma2.is_finite()) {
            return Err(Error::config(format!("noise power gamma2 must be nonnegative, got {gamma2}")));
        }
        Ok(ChannelModel::Noisy { gamma2, seed })
    }

    pub fn quantized(zoom: ZoomSchedule, seed: u64) -> Self {
        ChannelModel::Quantized { zoom, seed }
    }
}

// ---------- Transmission primitives ----------

/// A perfect link returns the payload untouched.
pub fn transmit_perfect(z: &Array1<f64>) -> Array1<f64> {
    z.clone()
}

/// Standard-normal draw for component k of the directed link (i, j) at step
/// t. The simulator scales it by sqrt(gamma2 / d) itself when it works one
/// coordinate at a time.
pub fn noise_component(seed: u64, link: (usize, usize), t: usize, k: usize) -> f64 {
    let (i, j) = link;
    let mut rng = seeding::stream_rng(seed, &[i as u64, j as u64, t as u64, k as u64]);
    StandardNormal.sample(&mut rng)
}

/// Noisy transmission of `z` over the directed link (i, j) at step t.
/// Component k is perturbed by its own keyed Gaussian draw.
pub fn transmit_noisy(
    z: &Array1<f64>,
    link: (usize, usize),
    t: usize,
    gamma2: f64,
    seed: u64,
) -> Result<Array1<f64>> {
    if !(gamma2 >= 0.0 && gamma2.is_finite()) {
        return Err(Error::config(format!("noise power gamma2 must be nonnegative, got {gamma2}")));
    }
    let d = z.len();
    let std = (gamma2 / d as f64).sqrt();
    let mut out = z.clone();
    for (k, v) in out.iter_mut().enumerate() {
        *v += std * noise_component(seed, link, t, k);
    }
    Ok(out)
}

/// Shared dither for (sender, component k, step t), uniform on [-1/2, 1/2).
/// Every node reproduces it from the seed without communication.
pub fn dither_at(seed: u64, sender: usize, k: usize, t: usize) -> f64 {
    let mut rng = seeding::stream_rng(seed, &[sender as u64, k as u64, t as u64]);
    rng.gen::<f64>() - 0.5
}

/// Largest magnitude of `delta / s + dither` that still quantizes exactly.
/// Beyond 2^53 the float floor no longer identifies an exact integer.
const QUANTIZER_RANGE: f64 = 9.0e15;

/// Integer symbol floor(delta / s + dither) for quantizer step `s`.
pub fn quantize_delta(delta: f64, s: f64, dither: f64) -> Result<i64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::config(format!("quantizer step must be positive, got {s}")));
    }
    if !delta.is_finite() || !dither.is_finite() {
        return Err(Error::numerical("non-finite input to quantize_delta"));
    }
    let scaled = delta / s + dither;
    if scaled.abs() >= QUANTIZER_RANGE {
        return Err(Error::numerical(format!(
            "quantizer overflow: |delta/s + dither| = {} exceeds the exact integer range \
             (zoom step {s} has shrunk too far below the signal)",
            scaled.abs()
        )));
    }
    Ok(scaled.floor() as i64)
}

/// Receiver-side value of a symbol: s(t) * u, used directly.
pub fn reconstruct(symbol: i64, s: f64) -> f64 {
    s * symbol as f64
}

// ---------- Quantizer state ----------

/// Per-node baseline for delta encoding: the dual vector whose change is
/// being transmitted. Sender and receivers advance identical copies, so
/// reconstructions agree exactly (integers times a shared scale).
#[derive(Debug, Clone)]
pub struct QuantizerState {
    prev_z: Array1<f64>,
}

impl QuantizerState {
    /// Baseline starts at the zero dual state.
    pub fn new(d: usize) -> Self {
        QuantizerState { prev_z: Array1::zeros(d) }
    }

    pub fn prev_z(&self) -> &Array1<f64> {
        &self.prev_z
    }

    pub fn delta(&self, z: &Array1<f64>) -> Array1<f64> {
        z - &self.prev_z
    }

    pub fn advance(&mut self, z: &Array1<f64>) {
        self.prev_z.assign(z);
    }
}

// ---------- Message log ----------

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Real-valued component (perfect or noisy link).
    Real(f64),
    /// Quantized link: only the integer symbol travels. Scale and the true
    /// delta are retained for audits, not transmitted.
    Symbol { symbol: i64, scale: f64, true_delta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageRecord {
    pub t: usize,
    pub sender: usize,
    pub receiver: usize,
    pub coord: usize,
    pub payload: Payload,
}

/// CSV emission: columns (t, sender, receiver, coordinate, payload) where
/// payload is the transmitted value (the bare integer for quantized links).
pub fn write_message_log_csv(records: &[MessageRecord], w: &mut impl std::io::Write) -> Result<()> {
    writeln!(w, "t,sender,receiver,coordinate,payload")?;
    for r in records {
        match &r.payload {
            Payload::Real(v) => writeln!(w, "{},{},{},{},{}", r.t, r.sender, r.receiver, r.coord, v)?,
            Payload::Symbol { symbol, .. } => {
                writeln!(w, "{},{},{},{},{}", r.t, r.sender, r.receiver, r.coord, symbol)?
            }
        }
    }
    Ok(())
}
