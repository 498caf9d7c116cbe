//! Distributed coordinate dual averaging: a deterministic simulator and
//! certificate toolkit.
//!
//! A network of `n` nodes cooperatively minimizes a sum of per-node convex
//! objectives. Each node keeps a dual accumulator `z_i`, and at every step the
//! nodes average a *subset* of dual coordinates with their graph neighbors
//! (full sharing, round-robin blocks, or randomized subsets), add a local
//! subgradient, and map the dual state to a primal iterate through a proximal
//! projection. Links may be perfect, Gaussian-noisy, or quantized with a
//! shrinking step ("zoom") schedule.
//!
//! ```text
//!   z_i --(share coords via P^k(t))--> mix --(+ g_i)--> z_i'
//!                                                        |
//!                                  x_i' = prox_project(z_i', alpha(t))
//! ```
//!
//! Everything is seeded and bit-reproducible: identical configs produce
//! identical traces. The [`bounds`] module evaluates runnable convergence
//! bounds so each simulated trace can be checked against its certificate.
//!
//! Module map:
//! - [`prox`]: norms, proximal projections, step-size schedule
//! - [`topology`]: graphs, doubly stochastic mixing matrices, spectral gap
//! - [`schedule`]: coordinate-sharing policies (which coords mix when)
//! - [`channel`]: link models (perfect / noisy / quantized with dither)
//! - [`objectives`]: problem generators, subgradient oracles
//! - [`engine`]: the simulator loop, reference solver, run traces
//! - [`bounds`]: closed-form bound evaluators and trace certificates
//! - [`presets`]: canned experiment grids used by the CLI

pub mod bounds;
pub mod channel;
pub mod engine;
pub mod error;
pub mod objectives;
pub mod presets;
pub mod prox;
pub mod schedule;
pub mod seeding;
pub mod topology;

pub use error::{Error, Result};
