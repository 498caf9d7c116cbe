//! Minimal library walkthrough: build a problem, pick a graph and a
//! coordinate-sharing policy, run the simulator, and read the certificate.
//!
//! Run with `cargo run --example quickstart`.

use dcda::bounds;
use dcda::engine::{dcda_run, RunConfig};
use dcda::objectives::{gen_linreg, lipschitz_estimate, LinregSpec};
use dcda::schedule::SharePolicy;
use dcda::topology::{make_ring, mixing_from_adjacency};

fn main() -> dcda::Result<()> {
    // Four nodes, each holding 10 noisy linear measurements of a shared
    // 6-dimensional signal.
    let problem = gen_linreg(&LinregSpec::new(4, 10, 6), 42)?;

    // Neighbors on a cycle; every step the nodes average a random 3 of the
    // 6 dual coordinates with them.
    let mix = mixing_from_adjacency(make_ring(4, 1)?.adjacency())?;
    let policy = SharePolicy::random_subset(mix, 3, 6, 7)?;

    let cfg = RunConfig::new(problem, policy, 500, 0.05);
    let trace = dcda_run(&cfg)?;

    let last = trace.last();
    let gaps = trace.gaps(last)?;
    let worst = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!("after {} steps: worst node gap {worst:.3e}", last.t);

    // The same trace feeds a runnable convergence certificate: an upper
    // bound on every node's gap at every recorded step, computed only from
    // observed quantities. Valid runs sit below it.
    let lip = lipschitz_estimate(&cfg.problem);
    let reference = trace.reference.as_ref().expect("Auto mode solved one");
    let psi_star = cfg.problem.prox.psi_nonneg(&reference.x);
    let cert = bounds::bound_thm1_series(&trace, psi_star, lip.value)?;
    let cert_last = cert.last().unwrap();
    let cert_worst = cert_last.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!("certificate at T:   worst node bound {cert_worst:.3e}");
    assert!(worst <= cert_worst);
    Ok(())
}
