//! Turn a parsed [`ExperimentConfig`] into library objects, run it, and
//! write the trace, the optional message log, and the re-parsable sidecar.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dcda::channel::{ChannelModel, ZoomSchedule};
use dcda::engine::{
    centralized_reference, dcda_run, write_trace_csv, Reference, ReferenceMode, ReferenceSpec,
    RunConfig, RunTrace,
};
use dcda::objectives::{
    gen_linreg, gen_robust, gen_svm, gen_svm_test_set, GradientMode, LinregSpec, Problem,
    RobustSpec, SvmSpec, TestSet,
};
use dcda::presets::SVM_TEST_PER_CLASS;
use dcda::schedule::SharePolicy;
use dcda::seeding::component_seed;
use dcda::topology::{make_full, make_random, make_ring, mixing_from_adjacency, MixingMatrix};
use dcda::{Error, Result};

use crate::config::{
    render_config, ChannelSpec, ExperimentConfig, GradientSpec, GraphSpec, PolicySpec,
    ProblemSpec, RefModeSpec,
};

/// Instantiate the problem data for a config. Deterministic in the seed.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    let data_seed = component_seed(cfg.seed, "data");
    match cfg.problem {
        ProblemSpec::Svm { n, m, d, mu_scale, sigma, c } => {
            gen_svm(&SvmSpec { n, m, d, mu_scale, sigma, c }, data_seed)
        }
        ProblemSpec::Linreg { n, m, d, noise_sigma } => {
            gen_linreg(&LinregSpec { n, m, d, noise_sigma }, data_seed)
        }
        ProblemSpec::Robust { n, m, d, outlier_prob, outlier_sigma, inlier_sigma } => {
            gen_robust(&RobustSpec { n, m, d, outlier_prob, outlier_sigma, inlier_sigma }, data_seed)
        }
    }
}

fn build_test_set(cfg: &ExperimentConfig) -> Option<TestSet> {
    match cfg.problem {
        ProblemSpec::Svm { n, m, d, mu_scale, sigma, c } => Some(gen_svm_test_set(
            &SvmSpec { n, m, d, mu_scale, sigma, c },
            SVM_TEST_PER_CLASS,
            component_seed(cfg.seed, "test"),
        )),
        _ => None,
    }
}

/// The mixing matrix of the configured graph, or `None` for all-to-all.
pub fn build_mixing(cfg: &ExperimentConfig) -> Result<Option<MixingMatrix>> {
    let n = cfg.problem.n();
    let graph = match cfg.graph {
        None => return Ok(None),
        Some(GraphSpec::Full) => make_full(n)?,
        Some(GraphSpec::Ring { l }) => make_ring(n, l)?,
        Some(GraphSpec::Random { p }) => make_random(n, p, component_seed(cfg.seed, "graph"))?,
    };
    Ok(Some(mixing_from_adjacency(graph.adjacency())?))
}

pub fn build_policy(cfg: &ExperimentConfig) -> Result<SharePolicy> {
    let (n, d) = (cfg.problem.n(), cfg.problem.d());
    let schedule_seed = component_seed(cfg.seed, "schedule");
    match cfg.policy {
        PolicySpec::AllToAll { rho } => SharePolicy::all_to_all(n, d, rho, schedule_seed),
        kind => {
            let mix = build_mixing(cfg)?.expect("graph present unless all-to-all");
            match kind {
                PolicySpec::Static => SharePolicy::static_uniform(mix, d),
                PolicySpec::RoundRobin { m } => SharePolicy::round_robin(mix, m, d),
                PolicySpec::RandomSubset { m } => SharePolicy::random_subset(mix, m, d, schedule_seed),
                PolicySpec::AllToAll { .. } => unreachable!(),
            }
        }
    }
}

fn build_channel(cfg: &ExperimentConfig) -> Result<ChannelModel> {
    let channel_seed = component_seed(cfg.seed, "channel");
    Ok(match cfg.channel {
        ChannelSpec::Perfect => ChannelModel::Perfect,
        ChannelSpec::Noisy { gamma2 } => ChannelModel::noisy(gamma2, channel_seed)?,
        ChannelSpec::Quantized { s0, beta } => {
            ChannelModel::Quantized { zoom: ZoomSchedule::geometric(s0, beta)?, seed: channel_seed }
        }
    })
}

/// Resolve the configured reference mode against a concrete problem.
pub fn build_reference(cfg: &ExperimentConfig, problem: &Problem) -> Result<ReferenceSpec> {
    Ok(match cfg.reference {
        RefModeSpec::Auto => ReferenceSpec::Auto,
        RefModeSpec::Skip => ReferenceSpec::Skip,
        RefModeSpec::ClosedForm => {
            ReferenceSpec::Fixed(centralized_reference(problem, ReferenceMode::ClosedForm)?)
        }
        RefModeSpec::DualAveraging { iters } => {
            ReferenceSpec::Fixed(centralized_reference(problem, ReferenceMode::DualAveraging { iters })?)
        }
    })
}

/// Full translation into a library [`RunConfig`].
pub fn build_run(cfg: &ExperimentConfig) -> Result<RunConfig> {
    let problem = build_problem(cfg)?;
    let policy = build_policy(cfg)?;
    let reference = build_reference(cfg, &problem)?;
    let mut run = RunConfig::new(problem, policy, cfg.steps, cfg.step_c);
    run.channel = build_channel(cfg)?;
    run.gradient = match cfg.gradient {
        GradientSpec::Exact => GradientMode::Exact,
        GradientSpec::Minibatch { b } => {
            GradientMode::Minibatch { b, seed: component_seed(cfg.seed, "minibatch") }
        }
    };
    run.reference = reference;
    run.record_every = cfg.record_every;
    run.log_messages = cfg.messages_path.is_some();
    run.test_set = build_test_set(cfg);
    Ok(run)
}

/// Default trace path: the config file name with its extension replaced by
/// `trace.csv`, in the same directory.
pub fn default_trace_path(config_path: &Path) -> PathBuf {
    config_path.with_extension("trace.csv")
}

pub fn sidecar_path(trace_path: &Path) -> PathBuf {
    let mut s = trace_path.as_os_str().to_os_string();
    s.push(".meta");
    PathBuf::from(s)
}

pub struct ExecOutcome {
    pub trace: RunTrace,
    pub trace_path: PathBuf,
    pub sidecar_path: PathBuf,
    pub messages_path: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Extra sidecar lines describing run results. Comments only; the sidecar
/// still parses as a plain config.
fn sidecar_extras(trace: &RunTrace) -> Vec<(String, String)> {
    let mut extras = Vec::new();
    if let Some(reference) = &trace.reference {
        extras.push(("reference.f".to_string(), format!("{}", reference.f)));
        extras.push(("reference.provenance".to_string(), reference.provenance.clone()));
        if let Some(w) = &reference.warning {
            extras.push(("reference.warning".to_string(), w.clone()));
        }
        let worst = trace
            .last()
            .f
            .iter()
            .map(|f| f - reference.f)
            .fold(f64::MIN, f64::max);
        extras.push(("final.worst_gap".to_string(), format!("{worst}")));
    }
    extras.push(("final.steps".to_string(), trace.steps.to_string()));
    extras.push(("grad_sup".to_string(), format!("{}", trace.grad_sup)));
    if let Some(drift) = trace.avg_dual_drift {
        extras.push(("audit.avg_dual_drift".to_string(), format!("{drift}")));
    }
    extras
}

/// Run a config and write its files. `cfg.trace_path` is filled in with the
/// resolved path so the caller holds exactly what the sidecar says.
pub fn execute(cfg: &mut ExperimentConfig, config_path: &Path) -> Result<ExecOutcome> {
    if cfg.reference == RefModeSpec::Skip {
        return Err(Error::config(
            "reference.mode = skip leaves no optimality gap to trace; use auto, closed_form, or dual_averaging",
        ));
    }
    let trace_path = match &cfg.trace_path {
        Some(p) => PathBuf::from(p),
        None => default_trace_path(config_path),
    };
    cfg.trace_path = Some(trace_path.to_string_lossy().into_owned());

    let run = build_run(cfg)?;
    let trace = dcda_run(&run)?;

    let mut w = create(&trace_path)?;
    write_trace_csv(&trace, &mut w)?;
    w.flush().map_err(Error::Io)?;

    let mut messages_path = None;
    if let Some(mp) = &cfg.messages_path {
        let path = PathBuf::from(mp);
        let records = trace
            .messages
            .as_ref()
            .expect("log_messages was set, so the trace carries records");
        let mut w = create(&path)?;
        dcda::channel::write_message_log_csv(records, &mut w)?;
        w.flush().map_err(Error::Io)?;
        messages_path = Some(path);
    }

    let side = sidecar_path(&trace_path);
    let mut w = create(&side)?;
    w.write_all(render_config(cfg, &sidecar_extras(&trace)).as_bytes())
        .map_err(Error::Io)?;
    w.flush().map_err(Error::Io)?;

    Ok(ExecOutcome { trace, trace_path, sidecar_path: side, messages_path })
}

/// One line of human-readable outcome for stdout.
pub fn describe(outcome: &ExecOutcome) -> String {
    let trace = &outcome.trace;
    let mut parts = vec![format!("wrote {}", outcome.trace_path.display())];
    if let Some(reference) = &trace.reference {
        let worst = trace
            .last()
            .f
            .iter()
            .map(|f| f - reference.f)
            .fold(f64::MIN, f64::max);
        parts.push(format!("final worst gap {worst:.6e}"));
        parts.push(format!("reference {}", reference.provenance));
    }
    parts.join(", ")
}

/// Reference value lookup used by bound evaluation, which needs f star and
/// the minimizer itself rather than a trace.
pub fn reference_for_bounds(cfg: &ExperimentConfig, problem: &Problem) -> Result<Reference> {
    match build_reference(cfg, problem)? {
        ReferenceSpec::Fixed(r) => Ok(r),
        ReferenceSpec::Auto => {
            centralized_reference(problem, ReferenceMode::Auto { horizon: cfg.steps })
        }
        ReferenceSpec::Skip => Err(Error::config(
            "bound evaluation needs a reference; reference.mode = skip does not provide one",
        )),
    }
}
