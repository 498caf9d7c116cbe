//! Curated experiment grids: ready-to-run config sets for the three
//! problem families, with one shared centralized reference per grid so
//! every variant reports gaps against the same target.
//!
//! Each preset fans the caller's master seed out into independent streams
//! for data, schedule, channel, minibatch, and test-set generation, so two
//! presets built from the same seed are identical and variants within a
//! grid see coupled randomness where that makes comparisons sharper (all
//! hinge variants share one subset schedule, for example).

use crate::channel::ChannelModel;
use crate::engine::{centralized_reference, ReferenceMode, ReferenceSpec, RunConfig};
use crate::error::Result;
use crate::objectives::{
    gen_linreg, gen_robust, gen_svm, gen_svm_test_set, GradientMode, LinregSpec, RobustSpec,
    SvmSpec,
};
use crate::schedule::SharePolicy;
use crate::seeding::component_seed;
use crate::topology::{make_full, make_ring, mixing_from_adjacency};

/// Step-size scale for the hinge grid.
pub const SVM_STEP_C: f64 = 0.05;
/// Class-mean scale: means sit at +-(2/sqrt(d)) 1, far enough apart that a
/// good separator exceeds 90% held-out accuracy.
pub const SVM_MU_SCALE: f64 = 2.0;
/// Subset sizes traded against convergence in the hinge grid: no sharing,
/// then roughly a quarter, half, and all of the d = 30 coordinates.
pub const SVM_SUBSET_SIZES: [usize; 4] = [0, 8, 15, 30];
pub const SVM_TEST_PER_CLASS: usize = 500;

/// Step-size scale for the least-squares grid.
pub const LINREG_STEP_C: f64 = 0.015;
/// Total noise power of the noisy-link variant.
pub const LINREG_NOISE_GAMMA2: f64 = 1.0;
/// Minibatch size of the stochastic variant.
pub const LINREG_BATCH: usize = 4;

/// Step-size scale for the robust-regression grid.
pub const ROBUST_STEP_C: f64 = 0.15;
/// Coordinates exchanged per step by both scheduling variants, so the two
/// policies spend identical communication budgets.
pub const ROBUST_BLOCK: usize = 5;

pub const PRESET_DEFAULT_STEPS: usize = 2000;
const PRESET_RECORD_EVERY: usize = 20;

#[derive(Debug, Clone)]
pub struct PresetRun {
    pub label: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: String,
    pub runs: Vec<PresetRun>,
}

impl Preset {
    pub fn run_labeled(&self, label: &str) -> Option<&PresetRun> {
        self.runs.iter().find(|r| r.label == label)
    }
}

/// Hinge classification over subsets of increasing size on the complete
/// graph: the no-communication baseline against fractional sharing.
pub fn svm_preset(seed: u64, steps: usize) -> Result<Preset> {
    let (n, m, d) = (10, 10, 30);
    let spec = SvmSpec { mu_scale: SVM_MU_SCALE, ..SvmSpec::new(n, m, d) };
    let problem = gen_svm(&spec, component_seed(seed, "data"))?;
    let test_set = gen_svm_test_set(&spec, SVM_TEST_PER_CLASS, component_seed(seed, "test"));
    let reference = centralized_reference(&problem, ReferenceMode::Auto { horizon: steps })?;
    let mix = mixing_from_adjacency(make_full(n)?.adjacency())?;
    let schedule_seed = component_seed(seed, "schedule");
    let mut runs = Vec::new();
    for sub in SVM_SUBSET_SIZES {
        let policy = SharePolicy::random_subset(mix.clone(), sub, d, schedule_seed)?;
        let mut config = RunConfig::new(problem.clone(), policy, steps, SVM_STEP_C);
        config.reference = ReferenceSpec::Fixed(reference.clone());
        config.record_every = PRESET_RECORD_EVERY;
        config.test_set = Some(test_set.clone());
        runs.push(PresetRun { label: format!("subset-{sub}"), config });
    }
    Ok(Preset { name: "svm".into(), runs })
}

/// Least squares on the complete graph with full coordinate sharing:
/// exact gradients, small minibatches, and noisy links side by side.
pub fn linreg_preset(seed: u64, steps: usize) -> Result<Preset> {
    let (n, m, d) = (10, 20, 30);
    let problem = gen_linreg(&LinregSpec::new(n, m, d), component_seed(seed, "data"))?;
    let reference = centralized_reference(&problem, ReferenceMode::Auto { horizon: steps })?;
    let mix = mixing_from_adjacency(make_full(n)?.adjacency())?;
    let policy = SharePolicy::static_uniform(mix, d)?;
    let base = {
        let mut config = RunConfig::new(problem, policy, steps, LINREG_STEP_C);
        config.reference = ReferenceSpec::Fixed(reference);
        config.record_every = PRESET_RECORD_EVERY;
        config
    };
    let mut runs = Vec::new();
    runs.push(PresetRun { label: "exact".into(), config: base.clone() });
    let mut minibatch = base.clone();
    minibatch.gradient =
        GradientMode::Minibatch { b: LINREG_BATCH, seed: component_seed(seed, "minibatch") };
    runs.push(PresetRun { label: format!("minibatch-{LINREG_BATCH}"), config: minibatch });
    let mut noisy = base;
    noisy.channel = ChannelModel::noisy(LINREG_NOISE_GAMMA2, component_seed(seed, "channel"))?;
    runs.push(PresetRun { label: "noisy".into(), config: noisy });
    Ok(Preset { name: "linreg".into(), runs })
}

/// Robust l1 regression on the simplex: round-robin against random subsets
/// at the same per-step budget, on the complete graph and on a circle.
pub fn robust_preset(seed: u64, steps: usize) -> Result<Preset> {
    let (n, m, d) = (10, 10, 20);
    let problem = gen_robust(&RobustSpec::new(n, m, d), component_seed(seed, "data"))?;
    let reference = centralized_reference(&problem, ReferenceMode::Auto { horizon: steps })?;
    let schedule_seed = component_seed(seed, "schedule");
    let mut runs = Vec::new();
    for (graph_label, graph) in [("full", make_full(n)?), ("ring", make_ring(n, 1)?)] {
        let mix = mixing_from_adjacency(graph.adjacency())?;
        for policy_label in ["rr", "subset"] {
            let policy = match policy_label {
                "rr" => SharePolicy::round_robin(mix.clone(), ROBUST_BLOCK, d)?,
                _ => SharePolicy::random_subset(mix.clone(), ROBUST_BLOCK, d, schedule_seed)?,
            };
            let mut config = RunConfig::new(problem.clone(), policy, steps, ROBUST_STEP_C);
            config.reference = ReferenceSpec::Fixed(reference.clone());
            config.record_every = PRESET_RECORD_EVERY;
            runs.push(PresetRun { label: format!("{policy_label}-{graph_label}"), config });
        }
    }
    Ok(Preset { name: "robust".into(), runs })
}
