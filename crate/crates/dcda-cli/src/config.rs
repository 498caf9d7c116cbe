//! Flat `key = value` experiment configuration.
//!
//! A config file is a sequence of lines. Everything from the first `#` on a
//! line is a comment. Non-empty remainders must look like `key = value`;
//! keys are dotted names such as `problem.family` or `channel.gamma2`,
//! values are plain tokens (no quoting). Parsing reports every problem it
//! can find in one pass, each tagged with its line number, instead of
//! stopping at the first.
//!
//! [`render_config`] writes a config back out with all defaults made
//! explicit. Parsing that rendering yields an equal [`ExperimentConfig`],
//! which is what makes run sidecars re-runnable.

use std::collections::BTreeMap;
use std::fmt;

/// Every key the schema accepts. Anything else is rejected with its line.
pub const KNOWN_KEYS: &[&str] = &[
    "problem.family",
    "problem.n",
    "problem.m",
    "problem.d",
    "problem.noise_sigma",
    "problem.mu_scale",
    "problem.sigma",
    "problem.c",
    "problem.outlier_prob",
    "problem.outlier_sigma",
    "problem.inlier_sigma",
    "graph.kind",
    "graph.l",
    "graph.p",
    "policy.kind",
    "policy.m",
    "policy.rho",
    "channel.kind",
    "channel.gamma2",
    "channel.s0",
    "channel.beta",
    "gradient.kind",
    "gradient.b",
    "T",
    "C",
    "seed",
    "record_every",
    "reference.mode",
    "reference.iters",
    "output.trace",
    "output.messages",
    "bounds.delta",
    "bounds.r",
];

/// All problems found while parsing a config, one message per line-tagged
/// error, sorted by line.
#[derive(Debug, Clone)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, msg) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{msg}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Svm { n: usize, m: usize, d: usize, mu_scale: f64, sigma: f64, c: f64 },
    Linreg { n: usize, m: usize, d: usize, noise_sigma: f64 },
    Robust { n: usize, m: usize, d: usize, outlier_prob: f64, outlier_sigma: f64, inlier_sigma: f64 },
}

impl ProblemSpec {
    pub fn family_name(&self) -> &'static str {
        match self {
            ProblemSpec::Svm { .. } => "svm",
            ProblemSpec::Linreg { .. } => "linreg",
            ProblemSpec::Robust { .. } => "robust",
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            ProblemSpec::Svm { n, .. } | ProblemSpec::Linreg { n, .. } | ProblemSpec::Robust { n, .. } => n,
        }
    }

    pub fn m(&self) -> usize {
        match *self {
            ProblemSpec::Svm { m, .. } | ProblemSpec::Linreg { m, .. } | ProblemSpec::Robust { m, .. } => m,
        }
    }

    pub fn d(&self) -> usize {
        match *self {
            ProblemSpec::Svm { d, .. } | ProblemSpec::Linreg { d, .. } | ProblemSpec::Robust { d, .. } => d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphSpec {
    Full,
    Ring { l: usize },
    Random { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicySpec {
    Static,
    RoundRobin { m: usize },
    RandomSubset { m: usize },
    AllToAll { rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelSpec {
    Perfect,
    Noisy { gamma2: f64 },
    Quantized { s0: f64, beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientSpec {
    Exact,
    Minibatch { b: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RefModeSpec {
    Auto,
    ClosedForm,
    DualAveraging { iters: usize },
    Skip,
}

/// A fully resolved experiment description: what [`parse_config`] returns
/// and what the run sidecar serializes.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    /// `None` exactly when the policy is all-to-all, which has no graph.
    pub graph: Option<GraphSpec>,
    pub policy: PolicySpec,
    pub channel: ChannelSpec,
    pub gradient: GradientSpec,
    /// Horizon T.
    pub steps: usize,
    /// Step-size constant C in alpha(t) = C / sqrt(t).
    pub step_c: f64,
    pub seed: u64,
    pub record_every: usize,
    pub reference: RefModeSpec,
    pub trace_path: Option<String>,
    pub messages_path: Option<String>,
    /// Failure probability for the high-probability bounds.
    pub delta: f64,
    /// Feasible-diameter override for bound evaluation on unbounded sets.
    pub r_override: Option<f64>,
}

// Defaults per family: (n, m, d, step constant). The sizes mirror the
// built-in presets so a minimal config runs at a sensible scale.
fn family_defaults(family: &str) -> (usize, usize, usize, f64) {
    match family {
        "svm" => (10, 10, 30, dcda::presets::SVM_STEP_C),
        "linreg" => (10, 20, 30, dcda::presets::LINREG_STEP_C),
        "robust" => (10, 10, 20, dcda::presets::ROBUST_STEP_C),
        _ => unreachable!("validated upstream"),
    }
}

const NO_LINE: usize = usize::MAX;

pub(crate) struct Entry {
    pub line: usize,
    pub value: String,
}

type Errs = Vec<(usize, String)>;

/// First pass: comments, `key = value` shape, duplicates.
pub(crate) fn scan_entries(text: &str, errs: &mut Errs) -> BTreeMap<String, Entry> {
    let mut map: BTreeMap<String, Entry> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let meat = raw.split('#').next().unwrap_or("").trim();
        if meat.is_empty() {
            continue;
        }
        let Some((k, v)) = meat.split_once('=') else {
            errs.push((line, format!("expected `key = value`, got `{meat}`")));
            continue;
        };
        let key = k.trim();
        let value = v.trim();
        if key.is_empty() {
            errs.push((line, "empty key before `=`".to_string()));
            continue;
        }
        if value.is_empty() {
            errs.push((line, format!("key `{key}` has an empty value")));
            continue;
        }
        if let Some(prev) = map.get(key) {
            errs.push((line, format!("duplicate key `{key}` (first set at line {})", prev.line)));
        } else {
            map.insert(key.to_string(), Entry { line, value: value.to_string() });
        }
    }
    map
}

fn get_raw<'a>(map: &'a BTreeMap<String, Entry>, key: &str) -> Option<(&'a str, usize)> {
    map.get(key).map(|e| (e.value.as_str(), e.line))
}

fn get_num<T: std::str::FromStr>(
    map: &BTreeMap<String, Entry>,
    errs: &mut Errs,
    key: &str,
    what: &str,
) -> Option<(T, usize)> {
    let (raw, line) = get_raw(map, key)?;
    match raw.parse::<T>() {
        Ok(v) => Some((v, line)),
        Err(_) => {
            errs.push((line, format!("`{key}` expects {what}, got `{raw}`")));
            None
        }
    }
}

fn get_positive_usize(
    map: &BTreeMap<String, Entry>,
    errs: &mut Errs,
    key: &str,
) -> Option<(usize, usize)> {
    let (v, line) = get_num::<usize>(map, errs, key, "a positive integer")?;
    if v == 0 {
        errs.push((line, format!("`{key}` must be at least 1")));
        return None;
    }
    Some((v, line))
}

fn get_finite_f64(
    map: &BTreeMap<String, Entry>,
    errs: &mut Errs,
    key: &str,
) -> Option<(f64, usize)> {
    let (v, line) = get_num::<f64>(map, errs, key, "a number")?;
    if !v.is_finite() {
        errs.push((line, format!("`{key}` must be finite")));
        return None;
    }
    Some((v, line))
}

fn require_missing(errs: &mut Errs, key: &str) {
    errs.push((NO_LINE, format!("missing required key `{key}`")));
}

/// Reject known keys that do not apply under the active variant.
fn reject_inapplicable(
    map: &BTreeMap<String, Entry>,
    errs: &mut Errs,
    keys: &[&str],
    because: &str,
) {
    for key in keys {
        if let Some((_, line)) = get_raw(map, key) {
            errs.push((line, format!("`{key}` does not apply {because}")));
        }
    }
}

fn build_problem(map: &BTreeMap<String, Entry>, errs: &mut Errs) -> Option<ProblemSpec> {
    let family = match get_raw(map, "problem.family") {
        None => {
            require_missing(errs, "problem.family");
            // Family-specific keys cannot be judged without a family; the
            // missing-key error above is the actionable one.
            return None;
        }
        Some((f @ ("svm" | "linreg" | "robust"), _)) => f,
        Some((other, line)) => {
            errs.push((line, format!("`problem.family` expects one of svm, linreg, robust, got `{other}`")));
            return None;
        }
    };
    let (dn, dm, dd, _) = family_defaults(family);
    let n = get_positive_usize(map, errs, "problem.n").map(|x| x.0).or({
        if map.contains_key("problem.n") { None } else { Some(dn) }
    });
    let m = get_positive_usize(map, errs, "problem.m").map(|x| x.0).or({
        if map.contains_key("problem.m") { None } else { Some(dm) }
    });
    let d = get_positive_usize(map, errs, "problem.d").map(|x| x.0).or({
        if map.contains_key("problem.d") { None } else { Some(dd) }
    });

    let fam_keys: [&str; 7] = [
        "problem.noise_sigma",
        "problem.mu_scale",
        "problem.sigma",
        "problem.c",
        "problem.outlier_prob",
        "problem.outlier_sigma",
        "problem.inlier_sigma",
    ];
    let applicable: &[&str] = match family {
        "svm" => &["problem.mu_scale", "problem.sigma", "problem.c"],
        "linreg" => &["problem.noise_sigma"],
        _ => &["problem.outlier_prob", "problem.outlier_sigma", "problem.inlier_sigma"],
    };
    for key in fam_keys {
        if !applicable.contains(&key) {
            if let Some((_, line)) = get_raw(map, key) {
                errs.push((line, format!("`{key}` does not apply to problem.family = {family}")));
            }
        }
    }

    let pos_f64 = |map: &BTreeMap<String, Entry>, errs: &mut Errs, key: &str, dflt: f64| -> Option<f64> {
        match get_finite_f64(map, errs, key) {
            Some((v, line)) => {
                if v <= 0.0 {
                    errs.push((line, format!("`{key}` must be positive")));
                    None
                } else {
                    Some(v)
                }
            }
            None if map.contains_key(key) => None,
            None => Some(dflt),
        }
    };

    let (n, m, d) = (n?, m?, d?);
    match family {
        "svm" => {
            let mu_scale = pos_f64(map, errs, "problem.mu_scale", 1.0);
            let sigma = pos_f64(map, errs, "problem.sigma", 1.0);
            let c = pos_f64(map, errs, "problem.c", 1.0);
            Some(ProblemSpec::Svm { n, m, d, mu_scale: mu_scale?, sigma: sigma?, c: c? })
        }
        "linreg" => {
            // Zero observation noise is a legitimate planted recovery setup.
            let noise_sigma = match get_finite_f64(map, errs, "problem.noise_sigma") {
                Some((v, line)) => {
                    if v < 0.0 {
                        errs.push((line, "`problem.noise_sigma` must be nonnegative".to_string()));
                        None
                    } else {
                        Some(v)
                    }
                }
                None if map.contains_key("problem.noise_sigma") => None,
                None => Some(0.5),
            };
            Some(ProblemSpec::Linreg { n, m, d, noise_sigma: noise_sigma? })
        }
        _ => {
            let outlier_prob = match get_finite_f64(map, errs, "problem.outlier_prob") {
                Some((v, line)) => {
                    if !(0.0..=1.0).contains(&v) {
                        errs.push((line, "`problem.outlier_prob` must lie in [0, 1]".to_string()));
                        None
                    } else {
                        Some(v)
                    }
                }
                None if map.contains_key("problem.outlier_prob") => None,
                None => Some(0.1),
            };
            let outlier_sigma = pos_f64(map, errs, "problem.outlier_sigma", 10.0);
            let inlier_sigma = pos_f64(map, errs, "problem.inlier_sigma", 0.3);
            Some(ProblemSpec::Robust {
                n,
                m,
                d,
                outlier_prob: outlier_prob?,
                outlier_sigma: outlier_sigma?,
                inlier_sigma: inlier_sigma?,
            })
        }
    }
}

fn build_graph(
    map: &BTreeMap<String, Entry>,
    errs: &mut Errs,
    all_to_all: bool,
) -> Option<Option<GraphSpec>> {
    if all_to_all {
        reject_inapplicable(
            map,
            errs,
            &["graph.kind", "graph.l", "graph.p"],
            "when policy.kind = all_to_all (the exchange already spans every pair)",
        );
        return Some(None);
    }
    match get_raw(map, "graph.kind") {
        None => {
            require_missing(errs, "graph.kind");
            None
        }
        Some(("full", _)) => {
            reject_inapplicable(map, errs, &["graph.l", "graph.p"], "to graph.kind = full");
            Some(Some(GraphSpec::Full))
        }
        Some(("ring", _)) => {
            reject_inapplicable(map, errs, &["graph.p"], "to graph.kind = ring");
            let l = match get_positive_usize(map, errs, "graph.l") {
                Some((v, _)) => Some(v),
                None if map.contains_key("graph.l") => None,
                None => Some(1),
            };
            Some(Some(GraphSpec::Ring { l: l? }))
        }
        Some(("random", kline)) => {
            reject_inapplicable(map, errs, &["graph.l"], "to graph.kind = random");
            let p = match get_finite_f64(map, errs, "graph.p") {
                Some((v, line)) => {
                    if !(v > 0.0 && v <= 1.0) {
                        errs.push((line, "`graph.p` must lie in (0, 1]".to_string()));
                        None
                    } else {
                        Some(v)
                    }
                }
                None if map.contains_key("graph.p") => None,
                None => {
                    errs.push((kline, "graph.kind = random requires `graph.p`".to_string()));
                    None
                }
            };
            Some(Some(GraphSpec::Random { p: p? }))
        }
        Some((other, line)) => {
            errs.push((line, format!("`graph.kind` expects one of full, ring, random, got `{other}`")));
            None
        }
    }
}

fn build_policy(
    map: &BTreeMap<String, Entry>,
    errs: &mut Errs,
    d: Option<usize>,
) -> Option<PolicySpec> {
    match get_raw(map, "policy.kind") {
        None => {
            require_missing(errs, "policy.kind");
            None
        }
        Some(("static", _)) => {
            reject_inapplicable(
                map,
                errs,
                &["policy.m", "policy.rho"],
                "to policy.kind = static (every coordinate is shared each step)",
            );
            Some(PolicySpec::Static)
        }
        Some(("round_robin", kline)) => {
            reject_inapplicable(map, errs, &["policy.rho"], "to policy.kind = round_robin");
            let m = match get_positive_usize(map, errs, "policy.m") {
                Some((m, mline)) => {
                    if let Some(d) = d {
                        if m > d || d % m != 0 {
                            errs.push((mline, format!("m must divide d for round_robin blocks (m = {m}, d = {d})")));
                            return None;
                        }
                    }
                    Some(m)
                }
                None if map.contains_key("policy.m") => None,
                None => {
                    errs.push((kline, "policy.kind = round_robin requires `policy.m`".to_string()));
                    None
                }
            };
            Some(PolicySpec::RoundRobin { m: m? })
        }
        Some(("random_subset", kline)) => {
            reject_inapplicable(map, errs, &["policy.rho"], "to policy.kind = random_subset");
            // m = 0 is the no-communication baseline, so zero is allowed here.
            let m = match get_num::<usize>(map, errs, "policy.m", "a nonnegative integer") {
                Some((m, mline)) => {
                    if let Some(d) = d {
                        if m > d {
                            errs.push((mline, format!("`policy.m` cannot exceed problem.d (m = {m}, d = {d})")));
                            return None;
                        }
                    }
                    Some(m)
                }
                None if map.contains_key("policy.m") => None,
                None => {
                    errs.push((kline, "policy.kind = random_subset requires `policy.m`".to_string()));
                    None
                }
            };
            Some(PolicySpec::RandomSubset { m: m? })
        }
        Some(("all_to_all", kline)) => {
            reject_inapplicable(map, errs, &["policy.m"], "to policy.kind = all_to_all");
            let rho = match get_finite_f64(map, errs, "policy.rho") {
                Some((v, line)) => {
                    if !(0.0..=1.0).contains(&v) {
                        errs.push((line, "`policy.rho` must lie in [0, 1]".to_string()));
                        None
                    } else {
                        Some(v)
                    }
                }
                None if map.contains_key("policy.rho") => None,
                None => {
                    errs.push((kline, "policy.kind = all_to_all requires `policy.rho`".to_string()));
                    None
                }
            };
            Some(PolicySpec::AllToAll { rho: rho? })
        }
        Some((other, line)) => {
            errs.push((
                line,
                format!("`policy.kind` expects one of static, round_robin, random_subset, all_to_all, got `{other}`"),
            ));
            None
        }
    }
}

fn build_channel(map: &BTreeMap<String, Entry>, errs: &mut Errs) -> Option<ChannelSpec> {
    match get_raw(map, "channel.kind") {
        None => {
            require_missing(errs, "channel.kind");
            None
        }
        Some(("perfect", _)) => {
            reject_inapplicable(
                map,
                errs,
                &["channel.gamma2", "channel.s0", "channel.beta"],
                "to channel.kind = perfect",
            );
            Some(ChannelSpec::Perfect)
        }
        Some(("noisy", kline)) => {
            reject_inapplicable(map, errs, &["channel.s0", "channel.beta"], "to channel.kind = noisy");
            let gamma2 = match get_finite_f64(map, errs, "channel.gamma2") {
                Some((v, line)) => {
                    if v < 0.0 {
                        errs.push((line, "`channel.gamma2` must be nonnegative".to_string()));
                        None
                    } else {
                        Some(v)
                    }
                }
                None if map.contains_key("channel.gamma2") => None,
                None => {
                    errs.push((kline, "channel.kind = noisy requires `channel.gamma2`".to_string()));
                    None
                }
            };
            Some(ChannelSpec::Noisy { gamma2: gamma2? })
        }
        Some(("quantized", _)) => {
            reject_inapplicable(map, errs, &["channel.gamma2"], "to channel.kind = quantized");
            let s0 = match get_finite_f64(map, errs, "channel.s0") {
                Some((v, line)) => {
                    if v <= 0.0 {
                        errs.push((line, "`channel.s0` must be positive".to_string()));
                        None
                    } else {
                        Some(v)
                    }
                }
                None if map.contains_key("channel.s0") => None,
                None => Some(1.0),
            };
            let beta = match get_finite_f64(map, errs, "channel.beta") {
                Some((v, line)) => {
                    if !(v > 0.0 && v <= 1.0) {
                        errs.push((line, "`channel.beta` must lie in (0, 1]".to_string()));
                        None
                    } else {
                        Some(v)
                    }
                }
                None if map.contains_key("channel.beta") => None,
                None => Some(0.995),
            };
            Some(ChannelSpec::Quantized { s0: s0?, beta: beta? })
        }
        Some((other, line)) => {
            errs.push((line, format!("`channel.kind` expects one of perfect, noisy, quantized, got `{other}`")));
            None
        }
    }
}

fn build_gradient(
    map: &BTreeMap<String, Entry>,
    errs: &mut Errs,
    m: Option<usize>,
) -> Option<GradientSpec> {
    match get_raw(map, "gradient.kind") {
        None => {
            reject_inapplicable(map, errs, &["gradient.b"], "without gradient.kind = minibatch");
            Some(GradientSpec::Exact)
        }
        Some(("exact", _)) => {
            reject_inapplicable(map, errs, &["gradient.b"], "to gradient.kind = exact");
            Some(GradientSpec::Exact)
        }
        Some(("minibatch", kline)) => {
            let b = match get_positive_usize(map, errs, "gradient.b") {
                Some((b, bline)) => {
                    if let Some(m) = m {
                        if b > m {
                            errs.push((bline, format!("`gradient.b` cannot exceed problem.m (b = {b}, m = {m})")));
                            return None;
                        }
                    }
                    Some(b)
                }
                None if map.contains_key("gradient.b") => None,
                None => {
                    errs.push((kline, "gradient.kind = minibatch requires `gradient.b`".to_string()));
                    None
                }
            };
            Some(GradientSpec::Minibatch { b: b? })
        }
        Some((other, line)) => {
            errs.push((line, format!("`gradient.kind` expects one of exact, minibatch, got `{other}`")));
            None
        }
    }
}

fn build_reference(
    map: &BTreeMap<String, Entry>,
    errs: &mut Errs,
    family: Option<&str>,
) -> Option<RefModeSpec> {
    match get_raw(map, "reference.mode") {
        None => {
            reject_inapplicable(map, errs, &["reference.iters"], "without reference.mode = dual_averaging");
            Some(RefModeSpec::Auto)
        }
        Some(("auto", _)) => {
            reject_inapplicable(map, errs, &["reference.iters"], "to reference.mode = auto");
            Some(RefModeSpec::Auto)
        }
        Some(("skip", _)) => {
            reject_inapplicable(map, errs, &["reference.iters"], "to reference.mode = skip");
            Some(RefModeSpec::Skip)
        }
        Some(("closed_form", line)) => {
            reject_inapplicable(map, errs, &["reference.iters"], "to reference.mode = closed_form");
            if let Some(f) = family {
                if f != "linreg" {
                    errs.push((
                        line,
                        format!("reference.mode = closed_form needs a least-squares objective, not problem.family = {f}"),
                    ));
                    return None;
                }
            }
            Some(RefModeSpec::ClosedForm)
        }
        Some(("dual_averaging", kline)) => {
            let iters = match get_positive_usize(map, errs, "reference.iters") {
                Some((v, _)) => Some(v),
                None if map.contains_key("reference.iters") => None,
                None => {
                    errs.push((kline, "reference.mode = dual_averaging requires `reference.iters`".to_string()));
                    None
                }
            };
            Some(RefModeSpec::DualAveraging { iters: iters? })
        }
        Some((other, line)) => {
            errs.push((
                line,
                format!("`reference.mode` expects one of auto, closed_form, dual_averaging, skip, got `{other}`"),
            ));
            None
        }
    }
}

fn from_entries(map: &BTreeMap<String, Entry>, errs: &mut Errs) -> Option<ExperimentConfig> {
    for (key, entry) in map {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            errs.push((entry.line, format!("unknown key `{key}`")));
        }
    }

    let problem = build_problem(map, errs);
    let family = problem.as_ref().map(|p| p.family_name());
    let all_to_all = matches!(get_raw(map, "policy.kind"), Some(("all_to_all", _)));
    let graph = build_graph(map, errs, all_to_all);
    let policy = build_policy(map, errs, problem.as_ref().map(|p| p.d()));
    let channel = build_channel(map, errs);
    let gradient = build_gradient(map, errs, problem.as_ref().map(|p| p.m()));
    let reference = build_reference(map, errs, family);

    let steps = match get_positive_usize(map, errs, "T") {
        Some((v, _)) => Some(v),
        None if map.contains_key("T") => None,
        None => {
            require_missing(errs, "T");
            None
        }
    };
    let seed = match get_num::<u64>(map, errs, "seed", "an unsigned integer") {
        Some((v, _)) => Some(v),
        None if map.contains_key("seed") => None,
        None => {
            require_missing(errs, "seed");
            None
        }
    };
    let step_c = match get_finite_f64(map, errs, "C") {
        Some((v, line)) => {
            if v <= 0.0 {
                errs.push((line, "`C` must be positive".to_string()));
                None
            } else {
                Some(v)
            }
        }
        None if map.contains_key("C") => None,
        None => family.map(|f| family_defaults(f).3),
    };
    let record_every = match get_positive_usize(map, errs, "record_every") {
        Some((v, _)) => Some(v),
        None if map.contains_key("record_every") => None,
        None => Some(1),
    };
    let delta = match get_finite_f64(map, errs, "bounds.delta") {
        Some((v, line)) => {
            if !(v > 0.0 && v < 1.0) {
                errs.push((line, "`bounds.delta` must lie in (0, 1)".to_string()));
                None
            } else {
                Some(v)
            }
        }
        None if map.contains_key("bounds.delta") => None,
        None => Some(0.05),
    };
    let r_override = match get_finite_f64(map, errs, "bounds.r") {
        Some((v, line)) => {
            if v <= 0.0 {
                errs.push((line, "`bounds.r` must be positive".to_string()));
                None
            } else {
                Some(Some(v))
            }
        }
        None if map.contains_key("bounds.r") => None,
        None => Some(None),
    };
    let trace_path = get_raw(map, "output.trace").map(|(v, _)| v.to_string());
    let messages_path = get_raw(map, "output.messages").map(|(v, _)| v.to_string());

    Some(ExperimentConfig {
        problem: problem?,
        graph: graph?,
        policy: policy?,
        channel: channel?,
        gradient: gradient?,
        steps: steps?,
        step_c: step_c?,
        seed: seed?,
        record_every: record_every?,
        reference: reference?,
        trace_path,
        messages_path,
        delta: delta?,
        r_override: r_override?,
    })
}

fn render_errors(mut errs: Errs) -> ConfigErrors {
    errs.sort_by_key(|(line, _)| *line);
    ConfigErrors(
        errs.into_iter()
            .map(|(line, msg)| {
                if line == NO_LINE {
                    msg
                } else {
                    format!("line {line}: {msg}")
                }
            })
            .collect(),
    )
}

/// Parse a config file, reporting every error found rather than the first.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut errs: Errs = Vec::new();
    let map = scan_entries(text, &mut errs);
    let cfg = from_entries(&map, &mut errs);
    match cfg {
        Some(c) if errs.is_empty() => Ok(c),
        _ => Err(render_errors(errs)),
    }
}

/// Serialize a config with every default written out. Extra lines land as
/// trailing `#` comments so the result still parses; that is the sidecar
/// format.
pub fn render_config(cfg: &ExperimentConfig, extras: &[(String, String)]) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    kv("problem.family", cfg.problem.family_name().to_string());
    kv("problem.n", cfg.problem.n().to_string());
    kv("problem.m", cfg.problem.m().to_string());
    kv("problem.d", cfg.problem.d().to_string());
    match cfg.problem {
        ProblemSpec::Svm { mu_scale, sigma, c, .. } => {
            kv("problem.mu_scale", mu_scale.to_string());
            kv("problem.sigma", sigma.to_string());
            kv("problem.c", c.to_string());
        }
        ProblemSpec::Linreg { noise_sigma, .. } => {
            kv("problem.noise_sigma", noise_sigma.to_string());
        }
        ProblemSpec::Robust { outlier_prob, outlier_sigma, inlier_sigma, .. } => {
            kv("problem.outlier_prob", outlier_prob.to_string());
            kv("problem.outlier_sigma", outlier_sigma.to_string());
            kv("problem.inlier_sigma", inlier_sigma.to_string());
        }
    }
    match cfg.graph {
        None => {}
        Some(GraphSpec::Full) => kv("graph.kind", "full".to_string()),
        Some(GraphSpec::Ring { l }) => {
            kv("graph.kind", "ring".to_string());
            kv("graph.l", l.to_string());
        }
        Some(GraphSpec::Random { p }) => {
            kv("graph.kind", "random".to_string());
            kv("graph.p", p.to_string());
        }
    }
    match cfg.policy {
        PolicySpec::Static => kv("policy.kind", "static".to_string()),
        PolicySpec::RoundRobin { m } => {
            kv("policy.kind", "round_robin".to_string());
            kv("policy.m", m.to_string());
        }
        PolicySpec::RandomSubset { m } => {
            kv("policy.kind", "random_subset".to_string());
            kv("policy.m", m.to_string());
        }
        PolicySpec::AllToAll { rho } => {
            kv("policy.kind", "all_to_all".to_string());
            kv("policy.rho", rho.to_string());
        }
    }
    match cfg.channel {
        ChannelSpec::Perfect => kv("channel.kind", "perfect".to_string()),
        ChannelSpec::Noisy { gamma2 } => {
            kv("channel.kind", "noisy".to_string());
            kv("channel.gamma2", gamma2.to_string());
        }
        ChannelSpec::Quantized { s0, beta } => {
            kv("channel.kind", "quantized".to_string());
            kv("channel.s0", s0.to_string());
            kv("channel.beta", beta.to_string());
        }
    }
    match cfg.gradient {
        GradientSpec::Exact => kv("gradient.kind", "exact".to_string()),
        GradientSpec::Minibatch { b } => {
            kv("gradient.kind", "minibatch".to_string());
            kv("gradient.b", b.to_string());
        }
    }
    kv("T", cfg.steps.to_string());
    kv("C", cfg.step_c.to_string());
    kv("seed", cfg.seed.to_string());
    kv("record_every", cfg.record_every.to_string());
    match cfg.reference {
        RefModeSpec::Auto => kv("reference.mode", "auto".to_string()),
        RefModeSpec::ClosedForm => kv("reference.mode", "closed_form".to_string()),
        RefModeSpec::Skip => kv("reference.mode", "skip".to_string()),
        RefModeSpec::DualAveraging { iters } => {
            kv("reference.mode", "dual_averaging".to_string());
            kv("reference.iters", iters.to_string());
        }
    }
    if let Some(p) = &cfg.trace_path {
        kv("output.trace", p.clone());
    }
    if let Some(p) = &cfg.messages_path {
        kv("output.messages", p.clone());
    }
    kv("bounds.delta", cfg.delta.to_string());
    if let Some(r) = cfg.r_override {
        kv("bounds.r", r.to_string());
    }
    for (k, v) in extras {
        out.push_str(&format!("# {k}: {v}\n"));
    }
    out
}
