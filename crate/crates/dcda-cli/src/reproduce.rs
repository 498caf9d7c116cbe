//! The `reproduce` subcommand: run a built-in preset over a seed list and
//! emit one trace per variant plus a time-to-threshold summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use dcda::engine::{dcda_run, write_trace_csv, RunTrace};
use dcda::presets::{linreg_preset, robust_preset, svm_preset, Preset};
use dcda::{Error, Result};

use crate::summary::{row_cells, summarize, ROW_HEADER};

pub fn preset_by_name(name: &str, seed: u64, steps: usize) -> Result<Preset> {
    match name {
        "svm" => svm_preset(seed, steps),
        "linreg" => linreg_preset(seed, steps),
        "robust" => robust_preset(seed, steps),
        other => Err(Error::config(format!(
            "unknown preset `{other}`; expected one of svm, linreg, robust"
        ))),
    }
}

pub struct ReproduceOutcome {
    pub trace_paths: Vec<PathBuf>,
    pub summary_path: PathBuf,
}

/// Runs fan out across seeds; each seed builds its preset (including the
/// shared centralized reference) and executes every variant. Files are
/// written after the parallel section, in a fixed order, so repeated
/// invocations are byte-identical.
pub fn reproduce(name: &str, seeds: &[u64], steps: usize, out_dir: &Path) -> Result<ReproduceOutcome> {
    preset_by_name(name, 0, 1)?; // fail fast on a bad name before spawning work
    if seeds.is_empty() {
        return Err(Error::config("reproduce needs at least one seed"));
    }
    std::fs::create_dir_all(out_dir)?;

    let per_seed: Vec<Result<Vec<(String, RunTrace)>>> = seeds
        .par_iter()
        .map(|&seed| {
            let preset = preset_by_name(name, seed, steps)?;
            preset
                .runs
                .iter()
                .map(|run| Ok((run.label.clone(), dcda_run(&run.config)?)))
                .collect()
        })
        .collect();

    let mut traces: Vec<(u64, Vec<(String, RunTrace)>)> = Vec::new();
    for (&seed, result) in seeds.iter().zip(per_seed) {
        traces.push((seed, result?));
    }

    let mut trace_paths = Vec::new();
    for (seed, runs) in &traces {
        for (label, trace) in runs {
            let path = out_dir.join(format!("{name}-s{seed}-{label}.trace.csv"));
            let mut w = BufWriter::new(File::create(&path)?);
            write_trace_csv(trace, &mut w)?;
            w.flush().map_err(Error::Io)?;
            trace_paths.push(path);
        }
    }

    // Summary rows grouped by variant, seeds in the order given.
    let summary_path = out_dir.join(format!("{name}-summary.csv"));
    let mut w = BufWriter::new(File::create(&summary_path)?);
    writeln!(w, "preset,variant,seed,{ROW_HEADER}").map_err(Error::Io)?;
    let labels: Vec<String> = traces
        .first()
        .map(|(_, runs)| runs.iter().map(|(l, _)| l.clone()).collect())
        .unwrap_or_default();
    for label in &labels {
        for (seed, runs) in &traces {
            let trace = &runs.iter().find(|(l, _)| l == label).expect("variant set is fixed per preset").1;
            let row = summarize(trace)?;
            writeln!(w, "{name},{label},{seed},{}", row_cells(&row)).map_err(Error::Io)?;
        }
    }
    w.flush().map_err(Error::Io)?;

    Ok(ReproduceOutcome { trace_paths, summary_path })
}
