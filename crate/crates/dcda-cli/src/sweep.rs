//! The `sweep` subcommand: a base config plus one or two swept parameters
//! and a seed list, run as a grid.
//!
//! A sweep file is an ordinary config file with two extra line forms:
//!
//! ```text
//! sweep.policy.m = 0, 8, 15, 30
//! seeds = 1, 2, 3
//! ```
//!
//! Every combination of swept values and seeds becomes one run. Combo
//! configs are produced by in-place line substitution, so any config error
//! still points at the sweep file's own line numbers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use dcda::Error;

use crate::config::{parse_config, ConfigErrors, KNOWN_KEYS};
use crate::runner::execute;
use crate::summary::{row_cells, summarize, SummaryRow, ROW_HEADER};

#[derive(Debug, Clone)]
pub struct SweptParam {
    pub key: String,
    pub values: Vec<String>,
    /// Line of the `sweep.<key>` declaration, reused for substitution.
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub params: Vec<SweptParam>,
    pub seeds: Vec<u64>,
    lines: Vec<String>,
    seeds_line: Option<usize>,
}

/// Keys that may not be swept: seeds have their own mechanism and output
/// paths are assigned per run.
const UNSWEEPABLE: &[&str] = &["seed", "output.trace", "output.messages"];

pub fn parse_sweep(text: &str) -> Result<SweepPlan, ConfigErrors> {
    let mut errs: Vec<(usize, String)> = Vec::new();
    let map = scan_for_sweep(text, &mut errs);

    let mut params = Vec::new();
    let mut seeds: Option<(Vec<u64>, usize)> = None;
    let mut base_seed_line = None;
    for (key, (line, value)) in &map {
        if let Some(rest) = key.strip_prefix("sweep.") {
            if !KNOWN_KEYS.contains(&rest) {
                errs.push((*line, format!("swept parameter `{rest}` is not a config key")));
                continue;
            }
            if UNSWEEPABLE.contains(&rest) {
                errs.push((*line, format!("`{rest}` cannot be swept; use `seeds = ...` for replication")));
                continue;
            }
            let values: Vec<String> = value.split(',').map(|v| v.trim().to_string()).collect();
            if values.iter().any(String::is_empty) {
                errs.push((*line, format!("`{key}` has an empty entry in its value list")));
                continue;
            }
            params.push(SweptParam { key: rest.to_string(), values, line: *line });
        } else if key == "seeds" {
            let mut parsed = Vec::new();
            let mut ok = true;
            for tok in value.split(',') {
                match tok.trim().parse::<u64>() {
                    Ok(s) => parsed.push(s),
                    Err(_) => {
                        errs.push((*line, format!("`seeds` expects unsigned integers, got `{}`", tok.trim())));
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                seeds = Some((parsed, *line));
            }
        } else if key == "seed" {
            base_seed_line = Some(*line);
        } else if key.starts_with("output.") {
            errs.push((*line, format!("`{key}` does not belong in a sweep; per-run outputs are named automatically")));
        }
    }
    params.sort_by_key(|p| p.line);

    if params.is_empty() {
        errs.push((usize::MAX, "a sweep declares one or two `sweep.<key> = v1, v2, ...` lines; found none".to_string()));
    } else if params.len() > 2 {
        errs.push((params[2].line, format!("a sweep varies at most two parameters, found {}", params.len())));
    }
    let seeds_line = seeds.as_ref().map(|(_, l)| *l);
    let seed_list = match (&seeds, base_seed_line) {
        (Some((list, line)), Some(sl)) => {
            errs.push((sl, format!("`seed` conflicts with the `seeds` list at line {line}; keep one")));
            list.clone()
        }
        (Some((list, _)), None) => list.clone(),
        (None, Some(_)) => Vec::new(), // base seed stays in place, single replication
        (None, None) => {
            errs.push((usize::MAX, "a sweep needs `seeds = ...` or a base `seed`".to_string()));
            Vec::new()
        }
    };

    if !errs.is_empty() {
        errs.sort_by_key(|(line, _)| *line);
        return Err(ConfigErrors(
            errs.into_iter()
                .map(|(line, msg)| {
                    if line == usize::MAX {
                        msg
                    } else {
                        format!("line {line}: {msg}")
                    }
                })
                .collect(),
        ));
    }

    Ok(SweepPlan {
        params,
        seeds: seed_list,
        lines: text.lines().map(str::to_string).collect(),
        seeds_line,
    })
}

/// Light scan that keeps raw values; duplicate and shape errors match the
/// config parser's wording.
fn scan_for_sweep(text: &str, errs: &mut Vec<(usize, String)>) -> BTreeMap<String, (usize, String)> {
    let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
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
        if key.is_empty() || value.is_empty() {
            errs.push((line, "empty key or value".to_string()));
            continue;
        }
        if let Some((prev, _)) = map.get(key) {
            errs.push((line, format!("duplicate key `{key}` (first set at line {prev})")));
        } else {
            map.insert(key.to_string(), (line, value.to_string()));
        }
    }
    map
}

impl SweepPlan {
    /// Substitute one combination into the original text.
    fn combo_text(&self, choice: &[&str], seed: Option<u64>) -> String {
        let mut lines = self.lines.clone();
        for (param, value) in self.params.iter().zip(choice) {
            lines[param.line - 1] = format!("{} = {}", param.key, value);
        }
        if let (Some(sl), Some(seed)) = (self.seeds_line, seed) {
            lines[sl - 1] = format!("seed = {seed}");
        }
        lines.join("\n")
    }

    /// Cartesian product: first parameter outermost, seeds innermost.
    fn combos(&self) -> Vec<(Vec<&str>, Option<u64>)> {
        let firsts: Vec<&str> = self.params[0].values.iter().map(String::as_str).collect();
        let seconds: Vec<Option<&str>> = match self.params.get(1) {
            Some(p) => p.values.iter().map(|v| Some(v.as_str())).collect(),
            None => vec![None],
        };
        let seeds: Vec<Option<u64>> = if self.seeds.is_empty() {
            vec![None]
        } else {
            self.seeds.iter().copied().map(Some).collect()
        };
        let mut out = Vec::new();
        for v1 in &firsts {
            for v2 in &seconds {
                for s in &seeds {
                    let mut choice = vec![*v1];
                    if let Some(v2) = v2 {
                        choice.push(v2);
                    }
                    out.push((choice, *s));
                }
            }
        }
        out
    }
}

fn sanitize(part: &str) -> String {
    part.chars()
        .map(|c| if c == '/' || c == '\\' || c.is_whitespace() { '_' } else { c })
        .collect()
}

pub enum SweepError {
    Config(ConfigErrors),
    Jobs(Vec<(String, Error)>),
}

pub struct SweepOutcome {
    pub runs: usize,
    pub summary_path: PathBuf,
}

pub fn run_sweep(text: &str, sweep_path: &Path, out_dir: Option<&Path>) -> Result<SweepOutcome, SweepError> {
    let plan = parse_sweep(text).map_err(SweepError::Config)?;
    let stem = sweep_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".to_string());
    let dir: PathBuf = match out_dir {
        Some(d) => d.to_path_buf(),
        None => sweep_path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
    };
    std::fs::create_dir_all(&dir)
        .map_err(|e| SweepError::Jobs(vec![("output directory".to_string(), Error::Io(e))]))?;

    // Check the base config once so a broken base is reported with line
    // numbers instead of once per combo.
    let combos = plan.combos();
    let (first_choice, first_seed) = &combos[0];
    if let Err(errs) = parse_config(&plan.combo_text(first_choice, *first_seed)) {
        return Err(SweepError::Config(errs));
    }

    let jobs: Vec<(String, String, PathBuf, Vec<String>, Option<u64>)> = combos
        .iter()
        .map(|(choice, seed)| {
            let mut name = stem.clone();
            let mut desc_parts = Vec::new();
            for (param, value) in plan.params.iter().zip(choice) {
                name.push_str(&format!("-{}={}", sanitize(&param.key.replace('.', "_")), sanitize(value)));
                desc_parts.push(format!("{} = {}", param.key, value));
            }
            if let Some(s) = seed {
                name.push_str(&format!("-s{s}"));
                desc_parts.push(format!("seed = {s}"));
            }
            let trace_path = dir.join(format!("{name}.trace.csv"));
            (
                desc_parts.join(", "),
                plan.combo_text(choice, *seed),
                trace_path,
                choice.iter().map(|s| s.to_string()).collect(),
                *seed,
            )
        })
        .collect();

    let results: Vec<Result<(Vec<String>, String, SummaryRow), (String, Error)>> = jobs
        .par_iter()
        .map(|(desc, combo, trace_path, choice, seed)| {
            let mut cfg = parse_config(combo)
                .map_err(|e| (desc.clone(), Error::config(e.to_string())))?;
            cfg.trace_path = Some(trace_path.to_string_lossy().into_owned());
            let outcome = execute(&mut cfg, sweep_path).map_err(|e| (desc.clone(), e))?;
            let row = summarize(&outcome.trace).map_err(|e| (desc.clone(), e))?;
            let seed_cell = seed.map_or_else(|| cfg.seed.to_string(), |s| s.to_string());
            Ok((choice.clone(), seed_cell, row))
        })
        .collect();

    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for result in results {
        match result {
            Ok(r) => rows.push(r),
            Err(f) => failures.push(f),
        }
    }
    if !failures.is_empty() {
        return Err(SweepError::Jobs(failures));
    }

    let summary_path = dir.join(format!("{stem}-summary.csv"));
    let write = || -> dcda::Result<()> {
        let mut w = BufWriter::new(File::create(&summary_path)?);
        let key_cols: Vec<String> = plan.params.iter().map(|p| p.key.clone()).collect();
        writeln!(w, "{},seed,{ROW_HEADER}", key_cols.join(","))?;
        for (choice, seed, row) in &rows {
            writeln!(w, "{},{},{}", choice.join(","), seed, row_cells(row))?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| SweepError::Jobs(vec![("summary".to_string(), e)]))?;

    Ok(SweepOutcome { runs: rows.len(), summary_path })
}
