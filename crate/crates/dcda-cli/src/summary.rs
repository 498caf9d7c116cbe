//! Time-to-threshold summaries shared by `reproduce` and `sweep`.
//!
//! Two threshold families cover the three problem kinds. Classification
//! runs (which carry a held-out test set) count iterations until the
//! median node reaches 90 percent accuracy. Regression runs count
//! iterations until the worst node's optimality gap falls to 5 percent of
//! its starting value. Both the iteration count and the cumulative number
//! of scalar transmissions at that point are reported, so either can serve
//! as the time axis.

use dcda::engine::RunTrace;
use dcda::Result;

pub const ACCURACY_THRESHOLD: f64 = 0.9;
pub const GAP_FRACTION: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct SummaryRow {
    /// Which rule produced the row, spelled out for the CSV.
    pub threshold: String,
    pub reached: bool,
    pub iterations: Option<usize>,
    pub transmissions: Option<u64>,
    /// Final median accuracy or final worst gap, depending on the rule.
    pub final_value: f64,
}

/// Upper median: element at index len / 2 after sorting.
fn median_of(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("metrics are finite"));
    v[v.len() / 2]
}

fn worst_gap(trace: &RunTrace, idx: usize) -> Result<f64> {
    let gaps = trace.gaps(&trace.records[idx])?;
    Ok(gaps.into_iter().fold(f64::MIN, f64::max))
}

pub fn summarize(trace: &RunTrace) -> Result<SummaryRow> {
    if trace.records.first().is_some_and(|r| r.accuracy.is_some()) {
        let hit = trace.records.iter().find(|rec| {
            median_of(rec.accuracy.as_ref().expect("uniform accuracy columns")) >= ACCURACY_THRESHOLD
        });
        let final_value = median_of(
            trace.last().accuracy.as_ref().expect("uniform accuracy columns"),
        );
        return Ok(SummaryRow {
            threshold: format!("median-accuracy>={ACCURACY_THRESHOLD}"),
            reached: hit.is_some(),
            iterations: hit.map(|r| r.t),
            transmissions: hit.map(|r| r.messages),
            final_value,
        });
    }
    let initial = worst_gap(trace, 0)?;
    let target = GAP_FRACTION * initial;
    let mut hit = None;
    for idx in 0..trace.records.len() {
        if worst_gap(trace, idx)? <= target {
            hit = Some(&trace.records[idx]);
            break;
        }
    }
    Ok(SummaryRow {
        threshold: format!("worst-gap<={GAP_FRACTION}*initial"),
        reached: hit.is_some(),
        iterations: hit.map(|r| r.t),
        transmissions: hit.map(|r| r.messages),
        final_value: worst_gap(trace, trace.records.len() - 1)?,
    })
}

/// CSV cells for the shared trailing columns.
pub fn row_cells(row: &SummaryRow) -> String {
    format!(
        "{},{},{},{},{}",
        row.threshold,
        row.reached,
        row.iterations.map_or(String::new(), |v| v.to_string()),
        row.transmissions.map_or(String::new(), |v| v.to_string()),
        row.final_value
    )
}

pub const ROW_HEADER: &str = "threshold,reached,iterations,transmissions,final_value";
