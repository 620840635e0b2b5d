//! Shipped-fixture reproduction: loads the five-branch weight table,
//! re-runs combine + predict on the bundled synthetic branch scores, and
//! compares the serialized outputs byte-for-byte against golden files.

use std::path::Path;

use crate::data::{labels_to_csv, read_scores, scores_to_csv};
use crate::ensemble::{combine, predict, read_weights, BranchSet, WeightVector};
use crate::error::{Error, Result};

/// The five-branch weighted distribution shipped with the toolkit
/// (model / training-subset pairs with their combination weights).
pub const FIXTURE_WEIGHTS: [(&str, f64); 5] = [
    ("effv2m_trex_prime", 0.1),
    ("maxvit_trex_prime", 0.45),
    ("effv2m_trex", 0.1),
    ("maxvit_trex", 0.25),
    ("effv2m_prime", 0.1),
];

pub const FIXTURE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct FixtureReport {
    pub weight_rows: Vec<(String, f64)>,
    pub weight_sum: f64,
    /// Raw weights summed to exactly 1.0 (no normalization needed).
    pub sums_to_one: bool,
    /// Normalized weights equal the shipped table.
    pub matches_table: bool,
    pub combined_golden_ok: bool,
    pub predicted_golden_ok: bool,
}

impl FixtureReport {
    pub fn passed(&self) -> bool {
        self.matches_table && self.combined_golden_ok && self.predicted_golden_ok
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Runs the fixture pipeline rooted at `dir` (expects `weights.csv`, one
/// `<branch_id>.csv` per weight row, `golden_combined.csv`, and
/// `golden_predicted.csv`).
pub fn reproduce_fixture(dir: impl AsRef<Path>) -> Result<FixtureReport> {
    let dir = dir.as_ref();
    let weight_rows = read_weights(dir.join("weights.csv"))?;
    let weight_sum: f64 = weight_rows.iter().map(|(_, w)| w).sum();
    let sums_to_one = weight_sum == 1.0;

    let weights = WeightVector::new(weight_rows.iter().map(|(_, w)| *w).collect())?;
    let normalized = weights.normalized();
    let matches_table = weight_rows.len() == FIXTURE_WEIGHTS.len()
        && weight_rows
            .iter()
            .zip(normalized.iter())
            .zip(FIXTURE_WEIGHTS.iter())
            .all(|(((id, _), w), (want_id, want_w))| id == want_id && (w - want_w).abs() <= 1e-12);

    let mut branches = Vec::with_capacity(weight_rows.len());
    for (id, _) in &weight_rows {
        let scores = read_scores(dir.join(format!("{id}.csv")))?;
        branches.push((id.clone(), scores));
    }
    let set = BranchSet::new(branches)?;

    let combined = scores_to_csv(&combine(&set, &weights)?);
    let predicted = labels_to_csv(&predict(&set, &weights, FIXTURE_THRESHOLD)?);

    let combined_golden_ok = combined == read_file(&dir.join("golden_combined.csv"))?;
    let predicted_golden_ok = predicted == read_file(&dir.join("golden_predicted.csv"))?;

    Ok(FixtureReport {
        weight_rows,
        weight_sum,
        sums_to_one,
        matches_table,
        combined_golden_ok,
        predicted_golden_ok,
    })
}
