//! Score/label/manifest tables, their CSV formats, and the eye-wise split.
//!
//! All files are UTF-8 CSV with `.` as the decimal separator. Scores and
//! labels share one header (`sample_id` followed by the six biomarker
//! names); the canonical writers emit scores with 6 decimal places and
//! labels as bare `0`/`1`, so `write(read(f))` is byte-identical for
//! canonically formatted files.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Canonical biomarker column order shared by every score and label file.
pub const BIOMARKERS: [&str; 6] = ["IRHRF", "PAVF", "FAVF", "IRF", "DRT_ME", "VD"];

const SCORES_HEADER: &str = "sample_id,IRHRF,PAVF,FAVF,IRF,DRT_ME,VD";
const MANIFEST_HEADER: &str = "sample_id,eye_id";

/// Per-branch prediction probabilities; rows are samples, columns follow
/// [`BIOMARKERS`] order (file I/O enforces exactly six columns, in-memory
/// use is generic over column count).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    sample_ids: Vec<String>,
    labels: Vec<String>,
    values: Vec<f64>,
}

/// Binary ground-truth (or binarized prediction) matrix; same layout as
/// [`ScoreMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    sample_ids: Vec<String>,
    labels: Vec<String>,
    values: Vec<u8>,
}

/// Ordered `sample_id -> eye_id` mapping driving group-disjoint splits.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleManifest {
    entries: Vec<(String, String)>,
}

/// Outcome of [`eyewise_split`]: disjoint train/validation sample id sets
/// whose union covers the manifest, with every eye entirely on one side.
#[derive(Debug, Clone)]
pub struct SplitResult {
    pub train_ids: HashSet<String>,
    pub val_ids: HashSet<String>,
}

/// Ids dropped on each side by [`align`].
#[derive(Debug, Clone, Default)]
pub struct AlignReport {
    pub dropped_left: Vec<String>,
    pub dropped_right: Vec<String>,
}

fn check_unique_ids(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if id.is_empty() {
            return Err(Error::Param("empty sample_id".into()));
        }
        if !seen.insert(id.as_str()) {
            return Err(Error::Param(format!("duplicate sample_id `{id}`")));
        }
    }
    Ok(())
}

impl ScoreMatrix {
    /// Builds a matrix from row-major `values`, validating the invariants:
    /// unique non-empty ids, `values.len() == rows * cols`, every value in
    /// `[0, 1]`.
    pub fn new(sample_ids: Vec<String>, labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        check_unique_ids(&sample_ids)?;
        if labels.is_empty() {
            return Err(Error::Param("no label columns".into()));
        }
        if values.len() != sample_ids.len() * labels.len() {
            return Err(Error::Param(format!(
                "value count {} does not match {} rows x {} columns",
                values.len(),
                sample_ids.len(),
                labels.len()
            )));
        }
        for (i, v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::Param(format!(
                    "score {} at row {} column {} outside [0,1]",
                    v,
                    i / labels.len(),
                    labels[i % labels.len()]
                )));
            }
        }
        Ok(Self {
            sample_ids,
            labels,
            values,
        })
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.labels.len();
        &self.values[r * w..(r + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.labels.len() + col]
    }
}

impl LabelMatrix {
    /// Builds a binary matrix; entries must be 0 or 1.
    pub fn new(sample_ids: Vec<String>, labels: Vec<String>, values: Vec<u8>) -> Result<Self> {
        check_unique_ids(&sample_ids)?;
        if labels.is_empty() {
            return Err(Error::Param("no label columns".into()));
        }
        if values.len() != sample_ids.len() * labels.len() {
            return Err(Error::Param(format!(
                "value count {} does not match {} rows x {} columns",
                values.len(),
                sample_ids.len(),
                labels.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| *v > 1) {
            return Err(Error::Param(format!(
                "label {} at row {} column {} is not binary",
                values[i],
                i / labels.len(),
                labels[i % labels.len()]
            )));
        }
        Ok(Self {
            sample_ids,
            labels,
            values,
        })
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, r: usize) -> &[u8] {
        let w = self.labels.len();
        &self.values[r * w..(r + 1) * w]
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.values[row * self.labels.len() + col]
    }
}

impl SampleManifest {
    pub fn new(entries: Vec<(String, String)>) -> Result<Self> {
        let ids: Vec<String> = entries.iter().map(|(s, _)| s.clone()).collect();
        check_unique_ids(&ids)?;
        if let Some((id, _)) = entries.iter().find(|(_, eye)| eye.is_empty()) {
            return Err(Error::Param(format!("empty eye_id for sample `{id}`")));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct eye ids in first-appearance order.
    pub fn eyes(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (_, eye) in &self.entries {
            if seen.insert(eye.as_str()) {
                out.push(eye.as_str());
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// CSV I/O
// ---------------------------------------------------------------------------

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

/// Splits raw CSV text into non-empty lines, tolerating `\r\n` endings.
/// Returns (1-based line number, content) pairs.
fn csv_lines(text: &str) -> Vec<(usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.is_empty())
        .collect()
}

fn parse_score_header(file: &str, lines: &[(usize, &str)]) -> Result<()> {
    match lines.first() {
        Some((n, l)) if *l == SCORES_HEADER => {
            let _ = n;
            Ok(())
        }
        Some((n, l)) => Err(Error::format(
            file,
            *n,
            format!("expected header `{SCORES_HEADER}`, found `{l}`"),
        )),
        None => Err(Error::format(file, 1, "empty file")),
    }
}

/// Reads a score CSV (`sample_id` plus the six biomarker columns, values
/// in `[0,1]`). Invariant violations are reported with their line number.
pub fn read_scores(path: impl AsRef<Path>) -> Result<ScoreMatrix> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    parse_scores_text(&file_label(path), &text)
}

/// Parses score CSV text; `file` only labels error messages.
pub fn parse_scores_text(file: &str, text: &str) -> Result<ScoreMatrix> {
    let lines = csv_lines(text);
    parse_score_header(file, &lines)?;
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    let mut values = Vec::new();
    for (n, line) in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::format(
                file,
                *n,
                format!("expected 7 fields, found {}", fields.len()),
            ));
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(Error::format(file, *n, "empty sample_id"));
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::format(
                file,
                *n,
                format!("duplicate sample_id `{id}`"),
            ));
        }
        for (col, raw) in fields[1..].iter().enumerate() {
            let v: f64 = raw.parse().map_err(|_| {
                Error::format(
                    file,
                    *n,
                    format!("column {}: `{raw}` is not a number", BIOMARKERS[col]),
                )
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::format(
                    file,
                    *n,
                    format!("column {}: value {v} outside [0,1]", BIOMARKERS[col]),
                ));
            }
            values.push(v);
        }
        ids.push(id.to_string());
    }
    ScoreMatrix::new(
        ids,
        BIOMARKERS.iter().map(|s| s.to_string()).collect(),
        values,
    )
}

/// Reads a label CSV (same header as scores, entries restricted to `0`/`1`).
pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelMatrix> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    parse_labels_text(&file_label(path), &text)
}

pub fn parse_labels_text(file: &str, text: &str) -> Result<LabelMatrix> {
    let lines = csv_lines(text);
    parse_score_header(file, &lines)?;
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    let mut values = Vec::new();
    for (n, line) in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::format(
                file,
                *n,
                format!("expected 7 fields, found {}", fields.len()),
            ));
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(Error::format(file, *n, "empty sample_id"));
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::format(
                file,
                *n,
                format!("duplicate sample_id `{id}`"),
            ));
        }
        for (col, raw) in fields[1..].iter().enumerate() {
            let v = match *raw {
                "0" => 0u8,
                "1" => 1u8,
                _ => {
                    return Err(Error::format(
                        file,
                        *n,
                        format!("column {}: `{raw}` is not 0 or 1", BIOMARKERS[col]),
                    ))
                }
            };
            values.push(v);
        }
        ids.push(id.to_string());
    }
    LabelMatrix::new(
        ids,
        BIOMARKERS.iter().map(|s| s.to_string()).collect(),
        values,
    )
}

/// Reads a manifest CSV (`sample_id,eye_id`).
pub fn read_manifest(path: impl AsRef<Path>) -> Result<SampleManifest> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    parse_manifest_text(&file_label(path), &text)
}

pub fn parse_manifest_text(file: &str, text: &str) -> Result<SampleManifest> {
    let lines = csv_lines(text);
    match lines.first() {
        Some((_, l)) if *l == MANIFEST_HEADER => {}
        Some((n, l)) => {
            return Err(Error::format(
                file,
                *n,
                format!("expected header `{MANIFEST_HEADER}`, found `{l}`"),
            ))
        }
        None => return Err(Error::format(file, 1, "empty file")),
    }
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(Error::format(
                file,
                *n,
                format!("expected 2 fields, found {}", fields.len()),
            ));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::format(file, *n, "empty id"));
        }
        if !seen.insert(fields[0].to_string()) {
            return Err(Error::format(
                file,
                *n,
                format!("duplicate sample_id `{}`", fields[0]),
            ));
        }
        entries.push((fields[0].to_string(), fields[1].to_string()));
    }
    SampleManifest::new(entries)
}

/// Canonical score serialization: 6 decimal places, `\n` line endings.
pub fn scores_to_csv(m: &ScoreMatrix) -> String {
    let mut out = String::new();
    out.push_str(SCORES_HEADER);
    out.push('\n');
    for (r, id) in m.sample_ids.iter().enumerate() {
        out.push_str(id);
        for v in m.row(r) {
            let _ = write!(out, ",{v:.6}");
        }
        out.push('\n');
    }
    out
}

/// Canonical label serialization: bare `0`/`1` entries.
pub fn labels_to_csv(m: &LabelMatrix) -> String {
    let mut out = String::new();
    out.push_str(SCORES_HEADER);
    out.push('\n');
    for (r, id) in m.sample_ids.iter().enumerate() {
        out.push_str(id);
        for v in m.row(r) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn manifest_to_csv(m: &SampleManifest) -> String {
    let mut out = String::new();
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    for (id, eye) in &m.entries {
        let _ = writeln!(out, "{id},{eye}");
    }
    out
}

pub fn write_scores(path: impl AsRef<Path>, m: &ScoreMatrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scores_to_csv(m)).map_err(|e| Error::io(path, e))
}

pub fn write_labels(path: impl AsRef<Path>, m: &LabelMatrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, labels_to_csv(m)).map_err(|e| Error::io(path, e))
}

/// Split serialization: `sample_id,split` with `train`/`val`, manifest order.
pub fn split_to_csv(manifest: &SampleManifest, split: &SplitResult) -> String {
    let mut out = String::from("sample_id,split\n");
    for (id, _) in &manifest.entries {
        let side = if split.val_ids.contains(id) {
            "val"
        } else {
            "train"
        };
        let _ = writeln!(out, "{id},{side}");
    }
    out
}

// ---------------------------------------------------------------------------
// Alignment
// ---------------------------------------------------------------------------

/// A table keyed by sample id whose rows can be re-selected; lets [`align`]
/// work across score and label matrices uniformly.
pub trait SampleTable: Sized {
    fn ids(&self) -> &[String];
    fn select(&self, rows: &[usize]) -> Self;
}

impl SampleTable for ScoreMatrix {
    fn ids(&self) -> &[String] {
        &self.sample_ids
    }

    fn select(&self, rows: &[usize]) -> Self {
        let w = self.labels.len();
        let mut values = Vec::with_capacity(rows.len() * w);
        let mut ids = Vec::with_capacity(rows.len());
        for &r in rows {
            ids.push(self.sample_ids[r].clone());
            values.extend_from_slice(self.row(r));
        }
        let _ = w;
        Self {
            sample_ids: ids,
            labels: self.labels.clone(),
            values,
        }
    }
}

impl SampleTable for LabelMatrix {
    fn ids(&self) -> &[String] {
        &self.sample_ids
    }

    fn select(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.labels.len());
        let mut ids = Vec::with_capacity(rows.len());
        for &r in rows {
            ids.push(self.sample_ids[r].clone());
            values.extend_from_slice(self.row(r));
        }
        Self {
            sample_ids: ids,
            labels: self.labels.clone(),
            values,
        }
    }
}

/// Reorders both tables to the lexicographically sorted intersection of
/// their sample ids and reports ids dropped from either side. Errors if
/// the intersection is empty.
pub fn align<A: SampleTable, B: SampleTable>(a: &A, b: &B) -> Result<(A, B, AlignReport)> {
    let pos_a: HashMap<&str, usize> = a.ids().iter().map(|s| s.as_str()).zip(0..).collect();
    let pos_b: HashMap<&str, usize> = b.ids().iter().map(|s| s.as_str()).zip(0..).collect();

    let mut common: Vec<&str> = a
        .ids()
        .iter()
        .map(|s| s.as_str())
        .filter(|id| pos_b.contains_key(id))
        .collect();
    common.sort_unstable();
    if common.is_empty() {
        return Err(Error::Mismatch("no sample ids in common".into()));
    }

    let rows_a: Vec<usize> = common.iter().map(|id| pos_a[id]).collect();
    let rows_b: Vec<usize> = common.iter().map(|id| pos_b[id]).collect();

    let common_set: HashSet<&str> = common.iter().copied().collect();
    let report = AlignReport {
        dropped_left: a
            .ids()
            .iter()
            .filter(|id| !common_set.contains(id.as_str()))
            .cloned()
            .collect(),
        dropped_right: b
            .ids()
            .iter()
            .filter(|id| !common_set.contains(id.as_str()))
            .cloned()
            .collect(),
    };
    Ok((a.select(&rows_a), b.select(&rows_b), report))
}

// ---------------------------------------------------------------------------
// Eye-wise split
// ---------------------------------------------------------------------------

/// Partitions samples by eye: eyes are shuffled by `seed` (ChaCha8 stream)
/// and assigned to the validation side until its sample count first reaches
/// `val_fraction` of the total; the rest go to train. All samples of one
/// eye always land on the same side.
pub fn eyewise_split(
    manifest: &SampleManifest,
    val_fraction: f64,
    seed: u64,
) -> Result<SplitResult> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Param(format!(
            "val_fraction {val_fraction} outside (0,1)"
        )));
    }
    let eyes = manifest.eyes();
    if eyes.len() < 2 {
        return Err(Error::Param(format!(
            "need at least 2 distinct eyes, found {}",
            eyes.len()
        )));
    }

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for (_, eye) in manifest.entries() {
        *counts.entry(eye.as_str()).or_insert(0) += 1;
    }

    let mut order = eyes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let target = val_fraction * manifest.len() as f64;
    let mut val_eyes: HashSet<&str> = HashSet::new();
    let mut val_samples = 0usize;
    for eye in &order {
        if (val_samples as f64) >= target {
            break;
        }
        val_eyes.insert(eye);
        val_samples += counts[eye];
    }

    let mut train_ids = HashSet::new();
    let mut val_ids = HashSet::new();
    for (id, eye) in manifest.entries() {
        if val_eyes.contains(eye.as_str()) {
            val_ids.insert(id.clone());
        } else {
            train_ids.insert(id.clone());
        }
    }
    Ok(SplitResult { train_ids, val_ids })
}
