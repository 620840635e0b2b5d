//! Weighted combination of parallel branch scores and the search for the
//! branch weights maximizing macro-F1 of the thresholded predictions.
//!
//! The search runs on the simplex lattice `{(c_1..c_n)/m : sum c_i = m}`
//! with `m = 1/step`. Two methods: exhaustive enumeration of the lattice
//! (exact, and cheap at the default step 0.05), and coordinate ascent for
//! many-branch cases. Coordinate-ascent iterates stay on the lattice (the
//! non-active coordinates are renormalized by largest-remainder integer
//! apportionment), so the exhaustive optimum always dominates it.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::data::{LabelMatrix, SampleTable, ScoreMatrix};
use crate::error::{Error, Result};
use crate::metrics::binarize;

/// Ordered collection of branch score matrices sharing one sample id
/// order and one label order.
#[derive(Debug, Clone)]
pub struct BranchSet {
    branches: Vec<(String, ScoreMatrix)>,
}

impl BranchSet {
    pub fn new(branches: Vec<(String, ScoreMatrix)>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::Param("branch set is empty".into()));
        }
        let (first_id, first) = &branches[0];
        if first_id.is_empty() {
            return Err(Error::Param("empty branch_id".into()));
        }
        for (id, m) in &branches[1..] {
            if id.is_empty() {
                return Err(Error::Param("empty branch_id".into()));
            }
            if m.sample_ids() != first.sample_ids() {
                return Err(Error::Mismatch(format!(
                    "branch `{id}` sample ids differ from branch `{first_id}`"
                )));
            }
            if m.labels() != first.labels() {
                return Err(Error::Mismatch(format!(
                    "branch `{id}` label columns differ from branch `{first_id}`"
                )));
            }
        }
        let mut ids: Vec<&str> = branches.iter().map(|(id, _)| id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != branches.len() {
            return Err(Error::Param("duplicate branch_id".into()));
        }
        Ok(Self { branches })
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn branch_ids(&self) -> Vec<&str> {
        self.branches.iter().map(|(id, _)| id.as_str()).collect()
    }

    pub fn branches(&self) -> &[(String, ScoreMatrix)] {
        &self.branches
    }

    pub fn sample_ids(&self) -> &[String] {
        self.branches[0].1.sample_ids()
    }

    pub fn labels(&self) -> &[String] {
        self.branches[0].1.labels()
    }
}

/// Non-negative per-branch weights with positive sum. Weights are
/// normalized to sum 1 before any use, so scaled vectors are equivalent.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Param("empty weight vector".into()));
        }
        for w in &weights {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::Param(format!(
                    "weight {w} is not a finite value >= 0"
                )));
            }
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Param("weights sum to zero".into()));
        }
        Ok(Self { weights })
    }

    pub fn raw(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Canonical form: weights scaled to sum exactly as `w_i / sum(w)`.
    pub fn normalized(&self) -> Vec<f64> {
        normalize(&self.weights)
    }

    pub fn sums_to_one(&self) -> bool {
        self.weights.iter().sum::<f64>() == 1.0
    }
}

fn normalize(w: &[f64]) -> Vec<f64> {
    let sum: f64 = w.iter().sum();
    w.iter().map(|x| x / sum).collect()
}

/// Search method for [`optimize_weights`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMethod {
    ExhaustiveGrid,
    CoordinateAscent,
}

/// Hyperparameters of the weight search.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    step: f64,
    resolution: u32,
    pub method: SearchMethod,
    pub max_rounds: u32,
    pub threshold: f64,
}

impl SearchConfig {
    /// `step` must divide 1 exactly (the lattice lives on multiples of it);
    /// `threshold` is passed through to the rounding stage.
    pub fn new(step: f64, method: SearchMethod, max_rounds: u32, threshold: f64) -> Result<Self> {
        let resolution = lattice_resolution(step)?;
        if max_rounds == 0 {
            return Err(Error::Param("max_rounds must be positive".into()));
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::Param(format!("threshold {threshold} outside (0,1)")));
        }
        Ok(Self {
            step,
            resolution,
            method,
            max_rounds,
            threshold,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Lattice resolution `m = 1/step`.
    pub fn resolution(&self) -> u32 {
        self.resolution
    }
}

fn lattice_resolution(step: f64) -> Result<u32> {
    if !(0.0..=1.0).contains(&step) || step == 0.0 {
        return Err(Error::Param(format!("step {step} outside (0,1]")));
    }
    let m = (1.0 / step).round();
    if !(1.0..=1_000_000.0).contains(&m) || (m * step - 1.0).abs() > 1e-9 {
        return Err(Error::Param(format!("step {step} does not divide 1")));
    }
    Ok(m as u32)
}

/// Weighted average of the branch scores with weights normalized to sum 1.
/// Output stays a score matrix over the shared ids and labels.
pub fn combine(branches: &BranchSet, w: &WeightVector) -> Result<ScoreMatrix> {
    if w.len() != branches.len() {
        return Err(Error::Mismatch(format!(
            "{} weights for {} branches",
            w.len(),
            branches.len()
        )));
    }
    let weights = w.normalized();
    let values = combine_values(
        &branches
            .branches
            .iter()
            .map(|(_, m)| m.values())
            .collect::<Vec<_>>(),
        &weights,
    );
    ScoreMatrix::new(
        branches.sample_ids().to_vec(),
        branches.labels().to_vec(),
        values,
    )
}

// Shared by `combine` and the optimizer objective so both produce
// bit-identical sums: accumulate over branches in order, then clamp the
// float residue back into [0,1].
fn combine_cell(branch_values: &[&[f64]], weights: &[f64], idx: usize) -> f64 {
    let mut acc = 0.0;
    for (k, vals) in branch_values.iter().enumerate() {
        acc += weights[k] * vals[idx];
    }
    acc.clamp(0.0, 1.0)
}

fn combine_values(branch_values: &[&[f64]], weights: &[f64]) -> Vec<f64> {
    let len = branch_values[0].len();
    (0..len)
        .map(|idx| combine_cell(branch_values, weights, idx))
        .collect()
}

/// `binarize(combine(branches, w), threshold)`.
pub fn predict(branches: &BranchSet, w: &WeightVector, threshold: f64) -> Result<LabelMatrix> {
    binarize(&combine(branches, w)?, threshold)
}

/// All weight vectors on the simplex lattice of the given step, i.e. every
/// composition `(c_1..c_n)` of `m = 1/step` scaled by `1/m`, ordered with
/// the leading coordinates largest first. The count is `C(m+n-1, n-1)`.
pub fn enumerate_simplex(n_branches: usize, step: f64) -> Result<Vec<WeightVector>> {
    let m = lattice_resolution(step)?;
    if n_branches == 0 {
        return Err(Error::Param("need at least one branch".into()));
    }
    Ok(SimplexLattice::new(n_branches, m)
        .map(|c| WeightVector {
            weights: counts_to_weights(&c, m),
        })
        .collect())
}

fn counts_to_weights(counts: &[u32], m: u32) -> Vec<f64> {
    counts.iter().map(|c| *c as f64 / m as f64).collect()
}

/// Lazy enumeration of all compositions of `m` into `n` parts, first
/// coordinate descending.
struct SimplexLattice {
    next: Option<Vec<u32>>,
}

impl SimplexLattice {
    fn new(n: usize, m: u32) -> Self {
        let mut first = vec![0u32; n];
        first[0] = m;
        Self { next: Some(first) }
    }
}

impl Iterator for SimplexLattice {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        let current = self.next.take()?;
        let n = current.len();
        // advance: decrement the last nonzero coordinate before the tail,
        // fold everything after it into the next position
        let mut succ = current.clone();
        match (0..n - 1).rev().find(|i| succ[*i] > 0) {
            Some(j) => {
                let tail: u32 = succ[j + 1..].iter().sum();
                succ[j] -= 1;
                for c in &mut succ[j + 1..] {
                    *c = 0;
                }
                succ[j + 1] = tail + 1;
                self.next = Some(succ);
            }
            None => self.next = None,
        }
        Some(current)
    }
}

fn sorted_common_ids(id_sets: &[&[String]]) -> Result<(Vec<String>, Vec<String>)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for ids in id_sets {
        for id in ids.iter() {
            *counts.entry(id.as_str()).or_insert(0) += 1;
        }
    }
    let mut common: Vec<String> = counts
        .iter()
        .filter(|(_, n)| **n == id_sets.len())
        .map(|(id, _)| id.to_string())
        .collect();
    common.sort_unstable();
    if common.is_empty() {
        return Err(Error::Mismatch("no sample ids in common".into()));
    }
    let mut dropped: Vec<String> = counts
        .iter()
        .filter(|(_, n)| **n != id_sets.len())
        .map(|(id, _)| id.to_string())
        .collect();
    dropped.sort_unstable();
    Ok((common, dropped))
}

fn select_by_ids<T: SampleTable>(table: &T, ids: &[String]) -> T {
    let pos: HashMap<&str, usize> = table.ids().iter().map(|s| s.as_str()).zip(0..).collect();
    let rows: Vec<usize> = ids.iter().map(|id| pos[id.as_str()]).collect();
    table.select(&rows)
}

/// Builds a [`BranchSet`] from independently loaded branch files: rows are
/// restricted to the sorted intersection of all sample ids, and ids that
/// appear in only some branches are reported back (branch files may
/// legitimately cover different subsets).
pub fn align_branch_scores(raw: Vec<(String, ScoreMatrix)>) -> Result<(BranchSet, Vec<String>)> {
    if raw.is_empty() {
        return Err(Error::Param("branch set is empty".into()));
    }
    let id_sets: Vec<&[String]> = raw.iter().map(|(_, m)| m.sample_ids()).collect();
    let (common, dropped) = sorted_common_ids(&id_sets)?;
    let branches = raw
        .iter()
        .map(|(id, m)| (id.clone(), select_by_ids(m, &common)))
        .collect();
    Ok((BranchSet::new(branches)?, dropped))
}

/// As [`align_branch_scores`], but also restricts a truth matrix to the
/// same rows so the pair is ready for [`optimize_weights`].
pub fn align_branches_with_truth(
    raw: Vec<(String, ScoreMatrix)>,
    truth: LabelMatrix,
) -> Result<(BranchSet, LabelMatrix, Vec<String>)> {
    if raw.is_empty() {
        return Err(Error::Param("branch set is empty".into()));
    }
    let mut id_sets: Vec<&[String]> = raw.iter().map(|(_, m)| m.sample_ids()).collect();
    id_sets.push(truth.sample_ids());
    let (common, dropped) = sorted_common_ids(&id_sets)?;
    let branches = raw
        .iter()
        .map(|(id, m)| (id.clone(), select_by_ids(m, &common)))
        .collect();
    let truth = select_by_ids(&truth, &common);
    Ok((BranchSet::new(branches)?, truth, dropped))
}

/// One validation pair for the objective: branch scores plus aligned truth.
#[derive(Debug, Clone)]
pub struct ValidationPair<'a> {
    pub branches: &'a BranchSet,
    pub truth: &'a LabelMatrix,
}

/// Result of a weight search.
#[derive(Debug, Clone)]
pub struct Optimized {
    pub weights: WeightVector,
    pub objective: f64,
    /// Set when any validation pair has fewer than two samples.
    pub degenerate: bool,
}

struct PairCtx<'a> {
    branch_values: Vec<&'a [f64]>,
    truth: &'a [u8],
    n_labels: usize,
}

struct Objective<'a> {
    pairs: Vec<PairCtx<'a>>,
    threshold: f64,
}

impl<'a> Objective<'a> {
    fn build(pairs: &[ValidationPair<'a>], threshold: f64) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Param("no validation pairs".into()));
        }
        let n_branches = pairs[0].branches.len();
        let ids0 = pairs[0].branches.branch_ids();
        let mut ctxs = Vec::with_capacity(pairs.len());
        for p in pairs {
            if p.branches.len() != n_branches || p.branches.branch_ids() != ids0 {
                return Err(Error::Mismatch(
                    "validation pairs disagree on branch ids".into(),
                ));
            }
            if p.truth.n_rows() == 0 {
                return Err(Error::Param("empty truth matrix".into()));
            }
            if p.branches.sample_ids() != p.truth.sample_ids()
                || p.branches.labels() != p.truth.labels()
            {
                return Err(Error::Mismatch(
                    "branch scores and truth are not aligned".into(),
                ));
            }
            ctxs.push(PairCtx {
                branch_values: p
                    .branches
                    .branches()
                    .iter()
                    .map(|(_, m)| m.values())
                    .collect(),
                truth: p.truth.values(),
                n_labels: p.truth.n_labels(),
            });
        }
        Ok(Self {
            pairs: ctxs,
            threshold,
        })
    }

    fn n_branches(&self) -> usize {
        self.pairs[0].branch_values.len()
    }

    /// Mean macro-F1 over the validation pairs at normalized weights `w`.
    fn eval(&self, w: &[f64]) -> f64 {
        let mut total = 0.0;
        for pair in &self.pairs {
            let n_labels = pair.n_labels;
            let mut tp = vec![0u32; n_labels];
            let mut fp = vec![0u32; n_labels];
            let mut fn_ = vec![0u32; n_labels];
            for idx in 0..pair.truth.len() {
                let acc = combine_cell(&pair.branch_values, w, idx);
                let p = acc >= self.threshold;
                let t = pair.truth[idx] == 1;
                let c = idx % n_labels;
                match (p, t) {
                    (true, true) => tp[c] += 1,
                    (true, false) => fp[c] += 1,
                    (false, true) => fn_[c] += 1,
                    _ => {}
                }
            }
            let mut macro_sum = 0.0;
            for c in 0..n_labels {
                let denom = 2 * tp[c] + fp[c] + fn_[c];
                if denom > 0 {
                    macro_sum += 2.0 * tp[c] as f64 / denom as f64;
                }
            }
            total += macro_sum / n_labels as f64;
        }
        total / self.pairs.len() as f64
    }

    fn eval_counts(&self, counts: &[u32], m: u32) -> f64 {
        self.eval(&normalize(&counts_to_weights(counts, m)))
    }
}

/// The most even lattice composition, used as the coordinate-ascent start
/// (exact uniform weights when `n` divides the resolution).
pub fn lattice_uniform(n_branches: usize, step: f64) -> Result<WeightVector> {
    let m = lattice_resolution(step)?;
    if n_branches == 0 {
        return Err(Error::Param("need at least one branch".into()));
    }
    let counts = uniform_counts(n_branches, m);
    Ok(WeightVector {
        weights: counts_to_weights(&counts, m),
    })
}

fn uniform_counts(n: usize, m: u32) -> Vec<u32> {
    let base = m / n as u32;
    let extra = (m % n as u32) as usize;
    (0..n).map(|i| base + u32::from(i < extra)).collect()
}

/// Searches for the weights maximizing mean macro-F1 over the validation
/// pairs. Exhaustive grid returns the global lattice maximum (ties broken
/// by the lexicographically smallest weight vector); coordinate ascent
/// starts from [`lattice_uniform`] and accepts strict improvements only,
/// so its objective never falls below the uniform start.
pub fn optimize_weights_multi(
    pairs: &[ValidationPair<'_>],
    cfg: &SearchConfig,
) -> Result<Optimized> {
    let objective = Objective::build(pairs, cfg.threshold)?;
    let degenerate = pairs.iter().any(|p| p.truth.n_rows() < 2);
    let n = objective.n_branches();
    let m = cfg.resolution;

    let best_counts = match cfg.method {
        SearchMethod::ExhaustiveGrid => {
            let mut best: Option<(f64, Vec<u32>)> = None;
            for counts in SimplexLattice::new(n, m) {
                let obj = objective.eval_counts(&counts, m);
                let better = match &best {
                    None => true,
                    Some((b_obj, b_counts)) => {
                        obj > *b_obj || (obj == *b_obj && counts < *b_counts)
                    }
                };
                if better {
                    best = Some((obj, counts));
                }
            }
            best.expect("lattice is never empty").1
        }
        SearchMethod::CoordinateAscent => {
            let mut counts = uniform_counts(n, m);
            let mut current = objective.eval_counts(&counts, m);
            for _ in 0..cfg.max_rounds {
                let mut improved = false;
                for k in 0..n {
                    let mut best_move: Option<(f64, Vec<u32>)> = None;
                    for v in 0..=m {
                        let cand = reassign_coordinate(&counts, k, v, m);
                        let obj = objective.eval_counts(&cand, m);
                        if obj > current {
                            let better = match &best_move {
                                None => true,
                                Some((b_obj, b_counts)) => {
                                    obj > *b_obj || (obj == *b_obj && cand < *b_counts)
                                }
                            };
                            if better {
                                best_move = Some((obj, cand));
                            }
                        }
                    }
                    if let Some((obj, cand)) = best_move {
                        counts = cand;
                        current = obj;
                        improved = true;
                    }
                }
                if !improved {
                    break;
                }
            }
            counts
        }
    };

    let weights = WeightVector {
        weights: counts_to_weights(&best_counts, m),
    };
    let objective_value = objective.eval_counts(&best_counts, m);
    Ok(Optimized {
        weights,
        objective: objective_value,
        degenerate,
    })
}

/// Single-validation-set convenience wrapper.
pub fn optimize_weights(
    branches: &BranchSet,
    truth: &LabelMatrix,
    cfg: &SearchConfig,
) -> Result<Optimized> {
    optimize_weights_multi(&[ValidationPair { branches, truth }], cfg)
}

/// Sets coordinate `k` to `v` lattice units and redistributes the rest
/// proportionally to the current counts by largest-remainder apportionment
/// (even split when the rest are all zero). Pure integer arithmetic, so
/// the result is a lattice point and the move is deterministic.
fn reassign_coordinate(counts: &[u32], k: usize, v: u32, m: u32) -> Vec<u32> {
    let n = counts.len();
    let rest: u64 = (m - v) as u64;
    let sum_others: u64 = counts
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, c)| *c as u64)
        .sum();

    let mut out = vec![0u32; n];
    out[k] = v;
    if n == 1 {
        return out;
    }
    if sum_others == 0 {
        let others = (n - 1) as u64;
        let base = rest / others;
        let extra = (rest % others) as usize;
        let mut handed = 0usize;
        for (j, slot) in out.iter_mut().enumerate() {
            if j == k {
                continue;
            }
            *slot = base as u32 + u32::from(handed < extra);
            handed += 1;
        }
        return out;
    }

    let mut assigned: u64 = 0;
    let mut remainders: Vec<(u64, usize)> = Vec::with_capacity(n - 1);
    for j in 0..n {
        if j == k {
            continue;
        }
        let num = counts[j] as u64 * rest;
        out[j] = (num / sum_others) as u32;
        assigned += num / sum_others;
        remainders.push((num % sum_others, j));
    }
    let mut leftover = rest - assigned;
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, j) in remainders {
        if leftover == 0 {
            break;
        }
        out[j] += 1;
        leftover -= 1;
    }
    out
}

// ---------------------------------------------------------------------------
// Weights file I/O (`branch_id,weight`)
// ---------------------------------------------------------------------------

const WEIGHTS_HEADER: &str = "branch_id,weight";

pub fn read_weights(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_weights_text(&path.display().to_string(), &text)
}

pub fn parse_weights_text(file: &str, text: &str) -> Result<Vec<(String, f64)>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, l)) if l == WEIGHTS_HEADER => {}
        Some((n, l)) => {
            return Err(Error::format(
                file,
                n,
                format!("expected header `{WEIGHTS_HEADER}`, found `{l}`"),
            ))
        }
        None => return Err(Error::format(file, 1, "empty file")),
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(Error::format(
                file,
                n,
                format!("expected 2 fields, found {}", fields.len()),
            ));
        }
        if fields[0].is_empty() {
            return Err(Error::format(file, n, "empty branch_id"));
        }
        let w: f64 = fields[1]
            .parse()
            .map_err(|_| Error::format(file, n, format!("`{}` is not a number", fields[1])))?;
        if !w.is_finite() || w < 0.0 {
            return Err(Error::format(
                file,
                n,
                format!("weight {w} is not a finite value >= 0"),
            ));
        }
        if out.iter().any(|(id, _)| id == fields[0]) {
            return Err(Error::format(
                file,
                n,
                format!("duplicate branch_id `{}`", fields[0]),
            ));
        }
        out.push((fields[0].to_string(), w));
    }
    if out.is_empty() {
        return Err(Error::format(file, 1, "no weight rows"));
    }
    Ok(out)
}

pub fn weights_to_csv(rows: &[(String, f64)]) -> String {
    let mut out = String::from(WEIGHTS_HEADER);
    out.push('\n');
    for (id, w) in rows {
        let _ = writeln!(out, "{id},{w:.6}");
    }
    out
}

pub fn write_weights(path: impl AsRef<Path>, rows: &[(String, f64)]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, weights_to_csv(rows)).map_err(|e| Error::io(path, e))
}
