//! Command-line front end: preprocess/augment image directories, split
//! manifests, combine branch scores, optimize ensemble weights, evaluate
//! predictions, run the block self-checks, and reproduce the shipped
//! fixture.
//!
//! Exit codes: 0 success, 1 validation or parameter error, 2 I/O error.
//! Diagnostics go to stderr; data goes to files or stdout.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;

use octens::blocks::{read_weight_file, selfcheck::run_selfcheck};
use octens::data::{self, read_labels, read_manifest, read_scores, split_to_csv, ScoreMatrix};
use octens::ensemble::{
    self, optimize_weights_multi, read_weights, SearchConfig, SearchMethod, ValidationPair,
    WeightVector,
};
use octens::error::Error;
use octens::fixture::reproduce_fixture;
use octens::imagepipe::{
    augment_image, blacken_background, linear_transform, read_image_gray, write_image_gray,
    AugmentRng, AugmentSpec, LinearTransformParams,
};
use octens::metrics::evaluate;

#[derive(Parser)]
#[command(
    name = "octens",
    version,
    about = "Weighted-ensemble toolkit for OCT biomarker prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply noise reduction (linear transform + background blackening) to a directory of PNGs
    Preprocess {
        /// Input directory of 8-bit grayscale PNG files
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        /// Output directory (created if missing)
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Contrast gain (> 0)
        #[arg(long, default_value_t = 1.15)]
        alpha: f64,
        /// Brightness offset
        #[arg(long, default_value_t = -15.0, allow_hyphen_values = true)]
        beta: f64,
        /// Background intensity threshold
        #[arg(long = "bg-threshold", default_value_t = 240)]
        bg_threshold: u8,
    },
    /// Apply the randomized augmentation stack to a directory of PNGs
    Augment {
        /// Input directory of 8-bit grayscale PNG files
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        /// Output directory (created if missing)
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Augmentation config file (flat key = value)
        #[arg(long, value_name = "FILE")]
        spec: PathBuf,
        /// Override the seed from the config file
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Eye-disjoint train/validation split of a sample manifest
    Split {
        /// Manifest CSV (sample_id,eye_id)
        #[arg(long, value_name = "CSV")]
        manifest: PathBuf,
        /// Target validation fraction in (0,1)
        #[arg(long = "val-frac")]
        val_frac: f64,
        /// Shuffle seed
        #[arg(long)]
        seed: u64,
        /// Output CSV (sample_id,split)
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Weighted-average branch score files into one score file
    Combine {
        /// Comma-separated branch score CSVs (branch order; ids from file stems)
        #[arg(long, value_name = "CSV,CSV,...")]
        scores: String,
        /// Weights CSV (branch_id,weight); rows must match the branch ids
        #[arg(long, value_name = "CSV")]
        weights: PathBuf,
        /// Output score CSV
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Search for the branch weights maximizing mean macro-F1
    Optimize {
        /// Comma-separated branch score CSVs; repeat together with --labels
        /// for additional validation sets
        #[arg(long, value_name = "CSV,CSV,...", required = true)]
        scores: Vec<String>,
        /// Ground-truth label CSV for the matching --scores occurrence
        #[arg(long, value_name = "CSV", required = true)]
        labels: Vec<PathBuf>,
        /// Lattice resolution; must divide 1
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        /// grid (exhaustive) or coord (coordinate ascent)
        #[arg(long, default_value = "grid")]
        method: String,
        /// Rounding threshold applied inside the objective
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Sweep limit for coordinate ascent
        #[arg(long = "max-rounds", default_value_t = 50)]
        max_rounds: u32,
        /// Output weights CSV
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Evaluate binary predictions against ground truth
    Eval {
        /// Predicted label CSV
        #[arg(long, value_name = "CSV")]
        pred: PathBuf,
        /// Ground-truth label CSV
        #[arg(long, value_name = "CSV")]
        labels: PathBuf,
    },
    /// Toy architecture blocks
    Blocks {
        #[command(subcommand)]
        command: BlocksCommand,
    },
    /// Reproduce the shipped five-branch weighted-ensemble fixture
    Fixture {
        /// Fixture directory
        #[arg(long, default_value = "fixtures", value_name = "DIR")]
        dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum BlocksCommand {
    /// Run the attention/conv block invariant suite
    Selfcheck {
        /// Weight seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Input side length (even, >= 4)
        #[arg(long, default_value_t = 8)]
        size: usize,
        /// Flat binary weight file (4 x 16 x 16 little-endian f64)
        #[arg(long, value_name = "FILE")]
        weights: Option<PathBuf>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version requests are not errors
            if e.use_stderr() {
                eprint!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code(&err));
        }
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Preprocess {
            input,
            out,
            alpha,
            beta,
            bg_threshold,
        } => preprocess(&input, &out, alpha, beta, bg_threshold),
        Command::Augment {
            input,
            out,
            spec,
            seed,
        } => augment(&input, &out, &spec, seed),
        Command::Split {
            manifest,
            val_frac,
            seed,
            out,
        } => split(&manifest, val_frac, seed, &out),
        Command::Combine {
            scores,
            weights,
            out,
        } => combine(&scores, &weights, &out),
        Command::Optimize {
            scores,
            labels,
            step,
            method,
            threshold,
            max_rounds,
            out,
        } => optimize(&scores, &labels, step, &method, threshold, max_rounds, &out),
        Command::Eval { pred, labels } => eval(&pred, &labels),
        Command::Blocks {
            command:
                BlocksCommand::Selfcheck {
                    seed,
                    size,
                    weights,
                },
        } => selfcheck(seed, size, weights.as_deref()),
        Command::Fixture { dir } => fixture(&dir),
    }
}

/// PNG files in `dir`, sorted by name for deterministic processing order.
fn png_files(dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn preprocess(
    input: &Path,
    out: &Path,
    alpha: f64,
    beta: f64,
    bg_threshold: u8,
) -> Result<(), Error> {
    let params = LinearTransformParams::new(alpha, beta)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let files = png_files(input)?;
    for file in &files {
        let img = read_image_gray(file)?;
        let img = linear_transform(&img, &params)?;
        let img = blacken_background(&img, bg_threshold);
        write_image_gray(out.join(file.file_name().expect("file entry")), &img)?;
    }
    eprintln!(
        "preprocessed {} image(s) into {}",
        files.len(),
        out.display()
    );
    Ok(())
}

fn augment(input: &Path, out: &Path, spec_path: &Path, seed: Option<u64>) -> Result<(), Error> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let mut spec = AugmentSpec::parse(&spec_path.display().to_string(), &text)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let files = png_files(input)?;
    let mut rng = AugmentRng::seed_from_u64(spec.seed);
    for file in &files {
        let img = read_image_gray(file)?;
        let img = augment_image(&img, &spec, &mut rng)?;
        write_image_gray(out.join(file.file_name().expect("file entry")), &img)?;
    }
    eprintln!("augmented {} image(s) into {}", files.len(), out.display());
    Ok(())
}

fn split(manifest_path: &Path, val_frac: f64, seed: u64, out: &Path) -> Result<(), Error> {
    let manifest = read_manifest(manifest_path)?;
    let result = data::eyewise_split(&manifest, val_frac, seed)?;
    std::fs::write(out, split_to_csv(&manifest, &result)).map_err(|e| Error::io(out, e))?;
    eprintln!(
        "split {} samples: {} train / {} val",
        manifest.len(),
        result.train_ids.len(),
        result.val_ids.len()
    );
    Ok(())
}

fn branch_id_from_path(path: &Path) -> Result<String, Error> {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| {
            Error::Param(format!(
                "cannot derive a branch id from `{}`",
                path.display()
            ))
        })
}

fn load_branches(list: &str) -> Result<Vec<(String, ScoreMatrix)>, Error> {
    let mut branches = Vec::new();
    for raw in list.split(',') {
        let path = PathBuf::from(raw.trim());
        if path.as_os_str().is_empty() {
            return Err(Error::Param("empty path in --scores list".into()));
        }
        branches.push((branch_id_from_path(&path)?, read_scores(&path)?));
    }
    Ok(branches)
}

fn report_dropped(context: &str, dropped: &[String]) {
    if !dropped.is_empty() {
        eprintln!(
            "{context}: dropped {} sample id(s) outside the common set: {}",
            dropped.len(),
            dropped.join(", ")
        );
    }
}

fn combine(scores: &str, weights_path: &Path, out: &Path) -> Result<(), Error> {
    let raw = load_branches(scores)?;
    let (set, dropped) = ensemble::align_branch_scores(raw)?;
    report_dropped("combine", &dropped);

    let rows = read_weights(weights_path)?;
    let ordered = order_weights(&rows, &set.branch_ids())?;
    let combined = ensemble::combine(&set, &ordered)?;
    data::write_scores(out, &combined)?;
    eprintln!("combined {} branches into {}", set.len(), out.display());
    Ok(())
}

/// Reorders weight-file rows to the branch order; the row ids must match
/// the branch ids exactly.
fn order_weights(rows: &[(String, f64)], branch_ids: &[&str]) -> Result<WeightVector, Error> {
    let mut weights = Vec::with_capacity(branch_ids.len());
    for id in branch_ids {
        match rows.iter().find(|(rid, _)| rid == id) {
            Some((_, w)) => weights.push(*w),
            None => {
                return Err(Error::Mismatch(format!(
                    "weights file has no row for branch `{id}`"
                )))
            }
        }
    }
    if rows.len() != branch_ids.len() {
        let extra: Vec<&str> = rows
            .iter()
            .map(|(id, _)| id.as_str())
            .filter(|id| !branch_ids.contains(id))
            .collect();
        return Err(Error::Mismatch(format!(
            "weights file has rows for unknown branch(es): {}",
            extra.join(", ")
        )));
    }
    WeightVector::new(weights)
}

#[allow(clippy::too_many_arguments)]
fn optimize(
    scores: &[String],
    labels: &[PathBuf],
    step: f64,
    method: &str,
    threshold: f64,
    max_rounds: u32,
    out: &Path,
) -> Result<(), Error> {
    if scores.len() != labels.len() {
        return Err(Error::Param(format!(
            "{} --scores occurrence(s) but {} --labels; they pair up one-to-one",
            scores.len(),
            labels.len()
        )));
    }
    let method = match method {
        "grid" => SearchMethod::ExhaustiveGrid,
        "coord" => SearchMethod::CoordinateAscent,
        other => {
            return Err(Error::Param(format!(
                "unknown method `{other}` (expected grid or coord)"
            )))
        }
    };
    let cfg = SearchConfig::new(step, method, max_rounds, threshold)?;

    let mut aligned = Vec::new();
    for (i, (list, label_path)) in scores.iter().zip(labels).enumerate() {
        let raw = load_branches(list)?;
        let truth = read_labels(label_path)?;
        let (set, truth, dropped) = ensemble::align_branches_with_truth(raw, truth)?;
        report_dropped(&format!("validation set {}", i + 1), &dropped);
        aligned.push((set, truth));
    }
    let pairs: Vec<ValidationPair> = aligned
        .iter()
        .map(|(set, truth)| ValidationPair {
            branches: set,
            truth,
        })
        .collect();

    let result = optimize_weights_multi(&pairs, &cfg)?;
    if result.degenerate {
        eprintln!("warning: a validation set has fewer than two samples");
    }

    let rows: Vec<(String, f64)> = aligned[0]
        .0
        .branch_ids()
        .iter()
        .zip(result.weights.raw())
        .map(|(id, w)| (id.to_string(), *w))
        .collect();
    ensemble::write_weights(out, &rows)?;
    println!("objective,{:.6}", result.objective);
    eprintln!("wrote weights to {}", out.display());
    Ok(())
}

fn eval(pred_path: &Path, labels_path: &Path) -> Result<(), Error> {
    let pred = read_labels(pred_path)?;
    let truth = read_labels(labels_path)?;
    let (pred, truth, report) = data::align(&pred, &truth)?;
    report_dropped("eval", &report.dropped_left);
    report_dropped("eval", &report.dropped_right);

    let metrics = evaluate(&pred, &truth)?;
    for (label, f1) in truth.labels().iter().zip(&metrics.per_label_f1) {
        println!("{label},{f1:.6}");
    }
    println!("macro,{:.6}", metrics.macro_f1);
    Ok(())
}

fn selfcheck(seed: u64, size: usize, weights: Option<&Path>) -> Result<(), Error> {
    let flat = weights.map(read_weight_file).transpose()?;
    let results = run_selfcheck(size, seed, flat)?;
    let mut failed = 0;
    for r in &results {
        if r.passed {
            println!("PASS {} ({})", r.name, r.detail);
        } else {
            failed += 1;
            println!("FAIL {} ({})", r.name, r.detail);
        }
    }
    if failed > 0 {
        return Err(Error::Param(format!("{failed} block check(s) failed")));
    }
    Ok(())
}

fn fixture(dir: &Path) -> Result<(), Error> {
    let report = reproduce_fixture(dir)?;
    println!("branches,{}", report.weight_rows.len());
    if report.sums_to_one {
        println!("weight_sum,1.000000 (exact)");
    } else {
        println!(
            "weight_sum,{:.6} (normalized before use)",
            report.weight_sum
        );
    }
    println!(
        "weight_table,{}",
        if report.matches_table {
            "match"
        } else {
            "MISMATCH"
        }
    );
    println!(
        "golden_combined,{}",
        if report.combined_golden_ok {
            "match"
        } else {
            "MISMATCH"
        }
    );
    println!(
        "golden_predicted,{}",
        if report.predicted_golden_ok {
            "match"
        } else {
            "MISMATCH"
        }
    );
    if !report.passed() {
        return Err(Error::Param("fixture reproduction failed".into()));
    }
    println!("fixture,pass");
    Ok(())
}
