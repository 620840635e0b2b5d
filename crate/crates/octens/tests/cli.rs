//! End-to-end tests of the `octens` binary: exit codes, output formats,
//! determinism, and help-text completeness.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use octens::imagepipe::{write_image_gray, ImageGray};

fn octens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_octens"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

const TRUTH: &str = "sample_id,IRHRF,PAVF,FAVF,IRF,DRT_ME,VD\n\
                     s1,1,0,1,0,1,0\n\
                     s2,0,1,0,1,0,1\n\
                     s3,1,1,0,0,1,1\n";

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn eval_perfect_prediction_prints_unit_macro() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write(dir.path(), "truth.csv", TRUTH);
    let out = octens(&[
        "eval",
        "--pred",
        truth.to_str().unwrap(),
        "--labels",
        truth.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("macro,1.000000"), "{text}");
    for label in ["IRHRF", "PAVF", "FAVF", "IRF", "DRT_ME", "VD"] {
        assert!(text.contains(&format!("{label},1.000000")), "{text}");
    }
}

#[test]
fn malformed_scores_exit_one_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.csv",
        "sample_id,IRHRF,PAVF,FAVF,IRF,DRT_ME,VD\ns1,0.1,1.3,0,0,0,0\n",
    );
    let truth = write(dir.path(), "truth.csv", TRUTH);
    let out = octens(&[
        "optimize",
        "--scores",
        bad.to_str().unwrap(),
        "--labels",
        truth.to_str().unwrap(),
        "--out",
        dir.path().join("w.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains(":2:"), "{err}");
    assert!(err.contains("PAVF"), "{err}");
}

#[test]
fn missing_input_file_exits_two() {
    let out = octens(&[
        "eval",
        "--pred",
        "/no/such/file.csv",
        "--labels",
        "/no/such/other.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_rejected() {
    let out = octens(&["eval", "--pred", "x.csv", "--labels", "y.csv", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--bogus"));
}

#[test]
fn optimize_truth_and_complement_reaches_unit_objective() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write(dir.path(), "truth.csv", TRUTH);
    let as_scores = |v: u8| format!("{v}.000000");
    let mut matching = String::from("sample_id,IRHRF,PAVF,FAVF,IRF,DRT_ME,VD\n");
    let mut inverted = matching.clone();
    for line in TRUTH.lines().skip(1) {
        let mut fields = line.split(',');
        let id = fields.next().unwrap();
        let vals: Vec<u8> = fields.map(|f| f.parse().unwrap()).collect();
        matching.push_str(id);
        inverted.push_str(id);
        for v in &vals {
            matching.push_str(&format!(",{}", as_scores(*v)));
            inverted.push_str(&format!(",{}", as_scores(1 - *v)));
        }
        matching.push('\n');
        inverted.push('\n');
    }
    let m = write(dir.path(), "match.csv", &matching);
    let i = write(dir.path(), "invert.csv", &inverted);
    let w_out = dir.path().join("weights.csv");
    let out = octens(&[
        "optimize",
        "--scores",
        &format!("{},{}", m.to_str().unwrap(), i.to_str().unwrap()),
        "--labels",
        truth.to_str().unwrap(),
        "--step",
        "0.05",
        "--method",
        "grid",
        "--threshold",
        "0.5",
        "--out",
        w_out.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(
        stdout(&out).contains("objective,1.000000"),
        "{}",
        stdout(&out)
    );
    let weights = std::fs::read_to_string(&w_out).unwrap();
    assert_eq!(
        weights,
        "branch_id,weight\nmatch,0.550000\ninvert,0.450000\n"
    );
}

#[test]
fn combine_rejects_mismatched_weight_rows() {
    let dir = tempfile::tempdir().unwrap();
    let scores = write(
        dir.path(),
        "branch_a.csv",
        "sample_id,IRHRF,PAVF,FAVF,IRF,DRT_ME,VD\ns1,0.5,0.5,0.5,0.5,0.5,0.5\n",
    );
    let weights = write(
        dir.path(),
        "weights.csv",
        "branch_id,weight\nwrong_name,1.0\n",
    );
    let out = octens(&[
        "combine",
        "--scores",
        scores.to_str().unwrap(),
        "--weights",
        weights.to_str().unwrap(),
        "--out",
        dir.path().join("out.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("branch_a"), "{}", stderr(&out));
}

#[test]
fn split_writes_expected_format_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write(
        dir.path(),
        "manifest.csv",
        "sample_id,eye_id\na1,L\na2,L\nb1,R\nb2,R\n",
    );
    let out1 = dir.path().join("s1.csv");
    let out2 = dir.path().join("s2.csv");
    for out_path in [&out1, &out2] {
        let out = octens(&[
            "split",
            "--manifest",
            manifest.to_str().unwrap(),
            "--val-frac",
            "0.5",
            "--seed",
            "3",
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let text = std::fs::read_to_string(&out1).unwrap();
    assert_eq!(text, std::fs::read_to_string(&out2).unwrap());
    assert!(text.starts_with("sample_id,split\n"));
    // the two samples of one eye always travel together
    let side = |id: &str| {
        text.lines()
            .find(|l| l.starts_with(id))
            .unwrap()
            .split(',')
            .nth(1)
            .unwrap()
            .to_string()
    };
    assert_eq!(side("a1"), side("a2"));
    assert_eq!(side("b1"), side("b2"));
    assert_ne!(side("a1"), side("b1"));
}

#[test]
fn split_rejects_single_eye_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write(dir.path(), "m.csv", "sample_id,eye_id\na1,L\na2,L\n");
    let out = octens(&[
        "split",
        "--manifest",
        manifest.to_str().unwrap(),
        "--val-frac",
        "0.5",
        "--seed",
        "0",
        "--out",
        dir.path().join("o.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

fn gradient_image(w: u32, h: u32) -> ImageGray {
    let pixels = (0..w * h).map(|i| (i * 7 % 256) as u8).collect();
    ImageGray::new(w, h, pixels).unwrap()
}

#[test]
fn preprocess_and_augment_round_trip_pngs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    write_image_gray(input.join("x.png"), &gradient_image(20, 16)).unwrap();
    write_image_gray(input.join("y.png"), &gradient_image(12, 12)).unwrap();

    let pre = dir.path().join("pre");
    let out = octens(&[
        "preprocess",
        "--in",
        input.to_str().unwrap(),
        "--out",
        pre.to_str().unwrap(),
        "--alpha",
        "1.15",
        "--beta",
        "-15",
        "--bg-threshold",
        "240",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(pre.join("x.png").exists() && pre.join("y.png").exists());

    let conf = write(
        dir.path(),
        "aug.conf",
        "crop_fraction = 0.9\nhflip_probability = 0.5\nblur_sigma_range = 0.2,0.8\n\
         perspective_distortion = 0.1\naffine_max_rotation = 10\n\
         affine_max_translate_fraction = 0.05\naffine_scale_range = 0.95,1.05\n\
         background_threshold = 245\nseed = 4\n",
    );
    let aug1 = dir.path().join("aug1");
    let aug2 = dir.path().join("aug2");
    for aug in [&aug1, &aug2] {
        let out = octens(&[
            "augment",
            "--in",
            pre.to_str().unwrap(),
            "--out",
            aug.to_str().unwrap(),
            "--spec",
            conf.to_str().unwrap(),
            "--seed",
            "99",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    // explicit seeds make whole runs reproducible
    for name in ["x.png", "y.png"] {
        let a = std::fs::read(aug1.join(name)).unwrap();
        let b = std::fs::read(aug2.join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn fixture_command_passes_on_shipped_files() {
    let out = octens(&["fixture", "--dir", fixtures_dir().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("weight_sum,1.000000 (exact)"), "{text}");
    assert!(text.contains("fixture,pass"), "{text}");
}

#[test]
fn fixture_with_missing_branch_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(fixtures_dir()).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
    }
    std::fs::remove_file(dir.path().join("maxvit_trex.csv")).unwrap();
    let out = octens(&["fixture", "--dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fixture_normalizes_scaled_weights_and_flags_them() {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(fixtures_dir()).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
    }
    // doubled weights: sum != 1 but same direction, so goldens still match
    std::fs::write(
        dir.path().join("weights.csv"),
        "branch_id,weight\neffv2m_trex_prime,0.200000\nmaxvit_trex_prime,0.900000\n\
         effv2m_trex,0.200000\nmaxvit_trex,0.500000\neffv2m_prime,0.200000\n",
    )
    .unwrap();
    let out = octens(&["fixture", "--dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("normalized before use"), "{text}");
    assert!(text.contains("fixture,pass"), "{text}");
}

#[test]
fn blocks_selfcheck_passes_and_reports_each_property() {
    let out = octens(&["blocks", "selfcheck", "--seed", "1", "--size", "4"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(!text.contains("FAIL"), "{text}");
    for name in [
        "softmax-rows-sum-to-one",
        "full-window-equals-dense",
        "full-grid-equals-dense",
        "max-sa-mixes-globally",
        "dense-cost-quadratic",
        "max-sa-cost-linear",
        "mbconv-residual-identity",
        "fused-mbconv-residual-identity",
    ] {
        assert!(text.contains(&format!("PASS {name}")), "{text}");
    }
}

#[test]
fn help_text_covers_every_flag() {
    let expectations: &[(&[&str], &[&str])] = &[
        (
            &["preprocess"],
            &["--in", "--out", "--alpha", "--beta", "--bg-threshold"],
        ),
        (&["augment"], &["--in", "--out", "--spec", "--seed"]),
        (&["split"], &["--manifest", "--val-frac", "--seed", "--out"]),
        (&["combine"], &["--scores", "--weights", "--out"]),
        (
            &["optimize"],
            &[
                "--scores",
                "--labels",
                "--step",
                "--method",
                "--threshold",
                "--max-rounds",
                "--out",
            ],
        ),
        (&["eval"], &["--pred", "--labels"]),
        (&["blocks", "selfcheck"], &["--seed", "--size", "--weights"]),
        (&["fixture"], &["--dir"]),
    ];
    for (cmd, flags) in expectations {
        let mut args: Vec<&str> = cmd.to_vec();
        args.push("--help");
        let out = octens(&args);
        assert!(out.status.success(), "{cmd:?}");
        let text = stdout(&out);
        for flag in *flags {
            assert!(
                text.contains(flag),
                "{cmd:?} help is missing {flag}:\n{text}"
            );
        }
    }
}
