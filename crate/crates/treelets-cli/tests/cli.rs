//! End-to-end checks of the command-line interface: exit codes, parse
//! diagnostics, output formats and config-file reruns.

use std::path::Path;
use std::process::{Command, Output};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_treelets"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("tempdir")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn treelet_on_perfectly_correlated_pair() {
    let dir = tempdir();
    let input = dir.path().join("data.csv");
    write(&input, "a,b\n1.0,1.0\n2.0,2.0\n3.0,3.0\n-1.0,-1.0\n");
    let out = dir.path().join("out");
    let result = run(&[
        "treelet",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--basis-level",
        "0",
    ]);
    assert!(result.status.success(), "{}", stderr(&result));

    let model: serde_json::Value = serde_json::from_str(&read(&out.join("model.json"))).unwrap();
    assert_eq!(model["dim"], 2);
    let rot = &model["rotations"][0];
    let c = rot["c"].as_f64().unwrap();
    let s = rot["s"].as_f64().unwrap();
    let theta = s.atan2(c);
    assert!(
        (theta - std::f64::consts::FRAC_PI_4).abs() < 1e-9,
        "theta {theta}"
    );

    // Level-0 basis is the identity, under the input header.
    let basis = read(&out.join("basis_level_0.csv"));
    let mut lines = basis.lines();
    assert_eq!(lines.next().unwrap(), "a,b");
    let row0: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(row0, vec![1.0, 0.0]);
}

#[test]
fn treelet_rejects_missing_header() {
    let dir = tempdir();
    let input = dir.path().join("data.csv");
    write(&input, "1.0,2.0\n2.0,4.0\n");
    let out = dir.path().join("out");
    let result = run(&[
        "treelet",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    assert!(stderr(&result).contains("line 1"), "{}", stderr(&result));
}

#[test]
fn treelet_reports_bad_cell_with_line_number() {
    let dir = tempdir();
    let input = dir.path().join("data.csv");
    write(&input, "a,b\n1.0,2.0\n1.0,oops\n3.0,4.0\n");
    let out = dir.path().join("out");
    let result = run(&[
        "treelet",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    let msg = stderr(&result);
    assert!(msg.contains("line 3"), "{msg}");
    assert!(msg.contains("oops"), "{msg}");
}

#[test]
fn treelet_rejects_out_of_range_levels() {
    let dir = tempdir();
    let input = dir.path().join("data.csv");
    write(&input, "a,b\n1.0,1.0\n2.0,2.5\n3.0,2.9\n");
    let out = dir.path().join("out");
    for extra in [
        ["--max-level", "2"],
        ["--max-level", "0"],
        ["--basis-level", "2"],
    ] {
        let mut argv = vec![
            "treelet",
            "--input",
            input.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        argv.extend(extra);
        let result = run(&argv);
        assert_eq!(result.status.code(), Some(2), "{argv:?}");
    }
}

#[test]
fn treelet_names_degenerate_columns() {
    let dir = tempdir();
    let input = dir.path().join("data.csv");
    write(&input, "height,constant\n1.0,5.0\n2.0,5.0\n3.0,5.0\n");
    let out = dir.path().join("out");
    let result = run(&[
        "treelet",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(1));
    assert!(stderr(&result).contains("constant"), "{}", stderr(&result));
}

#[test]
fn eiv_sweep_rejects_single_replicate() {
    let dir = tempdir();
    let result = run(&[
        "eiv-sweep",
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--reps",
        "1",
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn eiv_sweep_at_c_zero_has_no_learnable_signal() {
    // With c = 0 the predictors are pure noise, so every method's MSE
    // sits at E[Y^2] = 1 + gamma^2 up to Monte Carlo error.
    let dir = tempdir();
    let out = dir.path().join("out");
    let result = run(&[
        "eiv-sweep",
        "--out",
        out.to_str().unwrap(),
        "--p",
        "8",
        "--gamma",
        "1.0",
        "--c-grid",
        "0",
        "--n-train",
        "2000",
        "--n-test",
        "4000",
        "--reps",
        "6",
        "--k-features",
        "5",
        "--seed",
        "11",
    ]);
    assert!(result.status.success(), "{}", stderr(&result));
    let csv = read(&out.join("sweep.csv"));
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "c,method,mode,mse_mean,mse_se,replicates"
    );
    let mut rows = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let mean: f64 = cells[3].parse().unwrap();
        let se: f64 = cells[4].parse().unwrap();
        // 3 MC-sigma band with a floor that guards against an
        // underestimated standard error at 6 replicates.
        let tol = (3.0 * se).max(0.1);
        assert!(
            (mean - 2.0).abs() <= tol,
            "{}: mean {mean} departs from 2.0 (tol {tol})",
            cells[1]
        );
        rows += 1;
    }
    assert_eq!(rows, 4);
}

#[test]
fn ident_demo_passes_by_default_and_fails_when_perturbed() {
    let dir = tempdir();
    let ok = run(&[
        "ident-demo",
        "--out",
        dir.path().join("ok").to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert_eq!(ok.status.code(), Some(0));

    let zero = run(&[
        "ident-demo",
        "--out",
        dir.path().join("zero").to_str().unwrap(),
        "--c1",
        "0",
        "--c2",
        "0",
    ]);
    assert_eq!(zero.status.code(), Some(0));

    let bad = run(&[
        "ident-demo",
        "--out",
        dir.path().join("bad").to_str().unwrap(),
        "--perturb",
    ]);
    assert_eq!(bad.status.code(), Some(1));
    let report: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("bad").join("report.json"))).unwrap();
    assert_eq!(report["pass"], serde_json::Value::Bool(false));
}

/// Writes a CSV whose response is the product of the first two columns.
fn planted_interaction_csv(path: &Path, n: usize, p: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    for j in 0..p {
        text.push_str(&format!("x{},", j + 1));
    }
    text.push_str("y\n");
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let noise: f64 = rng.sample(StandardNormal);
        let y = row[0] * row[1] + 0.1 * noise;
        for v in &row {
            text.push_str(&format!("{v:.17e},"));
        }
        text.push_str(&format!("{y:.17e}\n"));
    }
    write(path, &text);
}

#[test]
fn hier_recovers_planted_interaction_from_csv() {
    let dir = tempdir();
    let input = dir.path().join("data.csv");
    planted_interaction_csv(&input, 400, 6, 2718);
    let out = dir.path().join("out");
    let result = run(&[
        "hier",
        "--input",
        input.to_str().unwrap(),
        "--y-col",
        "y",
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert!(result.status.success(), "{}", stderr(&result));
    let selected = read(&out.join("selected.csv"));
    assert!(
        selected.contains("(x1*x2)"),
        "selection missing the product:\n{selected}"
    );
    let trace: serde_json::Value = serde_json::from_str(&read(&out.join("trace.json"))).unwrap();
    assert!(trace["best_generation"].as_u64().unwrap() >= 1);
}

#[test]
fn hier_with_zero_generations_is_plain_screening() {
    let dir = tempdir();
    let input = dir.path().join("data.csv");
    planted_interaction_csv(&input, 200, 5, 99);
    let out = dir.path().join("out");
    let result = run(&[
        "hier",
        "--input",
        input.to_str().unwrap(),
        "--y-col",
        "y",
        "--out",
        out.to_str().unwrap(),
        "--max-gen",
        "0",
    ]);
    assert!(result.status.success(), "{}", stderr(&result));
    let trace: serde_json::Value = serde_json::from_str(&read(&out.join("trace.json"))).unwrap();
    assert_eq!(trace["generations"].as_array().unwrap().len(), 1);
    let selected = read(&out.join("selected.csv"));
    assert!(!selected.contains('*'), "screening must not build products");
}

#[test]
fn hier_rejects_unknown_response_column() {
    let dir = tempdir();
    let input = dir.path().join("data.csv");
    planted_interaction_csv(&input, 50, 3, 1);
    let result = run(&[
        "hier",
        "--input",
        input.to_str().unwrap(),
        "--y-col",
        "nope",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    assert!(stderr(&result).contains("nope"));
}

/// One correlated block of columns observing a common factor; the
/// response is the factor itself.
fn factor_block_csv(path: &Path, n: usize, p: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    for j in 0..p {
        text.push_str(&format!("x{},", j + 1));
    }
    text.push_str("y\n");
    for _ in 0..n {
        let f: f64 = rng.sample(StandardNormal);
        let row: Vec<f64> = (0..p)
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                f + 0.8 * e
            })
            .collect();
        let noise: f64 = rng.sample(StandardNormal);
        let y = f + 0.1 * noise;
        for v in &row {
            text.push_str(&format!("{v:.17e},"));
        }
        text.push_str(&format!("{y:.17e}\n"));
    }
    write(path, &text);
}

#[test]
fn hier_pair_pca_builds_factor_estimates() {
    // With capacity 2 on a block of noisy factor copies, merging two
    // coordinates into pc1 frees a selection slot for stepwise search,
    // so pc1 features genuinely lower the held-out risk.
    let dir = tempdir();
    let input = dir.path().join("data.csv");
    factor_block_csv(&input, 400, 8, 512);
    let out = dir.path().join("out");
    let result = run(&[
        "hier",
        "--input",
        input.to_str().unwrap(),
        "--y-col",
        "y",
        "--out",
        out.to_str().unwrap(),
        "--op",
        "pair_pca",
        "--k",
        "2",
        "--max-gen",
        "6",
        "--selector",
        "stepwise",
        "--seed",
        "7",
    ]);
    assert!(result.status.success(), "{}", stderr(&result));
    let selected = read(&out.join("selected.csv"));
    assert!(
        selected.contains("pc1("),
        "selection missing a pc1 feature:\n{selected}"
    );
    let trace: serde_json::Value = serde_json::from_str(&read(&out.join("trace.json"))).unwrap();
    assert!(trace["best_generation"].as_u64().unwrap() >= 1);
}

#[test]
fn manifests_rerun_byte_identically_via_config() {
    let dir = tempdir();
    let input = dir.path().join("data.csv");
    planted_interaction_csv(&input, 120, 4, 55);

    let first = dir.path().join("first");
    let result = run(&[
        "hier",
        "--input",
        input.to_str().unwrap(),
        "--y-col",
        "y",
        "--out",
        first.to_str().unwrap(),
        "--seed",
        "9",
        "--max-gen",
        "2",
    ]);
    assert!(result.status.success(), "{}", stderr(&result));

    // Rerun purely from the manifest.
    let second = dir.path().join("second");
    let result = run(&[
        "hier",
        "--config",
        first.join("manifest.json").to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{}", stderr(&result));
    for name in ["manifest.json", "trace.json", "selected.csv"] {
        let a = std::fs::read(first.join(name)).unwrap();
        let b = std::fs::read(second.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
}

#[test]
fn config_subcommand_mismatch_is_a_usage_error() {
    let dir = tempdir();
    let out = dir.path().join("out");
    let ok = run(&["ident-demo", "--out", out.to_str().unwrap()]);
    assert!(ok.status.success());
    let result = run(&[
        "hier",
        "--config",
        out.join("manifest.json").to_str().unwrap(),
        "--out",
        dir.path().join("h").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
}
