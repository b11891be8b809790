use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cellmcd::simulate::{make_sigma, replication_rng, sample_gaussian, SigmaType};
use cellmcd_cli::input::{load_csv, ReadOptions};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cellmcd"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

/// Writes n clean Gaussian rows with the A09 covariance.
fn clean_csv(dir: &Path, n: usize, d: usize) -> PathBuf {
    let mut rng = replication_rng(99, 0);
    let sigma = make_sigma(SigmaType::A09, d, &mut rng).unwrap();
    let x = sample_gaussian(n, &sigma, &mut rng).unwrap();
    let mut text: String = (1..=d).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",");
    text.push('\n');
    for i in 0..n {
        let row: Vec<String> = (0..d).map(|j| x[(i, j)].to_string()).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let p = dir.join("clean.csv");
    std::fs::write(&p, text).unwrap();
    p
}

const CARS_ARGS: [&str; 4] = ["--row-label-column", "model", "--log-columns", "mass"];

#[test]
fn schema_version_flag() {
    let o = run(&["--schema-version"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), cellmcd::SCHEMA_VERSION);
}

#[test]
fn clean_data_round_trip_flags_few_cells() {
    let tmp = TempDir::new().unwrap();
    let input = clean_csv(tmp.path(), 400, 4);
    let out = tmp.path().join("out");
    let o = run(&["fit", "-i", path_str(&input), "-o", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["fit.json", "weights.csv", "residuals.csv", "flagged_cells.csv", "imputed_cells.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let weights = read_csv(&out.join("weights.csv"));
    assert_eq!(weights.len(), 400);
    let zeros = weights.iter().flat_map(|r| &r[1..]).filter(|v| *v == "0").count();
    let flagged = read_csv(&out.join("flagged_cells.csv"));
    assert_eq!(zeros, flagged.len());
    // clean Gaussian data: only the tails beyond the 0.99 quantile get flagged
    assert!((zeros as f64) / 1600.0 <= 0.03, "{zeros} flagged");

    let doc: Value = serde_json::from_str(&std::fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    assert_eq!(doc["schema_version"], cellmcd::SCHEMA_VERSION);
    assert_eq!(doc["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(doc["sigma"]["columns"].as_array().unwrap().len(), 4);
    assert_eq!(doc["sigma"]["rows"].as_array().unwrap().len(), 4);
    assert_eq!(doc["h"], 300);
}

#[test]
fn missing_cells_are_flagged_and_imputed() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let input = fixture("cars.csv");
    let mut args = vec!["fit", "-i", path_str(&input), "-o", path_str(&out)];
    args.extend(CARS_ARGS);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));

    // car9 has NA length, car26 an empty width
    let weights = read_csv(&out.join("weights.csv"));
    let by_label = |label: &str| weights.iter().find(|r| r[0] == label).unwrap().clone();
    assert_eq!(by_label("car9")[2], "0");
    assert_eq!(by_label("car26")[1], "0");
    let residuals = read_csv(&out.join("residuals.csv"));
    assert_eq!(residuals.iter().find(|r| r[0] == "car9").unwrap()[2], "NA");

    let imputed = read_csv(&out.join("imputed_cells.csv"));
    let cells: Vec<(&str, &str)> = imputed.iter().map(|r| (r[0].as_str(), r[1].as_str())).collect();
    assert_eq!(cells, vec![("car9", "length"), ("car26", "width")]);
    for r in &imputed {
        assert!(r[2].parse::<f64>().unwrap().is_finite());
    }
}

#[test]
fn flagged_cells_sorted_by_absolute_residual() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let input = fixture("cars.csv");
    let mut args = vec!["fit", "-i", path_str(&input), "-o", path_str(&out)];
    args.extend(CARS_ARGS);
    assert!(run(&args).status.success());
    let rows = read_csv(&out.join("flagged_cells.csv"));
    let abs: Vec<f64> = rows.iter().map(|r| r[4].parse::<f64>().unwrap().abs()).collect();
    assert!(abs.windows(2).all(|w| w[0] >= w[1]));
    // the three planted outliers lead the list
    let top: Vec<(&str, &str)> = rows[..3].iter().map(|r| (r[0].as_str(), r[1].as_str())).collect();
    for cell in [("car4", "width"), ("car18", "length"), ("car42", "mass")] {
        assert!(top.contains(&cell), "{cell:?} not in {top:?}");
    }
}

#[test]
fn non_numeric_column_is_named_and_nothing_is_written() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(&["fit", "-i", path_str(&fixture("cars.csv")), "-o", path_str(&out)]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("`model`") && err.contains("line 2"), "{err}");
    assert!(!out.exists());
}

#[test]
fn ragged_row_reports_its_line() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("bad.csv");
    std::fs::write(&p, "a,b\n1,2\n3,4\n5\n").unwrap();
    let o = run(&["fit", "-i", path_str(&p), "-o", path_str(&tmp.path().join("o"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn log_of_nonpositive_value_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("neg.csv");
    std::fs::write(&p, "a,b\n1,2\n-3,4\n").unwrap();
    let err = load_csv(
        &p,
        &ReadOptions {
            log_columns: vec!["a".into()],
            ..ReadOptions::default()
        },
    )
    .unwrap_err();
    assert!(err.to_string().contains("`a`") && err.to_string().contains("line 3"), "{err}");
}

#[test]
fn custom_na_token_and_delimiter() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("semi.csv");
    std::fs::write(&p, "a;b\n1;?\n2.5;4\n").unwrap();
    let ds = load_csv(
        &p,
        &ReadOptions {
            na: "?".into(),
            delimiter: ';',
            ..ReadOptions::default()
        },
    )
    .unwrap();
    assert_eq!(ds.get(0, 1), None);
    assert_eq!(ds.get(1, 0), Some(2.5));
}

fn diagnose(out: &Path, extra: &[&str]) -> Output {
    let input = fixture("cars.csv");
    let mut args = vec!["diagnose", "-i", path_str(&input), "-o", path_str(out)];
    args.extend(CARS_ARGS);
    args.extend(extra);
    run(&args)
}

#[test]
fn bivariate_plot_has_ellipse_and_segments() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("plots");
    let o = diagnose(&out, &["--kind", "bivariate", "--variables", "width,length"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("bivariate_width_length.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(v["kind"], "bivariate");
    assert_eq!(v["ellipse"]["vertices"].as_array().unwrap().len(), 200);
    let ann = v["annotations"].as_array().unwrap();
    assert!(ann.iter().any(|a| a["label"] == "car4" && !a["segment_to"].is_null()));
}

#[test]
fn four_single_variable_plots() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("plots");
    for kind in ["residual_vs_index", "residual_vs_observed", "residual_vs_prediction", "observed_vs_prediction"] {
        let o = diagnose(&out, &["--kind", kind, "--variables", "mass"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 4);
}

#[test]
fn unknown_kind_or_variable_fails() {
    let tmp = TempDir::new().unwrap();
    assert!(!diagnose(&tmp.path().join("a"), &["--kind", "histogram"]).status.success());
    let o = diagnose(&tmp.path().join("b"), &["--variables", "colour"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("colour"));
    assert!(!tmp.path().join("b").exists());
}

#[test]
fn golden_residual_index_plot() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("plots");
    let o = diagnose(&out, &["--kind", "residual_vs_index", "--variables", "width"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let parse = |p: &Path| -> Value {
        let mut v: Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("version");
        v
    };
    assert_eq!(
        parse(&out.join("residual_vs_index_width.json")),
        parse(&fixture("golden_residual_vs_index_width.json"))
    );
}

#[test]
fn diagnose_from_fit_file_matches_fresh_fit() {
    let tmp = TempDir::new().unwrap();
    let fit_dir = tmp.path().join("fit");
    let input = fixture("cars.csv");
    let mut args = vec!["fit", "-i", path_str(&input), "-o", path_str(&fit_dir)];
    args.extend(CARS_ARGS);
    assert!(run(&args).status.success());

    let fresh = tmp.path().join("fresh");
    assert!(diagnose(&fresh, &[]).status.success());
    // read options come from the fit document, so none are passed here
    let from_file = tmp.path().join("from_file");
    let o = run(&[
        "diagnose",
        "-i",
        path_str(&input),
        "--fit",
        path_str(&fit_dir.join("fit.json")),
        "-o",
        path_str(&from_file),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let mut names: Vec<_> = std::fs::read_dir(&fresh)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 15);
    for name in names {
        let a = std::fs::read(fresh.join(&name)).unwrap();
        let b = std::fs::read(from_file.join(&name)).unwrap();
        assert!(a == b, "{name:?} differs");
    }
}

#[test]
fn simulate_is_reproducible_and_reports_efficiency() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("sim.toml");
    std::fs::write(
        &cfg,
        "[[scenario]]\nname = \"tiny\"\nn = 60\nd = 3\neps = [0.0, 0.1]\ngamma = [2.0, 6.0]\nreplications = 4\nseed = 5\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("run{k}"));
        let o = run(&["simulate", "--config", path_str(&cfg), "-o", path_str(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("cellMCD"));
        outputs.push(out);
    }
    for f in ["report.csv", "report.json", "efficiency.csv"] {
        assert_eq!(
            std::fs::read(outputs[0].join(f)).unwrap(),
            std::fs::read(outputs[1].join(f)).unwrap(),
            "{f}"
        );
    }
    // eps = 0 once, then eps = 0.1 for each gamma, four estimators each
    assert_eq!(read_csv(&outputs[0].join("report.csv")).len(), 12);
    assert_eq!(read_csv(&outputs[0].join("efficiency.csv")).len(), 4);
    assert!(outputs[0].join("timings.csv").exists());
}

#[test]
fn invalid_scenario_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("sim.toml");
    std::fs::write(&cfg, "[[scenario]]\nn = 60\nd = 3\neps = [0.5]\n").unwrap();
    let out = tmp.path().join("o");
    let o = run(&["simulate", "--config", path_str(&cfg), "-o", path_str(&out)]);
    assert!(!o.status.success());
    assert!(!out.exists());
}
