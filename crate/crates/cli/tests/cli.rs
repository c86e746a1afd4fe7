use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;
use tempfile::TempDir;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy")
}

/// A private copy of the toy fixture so nothing is written into the source tree.
fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    for f in ["schema.json", "population.csv", "repeated.csv", "config.json"] {
        fs::copy(fixture().join(f), dir.path().join(f)).unwrap();
    }
    fs::create_dir(dir.path().join("profiles")).unwrap();
    for e in fs::read_dir(fixture().join("profiles")).unwrap() {
        let e = e.unwrap();
        fs::copy(e.path(), dir.path().join("profiles").join(e.file_name())).unwrap();
    }
    dir
}

fn gaitlr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaitlr")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn write_config(dir: &Path, name: &str, edit: impl FnOnce(&mut Value)) {
    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    edit(&mut cfg);
    fs::write(dir.join(name), serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
}

#[test]
fn smoke_run_on_toy_fixture() {
    let ws = workspace();
    let start = Instant::now();
    let o = gaitlr(ws.path(), &["run", "--config", "config.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(start.elapsed().as_secs_f64() < 10.0);
    let out = ws.path().join("out");
    for f in [
        "model.json", "schema.json", "scree.csv", "scree.svg", "within_variance.csv", "comparisons.csv", "rates.csv",
        "tippett.csv", "tippett.svg", "ece.csv", "ece.svg", "ece_sensitivity.csv", "histogram.csv", "manifest.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "run");
    assert_eq!(manifest["seeds"]["imputation"], 7);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(outputs.iter().any(|o| o["file"] == "comparisons.csv" && o["sha256"].as_str().unwrap().len() == 64));
    assert!(!manifest.to_string().contains("time"));
    assert!(stdout(&o).contains("18 same-source"));

    let rates = fs::read_to_string(out.join("rates.csv")).unwrap();
    assert_eq!(rates.lines().count(), 4);
    let svg = fs::read_to_string(out.join("ece.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("null (LR = 1)"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let ws = workspace();
    write_config(ws.path(), "second.json", |c| c["output_dir"] = "out2".into());
    assert!(gaitlr(ws.path(), &["run", "--config", "config.json"]).status.success());
    assert!(gaitlr(ws.path(), &["run", "--config", "second.json"]).status.success());
    let a = snapshot(&ws.path().join("out"));
    let b = snapshot(&ws.path().join("out2"));
    for (name, bytes) in &a {
        if name.extension().is_some_and(|e| e == "csv" || e == "svg") || name == Path::new("model.json") {
            assert_eq!(Some(bytes), b.get(name), "{} differs", name.display());
        }
    }
}

#[test]
fn writes_nothing_outside_output_dir() {
    let ws = workspace();
    let before = snapshot(ws.path());
    for cmd in ["run", "polychoric", "assoc", "ece", "tippett"] {
        let o = gaitlr(ws.path(), &[cmd, "--config", "config.json"]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let after = snapshot(ws.path());
    for (name, bytes) in &after {
        if !name.starts_with("out") {
            assert_eq!(before.get(name), Some(bytes), "{} was written", name.display());
        }
    }
    assert!(after.keys().all(|n| !n.file_name().unwrap().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn fit_then_validate_matches_run() {
    let ws = workspace();
    assert!(gaitlr(ws.path(), &["run", "--config", "config.json"]).status.success());
    let run = fs::read(ws.path().join("out/comparisons.csv")).unwrap();
    write_config(ws.path(), "split.json", |c| c["output_dir"] = "split".into());
    assert!(gaitlr(ws.path(), &["fit", "--config", "split.json"]).status.success());
    let o = gaitlr(ws.path(), &["validate", "--config", "split.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(ws.path().join("split/comparisons.csv")).unwrap(), run);
    assert!(ws.path().join("split/manifest-validate.json").is_file());
}

#[test]
fn ece_and_tippett_read_comparisons() {
    let ws = workspace();
    assert!(gaitlr(ws.path(), &["run", "--config", "config.json"]).status.success());
    let full = fs::read(ws.path().join("out/ece.csv")).unwrap();
    let o = gaitlr(ws.path(), &["ece", "--config", "config.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(ws.path().join("out/ece.csv")).unwrap(), full);
    let o = gaitlr(ws.path(), &["tippett", "--config", "config.json", "--pcs", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(ws.path().join("out/manifest-tippett.json").is_file());
}

#[test]
fn polychoric_and_assoc_outputs() {
    let ws = workspace();
    assert!(gaitlr(ws.path(), &["polychoric", "--config", "config.json"]).status.success());
    let m = fs::read_to_string(ws.path().join("out/polychoric.csv")).unwrap();
    // ten ordered features plus two composites split in two
    assert_eq!(m.lines().count(), 15);
    let o = gaitlr(ws.path(), &["assoc", "--config", "config.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sel = fs::read_to_string(ws.path().join("out/selection.csv")).unwrap();
    assert_eq!(sel.lines().count(), 15);
    assert!(sel.lines().skip(1).all(|l| l.split(',').nth(1).unwrap().starts_with("biological") || !l.ends_with("fitted")));
    assert!(fs::read_to_string(ws.path().join("out/coefficients.csv")).unwrap().lines().count() > 14);
}

#[test]
fn simulate_is_seeded() {
    let ws = workspace();
    let cfg = |out: &str, seed: u64| {
        format!(r#"{{"schema":"{out}/schema.json","population":"{out}/population.csv","repeated":"{out}/repeated_low.csv","output_dir":"{out}","seed":{seed}}}"#)
    };
    for (name, out, seed) in [("a.json", "sa", 3), ("b.json", "sb", 3), ("c.json", "sc", 4)] {
        fs::write(ws.path().join(name), cfg(out, seed)).unwrap();
        let o = gaitlr(ws.path(), &["simulate", "--config", name]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |d: &str| fs::read(ws.path().join(d).join("population.csv")).unwrap();
    assert_eq!(read("sa"), read("sb"));
    assert_ne!(read("sa"), read("sc"));
    let pop = String::from_utf8(read("sa")).unwrap();
    assert_eq!(pop.lines().count(), 1008);
    // the simulated files feed straight into the pipeline
    let o = gaitlr(ws.path(), &["polychoric", "--config", "a.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn configuration_errors_exit_2() {
    let ws = workspace();
    let o = gaitlr(ws.path(), &["run", "--config", "absent.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("configuration error"));

    fs::write(ws.path().join("bad.json"), r#"{"schema": "schema.json"}"#).unwrap();
    assert_eq!(gaitlr(ws.path(), &["run", "--config", "bad.json"]).status.code(), Some(2));

    write_config(ws.path(), "unknown_field.json", |c| c["pca"]["components"] = 3.into());
    assert_eq!(gaitlr(ws.path(), &["run", "--config", "unknown_field.json"]).status.code(), Some(2));

    write_config(ws.path(), "missing_input.json", |c| c["population"] = "nowhere.csv".into());
    let o = gaitlr(ws.path(), &["run", "--config", "missing_input.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.csv"));

    let o = gaitlr(ws.path(), &["run", "--config", "config.json", "--pcs", "0"]);
    assert_eq!(o.status.code(), Some(2));
    write_config(ws.path(), "preset.json", |c| c["within_variance"] = "dataset-z".into());
    assert_eq!(gaitlr(ws.path(), &["run", "--config", "preset.json"]).status.code(), Some(2));
    assert!(!ws.path().join("out").exists());
}

#[test]
fn stage_failures_exit_1() {
    let ws = workspace();
    let o = gaitlr(ws.path(), &["validate", "--config", "config.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error in stage load"), "{}", stderr(&o));

    let pop = fs::read_to_string(ws.path().join("population.csv")).unwrap();
    fs::write(ws.path().join("population.csv"), pop.replacen(",slow,", ",glacial,", 1)).unwrap();
    let o = gaitlr(ws.path(), &["run", "--config", "config.json"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("error in stage prepare") && err.contains("glacial") && err.contains("cadence"), "{err}");
}

fn fitted_workspace() -> TempDir {
    let ws = workspace();
    let o = gaitlr(ws.path(), &["fit", "--config", "config.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    ws
}

/// Cumulative log10 LR and truncation flag on the final table row.
fn final_row(out: &str) -> (f64, bool) {
    let line = out.lines().filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit())).next_back().unwrap();
    let cols: Vec<&str> = line.split_whitespace().collect();
    (cols[2].parse().unwrap(), cols[3] == "true")
}

#[test]
fn compare_identical_profiles_supports_same_source() {
    let ws = fitted_workspace();
    let o = gaitlr(
        ws.path(),
        &["compare", "--config", "config.json", "--query", "profiles/query.csv", "--reference", "profiles/reference_same.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("WARNING: within-individual variance is estimated from repeated.csv"));
    let (log10, truncated) = final_row(&text);
    assert!(log10 > 0.0 && !truncated, "{text}");
}

#[test]
fn compare_distant_profiles_truncates_under_preset() {
    let ws = fitted_workspace();
    let o = gaitlr(
        ws.path(),
        &[
            "compare", "--config", "config.json", "--query", "profiles/query.csv", "--reference",
            "profiles/reference_different.csv", "--variance-preset", "dataset-b",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("preset dataset-b"));
    assert_eq!(final_row(&text), (-8.0, true));
    assert!(text.contains("LR over 3 components: 1e-8 (truncated)"));

    let o = gaitlr(
        ws.path(),
        &["compare", "--config", "config.json", "--query", "profiles/query.csv", "--reference", "profiles/reference_same.csv", "--pcs", "2"],
    );
    assert!(o.status.success());
    assert!(stdout(&o).contains("LR over 2 components"));
    let o = gaitlr(
        ws.path(),
        &["compare", "--config", "config.json", "--query", "profiles/query.csv", "--reference", "profiles/reference_same.csv", "--pcs", "5"],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_unknown_label_is_a_parse_error() {
    let ws = fitted_workspace();
    let o = gaitlr(
        ws.path(),
        &[
            "compare", "--config", "config.json", "--query", "profiles/query_unknown_level.csv", "--reference",
            "profiles/reference_same.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("parse error") && err.contains("query_unknown_level.csv") && err.contains("'cadence'"), "{err}");
}

#[test]
fn compare_requires_a_fitted_model() {
    let ws = workspace();
    let o = gaitlr(
        ws.path(),
        &["compare", "--config", "config.json", "--query", "profiles/query.csv", "--reference", "profiles/reference_same.csv"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gaitlr fit"));
}
