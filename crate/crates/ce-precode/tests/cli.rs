use ce_precode::harness::{
    apply_scale_defaults, parse_preset, ExperimentKind, ExperimentSpec,
};
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ce-precode"))
}

fn presets_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets")
}

#[test]
fn all_presets_parse_and_validate() {
    let mut seen = 0;
    for entry in std::fs::read_dir(presets_dir()).expect("presets directory") {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("preset") {
            continue;
        }
        seen += 1;
        let stem = path.file_stem().unwrap().to_str().unwrap().to_string();
        let kind = ExperimentKind::ALL
            .iter()
            .find(|k| stem.starts_with(k.name()))
            .copied()
            .unwrap_or_else(|| panic!("no experiment kind matches preset {stem}"));
        let mut params = parse_preset(&path).unwrap_or_else(|e| panic!("{stem}: {e}"));
        apply_scale_defaults(kind, &mut params, false);
        let spec = ExperimentSpec::new(kind, params, 1, PathBuf::from("out.csv"));
        spec.validate().unwrap_or_else(|e| panic!("{stem}: {e}"));
    }
    assert!(seen >= 7, "expected at least one preset per kind, found {seen}");
}

#[test]
fn cli_writes_csv_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("clt.csv");
    let status = bin()
        .args(["clt-check", "--seed", "3", "--out"])
        .arg(&out)
        .args(["m=2", "n_list=4,16", "samples=500"])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("n,max_ks,"));
    assert!(csv.ends_with('\n'));
    assert_eq!(csv.lines().count(), 3);
    let meta = std::fs::read_to_string(out.with_extension("csv.meta")).unwrap();
    assert!(meta.contains("kind=clt-check"));
    assert!(meta.contains("master_seed=3"));
    assert!(meta.contains("param.n_list=4,16"));
    assert!(meta.contains("spec_hash="));
}

#[test]
fn cli_preset_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("box.csv");
    let status = bin()
        .arg("box-prob")
        .arg("--preset")
        .arg(presets_dir().join("box-prob-m2-n64.preset"))
        .args(["--seed", "9", "--out"])
        .arg(&out)
        .args(["samples=2000", "n=16"])
        .status()
        .unwrap();
    assert!(status.success());
    let meta = std::fs::read_to_string(out.with_extension("csv.meta")).unwrap();
    // Command-line overrides win over preset values.
    assert!(meta.contains("param.n=16"));
    assert!(meta.contains("param.samples=2000"));
}

#[test]
fn missing_parameter_exits_2() {
    let output = bin()
        .args(["mui-vs-n", "m=2"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("n_list"), "{stderr}");
}

#[test]
fn bad_override_exits_2() {
    let output = bin().args(["clt-check", "notakeyvalue"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn bracket_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("estar.csv");
    let output = bin()
        .args(["e-star-vs-n", "--out"])
        .arg(&out)
        .args([
            "m=2",
            "n_list=8",
            "alphabet=gaussian",
            "target_mui=1e-300",
            "num_channels=3",
            "num_symbols=3",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    // The CSV is still written, with the failure recorded per row.
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.contains("bracket"), "{csv}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = bin()
            .args(["mui-vs-n", "--seed", "5", "--out"])
            .arg(&out)
            .args([
                "m=2",
                "n_list=4,8",
                "alphabet=qam16",
                "energy=1",
                "num_channels=5",
                "num_symbols=5",
            ])
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}
