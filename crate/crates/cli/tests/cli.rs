use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use onion_trace::analysis::{analyze, write_run_report};
use onion_trace::scenario::{run, ScenarioConfig};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/codecs");

const SMALL: [&str; 4] = [
    "bittorrent.n_peers=300",
    "bittorrent.catalog.n_items=2000",
    "web.n_web_only_users=40",
    "virtual_duration_s=1800",
];

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onion-trace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn with_small(mut args: Vec<&str>) -> Vec<&str> {
    for o in SMALL {
        args.extend(["--override", o]);
    }
    args
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn validate_codecs_pristine() {
    let o = cli(&["validate-codecs", FIXTURES]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().filter(|l| l.starts_with("PASS")).count() >= 6);
    assert!(out.contains(" 0 failed"));
}

#[test]
fn validate_codecs_names_corrupted_fixture() {
    let dir = tempfile::tempdir().unwrap();
    for e in fs::read_dir(FIXTURES).unwrap() {
        let p = e.unwrap().path();
        fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
    }
    let victim = dir.path().join("handshake_plain.bin");
    let mut bytes = fs::read(&victim).unwrap();
    bytes[0] ^= 0x01;
    fs::write(&victim, bytes).unwrap();

    let o = cli(&["validate-codecs", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let out = stdout(&o);
    let failed: Vec<&str> = out.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert_eq!(failed.len(), 1, "{out}");
    assert!(failed[0].contains("handshake_plain.bin"));
    assert!(out.contains(" 1 failed"));
}

#[test]
fn validate_codecs_empty_dir_warns() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["validate-codecs", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("0 fixtures, 0 failed"));
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn run_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&with_small(vec![
        "run",
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("default-seed1-metrics.csv").is_file());
    assert!(dir.path().join("default-seed1-metrics.jsonl").is_file());
}

#[test]
fn invalid_fraction_names_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[bittorrent]\ntor_user_fraction = 1.5\n").unwrap();
    let o = cli(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(
        stderr(&o).contains("bittorrent.tor_user_fraction"),
        "{}",
        stderr(&o)
    );

    fs::write(&cfg, "[bittorrent]\nno_such_knob = 3\n").unwrap();
    let o = cli(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no_such_knob"), "{}", stderr(&o));
}

#[test]
fn same_seed_same_report_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = cli(&with_small(vec![
            "run",
            "--seed",
            "5",
            "--out",
            d.path().to_str().unwrap(),
        ]));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (x, y) = (dir_bytes(a.path()), dir_bytes(b.path()));
    assert!(!x.is_empty());
    assert_eq!(x, y);
}

#[test]
fn cli_run_equals_library_run() {
    let cli_dir = tempfile::tempdir().unwrap();
    let lib_dir = tempfile::tempdir().unwrap();
    let o = cli(&with_small(vec![
        "run",
        "--seed",
        "3",
        "--policy",
        "port_group_isolation",
        "--override",
        "sim.event_log=true",
        "--out",
        cli_dir.path().to_str().unwrap(),
    ]));
    assert!(o.status.success(), "{}", stderr(&o));

    let mut overrides: Vec<String> = SMALL.iter().map(|s| s.to_string()).collect();
    overrides.push("sim.event_log=true".into());
    overrides.push("seed=3".into());
    overrides.push("tor.policy=port_group_isolation".into());
    let cfg = ScenarioConfig::from_toml_str("", &overrides).unwrap();
    let out = run(&cfg).unwrap();
    write_run_report(lib_dir.path(), &analyze(&out).unwrap(), &out).unwrap();

    let (x, y) = (dir_bytes(cli_dir.path()), dir_bytes(lib_dir.path()));
    assert!(x.keys().any(|k| k.ends_with("-events.ndjson")));
    assert_eq!(x, y);
}

fn csv_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            headers
                .iter()
                .zip(rec.unwrap().iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()
        })
        .collect()
}

#[test]
fn sweep_rows_match_individual_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&with_small(vec![
        "sweep",
        "--seed",
        "1",
        "--seed",
        "2",
        "--policy",
        "multiplex_all",
        "--policy",
        "one_stream_per_circuit",
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("default-defense_runs.csv"));
    assert_eq!(rows.len(), 4);
    let summary = csv_rows(&dir.path().join("default-defense_summary.csv"));
    assert_eq!(summary.len(), 2);

    for row in &rows {
        let single = tempfile::tempdir().unwrap();
        let o = cli(&with_small(vec![
            "run",
            "--seed",
            &row["seed"],
            "--policy",
            &row["policy"],
            "--out",
            single.path().to_str().unwrap(),
        ]));
        assert!(o.status.success());
        let metrics = &csv_rows(
            &single
                .path()
                .join(format!("default-seed{}-metrics.csv", row["seed"])),
        )[0];
        for key in [
            "total_streams",
            "traced_streams",
            "traced_fraction_all",
            "same_circuit_streams",
        ] {
            assert_eq!(
                row[key], metrics[key],
                "{key} for {} seed {}",
                row["policy"], row["seed"]
            );
        }
        // The per-cell reports of the sweep are the same files.
        let prefix = format!("default-seed{}-", row["seed"]);
        let swept: BTreeMap<_, _> = dir_bytes(&dir.path().join(&row["policy"]))
            .into_iter()
            .filter(|(k, _)| k.starts_with(&prefix))
            .collect();
        assert_eq!(dir_bytes(single.path()), swept);
    }
}

#[test]
fn one_seed_one_policy_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&with_small(vec![
        "sweep",
        "--seed",
        "4",
        "--policy",
        "per_application_isolation",
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = csv_rows(&dir.path().join("default-defense_summary.csv"));
    assert_eq!(summary.len(), 1);
    assert_eq!(summary[0]["policy"], "per_application_isolation");
    assert_eq!(summary[0]["runs"], "1");
    assert_eq!(stdout(&o).lines().count(), 2);
}
