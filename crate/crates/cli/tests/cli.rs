use std::path::PathBuf;
use std::process::{Command, Output};

fn pixvlc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pixvlc")).args(args).output().expect("binary runs")
}

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join(format!("../../scenarios/{name}.json"))
        .to_string_lossy()
        .into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pixvlc-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn geometry_prints_separation_and_pixels() {
    let out = pixvlc(&["geometry", "--positions", "-0.1,0;0.1,0"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("14.88 cm"), "{text}");
    assert!(text.contains("[0, 1]"), "{text}");

    let out = pixvlc(&["--json", "geometry", "--positions", "-0.01,0;0.01,0"]);
    assert_eq!(out.status.code(), Some(1));
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(value.get("infeasible").is_some());
}

#[test]
fn tables_and_closed_forms() {
    let out = pixvlc(&["tables", "t5_latency"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("1209.6"));
    assert!(pixvlc(&["tables", "all"]).status.success());
    assert_eq!(pixvlc(&["tables", "nonsense"]).status.code(), Some(2));

    let out = pixvlc(&["--json", "latency", "--rows", "1000", "--cols", "1000"]);
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(value["total_ms"], 1209.6);

    let out = pixvlc(&["packets-per-slot", "--rate", "2e6"]);
    assert!(stdout(&out).starts_with("1908 packets"));
    assert_eq!(pixvlc(&["packets-per-slot", "--rate", "0"]).status.code(), Some(2));
}

#[test]
fn run_writes_artifacts_and_replays() {
    let dir = scratch("run");
    let out_dir = dir.to_string_lossy().into_owned();
    let out = pixvlc(&["run", &scenario("protocol_clean"), "--out", &out_dir, "--dump-samples"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("locked pixels [0]"));
    for file in ["trace.json", "events.jsonl", "reports.json", "samples.csv"] {
        assert!(dir.join(format!("protocol_clean.{file}")).exists(), "{file}");
    }
    let samples = std::fs::read_to_string(dir.join("protocol_clean.samples.csv")).unwrap();
    assert!(samples.starts_with("sim_time_s,intensity"));

    let trace = dir.join("protocol_clean.trace.json").to_string_lossy().into_owned();
    let replay = pixvlc(&["--json", "replay", &trace]);
    assert!(replay.status.success());
    let stored: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("protocol_clean.reports.json")).unwrap()).unwrap();
    let replayed: serde_json::Value = serde_json::from_slice(&replay.stdout).unwrap();
    assert_eq!(stored, replayed);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn failed_expectations_and_errors_set_the_exit_code() {
    let dir = scratch("expect");
    std::fs::create_dir_all(&dir).unwrap();
    let mut value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scenario("table1_type4_case2")).unwrap()).unwrap();
    value["expect"] = serde_json::json!([{ "label": 0, "metric": "ber", "min": 0.4 }]);
    let path = dir.join("strict.json");
    std::fs::write(&path, value.to_string()).unwrap();
    let out = pixvlc(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL emitter 0"));

    value["schema_version"] = 2.into();
    std::fs::write(&path, value.to_string()).unwrap();
    assert_eq!(pixvlc(&["run", path.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(pixvlc(&["run", &scenario("protocol_clean"), "--dump-samples"]).status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}
