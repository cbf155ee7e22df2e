//! The `servo` binary end to end: exit codes, JSON output, config layering
//! and the full simulate → scenario → plugin → leaderboard flow.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use clap::CommandFactory;
use serde_json::Value;
use servo_board::{DatasetInfo, Leaderboard};
use servo_cli::{Cli, ExitFamily, REST_PARITY};
use servo_core::csv_io::import_csv;

const T0: i64 = 1_700_000_000;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("{e}: {}", self.stdout))
    }

    fn ok(self) -> Self {
        assert_eq!(self.code, 0, "stdout: {}\nstderr: {}", self.stdout, self.stderr);
        self
    }
}

/// A scratch working directory with its own state; removes deployed
/// plugins when dropped.
struct Workspace {
    dir: tempfile::TempDir,
    port_base: u16,
}

impl Workspace {
    fn new(port_base: u16) -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
            port_base,
        }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn servo(&self, args: &[&str]) -> Run {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_servo"));
        for (k, _) in std::env::vars() {
            if k.starts_with("SERVO_") {
                cmd.env_remove(k);
            }
        }
        let out = cmd
            .args(args)
            .env("SERVO_PORT_BASE", self.port_base.to_string())
            .current_dir(self.path())
            .output()
            .unwrap();
        Run {
            code: out.status.code().unwrap_or(-1),
            stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        }
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path().join(name);
        fs::write(&p, text).unwrap();
        p
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        let list = self.servo(&["--json", "plugin", "list"]);
        if let Ok(Value::Array(plugins)) = serde_json::from_str::<Value>(&list.stdout) {
            for p in plugins {
                if let Some(id) = p["id"].as_str() {
                    if p["state"] != "Deleted" {
                        self.servo(&["plugin", "rm", id]);
                    }
                }
            }
        }
    }
}

fn reference_bundle() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../sdk/reference-plugin")
}

const PLAN: &str = r#"
[[faults]]
type = "CpuStress"
target = "cartservice-0"
start = 1700001200
duration = 300
params = { load_pct = 80.0 }
"#;

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn every_rest_mutation_has_a_subcommand() {
    let cli = Cli::command();
    for (method, path) in servo_board::api::MUTATIONS {
        let (_, _, sub) = REST_PARITY
            .iter()
            .find(|(m, p, _)| m == method && p == path)
            .unwrap_or_else(|| panic!("no CLI command for {method} {path}"));
        let mut cmd = &cli;
        for word in sub.split(' ') {
            cmd = cmd
                .find_subcommand(word)
                .unwrap_or_else(|| panic!("`servo {sub}` does not exist"));
        }
    }
    assert_eq!(REST_PARITY.len(), servo_board::api::MUTATIONS.len());
}

#[test]
fn topology_documents_validate() {
    let ws = Workspace::new(24000);
    let doc = ws.servo(&["topology", "default"]).ok().stdout;
    let file = ws.write("topology.toml", &doc);
    let out = ws.servo(&["--json", "topology", "validate", file.to_str().unwrap()]).ok().json();
    assert_eq!((out["services"].as_u64(), out["pods"].as_u64(), out["nodes"].as_u64()), (Some(11), Some(31), Some(8)));

    let broken = ws.write("broken.toml", &doc.replacen("replicas = 3", "replicas = 0", 1));
    let run = ws.servo(&["--json", "topology", "validate", broken.to_str().unwrap()]);
    assert_eq!(run.code, ExitFamily::Topology.code() as i32, "{}", run.stderr);
    assert_eq!(run.json()["code"], "topology_error");
}

#[test]
fn fault_plans_are_checked_and_scheduled() {
    let ws = Workspace::new(24100);
    let good = ws.write("plan.toml", PLAN);
    let out = ws.servo(&["--json", "faults", "plan", "plan.toml", "--check"]).ok().json();
    assert_eq!(out["faults"].as_array().unwrap().len(), 1);
    // --check leaves the calendar alone.
    assert_eq!(ws.servo(&["--json", "faults", "list"]).ok().json()["faults"], Value::Array(vec![]));

    let bad = ws.write("bad.toml", &PLAN.replace("cartservice-0", "nowhere-0").replace("80.0", "180.0"));
    let run = ws.servo(&["--json", "faults", "plan", bad.to_str().unwrap(), "--check"]);
    assert_eq!(run.code, ExitFamily::FaultPlan.code() as i32);
    let violations = run.json()["detail"]["violations"].as_array().unwrap().len();
    assert_eq!(violations, 2, "{}", run.stdout);

    let scheduled = ws.servo(&["--json", "faults", "plan", good.to_str().unwrap()]).ok().json();
    let id = scheduled["faults"][0]["id"].as_str().unwrap().to_string();
    let listed = ws.servo(&["--json", "faults", "list"]).ok().json();
    assert_eq!(listed["faults"], scheduled["faults"]);
    // The fault lies in the past, so it can no longer be cancelled.
    let run = ws.servo(&["faults", "cancel", &id]);
    assert_eq!(run.code, ExitFamily::FaultPlan.code() as i32, "{}", run.stderr);
}

#[test]
fn simulate_is_deterministic_and_slices() {
    let ws = Workspace::new(24200);
    ws.write("plan.toml", PLAN);
    let clock = format!("{T0}..{}@15", T0 + 1800);
    for out in ["a", "b"] {
        ws.servo(&["simulate", "--plan", "plan.toml", "--clock", &clock, "--seed", "11", "--out", out])
            .ok();
    }
    let (a, b) = (tree(&ws.path().join("a")), tree(&ws.path().join("b")));
    assert!(a.len() >= 8, "{:?}", a.iter().map(|f| &f.0).collect::<Vec<_>>());
    assert!(a == b, "same seed and config must give identical trees");

    let run = ws.servo(&["simulate", "--clock", &clock, "--out", "a"]);
    assert_eq!(run.code, ExitFamily::Dataset.code() as i32, "refuses to overwrite");

    let window = format!("{}..{}@60", T0 + 600, T0 + 1500);
    let info: DatasetInfo = serde_json::from_value(
        ws.servo(&["--json", "dataset", "slice", "--in", "a", "--window", &window, "--modalities", "metrics", "--out", "cut"])
            .ok()
            .json(),
    )
    .unwrap();
    assert_eq!(info.window.step, 60);
    assert_eq!((info.log_rows, info.span_rows), (0, 0));
    assert!(info.metric_rows > 0);
    assert_eq!(info.faults.len(), 1);
    let batch = import_csv(&ws.path().join("cut")).unwrap();
    assert_eq!(batch.content_hash(), info.content_hash);

    let run = ws.servo(&["dataset", "slice", "--in", "a", "--window", &format!("{T0}..{}", T0 + 7200), "--out", "x"]);
    assert_eq!(run.code, ExitFamily::Dataset.code() as i32);
}

#[test]
fn bad_bundles_and_config_map_to_their_exit_codes() {
    let ws = Workspace::new(24300);
    let bundle = ws.path().join("bad-bundle");
    fs::create_dir_all(&bundle).unwrap();
    fs::write(bundle.join("manifest.toml"), "name = \"x\"\ntask_type = \"AD\"\nmetric_kind = \"MAR\"\n").unwrap();
    let run = ws.servo(&["plugin", "deploy", bundle.to_str().unwrap()]);
    assert_eq!(run.code, ExitFamily::Manifest.code() as i32, "{}", run.stderr);
    assert!(run.stderr.contains("error:"), "{}", run.stderr);

    let run = ws.servo(&["plugin", "deploy", "no-such-bundle"]);
    assert_eq!(run.code, ExitFamily::Bundle.code() as i32, "{}", run.stderr);

    let run = ws.servo(&["board", "show", "nothing"]);
    assert_eq!(run.code, ExitFamily::Leaderboard.code() as i32);

    let run = ws.servo(&["board", "create"]);
    assert_eq!(run.code, ExitFamily::Usage.code() as i32);

    // File < environment < flag.
    ws.write("servo.toml", "port_base = 80\n");
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_servo"));
    let run = cmd.args(["plugin", "list"]).env_remove("SERVO_PORT_BASE").current_dir(ws.path()).output().unwrap();
    assert_eq!(run.status.code(), Some(ExitFamily::Io.code() as i32));
    ws.servo(&["plugin", "list"]).ok();
    let run = ws.servo(&["--port-base", "100", "plugin", "list"]);
    assert_eq!(run.code, ExitFamily::Io.code() as i32);
}

#[test]
fn reference_plugin_end_to_end() {
    let ws = Workspace::new(24400);
    ws.write("plan.toml", PLAN);
    ws.servo(&["faults", "plan", "plan.toml"]).ok();
    let clock = format!("{T0}..{}@15", T0 + 1800);
    let info = ws.servo(&["--json", "simulate", "--clock", &clock, "--seed", "3", "--name", "half-hour"]).ok().json();
    assert_eq!(info["faults"].as_array().unwrap().len(), 1);
    let listed = ws.servo(&["--json", "dataset", "list"]).ok().json();
    assert_eq!(listed[0], info);

    let (train, test) = (format!("{T0}..{}", T0 + 900), format!("{}..{}", T0 + 900, T0 + 1800));
    ws.servo(&["--step", "15", "scenario", "create", "--name", "cart", "--dataset", "half-hour", "--window", &test, "--train-window", &train, "--task", "AD"])
        .ok();

    let bundle = reference_bundle();
    let first = ws.servo(&["--json", "plugin", "deploy", bundle.to_str().unwrap()]).ok().json();
    assert_eq!(first["id"], "naive-3sigma-0");
    assert_eq!(first["state"], "Running");

    let board: Leaderboard = serde_json::from_value(
        ws.servo(&["--json", "board", "create", "--id", "cart-ad", "--scenario", "cart", "--algorithm", "naive-3sigma-0", "--metric", "PointPRF1", "--metric", "EventPRF1"])
            .ok()
            .json(),
    )
    .unwrap();
    assert_eq!(board.rows.len(), 1);
    assert_eq!(board.version, 1);

    let shown = ws.servo(&["board", "show", "cart-ad"]).ok().stdout;
    let lines: Vec<&str> = shown.lines().collect();
    assert_eq!(lines.len(), 3, "{shown}");
    assert!(lines[2].contains("naive-3sigma-0"), "{shown}");
    let json_board: Leaderboard = serde_json::from_value(ws.servo(&["--json", "board", "show", "cart-ad"]).ok().json()).unwrap();
    assert_eq!(json_board, board);

    // A second instance joins without touching the first row.
    ws.servo(&["plugin", "deploy", bundle.to_str().unwrap(), "--id", "second"]).ok();
    let updated: Leaderboard =
        serde_json::from_value(ws.servo(&["--json", "board", "add", "cart-ad", "second"]).ok().json()).unwrap();
    assert_eq!(updated.version, 2);
    assert_eq!(updated.row("naive-3sigma-0"), board.row("naive-3sigma-0"));
    assert_eq!(
        updated.row("second").unwrap().metrics,
        board.row("naive-3sigma-0").unwrap().metrics,
        "same deterministic plugin, same scores"
    );

    ws.servo(&["board", "export", "cart-ad", "--out", "export.json"]).ok();
    let export: Value = serde_json::from_slice(&fs::read(ws.path().join("export.json")).unwrap()).unwrap();
    assert_eq!(export["board"]["version"], 2);
    assert_eq!(export["results"].as_array().unwrap().len(), 4);

    // Stopped plugins cannot run experiments.
    ws.servo(&["plugin", "stop", "second"]).ok();
    let run = ws.servo(&["experiment", "run", "--plugin", "second", "--dataset", "half-hour", "--window", &train, "--phase", "train"]);
    assert_eq!(run.code, ExitFamily::Plugin.code() as i32, "{}", run.stderr);
    ws.servo(&["plugin", "restart", "second"]).ok();
    let result = ws
        .servo(&["--json", "--step", "15", "experiment", "run", "--plugin", "second", "--dataset", "half-hour", "--window", &train, "--phase", "train", "--id", "manual-train"])
        .ok()
        .json();
    assert_eq!(result["status"], "ok");
    let shown = ws.servo(&["--json", "experiment", "show", "manual-train"]).ok().json();
    assert_eq!(shown, result);

    let removed = ws.servo(&["--json", "plugin", "rm", "second"]).ok().json();
    assert_eq!(removed["state"], "Deleted");
}
