//! Implementations of the subcommands. Every command produces an [`Output`]:
//! a JSON document (the same shape the REST API returns) and a text
//! rendering for people.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use servo_board::dataset::{simulate_into, DATASET_INFO_FILE};
use servo_board::service::{CALENDAR_FILE, DEFAULT_ARRIVAL_RATE};
use servo_board::{
    BoardError, BoardSpec, DatasetInfo, DatasetStore, DeploySpec, ExperimentSpec, Leaderboard, ScenarioSpec, Service,
    ServiceConfig,
};
use servo_core::csv_io::{export_csv, import_csv};
use servo_core::faults::{parse_plan, validate_fault, PlanEntry};
use servo_core::{FaultDefinition, InjectionMode};
use servo_core::workload::SimError;
use servo_core::{
    default_boutique_topology, load_topology, DatasetWindow, FaultCalendar, Modality, ServiceTopology, SimClock,
    WorkloadProfile,
};
use servo_plugin::manifest::is_identifier;
use servo_plugin::{ControllerConfig, PluginController, PluginInstance, ProcessRuntime};

use crate::args::*;
use crate::config::CliConfig;
use crate::error::CliError;

/// Result of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub json: Value,
    pub text: String,
}

impl Output {
    fn new<T: Serialize>(doc: &T, text: impl Into<String>) -> Self {
        Self {
            json: serde_json::to_value(doc).expect("command output serializes"),
            text: text.into(),
        }
    }
}

fn now() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| {
        CliError::Board(BoardError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

/// Parses `START..END[@STEP]`, using `default_step` when no step is given.
pub fn parse_window(s: &str, default_step: u64) -> Result<DatasetWindow, CliError> {
    let parsed = if s.contains('@') {
        s.parse()
    } else {
        format!("{s}@{default_step}").parse()
    };
    parsed.map_err(|e| CliError::Board(BoardError::WindowUnavailable(e)))
}

fn parse_clock(s: &str, default_step: u64) -> Result<SimClock, CliError> {
    let w = parse_window(s, default_step)?;
    SimClock::new(w.start, w.step, (w.end - w.start) as u64).map_err(|e| CliError::Board(e.into()))
}

fn topology_from(path: Option<&Path>) -> Result<ServiceTopology, CliError> {
    match path {
        Some(p) => Ok(load_topology(&read_text(p)?)?),
        None => Ok(default_boutique_topology()),
    }
}

/// Parses a plan file, validating every fault against `topology`.
fn validated_plan(path: &Path, topology: &ServiceTopology) -> Result<Vec<(FaultDefinition, InjectionMode)>, CliError> {
    let defs = parse_plan(&read_text(path)?, now()).map_err(BoardError::from)?;
    let mut violations = Vec::new();
    for (i, (def, _)) in defs.iter().enumerate() {
        for mut v in validate_fault(def, topology) {
            let name = if def.id.is_empty() { format!("faults[{i}]") } else { def.id.clone() };
            v.field = format!("{name}.{}", v.field);
            violations.push(v);
        }
    }
    if !violations.is_empty() {
        return Err(BoardError::FaultRejected(violations).into());
    }
    Ok(defs)
}

fn calendar_from_plan(path: &Path, topology: &ServiceTopology) -> Result<FaultCalendar, CliError> {
    let defs = validated_plan(path, topology)?;
    Ok(FaultCalendar::from_definitions(defs, now()).map_err(BoardError::from)?)
}

fn stored_calendar(cfg: &CliConfig) -> Result<FaultCalendar, CliError> {
    let path = cfg.board_store.join(CALENDAR_FILE);
    if !path.exists() {
        return Ok(FaultCalendar::new());
    }
    let value: Value = serde_json::from_str(&read_text(&path)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(FaultCalendar::from_export_json(&value).map_err(BoardError::from)?)
}

fn runtime() -> ProcessRuntime {
    let runtime = ProcessRuntime::new();
    // Bundles may call programs installed next to this executable (the
    // reference plugin does).
    match std::env::current_exe().ok().and_then(|p| p.parent().map(Path::to_path_buf)) {
        Some(dir) => runtime.with_search_path(dir),
        None => runtime,
    }
}

async fn controller(cfg: &CliConfig) -> Result<Arc<PluginController>, CliError> {
    let mut ccfg = ControllerConfig::new(&cfg.plugin_root);
    ccfg.port_base = cfg.port_base;
    let controller = PluginController::open(ccfg, Arc::new(runtime()))?;
    let report = controller.reconcile().await?;
    if !report.marked_stopped.is_empty() {
        tracing::warn!(plugins = ?report.marked_stopped, "plugin sandboxes exited since last use");
    }
    Ok(Arc::new(controller))
}

/// The leaderboard service over the configured directories.
pub async fn open_service(cfg: &CliConfig, topology: Option<ServiceTopology>) -> Result<Service, CliError> {
    let mut scfg = ServiceConfig::new(&cfg.board_store, &cfg.data_root);
    if let Some(t) = topology {
        scfg.topology = t;
    }
    scfg.score.tolerance = cfg.tolerance;
    scfg.seed = cfg.seed;
    Ok(Service::open(scfg, controller(cfg).await?)?)
}

// ---- rendering -------------------------------------------------------------

/// Left-aligned columns separated by two spaces.
fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = vec![line(header.to_vec())];
    out.extend(rows.iter().map(|r| line(r.iter().map(String::as_str).collect())));
    out.join("\n")
}

fn fault_rows(faults: &[PlanEntry]) -> String {
    let rows: Vec<Vec<String>> = faults
        .iter()
        .map(|f| {
            let kind = match &f.fault_type {
                Some(t) => t.clone(),
                None => f.behaviors.iter().map(|b| b.fault_type.clone()).collect::<Vec<_>>().join("+"),
            };
            vec![
                f.id.clone().unwrap_or_default(),
                kind,
                f.target.clone(),
                f.start.map(|s| s.to_string()).unwrap_or_default(),
                f.duration.to_string(),
                serde_json::to_value(f.mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            ]
        })
        .collect();
    table(&["ID", "TYPE", "TARGET", "START", "DURATION", "MODE"], &rows)
}

fn plugin_rows(plugins: &[PluginInstance]) -> String {
    let rows: Vec<Vec<String>> = plugins
        .iter()
        .map(|p| {
            vec![
                p.id.clone(),
                p.manifest.name.clone(),
                p.state.to_string(),
                format!("{:?}", p.manifest.task_type),
                format!("{:?}", p.manifest.deployment_mode).to_lowercase(),
                p.trained.to_string(),
                p.endpoint.clone(),
            ]
        })
        .collect();
    table(&["ID", "NAME", "STATE", "TASK", "MODE", "TRAINED", "ENDPOINT"], &rows)
}

fn dataset_line(d: &DatasetInfo) -> String {
    format!(
        "{}: window {} seed {} — {} faults, {} cases, {} metric / {} log / {} span rows, hash {}",
        d.name,
        d.window,
        d.seed,
        d.faults.len(),
        d.cases,
        d.metric_rows,
        d.log_rows,
        d.span_rows,
        &d.content_hash[..d.content_hash.len().min(16)]
    )
}

fn board_text(b: &Leaderboard) -> String {
    b.render_table().trim_end().to_string()
}

// ---- commands ----------------------------------------------------------------

pub async fn run(command: Command, cfg: &CliConfig) -> Result<Output, CliError> {
    match command {
        Command::Topology(c) => topology(c),
        Command::Faults(c) => faults(c, cfg).await,
        Command::Simulate(a) => simulate(a, cfg).await,
        Command::Dataset(c) => dataset(c, cfg),
        Command::Scenario(c) => scenario(c, cfg).await,
        Command::Plugin(c) => plugin(c, cfg).await,
        Command::Experiment(c) => experiment(c, cfg).await,
        Command::Board(c) => board(c, cfg).await,
        Command::Serve(_) | Command::Sdk(_) => Err(CliError::Internal("long-running command dispatched as one-shot".into())),
    }
}

fn topology(cmd: TopologyCmd) -> Result<Output, CliError> {
    let (topo, source) = match cmd {
        TopologyCmd::Validate { file } => (topology_from(Some(&file))?, file.display().to_string()),
        TopologyCmd::Default => {
            let t = default_boutique_topology();
            let doc = t.to_document();
            return Ok(Output {
                json: json!({"document": doc}),
                text: doc,
            });
        }
    };
    let summary = json!({
        "services": topo.services().len(),
        "pods": topo.pods().len(),
        "nodes": topo.nodes().len(),
        "edges": topo.edges().len(),
        "entry": topo.entry_service(),
    });
    let text = format!(
        "{source}: valid — {} services, {} pods, {} nodes, {} call edges (entry {})",
        topo.services().len(),
        topo.pods().len(),
        topo.nodes().len(),
        topo.edges().len(),
        topo.entry_service()
    );
    Ok(Output::new(&summary, text))
}

async fn faults(cmd: FaultsCmd, cfg: &CliConfig) -> Result<Output, CliError> {
    match cmd {
        FaultsCmd::Plan { file, check, topology } => {
            let topo = topology_from(topology.as_deref())?;
            let defs = validated_plan(&file, &topo)?;
            if check {
                let entries = FaultCalendar::from_definitions(defs, now())
                    .map_err(BoardError::from)?
                    .to_plan_entries();
                let text = format!("{}: {} faults, all valid\n{}", file.display(), entries.len(), fault_rows(&entries));
                return Ok(Output::new(&json!({"faults": entries}), text));
            }
            let svc = open_service(cfg, Some(topo)).await?;
            let mut scheduled = Vec::new();
            for (def, mode) in &defs {
                let mut entry = PlanEntry::from_definition(def, *mode);
                if def.id.is_empty() {
                    entry.id = None;
                }
                scheduled.push(svc.schedule_fault(&entry)?);
            }
            let text = format!("scheduled {} faults\n{}", scheduled.len(), fault_rows(&scheduled));
            Ok(Output::new(&json!({"faults": scheduled}), text))
        }
        FaultsCmd::List => {
            let faults = stored_calendar(cfg)?.to_plan_entries();
            let text = fault_rows(&faults);
            Ok(Output::new(&json!({"faults": faults}), text))
        }
        FaultsCmd::Cancel { id } => {
            let svc = open_service(cfg, None).await?;
            let removed = svc.cancel_fault(&id)?;
            Ok(Output::new(&removed, format!("cancelled {id}")))
        }
    }
}

async fn simulate(args: SimulateArgs, cfg: &CliConfig) -> Result<Output, CliError> {
    let topo = topology_from(args.topology.as_deref())?;
    let clock = parse_clock(&args.clock, cfg.step)?;
    let mut profile = match &args.profile {
        Some(p) => WorkloadProfile::from_toml(&read_text(p)?).map_err(BoardError::from)?,
        None => WorkloadProfile::uniform(
            &topo,
            args.arrival_rate.unwrap_or(DEFAULT_ARRIVAL_RATE),
            cfg.seed,
        ),
    };
    if let Some(seed) = args.seed {
        profile.seed = seed;
    }
    if args.profile.is_some() && args.arrival_rate.is_some() {
        return Err(CliError::Usage("--arrival-rate applies only without --profile".into()));
    }
    let calendar = match &args.plan {
        Some(p) => calendar_from_plan(p, &topo)?,
        None => stored_calendar(cfg)?,
    };
    if let Some(name) = &args.name {
        if !is_identifier(name) {
            return Err(CliError::Usage(format!(
                "dataset name `{name}` must use letters, digits, `.`, `_` or `-`"
            )));
        }
    }
    let info = match (&args.out, &args.name) {
        (Some(out), _) => {
            if fs::read_dir(out).is_ok_and(|mut d| d.next().is_some()) {
                return Err(BoardError::DuplicateDataset(out.display().to_string()).into());
            }
            // The name is recorded in the export, so it must not depend on
            // the output path for runs to be reproducible byte for byte.
            let name = args.name.clone().unwrap_or_else(|| "dataset".to_string());
            let out = out.clone();
            tokio::task::spawn_blocking(move || simulate_into(&out, &name, &topo, &profile, &calendar, &clock))
                .await
                .map_err(|e| CliError::Internal(e.to_string()))??
        }
        (None, Some(name)) => {
            let store = DatasetStore::new(&cfg.data_root);
            let name = name.clone();
            tokio::task::spawn_blocking(move || store.simulate(&name, &topo, &profile, &calendar, &clock))
                .await
                .map_err(|e| CliError::Internal(e.to_string()))??
        }
        (None, None) => return Err(CliError::Usage("one of --out or --name is required".into())),
    };
    let text = dataset_line(&info);
    Ok(Output::new(&info, text))
}

fn dataset(cmd: DatasetCmd, cfg: &CliConfig) -> Result<Output, CliError> {
    match cmd {
        DatasetCmd::Slice {
            input,
            window,
            modalities,
            out,
        } => {
            let mut window = parse_window(&window, cfg.step)?;
            if !modalities.is_empty() {
                window = window.with_modalities(modalities);
            }
            let batch = import_csv(&input).map_err(BoardError::from)?;
            let sliced = batch.slice(&window).map_err(BoardError::from)?;
            if fs::read_dir(&out).is_ok_and(|mut d| d.next().is_some()) {
                return Err(BoardError::DuplicateDataset(out.display().to_string()).into());
            }
            export_csv(&sliced, &out).map_err(BoardError::from)?;
            let source: Option<DatasetInfo> = fs::read(input.join(DATASET_INFO_FILE))
                .ok()
                .and_then(|t| serde_json::from_slice(&t).ok());
            let info = DatasetInfo {
                name: out.file_name().and_then(|n| n.to_str()).unwrap_or("slice").to_string(),
                window: sliced.window.clone(),
                seed: source.as_ref().map_or(0, |s| s.seed),
                faults: source
                    .map(|s| {
                        s.faults
                            .into_iter()
                            .filter(|f| {
                                let start = f.start.unwrap_or(i64::MIN);
                                start < window.end && start.saturating_add(f.duration as i64) > window.start
                            })
                            .collect()
                    })
                    .unwrap_or_default(),
                cases: sliced.ground_truth.cases.len(),
                metric_rows: sliced.metrics.len(),
                log_rows: sliced.logs.len(),
                span_rows: sliced.spans.len(),
                content_hash: sliced.content_hash(),
            };
            let path = out.join(DATASET_INFO_FILE);
            let bytes = serde_json::to_vec_pretty(&info).expect("dataset info serializes");
            fs::write(&path, bytes).map_err(|source| BoardError::Io { path, source })?;
            let mods: Vec<&str> = Modality::ALL.iter().filter(|m| window.has(**m)).map(|m| m.as_str()).collect();
            let text = format!("{} ({})", dataset_line(&info), mods.join(","));
            Ok(Output::new(&info, text))
        }
        DatasetCmd::List => {
            let list = DatasetStore::new(&cfg.data_root).list()?;
            let text = list.iter().map(dataset_line).collect::<Vec<_>>().join("\n");
            Ok(Output::new(&list, text))
        }
    }
}

async fn scenario(cmd: ScenarioCmd, cfg: &CliConfig) -> Result<Output, CliError> {
    let svc = open_service(cfg, None).await?;
    match cmd {
        ScenarioCmd::Create {
            name,
            dataset,
            window,
            train_window,
            task,
            description,
        } => {
            let spec = ScenarioSpec {
                name,
                description,
                task_type: task,
                dataset,
                window: parse_window(&window, cfg.step)?,
                train_window: train_window.map(|w| parse_window(&w, cfg.step)).transpose()?,
            };
            let sc = svc.create_scenario(&spec)?;
            let text = format!(
                "scenario {} ({:?}) on {} window {} with {} faults",
                sc.name,
                sc.task_type,
                sc.dataset,
                sc.window,
                sc.fault_plan.len()
            );
            Ok(Output::new(&sc, text))
        }
        ScenarioCmd::List => {
            let list = svc.scenarios()?;
            let rows: Vec<Vec<String>> = list
                .iter()
                .map(|s| {
                    vec![
                        s.name.clone(),
                        format!("{:?}", s.task_type),
                        s.dataset.clone(),
                        s.window.to_string(),
                        s.train_window.as_ref().map(ToString::to_string).unwrap_or_default(),
                    ]
                })
                .collect();
            let text = table(&["NAME", "TASK", "DATASET", "WINDOW", "TRAIN WINDOW"], &rows);
            Ok(Output::new(&list, text))
        }
        ScenarioCmd::Show { name } => {
            let sc = svc.scenario(&name)?;
            let text = serde_json::to_string_pretty(&sc).expect("scenario serializes");
            Ok(Output::new(&sc, text))
        }
    }
}

fn absolute(path: PathBuf) -> PathBuf {
    std::path::absolute(&path).unwrap_or(path)
}

async fn plugin(cmd: PluginCmd, cfg: &CliConfig) -> Result<Output, CliError> {
    let svc = open_service(cfg, None).await?;
    let (instance, verb) = match cmd {
        PluginCmd::Deploy { bundle, id } => {
            let spec = DeploySpec {
                bundle: absolute(bundle),
                id,
            };
            (svc.deploy_plugin(&spec).await?, "deployed")
        }
        PluginCmd::List => {
            let list = svc.plugins();
            let text = plugin_rows(&list);
            return Ok(Output::new(&list, text));
        }
        PluginCmd::Stop { id } => (svc.stop_plugin(&id).await?, "stopped"),
        PluginCmd::Restart { id } => (svc.restart_plugin(&id).await?, "restarted"),
        PluginCmd::Rm { id } => (svc.remove_plugin(&id).await?, "removed"),
    };
    let mut text = format!(
        "{verb} {} ({} {:?}/{:?}) — {}",
        instance.id, instance.manifest.name, instance.manifest.task_type, instance.manifest.metric_kind, instance.state,
    );
    if !instance.endpoint.is_empty() {
        text.push_str(&format!(" at {}", instance.endpoint));
    }
    Ok(Output::new(&instance, text))
}

async fn experiment(cmd: ExperimentCmd, cfg: &CliConfig) -> Result<Output, CliError> {
    let svc = open_service(cfg, None).await?;
    let result = match cmd {
        ExperimentCmd::Run {
            plugin,
            dataset,
            window,
            phase,
            id,
        } => {
            let spec = ExperimentSpec {
                experiment_id: id,
                plugin_id: plugin,
                dataset,
                window: parse_window(&window, cfg.step)?,
                phase,
            };
            svc.run_experiment(&spec).await?
        }
        ExperimentCmd::Show { id } => svc.experiment(&id)?,
    };
    let text = format!(
        "experiment {}: {} {:?} on {} — {:?} in {:.2}s{}",
        result.experiment_id,
        result.plugin_id,
        result.phase,
        result.window,
        result.status,
        result.wall_time,
        if result.payload.is_some() { ", payload stored" } else { "" }
    );
    Ok(Output::new(&result, text))
}

async fn board(cmd: BoardCmd, cfg: &CliConfig) -> Result<Output, CliError> {
    let svc = open_service(cfg, None).await?;
    match cmd {
        BoardCmd::Create {
            scenario,
            algorithms,
            metrics,
            primary,
            id,
        } => {
            let spec = BoardSpec {
                id,
                scenario,
                algorithms,
                metrics,
                primary_metric: primary,
                options: None,
            };
            let b = svc.create_board(&spec).await?;
            let text = board_text(&b);
            Ok(Output::new(&b, text))
        }
        BoardCmd::Add { board, plugin } => {
            let b = svc.add_algorithm(&board, &plugin).await?;
            let text = board_text(&b);
            Ok(Output::new(&b, text))
        }
        BoardCmd::Show { board } => {
            let b = svc.board(&board)?;
            let text = board_text(&b);
            Ok(Output::new(&b, text))
        }
        BoardCmd::Export { board, out } => {
            let export = svc.export_board(&board)?;
            let doc = serde_json::to_string_pretty(&export).expect("export serializes");
            match out {
                Some(path) => {
                    fs::write(&path, &doc).map_err(|source| BoardError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    let text = format!("wrote {} ({} results)", path.display(), export.results.len());
                    Ok(Output::new(&export, text))
                }
                None => Ok(Output::new(&export, doc)),
            }
        }
        BoardCmd::List => {
            let list = svc.boards()?;
            let rows: Vec<Vec<String>> = list
                .iter()
                .map(|b| {
                    vec![
                        b.id.clone(),
                        b.scenario.name.clone(),
                        b.version.to_string(),
                        b.rows.len().to_string(),
                        format!("{:?}", b.primary_metric),
                    ]
                })
                .collect();
            let text = table(&["ID", "SCENARIO", "VERSION", "ROWS", "PRIMARY"], &rows);
            Ok(Output::new(&list, text))
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Board(e.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_take_the_default_step() {
        assert_eq!(parse_window("10..70", 15).unwrap(), DatasetWindow::new(10, 70, 15).unwrap());
        assert_eq!(parse_window("10..70@5", 15).unwrap(), DatasetWindow::new(10, 70, 5).unwrap());
        assert!(parse_window("70..10", 15).is_err());
        let c = parse_clock("100..400@30", 1).unwrap();
        assert_eq!((c.start, c.step, c.horizon), (100, 30, 300));
    }

    #[test]
    fn tables_align() {
        let t = table(&["A", "LONGER"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "A    LONGER\nxyz  1");
    }
}
