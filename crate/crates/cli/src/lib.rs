//! The `servo` command line: simulate datasets under a fault plan, deploy
//! algorithm plugins, run experiments and build leaderboards, or serve the
//! REST API over the same state.
//!
//! Settings resolve as flags, then `SERVO_*` environment variables, then
//! the config file, then defaults ([`config`]). Failures exit with one code
//! per error family ([`error::ExitFamily`]); `--json` prints documents
//! shaped like the REST API's.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

use std::process::ExitCode;

pub use args::{Cli, Command};
pub use commands::Output;
pub use config::CliConfig;
pub use error::{CliError, ExitFamily};

/// The CLI subcommand behind every REST mutation: `(method, path, command)`.
pub const REST_PARITY: &[(&str, &str, &str)] = &[
    ("POST", "/scenarios", "scenario create"),
    ("POST", "/faults", "faults plan"),
    ("DELETE", "/faults/{id}", "faults cancel"),
    ("POST", "/simulate", "simulate"),
    ("POST", "/plugins", "plugin deploy"),
    ("DELETE", "/plugins/{id}", "plugin rm"),
    ("POST", "/plugins/{id}/stop", "plugin stop"),
    ("POST", "/plugins/{id}/restart", "plugin restart"),
    ("POST", "/experiments", "experiment run"),
    ("POST", "/leaderboards", "board create"),
    ("POST", "/leaderboards/{id}/algorithms", "board add"),
];

/// Prints to stdout, ignoring a closed pipe (e.g. `servo ... | head`).
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}").and_then(|_| out.flush());
}

fn init_tracing(verbose: u8) {
    use tracing_subscriber::EnvFilter;
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

async fn serve(bind: Option<std::net::SocketAddr>, cfg: CliConfig) -> Result<(), CliError> {
    let addr = bind.unwrap_or(cfg.bind);
    let service = std::sync::Arc::new(commands::open_service(&cfg, None).await?);
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| {
        CliError::Config(format!("cannot listen on {addr}: {source}"))
    })?;
    let local = listener.local_addr().map_err(|e| CliError::Internal(e.to_string()))?;
    emit(&format!("listening on http://{local}"));
    servo_board::api::serve(listener, service, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
    .map_err(|e| CliError::Internal(e.to_string()))
}

async fn dispatch(cli: Cli) -> Result<Option<Output>, CliError> {
    match cli.command {
        Command::Sdk(args::SdkCmd::ReferencePlugin) => {
            let (addr, state) = servo_plugin::reference::from_env();
            servo_plugin::reference::serve(addr, state)
                .await
                .map_err(|e| CliError::Internal(e.to_string()))?;
            Ok(None)
        }
        Command::Serve(a) => {
            let cfg = CliConfig::resolve(&cli.global, a.bind)?;
            serve(a.bind, cfg).await?;
            Ok(None)
        }
        command => {
            let cfg = CliConfig::resolve(&cli.global, None)?;
            commands::run(command, &cfg).await.map(Some)
        }
    }
}

/// Runs one invocation, printing its output, and returns the exit code.
pub async fn main_with(cli: Cli) -> ExitCode {
    init_tracing(if matches!(cli.command, Command::Sdk(_)) { 1 } else { cli.global.verbose });
    let json = cli.global.json;
    match dispatch(cli).await {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(out)) => {
            if json {
                emit(&serde_json::to_string_pretty(&out.json).expect("output serializes"));
            } else if !out.text.is_empty() {
                emit(&out.text);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if json {
                emit(&serde_json::to_string_pretty(&e.to_json()).expect("error serializes"));
            }
            eprintln!("error: {e}");
            e.family().into()
        }
    }
}
