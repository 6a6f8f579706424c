use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use clonemator_scenario::{bundled, load_scenario, run_scenario, ScenarioScript};
use clonemator_session::{serve, ServerConfig};

#[derive(Parser)]
#[command(name = "clonemator", version, about = "Clone engine, scenario runner and session server")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the WebSocket session server
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        /// Scenario file (or bundled name) whose setup becomes the scene
        #[arg(long)]
        scene: Option<String>,
        #[arg(long = "tick-rate", value_name = "HZ")]
        tick_rate: Option<f64>,
    },
    /// Run a scenario headless and print its report
    Run {
        /// Path to a scenario file, or the name of a bundled scenario
        scenario: String,
        /// Write the report here instead of stdout
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
        /// Print only the final world hash
        #[arg(long)]
        hash: bool,
    },
    /// List the bundled scenarios
    ListScenarios,
}

fn load(arg: &str) -> Result<ScenarioScript, String> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{arg}: {e}"))?;
        return load_scenario(&text).map_err(|e| format!("{arg}: {e}"));
    }
    bundled::load_bundled(arg).map_err(|e| format!("{arg}: {e}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Cmd::ListScenarios => {
            for name in bundled::names() {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Cmd::Run { scenario, report, hash } => {
            let script = match load(&scenario) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let result = run_scenario(&script);
            if hash {
                println!("{}", result.final_hash);
            }
            match report {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, result.to_json()) {
                        eprintln!("error: {}: {e}", path.display());
                        return ExitCode::from(2);
                    }
                }
                None if !hash => println!("{}", result.to_json()),
                None => {}
            }
            for a in result.failed_assertions() {
                let name = a.label.as_deref().unwrap_or(&a.kind);
                eprintln!("FAIL #{} {name} at tick {}: {}", a.index, a.tick, a.detail.as_deref().unwrap_or(""));
            }
            if let Some(f) = &result.failure {
                eprintln!("aborted at tick {} in {}: {} {}", f.tick, f.op, f.code, f.detail);
            }
            log::info!("{} in {:?}", result.scenario, result.wall_clock);
            if result.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Cmd::Serve { host, port, scene, tick_rate } => {
            let scene = match scene.as_deref().map(load).transpose() {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: scene: {e}");
                    return ExitCode::from(2);
                }
            };
            let config = ServerConfig { host, port, tick_rate, scene, ..ServerConfig::default() };
            match serve(config) {
                Ok(handle) => {
                    println!("{}", handle.url());
                    handle.wait();
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
