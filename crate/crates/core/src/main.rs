use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use virtlab::chemistry::{balance_report, parse_equation};
use virtlab::dsl::{parse_script, run_script_observed};
use virtlab::scene::{self, SceneError, SCENES};
use virtlab::session::{self, ServerConfig, SessionConfig, SessionError};
use virtlab::sim::Snapshot;

const PASS: u8 = 0;
const FAIL: u8 = 1;
const PARSE: u8 = 2;
const ENVIRONMENT: u8 = 3;

const DEFAULT_PORT: u16 = 8787;
const PORT_ENV: &str = "VIRTLAB_PORT";

#[derive(Parser)]
#[command(name = "virtlab", version, about = "Headless virtual wet-lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a lab script and print its report.
    Run {
        script: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "brown_ring")]
        scene: String,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print only the final world digest.
        #[arg(long)]
        hash: bool,
        /// Dump snapshots into this directory.
        #[arg(long)]
        snapshots: Option<PathBuf>,
        /// Ticks between dumped snapshots.
        #[arg(long, default_value_t = 60)]
        snapshot_every: u64,
    },
    /// Check that a chemical equation is balanced.
    Balance { equation: String },
    /// Serve a live session over websockets.
    Serve {
        /// Port to listen on; defaults to $VIRTLAB_PORT, then 8787.
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        host: IpAddr,
        #[arg(long, default_value = "brown_ring")]
        scene: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Write the command log here when the session ends.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Replay a command log headlessly instead of serving.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Print the final digest.
        #[arg(long)]
        hash: bool,
        /// Stop after this many ticks.
        #[arg(long)]
        ticks: Option<u64>,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    ExitCode::from(match cli.command {
        Command::Run {
            script,
            seed,
            scene,
            out,
            hash,
            snapshots,
            snapshot_every,
        } => run(&script, seed, &scene, out.as_deref(), hash, snapshots.as_deref(), snapshot_every),
        Command::Balance { equation } => balance(&equation),
        Command::Serve {
            port,
            host,
            scene,
            seed,
            record,
            replay,
            hash,
            ticks,
        } => match replay {
            Some(path) => replay_log(&path, hash),
            None => serve(port, host, scene, seed, record, hash, ticks),
        },
    })
}

fn scene_error(e: &SceneError) -> u8 {
    eprintln!("error: {e}");
    match e {
        SceneError::Unknown(_) => PARSE,
        _ => ENVIRONMENT,
    }
}

fn run(
    path: &Path,
    seed: u64,
    scene_name: &str,
    out: Option<&Path>,
    hash: bool,
    snapshots: Option<&Path>,
    every: u64,
) -> u8 {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return PARSE;
        }
    };
    let script = match parse_script(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}:{e}", path.display());
            if !e.expected.is_empty() {
                eprintln!("  expected one of: {}", e.expected.join(", "));
            }
            return PARSE;
        }
    };
    let mut world = match scene::build(scene_name, seed) {
        Ok(w) => w,
        Err(e) => return scene_error(&e),
    };
    if let Err(e) = script.resolve(|name| world.vessel_by_name(name).is_some()) {
        eprintln!("{}:{e}", path.display());
        return PARSE;
    }
    if let Some(dir) = snapshots {
        if let Err(e) = std::fs::create_dir_all(dir) {
            eprintln!("error: cannot create {}: {e}", dir.display());
            return ENVIRONMENT;
        }
    }
    let every = every.max(1);
    let mut dump_error = None;
    let mut observe = |w: &virtlab::World| {
        let Some(dir) = snapshots else { return };
        if w.tick % every != 0 || dump_error.is_some() {
            return;
        }
        let file = dir.join(format!("snapshot_{:06}.json", w.tick));
        let text = serde_json::to_string(&Snapshot::capture(w)).unwrap_or_default();
        if let Err(e) = std::fs::write(&file, text) {
            dump_error = Some(format!("cannot write {}: {e}", file.display()));
        }
    };
    let report = match run_script_observed(&script, &mut world, scene_name, &mut observe) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return PARSE;
        }
    };
    if let Some(e) = dump_error {
        eprintln!("error: {e}");
        return ENVIRONMENT;
    }
    for a in report.failed_asserts() {
        eprintln!(
            "{}:{}: assert {} failed at tick {} (observed {})",
            path.display(),
            a.line,
            a.predicate,
            a.tick,
            a.observed
        );
    }
    let text = if hash {
        format!("{}\n", report.digest)
    } else {
        match serde_json::to_string_pretty(&report) {
            Ok(t) => t + "\n",
            Err(e) => {
                eprintln!("error: {e}");
                return ENVIRONMENT;
            }
        }
    };
    match out {
        Some(p) => {
            if let Err(e) = std::fs::write(p, text) {
                eprintln!("error: cannot write {}: {e}", p.display());
                return ENVIRONMENT;
            }
        }
        None => print!("{text}"),
    }
    if report.passed {
        PASS
    } else {
        FAIL
    }
}

fn balance(text: &str) -> u8 {
    match parse_equation(text) {
        Ok(eq) => {
            let report = balance_report(&eq);
            println!("{report}");
            if report.balanced {
                PASS
            } else {
                FAIL
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            PARSE
        }
    }
}

fn replay_log(path: &Path, hash: bool) -> u8 {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ENVIRONMENT;
        }
    };
    match session::replay_text(&text) {
        Ok(outcome) => {
            if hash {
                println!("{}", outcome.digest);
            } else {
                println!(
                    "replayed {} ticks, digest {} ({})",
                    outcome.ticks,
                    outcome.digest,
                    if outcome.matches() {
                        "matches the recording"
                    } else {
                        "DIFFERS from the recording"
                    }
                );
            }
            if outcome.matches() {
                PASS
            } else {
                eprintln!("recorded digest was {}", outcome.recorded_digest);
                FAIL
            }
        }
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            PARSE
        }
    }
}

fn port_from_env() -> Result<Option<u16>, String> {
    match std::env::var(PORT_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("{PORT_ENV}='{v}' is not a port number")),
        Err(_) => Ok(None),
    }
}

fn serve(
    port: Option<u16>,
    host: IpAddr,
    scene_name: String,
    seed: u64,
    record: Option<PathBuf>,
    hash: bool,
    ticks: Option<u64>,
) -> u8 {
    if !SCENES.contains(&scene_name.as_str()) {
        return scene_error(&SceneError::Unknown(scene_name));
    }
    let port = match port.map_or_else(port_from_env, |p| Ok(Some(p))) {
        Ok(p) => p.unwrap_or(DEFAULT_PORT),
        Err(e) => {
            eprintln!("error: {e}");
            return ENVIRONMENT;
        }
    };
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: cannot start the runtime: {e}");
            return ENVIRONMENT;
        }
    };
    let config = ServerConfig {
        session: SessionConfig {
            scene: scene_name,
            seed,
            ..SessionConfig::default()
        },
        addr: SocketAddr::new(host, port),
        record,
        max_ticks: ticks,
    };
    runtime.block_on(async move {
        let handle = match session::start(config).await {
            Ok(h) => h,
            Err(e) => {
                eprintln!("error: {e}");
                return match e {
                    SessionError::Scene(SceneError::Unknown(_)) => PARSE,
                    _ => ENVIRONMENT,
                };
            }
        };
        eprintln!("listening on ws://{}", handle.local_addr());
        let stopper = handle.stopper();
        tokio::spawn(async move {
            if tokio::signal::ctrl_c().await.is_ok() {
                stopper.stop();
            }
        });
        match handle.join().await {
            Ok(s) => {
                if hash {
                    println!("{}", s.digest);
                } else {
                    eprintln!("stopped at tick {} with digest {}", s.ticks, s.digest);
                }
                PASS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ENVIRONMENT
            }
        }
    })
}
