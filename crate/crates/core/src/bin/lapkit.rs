use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use lapkit::envcore::{ActionMode, EnvConfig, Environment};
use lapkit::envs::{make_env, EnvId};
use lapkit::envserver::{self, ServerOptions, Transport};
use lapkit::planner::{self, PathHeader, PlanRequest, PlanSpace};
use lapkit::trajstore::{self, Source};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "lapkit",
    version,
    about = "Laparoscopic RL environments: rollouts, planning, replay and serving"
)]
struct Cli {
    /// Print machine-readable JSON lines instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run policy rollouts and report per-episode return and success.
    Run {
        #[arg(long)]
        env: EnvId,
        /// JSON config overlay applied to the env defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Policy::Scripted)]
        policy: Policy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        episodes: u64,
        /// Trajectory output; with several episodes an `_epN` suffix is added.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Measure environment steps per second under random actions.
    Benchmark {
        #[arg(long)]
        env: EnvId,
        #[arg(long, default_value_t = 1000)]
        steps: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Plan a collision-free path with RRT.
    Plan {
        #[arg(long, value_enum)]
        space: Space,
        /// JSON planning request.
        #[arg(long)]
        request: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Shortcut smoothing attempts applied after planning.
        #[arg(long, default_value_t = 0)]
        smooth: usize,
    },
    /// Replay a trajectory and write one PPM frame per step.
    Replay {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        frames: PathBuf,
    },
    /// Serve environments to remote agents.
    Serve {
        /// Defaults to 127.0.0.1 and LAPKIT_PORT or 7801.
        #[arg(long)]
        addr: Option<String>,
        #[arg(long, value_enum, default_value_t = TransportArg::Tcp)]
        transport: TransportArg,
        #[arg(long, default_value_t = 16)]
        max_sessions: usize,
        /// Directory for server-side recordings.
        #[arg(long, default_value = ".")]
        record_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Random,
    Scripted,
}

#[derive(Clone, Copy, ValueEnum)]
enum Space {
    Cartesian,
    Tpsd,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Tcp,
    Websocket,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let json = cli.json;
    match cli.command {
        Command::Run {
            env,
            config,
            policy,
            seed,
            episodes,
            record,
        } => run(env, config.as_deref(), policy, seed, episodes, record.as_deref(), json),
        Command::Benchmark {
            env,
            steps,
            config,
            seed,
        } => benchmark(env, config.as_deref(), steps, seed, json),
        Command::Plan {
            space,
            request,
            out,
            smooth,
        } => plan(space, &request, &out, smooth, json),
        Command::Replay { traj, frames } => replay(&traj, &frames, json),
        Command::Serve {
            addr,
            transport,
            max_sessions,
            record_dir,
        } => {
            if max_sessions == 0 {
                return Err(Failure::Usage("--max-sessions must be at least 1".into()));
            }
            let addr = addr.unwrap_or_else(envserver::default_addr);
            let options = ServerOptions {
                transport: match transport {
                    TransportArg::Tcp => Transport::Tcp,
                    TransportArg::Websocket => Transport::WebSocket,
                },
                max_sessions,
                record_dir,
                ..ServerOptions::default()
            };
            eprintln!("lapkit serving on {addr}");
            envserver::serve(&addr, options).map_err(runtime)
        }
    }
}

fn load_env(env: EnvId, config: Option<&Path>) -> Result<Environment, Failure> {
    let config = match config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            EnvConfig::from_json_str(env, &text).map_err(runtime)?
        }
        None => EnvConfig::default_for(env),
    };
    make_env(env, config).map_err(runtime)
}

fn random_action(env: &Environment, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match env.config().action_mode {
        ActionMode::Continuous => (0..env.action_dim()).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        ActionMode::Discrete => vec![rng.gen_range(0..env.discrete_action_count()) as f64],
    }
}

fn episode_path(base: &Path, episode: u64, episodes: u64) -> PathBuf {
    if episodes == 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
    let ext = base
        .extension()
        .and_then(|s| s.to_str())
        .unwrap_or(trajstore::TRAJ_EXTENSION);
    base.with_file_name(format!("{stem}_ep{episode}.{ext}"))
}

fn run(
    id: EnvId,
    config: Option<&Path>,
    policy: Policy,
    seed: u64,
    episodes: u64,
    record: Option<&Path>,
    json: bool,
) -> Result<(), Failure> {
    if episodes == 0 {
        return Err(Failure::Usage("--episodes must be at least 1".into()));
    }
    let mut env = load_env(id, config)?;
    let mut successes = 0u64;
    let mut total_return = 0.0;
    for ep in 0..episodes {
        let episode_seed = seed.wrapping_add(ep);
        env.reset(episode_seed).map_err(runtime)?;
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed ^ 0x5eed);
        let source = match policy {
            Policy::Random => Source::Agent,
            Policy::Scripted => Source::Scripted,
        };
        let rec = trajstore::record(
            &mut env,
            source,
            |e| match policy {
                Policy::Random => Ok(random_action(e, &mut rng)),
                Policy::Scripted => e.scripted_expert().map_err(|err| err.to_string()),
            },
            &mut [],
        )
        .map_err(runtime)?;
        let ret: f64 = rec.steps.iter().map(|s| s.reward).sum();
        let last = rec.steps.last().expect("episodes have at least one step");
        let success = last.info.success;
        successes += u64::from(success);
        total_return += ret;
        if let Some(base) = record {
            trajstore::write(&rec, &episode_path(base, ep, episodes)).map_err(runtime)?;
        }
        if json {
            println!(
                "{}",
                json!({"episode": ep, "seed": episode_seed, "return": ret, "success": success, "steps": rec.steps.len()})
            );
        } else {
            println!(
                "episode {ep} seed {episode_seed}: return {ret:.3} success {success} steps {}",
                rec.steps.len()
            );
        }
    }
    let rate = successes as f64 / episodes as f64;
    let mean = total_return / episodes as f64;
    if json {
        println!(
            "{}",
            json!({"env": id, "episodes": episodes, "success_rate": rate, "mean_return": mean})
        );
    } else {
        println!("summary {id}: {episodes} episodes, success rate {rate:.3}, mean return {mean:.3}");
    }
    Ok(())
}

fn benchmark(id: EnvId, config: Option<&Path>, steps: u64, seed: u64, json: bool) -> Result<(), Failure> {
    if steps == 0 {
        return Err(Failure::Usage("--steps must be at least 1".into()));
    }
    let mut env = load_env(id, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut episode_seed = seed;
    env.reset(episode_seed).map_err(runtime)?;
    let start = Instant::now();
    for _ in 0..steps {
        let action = random_action(&env, &mut rng);
        let r = env.step(&action).map_err(runtime)?;
        if r.terminated || r.truncated {
            episode_seed += 1;
            env.reset(episode_seed).map_err(runtime)?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let rate = steps as f64 / secs;
    if json {
        println!(
            "{}",
            json!({"env": id, "steps": steps, "seconds": secs, "steps_per_second": rate})
        );
    } else {
        println!("{id}: {steps} steps in {secs:.3} s, {rate:.1} steps/s");
    }
    Ok(())
}

fn plan(space: Space, request: &Path, out: &Path, smooth: usize, json: bool) -> Result<(), Failure> {
    let text = fs::read_to_string(request).map_err(|e| runtime(format!("{}: {e}", request.display())))?;
    let req: PlanRequest = serde_json::from_str(&text).map_err(|e| runtime(format!("{}: {e}", request.display())))?;
    let wanted = match space {
        Space::Cartesian => PlanSpace::Cartesian,
        Space::Tpsd => PlanSpace::Tpsd,
    };
    if req.space != wanted {
        return Err(Failure::Usage(format!(
            "--space does not match the request's space ({:?})",
            req.space
        )));
    }
    let start = Instant::now();
    let mut path = planner::rrt_plan(&req).map_err(runtime)?;
    if smooth > 0 {
        path = planner::shortcut_smooth(&path, &req, smooth, req.seed);
    }
    let secs = start.elapsed().as_secs_f64();
    let file = File::create(out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    planner::write_path(BufWriter::new(file), &PathHeader::for_request(&req), &path).map_err(runtime)?;
    let valid = planner::validate_path(&path, &req, req.step_size / 4.0);
    if json {
        println!("{}", json!({"waypoints": path.len(), "seconds": secs, "valid": valid}));
    } else {
        println!("path with {} waypoints in {secs:.3} s, valid {valid}", path.len());
    }
    Ok(())
}

fn replay(traj: &Path, frames: &Path, json: bool) -> Result<(), Failure> {
    let rec = trajstore::read(traj).map_err(|e| runtime(format!("{}: {e}", traj.display())))?;
    let count = trajstore::replay_to_frames(&rec, frames).map_err(runtime)?;
    let matches = trajstore::replay_matches(&rec).map_err(runtime)?;
    if json {
        println!("{}", json!({"frames": count, "dir": frames, "rewards_match": matches}));
    } else {
        println!("wrote {count} frames to {}, rewards match {matches}", frames.display());
    }
    Ok(())
}
