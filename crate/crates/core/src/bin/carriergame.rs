//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use carriergame::analysis::{check_lgdp, classify_2x2, LgdpReport};
use carriergame::harness::{self, emit_detailed, emit_trajectory, play_game, write_json, BatchSpec};
use carriergame::{ChannelRealization, EfficiencyFunction, Error, GameConfig, Scheme};

#[derive(Parser)]
#[command(name = "carriergame", version, about = "Multicarrier power-control game simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the optimal target SINR for an efficiency shape.
    GammaStar {
        #[arg(long)]
        m: u32,
    },
    /// Play one seeded game and report its trajectory.
    Run {
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        game: GameArgs,
        /// Gauss-Seidel order as 1-based users, e.g. `2,1`.
        #[arg(long, value_delimiter = ',')]
        order: Option<Vec<usize>>,
        /// Trajectory CSV (`iter,user,carrier,power`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV with SINR and utility per row.
        #[arg(long)]
        detail: Option<PathBuf>,
        /// JSON summary file; stdout when absent.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Channel JSON to write for replay.
        #[arg(long)]
        channel_out: Option<PathBuf>,
    },
    /// Run a seeded batch of games.
    Montecarlo {
        #[arg(long, default_value_t = 100_000)]
        games: u64,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        game: GameArgs,
        #[arg(long, value_delimiter = ',')]
        order: Option<Vec<usize>>,
        /// Direction-preserving samples per game (0 disables).
        #[arg(long, default_value_t = 0)]
        lgdp_points: usize,
        #[arg(long, default_value_t = 10)]
        lgdp_pairs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lgdp_delta: f64,
        /// BatchReport JSON; stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// List the equilibrium structures of a two-user two-carrier channel.
    Classify {
        #[arg(long)]
        channel: PathBuf,
        #[arg(long, default_value_t = 2)]
        m: u32,
        #[arg(long, default_value_t = 1000.0)]
        pmax: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the direction-preserving inequality on seeded channels.
    CheckLgdp {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        points: usize,
        #[arg(long)]
        pairs: usize,
        #[arg(long)]
        delta: f64,
        /// Number of channels, seeds `seed, seed+1, ...`.
        #[arg(long, default_value_t = 1)]
        channels: u64,
        #[arg(long, default_value_t = 2)]
        users: usize,
        #[arg(long, default_value_t = 2)]
        carriers: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        #[arg(long, default_value_t = 1000.0)]
        pmax: f64,
        #[arg(long, default_value_t = 2)]
        m: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GameArgs {
    #[arg(long, default_value_t = 2)]
    users: usize,
    #[arg(long, default_value_t = 2)]
    carriers: usize,
    #[arg(long, default_value = "gauss-seidel")]
    scheme: Scheme,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 1000.0)]
    pmax: f64,
    #[arg(long, default_value_t = 100.0)]
    init: f64,
    #[arg(long, default_value_t = 2)]
    m: u32,
}

impl GameArgs {
    fn spec(&self, n_games: u64, seed: u64, order: Option<Vec<usize>>) -> Result<BatchSpec, Error> {
        let order = order
            .map(|o| {
                o.into_iter()
                    .map(|k| k.checked_sub(1).ok_or(Error::InvalidPermutation(vec![0])))
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?;
        Ok(BatchSpec {
            n_games,
            n_users: self.users,
            n_carriers: self.carriers,
            sigma2: self.sigma2,
            p_max: self.pmax,
            initial_power: self.init,
            scheme: self.scheme,
            order,
            m: self.m,
            base_seed: seed,
            ..BatchSpec::default()
        })
    }
}

#[derive(Serialize)]
struct LgdpSummary {
    channels: u64,
    points_tested: usize,
    pairs_tested: usize,
    delta: f64,
    min_dot: f64,
    violations: usize,
    reports: Vec<LgdpReport>,
}

fn emit<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), Error> {
    match path {
        Some(p) => write_json(value, p),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn config(m: u32, pmax: f64) -> Result<GameConfig, Error> {
    GameConfig::new(EfficiencyFunction::exponential_power(m)?, pmax)
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::GammaStar { m } => {
            let gs = EfficiencyFunction::exponential_power(m)?.gamma_star()?;
            println!("{:.15}", gs.value);
        }
        Command::Run {
            seed,
            game,
            order,
            out,
            detail,
            summary,
            channel_out,
        } => {
            let spec = game.spec(1, seed, order)?;
            spec.validate()?;
            let cfg = spec.game_config()?;
            let g = play_game(&spec, &cfg, seed)?;
            if let Some(path) = &out {
                emit_trajectory(&g.trajectory, path)?;
            }
            if let Some(path) = &detail {
                emit_detailed(&g.trajectory, &g.channel, &cfg, 0, path)?;
            }
            if let Some(path) = &channel_out {
                write_json(&g.channel, path)?;
            }
            emit(&g.trajectory.summary(), summary.as_deref())?;
        }
        Command::Montecarlo {
            games,
            seed,
            game,
            order,
            lgdp_points,
            lgdp_pairs,
            lgdp_delta,
            report,
        } => {
            let mut spec = game.spec(games, seed, order)?;
            spec.lgdp_points = lgdp_points;
            spec.lgdp_pairs = lgdp_pairs;
            spec.lgdp_delta = lgdp_delta;
            let rep = harness::run_batch(&spec)?;
            emit(&rep, report.as_deref())?;
        }
        Command::Classify {
            channel,
            m,
            pmax,
            out,
        } => {
            let ch = ChannelRealization::load(&channel)?;
            let cl = classify_2x2(&ch, &config(m, pmax)?)?;
            emit(&cl, out.as_deref())?;
        }
        Command::CheckLgdp {
            seed,
            points,
            pairs,
            delta,
            channels,
            users,
            carriers,
            sigma2,
            pmax,
            m,
            out,
        } => {
            let cfg = config(m, pmax)?;
            let reports = (0..channels)
                .map(|i| {
                    let s = seed.wrapping_add(i);
                    let ch = ChannelRealization::sample(users, carriers, sigma2, s)?;
                    check_lgdp(&ch, &cfg, points, pairs, delta, s)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let summary = LgdpSummary {
                channels,
                points_tested: reports.iter().map(|r| r.points_tested).sum(),
                pairs_tested: reports.iter().map(|r| r.pairs_tested).sum(),
                delta,
                min_dot: reports.iter().map(|r| r.min_dot).fold(f64::INFINITY, f64::min),
                violations: reports.iter().map(|r| r.violations).sum(),
                reports,
            };
            emit(&summary, out.as_deref())?;
        }
    }
    Ok(())
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
    match execute(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io { .. } | Error::Json(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

