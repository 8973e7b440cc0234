//! Seeded Monte-Carlo batches and file output.
//!
//! Game `i` of a batch uses seed `base_seed + i` (wrapping). Its stream
//! first draws the channel, then one initial carrier per user
//! (`floor(u·D)`, users in order), then whatever the update scheme needs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{check_lgdp, classify_2x2, is_nash, EquilibriumStructure};
use crate::channel::{self, ChannelRealization, GENERATOR};
use crate::dynamics::{run_with_rng, Scheme, Trajectory};
use crate::efficiency::EfficiencyFunction;
use crate::error::{Error, Result};
use crate::game::{sinr_raw, utility_raw, GameConfig, PowerProfile};

/// Environment variable capping batch parallelism; `0` runs sequentially.
pub const THREADS_ENV: &str = "CARRIERGAME_THREADS";
/// Tolerance for the per-game Nash audit.
pub const NASH_AUDIT_TOL: f64 = 1e-9;
const MAX_ANOMALY_DUMPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub n_games: u64,
    pub n_users: usize,
    pub n_carriers: usize,
    pub sigma2: f64,
    pub p_max: f64,
    pub initial_power: f64,
    pub scheme: Scheme,
    /// Gauss-Seidel order (0-based); `None` is `0..N`.
    #[serde(default)]
    pub order: Option<Vec<usize>>,
    /// Efficiency shape parameter.
    pub m: u32,
    pub base_seed: u64,
    /// Direction-preserving samples per game; 0 disables the check.
    #[serde(default)]
    pub lgdp_points: usize,
    #[serde(default)]
    pub lgdp_pairs: usize,
    #[serde(default = "default_delta")]
    pub lgdp_delta: f64,
}

fn default_delta() -> f64 {
    1e-3
}

impl Default for BatchSpec {
    /// Two users, two carriers, unit noise, `P_max = 1000`, start at 100,
    /// Gauss-Seidel, `M = 2`, `10⁵` games.
    fn default() -> Self {
        BatchSpec {
            n_games: 100_000,
            n_users: 2,
            n_carriers: 2,
            sigma2: 1.0,
            p_max: 1000.0,
            initial_power: 100.0,
            scheme: Scheme::GaussSeidel,
            order: None,
            m: 2,
            base_seed: 1,
            lgdp_points: 0,
            lgdp_pairs: 0,
            lgdp_delta: default_delta(),
        }
    }
}

impl BatchSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_games == 0 {
            return bad("n_games must be >= 1".into());
        }
        if self.n_users == 0 || self.n_carriers == 0 {
            return Err(Error::InvalidDimension("need users and carriers".into()));
        }
        if !(self.initial_power > 0.0 && self.initial_power <= self.p_max) {
            return bad(format!(
                "initial power {} must lie in (0, P_max = {}]",
                self.initial_power, self.p_max
            ));
        }
        Ok(())
    }

    pub fn game_config(&self) -> Result<GameConfig> {
        let mut cfg = GameConfig::new(EfficiencyFunction::exponential_power(self.m)?, self.p_max)?
            .with_scheme(self.scheme);
        cfg.order = self.order.clone();
        Ok(cfg)
    }

    pub fn game_seed(&self, index: u64) -> u64 {
        self.base_seed.wrapping_add(index)
    }
}

/// One game replayed from its seed: channel, initial carriers and the run.
#[derive(Debug, Clone)]
pub struct Game {
    pub seed: u64,
    pub channel: ChannelRealization,
    pub initial: PowerProfile,
    pub trajectory: Trajectory,
}

pub fn play_game(spec: &BatchSpec, cfg: &GameConfig, seed: u64) -> Result<Game> {
    let mut rng = channel::game_rng(seed);
    let mut ch = ChannelRealization::sample_from(&mut rng, spec.n_users, spec.n_carriers, spec.sigma2)?;
    ch.seed = Some(seed);
    ch.generator = Some(GENERATOR.to_string());
    let carriers: Vec<usize> = (0..spec.n_users)
        .map(|_| channel::uniform_index(&mut rng, spec.n_carriers))
        .collect();
    let initial = PowerProfile::single_carrier(&carriers, spec.n_carriers, spec.initial_power);
    let trajectory = run_with_rng(&ch, cfg, initial.clone(), &mut rng)?;
    Ok(Game {
        seed,
        channel: ch,
        initial,
        trajectory,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnomalyKind {
    NotConverged,
    NashFailure,
    ClassifierMismatch,
    EmptyClassification,
    Tie,
    LgdpViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub game: u64,
    pub seed: u64,
    pub kind: AnomalyKind,
    pub channel: ChannelRealization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub min: usize,
    pub mean: f64,
    pub max: usize,
    pub p50: usize,
    pub p90: usize,
    pub p99: usize,
}

impl IterationStats {
    /// Nearest-rank percentiles; `None` for an empty sample.
    pub fn from_counts(mut counts: Vec<usize>) -> Option<Self> {
        if counts.is_empty() {
            return None;
        }
        counts.sort_unstable();
        let n = counts.len();
        let rank = |q: f64| counts[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
        Some(IterationStats {
            min: counts[0],
            mean: counts.iter().map(|&c| c as f64).sum::<f64>() / n as f64,
            max: counts[n - 1],
            p50: rank(0.5),
            p90: rank(0.9),
            p99: rank(0.99),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub spec: BatchSpec,
    pub generator: String,
    pub gamma_star: f64,
    pub games_run: u64,
    pub games_converged: u64,
    pub games_clamped: u64,
    pub games_tied: u64,
    /// Runs stopped on an exact best-response cycle.
    pub games_cycling: u64,
    /// Converged, unclamped, untied games by final structure.
    pub structure_histogram: BTreeMap<String, u64>,
    /// User updates to convergence over converged games.
    pub iteration_stats: Option<IterationStats>,
    pub lgdp_violations: u64,
    pub nash_failures: u64,
    /// Two-user two-carrier games passed through the classifier.
    pub games_classified: u64,
    /// Converged, unclamped, untied games whose final structure the
    /// classifier did not list.
    pub classifier_mismatches: u64,
    /// Channels with no pure equilibrium structure at all.
    pub empty_classifications: u64,
    /// Non-converged games on channels with no pure equilibrium structure.
    pub nonconverged_without_equilibrium: u64,
    /// Classified channels with more than one equilibrium structure.
    pub multiple_equilibria: u64,
    /// First anomalous games, with channels for replay.
    pub anomalies: Vec<Anomaly>,
}

impl BatchReport {
    pub fn convergence_fraction(&self) -> f64 {
        self.games_converged as f64 / self.games_run as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone)]
struct GameRecord {
    index: u64,
    seed: u64,
    converged: bool,
    clamped: bool,
    tied: bool,
    cycling: bool,
    iterations: usize,
    structure: Option<EquilibriumStructure>,
    nash_ok: bool,
    classified: bool,
    classifier_ok: bool,
    empty_classification: bool,
    multiple: bool,
    lgdp_violations: usize,
    channel: ChannelRealization,
}

impl GameRecord {
    fn clean(&self) -> bool {
        self.converged && !self.clamped && !self.tied
    }

    fn anomalies(&self) -> impl Iterator<Item = AnomalyKind> {
        [
            (!self.converged, AnomalyKind::NotConverged),
            (!self.nash_ok, AnomalyKind::NashFailure),
            (!self.classifier_ok, AnomalyKind::ClassifierMismatch),
            (self.empty_classification, AnomalyKind::EmptyClassification),
            (self.tied, AnomalyKind::Tie),
            (self.lgdp_violations > 0, AnomalyKind::LgdpViolation),
        ]
        .into_iter()
        .filter_map(|(hit, kind)| hit.then_some(kind))
    }
}

fn evaluate(spec: &BatchSpec, cfg: &GameConfig, index: u64) -> Result<GameRecord> {
    let seed = spec.game_seed(index);
    let game = play_game(spec, cfg, seed)?;
    let traj = &game.trajectory;
    let ch = game.channel;
    let final_profile = traj.final_profile();
    let nash_ok = !traj.converged || is_nash(&ch, cfg, final_profile, NASH_AUDIT_TOL)?;
    let structure = traj.structure();
    let mut rec = GameRecord {
        index,
        seed,
        converged: traj.converged,
        clamped: traj.clamped_ever,
        tied: traj.tie_ever,
        cycling: traj.cycle_length.is_some(),
        iterations: traj.iterations,
        structure,
        nash_ok,
        classified: false,
        classifier_ok: true,
        empty_classification: false,
        multiple: false,
        lgdp_violations: 0,
        channel: ch,
    };
    if spec.n_users == 2 && spec.n_carriers == 2 {
        let cl = classify_2x2(&rec.channel, cfg)?;
        rec.classified = true;
        rec.empty_classification = cl.structures.is_empty();
        rec.multiple = cl.structures.len() > 1;
        if rec.clean() {
            rec.classifier_ok = rec.structure.as_ref().is_some_and(|s| cl.contains(s));
        }
    }
    if spec.lgdp_points > 0 {
        let rep = check_lgdp(
            &rec.channel,
            cfg,
            spec.lgdp_points,
            spec.lgdp_pairs,
            spec.lgdp_delta,
            seed,
        )?;
        rec.lgdp_violations = rep.violations;
    }
    Ok(rec)
}

fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok()
}

/// Runs a batch with parallelism taken from `CARRIERGAME_THREADS`
/// (unset: all cores).
pub fn run_batch(spec: &BatchSpec) -> Result<BatchReport> {
    run_batch_with_threads(spec, threads_from_env())
}

/// `threads`: `Some(0)` sequential, `Some(n)` at most `n` workers, `None`
/// the global pool. The report does not depend on the choice.
pub fn run_batch_with_threads(spec: &BatchSpec, threads: Option<usize>) -> Result<BatchReport> {
    spec.validate()?;
    let cfg = spec.game_config()?;
    let records: Vec<GameRecord> = match threads {
        Some(0) => (0..spec.n_games)
            .map(|i| evaluate(spec, &cfg, i))
            .collect::<Result<_>>()?,
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(|| parallel_records(spec, &cfg))?,
        None => parallel_records(spec, &cfg)?,
    };
    Ok(reduce(spec, &cfg, records))
}

fn parallel_records(spec: &BatchSpec, cfg: &GameConfig) -> Result<Vec<GameRecord>> {
    (0..spec.n_games)
        .into_par_iter()
        .map(|i| evaluate(spec, cfg, i))
        .collect()
}

fn reduce(spec: &BatchSpec, cfg: &GameConfig, records: Vec<GameRecord>) -> BatchReport {
    let mut report = BatchReport {
        spec: spec.clone(),
        generator: GENERATOR.to_string(),
        gamma_star: cfg.gamma(),
        games_run: records.len() as u64,
        games_converged: 0,
        games_clamped: 0,
        games_tied: 0,
        games_cycling: 0,
        structure_histogram: BTreeMap::new(),
        iteration_stats: None,
        lgdp_violations: 0,
        nash_failures: 0,
        games_classified: 0,
        classifier_mismatches: 0,
        empty_classifications: 0,
        nonconverged_without_equilibrium: 0,
        multiple_equilibria: 0,
        anomalies: Vec::new(),
    };
    let mut iterations = Vec::new();
    for rec in &records {
        report.games_converged += rec.converged as u64;
        report.games_clamped += rec.clamped as u64;
        report.games_tied += rec.tied as u64;
        report.games_cycling += rec.cycling as u64;
        report.nash_failures += !rec.nash_ok as u64;
        report.lgdp_violations += rec.lgdp_violations as u64;
        report.games_classified += rec.classified as u64;
        report.classifier_mismatches += !rec.classifier_ok as u64;
        report.empty_classifications += rec.empty_classification as u64;
        report.nonconverged_without_equilibrium +=
            (!rec.converged && rec.empty_classification) as u64;
        report.multiple_equilibria += rec.multiple as u64;
        if rec.converged {
            iterations.push(rec.iterations);
        }
        if rec.clean() {
            let label = rec.structure.as_ref().map_or_else(|| "none".into(), |s| s.label());
            *report.structure_histogram.entry(label).or_default() += 1;
        }
        for kind in rec.anomalies() {
            if report.anomalies.len() < MAX_ANOMALY_DUMPS {
                report.anomalies.push(Anomaly {
                    game: rec.index,
                    seed: rec.seed,
                    kind,
                    channel: rec.channel.clone(),
                });
            }
        }
    }
    report.iteration_stats = IterationStats::from_counts(iterations);
    report
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes `iter,user,carrier,power`, one row per (iter, user, carrier).
/// `iter` starts at 1 for the initial profile; users and carriers are
/// 1-based.
pub fn emit_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    write_trajectory(traj, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trajectory(traj: &Trajectory, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "iter,user,carrier,power")?;
    for (n, prof) in traj.profiles.iter().enumerate() {
        for (k, row) in prof.rows().iter().enumerate() {
            for (l, p) in row.iter().enumerate() {
                writeln!(out, "{},{},{},{}", n + 1, k + 1, l + 1, p)?;
            }
        }
    }
    Ok(())
}

/// Writes `game_id,iter,user,carrier,power,sinr,utility` for every
/// recorded profile.
pub fn emit_detailed(
    traj: &Trajectory,
    ch: &ChannelRealization,
    cfg: &GameConfig,
    game_id: u64,
    path: &Path,
) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "game_id,iter,user,carrier,power,sinr,utility").map_err(io)?;
    for (n, prof) in traj.profiles.iter().enumerate() {
        let p = prof.rows();
        for k in 0..ch.n_users {
            let u = utility_raw(ch, p, cfg, k);
            for l in 0..ch.n_carriers {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    game_id,
                    n + 1,
                    k + 1,
                    l + 1,
                    p[k][l],
                    sinr_raw(ch, p, k, l),
                    u
                )
                .map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}
