//! Acceptance suite. Each test prints one `[PASS]`/`[FAIL]` line; run with
//! `cargo test -p carriergame --test acceptance -- --nocapture`.

mod common;

use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use carriergame::analysis::{check_lgdp, check_lgdp_with, classify_2x2, is_nash, LgdpParams};
use carriergame::channel::{game_rng, uniform_index};
use carriergame::dynamics::run;
use carriergame::game::{best_carrier_condition, best_response};
use carriergame::harness::{play_game, run_batch_with_threads, BatchReport, BatchSpec, Game};
use carriergame::{
    ChannelRealization, EfficiencyFunction, EquilibriumStructure, GameConfig, PowerProfile,
};
use common::verdict;
use rand::Rng;

const DESK_GAMES: u64 = 100_000;
const DESK_SEED: u64 = 1;

fn cfg() -> GameConfig {
    GameConfig::new(EfficiencyFunction::exponential_power(2).unwrap(), 1000.0).unwrap()
}

fn desk_spec() -> BatchSpec {
    BatchSpec {
        n_games: DESK_GAMES,
        base_seed: DESK_SEED,
        ..BatchSpec::default()
    }
}

/// The desk-scale batch, replayed game by game.
fn desk_games() -> &'static Vec<Game> {
    static GAMES: OnceLock<Vec<Game>> = OnceLock::new();
    GAMES.get_or_init(|| {
        let spec = desk_spec();
        let cfg = spec.game_config().unwrap();
        (0..spec.n_games)
            .map(|i| play_game(&spec, &cfg, spec.game_seed(i)).unwrap())
            .collect()
    })
}

fn clean(g: &Game) -> bool {
    g.trajectory.converged && !g.trajectory.clamped_ever && !g.trajectory.tie_ever
}

#[test]
fn c01_gamma_star_solver() {
    let mut pass = true;
    let mut notes = Vec::new();
    let want = common::gamma_star(2);
    for m in [2u32, 5, 10, 80] {
        let ef = EfficiencyFunction::exponential_power(m).unwrap();
        let t = Instant::now();
        let gs = ef.gamma_star().unwrap();
        let elapsed = t.elapsed();
        let residual = (ef.eval(gs.value).unwrap() - gs.value * ef.deriv(gs.value).unwrap()).abs();
        let ok = residual <= 1e-12 && elapsed < Duration::from_millis(1);
        pass &= ok;
        notes.push(format!("M={m}: γ*={:.10} |res|={residual:.1e} t={elapsed:?}", gs.value));
        if m == 2 {
            pass &= (gs.value - want).abs() <= 1e-6;
            // e^γ = 1 + 2γ
            pass &= (gs.value.exp() - 1.0 - 2.0 * gs.value).abs() <= 1e-9;
        }
    }
    assert!(verdict(1, "gamma-star solver", pass, notes.join("; ")));
}

#[test]
fn c02_best_response_matches_grid() {
    let cfg = cfg();
    let grid = common::log_grid(1e-4, cfg.p_max, 10_000);
    let step = (cfg.p_max / 1e-4f64).ln() / 9999.0;
    let mut rng = game_rng(0xC02);
    let t = Instant::now();
    let (mut carrier_hits, mut power_hits, mut trials) = (0, 0, 0);
    for c in 0..200u64 {
        let n = 1 + uniform_index(&mut rng, 3);
        let d = 1 + uniform_index(&mut rng, 3);
        let ch = ChannelRealization::sample(n, d, 1.0, 5000 + c).unwrap();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| if rng.random::<bool>() { rng.random::<f64>() * 10.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let prof = PowerProfile::new(rows).unwrap();
        for k in 0..n {
            trials += 1;
            let br = best_response(&ch, &prof, &cfg, k).unwrap();
            let g = common::grid_best(&ch, prof.rows(), 2, k, &grid);
            if g.carrier == br.carrier {
                carrier_hits += 1;
            }
            let p = br.row[br.carrier];
            if (g.power.ln() - p.ln()).abs() <= step * (1.0 + 1e-9) {
                power_hits += 1;
            }
        }
    }
    let elapsed = t.elapsed();
    let pass = carrier_hits == trials && power_hits == trials && elapsed < Duration::from_secs(30);
    assert!(verdict(
        2,
        "best response vs grid",
        pass,
        format!("carrier {carrier_hits}/{trials}, power {power_hits}/{trials}, {elapsed:?}")
    ));
}

#[test]
fn c03_single_carrier_structure() {
    let gamma = common::gamma_star(2);
    let (mut checked, mut bad) = (0, 0);
    for g in desk_games().iter().filter(|g| clean(g)) {
        checked += 1;
        let p = g.trajectory.final_profile().rows();
        let ok = (0..2).all(|k| {
            let active: Vec<usize> = (0..2).filter(|&l| p[k][l] > 1e-9).collect();
            active.len() == 1
                && (common::sinr(&g.channel, p, k, active[0]) / gamma - 1.0).abs() <= 1e-6
        });
        bad += !ok as usize;
    }
    assert!(verdict(
        3,
        "single-carrier structure",
        bad == 0 && checked > 0,
        format!("{checked} clean converged games, {bad} violations")
    ));
}

fn desk_report() -> &'static BatchReport {
    static REPORT: OnceLock<BatchReport> = OnceLock::new();
    REPORT.get_or_init(|| run_batch_with_threads(&desk_spec(), None).unwrap())
}

#[test]
fn c04_convergence_replication() {
    let t = Instant::now();
    let rep = desk_report();
    let elapsed = t.elapsed();
    let cfg = cfg();
    // every converged profile re-verified here, independently of the report
    let nash_failures = desk_games()
        .iter()
        .filter(|g| g.trajectory.converged)
        .filter(|g| !is_nash(&g.channel, &cfg, g.trajectory.final_profile(), 1e-9).unwrap())
        .count();
    let frac = rep.convergence_fraction();
    let pass = frac >= 0.999
        && rep.games_tied == 0
        && rep.nash_failures == 0
        && nash_failures == 0
        && elapsed < Duration::from_secs(300);
    assert!(verdict(
        4,
        "convergence replication",
        pass,
        format!(
            "converged {}/{} = {frac:.5} (need >= 0.999), ties {}, nash failures {}/{}, \
             cycling {}, no pure equilibrium {}, {elapsed:?}",
            rep.games_converged,
            rep.games_run,
            rep.games_tied,
            rep.nash_failures,
            nash_failures,
            rep.games_cycling,
            rep.empty_classifications
        )
    ));
}

#[test]
fn c05_best_carrier_condition_at_equilibrium() {
    let (mut checked, mut bad) = (0, 0);
    for g in desk_games().iter().filter(|g| clean(g)) {
        let prof = g.trajectory.final_profile();
        let p = prof.rows();
        let ch = &g.channel;
        for k in 0..2 {
            let l = if p[k][0] > 0.0 { 0 } else { 1 };
            let i = 1 - l;
            let o = 1 - k;
            // h_kl / h_ki > (σ² + g p_ol) / (σ² + g p_oi)
            let by_hand = ch.h[k][l] / ch.h[k][i]
                > (ch.sigma2 + ch.g[o][k][l] * p[o][l]) / (ch.sigma2 + ch.g[o][k][i] * p[o][i]);
            let by_lib = best_carrier_condition(ch, prof, k, l).unwrap();
            checked += 1;
            bad += !(by_hand && by_lib) as usize;
        }
    }
    assert!(verdict(
        5,
        "best-carrier condition at equilibrium",
        bad == 0 && checked > 0,
        format!("{checked} user checks, {bad} failures")
    ));
}

#[test]
fn c06_classifier_contains_dynamics_outcome() {
    let cfg = cfg();
    let mut rng = game_rng(0xC06);
    let (mut checked, mut missing) = (0, 0);
    for seed in 0..10_000u64 {
        let ch = ChannelRealization::sample(2, 2, 1.0, 60_000 + seed).unwrap();
        let cl = classify_2x2(&ch, &cfg).unwrap();
        for order in [vec![0, 1], vec![1, 0]] {
            let c = cfg.clone().with_order(order);
            let start = [uniform_index(&mut rng, 2), uniform_index(&mut rng, 2)];
            let traj = run(&ch, &c, PowerProfile::single_carrier(&start, 2, 100.0)).unwrap();
            if !(traj.converged && !traj.clamped_ever && !traj.tie_ever) {
                continue;
            }
            checked += 1;
            if !traj.structure().is_some_and(|s| cl.contains(&s)) {
                missing += 1;
            }
        }
    }
    assert!(verdict(
        6,
        "classifier vs dynamics",
        missing == 0 && checked > 0,
        format!("{checked} clean converged runs, {missing} outside the classifier set")
    ));
}

/// First recorded index after which the carrier assignment never changes.
fn settle_index(traj: &carriergame::Trajectory) -> usize {
    let last = traj.carrier_assignments.last().unwrap();
    traj.carrier_assignments
        .iter()
        .rposition(|a| a != last)
        .map_or(0, |i| i + 1)
}

#[test]
fn c07_case_replays() {
    let cfg = cfg();
    // (12,) is the only equilibrium: both users prefer carrier 1 and the
    // shared powers stay below η₁, η₂
    let shared = ChannelRealization::two_user([[2.0, 0.5], [2.0, 0.5]], [[0.2; 2]; 2], 1.0).unwrap();
    // (1,2) is the only equilibrium: weak coupling, opposite preferences
    let split = ChannelRealization::two_user([[2.0, 0.5], [0.5, 2.0]], [[0.01; 2]; 2], 1.0).unwrap();
    // carrier-swapped mirrors: (,12) and (2,1)
    let shared_m = ChannelRealization::two_user([[0.5, 2.0], [0.5, 2.0]], [[0.2; 2]; 2], 1.0).unwrap();
    let split_m = ChannelRealization::two_user([[0.5, 2.0], [2.0, 0.5]], [[0.01; 2]; 2], 1.0).unwrap();
    let cases = [
        (&shared, vec![0, 0]),
        (&split, vec![0, 1]),
        (&shared_m, vec![1, 1]),
        (&split_m, vec![1, 0]),
    ];
    let mut pass = true;
    let mut runs = 0;
    let mut worst_settle = 0;
    for (ch, want) in &cases {
        let want = EquilibriumStructure::new(want.clone());
        let cl = classify_2x2(ch, &cfg).unwrap();
        pass &= cl.structures == vec![want.clone()];
        // η inequalities in the printed form for the shared case
        if want.is_shared() {
            let s = want.assignment[0];
            let p = cl.candidates.iter().find(|c| c.structure == want).unwrap();
            let p = p.powers.as_ref().unwrap();
            let eta1 = ch.sigma2 / ch.g[0][1][s] * (ch.h[1][s] / ch.h[1][1 - s] - 1.0);
            let eta2 = ch.sigma2 / ch.g[1][0][s] * (ch.h[0][s] / ch.h[0][1 - s] - 1.0);
            pass &= p.get(0, s) < eta1 && p.get(1, s) < eta2;
        }
        for start in EquilibriumStructure::all_2x2() {
            for power in [0.05, 1.0, 100.0] {
                for order in [vec![0, 1], vec![1, 0]] {
                    let c = cfg.clone().with_order(order);
                    let init = PowerProfile::single_carrier(&start.assignment, 2, power);
                    let traj = run(ch, &c, init).unwrap();
                    runs += 1;
                    let settle = settle_index(&traj);
                    worst_settle = worst_settle.max(settle);
                    pass &= traj.converged && traj.structure() == Some(want.clone()) && settle <= 6;
                }
            }
        }
    }
    assert!(verdict(
        7,
        "2x2 case replays",
        pass,
        format!("{runs} runs, structure settled within {worst_settle} user updates (limit 6)")
    ));
}

#[test]
fn c08_lgdp_sampling() {
    let cfg = cfg();
    let (mut violations, mut pairs) = (0, 0);
    let mut min_dot = f64::INFINITY;
    let mut coincident_min = f64::INFINITY;
    for c in 0..100u64 {
        let ch = ChannelRealization::sample(2, 2, 1.0, 80_000 + c).unwrap();
        let rep = check_lgdp(&ch, &cfg, 1000, 100, 1e-3, c).unwrap();
        violations += rep.violations;
        pairs += rep.pairs_tested;
        min_dot = min_dot.min(rep.min_dot);
        let same = check_lgdp_with(
            &ch,
            &cfg,
            &LgdpParams {
                n_points: 100,
                n_pairs: 10,
                delta: 1e-3,
                seed: c,
                coincident: true,
            },
        )
        .unwrap();
        coincident_min = coincident_min.min(same.min_dot);
    }
    let pass = violations == 0 && pairs == 100 * 1000 * 100 && coincident_min >= 0.0;
    assert!(verdict(
        8,
        "direction-preserving sampling",
        pass,
        format!("{pairs} pairs, {violations} violations, min dot {min_dot:.3e}, b=c min {coincident_min:.3e}")
    ));
}

#[test]
fn c09_iff_sign_property() {
    let cfg = cfg();
    let mut channels = Vec::new();
    let mut seed = 90_000u64;
    while channels.len() < 20 {
        let ch = ChannelRealization::sample(2, 2, 1.0, seed).unwrap();
        seed += 1;
        let cl = classify_2x2(&ch, &cfg).unwrap();
        if let Some(c) = cl
            .candidates
            .iter()
            .find(|c| c.accepted && c.structure.assignment == [0, 0])
        {
            channels.push((ch, c.powers.clone().unwrap()));
        }
    }
    let (mut compared, mut mismatches) = (0, 0);
    for (ch, eq) in &channels {
        let (q1, q2) = (eq.get(0, 0), eq.get(1, 0));
        for (a, b) in [(100.0, 100.0), (1e-3, 1e-3), (2.0 * q1, 3.0 * q2), (0.5 * q1, 0.1 * q2)] {
            for order in [vec![0, 1], vec![1, 0]] {
                let c = cfg.clone().with_order(order);
                let init = PowerProfile::new(vec![vec![a, 0.0], vec![b, 0.0]]).unwrap();
                let traj = run(ch, &c, init).unwrap();
                for prof in &traj.profiles {
                    let (p1, p2) = (prof.get(0, 0), prof.get(1, 0));
                    if prof.get(0, 1) > 0.0 || prof.get(1, 1) > 0.0 || p1 == 0.0 || p2 == 0.0 {
                        continue;
                    }
                    let (d1, d2) = (p1 - q1, p2 - q2);
                    // rounding level near the fixed point carries no sign
                    if d1.abs() <= 1e-9 * q1.max(1.0) || d2.abs() <= 1e-9 * q2.max(1.0) {
                        continue;
                    }
                    compared += 1;
                    mismatches += (d1.signum() != d2.signum()) as usize;
                }
            }
        }
    }
    assert!(verdict(
        9,
        "shared-carrier sign property",
        mismatches == 0 && compared > 0,
        format!("20 channels, {compared} shared iterates, {mismatches} sign mismatches")
    ));
}

fn cli(args: &[&str], threads: Option<&str>) -> (Vec<u8>, i32) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_carriergame"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("CARRIERGAME_THREADS", t);
    }
    let out = cmd.output().unwrap();
    (out.stdout, out.status.code().unwrap_or(-1))
}

#[test]
fn c10_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let mut pass = true;
    let mut stdout = Vec::new();
    for tag in ["a", "b"] {
        let csv = path(&format!("run_{tag}.csv"));
        let (s, code) = cli(&["run", "--seed", "7", "--users", "2", "--carriers", "2", "--out", &csv], None);
        pass &= code == 0;
        stdout.push(s);
    }
    let run_same = std::fs::read(path("run_a.csv")).unwrap() == std::fs::read(path("run_b.csv")).unwrap()
        && stdout[0] == stdout[1];
    let mut reports = Vec::new();
    for (tag, threads) in [("a", None), ("b", None), ("seq", Some("0"))] {
        let rep = path(&format!("mc_{tag}.json"));
        let (_, code) = cli(&["montecarlo", "--games", "100000", "--seed", "1", "--report", &rep], threads);
        pass &= code == 0;
        reports.push(std::fs::read(rep).unwrap());
    }
    let mc_same = reports[0] == reports[1];
    let seq_same = reports[0] == reports[2];
    pass &= run_same && mc_same && seq_same;
    assert!(verdict(
        10,
        "CLI determinism",
        pass,
        format!("run identical: {run_same}, montecarlo identical: {mc_same}, sequential identical: {seq_same}")
    ));
}
