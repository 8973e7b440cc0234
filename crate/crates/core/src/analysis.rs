//! Equilibrium verification and structure.
//!
//! [`is_nash`] uses the analytic best response as the deviation oracle.
//! [`equilibrium_powers`] solves the SINR-balance system for a fixed
//! carrier assignment, and [`classify_2x2`] combines the two to list every
//! pure equilibrium structure of a two-user two-carrier channel.
//! [`check_lgdp`] samples the direction-preserving inequality
//! `(λ(b) − b)ᵀ(λ(c) − c) ≥ 0` around non-fixed points of the simultaneous
//! best-response map.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelRealization};
use crate::dynamics::step_jacobi;
use crate::error::{Error, Result};
use crate::game::{
    best_carrier_condition, best_response_raw, utility_raw, GameConfig, PowerProfile,
};

/// Dot products below this count as direction-preserving violations.
pub const LGDP_EPS_DOT: f64 = 1e-12;

/// Carrier occupied by each user (0-based internally, 1-based in labels
/// and JSON).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "StructureRepr", try_from = "StructureRepr")]
pub struct EquilibriumStructure {
    pub assignment: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct StructureRepr {
    label: String,
    assignment: Vec<usize>,
}

impl From<EquilibriumStructure> for StructureRepr {
    fn from(s: EquilibriumStructure) -> Self {
        StructureRepr {
            label: s.label(),
            assignment: s.assignment.iter().map(|l| l + 1).collect(),
        }
    }
}

impl TryFrom<StructureRepr> for EquilibriumStructure {
    type Error = String;

    fn try_from(r: StructureRepr) -> std::result::Result<Self, String> {
        r.assignment
            .iter()
            .map(|&l| l.checked_sub(1).ok_or_else(|| "carrier indices start at 1".to_string()))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(|assignment| EquilibriumStructure { assignment })
    }
}

impl EquilibriumStructure {
    pub fn new(assignment: Vec<usize>) -> Self {
        EquilibriumStructure { assignment }
    }

    /// Carrier with the most power per user; `None` if any user is silent.
    pub fn from_profile(prof: &PowerProfile) -> Option<Self> {
        prof.active_carriers()
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .map(Self::new)
    }

    /// The four two-user two-carrier structures in the order
    /// `(1,2)`, `(2,1)`, `(12,)`, `(,12)`.
    pub fn all_2x2() -> [Self; 4] {
        [
            Self::new(vec![0, 1]),
            Self::new(vec![1, 0]),
            Self::new(vec![0, 0]),
            Self::new(vec![1, 1]),
        ]
    }

    /// `(1,2)`-style label for two users on two carriers, otherwise the
    /// 1-based carrier list.
    pub fn label(&self) -> String {
        match self.assignment.as_slice() {
            [0, 1] => "(1,2)".into(),
            [1, 0] => "(2,1)".into(),
            [0, 0] => "(12,)".into(),
            [1, 1] => "(,12)".into(),
            a => format!(
                "[{}]",
                a.iter()
                    .map(|l| (l + 1).to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
        }
    }

    pub fn is_shared(&self) -> bool {
        let a = &self.assignment;
        (1..a.len()).any(|i| a[..i].contains(&a[i]))
    }
}

impl fmt::Display for EquilibriumStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// `true` iff no user gains more than `tol` by switching to its best
/// response.
pub fn is_nash(
    ch: &ChannelRealization,
    cfg: &GameConfig,
    prof: &PowerProfile,
    tol: f64,
) -> Result<bool> {
    Ok(nash_gaps(ch, cfg, prof)?.iter().all(|&gap| gap <= tol))
}

/// Per-user utility gain from deviating to the best response.
pub fn nash_gaps(ch: &ChannelRealization, cfg: &GameConfig, prof: &PowerProfile) -> Result<Vec<f64>> {
    if prof.n_users() != ch.n_users || prof.n_carriers() != ch.n_carriers {
        return Err(Error::Shape("profile does not match channel".into()));
    }
    let p = prof.rows();
    Ok((0..ch.n_users)
        .map(|k| {
            let br = best_response_raw(ch, p, cfg, k);
            let mut dev = p.to_vec();
            dev[k] = br.row;
            utility_raw(ch, &dev, cfg, k) - utility_raw(ch, p, cfg, k)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum Infeasible {
    #[error("assignment has {got} entries or a carrier outside 1..={n_carriers}")]
    InvalidAssignment { got: usize, n_carriers: usize },
    #[error("SINR-balance system on carrier {carrier} is singular")]
    Singular { carrier: usize },
    #[error("user {user} would need nonpositive power {power}")]
    NonPositive { user: usize, power: f64 },
    #[error("user {user} would need {power} > P_max")]
    ExceedsPmax { user: usize, power: f64 },
}

/// Powers putting every user at exactly `γ*` on its assigned carrier
/// (0-based carriers), zero elsewhere.
pub fn equilibrium_powers(
    ch: &ChannelRealization,
    cfg: &GameConfig,
    assignment: &[usize],
) -> std::result::Result<PowerProfile, Infeasible> {
    if assignment.len() != ch.n_users || assignment.iter().any(|&l| l >= ch.n_carriers) {
        return Err(Infeasible::InvalidAssignment {
            got: assignment.len(),
            n_carriers: ch.n_carriers,
        });
    }
    let gamma = cfg.gamma();
    let mut prof = PowerProfile::zeros(ch.n_users, ch.n_carriers);
    for l in 0..ch.n_carriers {
        let users: Vec<usize> = (0..ch.n_users).filter(|&k| assignment[k] == l).collect();
        if users.is_empty() {
            continue;
        }
        // p_a - (γ*/h_a) Σ_b g[b][a][l] p_b = γ* σ² / h_a
        let m = users.len();
        let mut a = vec![vec![0.0; m + 1]; m];
        for (r, &k) in users.iter().enumerate() {
            let scale = gamma / ch.h[k][l];
            for (c, &j) in users.iter().enumerate() {
                a[r][c] = if r == c { 1.0 } else { -scale * ch.g[j][k][l] };
            }
            a[r][m] = scale * ch.sigma2;
        }
        let x = solve_augmented(a).ok_or(Infeasible::Singular { carrier: l })?;
        for (&k, &p) in users.iter().zip(&x) {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Infeasible::NonPositive { user: k, power: p });
            }
            if p > cfg.p_max {
                return Err(Infeasible::ExceedsPmax { user: k, power: p });
            }
            let mut row = prof.row(k).to_vec();
            row[l] = p;
            prof.set_row(k, row);
        }
    }
    Ok(prof)
}

/// Gaussian elimination with partial pivoting on an `m × (m+1)` augmented
/// matrix.
fn solve_augmented(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let m = a.len();
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        let scale = a[pivot][..m].iter().fold(0.0f64, |s, x| s.max(x.abs()));
        if a[pivot][col].abs() <= 1e-12 * scale.max(1.0) {
            return None;
        }
        a.swap(col, pivot);
        for r in col + 1..m {
            let factor = a[r][col] / a[col][col];
            for c in col..=m {
                a[r][c] -= factor * a[col][c];
            }
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let tail: f64 = (r + 1..m).map(|c| a[r][c] * x[c]).sum();
        x[r] = (a[r][m] - tail) / a[r][r];
    }
    Some(x)
}

/// A named condition a candidate structure must satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Inequality {
    /// Shared carrier: user 1's power must stay below `η₁` so that user 2
    /// keeps preferring the shared carrier.
    Eta1 { power: f64, eta: f64 },
    /// Shared carrier: user 2's power must stay below `η₂`.
    Eta2 { power: f64, eta: f64 },
    /// Split carriers: the user's carrier must strictly need the least power.
    BestCarrier { user: usize },
    /// A user can still gain by deviating.
    Nash { user: usize, gain: f64 },
    /// No positive powers within `P_max` solve the balance system.
    Feasibility { infeasible: Infeasible },
}

impl Inequality {
    pub fn index(&self) -> String {
        match self {
            Inequality::Eta1 { .. } => "eta1".into(),
            Inequality::Eta2 { .. } => "eta2".into(),
            Inequality::BestCarrier { user } => format!("best-carrier-user{}", user + 1),
            Inequality::Nash { user, .. } => format!("nash-user{}", user + 1),
            Inequality::Feasibility { .. } => "feasibility".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub structure: EquilibriumStructure,
    pub powers: Option<PowerProfile>,
    pub failed: Vec<Inequality>,
    pub accepted: bool,
    /// For shared structures, `min{(h_1s/g_1s)(r−1), (h_2o/g_2s)(r−1)}` with
    /// `r = h_2s/h_2o` (`s` shared, `o` other carrier), the printed
    /// closed-form bound on `γ*`. Diagnostic only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub structures: Vec<EquilibriumStructure>,
    pub candidates: Vec<Candidate>,
    pub gamma_star: f64,
}

impl Classification {
    pub fn contains(&self, s: &EquilibriumStructure) -> bool {
        self.structures.contains(s)
    }
}

/// Nash tolerance used by the classifier.
pub const CLASSIFY_NASH_TOL: f64 = 1e-9;

/// Every pure equilibrium structure of a two-user, two-carrier channel.
pub fn classify_2x2(ch: &ChannelRealization, cfg: &GameConfig) -> Result<Classification> {
    if ch.n_users != 2 || ch.n_carriers != 2 {
        return Err(Error::InvalidDimension(format!(
            "classifier needs 2 users and 2 carriers, got {}x{}",
            ch.n_users, ch.n_carriers
        )));
    }
    let candidates: Vec<Candidate> = EquilibriumStructure::all_2x2()
        .into_iter()
        .map(|s| check_candidate(ch, cfg, s))
        .collect::<Result<_>>()?;
    Ok(Classification {
        structures: candidates
            .iter()
            .filter(|c| c.accepted)
            .map(|c| c.structure.clone())
            .collect(),
        candidates,
        gamma_star: cfg.gamma(),
    })
}

fn check_candidate(
    ch: &ChannelRealization,
    cfg: &GameConfig,
    structure: EquilibriumStructure,
) -> Result<Candidate> {
    let mut failed = Vec::new();
    let mut gamma_bound = None;
    let powers = match equilibrium_powers(ch, cfg, &structure.assignment) {
        Ok(p) => Some(p),
        Err(infeasible) => {
            failed.push(Inequality::Feasibility { infeasible });
            None
        }
    };
    if structure.is_shared() {
        let s = structure.assignment[0];
        let o = 1 - s;
        let (h, g, sigma2) = (&ch.h, &ch.g, ch.sigma2);
        let r2 = h[1][s] / h[1][o];
        let r1 = h[0][s] / h[0][o];
        gamma_bound = Some(
            (h[0][s] / g[0][1][s] * (r2 - 1.0)).min(h[1][o] / g[1][0][s] * (r2 - 1.0)),
        );
        if let Some(p) = &powers {
            let (p1, p2) = (p.get(0, s), p.get(1, s));
            // g·p < σ²(r − 1), kept in product form so g = 0 is well defined
            if !(g[0][1][s] * p1 < sigma2 * (r2 - 1.0)) {
                failed.push(Inequality::Eta1 {
                    power: p1,
                    eta: sigma2 / g[0][1][s] * (r2 - 1.0),
                });
            }
            if !(g[1][0][s] * p2 < sigma2 * (r1 - 1.0)) {
                failed.push(Inequality::Eta2 {
                    power: p2,
                    eta: sigma2 / g[1][0][s] * (r1 - 1.0),
                });
            }
        }
    } else if let Some(p) = &powers {
        for (k, &l) in structure.assignment.iter().enumerate() {
            if !best_carrier_condition(ch, p, k, l)? {
                failed.push(Inequality::BestCarrier { user: k });
            }
        }
    }
    if let Some(p) = &powers {
        for (user, gain) in nash_gaps(ch, cfg, p)?.into_iter().enumerate() {
            if gain > CLASSIFY_NASH_TOL {
                failed.push(Inequality::Nash { user, gain });
            }
        }
    }
    Ok(Candidate {
        accepted: failed.is_empty(),
        structure,
        powers,
        failed,
        gamma_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LgdpViolation {
    pub a: PowerProfile,
    pub b: PowerProfile,
    pub c: PowerProfile,
    pub dot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LgdpReport {
    pub points_tested: usize,
    pub pairs_tested: usize,
    pub delta: f64,
    pub min_dot: f64,
    pub violations: usize,
    /// First few violating triples.
    pub dumps: Vec<LgdpViolation>,
    /// Present when there is something to replay.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelRealization>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LgdpParams {
    pub n_points: usize,
    pub n_pairs: usize,
    pub delta: f64,
    pub seed: u64,
    /// Use `c = b` for every pair.
    pub coincident: bool,
}

const MAX_DUMPS: usize = 5;
const MAX_REJECTIONS: usize = 10_000;

/// Samples the direction-preserving inequality with the simultaneous
/// best-response map.
pub fn check_lgdp(
    ch: &ChannelRealization,
    cfg: &GameConfig,
    n_points: usize,
    n_pairs: usize,
    delta: f64,
    seed: u64,
) -> Result<LgdpReport> {
    check_lgdp_with(
        ch,
        cfg,
        &LgdpParams {
            n_points,
            n_pairs,
            delta,
            seed,
            coincident: false,
        },
    )
}

pub fn check_lgdp_with(
    ch: &ChannelRealization,
    cfg: &GameConfig,
    params: &LgdpParams,
) -> Result<LgdpReport> {
    if !(params.delta > 0.0 && params.delta.is_finite()) {
        return Err(Error::InvalidConfig("delta must be positive".into()));
    }
    let (n, d) = (ch.n_users, ch.n_carriers);
    let mut rng = channel::game_rng(params.seed);
    let mut report = LgdpReport {
        points_tested: 0,
        pairs_tested: 0,
        delta: params.delta,
        min_dot: f64::INFINITY,
        violations: 0,
        dumps: Vec::new(),
        channel: None,
    };
    let displacement = |x: &PowerProfile| -> Vec<f64> {
        let fx = step_jacobi(ch, x, cfg);
        fx.rows()
            .iter()
            .flatten()
            .zip(x.rows().iter().flatten())
            .map(|(a, b)| a - b)
            .collect()
    };

    let mut rejected = 0usize;
    while report.points_tested < params.n_points {
        let a = uniform_profile(&mut rng, n, d, cfg.p_max);
        if step_jacobi(ch, &a, cfg).max_abs_diff(&a) <= 0.0 {
            rejected += 1;
            if rejected > MAX_REJECTIONS {
                break;
            }
            continue;
        }
        report.points_tested += 1;
        for _ in 0..params.n_pairs {
            let Some(b) = ball_point(&mut rng, &a, params.delta, cfg.p_max) else {
                continue;
            };
            let c = if params.coincident {
                b.clone()
            } else {
                match ball_point(&mut rng, &a, params.delta, cfg.p_max) {
                    Some(c) => c,
                    None => continue,
                }
            };
            let db = displacement(&b);
            let dc = if params.coincident { db.clone() } else { displacement(&c) };
            let dot: f64 = db.iter().zip(&dc).map(|(x, y)| x * y).sum();
            report.pairs_tested += 1;
            report.min_dot = report.min_dot.min(dot);
            if dot < -LGDP_EPS_DOT {
                report.violations += 1;
                if report.dumps.len() < MAX_DUMPS {
                    report.dumps.push(LgdpViolation {
                        a: a.clone(),
                        b,
                        c,
                        dot,
                    });
                }
            }
        }
    }
    if report.violations > 0 {
        report.channel = Some(ch.clone());
    }
    Ok(report)
}

fn uniform_profile(rng: &mut impl Rng, n: usize, d: usize, p_max: f64) -> PowerProfile {
    let rows = (0..n)
        .map(|_| (0..d).map(|_| channel::unit(rng) * p_max).collect())
        .collect();
    PowerProfile::new(rows).expect("uniform draws are in range")
}

/// Uniform point of the Euclidean ball around `a` intersected with the
/// strategy box, by rejection.
fn ball_point(rng: &mut impl Rng, a: &PowerProfile, delta: f64, p_max: f64) -> Option<PowerProfile> {
    let dim = a.n_users() * a.n_carriers();
    for _ in 0..1000 {
        let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let radius = delta * channel::unit(rng).powf(1.0 / dim as f64);
        let mut it = dir.iter().map(|x| x / norm * radius);
        let rows: Vec<Vec<f64>> = a
            .rows()
            .iter()
            .map(|row| row.iter().map(|&p| p + it.next().unwrap()).collect())
            .collect();
        if rows.iter().flatten().all(|&p| (0.0..=p_max).contains(&p)) {
            return Some(PowerProfile::new(rows).expect("inside the box"));
        }
    }
    None
}
