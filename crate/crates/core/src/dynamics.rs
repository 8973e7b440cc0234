//! Best-response iteration `P(n+1) = λ(P(n))` under Jacobi, Gauss-Seidel
//! and totally asynchronous schedules.
//!
//! Iteration counts are individual user updates for every scheme, so a
//! Jacobi step on `N` users counts `N`. `profiles[0]` is the initial
//! profile `P(1)`; each later entry is the profile after one recorded
//! update (one user for Gauss-Seidel and asynchronous, all users for
//! Jacobi).

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::EquilibriumStructure;
use crate::channel::{self, ChannelRealization};
use crate::error::{Error, Result};
use crate::game::{best_response_raw, sinr_raw, BestResponse, GameConfig, PowerProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Jacobi,
    GaussSeidel,
    TotallyAsynchronous,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Jacobi => "jacobi",
            Scheme::GaussSeidel => "gauss-seidel",
            Scheme::TotallyAsynchronous => "totally-asynchronous",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jacobi" => Ok(Scheme::Jacobi),
            "gauss-seidel" | "gs" | "seidel" => Ok(Scheme::GaussSeidel),
            "totally-asynchronous" | "async" | "asynchronous" => Ok(Scheme::TotallyAsynchronous),
            other => Err(Error::InvalidConfig(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub profiles: Vec<PowerProfile>,
    /// Active carrier per user for each entry of `profiles`.
    pub carrier_assignments: Vec<Vec<Option<usize>>>,
    pub converged: bool,
    /// User updates performed.
    pub iterations: usize,
    pub clamped_ever: bool,
    pub tie_ever: bool,
    /// Period in user updates when the run revisited an earlier
    /// non-fixed state and was stopped.
    pub cycle_length: Option<usize>,
    pub scheme: Scheme,
    pub order: Vec<usize>,
}

impl Trajectory {
    pub fn final_profile(&self) -> &PowerProfile {
        self.profiles.last().expect("trajectory is never empty")
    }

    /// Structure of the final profile; `None` while some user is silent.
    pub fn structure(&self) -> Option<EquilibriumStructure> {
        EquilibriumStructure::from_profile(self.final_profile())
    }

    pub fn summary(&self) -> TrajectorySummary {
        TrajectorySummary {
            converged: self.converged,
            iterations: self.iterations,
            clamped_ever: self.clamped_ever,
            tie_ever: self.tie_ever,
            cycle_length: self.cycle_length,
            scheme: self.scheme,
            order: self.order.iter().map(|k| k + 1).collect(),
            structure: self.structure().map_or_else(|| "none".into(), |s| s.label()),
            final_profile: self.final_profile().clone(),
        }
    }
}

/// JSON summary of one run. User indices in `order` are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub converged: bool,
    pub iterations: usize,
    pub clamped_ever: bool,
    pub tie_ever: bool,
    pub cycle_length: Option<usize>,
    pub scheme: Scheme,
    pub order: Vec<usize>,
    pub structure: String,
    pub final_profile: PowerProfile,
}

#[derive(Debug, Default, Clone, Copy)]
struct Flags {
    clamped: bool,
    tie: bool,
}

impl Flags {
    fn absorb(&mut self, br: &BestResponse) {
        self.clamped |= br.clamped;
        self.tie |= br.tie;
    }
}

fn check_order(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &k in order {
        if k >= n || std::mem::replace(&mut seen[k], true) {
            return Err(Error::InvalidPermutation(order.to_vec()));
        }
    }
    if order.len() != n {
        return Err(Error::InvalidPermutation(order.to_vec()));
    }
    Ok(())
}

fn jacobi(ch: &ChannelRealization, prof: &PowerProfile, cfg: &GameConfig, flags: &mut Flags) -> PowerProfile {
    let mut next = prof.clone();
    for k in 0..ch.n_users {
        let br = best_response_raw(ch, prof.rows(), cfg, k);
        flags.absorb(&br);
        next.set_row(k, br.row);
    }
    next
}

fn update_user(
    ch: &ChannelRealization,
    prof: &mut PowerProfile,
    cfg: &GameConfig,
    k: usize,
    flags: &mut Flags,
) {
    let br = best_response_raw(ch, prof.rows(), cfg, k);
    flags.absorb(&br);
    prof.set_row(k, br.row);
}

/// Every user best-responds to the same input profile.
pub fn step_jacobi(ch: &ChannelRealization, prof: &PowerProfile, cfg: &GameConfig) -> PowerProfile {
    jacobi(ch, prof, cfg, &mut Flags::default())
}

/// One sweep: users update in `order` (0-based), each seeing the updates
/// made before it.
pub fn step_gauss_seidel(
    ch: &ChannelRealization,
    prof: &PowerProfile,
    cfg: &GameConfig,
    order: &[usize],
) -> Result<PowerProfile> {
    check_order(order, ch.n_users)?;
    let mut next = prof.clone();
    let mut flags = Flags::default();
    for &k in order {
        update_user(ch, &mut next, cfg, k, &mut flags);
    }
    Ok(next)
}

/// One uniformly chosen user best-responds to the current profile.
pub fn step_async(
    ch: &ChannelRealization,
    prof: &PowerProfile,
    cfg: &GameConfig,
    rng: &mut impl Rng,
) -> PowerProfile {
    let k = channel::uniform_index(rng, ch.n_users);
    let mut next = prof.clone();
    update_user(ch, &mut next, cfg, k, &mut Flags::default());
    next
}

/// Whether `prof` is a fixed point of the best-response map: every row
/// within `tol_power` of its best response, and every active carrier at
/// `γ*` (relative `tol_sinr`) or clamped at `P_max`.
pub fn is_fixed_point(ch: &ChannelRealization, prof: &PowerProfile, cfg: &GameConfig) -> bool {
    fixed_point_check(ch, prof, cfg, &mut Flags::default())
}

fn fixed_point_check(
    ch: &ChannelRealization,
    prof: &PowerProfile,
    cfg: &GameConfig,
    flags: &mut Flags,
) -> bool {
    let p = prof.rows();
    (0..ch.n_users).all(|k| {
        let br = best_response_raw(ch, p, cfg, k);
        flags.absorb(&br);
        let close = br
            .row
            .iter()
            .zip(&p[k])
            .all(|(a, b)| (a - b).abs() < cfg.tol_power);
        let on_target = if br.clamped {
            (p[k][br.carrier] - cfg.p_max).abs() < cfg.tol_power
        } else {
            let s = sinr_raw(ch, p, k, br.carrier);
            (s / cfg.gamma() - 1.0).abs() <= cfg.tol_sinr
        };
        close && on_target
    })
}

/// Runs the configured scheme from `initial` with a stream seeded from
/// `cfg.seed` (only the asynchronous scheme draws from it).
pub fn run(ch: &ChannelRealization, cfg: &GameConfig, initial: PowerProfile) -> Result<Trajectory> {
    let mut rng = channel::game_rng(cfg.seed);
    run_with_rng(ch, cfg, initial, &mut rng)
}

pub fn run_with_rng(
    ch: &ChannelRealization,
    cfg: &GameConfig,
    initial: PowerProfile,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    cfg.validate()?;
    if initial.n_users() != ch.n_users || initial.n_carriers() != ch.n_carriers {
        return Err(Error::Shape("initial profile does not match channel".into()));
    }
    initial.check_bounds(cfg.p_max)?;
    let order = match &cfg.order {
        Some(o) => {
            check_order(o, ch.n_users)?;
            o.clone()
        }
        None => (0..ch.n_users).collect(),
    };

    let n = ch.n_users;
    let mut traj = Trajectory {
        carrier_assignments: vec![initial.active_carriers()],
        profiles: vec![initial],
        converged: false,
        iterations: 0,
        clamped_ever: false,
        tie_ever: false,
        cycle_length: None,
        scheme: cfg.scheme,
        order: order.clone(),
    };
    // deterministic schemes only: state -> iteration count when first seen
    let mut seen: HashMap<(Vec<u64>, usize), usize> = HashMap::new();
    let mut flags = Flags::default();
    let mut stable = 0usize;
    let mut sweep_pos = 0usize;

    while traj.iterations < cfg.max_iters {
        let current = traj.final_profile();
        let next = match cfg.scheme {
            Scheme::Jacobi => jacobi(ch, current, cfg, &mut flags),
            Scheme::GaussSeidel | Scheme::TotallyAsynchronous => {
                let k = if cfg.scheme == Scheme::GaussSeidel {
                    let k = order[sweep_pos];
                    sweep_pos = (sweep_pos + 1) % n;
                    k
                } else {
                    channel::uniform_index(rng, n)
                };
                let mut next = current.clone();
                update_user(ch, &mut next, cfg, k, &mut flags);
                next
            }
        };
        if next.max_abs_diff(current) < cfg.tol_power {
            stable += 1;
        } else {
            stable = 0;
        }
        traj.iterations += if cfg.scheme == Scheme::Jacobi { n } else { 1 };
        traj.carrier_assignments.push(next.active_carriers());
        traj.profiles.push(next);
        if stable >= cfg.stable_rounds && fixed_point_check(ch, traj.final_profile(), cfg, &mut flags) {
            traj.converged = true;
            break;
        }
        if stable == 0 && cfg.scheme != Scheme::TotallyAsynchronous {
            let key = (
                traj.final_profile().rows().iter().flatten().map(|p| p.to_bits()).collect(),
                sweep_pos,
            );
            if let Some(first) = seen.insert(key, traj.iterations) {
                traj.cycle_length = Some(traj.iterations - first);
                break;
            }
        }
    }
    traj.clamped_ever = flags.clamped;
    traj.tie_ever = flags.tie;
    Ok(traj)
}
