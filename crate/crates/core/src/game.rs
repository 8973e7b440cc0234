//! Strategy profiles, SINR, bits/joule utility and the single-carrier best
//! response.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::dynamics::Scheme;
use crate::efficiency::{EfficiencyFunction, GammaStar};
use crate::error::{Error, Result};

/// Two required powers within this relative gap count as a tie.
pub const TIE_REL_TOL: f64 = 1e-12;

/// Transmit powers `p[k][l]`, one row per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerProfile(Vec<Vec<f64>>);

impl PowerProfile {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || d == 0 {
            return Err(Error::InvalidDimension("empty power profile".into()));
        }
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("power profile rows differ in length".into()));
        }
        for (k, row) in rows.iter().enumerate() {
            for (l, &p) in row.iter().enumerate() {
                if !(p.is_finite() && p >= 0.0) {
                    return Err(Error::Sign(format!("p[{k}][{l}] = {p} must be >= 0")));
                }
            }
        }
        Ok(PowerProfile(rows))
    }

    pub fn zeros(n_users: usize, n_carriers: usize) -> Self {
        PowerProfile(vec![vec![0.0; n_carriers]; n_users])
    }

    /// Every user on one carrier at the same power.
    pub fn single_carrier(carriers: &[usize], n_carriers: usize, power: f64) -> Self {
        let mut p = Self::zeros(carriers.len(), n_carriers);
        for (k, &l) in carriers.iter().enumerate() {
            p.0[k][l] = power;
        }
        p
    }

    pub fn n_users(&self) -> usize {
        self.0.len()
    }

    pub fn n_carriers(&self) -> usize {
        self.0[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.0[k]
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.0[k][l]
    }

    pub fn set_row(&mut self, k: usize, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.n_carriers());
        self.0[k] = row;
    }

    pub fn with_row(&self, k: usize, row: Vec<f64>) -> Self {
        let mut p = self.clone();
        p.set_row(k, row);
        p
    }

    pub fn total_power(&self, k: usize) -> f64 {
        self.0[k].iter().sum()
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Carrier carrying the most power for each user, `None` for a silent user.
    pub fn active_carriers(&self) -> Vec<Option<usize>> {
        self.0
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(l, _)| l)
            })
            .collect()
    }

    pub fn check_bounds(&self, p_max: f64) -> Result<()> {
        for (k, row) in self.0.iter().enumerate() {
            for (l, &p) in row.iter().enumerate() {
                if p > p_max {
                    return Err(Error::InvalidConfig(format!(
                        "p[{k}][{l}] = {p} exceeds P_max = {p_max}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_shape(&self, ch: &ChannelRealization) -> Result<()> {
        if self.n_users() != ch.n_users || self.n_carriers() != ch.n_carriers {
            return Err(Error::Shape(format!(
                "profile is {}x{}, channel is {}x{}",
                self.n_users(),
                self.n_carriers(),
                ch.n_users,
                ch.n_carriers
            )));
        }
        Ok(())
    }
}

/// Parameters shared by every user in a game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    /// Common transmission rate R (bits/s).
    pub rate: f64,
    pub p_max: f64,
    pub efficiency: EfficiencyFunction,
    pub gamma_star: GammaStar,
    pub scheme: Scheme,
    /// Gauss-Seidel sweep order, 0-based. `None` means `0..N`.
    #[serde(default)]
    pub order: Option<Vec<usize>>,
    /// Cap on individual user updates.
    pub max_iters: usize,
    pub tol_power: f64,
    /// Relative SINR tolerance against `γ*` required at convergence.
    pub tol_sinr: f64,
    pub stable_rounds: usize,
    /// Seed for the asynchronous scheme when a run owns its stream.
    pub seed: u64,
}

impl GameConfig {
    pub const DEFAULT_P_MAX: f64 = 1000.0;

    /// Defaults: `R = 1`, Gauss-Seidel, `tol_power = 1e-9`, three stable
    /// rounds, `10⁴` user updates.
    pub fn new(efficiency: EfficiencyFunction, p_max: f64) -> Result<Self> {
        let gamma_star = efficiency.gamma_star()?;
        let cfg = GameConfig {
            rate: 1.0,
            p_max,
            efficiency,
            gamma_star,
            scheme: Scheme::GaussSeidel,
            order: None,
            max_iters: 10_000,
            tol_power: 1e-9,
            tol_sinr: 1e-9,
            stable_rounds: 3,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_order(mut self, order: Vec<usize>) -> Self {
        self.order = Some(order);
        self
    }

    pub fn gamma(&self) -> f64 {
        self.gamma_star.value
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return bad("rate must be positive");
        }
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return bad("p_max must be positive");
        }
        if !(self.tol_power > 0.0) || !(self.tol_sinr > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        if self.stable_rounds == 0 {
            return bad("stable_rounds must be >= 1");
        }
        if !(self.gamma_star.value > 0.0) {
            return bad("gamma_star must be positive");
        }
        Ok(())
    }
}

fn check_index(what: &'static str, index: usize, limit: usize) -> Result<()> {
    if index >= limit {
        return Err(Error::IndexOutOfRange { what, index, limit });
    }
    Ok(())
}

fn check_user_carrier(ch: &ChannelRealization, k: usize, l: usize) -> Result<()> {
    check_index("user", k, ch.n_users)?;
    check_index("carrier", l, ch.n_carriers)
}

/// `h[k][l]·p[k][l] / (σ² + Σ_{j≠k} g[j][k][l]·p[j][l])`.
pub fn sinr(ch: &ChannelRealization, prof: &PowerProfile, k: usize, l: usize) -> Result<f64> {
    check_user_carrier(ch, k, l)?;
    prof.check_shape(ch)?;
    Ok(sinr_raw(ch, prof.rows(), k, l))
}

pub(crate) fn sinr_raw(ch: &ChannelRealization, p: &[Vec<f64>], k: usize, l: usize) -> f64 {
    if p[k][l] == 0.0 {
        return 0.0;
    }
    ch.h[k][l] * p[k][l] / ch.interference(p, k, l)
}

/// Bits/joule of user `k`: `R·Σ_l f(γ_kl) / Σ_l p_kl`, and 0 for a silent
/// user.
pub fn utility(
    ch: &ChannelRealization,
    prof: &PowerProfile,
    cfg: &GameConfig,
    k: usize,
) -> Result<f64> {
    check_index("user", k, ch.n_users)?;
    prof.check_shape(ch)?;
    Ok(utility_raw(ch, prof.rows(), cfg, k))
}

pub(crate) fn utility_raw(
    ch: &ChannelRealization,
    p: &[Vec<f64>],
    cfg: &GameConfig,
    k: usize,
) -> f64 {
    let total: f64 = p[k].iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let throughput: f64 = (0..ch.n_carriers)
        .map(|l| cfg.efficiency.value(sinr_raw(ch, p, k, l)))
        .sum();
    cfg.rate * throughput / total
}

/// Power user `k` needs on carrier `l` to reach `γ*` against the current
/// interference.
pub fn required_power(
    ch: &ChannelRealization,
    prof: &PowerProfile,
    cfg: &GameConfig,
    k: usize,
    l: usize,
) -> Result<f64> {
    check_user_carrier(ch, k, l)?;
    prof.check_shape(ch)?;
    Ok(required_raw(ch, prof.rows(), cfg.gamma(), k, l))
}

pub(crate) fn required_raw(
    ch: &ChannelRealization,
    p: &[Vec<f64>],
    gamma: f64,
    k: usize,
    l: usize,
) -> f64 {
    gamma * ch.interference(p, k, l) / ch.h[k][l]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub row: Vec<f64>,
    /// Chosen carrier `L_k`, 0-based.
    pub carrier: usize,
    /// Required power on every carrier.
    pub required: Vec<f64>,
    /// `γ*` was out of reach under `P_max` on the chosen carrier.
    pub clamped: bool,
    /// Another carrier needed (numerically) the same power.
    pub tie: bool,
}

/// Single-carrier best reply of user `k`: full power requirement on the
/// carrier needing the least power, capped at `P_max`, zero elsewhere.
/// Ties go to the lowest carrier index.
pub fn best_response(
    ch: &ChannelRealization,
    prof: &PowerProfile,
    cfg: &GameConfig,
    k: usize,
) -> Result<BestResponse> {
    check_index("user", k, ch.n_users)?;
    prof.check_shape(ch)?;
    Ok(best_response_raw(ch, prof.rows(), cfg, k))
}

pub(crate) fn best_response_raw(
    ch: &ChannelRealization,
    p: &[Vec<f64>],
    cfg: &GameConfig,
    k: usize,
) -> BestResponse {
    let required: Vec<f64> = (0..ch.n_carriers)
        .map(|l| required_raw(ch, p, cfg.gamma(), k, l))
        .collect();
    let mut carrier = 0;
    for (l, &r) in required.iter().enumerate().skip(1) {
        if r < required[carrier] {
            carrier = l;
        }
    }
    let best = required[carrier];
    let tie = required
        .iter()
        .enumerate()
        .any(|(l, &r)| l != carrier && r <= best * (1.0 + TIE_REL_TOL));
    let clamped = best > cfg.p_max;
    let mut row = vec![0.0; ch.n_carriers];
    row[carrier] = best.min(cfg.p_max);
    BestResponse {
        row,
        carrier,
        required,
        clamped,
        tie,
    }
}

/// Best-carrier path-gain test for user `k` on carrier `l`:
/// `h_kl / h_ki > (σ² + I_l) / (σ² + I_i)` for every other carrier `i`.
pub fn best_carrier_condition(
    ch: &ChannelRealization,
    prof: &PowerProfile,
    k: usize,
    l: usize,
) -> Result<bool> {
    check_user_carrier(ch, k, l)?;
    prof.check_shape(ch)?;
    let p = prof.rows();
    let noise_l = ch.interference(p, k, l);
    Ok((0..ch.n_carriers).filter(|&i| i != l).all(|i| {
        ch.h[k][l] / ch.h[k][i] > noise_l / ch.interference(p, k, i)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(m: u32) -> GameConfig {
        GameConfig::new(EfficiencyFunction::exponential_power(m).unwrap(), 1000.0).unwrap()
    }

    fn solo(h: Vec<f64>) -> ChannelRealization {
        let d = h.len();
        ChannelRealization::from_gains(vec![h], vec![vec![vec![0.0; d]]], 1.0).unwrap()
    }

    #[test]
    fn sinr_formula() {
        let ch = ChannelRealization::two_user([[0.2, 1.0], [1.0, 1.0]], [[0.0, 0.0], [0.1, 0.0]], 1.0)
            .unwrap();
        let p = PowerProfile::new(vec![vec![10.0, 0.0], vec![10.0, 0.0]]).unwrap();
        assert!((sinr(&ch, &p, 0, 0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(sinr(&ch, &p, 0, 1).unwrap(), 0.0);
        assert!(matches!(
            sinr(&ch, &p, 2, 0),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn sinr_at_gamma_star_power() {
        let c = cfg(2);
        let ch = solo(vec![1.0]);
        let p = PowerProfile::new(vec![vec![c.gamma()]]).unwrap();
        assert!((sinr(&ch, &p, 0, 0).unwrap() - 1.256_431_208_626_17).abs() < 1e-12);
    }

    #[test]
    fn utility_values() {
        let mut c = cfg(2);
        // f(γ) = 0.5 at γ = -ln(1 - 1/√2); p = 4 with h chosen to hit it
        let target = -(1.0 - 0.5f64.sqrt()).ln();
        let ch = solo(vec![target / 4.0]);
        let p = PowerProfile::new(vec![vec![4.0]]).unwrap();
        assert!((utility(&ch, &p, &c, 0).unwrap() - 0.125).abs() < 1e-14);
        let zero = PowerProfile::zeros(1, 1);
        assert_eq!(utility(&ch, &zero, &c, 0).unwrap(), 0.0);
        c.rate = 3.0;
        assert!((utility(&ch, &p, &c, 0).unwrap() - 0.375).abs() < 1e-14);
    }

    #[test]
    fn concentrated_beats_equal_split() {
        let c = cfg(2);
        let g = c.gamma();
        let f = c.efficiency;
        let ch = solo(vec![1.0, 1.0]);
        let conc = PowerProfile::new(vec![vec![g, 0.0]]).unwrap();
        let split = PowerProfile::new(vec![vec![g / 2.0, g / 2.0]]).unwrap();
        let u_conc = utility(&ch, &conc, &c, 0).unwrap();
        let u_split = utility(&ch, &split, &c, 0).unwrap();
        assert!((u_conc - f.eval(g).unwrap() / g).abs() < 1e-14);
        assert!((u_split - 2.0 * f.eval(g / 2.0).unwrap() / g).abs() < 1e-14);
        assert!(u_conc > u_split);
        // γ* on both identical carriers is a tie with the single-carrier optimum
        let both = PowerProfile::new(vec![vec![g, g]]).unwrap();
        assert!((utility(&ch, &both, &c, 0).unwrap() - u_conc).abs() < 1e-14);
    }

    #[test]
    fn required_power_formula() {
        let mut c = cfg(2);
        c.gamma_star.value = 2.0;
        // σ² = 1 plus interference 3 from one interferer
        let ch = ChannelRealization::two_user([[0.5, 1.0], [1.0, 1.0]], [[0.0, 0.0], [1.0, 0.0]], 1.0)
            .unwrap();
        let p = PowerProfile::new(vec![vec![0.0, 0.0], vec![3.0, 0.0]]).unwrap();
        assert!((required_power(&ch, &p, &c, 0, 0).unwrap() - 16.0).abs() < 1e-14);
        let c = cfg(2);
        let ch = solo(vec![1.0]);
        let z = PowerProfile::zeros(1, 1);
        assert!((required_power(&ch, &z, &c, 0, 0).unwrap() - 1.256_431_208_626_17).abs() < 1e-12);
    }

    #[test]
    fn best_response_picks_cheapest_carrier() {
        let c = cfg(2);
        let ch = solo(vec![1.0, 0.5]);
        let br = best_response(&ch, &PowerProfile::zeros(1, 2), &c, 0).unwrap();
        assert_eq!(br.carrier, 0);
        assert!((br.row[0] - c.gamma()).abs() < 1e-15);
        assert_eq!(br.row[1], 0.0);
        assert!((br.required[1] - 2.0 * c.gamma()).abs() < 1e-14);
        assert!(!br.clamped && !br.tie);
    }

    #[test]
    fn best_response_tie_goes_to_lowest_index() {
        let c = cfg(2);
        let ch = solo(vec![0.7, 0.7]);
        let br = best_response(&ch, &PowerProfile::zeros(1, 2), &c, 0).unwrap();
        assert_eq!(br.carrier, 0);
        assert!(br.tie);
    }

    #[test]
    fn best_response_clamps_at_p_max() {
        let c = cfg(80);
        let g = c.gamma();
        // carrier 2 needs γ*, carrier 1 needs γ*·1e6 > P_max
        let ch = solo(vec![1e-6, 1.0]);
        let br = best_response(&ch, &PowerProfile::zeros(1, 2), &c, 0).unwrap();
        assert_eq!(br.carrier, 1);
        assert!(!br.clamped);
        assert!((br.row[1] - g).abs() < 1e-12);
        let weak = solo(vec![1e-6, 2e-6]);
        let br = best_response(&weak, &PowerProfile::zeros(1, 2), &c, 0).unwrap();
        assert_eq!(br.carrier, 1);
        assert!(br.clamped);
        assert_eq!(br.row, vec![0.0, 1000.0]);
    }

    #[test]
    fn best_carrier_condition_cases() {
        let ch = solo(vec![3.0, 1.0]);
        let z = PowerProfile::zeros(1, 2);
        assert!(best_carrier_condition(&ch, &z, 0, 0).unwrap());
        assert!(!best_carrier_condition(&ch, &z, 0, 1).unwrap());
        let sym = solo(vec![1.0, 1.0]);
        assert!(!best_carrier_condition(&sym, &z, 0, 0).unwrap());
        assert!(!best_carrier_condition(&sym, &z, 0, 1).unwrap());
    }

    #[test]
    fn profile_validation() {
        assert!(PowerProfile::new(vec![]).is_err());
        assert!(PowerProfile::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(PowerProfile::new(vec![vec![-1.0]]).is_err());
        let p = PowerProfile::new(vec![vec![5.0, 0.0]]).unwrap();
        assert!(p.check_bounds(4.0).is_err());
        assert!(p.check_bounds(5.0).is_ok());
        assert_eq!(serde_json::to_string(&p).unwrap(), "[[5.0,0.0]]");
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(2);
        c.max_iters = 0;
        assert!(c.validate().is_err());
        let mut c = cfg(2);
        c.tol_power = 0.0;
        assert!(c.validate().is_err());
        assert!(GameConfig::new(EfficiencyFunction::exponential_power(1).unwrap(), 1000.0).is_err());
    }
}
