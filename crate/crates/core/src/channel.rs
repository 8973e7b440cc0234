//! Static channel realizations: direct gains `h[k][l]`, cross gains
//! `g[i][k][l]` (transmitter `i` into the receiver of user `k` on carrier
//! `l`) and the noise variance.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifies the generator behind [`ChannelRealization::sample`] in every
/// output file.
pub const GENERATOR: &str = "rand_chacha 0.9 ChaCha8Rng::seed_from_u64";

/// Per-game random stream.
pub type GameRng = ChaCha8Rng;

pub fn game_rng(seed: u64) -> GameRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw on `[0, 1)` from the generator's 53-bit float output.
pub fn unit(rng: &mut impl Rng) -> f64 {
    rng.random::<f64>()
}

/// Exp(1) by inverse CDF.
pub fn exp1(rng: &mut impl Rng) -> f64 {
    -(-unit(rng)).ln_1p()
}

/// Uniform index in `0..n` as `floor(u·n)`.
pub fn uniform_index(rng: &mut impl Rng, n: usize) -> usize {
    ((unit(rng) * n as f64) as usize).min(n - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub n_users: usize,
    pub n_carriers: usize,
    pub sigma2: f64,
    pub h: Vec<Vec<f64>>,
    pub g: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
}

impl ChannelRealization {
    /// Draws a realization from a fresh generator seeded with `seed`.
    pub fn sample(n_users: usize, n_carriers: usize, sigma2: f64, seed: u64) -> Result<Self> {
        let mut rng = game_rng(seed);
        let mut ch = Self::sample_from(&mut rng, n_users, n_carriers, sigma2)?;
        ch.seed = Some(seed);
        ch.generator = Some(GENERATOR.to_string());
        Ok(ch)
    }

    /// Draws from an existing stream. Order: every `h[k][l]` (users outer,
    /// carriers inner), then every `g[i][k][l]` with `i != k` in the same
    /// nesting.
    pub fn sample_from(
        rng: &mut impl Rng,
        n_users: usize,
        n_carriers: usize,
        sigma2: f64,
    ) -> Result<Self> {
        check_dims(n_users, n_carriers)?;
        check_sigma2(sigma2)?;
        let h = (0..n_users)
            .map(|_| (0..n_carriers).map(|_| exp1(rng)).collect())
            .collect();
        let mut g = vec![vec![vec![0.0; n_carriers]; n_users]; n_users];
        for (i, from) in g.iter_mut().enumerate() {
            for (k, to) in from.iter_mut().enumerate() {
                if i != k {
                    to.iter_mut().for_each(|x| *x = exp1(rng));
                }
            }
        }
        Ok(ChannelRealization {
            n_users,
            n_carriers,
            sigma2,
            h,
            g,
            seed: None,
            generator: None,
        })
    }

    /// Wraps explicit gains. Diagonal `g[k][k][..]` must be zero.
    pub fn from_gains(h: Vec<Vec<f64>>, g: Vec<Vec<Vec<f64>>>, sigma2: f64) -> Result<Self> {
        let ch = ChannelRealization {
            n_users: h.len(),
            n_carriers: h.first().map_or(0, Vec::len),
            sigma2,
            h,
            g,
            seed: None,
            generator: None,
        };
        ch.validate()?;
        Ok(ch)
    }

    /// Two-user channel in the `g_il` shorthand, where `cross[i][l]` is the
    /// gain from user `i` on carrier `l` into the other user's receiver.
    pub fn two_user(h: [[f64; 2]; 2], cross: [[f64; 2]; 2], sigma2: f64) -> Result<Self> {
        let g = vec![
            vec![vec![0.0, 0.0], cross[0].to_vec()],
            vec![cross[1].to_vec(), vec![0.0, 0.0]],
        ];
        Self::from_gains(h.iter().map(|r| r.to_vec()).collect(), g, sigma2)
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(self.n_users, self.n_carriers)?;
        check_sigma2(self.sigma2)?;
        if self.h.len() != self.n_users || self.h.iter().any(|r| r.len() != self.n_carriers) {
            return Err(Error::Shape(format!(
                "h must be {}x{}",
                self.n_users, self.n_carriers
            )));
        }
        if self.g.len() != self.n_users
            || self.g.iter().any(|m| {
                m.len() != self.n_users || m.iter().any(|r| r.len() != self.n_carriers)
            })
        {
            return Err(Error::Shape(format!(
                "g must be {0}x{0}x{1}",
                self.n_users, self.n_carriers
            )));
        }
        for (k, row) in self.h.iter().enumerate() {
            for (l, &x) in row.iter().enumerate() {
                if !(x.is_finite() && x > 0.0) {
                    return Err(Error::Sign(format!("h[{k}][{l}] = {x} must be positive")));
                }
            }
        }
        for (i, m) in self.g.iter().enumerate() {
            for (k, row) in m.iter().enumerate() {
                for (l, &x) in row.iter().enumerate() {
                    if !(x.is_finite() && x >= 0.0) {
                        return Err(Error::Sign(format!(
                            "g[{i}][{k}][{l}] = {x} must be nonnegative"
                        )));
                    }
                    if i == k && x != 0.0 {
                        return Err(Error::Sign(format!("g[{i}][{i}][{l}] must be 0")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Co-channel interference plus noise seen by user `k` on carrier `l`.
    pub fn interference(&self, p: &[Vec<f64>], k: usize, l: usize) -> f64 {
        self.sigma2
            + (0..self.n_users)
                .filter(|&j| j != k)
                .map(|j| self.g[j][k][l] * p[j][l])
                .sum::<f64>()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ch: Self = serde_json::from_str(s)?;
        ch.validate()?;
        Ok(ch)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

fn check_dims(n_users: usize, n_carriers: usize) -> Result<()> {
    if n_users == 0 || n_carriers == 0 {
        return Err(Error::InvalidDimension(format!(
            "need at least one user and one carrier, got {n_users}x{n_carriers}"
        )));
    }
    Ok(())
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::Sign(format!("sigma2 = {sigma2} must be positive")));
    }
    Ok(())
}
