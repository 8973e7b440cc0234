//! Noncooperative power control for multiuser multicarrier data networks.
//!
//! Each user picks a transmit power on each of `D` carriers to maximize its
//! bits/joule utility. The best reply puts all power on the single carrier
//! that needs the least power to reach the optimal SINR `γ*`, and iterating
//! that reply converges to a Nash equilibrium in practice.
//!
//! Modules, bottom-up:
//! - [`efficiency`]: the S-shaped packet-success function and `γ*`.
//! - [`channel`]: seeded exponential path-gain realizations.
//! - [`game`]: SINR, utility, required power and the best response.
//! - [`dynamics`]: Jacobi, Gauss-Seidel and asynchronous best-response runs.
//! - [`analysis`]: Nash verification, equilibrium powers, 2×2 classification
//!   and the direction-preserving check.
//! - [`harness`]: Monte-Carlo batches and file output used by the CLI.

pub mod analysis;
pub mod channel;
pub mod dynamics;
pub mod efficiency;
mod error;
pub mod game;
pub mod harness;

pub use analysis::{
    check_lgdp, classify_2x2, equilibrium_powers, is_nash, Classification, EquilibriumStructure,
    Infeasible, LgdpReport,
};
pub use channel::{ChannelRealization, GENERATOR};
pub use dynamics::{run, run_with_rng, Scheme, Trajectory};
pub use efficiency::{EfficiencyFunction, GammaStar};
pub use error::{Error, Result};
pub use game::{best_response, BestResponse, GameConfig, PowerProfile};
pub use harness::{run_batch, BatchReport, BatchSpec};
