//! Hybrid analog-digital beamforming for downlink multiuser, multicarrier
//! massive MIMO.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: Rayleigh and geometric (ULA) multipath channels and their
//!   per-sub-carrier frequency responses.
//! - [`zf`]: zero-forcing precoding, equal-power and water-filling power
//!   allocation, and SINR-based rate evaluation.
//! - [`hybrid`]: exact factorization of a stacked digital precoder into an
//!   analog matrix realizable with pairs of phase shifters and per-sub-carrier
//!   baseband precoders.
//! - [`cpps`]: realization of that analog matrix from a fixed bank of
//!   constant-phase phase-shifter pairs and binary switch matrices.
//! - [`scheduler`]: greedy user scheduling and sub-carrier allocation under an
//!   RF-chain rank constraint, for antenna-selection, hybrid and fully digital
//!   beamforming.
//! - [`bounds`]: analytical average-rate upper bounds built on the expected
//!   maximum of chi-square variables.
//! - [`harness`]: Monte Carlo experiments, sweeps and CSV/JSON output.

pub mod bounds;
pub mod channel;
pub mod cpps;
pub mod error;
pub mod harness;
pub mod hybrid;
pub mod linalg;
pub mod scheduler;
pub mod zf;

pub use error::{ConfigError, Error, Result};
pub use linalg::{CMatrix, CVector};
pub use num_complex::Complex64;
