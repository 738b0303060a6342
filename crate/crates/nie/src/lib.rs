//! Steady-state density-matrix responses of driven multilevel gases.
//!
//! The crate models three- and four-level schemes driven by up to four
//! quasi-resonant fields and computes absorption/gain indices, saturated
//! populations and four-wave-mixing susceptibilities, both per velocity
//! class and averaged over the Maxwell distribution.
//!
//! Layout:
//! - [`model`]: level schemes, relaxation constants, fields, validation.
//! - [`two_field`]: closed-form probe + auxiliary-field responses for the
//!   V, Lambda and cascade schemes (open and closed configurations).
//! - [`fwm`]: four-level Raman-type mixing — perturbative, trapped-population
//!   and two-strong-field regimes.
//! - [`doppler`]: Maxwell-velocity averaging (Gauss-Hermite / trapezoid).
//! - [`oracle`]: independent brute-force steady-state solver used to verify
//!   every closed form.
//! - [`scenarios`]: named parameter presets and scan recipes.

pub mod doppler;
pub mod error;
pub mod fwm;
pub mod model;
pub mod oracle;
pub mod scenarios;
pub mod two_field;

pub use error::{NieError, Result};
