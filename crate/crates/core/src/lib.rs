//! Numerical laboratory for energy decay of damped abstract wave equations
//! `u'' + b(t) u' + A u = 0`.

pub mod analysis;
pub mod cli;
pub mod damping;
pub mod modeode;
pub mod ode;
pub mod oscint;
pub mod resonance;
pub mod spectral;
