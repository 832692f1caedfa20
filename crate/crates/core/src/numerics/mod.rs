//! Numerical building blocks shared by the physics modules.

pub mod chebyshev;
pub mod lsq;
pub mod ode;
pub mod quad;
