//! Hierarchy of pure states (HOPS) for multi-bath open quantum systems, with
//! bath energy observables and a qubit Otto engine built on top.

pub mod bath;
pub mod ensemble;
pub mod hierarchy;
pub mod numerics;
pub mod observables;
pub mod oracle;
pub mod otto;
pub mod propagator;
pub mod stochproc;

pub use num_complex::Complex64;

pub(crate) fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}
