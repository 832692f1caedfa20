//! Smooth periodic modulation protocols.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("transitions overlap: 8·tau_tr = {need} exceeds the period {theta}")]
    Overlap { need: f64, theta: f64 },
    #[error("shift {tau} outside (−Θ/2, Θ/2) for Θ = {theta}")]
    ShiftRange { tau: f64, theta: f64 },
    #[error("invalid protocol: {0}")]
    Invalid(String),
}

/// `6x⁵ − 15x⁴ + 10x³` and its first two derivatives.
pub fn smoothstep(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let x2 = x * x;
    let x3 = x2 * x;
    (
        x3 * (10.0 + x * (-15.0 + 6.0 * x)),
        30.0 * x2 * (1.0 - x) * (1.0 - x),
        60.0 * x * (1.0 - x) * (1.0 - 2.0 * x),
    )
}

/// A periodic pulse: ramps up over `[start, start+ramp]`, holds at 1, ramps
/// down to reach 0 at `start+length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub start: f64,
    pub length: f64,
    pub ramp: f64,
}

impl Pulse {
    /// Value and first two time derivatives at `t` for period `theta`.
    pub fn eval(&self, t: f64, theta: f64) -> (f64, f64, f64) {
        let u = (t - self.start).rem_euclid(theta);
        if u >= self.length {
            return (0.0, 0.0, 0.0);
        }
        let r = self.ramp;
        if u < r {
            let (v, d, dd) = smoothstep(u / r);
            (v, d / r, dd / (r * r))
        } else if u > self.length - r {
            let (v, d, dd) = smoothstep((self.length - u) / r);
            (v, -d / r, dd / (r * r))
        } else {
            (1.0, 0.0, 0.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftTarget {
    Both,
    ColdOnly,
}

/// System modulation `f` and bath couplings `h_hot`, `h_cold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub theta: f64,
    pub tau_tr: f64,
    pub shift_hot: f64,
    pub shift_cold: f64,
    pub num_cycles: usize,
    pub f: Pulse,
    pub hot: Pulse,
    pub cold: Pulse,
}

impl Protocol {
    pub fn f(&self, t: f64) -> (f64, f64) {
        let (v, d, _) = self.f.eval(t, self.theta);
        (v, d)
    }
    pub fn h_hot(&self, t: f64) -> (f64, f64) {
        let (v, d, _) = self.hot.eval(t, self.theta);
        (v, d)
    }
    pub fn h_cold(&self, t: f64) -> (f64, f64) {
        let (v, d, _) = self.cold.eval(t, self.theta);
        (v, d)
    }
    pub fn horizon(&self) -> f64 {
        self.theta * self.num_cycles as f64
    }
}

fn layout(theta: f64, tau_tr: f64) -> (Pulse, Pulse, Pulse) {
    let r = tau_tr;
    let half = 0.5 * theta;
    (
        // compression [0, r], expansion [Θ/2, Θ/2 + r]
        Pulse {
            start: 0.0,
            length: half + r,
            ramp: r,
        },
        // hot contact between the two system ramps
        Pulse {
            start: r,
            length: half - r,
            ramp: r,
        },
        // cold contact in the second half
        Pulse {
            start: half + r,
            length: half - r,
            ramp: r,
        },
    )
}

/// Otto-like cycle: compression, hot contact, expansion, cold contact, each
/// transition a quintic smoothstep of duration `tau_tr`.
pub fn make_olc(theta: f64, tau_tr: f64) -> Result<Protocol, ProtocolError> {
    if !(theta > 0.0 && tau_tr > 0.0) {
        return Err(ProtocolError::Invalid(format!(
            "theta {theta} and tau_tr {tau_tr} must be positive"
        )));
    }
    if 8.0 * tau_tr > theta * (1.0 + 1e-12) {
        return Err(ProtocolError::Overlap {
            need: 8.0 * tau_tr,
            theta,
        });
    }
    let (f, hot, cold) = layout(theta, tau_tr);
    Ok(Protocol {
        theta,
        tau_tr,
        shift_hot: 0.0,
        shift_cold: 0.0,
        num_cycles: 3,
        f,
        hot,
        cold,
    })
}

/// Delays the selected bath couplings by `tau` (cyclically); `slow` doubles
/// every transition time while keeping the period.
pub fn make_shifted(
    base: &Protocol,
    tau: f64,
    which: ShiftTarget,
    slow: bool,
) -> Result<Protocol, ProtocolError> {
    if !(tau.abs() < 0.5 * base.theta) {
        return Err(ProtocolError::ShiftRange {
            tau,
            theta: base.theta,
        });
    }
    let tau_tr = if slow { 2.0 * base.tau_tr } else { base.tau_tr };
    if 2.0 * tau_tr >= 0.5 * base.theta - tau_tr {
        return Err(ProtocolError::Overlap {
            need: 6.0 * tau_tr,
            theta: base.theta,
        });
    }
    let (f, mut hot, mut cold) = layout(base.theta, tau_tr);
    let shift_hot = base.shift_hot + if which == ShiftTarget::Both { tau } else { 0.0 };
    let shift_cold = base.shift_cold + tau;
    hot.start += shift_hot;
    cold.start += shift_cold;
    Ok(Protocol {
        theta: base.theta,
        tau_tr,
        shift_hot,
        shift_cold,
        num_cycles: base.num_cycles,
        f,
        hot,
        cold,
    })
}
