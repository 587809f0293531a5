//! Chirikov standard map (kicked rotor) on the 2-torus, plus the sine/cosine
//! observable used to feed map states to the reservoir.
//!
//! ```text
//! theta' = (theta + p)          mod 2 pi
//! p'     = (p + K sin theta')   mod 2 pi
//! ```
//!
//! The kick uses `K sin theta'`, the force that follows from the kicked-rotor
//! Hamiltonian. `MapVariant::LiteralEq9` instead applies `K theta'`, kept
//! only as a comparison switch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapState {
    /// Angle in [0, 2 pi).
    pub theta: f64,
    /// Momentum in [0, 2 pi).
    pub p: f64,
}

/// Which kick law to iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapVariant {
    /// p' = p + K sin(theta') — the standard map.
    #[default]
    Sine,
    /// p' = p + K theta' — comparison-only variant.
    LiteralEq9,
}

#[inline]
pub fn wrap_2pi(x: f64) -> f64 {
    let r = x.rem_euclid(TWO_PI);
    // rem_euclid can return exactly 2 pi after rounding.
    if r >= TWO_PI {
        r - TWO_PI
    } else {
        r
    }
}

impl MapState {
    pub fn new(theta: f64, p: f64) -> Self {
        Self {
            theta: wrap_2pi(theta),
            p: wrap_2pi(p),
        }
    }
}

/// One iteration of the map with kicking strength `k`.
pub fn step(s: &MapState, k: f64, variant: MapVariant) -> MapState {
    let theta = wrap_2pi(s.theta + s.p);
    let kick = match variant {
        MapVariant::Sine => k * theta.sin(),
        MapVariant::LiteralEq9 => k * theta,
    };
    MapState {
        theta,
        p: wrap_2pi(s.p + kick),
    }
}

/// Iterates `n` times from (theta0, p0), returning the visited states
/// (initial state excluded).
pub fn orbit(theta0: f64, p0: f64, k: f64, n: usize, variant: MapVariant) -> Vec<MapState> {
    let mut out = Vec::with_capacity(n);
    let mut s = MapState::new(theta0, p0);
    for _ in 0..n {
        s = step(&s, k, variant);
        out.push(s);
    }
    out
}

/// Observable fed to the reservoir: [sin theta, sin p, cos theta, cos p].
pub fn encode(s: &MapState) -> [f64; 4] {
    [s.theta.sin(), s.p.sin(), s.theta.cos(), s.p.cos()]
}

/// Inverse of `encode` via the two-argument arctangent; accepts vectors off
/// the unit circle (closed-loop predictions drift). Errors on an exactly
/// zero (sin, cos) pair, where the angle is undetermined.
pub fn decode(o: &[f64; 4]) -> Result<MapState> {
    let angle = |s: f64, c: f64| -> Result<f64> {
        if s == 0.0 && c == 0.0 {
            return Err(Error::UndeterminedAngle);
        }
        Ok(wrap_2pi(s.atan2(c)))
    };
    Ok(MapState {
        theta: angle(o[0], o[2])?,
        p: angle(o[1], o[3])?,
    })
}

/// Minimal-image angular difference in (-pi, pi].
#[inline]
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let mut d = (a - b).rem_euclid(TWO_PI);
    if d > std::f64::consts::PI {
        d -= TWO_PI;
    }
    d
}

/// Torus distance between two map states.
pub fn torus_distance(a: &MapState, b: &MapState) -> f64 {
    let dt = angle_diff(a.theta, b.theta);
    let dp = angle_diff(a.p, b.p);
    (dt * dt + dp * dp).sqrt()
}

/// Largest Lyapunov exponent of the map at `(theta0, p0)` by the Benettin
/// method (one renormalization per iteration, torus metric).
pub fn lyapunov(theta0: f64, p0: f64, k: f64, iterations: usize, variant: MapVariant) -> f64 {
    use crate::models::benettin::{benettin_exponent, BenettinSettings};
    let settings = BenettinSettings {
        d0: 1e-9,
        renorm_time: 1.0,
        discard: 50,
    };
    let a = MapState::new(theta0, p0);
    let b = MapState::new(theta0 + settings.d0, p0);
    benettin_exponent(
        a,
        b,
        iterations,
        &settings,
        |s: &mut MapState| *s = step(s, k, variant),
        torus_distance,
        |a: &MapState, b: &MapState, s: f64| MapState {
            theta: wrap_2pi(a.theta + angle_diff(b.theta, a.theta) * s),
            p: wrap_2pi(a.p + angle_diff(b.p, a.p) * s),
        },
    )
}
