//! Closed-form Kepler orbits (`U = 1/r`, unit mass parameter) used as
//! oracles by the integration and acceptance tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use anisokepler::dynamics::State;
use anisokepler::PotentialParams;

/// A hyperbolic Kepler orbit with a time origin at a chosen point.
#[derive(Debug, Clone)]
pub struct Hyperbola {
    pub e: f64,
    /// Semi-major axis magnitude `1/(2h)`.
    pub a: f64,
    /// Periapsis angle.
    pub omega: f64,
    /// +1 for counter-clockwise motion, −1 for clockwise.
    pub sense: f64,
    /// Mean anomaly at `t = 0`.
    pub m0: f64,
}

fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

impl Hyperbola {
    fn mean_motion(&self) -> f64 {
        self.a.powf(-1.5)
    }

    pub fn periapsis(&self) -> f64 {
        self.a * (self.e - 1.0)
    }

    /// Position `t` time units after the reference point.
    pub fn position(&self, t: f64) -> [f64; 2] {
        let m = self.m0 + self.mean_motion() * t;
        let e = self.e;
        let mut hh = (m / e).asinh();
        for _ in 0..100 {
            let f = e * hh.sinh() - hh - m;
            let step = f / (e * hh.cosh() - 1.0);
            hh -= step;
            if step.abs() < 1e-15 * (1.0 + hh.abs()) {
                break;
            }
        }
        let x = self.a * (e - hh.cosh());
        let y = self.a * (e * e - 1.0).sqrt() * hh.sinh() * self.sense;
        let (c, s) = (self.omega.cos(), self.omega.sin());
        [c * x - s * y, s * x + c * y]
    }

    /// Orbit from a true anomaly at the reference point.
    fn from_anomaly(e: f64, a: f64, omega: f64, sense: f64, nu0: f64) -> Self {
        let th = ((e - 1.0) / (e + 1.0)).sqrt() * (0.5 * nu0).tan();
        let h0 = 2.0 * th.atanh();
        Hyperbola { e, a, omega, sense, m0: e * h0.sinh() - h0 }
    }
}

/// Energy-`h` hyperbolae through `x0` whose outgoing asymptote points along
/// angle `theta_inf`, moving with the given sense. Returns every solution.
pub fn hyperbolae_through(x0: [f64; 2], theta_inf: f64, h: f64, sense: f64) -> Vec<Hyperbola> {
    let a = 1.0 / (2.0 * h);
    let r0 = x0[0].hypot(x0[1]);
    // work in the frame where the motion is counter-clockwise
    let phi0 = sense * x0[1].atan2(x0[0]);
    let tinf = sense * theta_inf;
    let nu_inf = |e: f64| (-1.0 / e).acos();
    let resid = |e: f64| {
        let omega = tinf - nu_inf(e);
        let nu0 = wrap(phi0 - omega);
        a * (e * e - 1.0) - r0 * (1.0 + e * nu0.cos())
    };
    let mut out = Vec::new();
    let grid: Vec<f64> = (0..=4000).map(|k| 1.0 + 1e-6 * (1e9f64).powf(k as f64 / 4000.0)).collect();
    for w in grid.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (flo, fhi) = (resid(lo), resid(hi));
        if flo.signum() == fhi.signum() {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if resid(mid).signum() == flo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let e = 0.5 * (lo + hi);
        let omega = tinf - nu_inf(e);
        let nu0 = wrap(phi0 - omega);
        // the point must lie on the branch before the asymptote
        if nu0.abs() < nu_inf(e) && resid(e).abs() < 1e-8 * (1.0 + r0) {
            out.push(Hyperbola::from_anomaly(e, a, sense * omega, sense, nu0));
        }
    }
    out
}

/// Eccentricity of the symmetric energy-`h` orbit through two points at
/// radius `r` separated by the angle `dtheta` (`π < dtheta < 2π`).
pub fn symmetric_stage_e(r: f64, dtheta: f64, h: f64) -> f64 {
    let a = 1.0 / (2.0 * h);
    let c = (0.5 * dtheta).cos();
    assert!(c < 0.0);
    let f = |e: f64| a * (e * e - 1.0) - r * (1.0 + e * c);
    let (mut lo, mut hi) = (1.0 + 1e-15, -1.0 / c);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Jacobi length `∫_{r1}^{r2} √(2h + 2/r) dr` of a radial segment.
pub fn radial_jacobi_length(r1: f64, r2: f64, h: f64) -> f64 {
    // √(2h)·∫√(1 + c/r) dr with c = 1/h
    let c = 1.0 / h;
    let prim = |r: f64| (r * (r + c)).sqrt() + c * (r.sqrt() + (r + c).sqrt()).ln();
    (2.0 * h).sqrt() * (prim(r2) - prim(r1))
}

/// State at `x` moving along `dir` with the speed that gives energy `h`.
pub fn state_with_energy(params: &PotentialParams, x: &[f64], dir: &[f64], h: f64) -> State {
    let speed = (2.0 * (h + params.value(x))).sqrt();
    let n = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
    State::new(0.0, x.to_vec(), dir.iter().map(|c| c * speed / n).collect())
}

/// Distance between two angles modulo 2π.
pub fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}
