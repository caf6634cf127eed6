//! Time-grid grading. Nodes are placed so that a blend of the logarithmic
//! arclength `∫ |dx|/r` and plain time is equidistributed, which resolves the
//! periapsis passage and the long, nearly straight escape legs with a single
//! node budget.

use crate::vecops::norm;

/// Fraction of the node budget spread uniformly in time.
pub const UNIFORM_SHARE: f64 = 0.3;

fn seg_radius(a: &[f64], b: &[f64]) -> f64 {
    let d = a.len();
    let mut ab = 0.0;
    let mut bb = 0.0;
    for i in 0..d {
        let dx = b[i] - a[i];
        ab += a[i] * dx;
        bb += dx * dx;
    }
    let u = if bb > 0.0 { (-ab / bb).clamp(0.0, 1.0) } else { 0.0 };
    let closest: f64 = (0..d).map(|i| (a[i] + u * (b[i] - a[i])).powi(2)).sum::<f64>().sqrt();
    // Mean of closest approach and endpoint average keeps the monitor smooth.
    0.5 * closest + 0.25 * (norm(a) + norm(b))
}

/// Redistributes `n + 1` nodes along the polyline `(times, points)`.
///
/// Returns the new times (same endpoints) and linearly interpolated points.
pub fn grade(times: &[f64], points: &[Vec<f64>], n: usize, uniform_share: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = times.len() - 1;
    let rmax = points.iter().map(|p| norm(p)).fold(0.0, f64::max);
    let floor = 1e-9 * rmax.max(1e-300);
    let mut mon: Vec<f64> = (0..m)
        .map(|k| {
            let (a, b) = (&points[k], &points[k + 1]);
            let dl = crate::vecops::dist(a, b);
            dl / seg_radius(a, b).max(floor)
        })
        .collect();
    // light smoothing so that isolated kinks do not starve neighbours
    if m > 2 {
        let orig = mon.clone();
        for k in 1..m - 1 {
            mon[k] = 0.25 * orig[k - 1] + 0.5 * orig[k] + 0.25 * orig[k + 1];
        }
    }
    let span = times[m] - times[0];
    let total_log: f64 = mon.iter().sum();
    let share = uniform_share.clamp(0.0, 0.999);
    let c = if total_log > 0.0 { share / (1.0 - share) * total_log } else { 1.0 };
    let mut cum = vec![0.0; m + 1];
    for k in 0..m {
        cum[k + 1] = cum[k] + mon[k] + c * (times[k + 1] - times[k]) / span;
    }
    let total = cum[m];
    let mut new_t = Vec::with_capacity(n + 1);
    let mut new_p = Vec::with_capacity(n + 1);
    let mut k = 0;
    for j in 0..=n {
        let level = total * j as f64 / n as f64;
        while k + 1 < m && cum[k + 1] < level {
            k += 1;
        }
        let w = if cum[k + 1] > cum[k] { ((level - cum[k]) / (cum[k + 1] - cum[k])).clamp(0.0, 1.0) } else { 0.0 };
        let t = if j == 0 {
            times[0]
        } else if j == n {
            times[m]
        } else {
            times[k] + w * (times[k + 1] - times[k])
        };
        let p = if j == 0 {
            points[0].clone()
        } else if j == n {
            points[m].clone()
        } else {
            crate::vecops::lerp(&points[k], &points[k + 1], w)
        };
        new_t.push(t);
        new_p.push(p);
    }
    // Guard against coincident times from degenerate monitors.
    for j in 1..=n {
        if new_t[j] <= new_t[j - 1] {
            new_t[j] = new_t[j - 1] + 1e-12 * span;
        }
    }
    if new_t[n] > times[m] {
        let scale = span / (new_t[n] - times[0]);
        for t in new_t.iter_mut() {
            *t = times[0] + (*t - times[0]) * scale;
        }
    }
    (new_t, new_p)
}

/// Times for a curve sampled densely at `points`, moving at constant speed.
pub fn constant_speed_times(points: &[Vec<f64>], speed: f64) -> Vec<f64> {
    let mut t = vec![0.0];
    for w in points.windows(2) {
        let dl = crate::vecops::dist(&w[0], &w[1]).max(1e-12);
        t.push(t.last().unwrap() + dl / speed);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grading_concentrates_near_origin() {
        // straight line x = 1e-2 from y = -100 to 100
        let times: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.1).collect();
        let pts: Vec<Vec<f64>> = times.iter().map(|t| vec![1e-2, t - 100.0]).collect();
        let (t, p) = grade(&times, &pts, 200, UNIFORM_SHARE);
        assert_eq!(t.len(), 201);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[200], 200.0);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        let near = p.iter().filter(|q| norm(q) < 1.0).count();
        assert!(near > 30, "{near}");
    }
}
