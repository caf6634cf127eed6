//! Invariants checked over randomly drawn parameters.

use anisokepler::blowup;
use anisokepler::paths::{self, Path};
use anisokepler::PotentialParams;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = PotentialParams> {
    (0.1f64..1.9, 0.5f64..3.0).prop_map(|(a, w)| PotentialParams::gutzwiller(a, &[1.0, w]).unwrap())
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    (0.2f64..3.0, 0.0f64..std::f64::consts::TAU).prop_map(|(r, t)| vec![r * t.cos(), r * t.sin()])
}

/// A wiggly path that stays in the annulus `0.5 ≤ |x| ≤ 2.5`.
fn path() -> impl Strategy<Value = Path> {
    (prop::collection::vec((0.5f64..2.5, -0.4f64..0.4), 3..12), 0.5f64..4.0).prop_map(|(pts, dur)| {
        let mut theta = 0.0;
        let points: Vec<Vec<f64>> = pts
            .iter()
            .map(|(r, dt)| {
                theta += dt;
                vec![r * theta.cos(), r * theta.sin()]
            })
            .collect();
        Path::from_points(Path::uniform_times(0.0, dur, points.len() - 1), &points).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn potential_is_homogeneous(p in params(), x in point(), lambda in 0.1f64..10.0) {
        let lx: Vec<f64> = x.iter().map(|c| lambda * c).collect();
        let lhs = p.value(&lx);
        let rhs = lambda.powf(-p.alpha()) * p.value(&x);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
    }

    #[test]
    fn euler_identity(p in params(), x in point()) {
        let g = p.grad_u(&x).unwrap();
        let xg: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum();
        let u = p.value(&x);
        prop_assert!((xg + p.alpha() * u).abs() <= 1e-11 * u);
    }

    #[test]
    fn blow_up_scales_the_action(p in params(), path in path(), lambda in 0.2f64..5.0) {
        let a0 = paths::action(&p, &path).unwrap();
        let a1 = paths::action(&p, &blowup::blow_up(&path, lambda, p.alpha()).unwrap()).unwrap();
        let expected = lambda.powf(blowup::action_scaling_exponent(p.alpha())) * a0;
        prop_assert!((a1 - expected).abs() <= 1e-10 * expected);
    }

    #[test]
    fn time_rescaling_scales_kinetic_and_potential_parts(p in params(), path in path(), delta in 0.2f64..5.0) {
        let stretched = paths::rescale_time(&path, delta).unwrap();
        let (k0, k1) = (path.kinetic(1.0), stretched.kinetic(1.0));
        prop_assert!((k1 - k0 / delta).abs() <= 1e-10 * k0);
        let pot0 = paths::action(&p, &path).unwrap() - k0;
        let pot1 = paths::action(&p, &stretched).unwrap() - k1;
        prop_assert!((pot1 - delta * pot0).abs() <= 1e-10 * pot0);
    }

    #[test]
    fn csv_roundtrip_is_exact(path in path()) {
        let back = paths::from_csv(&paths::to_csv(&path)).unwrap();
        prop_assert_eq!(back.times(), path.times());
        prop_assert_eq!(back.flat_nodes(), path.flat_nodes());
    }

    #[test]
    fn winding_is_additive_and_odd(a in path(), b in path()) {
        let shifted = b.shift_time(a.t_end() - b.t_start());
        // start b where a ends so the concatenation is continuous
        let b = shifted.with_nodes(rotate_to(&shifted, a.end())).unwrap();
        let joined = a.concat(&b).unwrap();
        let (wa, wb) = (paths::winding_lift(&a).unwrap().delta(), paths::winding_lift(&b).unwrap().delta());
        let wj = paths::winding_lift(&joined).unwrap().delta();
        prop_assert!((wj - wa - wb).abs() <= 1e-12);
        let rev = paths::winding_lift(&joined.reversed()).unwrap().delta();
        prop_assert!((rev + wj).abs() <= 1e-12);
        let cls = paths::winding_lift(&a).unwrap();
        prop_assert!(paths::in_class(&a, cls.theta_minus, cls.theta_plus, 1e-12).unwrap());
    }
}

/// Nodes of `p` rotated and scaled so that its first node equals `target`.
fn rotate_to(p: &Path, target: &[f64]) -> Vec<f64> {
    let s = p.start();
    let (rs, rt) = (s[0].hypot(s[1]), target[0].hypot(target[1]));
    let ang = target[1].atan2(target[0]) - s[1].atan2(s[0]);
    let (c, sn) = (ang.cos(), ang.sin());
    let k = rt / rs;
    p.points()
        .iter()
        .flat_map(|x| [k * (c * x[0] - sn * x[1]), k * (sn * x[0] + c * x[1])])
        .collect()
}
