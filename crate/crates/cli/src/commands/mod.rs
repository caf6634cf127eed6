pub mod collision;
pub mod integrate;
pub mod minimize;
pub mod potential;
pub mod scatter;
pub mod verify;

use anisokepler::minimize::MinimizeResult;
use anisokepler::numfmt::g17;

use crate::output::KeyValues;

/// Machine-readable fields of a minimisation result.
pub(crate) fn put_result(kv: &mut KeyValues, prefix: &str, r: &MinimizeResult) {
    let key = |k: &str| format!("{prefix}{k}");
    kv.put(&key("value"), g17(r.value))
        .put(&key("duration"), g17(r.duration()))
        .put(&key("t_start"), g17(r.path.t_start()))
        .put(&key("t_end"), g17(r.path.t_end()));
    if let Some(e) = r.energy_of_path {
        kv.put(&key("energy"), g17(e));
    }
    kv.put(&key("energy_spread"), g17(r.energy_spread))
        .put(&key("grad_norm"), g17(r.grad_norm))
        .put(&key("el_residual"), g17(r.el_residual))
        .put(&key("min_radius"), g17(r.min_radius))
        .put(&key("collision_suspect"), r.collision_suspect)
        .put(&key("converged"), r.converged)
        .put(&key("iterations"), r.iterations)
        .put(&key("restart"), r.restart_index);
    if let Some(c) = &r.class {
        kv.put(&key("theta_minus"), g17(c.theta_minus)).put(&key("theta_plus"), g17(c.theta_plus));
    }
}

pub(crate) fn vec17(v: &[f64]) -> String {
    v.iter().map(|x| g17(*x)).collect::<Vec<_>>().join(",")
}
