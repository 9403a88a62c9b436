use alloc::vec::Vec;
use libm::pow;

use super::surface::safe_sqrt;
use super::{orthographic_project, BallState, BowlGeometry, InitialConditions, SimulationConfig, Trajectory};
use crate::error::{Error, Result};
use crate::math::{self, Vec3};

/// Removes the component of `v` along the unit normal `n`.
#[inline]
pub fn tangential_project(v: Vec3, n: Vec3) -> Vec3 {
    math::sub(v, math::scale(n, math::dot(v, n)))
}

/// `½‖v‖² + g·c_z` for a unit-mass ball.
pub fn mechanical_energy(state: &BallState, config: &SimulationConfig) -> f64 {
    0.5 * math::dot(state.velocity, state.velocity) + config.gravity * state.center[2]
}

/// Advances the ball by one internal step of `config.dt`.
///
/// Semi-implicit Euler on the offset surface: gravity, tangential projection,
/// damping, position update, projection back onto the constraint. The new
/// direction is the stepped velocity re-projected onto the tangent plane at
/// the new center; its magnitude comes from the energy balance
/// `½v'² + g·z' = ½(r·v)² + g·z` with `r = (1-d)^dt`, so an undamped ball
/// conserves mechanical energy to rounding.
pub fn simulate_step(state: &BallState, geometry: &BowlGeometry, config: &SimulationConfig) -> Result<BallState> {
    let dt = config.dt;
    let rho = config.radius;
    let n0 = geometry.contact_normal(state.center)?;
    let mut v = math::add(state.velocity, [0.0, 0.0, -config.gravity * dt]);
    v = tangential_project(v, n0);
    let retain = pow(1.0 - config.damping, dt);
    v = math::scale(v, retain);

    let (center, n1) = geometry.offset_foot(math::add(state.center, math::scale(v, dt)), rho)?;
    let speed_sq = retain * retain * math::dot(state.velocity, state.velocity)
        + 2.0 * config.gravity * (state.center[2] - center[2]);
    let velocity = match math::normalize(tangential_project(v, n1)) {
        Some(dir) => math::scale(dir, safe_sqrt(speed_sq)),
        None => [0.0; 3],
    };
    let angular_velocity = math::scale(math::cross(n1, velocity), 1.0 / rho);
    let orientation = math::mat_mul(&math::axis_angle(math::scale(angular_velocity, dt)), &state.orientation);
    let next = BallState { center, velocity, orientation, angular_velocity };
    if !(next.center.iter().chain(&next.velocity).all(|v| v.is_finite())) {
        return Err(Error::NonFinite("simulate_step"));
    }
    Ok(next)
}

/// Runs the simulator at `1/dt` Hz and emits every `emit_every`-th state.
pub fn simulate_trajectory(
    init: &BallState,
    geometry: &BowlGeometry,
    initial: &InitialConditions,
    config: &SimulationConfig,
    n_frames: usize,
) -> Result<Trajectory> {
    if n_frames == 0 {
        return Err(Error::Invalid("trajectory needs at least one frame".into()));
    }
    let mut traj = Trajectory {
        geometry: *geometry,
        initial: *initial,
        times: Vec::with_capacity(n_frames),
        centers: Vec::with_capacity(n_frames),
        screen: Vec::with_capacity(n_frames),
        velocities: Vec::with_capacity(n_frames),
        angular_velocities: Vec::with_capacity(n_frames),
        orientations: Vec::with_capacity(n_frames),
    };
    let mut state = *init;
    for frame in 0..n_frames {
        if frame > 0 {
            for _ in 0..config.emit_every {
                state = simulate_step(&state, geometry, config)?;
            }
        }
        traj.times.push(frame as f64 * config.frame_interval());
        traj.centers.push(state.center);
        traj.screen.push(orthographic_project(state.center));
        traj.velocities.push(state.velocity);
        traj.angular_velocities.push(state.angular_velocity);
        traj.orientations.push(state.orientation);
    }
    Ok(traj)
}
