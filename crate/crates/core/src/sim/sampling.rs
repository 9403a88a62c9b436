use core::f64::consts::{FRAC_PI_2, PI};
use libm::{cos, sin};
use rand::Rng;

use super::{BallState, BowlGeometry, InitialConditions, Scenario, SimulationConfig};
use super::dynamics::tangential_project;
use crate::error::Result;
use crate::math::{self, rotate_z};

/// Draws bowl geometry and the initial ball state for one run.
///
/// Elevation θ maps to the angle from the downward axis as `ψ = −θ − π/2`,
/// so θ = −π/2 is the bottom and θ = −9π/10 sits 72° up the wall.
pub fn sample_initial_conditions<R: Rng + ?Sized>(
    rng: &mut R,
    scenario: Scenario,
    config: &SimulationConfig,
) -> Result<(BowlGeometry, BallState, InitialConditions)> {
    let a = match scenario {
        Scenario::Bowl => 1.0,
        Scenario::Ellipse | Scenario::EllipseNoTexture => rng.random_range(0.5..=1.0),
    };
    let gamma = rng.random_range(-FRAC_PI_2..=FRAC_PI_2);
    let elevation = rng.random_range(-0.9 * PI..=-FRAC_PI_2);
    let azimuth = rng.random_range(-PI..=PI);
    let euler = [rng.random_range(-PI..=PI), rng.random_range(-PI..=PI), rng.random_range(-PI..=PI)];
    let mut vx: f64 = rng.random_range(5.0..=10.0);
    let mut vy: f64 = rng.random_range(5.0..=10.0);
    if rng.random_bool(0.5) {
        vx = -vx;
    }
    if rng.random_bool(0.5) {
        vy = -vy;
    }

    let geometry = BowlGeometry::new(a, gamma);
    let psi = -elevation - FRAC_PI_2;
    let local = [a * sin(psi) * cos(azimuth), sin(psi) * sin(azimuth), 1.0 - cos(psi)];
    let surface = rotate_z(local, gamma);
    let (center, n) = geometry.offset_foot(surface, config.radius)?;
    let velocity = tangential_project([vx, vy, 0.0], n);
    let angular_velocity = math::scale(math::cross(n, velocity), 1.0 / config.radius);
    let state = BallState { center, velocity, orientation: math::euler_xyz(euler), angular_velocity };
    Ok((geometry, state, InitialConditions { elevation, azimuth, euler, vx, vy }))
}
