//! Ball rolling inside a rotated ellipsoidal bowl.
//!
//! The bowl is the lower half of `x'²/a² + y'² + (z'-1)² = 1` in a frame
//! rotated by `γ` about z. The ball center is constrained to the offset
//! surface at inward distance `ρ`; spin is attached kinematically through the
//! rolling identity `ω = (n̂ × v)/ρ`.

mod camera;
mod dynamics;
mod sampling;
mod surface;

pub use camera::{orthographic_project, pixel_to_world, world_to_pixel};
pub use dynamics::{mechanical_energy, simulate_step, simulate_trajectory, tangential_project};
pub use sampling::sample_initial_conditions;
pub use surface::BowlGeometry;

use alloc::vec::Vec;

use crate::math::{Mat3, Vec3};

/// Which experimental family a sequence belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    /// Hemispherical bowl (`a = 1`), textured ball.
    Bowl,
    /// Ellipsoidal bowl with sampled `a`, textured ball.
    Ellipse,
    /// Ellipsoidal bowl with a plain white ball.
    EllipseNoTexture,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Bowl, Scenario::Ellipse, Scenario::EllipseNoTexture];

    pub fn textured_ball(self) -> bool {
        !matches!(self, Scenario::EllipseNoTexture)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Bowl => "bowl",
            Scenario::Ellipse => "ellipse",
            Scenario::EllipseNoTexture => "ellipse-notexture",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(s))
    }
}

/// Fixed physical constants of the simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    /// Ball radius ρ.
    pub radius: f64,
    /// Gravity magnitude along −z.
    pub gravity: f64,
    /// Per-second velocity loss: speed is multiplied by `(1-d)^dt` each substep.
    pub damping: f64,
    /// Internal step (1/120 s).
    pub dt: f64,
    /// Substeps per emitted frame (3 ⇒ 40 fps).
    pub emit_every: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { radius: 0.04, gravity: 9.81, damping: 0.1, dt: 1.0 / 120.0, emit_every: 3 }
    }
}

impl SimulationConfig {
    /// Seconds between emitted frames.
    pub fn frame_interval(&self) -> f64 {
        self.dt * self.emit_every as f64
    }
}

/// Full rigid state of the ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallState {
    pub center: Vec3,
    pub velocity: Vec3,
    /// Body-to-world rotation.
    pub orientation: Mat3,
    pub angular_velocity: Vec3,
}

/// Sampled quantities that define a run, kept for the dataset manifest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialConditions {
    /// Elevation θ ∈ [−9π/10, −π/2].
    pub elevation: f64,
    /// Azimuth φ ∈ [−π, π].
    pub azimuth: f64,
    /// Intrinsic xyz Euler angles of the initial orientation.
    pub euler: Vec3,
    /// Signed velocity components before tangential projection.
    pub vx: f64,
    pub vy: f64,
}

/// Emitted ground truth at 40 fps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub geometry: BowlGeometry,
    pub initial: InitialConditions,
    pub times: Vec<f64>,
    pub centers: Vec<Vec3>,
    /// Orthographic screen coordinates (world units).
    pub screen: Vec<[f64; 2]>,
    pub velocities: Vec<Vec3>,
    pub angular_velocities: Vec<Vec3>,
    pub orientations: Vec<Mat3>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> BallState {
        BallState {
            center: self.centers[i],
            velocity: self.velocities[i],
            orientation: self.orientations[i],
            angular_velocity: self.angular_velocities[i],
        }
    }

    /// Screen positions mapped to continuous pixel coordinates.
    pub fn pixel_positions(&self, resolution: usize, half_extent: f64) -> Vec<[f64; 2]> {
        self.screen.iter().map(|&p| world_to_pixel(p, resolution, half_extent)).collect()
    }
}
