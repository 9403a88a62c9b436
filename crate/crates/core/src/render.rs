//! Orthographic raycaster for the observation frames.
//!
//! Rays travel along −z. The scene is a checkerboard bowl (lower half of the
//! ellipsoid only) and a ball that is either white or painted with one color
//! per body-frame octant. Shading is ambient only.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};
use libm::{acos, atan2, floor, round, sqrt};

use crate::error::{Error, Result};
use crate::math::{self, rotate_z, Vec3};
use crate::sim::{pixel_to_world, BallState, BowlGeometry, Trajectory};

/// Row-major `height × width × 3` intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn black(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height * 3] }
    }

    pub fn pixel(&self, col: usize, row: usize) -> [f64; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// 8-bit storage form: `round(255·v)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| round(255.0 * v.clamp(0.0, 1.0)) as u8).collect()
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(Error::Invalid(alloc::format!(
                "expected {} bytes for a {width}×{height} RGB image, got {}",
                width * height * 3,
                bytes.len()
            )));
        }
        Ok(Self { width, height, data: bytes.iter().map(|&b| f64::from(b) / 255.0).collect() })
    }

    /// The image as it reads back from 8-bit storage.
    pub fn quantized(&self) -> Self {
        Self::from_bytes(self.width, self.height, &self.to_bytes()).expect("same dimensions")
    }
}

/// Rendered observations for one sub-sequence.
pub type FrameSequence = Vec<Image>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    /// Square output size W = H.
    pub resolution: usize,
    /// Half-width E of the world window `[-E, E]²`.
    pub half_extent: f64,
    /// Ambient light energy; every lit pixel is `ambient × albedo`.
    pub ambient: f64,
    pub ball_textured: bool,
    pub bowl_azimuth_bands: usize,
    pub bowl_elevation_bands: usize,
    pub bowl_tones: (f64, f64),
    /// Camera height above the origin. Unused under orthography.
    pub camera_height: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            resolution: 64,
            half_extent: 1.1,
            ambient: 0.7,
            ball_textured: true,
            bowl_azimuth_bands: 8,
            bowl_elevation_bands: 4,
            bowl_tones: (0.15, 0.95),
            camera_height: 3.0,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self, radius: f64) -> Result<()> {
        if self.resolution < 2 || self.half_extent < 1.0 + radius || !(self.ambient > 0.0) {
            return Err(Error::Invalid(alloc::format!("render config cannot contain the bowl: {self:?}")));
        }
        Ok(())
    }
}

/// What a downward ray meets first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hit {
    Background,
    Ball { point: Vec3 },
    /// `psi` is the angle from the downward axis and `phi` the azimuth, both
    /// in the unrotated bowl frame.
    Bowl { point: Vec3, psi: f64, phi: f64 },
}

/// Casts the ray through world `(x, y)` straight down.
pub fn ray_intersections(xy: [f64; 2], geometry: &BowlGeometry, ball: &BallState, radius: f64) -> Hit {
    let c = ball.center;
    let (dx, dy) = (xy[0] - c[0], xy[1] - c[1]);
    let r2 = dx * dx + dy * dy;
    let ball_z = (r2 <= radius * radius).then(|| c[2] + sqrt(radius * radius - r2));

    let local = rotate_z([xy[0], xy[1], 0.0], -geometry.gamma);
    let u = local[0] / geometry.a;
    let disc = 1.0 - u * u - local[1] * local[1];
    let bowl = (disc >= 0.0).then(|| {
        let zc = -sqrt(disc);
        let psi = acos(-zc.clamp(-1.0, 1.0));
        let phi = atan2(local[1], u);
        (1.0 + zc, psi, phi)
    });

    match (ball_z, bowl) {
        (Some(bz), Some((wz, _, _))) if bz > wz => Hit::Ball { point: [xy[0], xy[1], bz] },
        (Some(bz), None) => Hit::Ball { point: [xy[0], xy[1], bz] },
        (_, Some((wz, psi, phi))) => Hit::Bowl { point: [xy[0], xy[1], wz], psi, phi },
        (None, None) => Hit::Background,
    }
}

/// Colors painted on the eight body-frame octants of a textured ball.
pub const OCTANT_COLORS: [[f64; 3]; 8] = [
    [0.9, 0.1, 0.1],
    [0.1, 0.8, 0.1],
    [0.1, 0.2, 0.9],
    [0.95, 0.9, 0.1],
    [0.9, 0.1, 0.85],
    [0.1, 0.85, 0.9],
    [1.0, 0.5, 0.0],
    [0.5, 0.1, 0.6],
];

/// Octant index of a body-frame vector: bit 0 ↔ x > 0, bit 1 ↔ y > 0, bit 2 ↔ z > 0.
pub fn octant(body: Vec3) -> usize {
    usize::from(body[0] > 0.0) | (usize::from(body[1] > 0.0) << 1) | (usize::from(body[2] > 0.0) << 2)
}

pub fn surface_albedo(hit: &Hit, ball: &BallState, config: &RenderConfig) -> Result<[f64; 3]> {
    match *hit {
        Hit::Background => Err(Error::Invalid("background has no albedo".into())),
        Hit::Ball { point } => {
            if !config.ball_textured {
                return Ok([1.0; 3]);
            }
            let body = math::mat_t_vec(&ball.orientation, math::sub(point, ball.center));
            Ok(OCTANT_COLORS[octant(body)])
        }
        Hit::Bowl { psi, phi, .. } => {
            let band = |x: f64, bands: usize| (floor(x * bands as f64) as i64).clamp(0, bands as i64 - 1);
            let a = band((phi + PI) / (2.0 * PI), config.bowl_azimuth_bands);
            let e = band(psi / FRAC_PI_2, config.bowl_elevation_bands);
            let tone = if (a + e) % 2 == 0 { config.bowl_tones.1 } else { config.bowl_tones.0 };
            Ok([tone; 3])
        }
    }
}

/// World coordinates of the center of pixel `(col, row)`.
pub fn pixel_center(col: usize, row: usize, config: &RenderConfig) -> [f64; 2] {
    pixel_to_world([col as f64 + 0.5, row as f64 + 0.5], config.resolution, config.half_extent)
}

pub fn render_frame(geometry: &BowlGeometry, ball: &BallState, radius: f64, config: &RenderConfig) -> Image {
    let w = config.resolution;
    let mut img = Image::black(w, w);
    for row in 0..w {
        for col in 0..w {
            let hit = ray_intersections(pixel_center(col, row, config), geometry, ball, radius);
            if let Ok(albedo) = surface_albedo(&hit, ball, config) {
                let i = (row * w + col) * 3;
                for ch in 0..3 {
                    img.data[i + ch] = config.ambient * albedo[ch];
                }
            }
        }
    }
    img
}

/// Renders the emitted frames at `indices`.
pub fn render_sequence(
    trajectory: &Trajectory,
    radius: f64,
    config: &RenderConfig,
    indices: &[usize],
) -> Result<FrameSequence> {
    indices
        .iter()
        .map(|&i| {
            if i >= trajectory.len() {
                return Err(Error::OutOfRange { index: i, len: trajectory.len() });
            }
            Ok(render_frame(&trajectory.geometry, &trajectory.state(i), radius, config))
        })
        .collect()
}
