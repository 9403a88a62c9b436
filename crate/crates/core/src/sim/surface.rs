use libm::{fabs, sqrt};

use crate::error::{Error, Result};
use crate::math::{self, rotate_z, Vec3};

/// Shape and orientation of the bowl.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BowlGeometry {
    /// x-semi-axis of the ellipsoid, in `[0.5, 1]`.
    pub a: f64,
    /// Rotation about z, in `[−π/2, π/2]`.
    pub gamma: f64,
}

const MAX_NEWTON_STEPS: usize = 50;
const ON_SURFACE_TOL: f64 = 1e-9;

impl BowlGeometry {
    pub fn new(a: f64, gamma: f64) -> Self {
        Self { a, gamma }
    }

    fn semi_axes(&self) -> Vec3 {
        [self.a, 1.0, 1.0]
    }

    /// World point to ellipsoid-centered bowl coordinates.
    pub(crate) fn to_local(&self, p: Vec3) -> Vec3 {
        let r = rotate_z(p, -self.gamma);
        [r[0], r[1], r[2] - 1.0]
    }

    pub(crate) fn to_world(&self, u: Vec3) -> Vec3 {
        rotate_z([u[0], u[1], u[2] + 1.0], self.gamma)
    }

    /// Implicit function `F(p) = x'²/a² + y'² + (z'-1)² - 1`.
    pub fn implicit(&self, p: Vec3) -> f64 {
        let u = self.to_local(p);
        u[0] * u[0] / (self.a * self.a) + u[1] * u[1] + u[2] * u[2] - 1.0
    }

    /// `∇F` in world coordinates.
    pub fn gradient(&self, p: Vec3) -> Vec3 {
        let u = self.to_local(p);
        rotate_z([2.0 * u[0] / (self.a * self.a), 2.0 * u[1], 2.0 * u[2]], self.gamma)
    }

    /// Unit normal pointing into the bowl at a surface point.
    pub fn inward_normal(&self, p: Vec3) -> Result<Vec3> {
        let f = self.implicit(p);
        if fabs(f) > ON_SURFACE_TOL {
            return Err(Error::OffSurface(f));
        }
        math::normalize(math::scale(self.gradient(p), -1.0)).ok_or(Error::OffSurface(f))
    }

    /// Nearest point on the ellipsoid to `p`, with the inward normal there.
    pub fn nearest_surface_point(&self, p: Vec3) -> Result<(Vec3, Vec3)> {
        let q = self.to_local(p);
        let e = self.semi_axes();
        let e2 = [e[0] * e[0], e[1] * e[1], e[2] * e[2]];
        // Foot point is s_i = e_i² q_i / (e_i² + t) where t solves g(t) = 0.
        let g = |t: f64| -> (f64, f64) {
            let mut val = -1.0;
            let mut der = 0.0;
            for i in 0..3 {
                let d = e2[i] + t;
                let r = e[i] * q[i] / d;
                val += r * r;
                der -= 2.0 * r * r / d;
            }
            (val, der)
        };
        let e2_min = e2[0].min(e2[1]).min(e2[2]);
        let mut lo = -e2_min;
        let (g0, _) = g(0.0);
        let mut hi = if g0 <= 0.0 { 0.0 } else { e[0].max(1.0) * math::norm(q) };
        let mut t = hi;
        let mut converged = false;
        for _ in 0..MAX_NEWTON_STEPS {
            let (val, der) = g(t);
            if val == 0.0 {
                converged = true;
                break;
            }
            if val > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let newton = t - val / der;
            if fabs(newton - t) <= 1e-15 * (1.0 + fabs(t)) {
                t = newton;
                converged = true;
                break;
            }
            t = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        let s = [e2[0] * q[0] / (e2[0] + t), e2[1] * q[1] / (e2[1] + t), e2[2] * q[2] / (e2[2] + t)];
        let residual = s[0] * s[0] / e2[0] + s[1] * s[1] + s[2] * s[2] - 1.0;
        if !converged || !(fabs(residual) < 1e-9) || !t.is_finite() {
            return Err(Error::ProjectionDiverged(p));
        }
        let outward_local = [s[0] / e2[0], s[1], s[2]];
        let n_local = math::normalize(math::scale(outward_local, -1.0)).ok_or(Error::ProjectionDiverged(p))?;
        let n = rotate_z(n_local, self.gamma);
        Ok((self.to_world(s), n))
    }

    /// Offset-surface point (inward distance `rho`) nearest to `c`, with its normal.
    pub fn offset_foot(&self, c: Vec3, rho: f64) -> Result<(Vec3, Vec3)> {
        let (s, n) = self.nearest_surface_point(c)?;
        Ok((math::add(s, math::scale(n, rho)), n))
    }

    /// Snap a ball center onto the offset surface at inward distance `rho`.
    pub fn project_center_to_offset(&self, c: Vec3, rho: f64) -> Result<Vec3> {
        self.offset_foot(c, rho).map(|(p, _)| p)
    }

    /// Signed distance along the inward normal from the nearest surface point.
    pub fn inward_distance(&self, c: Vec3) -> Result<f64> {
        let (s, n) = self.nearest_surface_point(c)?;
        Ok(math::dot(math::sub(c, s), n))
    }

    /// Normal of the bowl surface under a ball centered at `c`.
    pub fn contact_normal(&self, c: Vec3) -> Result<Vec3> {
        self.nearest_surface_point(c).map(|(_, n)| n)
    }
}

/// `sqrt` of a nonnegative quantity that may dip below zero by rounding.
#[inline]
pub(crate) fn safe_sqrt(x: f64) -> f64 {
    sqrt(x.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_PI_2;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (0..3).all(|i| (a[i] - b[i]).abs() <= tol)
    }

    #[test]
    fn bottom_normal_points_up() {
        for &(a, g) in &[(1.0, 0.0), (0.5, 0.3), (0.7, -1.2)] {
            let n = BowlGeometry::new(a, g).inward_normal([0.0, 0.0, 0.0]).unwrap();
            assert!(close(n, [0.0, 0.0, 1.0], 1e-15));
        }
    }

    #[test]
    fn rim_normals() {
        let n = BowlGeometry::new(0.8, 0.0).inward_normal([0.8, 0.0, 1.0]).unwrap();
        assert!(close(n, [-1.0, 0.0, 0.0], 1e-15));
        let n = BowlGeometry::new(1.0, 0.0).inward_normal([0.0, 1.0, 1.0]).unwrap();
        assert!(close(n, [0.0, -1.0, 0.0], 1e-15));
    }

    #[test]
    fn off_surface_rejected() {
        assert!(matches!(
            BowlGeometry::new(1.0, 0.0).inward_normal([0.0, 0.0, 0.5]),
            Err(Error::OffSurface(_))
        ));
    }

    #[test]
    fn sphere_projection_is_analytic() {
        let g = BowlGeometry::new(1.0, 0.0);
        let p = g.project_center_to_offset([0.0, 0.0, -0.1], 0.04).unwrap();
        assert!(close(p, [0.0, 0.0, 0.04], 1e-12));
    }

    #[test]
    fn bottom_is_on_offset_surface_for_every_a() {
        let g = BowlGeometry::new(0.5, 0.0);
        let p = g.project_center_to_offset([0.0, 0.0, 0.04], 0.04).unwrap();
        assert!(close(p, [0.0, 0.0, 0.04], 1e-12));
    }

    #[test]
    fn projection_is_idempotent() {
        let g = BowlGeometry::new(0.63, 0.9);
        for &c in &[[0.2, -0.3, 0.4], [-0.4, 0.1, 0.7], [0.05, 0.5, 1.3]] {
            let p = g.project_center_to_offset(c, 0.04).unwrap();
            let p2 = g.project_center_to_offset(p, 0.04).unwrap();
            assert!(close(p, p2, 1e-12), "{p:?} vs {p2:?}");
            assert!((g.inward_distance(p).unwrap() - 0.04).abs() < 1e-12);
        }
    }

    #[test]
    fn ellipsoid_center_is_degenerate() {
        let g = BowlGeometry::new(0.5, FRAC_PI_2);
        assert!(matches!(g.project_center_to_offset([0.0, 0.0, 1.0], 0.04), Err(Error::ProjectionDiverged(_))));
    }
}
