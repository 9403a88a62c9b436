use crate::math::Vec3;

/// Orthographic camera looking down −z: `(x, y, z) ↦ (x, y)`.
#[inline]
pub fn orthographic_project(q: Vec3) -> [f64; 2] {
    [q[0], q[1]]
}

/// Maps world screen coordinates in `[-E, E]²` to continuous pixels in `[0, W]²`.
#[inline]
pub fn world_to_pixel(p: [f64; 2], resolution: usize, half_extent: f64) -> [f64; 2] {
    let s = resolution as f64 / (2.0 * half_extent);
    [(p[0] + half_extent) * s, (p[1] + half_extent) * s]
}

#[inline]
pub fn pixel_to_world(px: [f64; 2], resolution: usize, half_extent: f64) -> [f64; 2] {
    let s = 2.0 * half_extent / resolution as f64;
    [px[0] * s - half_extent, px[1] * s - half_extent]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_drops_depth() {
        assert_eq!(orthographic_project([0.3, -0.2, 0.5]), [0.3, -0.2]);
        assert_eq!(orthographic_project([0.0, 0.0, 7.0]), [0.0, 0.0]);
        assert_eq!(orthographic_project([0.1, 0.2, -3.0]), orthographic_project([0.1, 0.2, 4.0]));
    }

    #[test]
    fn pixel_mapping() {
        assert_eq!(world_to_pixel([0.0, 0.0], 128, 1.1), [64.0, 64.0]);
        assert_eq!(world_to_pixel([-1.1, -1.1], 128, 1.1), [0.0, 0.0]);
        let px = [17.25, 99.5];
        let back = world_to_pixel(pixel_to_world(px, 128, 1.1), 128, 1.1);
        assert!((back[0] - px[0]).abs() < 1e-12 && (back[1] - px[1]).abs() < 1e-12);
    }
}
