use alloc::vec;

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::numerics::Tensor;

/// An element of the symmetry group of the square image, acting as
/// "mirror x, then mirror y, then swap axes".
///
/// Under the orthographic camera these are world reflections about vertical
/// planes through the bowl axis, so a transformed sequence is again a valid
/// rolling trajectory in a reflected bowl.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Symmetry {
    pub flip_x: bool,
    pub flip_y: bool,
    pub transpose: bool,
}

impl Symmetry {
    pub const IDENTITY: Symmetry = Symmetry { flip_x: false, flip_y: false, transpose: false };

    /// The eight group elements, indexed by the bits `(transpose, flip_y, flip_x)`.
    pub fn from_index(i: u8) -> Self {
        Self { flip_x: i & 1 != 0, flip_y: i & 2 != 0, transpose: i & 4 != 0 }
    }

    pub fn all() -> [Self; 8] {
        core::array::from_fn(|i| Self::from_index(i as u8))
    }

    fn map_point(&self, x: f64, y: f64, extent: f64) -> (f64, f64) {
        let x = if self.flip_x { extent - x } else { x };
        let y = if self.flip_y { extent - y } else { y };
        if self.transpose {
            (y, x)
        } else {
            (x, y)
        }
    }

    /// Continuous pixel coordinates on a `resolution`-wide square image.
    pub fn apply_pixel(&self, p: [f64; 2], resolution: usize) -> [f64; 2] {
        let (x, y) = self.map_point(p[0], p[1], resolution as f64);
        [x, y]
    }

    /// Angular velocity (a pseudovector: reflections flip its sign).
    pub fn apply_angular(&self, w: Vec3) -> Vec3 {
        let mut w = w;
        if self.flip_x {
            w = [w[0], -w[1], -w[2]];
        }
        if self.flip_y {
            w = [-w[0], w[1], -w[2]];
        }
        if self.transpose {
            w = [-w[1], -w[0], -w[2]];
        }
        w
    }

    /// Moves every pixel of a square `H×W×C` tensor.
    pub fn apply_tensor(&self, t: &Tensor) -> Result<Tensor> {
        let shape = t.shape();
        if shape.len() != 3 || shape[0] != shape[1] {
            return Err(Error::Shape { op: "symmetry", detail: alloc::format!("needs a square H×W×C tensor, got {shape:?}") });
        }
        if *self == Self::IDENTITY {
            return Ok(t.clone());
        }
        let (n, c) = (shape[0], shape[2]);
        let src = t.data();
        let mut out = vec![0.0; src.len()];
        let last = (n - 1) as f64;
        for row in 0..n {
            for col in 0..n {
                let (x, y) = self.map_point(col as f64, row as f64, last);
                let dst = (y as usize * n + x as usize) * c;
                let from = (row * n + col) * c;
                out[dst..dst + c].copy_from_slice(&src[from..from + c]);
            }
        }
        Tensor::new(shape.to_vec(), out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elements_are_distinct_involutions_or_rotations() {
        let all = Symmetry::all();
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                assert_ne!(a, b);
            }
        }
        assert_eq!(Symmetry::from_index(0), Symmetry::IDENTITY);
    }

    #[test]
    fn pixel_examples() {
        let s = Symmetry { flip_x: true, flip_y: false, transpose: true };
        assert_eq!(s.apply_pixel([10.0, 3.0], 48), [3.0, 38.0]);
        assert_eq!(Symmetry::from_index(3).apply_pixel([24.0, 24.0], 48), [24.0, 24.0]);
    }

    #[test]
    fn angular_examples() {
        let w = [1.0, 2.0, 3.0];
        assert_eq!(Symmetry { flip_x: true, ..Symmetry::IDENTITY }.apply_angular(w), [1.0, -2.0, -3.0]);
        assert_eq!(Symmetry { transpose: true, ..Symmetry::IDENTITY }.apply_angular(w), [-2.0, -1.0, -3.0]);
    }
}
