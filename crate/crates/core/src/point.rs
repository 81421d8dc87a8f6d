//! Collocation point type shared by all modules.

use crate::scalar::Real;
use nalgebra::Vector3;

/// A field-node position in cm. 2D problems fix `z = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Point<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Point { x, y, z }
    }

    /// In-plane point with `z = 0`.
    pub fn xy(x: T, y: T) -> Self {
        Point { x, y, z: T::zero() }
    }

    pub fn coord(&self, axis: usize) -> T {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis out of range: {axis}"),
        }
    }

    pub fn coord_mut(&mut self, axis: usize) -> &mut T {
        match axis {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("axis out of range: {axis}"),
        }
    }

    pub fn to_vector(&self) -> Vector3<T> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<T>) -> Self {
        Point::new(v.x, v.y, v.z)
    }

    pub fn dist2(&self, other: &Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn dist(&self, other: &Self) -> T {
        self.dist2(other).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_is_euclidean() {
        let a = Point::new(1.0_f64, 2.0, 2.0);
        let b = Point::new(0.0, 0.0, 0.0);
        assert_eq!(a.dist(&b), 3.0);
        assert_eq!(Point::xy(3.0_f64, 4.0).dist(&b), 5.0);
    }
}
