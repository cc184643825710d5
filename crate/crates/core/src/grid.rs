//! Dense 3D grids indexed `(x, y, plane)`.
//!
//! Storage is plane-major: `index = (d * height + y) * width + x`.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims3 {
    pub width: usize,
    pub height: usize,
    pub depth: usize,
}

impl Dims3 {
    pub const fn new(width: usize, height: usize, depth: usize) -> Self {
        Self { width, height, depth }
    }

    pub const fn len(&self) -> usize {
        self.width * self.height * self.depth
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane_len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub const fn index(&self, x: usize, y: usize, d: usize) -> usize {
        (d * self.height + y) * self.width + x
    }

    #[inline]
    pub const fn coords(&self, index: usize) -> (usize, usize, usize) {
        let x = index % self.width;
        let rest = index / self.width;
        (x, rest % self.height, rest / self.height)
    }

    pub const fn contains(&self, x: i64, y: i64, d: i64) -> bool {
        x >= 0
            && y >= 0
            && d >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && (d as usize) < self.depth
    }

    /// The 6-connected neighbor pairs `(p, q)` with `p < q`, in index order.
    pub fn six_neighbor_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::with_capacity(3 * self.len());
        for d in 0..self.depth {
            for y in 0..self.height {
                for x in 0..self.width {
                    let p = self.index(x, y, d);
                    if x + 1 < self.width {
                        pairs.push((p, self.index(x + 1, y, d)));
                    }
                    if y + 1 < self.height {
                        pairs.push((p, self.index(x, y + 1, d)));
                    }
                    if d + 1 < self.depth {
                        pairs.push((p, self.index(x, y, d + 1)));
                    }
                }
            }
        }
        pairs
    }
}

/// A scalar value per voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct Field3<T> {
    pub dims: Dims3,
    pub data: Vec<T>,
}

impl<T: Clone> Field3<T> {
    pub fn filled(dims: Dims3, value: T) -> Self {
        Self {
            dims,
            data: vec![value; dims.len()],
        }
    }
}

impl<T> Field3<T> {
    pub fn from_vec(dims: Dims3, data: Vec<T>) -> Self {
        assert_eq!(dims.len(), data.len(), "field data does not match dims");
        Self { dims, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, d: usize) -> &T {
        &self.data[self.dims.index(x, y, d)]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize, d: usize) -> &mut T {
        let i = self.dims.index(x, y, d);
        &mut self.data[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let dims = Dims3::new(5, 4, 3);
        for i in 0..dims.len() {
            let (x, y, d) = dims.coords(i);
            assert_eq!(dims.index(x, y, d), i);
        }
    }

    #[test]
    fn six_neighbor_count() {
        let dims = Dims3::new(3, 2, 2);
        // (w-1)hd + w(h-1)d + wh(d-1)
        assert_eq!(dims.six_neighbor_pairs().len(), 2 * 2 * 2 + 3 * 2 + 3 * 2);
    }
}
