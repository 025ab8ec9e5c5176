//! Row-major pixel grids for confidence maps, affinity fields and masks.

use crate::error::{Error, Result};
use crate::geometry::Point;

/// A `width x height` row-major grid; pixel `(x, y)` is at `y * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
}

/// One confidence-map channel.
pub type ScalarGrid = Grid<f32>;
/// One affinity-field channel: a 2D vector per pixel.
pub type VectorGrid = Grid<[f32; 2]>;
/// Annotation mask: `true` where the pixel is labeled and counts in the loss.
pub type MaskGrid = Grid<bool>;

impl<T: Copy + Default> Grid<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, T::default())
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid {
            width,
            height,
            values: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Grid(format!(
                "{} values for a {width}x{height} grid",
                values.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

impl<T: Copy> Grid<T> {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.values[self.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let i = self.index(x, y);
        self.values[i] = value;
    }

    /// Value at integer coordinates, `None` outside the grid.
    #[inline]
    pub fn get_checked(&self, x: i64, y: i64) -> Option<T> {
        self.in_bounds(x, y)
            .then(|| self.values[y as usize * self.width + x as usize])
    }
}

/// Bilinear weights and corner coordinates for a continuous position.
#[inline]
fn bilinear_corners(p: Point) -> ([(i64, i64); 4], [f64; 4]) {
    let x0 = p.x.floor();
    let y0 = p.y.floor();
    let fx = p.x - x0;
    let fy = p.y - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    (
        [(x0, y0), (x0 + 1, y0), (x0, y0 + 1), (x0 + 1, y0 + 1)],
        [
            (1.0 - fx) * (1.0 - fy),
            fx * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * fy,
        ],
    )
}

#[inline]
fn nearest_pixel(p: Point) -> (i64, i64) {
    (p.x.round() as i64, p.y.round() as i64)
}

impl ScalarGrid {
    /// Bilinear sample; corners outside the grid contribute zero.
    pub fn sample_bilinear(&self, p: Point) -> f64 {
        if !p.is_finite() {
            return 0.0;
        }
        let (corners, weights) = bilinear_corners(p);
        let mut acc = 0.0;
        for ((x, y), w) in corners.into_iter().zip(weights) {
            if w != 0.0 {
                if let Some(v) = self.get_checked(x, y) {
                    acc += w * v as f64;
                }
            }
        }
        acc
    }

    pub fn sample_nearest(&self, p: Point) -> f64 {
        if !p.is_finite() {
            return 0.0;
        }
        let (x, y) = nearest_pixel(p);
        self.get_checked(x, y).map_or(0.0, f64::from)
    }

    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl VectorGrid {
    /// Bilinear sample of both components; corners outside the grid are zero vectors.
    pub fn sample_bilinear(&self, p: Point) -> Point {
        if !p.is_finite() {
            return Point::ZERO;
        }
        let (corners, weights) = bilinear_corners(p);
        let mut acc = Point::ZERO;
        for ((x, y), w) in corners.into_iter().zip(weights) {
            if w != 0.0 {
                if let Some([vx, vy]) = self.get_checked(x, y) {
                    acc.x += w * vx as f64;
                    acc.y += w * vy as f64;
                }
            }
        }
        acc
    }

    pub fn sample_nearest(&self, p: Point) -> Point {
        if !p.is_finite() {
            return Point::ZERO;
        }
        let (x, y) = nearest_pixel(p);
        self.get_checked(x, y)
            .map_or(Point::ZERO, |[vx, vy]| Point::new(vx as f64, vy as f64))
    }

    pub fn all_finite(&self) -> bool {
        self.values
            .iter()
            .all(|[x, y]| x.is_finite() && y.is_finite())
    }
}

impl MaskGrid {
    pub fn count_unlabeled(&self) -> usize {
        self.values.iter().filter(|&&v| !v).count()
    }
}

/// Checks that every grid in `grids` has dimensions `dims`.
pub(crate) fn check_dims<T>(grids: &[Grid<T>], dims: (usize, usize), what: &str) -> Result<()> {
    for (i, g) in grids.iter().enumerate() {
        if g.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: format!("{what} {}x{}", dims.0, dims.1),
                found: format!("{what}[{i}] {}x{}", g.width(), g.height()),
            });
        }
    }
    Ok(())
}
