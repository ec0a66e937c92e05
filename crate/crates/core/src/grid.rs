//! Row-major 2D grids used for frames, maps, heatmaps and masks.
//!
//! `x` is the lateral column, `y` the depth row. Index `(x, y)` lives at
//! `y * width + x`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    width: usize,
    depth: usize,
    data: Vec<T>,
}

/// Binary mask over the image grid.
pub type Mask = Grid<bool>;

impl<T: Copy> Grid<T> {
    pub fn filled(width: usize, depth: usize, value: T) -> Self {
        Self {
            width,
            depth,
            data: vec![value; width * depth],
        }
    }

    pub fn from_vec(width: usize, depth: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * depth {
            return Err(Error::Domain(format!(
                "grid data has {} values, expected {}x{}",
                data.len(),
                width,
                depth
            )));
        }
        Ok(Self { width, depth, data })
    }

    pub fn from_fn(width: usize, depth: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * depth);
        for y in 0..depth {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, depth, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn depth(&self) -> usize {
        self.depth
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.depth)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            depth: self.depth,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn ensure_same_shape<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.width != other.width || self.depth != other.depth {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: (other.width, other.depth),
            });
        }
        Ok(())
    }
}

impl Mask {
    pub fn empty(width: usize, depth: usize) -> Self {
        Self::filled(width, depth, false)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Number of pixels set in both masks. Shapes must match.
    pub fn overlap(&self, other: &Mask) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    /// Pixel-center centroid `(x, y)`, `None` for an empty mask.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for y in 0..self.depth {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    pub fn or_assign(&mut self, other: &Mask) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a |= b;
        }
    }

    /// Square (Chebyshev) dilation; pixels outside the grid count as unset.
    pub fn dilate(&self, radius: usize) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        let horiz = window_any(self, radius, Axis::X);
        window_any(&horiz, radius, Axis::Y)
    }

    /// Square (Chebyshev) erosion; pixels outside the grid count as set so
    /// objects touching the border are not eaten from outside.
    pub fn erode(&self, radius: usize) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        let inv = self.map(|b| !b);
        let horiz = window_any(&inv, radius, Axis::X);
        window_any(&horiz, radius, Axis::Y).map(|b| !b)
    }

    pub fn open(&self, radius: usize) -> Mask {
        self.erode(radius).dilate(radius)
    }

    pub fn close(&self, radius: usize) -> Mask {
        self.dilate(radius).erode(radius)
    }
}

#[derive(Clone, Copy)]
enum Axis {
    X,
    Y,
}

/// Sets a pixel when any pixel within `radius` along `axis` is set.
fn window_any(src: &Mask, radius: usize, axis: Axis) -> Mask {
    let (w, d) = src.shape();
    let mut out = Mask::empty(w, d);
    let (lines, len) = match axis {
        Axis::X => (d, w),
        Axis::Y => (w, d),
    };
    let mut prefix = vec![0u32; len + 1];
    for line in 0..lines {
        for i in 0..len {
            let v = match axis {
                Axis::X => src.get(i, line),
                Axis::Y => src.get(line, i),
            };
            prefix[i + 1] = prefix[i] + v as u32;
        }
        for i in 0..len {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius + 1).min(len);
            if prefix[hi] - prefix[lo] > 0 {
                match axis {
                    Axis::X => out.set(i, line, true),
                    Axis::Y => out.set(line, i, true),
                }
            }
        }
    }
    out
}

/// Sums `src` over the window `[x + lo, x + hi] x [y + lo, y + hi]` for every
/// output pixel, treating out-of-grid pixels as zero.
///
/// This is the correlation form of convolving with a `(hi - lo + 1)`-square
/// all-ones kernel.
pub fn box_sum_u32(src: &Grid<u32>, lo: isize, hi: isize) -> Grid<u32> {
    let (w, d) = src.shape();
    // Summed-area table with a zero row and column in front.
    let mut sat = vec![0u64; (w + 1) * (d + 1)];
    for y in 0..d {
        let mut row = 0u64;
        for x in 0..w {
            row += src.get(x, y) as u64;
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    let clamp = |v: isize, n: usize| -> usize { v.clamp(0, n as isize) as usize };
    Grid::from_fn(w, d, |x, y| {
        let x0 = clamp(x as isize + lo, w);
        let x1 = clamp(x as isize + hi + 1, w);
        let y0 = clamp(y as isize + lo, d);
        let y1 = clamp(y as isize + hi + 1, d);
        if x0 >= x1 || y0 >= y1 {
            return 0;
        }
        let s = sat[y1 * (w + 1) + x1] + sat[y0 * (w + 1) + x0]
            - sat[y0 * (w + 1) + x1]
            - sat[y1 * (w + 1) + x0];
        s as u32
    })
}
