//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use gaze_russ::grid::{Grid, Mask};
use gaze_russ::runtime::Scenario;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

pub fn scenario(name: &str) -> Scenario {
    Scenario::load(&scenario_path(name)).expect("bundled scenario loads")
}

/// Scan-line confidence by direct double summation.
pub fn naive_confidence(img: &Grid<f64>) -> Grid<f64> {
    let (w, d) = img.shape();
    let mut out = Grid::filled(w, d, 0.0);
    for x in 0..w {
        let mut total = 0.0;
        for y in 0..d {
            total += img.get(x, y) * img.get(x, y);
        }
        for yy in 0..d {
            if total == 0.0 {
                out.set(x, yy, if yy == 0 { 1.0 } else { 0.0 });
                continue;
            }
            let mut above = 0.0;
            for y in 0..yy {
                above += img.get(x, y) * img.get(x, y);
            }
            out.set(x, yy, 1.0 - above / total);
        }
    }
    out
}

/// Depth-weighted lateral centroid by direct summation.
pub fn naive_centroid(c: &Grid<f64>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for y in 0..c.depth() {
        for x in 0..c.width() {
            num += x as f64 * c.get(x, y) * y as f64;
            den += c.get(x, y) * y as f64;
        }
    }
    num / den
}

/// Ones-kernel convolution by visiting every impulse and stamping the kernel,
/// then max-normalizing. Kernel anchor at `k / 2`.
pub fn naive_diffuse(impulses: &Grid<u32>, k: usize) -> Grid<f64> {
    let (w, d) = impulses.shape();
    let mut acc = Grid::filled(w, d, 0u64);
    let anchor = (k / 2) as isize;
    for py in 0..d {
        for px in 0..w {
            let n = impulses.get(px, py) as u64;
            if n == 0 {
                continue;
            }
            for ky in 0..k as isize {
                for kx in 0..k as isize {
                    let x = px as isize - anchor + kx;
                    let y = py as isize - anchor + ky;
                    if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < d {
                        let (x, y) = (x as usize, y as usize);
                        acc.set(x, y, acc.get(x, y) + n);
                    }
                }
            }
        }
    }
    let max = acc.as_slice().iter().copied().max().unwrap_or(0);
    acc.map(|v| if max == 0 { 0.0 } else { v as f64 / max as f64 })
}

/// Square dilation by brute force.
pub fn naive_dilate(m: &Mask, r: usize) -> Mask {
    let (w, d) = m.shape();
    let r = r as isize;
    Mask::from_fn(w, d, |x, y| {
        for dy in -r..=r {
            for dx in -r..=r {
                let (xx, yy) = (x as isize + dx, y as isize + dy);
                if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < d && m.get(xx as usize, yy as usize) {
                    return true;
                }
            }
        }
        false
    })
}

pub fn disc(w: usize, d: usize, cx: f64, cy: f64, r: f64) -> Mask {
    Mask::from_fn(w, d, |x, y| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
}
