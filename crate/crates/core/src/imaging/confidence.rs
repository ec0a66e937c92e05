use super::{BModeFrame, ImageGeometry};
use crate::grid::Grid;
use crate::scalar::Scalar;

/// Per-pixel scan-line confidence in `[0, 1]`, non-increasing down each column.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap<T> {
    pub values: Grid<T>,
    pub geometry: ImageGeometry,
}

/// Scan-line confidence with mapping `f(v) = v^2`:
///
/// `C(X, Y) = 1 - sum_{y < Y} f(I(X, y)) / sum_{y < depth} f(I(X, y))`
///
/// The prefix sum is exclusive so the transducer face has confidence exactly 1.
/// A column with no energy at all gets `C = 1` on the face row and `0` below.
pub fn confidence_map<T: Scalar>(frame: &BModeFrame<T>) -> ConfidenceMap<T> {
    let img = &frame.intensity;
    let (w, d) = img.shape();
    let mut out = Grid::filled(w, d, T::zero());
    let mut energy = vec![T::zero(); d];
    for x in 0..w {
        for (y, e) in energy.iter_mut().enumerate() {
            let v = img.get(x, y);
            *e = v * v;
        }
        let total = energy.iter().fold(T::zero(), |acc, &e| acc + e);
        if total <= T::zero() {
            out.set(x, 0, T::one());
            continue;
        }
        let mut prefix = T::zero();
        for (y, &e) in energy.iter().enumerate() {
            out.set(x, y, T::one() - prefix / total);
            prefix = prefix + e;
        }
    }
    ConfidenceMap {
        values: out,
        geometry: frame.geometry,
    }
}
