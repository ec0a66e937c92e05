use crate::error::Result;
use crate::grid::Mask;

/// Dice overlap `2|A ∩ B| / (|A| + |B|)`. Two empty masks score 1.
pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let (na, nb) = (a.count(), b.count());
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * a.overlap(b) as f64 / (na + nb) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn rect(x0: usize, x1: usize) -> Mask {
        Mask::from_fn(20, 10, |x, _| (x0..x1).contains(&x))
    }

    #[test]
    fn identical_disjoint_and_half() {
        assert_eq!(dice(&rect(2, 5), &rect(2, 5)).unwrap(), 1.0);
        assert_eq!(dice(&rect(0, 5), &rect(10, 15)).unwrap(), 0.0);
        // 100 px each, 50 px shared.
        assert_eq!(dice(&rect(0, 10), &rect(5, 15)).unwrap(), 0.5);
        assert_eq!(dice(&Mask::empty(20, 10), &Mask::empty(20, 10)).unwrap(), 1.0);
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(
            dice(&Mask::empty(2, 2), &Mask::empty(3, 2)),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
