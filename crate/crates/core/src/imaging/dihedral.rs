//! The eight symmetries of a square: rotations by multiples of 90 degrees
//! (counterclockwise), indices 0..4, and the same rotations applied after a
//! left-right mirror, indices 4..8. Index 0 is the identity.

pub const DIHEDRAL_ORDER: usize = 8;

/// Index of the quarter-turn rotation; applying it four times is the identity.
pub const ROT90: usize = 1;

/// Where output cell `(x, y)` of an `n x n` square reads from in the input.
pub fn dihedral_source(index: usize, n: usize, x: usize, y: usize) -> (usize, usize) {
    let m = n - 1;
    // inverse rotation by `index % 4` quarter turns
    let (rx, ry) = match index % 4 {
        0 => (x, y),
        1 => (m - y, x),
        2 => (m - x, m - y),
        _ => (y, m - x),
    };
    if index >= 4 {
        (m - rx, ry)
    } else {
        (rx, ry)
    }
}

/// Where input cell `(x, y)` lands after the transform.
pub fn dihedral_target(index: usize, n: usize, x: usize, y: usize) -> (usize, usize) {
    let m = n - 1;
    let (fx, fy) = if index >= 4 { (m - x, y) } else { (x, y) };
    match index % 4 {
        0 => (fx, fy),
        1 => (fy, m - fx),
        2 => (m - fx, m - fy),
        _ => (m - fy, fx),
    }
}

/// Applies transform `index` to a row-major `n x n` square.
pub fn transform_square<T: Copy>(data: &[T], n: usize, index: usize) -> Vec<T> {
    debug_assert_eq!(data.len(), n * n);
    let mut out = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let (sx, sy) = dihedral_source(index, n, x, y);
            out.push(data[sy * n + sx]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_and_target_are_inverse() {
        for index in 0..DIHEDRAL_ORDER {
            for y in 0..5 {
                for x in 0..5 {
                    let (tx, ty) = dihedral_target(index, 5, x, y);
                    assert_eq!(dihedral_source(index, 5, tx, ty), (x, y));
                }
            }
        }
    }

    #[test]
    fn quarter_turn_is_counterclockwise() {
        // 1 2      2 4
        // 3 4  ->  1 3
        assert_eq!(transform_square(&[1, 2, 3, 4], 2, ROT90), vec![2, 4, 1, 3]);
    }

    #[test]
    fn all_eight_transforms_are_distinct() {
        let data: Vec<u32> = (0..9).collect();
        let mut seen: Vec<Vec<u32>> = (0..DIHEDRAL_ORDER).map(|i| transform_square(&data, 3, i)).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), DIHEDRAL_ORDER);
    }

    #[test]
    fn four_quarter_turns_are_identity() {
        let data: Vec<u32> = (0..16).collect();
        let mut d = data.clone();
        for _ in 0..4 {
            d = transform_square(&d, 4, ROT90);
        }
        assert_eq!(d, data);
    }
}
