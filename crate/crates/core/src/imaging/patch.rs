use super::image::GrayImage;
use crate::tensor::Tensor;

/// Mirror an out-of-range coordinate back into `0..extent` without repeating
/// the edge sample: -1 -> 1, extent -> extent - 2.
pub fn reflect_index(i: isize, extent: usize) -> usize {
    if extent == 1 {
        return 0;
    }
    let period = 2 * (extent as isize - 1);
    let r = i.rem_euclid(period);
    if r < extent as isize {
        r as usize
    } else {
        (period - r) as usize
    }
}

/// Writes the `n x n` window centered on `(cx, cy)`, scaled to `[0, 1]` by the
/// image's maxval, into `out` (row-major). Out-of-bounds samples are mirrored.
pub fn fill_patch<T: From<f32>>(image: &GrayImage, cx: usize, cy: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(out.len(), n * n);
    let half = (n / 2) as isize;
    let (w, h) = (image.width(), image.height());
    let full = image.maxval() as f32;
    let px = image.pixels();
    let x0 = cx as isize - half;
    let y0 = cy as isize - half;
    let interior = x0 >= 0 && y0 >= 0 && x0 as usize + n <= w && y0 as usize + n <= h;
    for (r, row) in out.chunks_exact_mut(n).enumerate() {
        let sy = reflect_index(y0 + r as isize, h);
        let src = &px[sy * w..(sy + 1) * w];
        if interior {
            let x0 = x0 as usize;
            for (o, &p) in row.iter_mut().zip(&src[x0..x0 + n]) {
                *o = T::from(p as f32 / full);
            }
        } else {
            for (c, o) in row.iter_mut().enumerate() {
                *o = T::from(src[reflect_index(x0 + c as isize, w)] as f32 / full);
            }
        }
    }
}

/// Centered `n x n` patch as a `[1, n, n]` tensor.
pub fn extract_patch(image: &GrayImage, cx: usize, cy: usize, n: usize) -> Tensor {
    let mut data = vec![0.0f64; n * n];
    fill_patch(image, cx, cy, n, &mut data);
    Tensor::new(&[1, n, n], data).expect("positive extents")
}

#[cfg(test)]
mod tests {
    use super::super::dihedral::{dihedral_target, transform_square, DIHEDRAL_ORDER};
    use super::*;
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize) -> GrayImage {
        GrayImage::new(w, h, 255, (0..w * h).map(|i| (i % 251) as u16).collect()).unwrap()
    }

    #[test]
    fn reflection_matches_mirror_without_edge_repeat() {
        let got: Vec<usize> = (-4..8).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
        assert_eq!(reflect_index(-3, 1), 0);
    }

    #[test]
    fn interior_patch_is_a_crop() {
        let img = ramp(20, 15);
        let p = extract_patch(&img, 10, 7, 5);
        assert_eq!(p.shape(), &[1, 5, 5]);
        for r in 0..5 {
            for c in 0..5 {
                let expect = img.get(8 + c, 5 + r) as f32 / 255.0;
                assert_eq!(p.data()[r * 5 + c], expect as f64);
            }
        }
    }

    #[test]
    fn corner_patch_mirrors_top_left() {
        let img = ramp(10, 10);
        let p = extract_patch(&img, 0, 0, 5);
        let at = |r: usize, c: usize| p.data()[r * 5 + c];
        // row/col offsets -2..=2 map to 2,1,0,1,2
        assert_eq!(at(0, 0), at(4, 4));
        assert_eq!(at(1, 3), at(3, 3));
        assert_eq!(at(2, 2), 0.0);
        assert_eq!(at(0, 2), (img.get(0, 2) as f32 / 255.0) as f64);
    }

    proptest! {
        #[test]
        fn extraction_commutes_with_dihedral_transforms(
            m in 3usize..14, n in prop_oneof![Just(3usize), Just(5), Just(9), Just(15)],
            seed in any::<u64>(), index in 0..DIHEDRAL_ORDER, cx in 0usize..14, cy in 0usize..14,
        ) {
            use rand::{Rng, SeedableRng};
            let (cx, cy) = (cx % m, cy % m);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let px: Vec<u16> = (0..m * m).map(|_| rng.random_range(0..=255)).collect();
            let img = GrayImage::new(m, m, 255, px.clone()).unwrap();
            let timg = GrayImage::new(m, m, 255, transform_square(&px, m, index)).unwrap();
            let (tx, ty) = dihedral_target(index, m, cx, cy);
            let lhs = transform_square(extract_patch(&img, cx, cy, n).data(), n, index);
            let rhs = extract_patch(&timg, tx, ty, n).into_data();
            prop_assert_eq!(lhs, rhs);
        }
    }
}
