use super::BinaryMask;

/// Dilation by a `(2r+1) x (2r+1)` square: output is set wherever some input
/// pixel lies within Chebyshev distance `radius`.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 || mask.is_empty() {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let horizontal = sweep(mask.bits(), w, h, radius, true);
    let bits = sweep(&horizontal, w, h, radius, false);
    BinaryMask {
        width: w,
        height: h,
        bits,
    }
}

// 1-D max filter along rows (or columns) using prefix counts.
fn sweep(src: &[bool], w: usize, h: usize, r: usize, along_rows: bool) -> Vec<bool> {
    let (lines, len) = if along_rows { (h, w) } else { (w, h) };
    let idx = |line: usize, i: usize| if along_rows { line * w + i } else { i * w + line };
    let mut out = vec![false; w * h];
    let mut prefix = vec![0u32; len + 1];
    for line in 0..lines {
        for i in 0..len {
            prefix[i + 1] = prefix[i] + src[idx(line, i)] as u32;
        }
        for i in 0..len {
            let lo = i.saturating_sub(r);
            let hi = (i + r + 1).min(len);
            out[idx(line, i)] = prefix[hi] > prefix[lo];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(mask: &BinaryMask, r: usize) -> BinaryMask {
        let (w, h) = mask.dims();
        BinaryMask::from_fn(w, h, |x, y| {
            let r = r as i64;
            (-r..=r).any(|dy| (-r..=r).any(|dx| mask.get_checked(x as i64 + dx, y as i64 + dy)))
        })
    }

    #[test]
    fn radius_zero_is_identity() {
        let m = BinaryMask::from_fn(5, 4, |x, y| (x + y) % 3 == 0);
        assert_eq!(dilate(&m, 0), m);
    }

    #[test]
    fn center_pixel_becomes_block() {
        let m = BinaryMask::from_fn(5, 5, |x, y| x == 2 && y == 2);
        let d = dilate(&m, 1);
        let expect = BinaryMask::from_fn(5, 5, |x, y| (1..=3).contains(&x) && (1..=3).contains(&y));
        assert_eq!(d, expect);
    }

    proptest! {
        #[test]
        fn matches_brute_force(bits in prop::collection::vec(prop::bool::weighted(0.05), 32 * 32), r in 0usize..6) {
            let m = BinaryMask::from_bits(32, 32, bits).unwrap();
            prop_assert_eq!(dilate(&m, r), brute(&m, r));
        }

        #[test]
        fn extensive_and_composes(bits in prop::collection::vec(prop::bool::weighted(0.03), 24 * 20), a in 0usize..4, b in 0usize..4) {
            let m = BinaryMask::from_bits(24, 20, bits).unwrap();
            let d = dilate(&m, a);
            prop_assert!(m.bits().iter().zip(d.bits()).all(|(&x, &y)| !x || y));
            prop_assert_eq!(dilate(&d, b), dilate(&m, a + b));
        }
    }
}
