//! Sampling-insensitive pixel dissimilarity.
//!
//! Compares a pixel against the linearly interpolated half-pixel
//! neighborhood of its candidate match, symmetrically in both directions,
//! so that a match that falls between sample positions still costs ~0.

use crate::error::{Error, Result};

/// Interval `[min, max]` spanned by a pixel and its two half-pixel
/// neighbors, in doubled intensity units so everything stays integral.
#[inline]
fn halfpixel_interval2(row: &[u8], i: usize) -> (u16, u16) {
    let center2 = 2 * row[i] as u16;
    let minus2 = if i > 0 { row[i - 1] as u16 + row[i] as u16 } else { center2 };
    let plus2 = if i + 1 < row.len() { row[i] as u16 + row[i + 1] as u16 } else { center2 };
    let lo = center2.min(minus2).min(plus2);
    let hi = center2.max(minus2).max(plus2);
    (lo, hi)
}

/// Dissimilarity in doubled intensity units (0..=510).
#[inline]
pub(crate) fn bt_cost_doubled(left_row: &[u8], right_row: &[u8], ul: usize, ur: usize) -> u16 {
    let l2 = 2 * left_row[ul] as i32;
    let r2 = 2 * right_row[ur] as i32;
    let (lmin, lmax) = halfpixel_interval2(left_row, ul);
    let (rmin, rmax) = halfpixel_interval2(right_row, ur);
    let d_lr = 0.max(l2 - rmax as i32).max(rmin as i32 - l2);
    let d_rl = 0.max(r2 - lmax as i32).max(lmin as i32 - r2);
    d_lr.min(d_rl) as u16
}

/// Cost of matching left pixel `u` against right pixel `u - d`.
///
/// Returns the symmetric min-over-interval dissimilarity; zero whenever the
/// left intensity falls inside the right half-pixel interval or vice versa.
pub fn bt_cost(left_row: &[u8], right_row: &[u8], u: usize, d: usize) -> Result<f32> {
    if u >= left_row.len() || d > u || u - d >= right_row.len() {
        return Err(Error::DisparityOutOfRange { u, d, len: right_row.len().min(left_row.len()) });
    }
    Ok(bt_cost_doubled(left_row, right_row, u, u - d) as f32 / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct evaluation of the min-over-interval definition in floating
    /// point, kept independent of the integer production path.
    fn bt_oracle(left: &[f64], right: &[f64], ul: usize, ur: usize) -> f64 {
        let interval = |row: &[f64], i: usize| {
            let c = row[i];
            let m = if i > 0 { 0.5 * (row[i - 1] + row[i]) } else { c };
            let p = if i + 1 < row.len() { 0.5 * (row[i] + row[i + 1]) } else { c };
            (c.min(m).min(p), c.max(m).max(p))
        };
        let (lmin, lmax) = interval(left, ul);
        let (rmin, rmax) = interval(right, ur);
        let d_lr = (left[ul] - rmax).max(rmin - left[ul]).max(0.0);
        let d_rl = (right[ur] - lmax).max(lmin - right[ur]).max(0.0);
        d_lr.min(d_rl)
    }

    fn to_f64(row: &[u8]) -> Vec<f64> {
        row.iter().map(|&x| x as f64).collect()
    }

    #[test]
    fn identical_constant_rows_cost_zero() {
        let row = [50u8; 8];
        for u in 0..8 {
            for d in 0..=u {
                assert_eq!(bt_cost(&row, &row, u, d).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn exact_shift_costs_zero() {
        let left = [10u8, 30, 200, 90, 15, 60, 120, 7];
        let d = 3usize;
        let mut right = vec![0u8; left.len()];
        for x in 0..left.len() - d {
            right[x] = left[x + d];
        }
        for u in d..left.len() - 1 {
            // interior pixels; the last right pixel borders the zero fill
            if u - d + 1 < left.len() - d {
                assert_eq!(bt_cost(&left, &right, u, d).unwrap(), 0.0, "u={u}");
            }
        }
    }

    #[test]
    fn hand_case_matches_interval_evaluation() {
        let left = [10u8, 20, 30];
        let right = [10u8, 25, 30];
        // Left 20 lies inside the right interval [17.5, 27.5] and right 25
        // inside the left interval [15, 25]; both directed terms vanish.
        assert_eq!(bt_cost(&left, &right, 1, 0).unwrap(), 0.0);
        assert_eq!(bt_oracle(&to_f64(&left), &to_f64(&right), 1, 1), 0.0);
    }

    #[test]
    fn matches_float_oracle_over_random_rows() {
        // Cheap deterministic LCG; no need for a real RNG here.
        let mut state = 0x2545f491u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as u8
        };
        for _ in 0..200 {
            let left: Vec<u8> = (0..16).map(|_| next()).collect();
            let right: Vec<u8> = (0..16).map(|_| next()).collect();
            for u in 0..16 {
                for d in 0..=u.min(6) {
                    let got = bt_cost(&left, &right, u, d).unwrap() as f64;
                    let want = bt_oracle(&to_f64(&left), &to_f64(&right), u, u - d);
                    assert!((got - want).abs() < 1e-9, "u={u} d={d} got={got} want={want}");
                }
            }
        }
    }

    #[test]
    fn asymmetric_signal_cost_is_positive() {
        let left = [0u8, 100, 0];
        let right = [0u8, 0, 0];
        // Left spike vs flat right: directed terms are 100 and 50, min 50.
        assert_eq!(bt_cost(&left, &right, 1, 0).unwrap(), 50.0);
    }

    #[test]
    fn out_of_range_rejected() {
        let row = [1u8, 2, 3];
        assert!(matches!(bt_cost(&row, &row, 1, 2), Err(Error::DisparityOutOfRange { .. })));
        assert!(matches!(bt_cost(&row, &row, 3, 0), Err(Error::DisparityOutOfRange { .. })));
    }
}
