use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: u32,
    pub yates: bool,
}

/// Pearson test of independence on a 2×2 table, optionally with Yates'
/// continuity correction. Requires non-zero marginals and every expected
/// count at least 1.
pub fn chi_square_independence(table: [[u64; 2]; 2], yates: bool) -> Result<ChiSquare> {
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let n = (rows[0] + rows[1]) as f64;
    if rows.contains(&0) || cols.contains(&0) {
        return Err(Error::Degenerate(format!("zero marginal in {table:?}")));
    }
    let mut statistic = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let expected = rows[i] as f64 * cols[j] as f64 / n;
            if expected < 1.0 {
                return Err(Error::Degenerate(format!(
                    "expected count {expected:.3} < 1 in cell ({i},{j})"
                )));
            }
            let mut diff = (table[i][j] as f64 - expected).abs();
            if yates {
                diff = (diff - 0.5).max(0.0);
            }
            statistic += diff * diff / expected;
        }
    }
    let dist = ChiSquared::new(1.0).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(ChiSquare {
        statistic,
        p_value: dist.sf(statistic),
        dof: 1,
        yates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed form N(ad − bc)² / (r1·r2·c1·c2).
    fn closed_form(t: [[u64; 2]; 2]) -> f64 {
        let [[a, b], [c, d]] = t.map(|r| r.map(|x| x as f64));
        let n = a + b + c + d;
        n * (a * d - b * c).powi(2) / ((a + b) * (c + d) * (a + c) * (b + d))
    }

    #[test]
    fn matches_closed_form_and_reference_p() {
        // p values from an independent statistics package
        let cases = [
            ([[14, 36], [40, 10]], 1.8211894358376534e-07),
            ([[11, 39], [39, 11]], 2.143518051662182e-08),
        ];
        for (t, p) in cases {
            let r = chi_square_independence(t, false).unwrap();
            assert!((r.statistic - closed_form(t)).abs() < 1e-6);
            assert!(((r.p_value - p) / p).abs() < 1e-6, "{} vs {p}", r.p_value);
            assert!(r.p_value < 0.001);
        }
        assert!((closed_form([[14, 36], [40, 10]]) - 27.214170692431566).abs() < 1e-9);
    }

    #[test]
    fn yates_correction() {
        let r = chi_square_independence([[14, 36], [40, 10]], true).unwrap();
        assert!((r.statistic - 25.161030595813205).abs() < 1e-9);
        assert!(((r.p_value - 5.273714188805195e-07) / 5.273714188805195e-07).abs() < 1e-6);
        let r = chi_square_independence([[11, 39], [39, 11]], true).unwrap();
        assert!((r.statistic - 29.16).abs() < 1e-9);
    }

    #[test]
    fn independence_gives_p_one() {
        let r = chi_square_independence([[25, 25], [25, 25]], false).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn swap_invariance() {
        let t = [[7, 13], [21, 4]];
        let s = chi_square_independence(t, false).unwrap().statistic;
        let rows = chi_square_independence([t[1], t[0]], false).unwrap().statistic;
        let cols = chi_square_independence([[13, 7], [4, 21]], false).unwrap().statistic;
        assert!((s - rows).abs() < 1e-12 && (s - cols).abs() < 1e-12);
    }

    #[test]
    fn degenerate_tables() {
        assert!(matches!(chi_square_independence([[0, 0], [3, 4]], false), Err(Error::Degenerate(_))));
        assert!(matches!(chi_square_independence([[5, 0], [3, 0]], false), Err(Error::Degenerate(_))));
        assert!(matches!(chi_square_independence([[1, 0], [1, 30]], false), Err(Error::Degenerate(_))));
    }
}
