//! CSV helpers shared by the audit report and the CLI.

use std::fmt::Write as _;

/// Nine significant digits in scientific notation.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        format!("{x}")
    }
}

/// Header row plus one row per record, every cell formatted with [`fmt_float`].
pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt_float).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// `alpha,beta` curve.
pub fn curve_csv(points: &[(f64, f64)]) -> String {
    csv_table(&["alpha", "beta"], points.iter().map(|&(a, b)| vec![a, b]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_float(0.1), "1.00000000e-1");
        assert_eq!(fmt_float(-1234.56789012), "-1.23456789e3");
        assert_eq!(fmt_float(f64::INFINITY), "inf");
    }

    #[test]
    fn table_layout() {
        let csv = curve_csv(&[(0.0, 1.0), (1.0, 0.0)]);
        assert_eq!(csv, "alpha,beta\n0.00000000e0,1.00000000e0\n1.00000000e0,0.00000000e0\n");
    }
}
