//! CSV and manifest writers. Floats are written with 17 significant digits
//! in scientific notation so files diff cleanly and round-trip exactly.

use std::io;
use std::path::Path;

use crate::montecarlo::RatioRow;

use super::suites::CheckRow;

pub const RATIO_COLUMNS: [&str; 10] = [
    "p", "q", "regime_case", "family", "lhs", "lhs_se", "rhs", "ratio", "replicas", "seed",
];

pub const CHECK_COLUMNS: [&str; 5] = ["suite", "case", "value", "bound", "pass"];

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn to_io(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

pub fn write_ratios(path: &Path, rows: &[RatioRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    w.write_record(RATIO_COLUMNS).map_err(to_io)?;
    for r in rows {
        w.write_record([
            fmt_float(r.p),
            fmt_float(r.q),
            r.case.to_string(),
            r.family.clone(),
            fmt_float(r.lhs),
            fmt_float(r.lhs_se),
            fmt_float(r.rhs),
            fmt_opt(r.ratio),
            r.replicas.to_string(),
            r.seed.to_string(),
        ])
        .map_err(to_io)?;
    }
    w.flush()
}

pub fn write_checks(path: &Path, rows: &[CheckRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    w.write_record(CHECK_COLUMNS).map_err(to_io)?;
    for r in rows {
        w.write_record([
            r.suite.clone(),
            r.case.clone(),
            fmt_opt(r.value),
            r.bound.clone(),
            r.pass.to_string(),
        ])
        .map_err(to_io)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(2.0), "2.0000000000000000e0");
        let x = 1.0 / 3.0;
        assert_eq!(fmt_float(x).parse::<f64>().unwrap(), x);
    }
}
