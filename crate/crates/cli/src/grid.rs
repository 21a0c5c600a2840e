//! Parsers for `a:b:step` parameter grids, order ranges and vector literals.

use pcdlqr::model::check_delta;

use crate::CliError;

/// `a:b:step` inclusive of both ends when `b - a` is a multiple of `step`.
pub fn parse_deltas(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Input(format!("--deltas expects a:b:step, got {spec:?}"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [a, b, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0 && a <= b && step.is_finite()) {
        return Err(bad());
    }
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|i| {
            let d = if i + 1 == count && (a + i as f64 * step - b).abs() <= 1e-9 * step {
                b
            } else {
                a + i as f64 * step
            };
            check_delta(d).map_err(|_| CliError::Input(format!("--deltas value {d} is outside [-1, 1]")))
        })
        .collect()
}

/// `lo..hi` (inclusive) or a comma list.
pub fn parse_orders(spec: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Input(format!("--orders expects lo..hi or a comma list, got {spec:?}"));
    let orders: Vec<usize> = if let Some((lo, hi)) = spec.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        (lo..=hi).collect()
    } else {
        spec.split(',')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if orders.is_empty() {
        return Err(bad());
    }
    Ok(orders)
}

pub fn parse_vector(spec: &str, field: &str) -> Result<Vec<f64>, CliError> {
    spec.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Input(format!("`{field}` entry {p:?} is not a number")))
        })
        .collect()
}
