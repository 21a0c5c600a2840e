//! CSV layouts. Floats use the shortest round-trip form (exponent notation at
//! the extremes), so reruns are byte-identical.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use pcdlqr::numerics::SpectralResult;
use pcdlqr::sim::{EnergyPoint, TrajectoryBundle};
use pcdlqr::synthesis::{McCost, OrderRow};

use crate::CliError;

fn writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::Writer::from_path(path)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

/// `delta,t,x1..xn,u1..um[,y1..yp]`, rows ordered by `(delta, t)`. Diverged
/// parameter values contribute no rows.
pub fn write_trajectories(path: &Path, b: &TrajectoryBundle, n: usize, m: usize) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let p = b
        .outputs
        .as_ref()
        .and_then(|o| o.iter().flatten().next().map(|y| y.len()))
        .unwrap_or(0);
    let mut header = vec!["delta".to_string(), "t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    if b.outputs.is_some() {
        header.extend((1..=p).map(|i| format!("y{i}")));
    }
    w.write_record(&header)?;
    for (j, &d) in b.deltas.iter().enumerate() {
        for (t, (x, u)) in b.states[j].iter().zip(&b.inputs[j]).enumerate() {
            let mut rec = vec![num(d), b.times[t].to_string()];
            rec.extend(x.iter().map(|v| num(*v)));
            rec.extend(u.iter().map(|v| num(*v)));
            if let Some(out) = &b.outputs {
                rec.extend(out[j][t].iter().map(|v| num(*v)));
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `delta,re,im`, one row per eigenvalue.
pub fn write_poles(path: &Path, grid: &[f64], spectra: &[SpectralResult]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["delta", "re", "im"])?;
    for (d, s) in grid.iter().zip(spectra) {
        for z in &s.eigenvalues {
            w.write_record([num(*d), num(z.re), num(z.im)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t,second_moment` followed by a `#` summary line of the Monte Carlo cost.
pub fn write_moments(path: &Path, moments: &[f64], cost: &McCost) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["t", "second_moment"])?;
    for (t, v) in moments.iter().enumerate() {
        w.write_record([t.to_string(), num(*v)])?;
    }
    let mut file = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    writeln!(
        file,
        "# cost_mean={} cost_std_err={} samples={} divergent={}",
        num(cost.mean_cost),
        num(cost.std_err),
        cost.samples,
        cost.divergent
    )?;
    Ok(())
}

/// `order,knorm,surrogate_radius,feasible`; infeasible orders leave the
/// numeric columns empty.
pub fn write_report(path: &Path, rows: &[OrderRow]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["order", "knorm", "surrogate_radius", "feasible"])?;
    for r in rows {
        w.write_record([
            r.order.to_string(),
            r.k_norm.map(num).unwrap_or_default(),
            r.surrogate_radius.map(num).unwrap_or_default(),
            r.feasible().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `delta,v,det_inv`; `v` is empty without a parameter scale and `det_inv`
/// is empty where the open loop is unstable.
pub fn write_energy(path: &Path, points: &[EnergyPoint], v: impl Fn(f64) -> Option<f64>) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["delta", "v", "det_inv"])?;
    for p in points {
        w.write_record([
            num(p.delta),
            v(p.delta).map(num).unwrap_or_default(),
            p.det_inv().map(num).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
