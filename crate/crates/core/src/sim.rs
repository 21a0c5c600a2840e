//! Closed-loop trajectories across the parameter range and controllability
//! diagnostics.

use alloc::vec::Vec;

use nalgebra::Cholesky;

use crate::galerkin::{build_reduced, lift_state, propagate};
use crate::model::{check_delta, sample_params, CostWeights, UncertainLti};
use crate::numerics::{dlyap, spectral_radius, symmetrize, STABILITY_SLACK};
use crate::synthesis::DIVERGENCE_NORM;
use crate::{Error, Matrix, Result, Vector};

fn closed_loop(sys: &UncertainLti, k: Option<&Matrix>, delta: f64) -> Result<Matrix> {
    let (a, b) = sys.realize(delta)?;
    Ok(match k {
        Some(k) => a + b * k,
        None => a,
    })
}

fn check_x0(sys: &UncertainLti, x0: &Vector) -> Result<()> {
    if x0.len() != sys.states() {
        return Err(Error::DimensionMismatch {
            field: "x0".into(),
            expected: (sys.states(), 1),
            found: (x0.len(), 1),
        });
    }
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { field: "x0".into() });
    }
    Ok(())
}

fn check_gain(sys: &UncertainLti, k: Option<&Matrix>) -> Result<()> {
    match k {
        Some(k) if k.shape() != (sys.inputs(), sys.states()) => Err(Error::DimensionMismatch {
            field: "K".into(),
            expected: (sys.inputs(), sys.states()),
            found: k.shape(),
        }),
        _ => Ok(()),
    }
}

/// States `x_0..x_steps` and inputs `u_0..u_steps` of the loop realized at `delta`.
pub fn simulate(
    sys: &UncertainLti,
    k: Option<&Matrix>,
    delta: f64,
    x0: &Vector,
    steps: usize,
) -> Result<(Vec<Vector>, Vec<Vector>)> {
    check_x0(sys, x0)?;
    check_gain(sys, k)?;
    let acl = closed_loop(sys, k, delta)?;
    let input = |x: &Vector| match k {
        Some(k) => k * x,
        None => Vector::zeros(sys.inputs()),
    };
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    for step in 0..=steps {
        if step > 0 {
            x = &acl * x;
            let norm = x.norm();
            if !norm.is_finite() || norm > DIVERGENCE_NORM {
                return Err(Error::Divergence { step });
            }
        }
        inputs.push(input(&x));
        states.push(x.clone());
    }
    Ok((states, inputs))
}

/// Trajectories for every grid point. A diverged point keeps empty series and
/// records the step in `divergence`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle {
    pub deltas: Vec<f64>,
    pub times: Vec<usize>,
    pub states: Vec<Vec<Vector>>,
    pub inputs: Vec<Vec<Vector>>,
    pub outputs: Option<Vec<Vec<Vector>>>,
    pub divergence: Vec<Option<usize>>,
}

pub fn sweep(
    sys: &UncertainLti,
    k: Option<&Matrix>,
    grid: &[f64],
    x0: &Vector,
    steps: usize,
    c: Option<&Matrix>,
) -> Result<TrajectoryBundle> {
    for &d in grid {
        check_delta(d)?;
    }
    check_x0(sys, x0)?;
    check_gain(sys, k)?;
    if let Some(c) = c {
        if c.ncols() != sys.states() {
            return Err(Error::DimensionMismatch {
                field: "C".into(),
                expected: (c.nrows(), sys.states()),
                found: c.shape(),
            });
        }
    }
    let mut bundle = TrajectoryBundle {
        deltas: grid.to_vec(),
        times: (0..=steps).collect(),
        states: Vec::with_capacity(grid.len()),
        inputs: Vec::with_capacity(grid.len()),
        outputs: c.map(|_| Vec::with_capacity(grid.len())),
        divergence: Vec::with_capacity(grid.len()),
    };
    for &d in grid {
        let (xs, us, div) = match simulate(sys, k, d, x0, steps) {
            Ok((xs, us)) => (xs, us, None),
            Err(Error::Divergence { step }) => (Vec::new(), Vec::new(), Some(step)),
            Err(e) => return Err(e),
        };
        if let (Some(c), Some(out)) = (c, bundle.outputs.as_mut()) {
            out.push(xs.iter().map(|x| c * x).collect());
        }
        bundle.states.push(xs);
        bundle.inputs.push(us);
        bundle.divergence.push(div);
    }
    Ok(bundle)
}

/// `det(W_c⁻¹)` at one grid point; `None` where the open loop is not stable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyPoint {
    pub delta: f64,
    pub log_det_inv: Option<f64>,
}

impl EnergyPoint {
    pub fn det_inv(&self) -> Option<f64> {
        self.log_det_inv.map(libm::exp)
    }
}

/// Infinite-horizon controllability Gramian `W_c = dlyap(A, BBᵀ)` per point.
/// A singular Gramian gives `log_det_inv = +∞`.
pub fn controllability_energy(sys: &UncertainLti, grid: &[f64]) -> Result<Vec<EnergyPoint>> {
    let mut out = Vec::with_capacity(grid.len());
    for &d in grid {
        check_delta(d)?;
        let (a, b) = sys.realize(d)?;
        if spectral_radius(&a)? >= 1.0 - STABILITY_SLACK {
            out.push(EnergyPoint { delta: d, log_det_inv: None });
            continue;
        }
        let wc = symmetrize(&dlyap(&a, &(&b * b.transpose()))?);
        let log_det_inv = match Cholesky::new(wc) {
            Some(ch) => {
                let l = ch.l();
                -2.0 * l.diagonal().iter().map(|v| libm::log(*v)).sum::<f64>()
            }
            None => f64::INFINITY,
        };
        out.push(EnergyPoint { delta: d, log_det_inv: Some(log_det_inv) });
    }
    Ok(out)
}

/// Time-aggregated relative L2 errors of the surrogate mean and covariance
/// against Monte Carlo estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateError {
    pub rel_error_mean: f64,
    pub rel_error_var: f64,
}

/// Covariance errors are measured against at least this fraction of the
/// second moment, so a degenerate ensemble is not divided by rounding noise.
const VAR_FLOOR: f64 = 1e-4;

fn rel(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        libm::sqrt(num)
    } else {
        libm::sqrt(num / den)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn surrogate_vs_mc(
    sys: &UncertainLti,
    k: Option<&Matrix>,
    order: usize,
    x0: &Vector,
    steps: usize,
    samples: usize,
    seed: u64,
) -> Result<SurrogateError> {
    if samples < 2 {
        return Err(Error::InvalidArgument("at least two samples are required".into()));
    }
    check_x0(sys, x0)?;
    check_gain(sys, k)?;
    let n = sys.states();
    // Cost weights only shape Q_pc and R_pc, which propagation ignores.
    let w = CostWeights::new(Matrix::identity(n, n), Matrix::identity(sys.inputs(), sys.inputs()))?;
    let red = build_reduced(sys, &w, order)?;
    let traj = propagate(&red, k, &lift_state(x0, order)?, steps)?;

    let params = sample_params(samples, seed);
    let loops = params
        .iter()
        .map(|&d| closed_loop(sys, k, d))
        .collect::<Result<Vec<_>>>()?;
    let run = |f: &mut dyn FnMut(usize, &Vector)| {
        for acl in &loops {
            let mut x = x0.clone();
            for t in 0..=steps {
                if t > 0 {
                    x = acl * x;
                }
                f(t, &x);
            }
        }
    };
    // Two passes keep the covariance free of cancellation for tight ensembles.
    let s = samples as f64;
    let mut mean = alloc::vec![Vector::zeros(n); steps + 1];
    run(&mut |t, x| mean[t] += x / s);
    let mut cov = alloc::vec![Matrix::zeros(n, n); steps + 1];
    run(&mut |t, x| {
        let e = x - &mean[t];
        cov[t] += &e * e.transpose() / (s - 1.0);
    });
    let (mut num_m, mut den_m, mut num_v, mut den_v, mut floor) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (t, pc) in traj.iter().enumerate() {
        floor += (&cov[t] + &mean[t] * mean[t].transpose()).norm_squared();
        let (sm, sv) = pc.moments();
        num_m += (sm - &mean[t]).norm_squared();
        den_m += mean[t].norm_squared();
        num_v += (sv - &cov[t]).norm_squared();
        den_v += cov[t].norm_squared();
    }
    Ok(SurrogateError {
        rel_error_mean: rel(num_m, den_m),
        rel_error_var: rel(num_v, den_v.max(VAR_FLOOR * VAR_FLOOR * floor)),
    })
}
