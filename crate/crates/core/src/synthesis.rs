//! Fixed-gain synthesis on the Galerkin surrogate.
//!
//! The value matrix maximizes `tr P_pc` subject to
//!
//! ```text
//! [ A_pcᵀ P A_pc + Q_pc − P    A_pcᵀ P B_pc         ]
//! [ B_pcᵀ P A_pc               R_pc + B_pcᵀ P B_pc  ]  ⪰ 0
//! ```
//!
//! whose maximizer is the stabilizing Riccati solution of the surrogate. The
//! gain then minimizes `tr[(𝒦 + S⁻¹T)ᵀ S (𝒦 + S⁻¹T)]` over `𝒦 = I ⊗ K`, with
//! `S = R_pc + B_pcᵀ P B_pc` and `T = B_pcᵀ P A_pc`. That objective equals
//! `tr(KᵀS̄K) + 2 tr(KᵀT̄) + const` where `S̄`, `T̄` sum the diagonal blocks of
//! `S` and `T`, so `K = −S̄⁻¹T̄`.

use alloc::vec::Vec;

use crate::galerkin::{build_reduced, order_warning, ReducedModel};
use crate::model::{sample_params, CostWeights, UncertainLti};
use crate::numerics::{dare, norm2, solve_spd, spectral_radius, sym_eigenvalues, symmetrize};
use crate::stability::{certify_ems, sampled_radius, StabilityCertificate};
use crate::{Error, Matrix, Result, Vector, Warning};

/// Relative tolerance for the a-posteriori LMI checks.
pub const LMI_TOL: f64 = 1e-8;

/// Smallest eigenvalue of a symmetric matrix relative to its spectral norm
/// (`0` for the zero matrix).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdCheck {
    pub min_eig: f64,
    pub norm: f64,
}

impl PsdCheck {
    pub fn of(m: &Matrix) -> Self {
        let ev = sym_eigenvalues(m);
        let min_eig = ev.first().copied().unwrap_or(0.0);
        let norm = ev.iter().fold(0.0f64, |a, v| a.max(libm::fabs(*v)));
        Self { min_eig, norm }
    }

    /// Like [`PsdCheck::of`] but measured against a caller-supplied scale,
    /// for expressions that are differences of larger terms.
    pub fn against(m: &Matrix, scale: f64) -> Self {
        Self {
            min_eig: Self::of(m).min_eig,
            norm: scale,
        }
    }

    pub fn relative(&self) -> f64 {
        if self.norm == 0.0 {
            0.0
        } else {
            self.min_eig / self.norm
        }
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.min_eig >= -tol * self.norm
    }
}

#[derive(Debug, Clone)]
pub struct ValueSolution {
    pub p_pc: Matrix,
    /// Frobenius norm of the Riccati residual.
    pub riccati_residual: f64,
    /// Trace-maximization LMI block matrix at `p_pc`.
    pub lmi1: PsdCheck,
}

/// Block matrix of the trace-maximization LMI.
pub fn value_lmi(red: &ReducedModel, p: &Matrix) -> Matrix {
    let (a, b) = (&red.a_pc, &red.b_pc);
    let nx = a.nrows();
    let nu = b.ncols();
    let mut blk = Matrix::zeros(nx + nu, nx + nu);
    let pa = p * a;
    let pb = p * b;
    blk.view_mut((0, 0), (nx, nx))
        .copy_from(&(a.transpose() * &pa + &red.q_pc - p));
    let off = a.transpose() * &pb;
    blk.view_mut((0, nx), (nx, nu)).copy_from(&off);
    blk.view_mut((nx, 0), (nu, nx)).copy_from(&off.transpose());
    blk.view_mut((nx, nx), (nu, nu))
        .copy_from(&(&red.r_pc + b.transpose() * &pb));
    symmetrize(&blk)
}

/// Trace-maximal `P_pc`: the stabilizing Riccati solution of the surrogate,
/// checked against the LMI.
pub fn solve_value(red: &ReducedModel) -> Result<ValueSolution> {
    let sol = dare(&red.a_pc, &red.b_pc, &red.q_pc, &red.r_pc).map_err(|e| match e {
        Error::SynthesisInfeasible(msg) => Error::SynthesisInfeasible(alloc::format!(
            "surrogate of order {} admits no stabilizing value matrix: {msg}",
            red.order
        )),
        other => other,
    })?;
    let p_pc = symmetrize(&sol.p);
    let lmi1 = PsdCheck::of(&value_lmi(red, &p_pc));
    Ok(ValueSolution {
        p_pc,
        riccati_residual: sol.residual,
        lmi1,
    })
}

fn sum_diag_blocks(m: &Matrix, order: usize, rows: usize, cols: usize) -> Matrix {
    let mut out = Matrix::zeros(rows, cols);
    for i in 0..=order {
        out += m.view((i * rows, i * cols), (rows, cols));
    }
    out
}

#[derive(Debug, Clone)]
pub struct GainExtraction {
    pub k: Matrix,
    /// Objective value at `k`, i.e. the trace of the slack `X` in the gain LMI.
    pub objective: f64,
    pub s_bar: Matrix,
    pub t_bar: Matrix,
    /// Gain LMI `[[X, H₂], [H₂ᵀ, H₄]]` with `X = H₂ S H₂ᵀ`.
    pub lmi2: PsdCheck,
}

/// `S = R_pc + B_pcᵀ P B_pc`, `T = B_pcᵀ P A_pc`.
fn s_and_t(red: &ReducedModel, p: &Matrix) -> (Matrix, Matrix) {
    let bp = red.b_pc.transpose() * p;
    (symmetrize(&(&red.r_pc + &bp * &red.b_pc)), bp * &red.a_pc)
}

/// `tr[(𝒦 + S⁻¹T)ᵀ S (𝒦 + S⁻¹T)]` at `𝒦 = I ⊗ K`.
pub fn gain_objective(red: &ReducedModel, p: &Matrix, k: &Matrix) -> Result<f64> {
    let (s, t) = s_and_t(red, p);
    let d = red.structured_gain(k) + solve_spd(&s, &t, "S")?;
    Ok((d.transpose() * s * d).trace())
}

/// Gradient `2(S̄K + T̄)` of the gain objective.
pub fn gain_gradient(ext: &GainExtraction, k: &Matrix) -> Matrix {
    (&ext.s_bar * k + &ext.t_bar) * 2.0
}

pub fn extract_gain(red: &ReducedModel, p: &Matrix) -> Result<GainExtraction> {
    let (s, t) = s_and_t(red, p);
    let s_bar = sum_diag_blocks(&s, red.order, red.m, red.m);
    let t_bar = sum_diag_blocks(&t, red.order, red.m, red.n);
    let k = -solve_spd(&s_bar, &t_bar, "S̄").map_err(|_| {
        Error::Numerical("block sum of R_pc + B_pcᵀP_pcB_pc is singular".into())
    })?;

    let s_inv_t = solve_spd(&s, &t, "S")?;
    let h2 = (red.structured_gain(&k) + s_inv_t).transpose();
    let x = &h2 * &s * h2.transpose();
    let objective = x.trace();
    let h4 = solve_spd(&s, &Matrix::identity(s.nrows(), s.ncols()), "S")?;
    let (nx, nu) = (h2.nrows(), h2.ncols());
    let mut lmi = Matrix::zeros(nx + nu, nx + nu);
    lmi.view_mut((0, 0), (nx, nx)).copy_from(&x);
    lmi.view_mut((0, nx), (nx, nu)).copy_from(&h2);
    lmi.view_mut((nx, 0), (nu, nx)).copy_from(&h2.transpose());
    lmi.view_mut((nx, nx), (nu, nu)).copy_from(&h4);
    Ok(GainExtraction {
        k,
        objective,
        s_bar,
        t_bar,
        lmi2: PsdCheck::of(&symmetrize(&lmi)),
    })
}

/// `(A + B𝒦)ᵀP(A + B𝒦) − P + Q + 𝒦ᵀR𝒦`, which must be PSD for the cost
/// lower bound to hold along the surrogate.
pub fn descent_expression(red: &ReducedModel, p: &Matrix, k: &Matrix) -> Matrix {
    let kk = red.structured_gain(k);
    let acl = &red.a_pc + &red.b_pc * &kk;
    symmetrize(&(acl.transpose() * p * &acl - p + &red.q_pc + kk.transpose() * &red.r_pc * &kk))
}

/// PSD check of [`descent_expression`], relative to the largest of its terms.
/// The expression vanishes identically for a deterministic plant.
pub fn descent_check(red: &ReducedModel, p: &Matrix, k: &Matrix) -> PsdCheck {
    let kk = red.structured_gain(k);
    let acl = &red.a_pc + &red.b_pc * &kk;
    let terms = [
        acl.transpose() * p * &acl,
        p.clone(),
        red.q_pc.clone(),
        kk.transpose() * &red.r_pc * &kk,
    ];
    let scale = terms.iter().fold(0.0f64, |a, t| a.max(norm2(t)));
    PsdCheck::against(&descent_expression(red, p, k), scale)
}

#[derive(Debug, Clone)]
pub struct GainResult {
    pub order: usize,
    pub k: Matrix,
    pub p_pc: Matrix,
    pub riccati_residual: f64,
    pub lmi1: PsdCheck,
    /// Gain objective at `k`.
    pub lmi2_gap: f64,
    pub lmi2: PsdCheck,
    pub descent: PsdCheck,
    /// Spectral radius of `A_pc + B_pc 𝒦`.
    pub closed_loop_radius: f64,
    /// Largest radius of the realized loop on the 101-point check grid.
    pub sampled_radius: f64,
    pub ems_certificate: Option<StabilityCertificate>,
    pub warnings: Vec<Warning>,
}

/// Full pipeline: surrogate, value matrix, gain, radii and optionally the
/// mean-square certificate of the closed loop.
pub fn synthesize(sys: &UncertainLti, w: &CostWeights, order: usize, certify: bool) -> Result<GainResult> {
    let mut warnings: Vec<Warning> = order_warning(sys, order).into_iter().collect();
    let red = build_reduced(sys, w, order)?;
    let value = solve_value(&red)?;
    let gain = extract_gain(&red, &value.p_pc)?;
    let closed_loop_radius = spectral_radius(&red.closed_loop(Some(&gain.k)))?;
    let sampled = sampled_radius(sys, Some(&gain.k))?;
    if closed_loop_radius >= 1.0 {
        warnings.push(Warning::SurrogateUnstable {
            radius: closed_loop_radius,
            sampled_radius: sampled,
        });
    }
    let descent = descent_check(&red, &value.p_pc, &gain.k);
    let ems_certificate = if certify {
        Some(certify_ems(sys, Some(&gain.k), order)?)
    } else {
        None
    };
    Ok(GainResult {
        order,
        k: gain.k,
        p_pc: value.p_pc,
        riccati_residual: value.riccati_residual,
        lmi1: value.lmi1,
        lmi2_gap: gain.objective,
        lmi2: gain.lmi2,
        descent,
        closed_loop_radius,
        sampled_radius: sampled,
        ems_certificate,
        warnings,
    })
}

/// Monte Carlo estimate of `E[Σ_t xᵀQx + uᵀRu]` under `u = Kx`.
#[derive(Debug, Clone, PartialEq)]
pub struct McCost {
    pub mean_cost: f64,
    pub std_err: f64,
    pub samples: usize,
    pub divergent: usize,
    pub warning: Option<Warning>,
}

/// State norm beyond which a sample counts as divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// A sample's sum stops once the stage cost falls below this fraction of it.
const TAIL_TOL: f64 = 1e-13;
const HORIZON_CAP: usize = 1_000_000;

pub fn mc_cost(
    sys: &UncertainLti,
    w: &CostWeights,
    k: &Matrix,
    x0: &Vector,
    samples: usize,
    horizon: usize,
    seed: u64,
) -> Result<McCost> {
    if samples == 0 {
        return Err(Error::InvalidArgument("at least one sample is required".into()));
    }
    if x0.len() != sys.states() {
        return Err(Error::DimensionMismatch {
            field: "x0".into(),
            expected: (sys.states(), 1),
            found: (x0.len(), 1),
        });
    }
    if k.shape() != (sys.inputs(), sys.states()) {
        return Err(Error::DimensionMismatch {
            field: "K".into(),
            expected: (sys.inputs(), sys.states()),
            found: k.shape(),
        });
    }
    let stage_weight = w.q() + k.transpose() * w.r() * k;
    let cap = horizon.max(1).saturating_mul(1000).min(HORIZON_CAP).max(horizon);
    let mut costs = Vec::with_capacity(samples);
    let mut divergent = 0;
    for d in sample_params(samples, seed) {
        let (a, b) = sys.realize(d)?;
        let acl = a + b * k;
        let mut x = x0.clone();
        let mut sum = 0.0;
        let mut ok = false;
        for t in 0..=cap {
            let stage = (x.transpose() * &stage_weight * &x)[(0, 0)];
            sum += stage;
            let norm = x.norm();
            if !norm.is_finite() || norm > DIVERGENCE_NORM {
                break;
            }
            if t >= horizon && (stage <= TAIL_TOL * sum || norm == 0.0) {
                ok = true;
                break;
            }
            x = &acl * x;
        }
        if ok {
            costs.push(sum);
        } else {
            divergent += 1;
        }
    }
    let count = costs.len();
    let (mean_cost, std_err) = if count == 0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        let mean = costs.iter().sum::<f64>() / count as f64;
        let var = if count > 1 {
            costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (count - 1) as f64
        } else {
            0.0
        };
        (mean, libm::sqrt(var / count as f64))
    };
    let warning = (divergent * 100 > samples).then_some(Warning::DivergentSamples {
        count: divergent,
        total: samples,
    });
    Ok(McCost {
        mean_cost,
        std_err,
        samples,
        divergent,
        warning,
    })
}

/// One row of the gain-versus-order table.
#[derive(Debug, Clone)]
pub struct OrderRow {
    pub order: usize,
    pub k_norm: Option<f64>,
    pub surrogate_radius: Option<f64>,
    pub error: Option<Error>,
}

impl OrderRow {
    pub fn feasible(&self) -> bool {
        self.error.is_none()
    }
}

/// `‖K‖₂` and surrogate radius per expansion order; failures stay in the table.
pub fn gain_vs_order(sys: &UncertainLti, w: &CostWeights, orders: &[usize]) -> Result<Vec<OrderRow>> {
    if orders.is_empty() {
        return Err(Error::InvalidArgument("no expansion orders given".into()));
    }
    Ok(orders
        .iter()
        .map(|&order| match synthesize(sys, w, order, false) {
            Ok(res) => OrderRow {
                order,
                k_norm: Some(norm2(&res.k)),
                surrogate_radius: Some(res.closed_loop_radius),
                error: None,
            },
            Err(e) => OrderRow {
                order,
                k_norm: None,
                surrogate_radius: None,
                error: Some(e),
            },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    const P_SCALAR: f64 = 1.1327822185373187;
    const K_SCALAR: f64 = -0.2655644370746374;

    fn scalar_plant() -> (UncertainLti, CostWeights) {
        (
            UncertainLti::deterministic("s", dmatrix![0.5], dmatrix![1.0]).unwrap(),
            CostWeights::new(dmatrix![1.0], dmatrix![1.0]).unwrap(),
        )
    }

    #[test]
    fn scalar_value_and_gain() {
        let (sys, w) = scalar_plant();
        let red = build_reduced(&sys, &w, 0).unwrap();
        let v = solve_value(&red).unwrap();
        assert_abs_diff_eq!(v.p_pc[(0, 0)], P_SCALAR, epsilon = 1e-12);
        assert!(v.lmi1.holds(LMI_TOL));
        let g = extract_gain(&red, &v.p_pc).unwrap();
        assert_abs_diff_eq!(g.k[(0, 0)], K_SCALAR, epsilon = 1e-12);
        assert!(g.lmi2.holds(LMI_TOL));
    }

    #[test]
    fn zero_state_weight() {
        let sys = UncertainLti::deterministic("s", dmatrix![0.5, 0.1; 0.0, 0.2], dmatrix![1.0; 0.0]).unwrap();
        let w = CostWeights::new(Matrix::zeros(2, 2), dmatrix![1.0]).unwrap();
        let red = build_reduced(&sys, &w, 1).unwrap();
        let v = solve_value(&red).unwrap();
        assert_eq!(v.p_pc, Matrix::zeros(4, 4));
        assert!(v.lmi1.holds(LMI_TOL));
    }

    #[test]
    fn deterministic_blocks_scale_by_gram() {
        let (sys, w) = scalar_plant();
        let red = build_reduced(&sys, &w, 2).unwrap();
        let v = solve_value(&red).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(v.p_pc[(i, i)], P_SCALAR / (2 * i + 1) as f64, epsilon = 1e-12);
        }
        let res = synthesize(&sys, &w, 2, false).unwrap();
        assert_abs_diff_eq!(res.k[(0, 0)], K_SCALAR, epsilon = 1e-12);
    }

    #[test]
    fn perturbed_gains_do_worse() {
        let sys = UncertainLti::new(
            "u",
            vec![dmatrix![0.9, 0.2; -0.1, 0.8], dmatrix![0.1, 0.0; 0.05, 0.1]],
            vec![dmatrix![0.0; 1.0], dmatrix![0.0; 0.3]],
            2,
        )
        .unwrap();
        let w = CostWeights::new(Matrix::identity(2, 2), dmatrix![0.5]).unwrap();
        let red = build_reduced(&sys, &w, 2).unwrap();
        let v = solve_value(&red).unwrap();
        let g = extract_gain(&red, &v.p_pc).unwrap();
        let base = gain_objective(&red, &v.p_pc, &g.k).unwrap();
        assert_abs_diff_eq!(base, g.objective, epsilon = 1e-10 * base.max(1.0));
        for (i, e) in [dmatrix![1.0, 0.0], dmatrix![0.0, 1.0], dmatrix![-0.6, 0.8]].iter().enumerate() {
            let eps = 1e-3 * (i + 1) as f64;
            assert!(gain_objective(&red, &v.p_pc, &(&g.k + e * eps)).unwrap() >= base);
        }
        let grad = gain_gradient(&g, &g.k);
        assert!(grad.norm() <= 1e-9 * (g.s_bar.norm() * g.k.norm() + g.t_bar.norm()));
    }

    #[test]
    fn scalar_uncertain_plant_is_certified() {
        let sys = UncertainLti::new(
            "u",
            vec![dmatrix![0.5], dmatrix![0.2]],
            vec![dmatrix![1.0], dmatrix![0.0]],
            3,
        )
        .unwrap();
        let w = CostWeights::new(dmatrix![1.0], dmatrix![1.0]).unwrap();
        let res = synthesize(&sys, &w, 3, true).unwrap();
        assert!(res.closed_loop_radius < 1.0);
        assert!(res.sampled_radius < 1.0);
        assert!(res.ems_certificate.unwrap().feasible);
        assert!(res.warnings.is_empty());
        assert!(res.descent.holds(LMI_TOL));
    }

    #[test]
    fn mc_cost_matches_riccati_value() {
        let (sys, w) = scalar_plant();
        let x0 = dvector![1.0];
        let c = mc_cost(&sys, &w, &dmatrix![K_SCALAR], &x0, 8, 10, 1).unwrap();
        assert!((c.mean_cost - P_SCALAR).abs() <= 1e-3 * P_SCALAR);
        assert_eq!(c.divergent, 0);
        let zero = mc_cost(&sys, &w, &dmatrix![K_SCALAR], &dvector![0.0], 5, 10, 1).unwrap();
        assert_eq!(zero.mean_cost, 0.0);
        assert!(mc_cost(&sys, &w, &dmatrix![K_SCALAR], &x0, 0, 10, 1).is_err());
    }

    #[test]
    fn mc_cost_flags_divergence() {
        let sys = UncertainLti::deterministic("s", dmatrix![1.5], dmatrix![1.0]).unwrap();
        let w = CostWeights::new(dmatrix![1.0], dmatrix![1.0]).unwrap();
        let c = mc_cost(&sys, &w, &dmatrix![0.0], &dvector![1.0], 10, 10, 1).unwrap();
        assert_eq!(c.divergent, 10);
        assert!(matches!(c.warning, Some(Warning::DivergentSamples { count: 10, total: 10 })));
    }

    #[test]
    fn order_table() {
        let (sys, w) = scalar_plant();
        let rows = gain_vs_order(&sys, &w, &[0, 1, 2]).unwrap();
        assert_eq!(rows.len(), 3);
        let k0 = rows[0].k_norm.unwrap();
        for r in &rows {
            assert!(r.feasible());
            assert_abs_diff_eq!(r.k_norm.unwrap(), k0, epsilon = 1e-10);
        }
        // B(Δ) = φ_1: no input authority in the order-0 surrogate.
        let sys = UncertainLti::new(
            "b1",
            vec![dmatrix![1.2], dmatrix![0.0]],
            vec![dmatrix![0.0], dmatrix![1.0]],
            1,
        )
        .unwrap();
        let rows = gain_vs_order(&sys, &w, &[0, 1]).unwrap();
        assert!(!rows[0].feasible());
        assert!(matches!(rows[0].error, Some(Error::SynthesisInfeasible(_))));
        assert!(rows[1].feasible());
        assert!(gain_vs_order(&sys, &w, &[]).is_err());
    }
}
