//! Galerkin surrogate of the random closed loop on the stacked expansion
//! coefficients `x_pc = [x_0; …; x_N]`.

use alloc::vec::Vec;

use crate::basis::{self, gram, gram_entry, moment_tensor};
use crate::model::{CostWeights, UncertainLti};
use crate::numerics::kron;
use crate::{Error, Matrix, Result, Vector, Warning};

/// Deterministic surrogate `x_pc⁺ = (A_pc + B_pc (I ⊗ K)) x_pc` with cost
/// weights `Q_pc = G ⊗ Q` and `R_pc = G ⊗ R`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub order: usize,
    pub n: usize,
    pub m: usize,
    pub a_pc: Matrix,
    pub b_pc: Matrix,
    pub q_pc: Matrix,
    pub r_pc: Matrix,
}

impl ReducedModel {
    /// `𝒦 = I_{N+1} ⊗ K`.
    pub fn structured_gain(&self, k: &Matrix) -> Matrix {
        kron(&Matrix::identity(self.order + 1, self.order + 1), k)
    }

    /// `A_pc + B_pc 𝒦`, or `A_pc` for the open loop.
    pub fn closed_loop(&self, k: Option<&Matrix>) -> Matrix {
        match k {
            Some(k) => &self.a_pc + &self.b_pc * self.structured_gain(k),
            None => self.a_pc.clone(),
        }
    }
}

/// Warns when the state expansion is shorter than the plant expansion.
pub fn order_warning(sys: &UncertainLti, order: usize) -> Option<Warning> {
    (order < sys.model_order()).then_some(Warning::OrderBelowModelOrder {
        order,
        model_order: sys.model_order(),
    })
}

/// Block `(i, j)` of `A_pc` is `(2i+1) Σ_m E[φ_i φ_j φ_m] A_m`; `B_pc` likewise.
pub fn build_reduced(sys: &UncertainLti, w: &CostWeights, order: usize) -> Result<ReducedModel> {
    let (n, m) = (sys.states(), sys.inputs());
    w.check_dims(n, m)?;
    let n_ord = sys.model_order();
    let t3 = moment_tensor(3, order.max(n_ord))?;
    let dim = order + 1;
    let mut a_pc = Matrix::zeros(n * dim, n * dim);
    let mut b_pc = Matrix::zeros(n * dim, m * dim);
    for i in 0..dim {
        let inv_gram = (2 * i + 1) as f64;
        for j in 0..dim {
            for mi in 0..=n_ord {
                let e = t3.get(&[i, j, mi]);
                if e == 0.0 {
                    continue;
                }
                let c = inv_gram * e;
                let mut blk = a_pc.view_mut((i * n, j * n), (n, n));
                blk += &sys.a_coeffs()[mi] * c;
                let mut blk = b_pc.view_mut((i * n, j * m), (n, m));
                blk += &sys.b_coeffs()[mi] * c;
            }
        }
    }
    let g = gram(order);
    Ok(ReducedModel {
        order,
        n,
        m,
        a_pc,
        b_pc,
        q_pc: kron(&g, w.q()),
        r_pc: kron(&g, w.r()),
    })
}

/// Stacked expansion coefficients; block `i` is the coefficient of `φ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcState {
    n: usize,
    order: usize,
    coeffs: Vector,
}

impl PcState {
    pub fn from_coeffs(n: usize, order: usize, coeffs: Vector) -> Result<Self> {
        if coeffs.len() != n * (order + 1) {
            return Err(Error::DimensionMismatch {
                field: "x_pc".into(),
                expected: (n * (order + 1), 1),
                found: (coeffs.len(), 1),
            });
        }
        Ok(Self { n, order, coeffs })
    }

    pub fn states(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &Vector {
        &self.coeffs
    }

    pub fn block(&self, i: usize) -> Vector {
        self.coeffs.rows(i * self.n, self.n).into_owned()
    }

    /// `Σ_i x_i φ_i(δ)`.
    pub fn reconstruct(&self, delta: f64) -> Result<Vector> {
        let phi = basis::eval_basis(delta, self.order)?;
        Ok(self.reconstruct_with(&phi))
    }

    fn reconstruct_with(&self, phi: &[f64]) -> Vector {
        let mut out = Vector::zeros(self.n);
        for (i, p) in phi.iter().enumerate().take(self.order + 1) {
            out += self.coeffs.rows(i * self.n, self.n) * *p;
        }
        out
    }

    /// Mean `x_0` and covariance `Σ_{i≥1} x_i x_iᵀ / (2i+1)`.
    pub fn moments(&self) -> (Vector, Matrix) {
        let mean = self.block(0);
        let mut cov = Matrix::zeros(self.n, self.n);
        for i in 1..=self.order {
            let xi = self.block(i);
            cov += &xi * xi.transpose() * gram_entry(i);
        }
        (mean, cov)
    }
}

/// Deterministic initial condition: block 0 is `x0`, the rest zero.
pub fn lift_state(x0: &Vector, order: usize) -> Result<PcState> {
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { field: "x0".into() });
    }
    let n = x0.len();
    let mut coeffs = Vector::zeros(n * (order + 1));
    coeffs.rows_mut(0, n).copy_from(x0);
    Ok(PcState { n, order, coeffs })
}

pub fn reconstruct(x: &PcState, delta: f64) -> Result<Vector> {
    x.reconstruct(delta)
}

pub fn surrogate_moments(x: &PcState) -> (Vector, Matrix) {
    x.moments()
}

fn check_state(red: &ReducedModel, x: &PcState) -> Result<()> {
    if x.n != red.n || x.order != red.order {
        return Err(Error::DimensionMismatch {
            field: "x_pc".into(),
            expected: (red.n * (red.order + 1), 1),
            found: (x.coeffs.len(), 1),
        });
    }
    Ok(())
}

/// Trajectory of `steps + 1` states starting at `x`.
pub fn propagate(
    red: &ReducedModel,
    k: Option<&Matrix>,
    x: &PcState,
    steps: usize,
) -> Result<Vec<PcState>> {
    check_state(red, x)?;
    let acl = red.closed_loop(k);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x.clone());
    let mut cur = x.coeffs.clone();
    for step in 1..=steps {
        cur = &acl * cur;
        if !cur.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { step });
        }
        out.push(PcState {
            n: x.n,
            order: x.order,
            coeffs: cur.clone(),
        });
    }
    Ok(out)
}

/// Largest projection `max_i ‖E[e(Δ) φ_i(Δ)]‖_∞` of the one-step residual
/// `e(δ) = x̂⁺(δ) − (A(δ) + B(δ)K) x̂(δ)` onto the retained basis, evaluated by
/// an exact quadrature.
pub fn galerkin_residual(
    sys: &UncertainLti,
    red: &ReducedModel,
    k: Option<&Matrix>,
    x: &PcState,
) -> Result<f64> {
    check_state(red, x)?;
    let next = PcState {
        n: x.n,
        order: x.order,
        coeffs: red.closed_loop(k) * &x.coeffs,
    };
    let order = red.order;
    let degree = 2 * order + sys.model_order();
    let (nodes, weights) = basis::quadrature_rule(degree / 2 + 1)?;
    let mut proj = alloc::vec![Vector::zeros(x.n); order + 1];
    for (&d, &wq) in nodes.iter().zip(&weights) {
        let phi = basis::legendre_values(d, order);
        let (a, b) = sys.realize(d)?;
        let acl = match k {
            Some(k) => a + b * k,
            None => a,
        };
        let e = next.reconstruct_with(&phi) - acl * x.reconstruct_with(&phi);
        for (i, p) in phi.iter().enumerate() {
            proj[i] += &e * (wq * p);
        }
    }
    Ok(proj.iter().fold(0.0f64, |acc, v| acc.max(v.amax())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    fn unit_weights(n: usize, m: usize) -> CostWeights {
        CostWeights::new(Matrix::identity(n, n), Matrix::identity(m, m)).unwrap()
    }

    #[test]
    fn deterministic_embedding() {
        let a0 = dmatrix![0.5, 0.1; -0.2, 0.3];
        let b0 = dmatrix![1.0; 0.5];
        let sys = UncertainLti::deterministic("d", a0.clone(), b0.clone()).unwrap();
        let red = build_reduced(&sys, &unit_weights(2, 1), 3).unwrap();
        let id = Matrix::identity(4, 4);
        assert_abs_diff_eq!(red.a_pc, kron(&id, &a0), epsilon = 1e-14);
        assert_abs_diff_eq!(red.b_pc, kron(&id, &b0), epsilon = 1e-14);
    }

    #[test]
    fn scalar_cost_weights() {
        let sys = UncertainLti::deterministic("d", dmatrix![0.5], dmatrix![1.0]).unwrap();
        let w = CostWeights::new(dmatrix![2.0], dmatrix![1.0]).unwrap();
        let red = build_reduced(&sys, &w, 2).unwrap();
        assert_abs_diff_eq!(
            red.q_pc,
            Matrix::from_diagonal(&dvector![2.0, 2.0 / 3.0, 2.0 / 5.0]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn order_zero_keeps_mean_slice() {
        let sys = UncertainLti::new(
            "s",
            vec![dmatrix![0.4], dmatrix![0.3]],
            vec![dmatrix![1.0], dmatrix![0.2]],
            0,
        )
        .unwrap();
        let red = build_reduced(&sys, &unit_weights(1, 1), 0).unwrap();
        assert_abs_diff_eq!(red.a_pc, dmatrix![0.4], epsilon = 1e-15);
        assert_abs_diff_eq!(red.b_pc, dmatrix![1.0], epsilon = 1e-15);
        assert!(order_warning(&sys, 0).is_some());
        assert!(order_warning(&sys, 1).is_none());
    }

    #[test]
    fn first_order_blocks() {
        // A(Δ) = a0 + a1 φ_1, N = 1: [[a0, a1/3], [a1, a0]].
        let sys = UncertainLti::new(
            "s",
            vec![dmatrix![0.4], dmatrix![0.3]],
            vec![dmatrix![0.0], dmatrix![0.0]],
            1,
        )
        .unwrap();
        let red = build_reduced(&sys, &unit_weights(1, 1), 1).unwrap();
        assert_abs_diff_eq!(red.a_pc, dmatrix![0.4, 0.1; 0.3, 0.4], epsilon = 1e-15);
    }

    #[test]
    fn lifting() {
        let x = lift_state(&dvector![1.0, 2.0], 2).unwrap();
        assert_eq!(x.coeffs(), &dvector![1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let z = lift_state(&Vector::zeros(3), 4).unwrap();
        assert!(z.coeffs().iter().all(|v| *v == 0.0));
        let x0 = dvector![0.0, 0.0, 30.0 * core::f64::consts::PI / 180.0, 0.0];
        let x = lift_state(&x0, 7).unwrap();
        assert_eq!(x.block(0), x0);
        for i in 1..=7 {
            assert_eq!(x.block(i), Vector::zeros(4));
        }
        for d in [-1.0, -0.3, 0.9] {
            assert_eq!(x.reconstruct(d).unwrap(), x0);
        }
    }

    #[test]
    fn propagation() {
        let sys = UncertainLti::deterministic("d", dmatrix![0.5], dmatrix![1.0]).unwrap();
        let red = build_reduced(&sys, &unit_weights(1, 1), 1).unwrap();
        let x = PcState::from_coeffs(1, 1, dvector![1.0, 0.0]).unwrap();
        let traj = propagate(&red, None, &x, 1).unwrap();
        assert_eq!(traj.len(), 2);
        assert_abs_diff_eq!(traj[1].coeffs(), &dvector![0.5, 0.0], epsilon = 1e-15);

        let zero = PcState::from_coeffs(1, 1, Vector::zeros(2)).unwrap();
        for s in propagate(&red, Some(&dmatrix![-0.3]), &zero, 5).unwrap() {
            assert!(s.coeffs().iter().all(|v| *v == 0.0));
        }

        let nil = UncertainLti::deterministic("z", dmatrix![0.0], dmatrix![1.0]).unwrap();
        let red = build_reduced(&nil, &unit_weights(1, 1), 1).unwrap();
        let traj = propagate(&red, Some(&dmatrix![0.0]), &x, 3).unwrap();
        assert!(traj[1..].iter().all(|s| s.coeffs().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn divergence_names_step() {
        let sys = UncertainLti::deterministic("d", dmatrix![1e200], dmatrix![1.0]).unwrap();
        let red = build_reduced(&sys, &unit_weights(1, 1), 0).unwrap();
        let x = PcState::from_coeffs(1, 0, dvector![1e200]).unwrap();
        assert_eq!(propagate(&red, None, &x, 5), Err(Error::Divergence { step: 1 }));
    }

    #[test]
    fn reconstruction() {
        let x = PcState::from_coeffs(2, 1, dvector![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(x.reconstruct(0.5).unwrap(), dvector![1.0, 0.5], epsilon = 1e-15);
        let x = PcState::from_coeffs(1, 2, dvector![0.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(x.reconstruct(0.0).unwrap()[0], -0.5, epsilon = 1e-15);
        assert!(x.reconstruct(2.0).is_err());
    }

    #[test]
    fn moments() {
        let x = PcState::from_coeffs(1, 2, dvector![3.0, 0.0, 0.0]).unwrap();
        let (mean, cov) = x.moments();
        assert_eq!(mean[0], 3.0);
        assert_eq!(cov[(0, 0)], 0.0);
        let x = PcState::from_coeffs(1, 1, dvector![0.0, 2.0]).unwrap();
        assert_abs_diff_eq!(x.moments().1[(0, 0)], 4.0 / 3.0, epsilon = 1e-15);
        let x = PcState::from_coeffs(1, 2, dvector![0.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(x.moments().1[(0, 0)], 8.0 / 15.0, epsilon = 1e-15);
    }

    #[test]
    fn residual_small() {
        let sys = UncertainLti::new(
            "s",
            vec![dmatrix![0.5, 0.1; 0.0, 0.4], dmatrix![0.1, 0.0; 0.05, -0.1]],
            vec![dmatrix![1.0; 0.0], dmatrix![0.2; 0.1]],
            2,
        )
        .unwrap();
        let red = build_reduced(&sys, &unit_weights(2, 1), 2).unwrap();
        let k = dmatrix![-0.2, 0.1];
        let x = PcState::from_coeffs(2, 2, dvector![1.0, -1.0, 0.5, 0.2, 0.1, 0.3]).unwrap();
        assert!(galerkin_residual(&sys, &red, Some(&k), &x).unwrap() <= 1e-12);
        let zero = PcState::from_coeffs(2, 2, Vector::zeros(6)).unwrap();
        assert_eq!(galerkin_residual(&sys, &red, Some(&k), &zero).unwrap(), 0.0);
    }
}
