//! Mean-square stability certification of the random loop
//! `x⁺ = (A(Δ) + B(Δ)K) x` with a parameter-dependent Lyapunov function
//! `V(x) = xᵀ P(Δ) x`, `P(Δ) = Σ_{j,k} φ_j φ_k P_jk`.
//!
//! The certificate asks for a block matrix `P̄ = [P_jk] ⪰ I` with
//! `E[W_pc] ≺ 0`, where block `(i, l)` of `E[W_pc]` is
//!
//! ```text
//! Σ_{j,k} Σ_{m,n} E[φ_i φ_j φ_k φ_m φ_n φ_l] A_mᵀ P_jk A_n − Σ_{j,k} E[φ_i φ_j φ_k φ_l] P_jk
//! ```
//!
//! and `A_m` are the closed-loop coefficients. The LMI constrains only
//! averages over `Δ`, so a certificate is reported feasible only when the
//! realized loops are also stable on a sampled grid.

use alloc::vec::Vec;

use nalgebra::SymmetricEigen;

use crate::basis::{self, moment_tensor, MomentTensor};
use crate::model::{sample_params, UncertainLti};
use crate::numerics::{dlyap, kron, psd_project, spectrum, sym_eigenvalues, symmetrize, SpectralResult};
use crate::{Error, Matrix, Result, Vector};

/// Margin below which the LMI counts as strictly satisfied.
pub const FEASIBLE_MARGIN: f64 = -1e-8;
/// Margin above which the search declares the LMI infeasible.
pub const INFEASIBLE_MARGIN: f64 = 1e-8;
/// Subgradient iterations before giving up.
pub const MAX_ITER: usize = 400;
/// Grid used for the sampled spectral-radius check.
pub const RADIUS_GRID_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCertificate {
    pub order: usize,
    /// Block Lyapunov matrix `P̄`, `n(N+1)` square.
    pub p_bar: Matrix,
    /// Largest eigenvalue of `E[W_pc]` at `p_bar`.
    pub margin: f64,
    pub pbar_min_eig: f64,
    /// `margin < FEASIBLE_MARGIN` with `p_bar ⪰ I`.
    pub lmi_feasible: bool,
    /// Largest spectral radius of the realized loop on the check grid.
    pub sampled_radius: f64,
    /// LMI feasible and every sampled loop strictly stable.
    pub feasible: bool,
    /// The search proved nothing better than `INFEASIBLE_MARGIN`.
    pub infeasible: bool,
    pub iterations: usize,
}

impl StabilityCertificate {
    pub fn block(&self, j: usize, k: usize) -> Matrix {
        let n = self.p_bar.nrows() / (self.order + 1);
        self.p_bar.view((j * n, k * n), (n, n)).into_owned()
    }
}

/// `A_m + B_m K`, or `A_m` when `k` is absent.
pub fn closed_loop_coeffs(sys: &UncertainLti, k: Option<&Matrix>) -> Vec<Matrix> {
    sys.a_coeffs()
        .iter()
        .zip(sys.b_coeffs())
        .map(|(a, b)| match k {
            Some(k) => a + b * k,
            None => a.clone(),
        })
        .collect()
}

/// The linear map `P̄ ↦ E[W_pc](P̄)` for fixed closed-loop coefficients.
#[derive(Debug, Clone)]
pub struct LyapunovOperator {
    n: usize,
    order: usize,
    coeffs: Vec<Matrix>,
    e6: MomentTensor,
    e4: MomentTensor,
}

impl LyapunovOperator {
    pub fn new(coeffs: &[Matrix], order: usize) -> Result<Self> {
        let Some(first) = coeffs.first() else {
            return Err(Error::InvalidArgument("no closed-loop coefficients".into()));
        };
        let n = first.nrows();
        for (i, c) in coeffs.iter().enumerate() {
            if c.shape() != (n, n) {
                return Err(Error::DimensionMismatch {
                    field: alloc::format!("coeffs[{i}]"),
                    expected: (n, n),
                    found: c.shape(),
                });
            }
        }
        let max_index = order.max(coeffs.len() - 1);
        Ok(Self {
            n,
            order,
            coeffs: coeffs.to_vec(),
            e6: moment_tensor(6, max_index)?,
            e4: moment_tensor(4, order)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.n * (self.order + 1)
    }

    fn check(&self, p: &Matrix) -> Result<()> {
        let d = self.dim();
        if p.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                field: "P̄".into(),
                expected: (d, d),
                found: p.shape(),
            });
        }
        Ok(())
    }

    /// `E[W_pc](P̄)`, symmetrized.
    pub fn apply(&self, p: &Matrix) -> Result<Matrix> {
        self.check(p)?;
        Ok(symmetrize(&contract(&self.coeffs, self.n, self.order, &self.e6, &self.e4, p, false)))
    }

    /// Adjoint map under the trace inner product.
    pub fn adjoint(&self, v: &Matrix) -> Result<Matrix> {
        self.check(v)?;
        Ok(symmetrize(&contract(&self.coeffs, self.n, self.order, &self.e6, &self.e4, v, true)))
    }
}

/// Block `(i, l)` gets `Σ_{jkmn} E6[i,j,k,m,n,l] Lᵀ_m X_jk L_n − Σ_{jk} E4[i,j,k,l] X_jk`
/// with `L_m = A_m` for the forward map and `L_m = A_mᵀ` for the adjoint.
fn contract(
    coeffs: &[Matrix],
    n: usize,
    order: usize,
    e6: &MomentTensor,
    e4: &MomentTensor,
    x: &Matrix,
    adjoint: bool,
) -> Matrix {
    let dim = order + 1;
    let nc = coeffs.len();
    let mut w = Matrix::zeros(n * dim, n * dim);
    let left: Vec<Matrix> = coeffs
        .iter()
        .map(|c| if adjoint { c.clone() } else { c.transpose() })
        .collect();
    let right: Vec<Matrix> = coeffs
        .iter()
        .map(|c| if adjoint { c.transpose() } else { c.clone() })
        .collect();
    let mut prods: Vec<Matrix> = alloc::vec![Matrix::zeros(n, n); nc * nc];
    for j in 0..dim {
        for k in 0..dim {
            let xjk = x.view((j * n, k * n), (n, n)).into_owned();
            if xjk.iter().all(|v| *v == 0.0) {
                continue;
            }
            for (mi, lm) in left.iter().enumerate() {
                let lx = lm * &xjk;
                for (ni, rn) in right.iter().enumerate() {
                    prods[mi * nc + ni] = &lx * rn;
                }
            }
            for i in 0..dim {
                for l in 0..dim {
                    let mut blk = w.view_mut((i * n, l * n), (n, n));
                    for mi in 0..nc {
                        for ni in 0..nc {
                            let c = e6.get(&[i, j, k, mi, ni, l]);
                            if c != 0.0 {
                                blk.zip_apply(&prods[mi * nc + ni], |a, b| *a += c * b);
                            }
                        }
                    }
                    let c4 = e4.get(&[i, j, k, l]);
                    if c4 != 0.0 {
                        blk.zip_apply(&xjk, |a, b| *a -= c4 * b);
                    }
                }
            }
        }
    }
    w
}

/// `E[W_pc]` for closed-loop coefficients `coeffs` and block matrix `p_bar`.
pub fn assemble_w(coeffs: &[Matrix], p_bar: &Matrix, order: usize) -> Result<Matrix> {
    LyapunovOperator::new(coeffs, order)?.apply(p_bar)
}

/// Spectra of the realized closed loop at every grid point.
pub fn pole_sweep(sys: &UncertainLti, k: Option<&Matrix>, grid: &[f64]) -> Result<Vec<SpectralResult>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty parameter grid".into()));
    }
    grid.iter()
        .map(|&d| {
            let (a, b) = sys.realize(d)?;
            let acl = match k {
                Some(k) => a + b * k,
                None => a,
            };
            spectrum(&acl)
        })
        .collect()
}

/// `count` equispaced points on `[-1, 1]`.
pub fn uniform_grid(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => alloc::vec![0.0],
        _ => (0..count)
            .map(|i| -1.0 + 2.0 * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Largest closed-loop spectral radius on the `RADIUS_GRID_POINTS` grid.
pub fn sampled_radius(sys: &UncertainLti, k: Option<&Matrix>) -> Result<f64> {
    Ok(pole_sweep(sys, k, &uniform_grid(RADIUS_GRID_POINTS))?
        .iter()
        .fold(0.0f64, |acc, s| acc.max(s.spectral_radius)))
}

fn top_eigen(m: &Matrix) -> (f64, Vector) {
    let eig = SymmetricEigen::new(m.clone());
    let (idx, val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if *v > best.1 { (i, *v) } else { best });
    (val, eig.eigenvectors.column(idx).into_owned())
}

/// Euclidean projection of a symmetric matrix onto `{X ⪰ I, tr X ≤ tau}`.
fn project_spectahedron(y: &Matrix, tau: f64) -> Matrix {
    let eig = SymmetricEigen::new(symmetrize(y));
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let clip = |theta: f64| -> Vec<f64> { vals.iter().map(|v| (v - theta).max(1.0)).collect() };
    let mut lam = clip(0.0);
    if lam.iter().sum::<f64>() > tau {
        let (mut lo, mut hi) = (0.0, vals.iter().fold(0.0f64, |a, v| a.max(*v)));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if clip(mid).iter().sum::<f64>() > tau {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lam = clip(hi);
    }
    let v = &eig.eigenvectors;
    symmetrize(&(v * Matrix::from_diagonal(&Vector::from_vec(lam)) * v.transpose()))
}

/// Upper-triangle coordinates of a symmetric `d × d` matrix.
fn sym_pairs(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|a| (a..d).map(move |b| (a, b))).collect()
}

fn from_coords(pairs: &[(usize, usize)], x: &[f64], d: usize) -> Matrix {
    let mut p = Matrix::zeros(d, d);
    for (&(a, b), v) in pairs.iter().zip(x) {
        p[(a, b)] = *v;
        p[(b, a)] = *v;
    }
    p
}

/// `E[W_pc]` of each symmetric unit matrix `E_ab = e_a e_bᵀ + e_b e_aᵀ`
/// (`e_a e_aᵀ` on the diagonal).
fn basis_images(op: &LyapunovOperator, pairs: &[(usize, usize)]) -> Result<Vec<Matrix>> {
    let d = op.dim();
    let mut unit = Matrix::zeros(d, d);
    pairs
        .iter()
        .map(|&(a, b)| {
            unit[(a, b)] = 1.0;
            unit[(b, a)] = 1.0;
            let w = op.apply(&unit);
            unit[(a, b)] = 0.0;
            unit[(b, a)] = 0.0;
            w
        })
        .collect()
}

/// Minimum-norm solution of `E[W_pc](P̄) = −Σ_j E[φ_i φ_j φ_j φ_l] I` on
/// symmetric coordinates.
/// For a deterministic plant at order zero this is the Lyapunov equation
/// `AᵀPA − P = −I`.
fn warm_start(op: &LyapunovOperator, pairs: &[(usize, usize)], images: &[Matrix]) -> Option<Matrix> {
    let d = op.dim();
    let unknowns = pairs.len();
    let mut system = Matrix::zeros(unknowns, unknowns);
    for (col, w) in images.iter().enumerate() {
        for (row, &(r, c)) in pairs.iter().enumerate() {
            system[(row, col)] = w[(r, c)];
        }
    }
    // Right-hand side: the `−P` part of the operator evaluated at P̄ = I.
    let zero_dyn = LyapunovOperator {
        coeffs: alloc::vec![Matrix::zeros(op.n, op.n)],
        ..op.clone()
    };
    let rhs_full = zero_dyn.apply(&Matrix::identity(d, d)).ok()?;
    let rhs = Vector::from_iterator(unknowns, pairs.iter().map(|&(r, c)| rhs_full[(r, c)]));
    // The map has a kernel for N >= 2 (distinct P̄ giving the same P(Δ));
    // take the minimum-norm solution.
    let svd = system.svd(true, true);
    let cutoff = 1e-12 * svd.singular_values.max();
    let sol = svd.solve(&rhs, cutoff).ok()?;
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(from_coords(pairs, sol.as_slice(), d))
}

/// `P(Δ) = Σ_q ℓ_q(Δ)² P_q` from pointwise Lyapunov matrices
/// `P_q = A_qᵀ P_q A_q + I` at the `N + 1` Gauss nodes, with `ℓ_q` the Lagrange
/// polynomials on those nodes. Positive definite by construction and exact at
/// the nodes. `None` when some node is not stable.
fn nodal_start(coeffs: &[Matrix], order: usize) -> Result<Option<Matrix>> {
    let n = coeffs[0].nrows();
    let nc = coeffs.len() - 1;
    let (nodes, _) = basis::quadrature_rule(order + 1)?;
    let mut vander = Matrix::zeros(order + 1, order + 1);
    for (p, &x) in nodes.iter().enumerate() {
        for (i, v) in basis::legendre_values(x, order).into_iter().enumerate() {
            vander[(p, i)] = v;
        }
    }
    let Some(vinv) = vander.try_inverse() else {
        return Ok(None);
    };
    let d = n * (order + 1);
    let mut p_bar = Matrix::zeros(d, d);
    for (q, &x) in nodes.iter().enumerate() {
        let phi = basis::legendre_values(x, nc);
        let mut a = Matrix::zeros(n, n);
        for (c, f) in coeffs.iter().zip(&phi) {
            a += c * *f;
        }
        let pq = match dlyap(&a.transpose(), &Matrix::identity(n, n)) {
            Ok(pq) => pq,
            Err(Error::Unstable { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let g = vinv.column(q);
        p_bar += kron(&(g * g.transpose()), &pq);
    }
    Ok(Some(symmetrize(&p_bar)))
}

/// Log-barrier path following for
///
/// ```text
/// maximize t  s.t.  −E[W_pc](P̄) ⪰ t I,  P̄ ⪰ I,  tr P̄ ≤ τ
/// ```
///
/// over `y = (symmetric coordinates of P̄, t)`. Newton steps use the exact
/// Hessian `Σ tr(F⁻¹ F_a F⁻¹ F_b)`, assembled as `MᵀM` from the congruences
/// `L⁻¹ F_a L⁻ᵀ` in scaled symmetric vectorization.
struct Barrier<'a> {
    d: usize,
    pairs: &'a [(usize, usize)],
    images: &'a [Matrix],
    tau: f64,
}

struct BarrierPoint {
    p_bar: Matrix,
    op_p: Matrix,
    t: f64,
}

/// Scaled symmetric vectorization: `⟨svec X, svec Y⟩ = tr(XY)`.
fn svec_into(m: &Matrix, out: &mut [f64]) {
    let d = m.nrows();
    let mut idx = 0;
    for a in 0..d {
        out[idx] = m[(a, a)];
        idx += 1;
        for b in a + 1..d {
            out[idx] = core::f64::consts::SQRT_2 * m[(a, b)];
            idx += 1;
        }
    }
}

fn lower_inverse(m: &Matrix) -> Option<Matrix> {
    let chol = nalgebra::Cholesky::new(m.clone())?;
    chol.l().solve_lower_triangular(&Matrix::identity(m.nrows(), m.ncols()))
}

fn log_det_pd(m: &Matrix) -> Option<f64> {
    let chol = nalgebra::Cholesky::new(m.clone())?;
    Some(2.0 * chol.l().diagonal().iter().map(|v| libm::log(*v)).sum::<f64>())
}

impl Barrier<'_> {
    fn point(&self, y: &Vector) -> BarrierPoint {
        let u = self.pairs.len();
        let mut op_p = Matrix::zeros(self.d, self.d);
        for (w, x) in self.images.iter().zip(y.iter()) {
            if *x != 0.0 {
                op_p.zip_apply(w, |a, b| *a += x * b);
            }
        }
        BarrierPoint {
            p_bar: from_coords(self.pairs, &y.as_slice()[..u], self.d),
            op_p,
            t: y[u],
        }
    }

    /// Slacks `(−op(P̄) − tI, P̄ − I, τ − tr P̄)`.
    fn slacks(&self, pt: &BarrierPoint) -> (Matrix, Matrix, f64) {
        let eye = Matrix::identity(self.d, self.d);
        (
            symmetrize(&(-&pt.op_p - &eye * pt.t)),
            symmetrize(&(&pt.p_bar - eye)),
            self.tau - pt.p_bar.trace(),
        )
    }

    fn value(&self, y: &Vector, c: f64) -> Option<f64> {
        let pt = self.point(y);
        let (f1, f2, f3) = self.slacks(&pt);
        if f3 <= 0.0 {
            return None;
        }
        Some(-c * pt.t - log_det_pd(&f1)? - log_det_pd(&f2)? - libm::log(f3))
    }

    /// Newton step and gradient of the barrier objective at `y`.
    fn newton(&self, y: &Vector, c: f64) -> Option<(Vector, Vector)> {
        let (d, u) = (self.d, self.pairs.len());
        let pt = self.point(y);
        let (f1, f2, f3) = self.slacks(&pt);
        let r1 = lower_inverse(&f1)?;
        let r2 = lower_inverse(&f2)?;
        let s = d * (d + 1) / 2;
        let mut m = Matrix::zeros(2 * s, u + 1);
        let mut grad = Vector::zeros(u + 1);
        let mut buf = alloc::vec![0.0; s];
        for (a, (&(p, q), w)) in self.pairs.iter().zip(self.images).enumerate() {
            let g1 = -(&r1 * w * r1.transpose());
            let (rp, rq) = (r2.column(p), r2.column(q));
            let g2 = if p == q {
                rp * rp.transpose()
            } else {
                rp * rq.transpose() + rq * rp.transpose()
            };
            svec_into(&g1, &mut buf);
            m.view_mut((0, a), (s, 1)).copy_from_slice(&buf);
            svec_into(&g2, &mut buf);
            m.view_mut((s, a), (s, 1)).copy_from_slice(&buf);
            let h = if p == q { 1.0 } else { 0.0 };
            grad[a] = -g1.trace() - g2.trace() + h / f3;
        }
        let g1 = -(&r1 * r1.transpose());
        svec_into(&g1, &mut buf);
        m.view_mut((0, u), (s, 1)).copy_from_slice(&buf);
        grad[u] = -c - g1.trace();

        let mut hess = m.transpose() * &m;
        let h_vec = Vector::from_iterator(u + 1, self.pairs.iter().map(|&(p, q)| if p == q { 1.0 } else { 0.0 }).chain(core::iter::once(0.0)));
        hess += &h_vec * h_vec.transpose() / (f3 * f3);
        let rhs = -&grad;
        let step = match nalgebra::Cholesky::new(hess.clone()) {
            Some(ch) => ch.solve(&rhs),
            None => {
                let reg = 1e-12 * hess.trace().max(1.0) / (u + 1) as f64;
                let dim = hess.nrows();
                nalgebra::Cholesky::new(hess + Matrix::identity(dim, dim) * reg)?.solve(&rhs)
            }
        };
        step.iter().all(|v| v.is_finite()).then_some((step, grad))
    }
}

/// Newton iterations across all centering steps.
const BARRIER_MAX_NEWTON: usize = 400;
/// Largest coordinate count handled by the dense linear-algebra searches.
const DENSE_MAX_UNKNOWNS: usize = 600;
/// Once `t` reaches this level the certificate is comfortably strict.
const EARLY_EXIT_T: f64 = 1e-6;

fn barrier_search(bar: &Barrier, start: &Matrix) -> (Matrix, usize) {
    let u = bar.pairs.len();
    let p0 = start * 1.5;
    let op0 = bar.point(&Vector::from_iterator(
        u + 1,
        bar.pairs.iter().map(|&(a, b)| p0[(a, b)]).chain(core::iter::once(0.0)),
    ));
    let top = top_eigen(&op0.op_p).0;
    let t0 = -top - 1.0 - 0.1 * libm::fabs(top);
    let mut y = Vector::from_iterator(
        u + 1,
        bar.pairs.iter().map(|&(a, b)| p0[(a, b)]).chain(core::iter::once(t0)),
    );
    let nu = (2 * bar.d + 1) as f64;
    let mut c = nu / libm::fabs(t0).max(1.0);
    let mut iterations = 0;
    'outer: while iterations < BARRIER_MAX_NEWTON {
        for _ in 0..50 {
            let Some((step, grad)) = bar.newton(&y, c) else {
                break 'outer;
            };
            let dec = -grad.dot(&step);
            if dec <= 2e-9 {
                break;
            }
            let Some(f0) = bar.value(&y, c) else {
                break 'outer;
            };
            let mut s = 1.0;
            let next = loop {
                let cand = &y + &step * s;
                if matches!(bar.value(&cand, c), Some(f) if f <= f0 - 0.25 * s * dec) {
                    break Some(cand);
                }
                s *= 0.5;
                if s < 1e-12 {
                    break None;
                }
            };
            let Some(next) = next else {
                break;
            };
            y = next;
            iterations += 1;
            if y[u] >= EARLY_EXIT_T || iterations >= BARRIER_MAX_NEWTON {
                break 'outer;
            }
        }
        if nu / c < 1e-10 * libm::fabs(y[u]).max(1.0) {
            break;
        }
        c *= 10.0;
    }
    (bar.point(&y).p_bar, iterations)
}

fn subgradient_search(op: &LyapunovOperator, start: &Matrix, tau: f64) -> Result<(Matrix, usize)> {
    let margin_of = |p: &Matrix| -> Result<(f64, Vector)> { Ok(top_eigen(&op.apply(p)?)) };
    let mut x = project_spectahedron(start, tau);
    let (mut f, mut v) = margin_of(&x)?;
    let mut best = (f, x.clone());
    let step0 = 0.1 * x.norm();
    let mut iterations = 0;
    while best.0 >= FEASIBLE_MARGIN && iterations < MAX_ITER {
        iterations += 1;
        let g = op.adjoint(&(&v * v.transpose()))?;
        let gn = g.norm();
        if gn == 0.0 || !gn.is_finite() {
            break;
        }
        let step = step0 / libm::sqrt(iterations as f64);
        x = project_spectahedron(&(&x - g * (step / gn)), tau);
        (f, v) = margin_of(&x)?;
        if f < best.0 {
            best = (f, x.clone());
        }
    }
    Ok((best.1, iterations))
}

/// Searches for `P̄ ⪰ I` with `E[W_pc] ≺ 0`.
///
/// Three starting points are compared after normalizing to `λ_min(P̄) = 1`:
/// the identity, the minimum-norm solution of a Lyapunov-type equation and a
/// blend of pointwise Lyapunov matrices at Gauss nodes. Unless the best one is
/// already a certificate, a log-barrier Newton method maximizes the margin
/// over `{P̄ ⪰ I, tr P̄ ≤ τ}` (projected subgradient descent for problems too
/// large for dense Newton steps). Infeasibility is a result, not an error,
/// and means only that no certificate was found.
pub fn certify_ems(sys: &UncertainLti, k: Option<&Matrix>, order: usize) -> Result<StabilityCertificate> {
    let coeffs = closed_loop_coeffs(sys, k);
    let op = LyapunovOperator::new(&coeffs, order)?;
    let d = op.dim();
    let sampled = sampled_radius(sys, k)?;
    let pairs = sym_pairs(d);
    let dense = pairs.len() <= DENSE_MAX_UNKNOWNS;
    let images = if dense { basis_images(&op, &pairs)? } else { Vec::new() };

    let margin_of = |p: &Matrix| -> Result<f64> { Ok(top_eigen(&op.apply(p)?).0) };

    let mut start = Matrix::identity(d, d);
    let mut start_margin = margin_of(&start)?;
    let linear = if dense { warm_start(&op, &pairs, &images) } else { None };
    for p0 in [linear, nodal_start(&coeffs, order)?].into_iter().flatten() {
        let min = sym_eigenvalues(&p0).first().copied().unwrap_or(0.0);
        let candidate = if min > 0.0 {
            symmetrize(&(p0 / min))
        } else {
            let proj = psd_project(&p0);
            let scale = sym_eigenvalues(&proj).last().copied().unwrap_or(0.0);
            Matrix::identity(d, d) + proj * (d as f64 / scale.max(f64::MIN_POSITIVE))
        };
        let m = margin_of(&candidate)?;
        if m < start_margin {
            start = candidate;
            start_margin = m;
        }
    }

    let (p_bar, margin, iterations) = if start_margin < FEASIBLE_MARGIN {
        (start, start_margin, 0)
    } else {
        let tau = 100.0 * (d as f64).max(start.trace());
        let (p, it) = if dense {
            barrier_search(&Barrier { d, pairs: &pairs, images: &images, tau }, &start)
        } else {
            subgradient_search(&op, &start, tau)?
        };
        let m = margin_of(&p)?;
        if m < start_margin {
            (p, m, it)
        } else {
            (start, start_margin, it)
        }
    };

    let pbar_min_eig = sym_eigenvalues(&p_bar).first().copied().unwrap_or(0.0);
    let lmi_feasible = margin < FEASIBLE_MARGIN && pbar_min_eig > 0.0;
    Ok(StabilityCertificate {
        order,
        p_bar,
        margin,
        pbar_min_eig,
        lmi_feasible,
        sampled_radius: sampled,
        feasible: lmi_feasible && sampled < 1.0,
        infeasible: !lmi_feasible && margin > INFEASIBLE_MARGIN,
        iterations,
    })
}

/// Empirical `E[‖x_t‖²]` over sampled parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMoment {
    /// One entry per time step `0..=steps`.
    pub moments: Vec<f64>,
    /// First step at which some sampled trajectory stopped being finite.
    pub first_nonfinite: Option<usize>,
}

impl SecondMoment {
    /// Decay factor `moments[0] / moments[last]`.
    pub fn decay(&self) -> f64 {
        let first = self.moments.first().copied().unwrap_or(0.0);
        let last = self.moments.last().copied().unwrap_or(0.0);
        if last == 0.0 {
            f64::INFINITY
        } else {
            first / last
        }
    }
}

/// Monte Carlo second-moment trajectory of the realized loop from `x0`.
pub fn mc_second_moment(
    sys: &UncertainLti,
    k: Option<&Matrix>,
    samples: usize,
    steps: usize,
    seed: u64,
    x0: &Vector,
) -> Result<SecondMoment> {
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
    let mut moments = alloc::vec![0.0; steps + 1];
    let mut first_nonfinite: Option<usize> = None;
    let inv = 1.0 / samples as f64;
    for d in sample_params(samples, seed) {
        let (a, b) = sys.realize(d)?;
        let acl = match k {
            Some(k) => a + b * k,
            None => a,
        };
        let mut x = x0.clone();
        for (t, slot) in moments.iter_mut().enumerate() {
            if t > 0 {
                x = &acl * x;
            }
            let sq = x.norm_squared();
            if !sq.is_finite() {
                first_nonfinite = Some(first_nonfinite.map_or(t, |s| s.min(t)));
            }
            *slot += sq * inv;
        }
    }
    Ok(SecondMoment {
        moments,
        first_nonfinite,
    })
}
