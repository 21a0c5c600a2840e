//! Dense kernels shared by the synthesis pipeline: PSD tests and projection,
//! spectra, discrete Lyapunov and Riccati solvers.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Complex, Schur, SymmetricEigen};

use crate::{Error, Matrix, Result};

/// Iteration cap for the doubling solvers.
pub const DOUBLING_MAX_ITER: usize = 200;
/// Relative-change stop for the doubling solvers.
pub const DOUBLING_TOL: f64 = 1e-12;
/// `dlyap` refuses matrices whose spectral radius is not below `1 - STABILITY_SLACK`.
pub const STABILITY_SLACK: f64 = 1e-9;

/// Eigenvalues of a square matrix and their largest modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    pub eigenvalues: Vec<Complex<f64>>,
    pub spectral_radius: f64,
}

/// Riccati solution with its optimal gain under the `u = Kx` convention.
#[derive(Debug, Clone)]
pub struct DareSolution {
    pub p: Matrix,
    pub k: Matrix,
    /// Frobenius norm of the Riccati equation residual.
    pub residual: f64,
    pub iterations: usize,
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

fn ensure_finite(m: &Matrix, field: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { field: field.into() })
    }
}

fn ensure_square(m: &Matrix, field: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            field: field.into(),
            expected: (m.nrows(), m.nrows()),
            found: m.shape(),
        })
    }
}

/// Ascending eigenvalues of the symmetric part of `m`.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Largest singular value.
pub fn norm2(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// PSD membership with tolerance `tol · max(1, ‖M‖₂)`; also returns the
/// smallest eigenvalue of the symmetrized input.
pub fn is_psd(m: &Matrix, tol: f64) -> Result<(bool, f64)> {
    ensure_square(m, "matrix")?;
    ensure_finite(m, "matrix")?;
    let ev = sym_eigenvalues(m);
    let Some(&min) = ev.first() else {
        return Ok((true, 0.0));
    };
    let norm = ev.iter().fold(0.0f64, |acc, v| acc.max(libm::fabs(*v)));
    Ok((min >= -tol * norm.max(1.0), min))
}

/// Nearest PSD matrix in Frobenius norm (eigenvalue clipping).
pub fn psd_project(m: &Matrix) -> Matrix {
    if m.nrows() == 0 {
        return m.clone();
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    symmetrize(&(v * Matrix::from_diagonal(&clipped) * v.transpose()))
}

/// All eigenvalues via a real Schur form.
pub fn spectrum(m: &Matrix) -> Result<SpectralResult> {
    ensure_square(m, "matrix")?;
    ensure_finite(m, "matrix")?;
    if m.nrows() == 0 {
        return Ok(SpectralResult {
            eigenvalues: Vec::new(),
            spectral_radius: 0.0,
        });
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let eigenvalues: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    let spectral_radius = eigenvalues.iter().fold(0.0f64, |acc, z| acc.max(libm::hypot(z.re, z.im)));
    Ok(SpectralResult {
        eigenvalues,
        spectral_radius,
    })
}

pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    spectrum(m).map(|s| s.spectral_radius)
}

/// Solves `X = A X Aᵀ + W` by doubling.
pub fn dlyap(a: &Matrix, w: &Matrix) -> Result<Matrix> {
    ensure_square(a, "A")?;
    if w.shape() != a.shape() {
        return Err(Error::DimensionMismatch {
            field: "W".into(),
            expected: a.shape(),
            found: w.shape(),
        });
    }
    ensure_finite(w, "W")?;
    let radius = spectral_radius(a)?;
    if radius >= 1.0 - STABILITY_SLACK {
        return Err(Error::Unstable { radius });
    }
    let mut x = symmetrize(w);
    let mut ak = a.clone();
    for _ in 0..DOUBLING_MAX_ITER {
        let inc = &ak * &x * ak.transpose();
        x += &inc;
        ak = &ak * &ak;
        let scale = x.norm();
        if inc.norm() <= f64::EPSILON * scale || scale == 0.0 || ak.norm() <= 1e-300 {
            break;
        }
    }
    Ok(symmetrize(&x))
}

/// `AᵀPA − P + Q − AᵀPB (R + BᵀPB)⁻¹ BᵀPA`.
pub fn riccati_expression(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let s = r + b.transpose() * p * b;
    let t = b.transpose() * p * a;
    let m = solve_spd(&s, &t, "R + BᵀPB")?;
    Ok(symmetrize(&(a.transpose() * p * a - p + q - t.transpose() * m)))
}

/// `S⁻¹ T` for symmetric positive-definite `S`, falling back to LU.
pub(crate) fn solve_spd(s: &Matrix, t: &Matrix, field: &str) -> Result<Matrix> {
    if s.nrows() == 0 {
        return Ok(Matrix::zeros(0, t.ncols()));
    }
    if let Some(ch) = symmetrize(s).cholesky() {
        return Ok(ch.solve(t));
    }
    s.clone()
        .lu()
        .solve(t)
        .ok_or_else(|| Error::Numerical(format!("`{field}` is singular")))
}

fn check_dare_inputs(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<()> {
    ensure_square(a, "A")?;
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::DimensionMismatch {
            field: "B".into(),
            expected: (n, b.ncols()),
            found: b.shape(),
        });
    }
    if q.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            field: "Q".into(),
            expected: (n, n),
            found: q.shape(),
        });
    }
    let m = b.ncols();
    if r.shape() != (m, m) {
        return Err(Error::DimensionMismatch {
            field: "R".into(),
            expected: (m, m),
            found: r.shape(),
        });
    }
    for (mat, name) in [(a, "A"), (b, "B"), (q, "Q"), (r, "R")] {
        ensure_finite(mat, name)?;
    }
    Ok(())
}

/// Stabilizing solution of the discrete algebraic Riccati equation
/// `P = AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA + Q` by the structured doubling algorithm,
/// polished with Hewer steps. The gain is `K = −(R + BᵀPB)⁻¹BᵀPA`.
pub fn dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<DareSolution> {
    check_dare_inputs(a, b, q, r)?;
    let n = a.nrows();
    let ident = Matrix::identity(n, n);
    let r_inv_bt = solve_spd(r, &b.transpose(), "R")?;
    let mut ak = a.clone();
    let mut g = symmetrize(&(b * r_inv_bt));
    let mut h = symmetrize(q);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < DOUBLING_MAX_ITER {
        iterations += 1;
        let w = &ident + &g * &h;
        let lu = w.lu();
        let (Some(w_inv_a), Some(w_inv_g)) = (lu.solve(&ak), lu.solve(&g)) else {
            return Err(Error::SynthesisInfeasible(
                "doubling iteration hit a singular step".into(),
            ));
        };
        let h_next = symmetrize(&(&h + ak.transpose() * &h * &w_inv_a));
        let g_next = symmetrize(&(&g + &ak * w_inv_g * ak.transpose()));
        ak = &ak * w_inv_a;
        if !h_next.iter().chain(g_next.iter()).all(|v| v.is_finite()) {
            return Err(Error::SynthesisInfeasible(
                "doubling iteration diverged; the pair is not stabilizable".into(),
            ));
        }
        let change = (&h_next - &h).norm();
        let scale = h_next.norm();
        h = h_next;
        g = g_next;
        if change <= DOUBLING_TOL * scale || scale == 0.0 && change == 0.0 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SynthesisInfeasible(format!(
            "doubling iteration did not converge in {DOUBLING_MAX_ITER} steps"
        )));
    }
    let mut p = h;
    let mut k = riccati_gain(a, b, r, &p)?;
    let mut residual = riccati_expression(a, b, q, r, &p)?.norm();

    // Hewer refinement: P ← solution of P = A_cᵀ P A_c + Q + KᵀRK.
    for _ in 0..3 {
        if residual == 0.0 {
            break;
        }
        let ac = a + b * &k;
        let Ok(p_next) = dlyap(&ac.transpose(), &(q + k.transpose() * r * &k)) else {
            break;
        };
        let k_next = riccati_gain(a, b, r, &p_next)?;
        let res_next = riccati_expression(a, b, q, r, &p_next)?.norm();
        if res_next < residual {
            p = p_next;
            k = k_next;
            residual = res_next;
        } else {
            break;
        }
    }

    let radius = spectral_radius(&(a + b * &k))?;
    if radius >= 1.0 {
        return Err(Error::SynthesisInfeasible(format!(
            "Riccati solution is not stabilizing (closed-loop radius {radius})"
        )));
    }
    Ok(DareSolution {
        p,
        k,
        residual,
        iterations,
    })
}

/// `−(R + BᵀPB)⁻¹BᵀPA`.
pub fn riccati_gain(a: &Matrix, b: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let s = r + b.transpose() * p * b;
    Ok(-solve_spd(&s, &(b.transpose() * p * a), "R + BᵀPB")?)
}
