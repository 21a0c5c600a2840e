//! The uncertain plant: Legendre coefficients of `A(Δ)` and `B(Δ)`, cost
//! weights, physical-parameter scaling, fitting from gridded linear models and
//! parameter sampling.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{check_domain, eval_basis, BasisSpec};
use crate::numerics::{sym_eigenvalues, symmetrize};
use crate::{Error, Matrix, Result};

/// Discrete-time plant `x⁺ = A(Δ)x + B(Δ)u` with
/// `A(Δ) = Σ_i A_i φ_i(Δ)` and `B(Δ) = Σ_i B_i φ_i(Δ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainLti {
    name: String,
    n: usize,
    m: usize,
    basis: BasisSpec,
    a_coeffs: Vec<Matrix>,
    b_coeffs: Vec<Matrix>,
}

fn check_shape(mat: &Matrix, expected: (usize, usize), field: String) -> Result<()> {
    if mat.shape() != expected {
        return Err(Error::DimensionMismatch {
            field,
            expected,
            found: mat.shape(),
        });
    }
    if !mat.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { field });
    }
    Ok(())
}

impl UncertainLti {
    /// Validates shapes and finiteness. `approx_order` is the default state
    /// expansion order carried in the basis spec.
    pub fn new(
        name: impl Into<String>,
        a_coeffs: Vec<Matrix>,
        b_coeffs: Vec<Matrix>,
        approx_order: usize,
    ) -> Result<Self> {
        let Some(a0) = a_coeffs.first() else {
            return Err(Error::InvalidArgument("at least one A coefficient is required".into()));
        };
        if b_coeffs.len() != a_coeffs.len() {
            return Err(Error::InvalidArgument(format!(
                "{} A coefficients but {} B coefficients",
                a_coeffs.len(),
                b_coeffs.len()
            )));
        }
        let n = a0.nrows();
        let m = b_coeffs[0].ncols();
        for (i, a) in a_coeffs.iter().enumerate() {
            check_shape(a, (n, n), format!("A[{i}]"))?;
        }
        for (i, b) in b_coeffs.iter().enumerate() {
            check_shape(b, (n, m), format!("B[{i}]"))?;
        }
        Ok(Self {
            name: name.into(),
            n,
            m,
            basis: BasisSpec::legendre(a_coeffs.len() - 1, approx_order),
            a_coeffs,
            b_coeffs,
        })
    }

    /// Parameter-independent plant.
    pub fn deterministic(name: impl Into<String>, a: Matrix, b: Matrix) -> Result<Self> {
        Self::new(name, alloc::vec![a], alloc::vec![b], 0)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn states(&self) -> usize {
        self.n
    }

    pub fn inputs(&self) -> usize {
        self.m
    }

    pub fn basis(&self) -> BasisSpec {
        self.basis
    }

    pub fn model_order(&self) -> usize {
        self.basis.model_order
    }

    pub fn with_approx_order(mut self, order: usize) -> Self {
        self.basis.approx_order = order;
        self
    }

    pub fn a_coeffs(&self) -> &[Matrix] {
        &self.a_coeffs
    }

    pub fn b_coeffs(&self) -> &[Matrix] {
        &self.b_coeffs
    }

    /// `(A(δ), B(δ))`.
    pub fn realize(&self, delta: f64) -> Result<(Matrix, Matrix)> {
        let phi = eval_basis(delta, self.model_order())?;
        let mut a = Matrix::zeros(self.n, self.n);
        let mut b = Matrix::zeros(self.n, self.m);
        for (i, p) in phi.iter().enumerate() {
            a += &self.a_coeffs[i] * *p;
            b += &self.b_coeffs[i] * *p;
        }
        Ok((a, b))
    }
}

/// `y = Cx` weighted by `Q_y`, so that `Q = Cᵀ Q_y C`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputWeight {
    pub c: Matrix,
    pub qy: Matrix,
}

/// Quadratic stage cost `xᵀQx + uᵀRu`; both weights are parameter independent.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    q: Matrix,
    r: Matrix,
    output: Option<OutputWeight>,
}

const SYM_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

fn check_symmetric(m: &Matrix, field: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            field: field.into(),
            expected: (m.nrows(), m.nrows()),
            found: m.shape(),
        });
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { field: field.into() });
    }
    let asym = (m - m.transpose()).amax();
    if asym > SYM_TOL * m.amax().max(1.0) {
        return Err(Error::NotSymmetric { field: field.into() });
    }
    Ok(())
}

impl CostWeights {
    pub fn new(q: Matrix, r: Matrix) -> Result<Self> {
        check_symmetric(&q, "Q")?;
        check_symmetric(&r, "R")?;
        let q_eigs = sym_eigenvalues(&q);
        if let Some(&min) = q_eigs.first() {
            let norm = q_eigs.iter().fold(0.0f64, |a, v| a.max(libm::fabs(*v)));
            if min < -PSD_TOL * norm {
                return Err(Error::NotPositiveSemidefinite {
                    field: "Q".into(),
                    min_eig: min,
                });
            }
        }
        let r_min = sym_eigenvalues(&r).first().copied().unwrap_or(1.0);
        if r_min <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                field: "R".into(),
                min_eig: r_min,
            });
        }
        Ok(Self {
            q: symmetrize(&q),
            r: symmetrize(&r),
            output: None,
        })
    }

    /// `Q = Cᵀ Q_y C`.
    pub fn from_output(c: Matrix, qy: Matrix, r: Matrix) -> Result<Self> {
        check_symmetric(&qy, "Qy")?;
        if qy.nrows() != c.nrows() {
            return Err(Error::DimensionMismatch {
                field: "Qy".into(),
                expected: (c.nrows(), c.nrows()),
                found: qy.shape(),
            });
        }
        let q = c.transpose() * &qy * &c;
        let mut w = Self::new(symmetrize(&q), r).map_err(|e| match e {
            Error::NotPositiveSemidefinite { min_eig, .. } => Error::NotPositiveSemidefinite {
                field: "Qy".into(),
                min_eig,
            },
            other => other,
        })?;
        w.output = Some(OutputWeight { c, qy });
        Ok(w)
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    pub fn output(&self) -> Option<&OutputWeight> {
        self.output.as_ref()
    }

    /// Checks that the weights fit a plant with `n` states and `m` inputs.
    pub fn check_dims(&self, n: usize, m: usize) -> Result<()> {
        if self.q.shape() != (n, n) {
            let field = if self.output.is_some() { "C" } else { "Q" };
            return Err(Error::DimensionMismatch {
                field: field.into(),
                expected: (n, n),
                found: self.q.shape(),
            });
        }
        if self.r.shape() != (m, m) {
            return Err(Error::DimensionMismatch {
                field: "R".into(),
                expected: (m, m),
                found: self.r.shape(),
            });
        }
        Ok(())
    }
}

/// Physical parameter bounds mapped affinely onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamScale {
    v_min: f64,
    v_max: f64,
}

impl ParamScale {
    pub fn new(v_min: f64, v_max: f64) -> Result<Self> {
        if !(v_min.is_finite() && v_max.is_finite() && v_min < v_max) {
            return Err(Error::InvalidArgument(format!(
                "parameter range [{v_min}, {v_max}] is empty"
            )));
        }
        Ok(Self { v_min, v_max })
    }

    pub fn v_min(&self) -> f64 {
        self.v_min
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    /// Inverse map from `Δ` to the physical parameter.
    pub fn unscale(&self, delta: f64) -> f64 {
        0.5 * ((self.v_max - self.v_min) * delta + self.v_max + self.v_min)
    }
}

/// `Δ = (2v − (v_max + v_min)) / (v_max − v_min)`.
pub fn scale_param(v: f64, scale: &ParamScale) -> Result<f64> {
    if !(scale.v_min..=scale.v_max).contains(&v) {
        return Err(Error::Domain {
            what: "parameter",
            value: v,
        });
    }
    let d = (2.0 * v - (scale.v_max + scale.v_min)) / (scale.v_max - scale.v_min);
    Ok(d.clamp(-1.0, 1.0))
}

/// A linear model sampled at parameter value `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub delta: f64,
    pub a: Matrix,
    pub b: Matrix,
}

/// Least-squares Legendre fit of gridded models, entrywise. With exactly
/// `model_order + 1` points this is interpolation.
pub fn fit_from_grid(
    name: impl Into<String>,
    points: &[GridPoint],
    model_order: usize,
    approx_order: usize,
) -> Result<UncertainLti> {
    let needed = model_order + 1;
    if points.len() < needed {
        return Err(Error::TooFewPoints {
            needed,
            got: points.len(),
        });
    }
    let n = points[0].a.nrows();
    let m = points[0].b.ncols();
    let mut design = Matrix::zeros(points.len(), needed);
    let mut rhs = Matrix::zeros(points.len(), n * n + n * m);
    for (j, pt) in points.iter().enumerate() {
        check_shape(&pt.a, (n, n), format!("grid[{j}].A"))?;
        check_shape(&pt.b, (n, m), format!("grid[{j}].B"))?;
        let phi = eval_basis(pt.delta, model_order)?;
        for (i, p) in phi.iter().enumerate() {
            design[(j, i)] = *p;
        }
        for (k, v) in pt.a.iter().chain(pt.b.iter()).enumerate() {
            rhs[(j, k)] = *v;
        }
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-12 * smax {
        return Err(Error::RankDeficient {
            field: "grid".into(),
        });
    }
    let coeffs = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Numerical(String::from(e)))?;
    let mut a_coeffs = Vec::with_capacity(needed);
    let mut b_coeffs = Vec::with_capacity(needed);
    for i in 0..needed {
        let row = coeffs.row(i);
        a_coeffs.push(Matrix::from_iterator(n, n, row.iter().take(n * n).copied()));
        b_coeffs.push(Matrix::from_iterator(n, m, row.iter().skip(n * n).copied()));
    }
    UncertainLti::new(name, a_coeffs, b_coeffs, approx_order)
}

/// Seeded uniform samples on `[-1, 1]`. The generator is ChaCha8 keyed by
/// `seed` through `SeedableRng::seed_from_u64`.
pub fn sample_params(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Stateless derivation of an independent stream seed for shard `index`.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Clamping domain check shared with callers that take a raw `δ`.
pub fn check_delta(delta: f64) -> Result<f64> {
    check_domain(delta)
}
