//! Legendre polynomial basis on the uniform density over `[-1, 1]`.
//!
//! Polynomials are unnormalized (`P_k(1) = 1`), so `E[φ_i φ_j] = δ_ij / (2i+1)`.
//! Every expectation is a plain weighted sum: the density weight `1/2` is
//! folded into the quadrature weights.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Matrix, Result};

/// Overshoot past `±1` that is clamped instead of rejected.
pub const DOMAIN_SLACK: f64 = 1e-12;

/// Tensor entries below this magnitude are stored as exact zeros.
pub const SNAP_ZERO: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Legendre,
}

/// Basis family and truncation orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisSpec {
    pub family: Family,
    /// Highest basis index used to expand `A(Δ)` and `B(Δ)`.
    pub model_order: usize,
    /// Highest basis index of the state expansion.
    pub approx_order: usize,
}

impl BasisSpec {
    pub fn legendre(model_order: usize, approx_order: usize) -> Self {
        Self {
            family: Family::Legendre,
            model_order,
            approx_order,
        }
    }
}

pub(crate) fn check_domain(delta: f64) -> Result<f64> {
    if !delta.is_finite() || libm::fabs(delta) > 1.0 + DOMAIN_SLACK {
        return Err(Error::Domain {
            what: "delta",
            value: delta,
        });
    }
    Ok(delta.clamp(-1.0, 1.0))
}

/// `(φ_0(δ), …, φ_up_to(δ))` by the three-term recurrence.
pub fn eval_basis(delta: f64, up_to: usize) -> Result<Vec<f64>> {
    let x = check_domain(delta)?;
    Ok(legendre_values(x, up_to))
}

/// Recurrence without the domain check; quadrature nodes are always inside.
pub(crate) fn legendre_values(x: f64, up_to: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(up_to + 1);
    out.push(1.0);
    if up_to >= 1 {
        out.push(x);
    }
    for k in 1..up_to {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * out[k] - kf * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// Gauss–Legendre rule with weights scaled by the density, so they sum to 1.
///
/// Exact for polynomials of degree `<= 2 * point_count - 1`.
pub fn quadrature_rule(point_count: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if point_count == 0 {
        return Err(Error::InvalidArgument("quadrature needs at least one point".into()));
    }
    let n = point_count;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Root i of P_n counted from the right end.
        let mut x = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5));
        for _ in 0..100 {
            let (p, pm1) = legendre_pair(x, n);
            let dp = nf * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if libm::fabs(dx) <= 1e-16 {
                break;
            }
        }
        let (p, pm1) = legendre_pair(x, n);
        let dp = nf * (x * p - pm1) / (x * x - 1.0);
        let w = 1.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// `(P_n(x), P_{n-1}(x))`.
fn legendre_pair(x: f64, n: usize) -> (f64, f64) {
    let mut prev = 1.0;
    let mut cur = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// Expectation with respect to the uniform density of `f` evaluated on a
/// rule exact for polynomials of the given degree.
pub fn expect_poly<F: FnMut(f64) -> f64>(degree: usize, mut f: F) -> f64 {
    let count = degree / 2 + 1;
    let (nodes, weights) = quadrature_rule(count).expect("count >= 1");
    nodes.iter().zip(&weights).map(|(&x, &w)| w * f(x)).sum()
}

/// Dense fully symmetric tensor of basis-product expectations
/// `E[φ_{i1} ⋯ φ_{ik}]`, every index in `0..=max_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTensor {
    arity: usize,
    size: usize,
    data: Vec<f64>,
}

impl MomentTensor {
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn max_index(&self) -> usize {
        self.size - 1
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.arity);
        self.data[self.offset(idx)]
    }

    fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| {
            debug_assert!(i < self.size);
            acc * self.size + i
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Quadrature point count that makes every entry of an arity-`k` tensor exact.
pub fn moment_point_count(arity: usize, max_index: usize) -> usize {
    (arity * max_index + 1).div_ceil(2) + 1
}

/// Builds the expectation tensor of the given arity (2, 3, 4 or 6).
pub fn moment_tensor(arity: usize, max_index: usize) -> Result<MomentTensor> {
    if !matches!(arity, 2 | 3 | 4 | 6) {
        return Err(Error::InvalidArgument(alloc::format!(
            "unsupported moment tensor arity {arity}"
        )));
    }
    let size = max_index + 1;
    let (nodes, weights) = quadrature_rule(moment_point_count(arity, max_index))?;
    let table: Vec<Vec<f64>> = nodes
        .iter()
        .map(|&x| legendre_values(x, max_index))
        .collect();

    let total = size.pow(arity as u32);
    let mut data = vec![0.0; total];
    let mut idx = vec![0usize; arity];
    for (flat, slot) in data.iter_mut().enumerate() {
        let mut rest = flat;
        for d in (0..arity).rev() {
            idx[d] = rest % size;
            rest /= size;
        }
        // Parity zeros are exact; only canonical (sorted) tuples are integrated.
        if idx.iter().sum::<usize>() % 2 == 1 || !idx.windows(2).all(|w| w[0] <= w[1]) {
            continue;
        }
        let mut v = 0.0;
        for (q, w) in weights.iter().enumerate() {
            let row = &table[q];
            v += w * idx.iter().map(|&i| row[i]).product::<f64>();
        }
        *slot = if libm::fabs(v) < SNAP_ZERO { 0.0 } else { v };
    }
    // Copy canonical entries to every permutation so symmetry is exact.
    let mut sorted = vec![0usize; arity];
    for flat in 0..total {
        let mut rest = flat;
        for d in (0..arity).rev() {
            idx[d] = rest % size;
            rest /= size;
        }
        sorted.copy_from_slice(&idx);
        sorted.sort_unstable();
        if sorted != idx {
            let canon = sorted.iter().fold(0, |acc, &i| acc * size + i);
            data[flat] = data[canon];
        }
    }
    Ok(MomentTensor { arity, size, data })
}

/// Gram matrix `E[Φ Φᵀ] = diag(1/(2i+1))`.
pub fn gram(order: usize) -> Matrix {
    Matrix::from_diagonal(&crate::Vector::from_iterator(
        order + 1,
        (0..=order).map(gram_entry),
    ))
}

/// `E[φ_i²] = 1/(2i+1)`.
pub fn gram_entry(i: usize) -> f64 {
    1.0 / (2 * i + 1) as f64
}
