//! Forward-mode differentiation with multi-directional dual numbers.
//!
//! [`Dual<N>`] carries a value and `N` directional derivatives in a fixed
//! array, so it is `Copy` and allocation free. Jacobians with more than `N`
//! inputs are assembled from several seeded passes.

use alloc::vec::Vec;
use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::linalg::DenseMatrix;
use crate::math;

/// Number of directions propagated per pass by [`jacobian`].
pub const LANES: usize = 8;

/// Arithmetic needed by the dynamics, implemented for `f64` and [`Dual`].
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn constant(x: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn constant(x: f64) -> Self {
        x
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sin(self) -> Self {
        math::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        math::cos(self)
    }
    #[inline]
    fn exp(self) -> Self {
        math::exp(self)
    }
}

/// Value plus `N` tangent components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub re: f64,
    pub eps: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(re: f64) -> Self {
        Self { re, eps: [0.0; N] }
    }

    /// Variable seeded along direction `lane`.
    pub fn variable(re: f64, lane: usize) -> Self {
        let mut eps = [0.0; N];
        eps[lane] = 1.0;
        Self { re, eps }
    }

    #[inline]
    fn map_eps(self, f: impl Fn(f64) -> f64) -> [f64; N] {
        let mut out = self.eps;
        for e in out.iter_mut() {
            *e = f(*e);
        }
        out
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let mut eps = self.eps;
        for (e, oe) in eps.iter_mut().zip(o.eps) {
            *e += oe;
        }
        Self { re: self.re + o.re, eps }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        let mut eps = self.eps;
        for (e, oe) in eps.iter_mut().zip(o.eps) {
            *e -= oe;
        }
        Self { re: self.re - o.re, eps }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)] // product rule
    fn mul(self, o: Self) -> Self {
        let eps = core::array::from_fn(|i| self.eps[i] * o.re + self.re * o.eps[i]);
        Self { re: self.re * o.re, eps }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)] // quotient rule
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        let eps = core::array::from_fn(|i| (self.eps[i] - q * o.eps[i]) / o.re);
        Self { re: q, eps }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            re: -self.re,
            eps: self.map_eps(|e| -e),
        }
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(self, c: f64) -> Self {
        Self { re: self.re + c, ..self }
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, c: f64) -> Self {
        Self { re: self.re - c, ..self }
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, c: f64) -> Self {
        Self {
            re: self.re * c,
            eps: self.map_eps(|e| e * c),
        }
    }
}

impl<const N: usize> Div<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, c: f64) -> Self {
        Self {
            re: self.re / c,
            eps: self.map_eps(|e| e / c),
        }
    }
}

impl<const N: usize> Scalar for Dual<N> {
    #[inline]
    fn constant(x: f64) -> Self {
        Dual::constant(x)
    }
    #[inline]
    fn value(&self) -> f64 {
        self.re
    }
    #[inline]
    fn sin(self) -> Self {
        let c = math::cos(self.re);
        Self {
            re: math::sin(self.re),
            eps: self.map_eps(|e| e * c),
        }
    }
    #[inline]
    fn cos(self) -> Self {
        let s = -math::sin(self.re);
        Self {
            re: math::cos(self.re),
            eps: self.map_eps(|e| e * s),
        }
    }
    #[inline]
    fn exp(self) -> Self {
        let v = math::exp(self.re);
        Self {
            re: v,
            eps: self.map_eps(|e| e * v),
        }
    }
}

/// A smooth map `ℝⁿ → ℝᵐ` that can be evaluated on any [`Scalar`].
pub trait VectorFn {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval<S: Scalar>(&self, p: &[S]) -> Vec<S>;
}

impl<F: VectorFn + ?Sized> VectorFn for &F {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn eval<S: Scalar>(&self, p: &[S]) -> Vec<S> {
        (**self).eval(p)
    }
}

/// Value and Jacobian (`output_dim x input_dim`) of `f` at `p`.
pub fn jacobian<F: VectorFn + ?Sized>(f: &F, p: &[f64]) -> (Vec<f64>, DenseMatrix) {
    let n = p.len();
    let m = f.output_dim();
    let mut jac = DenseMatrix::zeros(m, n);
    if n == 0 {
        let v = f.eval::<f64>(p);
        return (v, jac);
    }
    let mut value = Vec::new();
    let mut start = 0;
    while start < n {
        let width = (n - start).min(LANES);
        let seeded: Vec<Dual<LANES>> = p
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if i >= start && i < start + width {
                    Dual::variable(x, i - start)
                } else {
                    Dual::constant(x)
                }
            })
            .collect();
        let out = f.eval(&seeded);
        debug_assert_eq!(out.len(), m);
        for (r, d) in out.iter().enumerate() {
            for lane in 0..width {
                jac[(r, start + lane)] = d.eps[lane];
            }
        }
        if start == 0 {
            value = out.iter().map(|d| d.re).collect();
        }
        start += width;
    }
    (value, jac)
}

/// Central finite-difference Jacobian, used to cross-check [`jacobian`].
pub fn finite_difference_jacobian<F: VectorFn + ?Sized>(f: &F, p: &[f64], h: f64) -> DenseMatrix {
    let n = p.len();
    let m = f.output_dim();
    let mut jac = DenseMatrix::zeros(m, n);
    let mut x = p.to_vec();
    for j in 0..n {
        let orig = x[j];
        x[j] = orig + h;
        let fp = f.eval::<f64>(&x);
        x[j] = orig - h;
        let fm = f.eval::<f64>(&x);
        x[j] = orig;
        for r in 0..m {
            jac[(r, j)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

/// Reparametrizes a map as `p_inner = base + Σ_l q_l · scale_l · e_{index_l}`.
///
/// Used to restrict a subsystem map to a subset of its inputs and to express
/// derivatives in normalized coordinates.
#[derive(Debug, Clone)]
pub struct Affine<F> {
    pub inner: F,
    pub base: Vec<f64>,
    /// `(inner index, scale)` for each outer parameter.
    pub directions: Vec<(usize, f64)>,
}

impl<F: VectorFn> Affine<F> {
    pub fn new(inner: F, base: Vec<f64>, directions: Vec<(usize, f64)>) -> Self {
        debug_assert_eq!(base.len(), inner.input_dim());
        Self {
            inner,
            base,
            directions,
        }
    }
}

impl<F: VectorFn> VectorFn for Affine<F> {
    fn input_dim(&self) -> usize {
        self.directions.len()
    }
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }
    fn eval<S: Scalar>(&self, q: &[S]) -> Vec<S> {
        let mut p: Vec<S> = self.base.iter().map(|&b| S::constant(b)).collect();
        for (l, &(idx, scale)) in self.directions.iter().enumerate() {
            p[idx] = p[idx] + q[l] * scale;
        }
        self.inner.eval(&p)
    }
}

/// Convenience: evaluate a [`VectorFn`] on plain floats.
pub fn eval_f64<F: VectorFn + ?Sized>(f: &F, p: &[f64]) -> Vec<f64> {
    f.eval::<f64>(p)
}
