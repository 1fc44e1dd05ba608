//! Manufactured boundary-layer problem, load vectors by composite Gauss
//! quadrature and discrete error norms.

use std::sync::Arc;

use rayon::prelude::*;

use crate::basis::{FunctionIndex, Shapes};
use crate::error::{Result, WaveletError};
use crate::scalar::Real;
use crate::spline::{PiecewisePoly, QuadratureRule};
use crate::tensor::{HelmholtzOperator, MAX_DIM};

/// Gauss nodes per finest cell and dimension for load vectors.
pub const LOAD_NODES: usize = 10;
/// Gauss nodes per finest cell and dimension for the L2 error.
pub const ERROR_NODES: usize = 5;

pub type Function1D<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// `sum_t c_t prod_l g_{t,l}(x_l)`.
#[derive(Clone)]
pub struct SeparableFunction<T> {
    pub dim: usize,
    pub terms: Vec<(T, Vec<Function1D<T>>)>,
}

impl<T: Real> SeparableFunction<T> {
    pub fn new(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    pub fn constant(dim: usize, c: T) -> Self {
        let one: Function1D<T> = Arc::new(|_| T::one());
        Self { dim, terms: vec![(c, vec![one; dim])] }
    }

    pub fn with_term(mut self, coefficient: T, factors: Vec<Function1D<T>>) -> Self {
        assert_eq!(factors.len(), self.dim, "one factor per dimension");
        self.terms.push((coefficient, factors));
        self
    }

    pub fn scaled(mut self, c: T) -> Self {
        self.terms.iter_mut().for_each(|(t, _)| *t *= c);
        self
    }

    pub fn eval(&self, x: &[T]) -> T {
        self.terms.iter().map(|(c, fs)| fs.iter().zip(x).fold(*c, |p, (f, &xi)| p * f(xi))).sum()
    }
}

/// `u(x) = prod_l v(x_l)` with `v(x) = x (1 - e^{50x - 50})`, solving
/// `-eps Δu + a u = f` on `(0,1)^d` with zero boundary values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedProblem<T> {
    pub dim: usize,
    pub eps: T,
    pub a: T,
}

impl<T: Real> ManufacturedProblem<T> {
    pub fn new(dim: usize, eps: T, a: T) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(WaveletError::UnsupportedDimension(dim));
        }
        Ok(Self { dim, eps, a })
    }

    fn layer(x: T) -> T {
        (T::lit(50.0) * x - T::lit(50.0)).exp()
    }

    pub fn v(x: T) -> T {
        x * (T::one() - Self::layer(x))
    }

    pub fn dv(x: T) -> T {
        T::one() - (T::one() + T::lit(50.0) * x) * Self::layer(x)
    }

    pub fn d2v(x: T) -> T {
        -(T::lit(100.0) + T::lit(2500.0) * x) * Self::layer(x)
    }

    pub fn u(&self, x: &[T]) -> T {
        x.iter().fold(T::one(), |p, &xi| p * Self::v(xi))
    }

    pub fn gradient(&self, x: &[T]) -> Vec<T> {
        (0..self.dim)
            .map(|i| {
                x.iter().enumerate().fold(T::one(), |p, (l, &xl)| p * if l == i { Self::dv(xl) } else { Self::v(xl) })
            })
            .collect()
    }

    pub fn laplacian(&self, x: &[T]) -> T {
        (0..self.dim)
            .map(|i| {
                x.iter().enumerate().fold(T::one(), |p, (l, &xl)| p * if l == i { Self::d2v(xl) } else { Self::v(xl) })
            })
            .sum()
    }

    pub fn f(&self, x: &[T]) -> T {
        -self.eps * self.laplacian(x) + self.a * self.u(x)
    }

    /// `f` written as `-eps sum_i v''(x_i) prod_{l != i} v(x_l) + a prod_l v(x_l)`.
    pub fn rhs(&self) -> SeparableFunction<T> {
        let v: Function1D<T> = Arc::new(Self::v);
        let d2v: Function1D<T> = Arc::new(Self::d2v);
        let mut out = SeparableFunction::new(self.dim);
        if self.eps != T::zero() {
            for i in 0..self.dim {
                let factors = (0..self.dim).map(|l| if l == i { d2v.clone() } else { v.clone() }).collect();
                out = out.with_term(-self.eps, factors);
            }
        }
        if self.a != T::zero() {
            out = out.with_term(self.a, vec![v; self.dim]);
        }
        out
    }
}

/// `<g, phi_{level,k}>` for all `k`, by composite Gauss quadrature with
/// `nodes` points on each cell of width `2^-level`.
pub fn single_scale_functional<T: Real>(g: &(dyn Fn(T) -> T + Sync), level: u32, nodes: usize) -> Vec<T> {
    let shapes = Shapes::<T>::new();
    let rule = QuadratureRule::<T>::gauss(nodes);
    let n = 1u32 << level;
    let h = T::pow2(-(level as i32));
    (1..=n)
        .into_par_iter()
        .map(|k| {
            let idx = FunctionIndex::scaling(level, k);
            let phi = shapes.function(idx).expect("valid index");
            let (a, b) = idx.support_half_units();
            // support in whole cells
            (a / 2..b / 2)
                .map(|c| {
                    let lo = T::from_i64(c).unwrap() * h;
                    rule.integrate(lo, lo + h, |x| g(x) * phi.eval(x))
                })
                .sum()
        })
        .collect()
}

/// Preconditioned load vector `D^{-1/2} <f, Psi_s>` of a separable `f`.
pub fn load_vector<T: Real>(f: &SeparableFunction<T>, op: &HelmholtzOperator<T>, nodes: usize) -> Result<Vec<T>> {
    if f.dim != op.dim() {
        return Err(WaveletError::InvalidParameter(format!(
            "right-hand side has dimension {} but the operator {}",
            f.dim,
            op.dim()
        )));
    }
    let level = op.spec.finest_level();
    let n = 1usize << level;
    let mut single = vec![T::zero(); op.len()];
    for (c, factors) in &f.terms {
        let lines: Vec<Vec<T>> = factors.iter().map(|g| single_scale_functional(g.as_ref(), level, nodes)).collect();
        single.par_chunks_mut(n).enumerate().for_each(|(row, out)| {
            // all factors but the last are fixed by the row index
            let mut r = row;
            let mut scale = *c;
            for line in lines[..lines.len() - 1].iter().rev() {
                scale *= line[r % n];
                r /= n;
            }
            for (o, &v) in out.iter_mut().zip(lines.last().unwrap()) {
                *o += scale * v;
            }
        });
    }
    op.preconditioned_load(&single)
}

/// `rhs_load_vector` of the manufactured problem with the default rule.
pub fn rhs_load_vector<T: Real>(p: &ManufacturedProblem<T>, op: &HelmholtzOperator<T>) -> Result<Vec<T>> {
    load_vector(&p.rhs(), op, LOAD_NODES)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms<T> {
    pub linf: T,
    pub l2: T,
}

/// Values of `phi_{level,k}` at `points`, as sparse rows.
fn evaluation_rows<T: Real>(level: u32, points: &[T]) -> Vec<Vec<(usize, T)>> {
    let shapes = Shapes::<T>::new();
    let n = 1usize << level;
    let funcs: Vec<PiecewisePoly<T>> =
        (1..=n as u32).map(|k| shapes.function(FunctionIndex::scaling(level, k)).expect("valid index")).collect();
    let scale = T::pow2(level as i32);
    points
        .iter()
        .map(|&x| {
            let cell = (x * scale).floor().to_usize().unwrap_or(0).min(n - 1);
            // cell c meets phi_{level,k} for 1-based k in c ..= c + 2
            (cell.saturating_sub(1)..=(cell + 1).min(n - 1))
                .filter_map(|k| {
                    let v = funcs[k].eval(x);
                    (v != T::zero()).then_some((k, v))
                })
                .collect()
        })
        .collect()
}

/// Max and weighted sum of squares of `u_h - prod_l exact[i_l]` over the
/// tensor grid of `points` (same points in every dimension).
fn tensor_deviation<T: Real>(
    coeffs: &[T],
    n: usize,
    d: usize,
    rows: &[Vec<(usize, T)>],
    weights: &[T],
    exact: &[T],
) -> (T, T) {
    #[allow(clippy::too_many_arguments)]
    fn descend<T: Real>(
        slice: &[T],
        n: usize,
        d: usize,
        rows: &[Vec<(usize, T)>],
        weights: &[T],
        exact: &[T],
        w: T,
        e: T,
    ) -> (T, T) {
        if d == 0 {
            let diff = slice[0] - e;
            return (diff.abs(), w * diff * diff);
        }
        let stride = n.pow(d as u32 - 1);
        let mut buf = vec![T::zero(); stride];
        let (mut max, mut sum) = (T::zero(), T::zero());
        for (i, row) in rows.iter().enumerate() {
            buf.iter_mut().for_each(|b| *b = T::zero());
            for &(k, v) in row {
                for (b, &c) in buf.iter_mut().zip(&slice[k * stride..(k + 1) * stride]) {
                    *b += v * c;
                }
            }
            let (m, s) = descend(&buf, n, d - 1, rows, weights, exact, w * weights[i], e * exact[i]);
            max = max.max(m);
            sum += s;
        }
        (max, sum)
    }
    let stride = n.pow(d as u32 - 1);
    rows.par_iter()
        .enumerate()
        .map(|(i, row)| {
            let mut buf = vec![T::zero(); stride];
            for &(k, v) in row {
                for (b, &c) in buf.iter_mut().zip(&coeffs[k * stride..(k + 1) * stride]) {
                    *b += v * c;
                }
            }
            descend(&buf, n, d - 1, rows, weights, exact, weights[i], exact[i])
        })
        .reduce(|| (T::zero(), T::zero()), |a, b| (a.0.max(b.0), a.1 + b.1))
}

/// Default exponent of the uniform sampling grid for the maximum error.
pub fn default_grid_exponent(level: u32) -> u32 {
    (level + 2).max(12)
}

/// `||u_s - u||_inf` on the uniform grid with `2^grid_exp + 1` points per
/// dimension and `||u_s - u||_2` by composite 5-point Gauss on every finest
/// cell, for a solution `coeffs` of the preconditioned system.
pub fn error_norms<T: Real>(
    coeffs: &[T],
    p: &ManufacturedProblem<T>,
    op: &HelmholtzOperator<T>,
    grid_exp: Option<u32>,
) -> Result<ErrorNorms<T>> {
    if p.dim != op.dim() {
        return Err(WaveletError::UnsupportedDimension(p.dim));
    }
    let single = op.preconditioned_to_single_scale(coeffs)?;
    Ok(single_scale_error_norms(&single, op.spec.finest_level(), p, grid_exp))
}

/// Same as [`error_norms`] for single-scale coefficients at `level`.
pub fn single_scale_error_norms<T: Real>(
    single: &[T],
    level: u32,
    p: &ManufacturedProblem<T>,
    grid_exp: Option<u32>,
) -> ErrorNorms<T> {
    let n = 1usize << level;
    let d = p.dim;
    assert_eq!(single.len(), n.pow(d as u32), "coefficient count");

    let m = 1usize << grid_exp.unwrap_or_else(|| default_grid_exponent(level));
    let grid: Vec<T> = (0..=m).map(|i| T::from_usize_lossy(i) / T::from_usize_lossy(m)).collect();
    let exact: Vec<T> = grid.iter().map(|&x| ManufacturedProblem::v(x)).collect();
    let ones = vec![T::one(); grid.len()];
    let (linf, _) = tensor_deviation(single, n, d, &evaluation_rows(level, &grid), &ones, &exact);

    let rule = QuadratureRule::<T>::gauss(ERROR_NODES);
    let h = T::pow2(-(level as i32));
    let mut points = Vec::with_capacity(n * ERROR_NODES);
    let mut weights = Vec::with_capacity(n * ERROR_NODES);
    for c in 0..n {
        let lo = T::from_usize_lossy(c) * h;
        for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
            points.push(lo + h * x);
            weights.push(w * h);
        }
    }
    let exact: Vec<T> = points.iter().map(|&x| ManufacturedProblem::v(x)).collect();
    let (_, sq) = tensor_deviation(single, n, d, &evaluation_rows(level, &points), &weights, &exact);
    ErrorNorms { linf, l2: sq.sqrt() }
}
