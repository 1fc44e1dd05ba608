//! Conjugate gradients, the nested-iteration multilevel driver and Lanczos
//! estimates of extreme eigenvalues.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dense::DenseMatrix;
use crate::error::{Result, WaveletError};
use crate::scalar::{axpy, Real};
use crate::tensor::HelmholtzOperator;

/// Symmetric linear map on `R^n`.
pub trait LinearOperator<T> {
    fn len(&self) -> usize;

    fn apply(&self, x: &[T]) -> Vec<T>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `D^{-1/2} A D^{-1/2}` of a [`HelmholtzOperator`].
#[derive(Debug, Clone, Copy)]
pub struct Preconditioned<'a, T>(pub &'a HelmholtzOperator<T>);

impl<T: Real> LinearOperator<T> for Preconditioned<'_, T> {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        self.0.apply_preconditioned(x).expect("vector length matches operator")
    }
}

impl<T: Real> LinearOperator<T> for DenseMatrix<T> {
    fn len(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        self.matvec(x)
    }
}

/// Operator given by a closure.
pub struct FnOperator<F> {
    pub n: usize,
    pub f: F,
}

impl<T, F: Fn(&[T]) -> Vec<T>> LinearOperator<T> for FnOperator<F> {
    fn len(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        (self.f)(x)
    }
}

fn par_dot<T: Real>(a: &[T], b: &[T]) -> T {
    if a.len() < 1 << 14 {
        return crate::scalar::dot(a, b);
    }
    a.par_chunks(4096).zip(b.par_chunks(4096)).map(|(x, y)| crate::scalar::dot(x, y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgReport<T> {
    pub solution: Vec<T>,
    pub iterations: usize,
    /// `||r||_2` before the first and after every iteration.
    pub residual_history: Vec<T>,
    pub converged: bool,
}

impl<T: Real> CgReport<T> {
    pub fn final_residual(&self) -> T {
        *self.residual_history.last().expect("history holds the initial residual")
    }
}

/// Conjugate gradients from `x0`, stopping once `||f - A x||_2 <= tol`.
pub fn cg<T: Real>(op: &impl LinearOperator<T>, f: &[T], x0: &[T], tol: T, max_iter: usize) -> Result<CgReport<T>> {
    let n = op.len();
    for len in [f.len(), x0.len()] {
        if len != n {
            return Err(WaveletError::LengthMismatch { expected: n, actual: len });
        }
    }
    let mut x = x0.to_vec();
    let ax = op.apply(&x);
    let mut r: Vec<T> = f.iter().zip(&ax).map(|(&f, &a)| f - a).collect();
    let mut p = r.clone();
    let mut rr = par_dot(&r, &r);
    let mut history = vec![rr.sqrt()];
    let mut iterations = 0;
    while rr.sqrt() > tol && iterations < max_iter {
        let ap = op.apply(&p);
        let pap = par_dot(&p, &ap);
        if pap <= T::zero() {
            return Err(WaveletError::NotPositiveDefinite);
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_next = par_dot(&r, &r);
        let beta = rr_next / rr;
        rr = rr_next;
        for (p, &r) in p.iter_mut().zip(&r) {
            *p = r + beta * *p;
        }
        iterations += 1;
        history.push(rr.sqrt());
    }
    Ok(CgReport { solution: x, iterations, converged: rr.sqrt() <= tol, residual_history: history })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultilevelReport<T> {
    /// `M_j` for `j = 0..=s`.
    pub level_iterations: Vec<usize>,
    /// `sum_j M_j / 4^(s-j)`.
    pub equivalent_iterations: f64,
    pub solution: Vec<T>,
    pub final_residual: T,
    pub converged: bool,
}

/// `sum_j M_j / 4^(s-j)`, the work-weighted count of the two-dimensional experiment.
pub fn equivalent_iterations(level_iterations: &[usize]) -> f64 {
    let s = level_iterations.len() as i32 - 1;
    level_iterations.iter().enumerate().map(|(j, &m)| m as f64 * 4f64.powi(j as i32 - s)).sum()
}

/// Per-level stopping tolerance `1e-4 * 2^(-2s)`.
pub fn multilevel_tolerance<T: Real>(s: u32) -> T {
    T::lit(1e-4) * T::pow2(-2 * s as i32)
}

/// Nested iteration: solve `At_j u_j = ft_j` for `j = 0..=s` by CG, each
/// started from the previous solution padded with zeros.
///
/// `ops[j]` is the operator with `j` wavelet levels and `rhs` the
/// preconditioned load vector at the finest level; `ft_j` is its prefix since
/// `At_j` is a principal submatrix of `At_s`.
pub fn multilevel_galerkin<T: Real>(
    ops: &[HelmholtzOperator<T>],
    rhs: &[T],
    max_iter: usize,
) -> Result<MultilevelReport<T>> {
    let finest = ops.last().ok_or_else(|| WaveletError::InvalidParameter("no levels given".into()))?;
    if rhs.len() != finest.len() {
        return Err(WaveletError::LengthMismatch { expected: finest.len(), actual: rhs.len() });
    }
    let tol = multilevel_tolerance::<T>(ops.len() as u32 - 1);
    let mut x: Vec<T> = Vec::new();
    let mut level_iterations = Vec::with_capacity(ops.len());
    let mut converged = true;
    let mut residual = T::zero();
    for op in ops {
        let n = op.len();
        x.resize(n, T::zero());
        let report = cg(&Preconditioned(op), &rhs[..n], &x, tol, max_iter)?;
        level_iterations.push(report.iterations);
        converged &= report.converged;
        residual = report.final_residual();
        x = report.solution;
    }
    Ok(MultilevelReport {
        equivalent_iterations: equivalent_iterations(&level_iterations),
        level_iterations,
        solution: x,
        final_residual: residual,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SpectrumEstimate {
    pub fn condition_number(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }
}

/// Seed of the deterministic Lanczos start vector.
pub const LANCZOS_SEED: u64 = 0x5eed;

/// Lanczos with full reorthogonalisation from a fixed pseudo-random start.
///
/// Stops when the error bound `min(r, r^2 / gap)` of both extreme Ritz
/// values drops below `rel_tol` times their magnitude, where `r` is the
/// Ritz residual norm.
pub fn extreme_eigenvalues<T: Real>(
    op: &impl LinearOperator<T>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<SpectrumEstimate> {
    let n = op.len();
    if n == 0 {
        return Err(WaveletError::InvalidParameter("empty operator".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(LANCZOS_SEED);
    let mut q: Vec<T> = (0..n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
    let nq = par_dot(&q, &q).sqrt();
    q.iter_mut().for_each(|x| *x /= nq);
    let max_iter = max_iter.min(n);
    let mut basis: Vec<Vec<T>> = Vec::new();
    let (mut alpha, mut beta) = (Vec::<f64>::new(), Vec::<f64>::new());
    let mut next_check = 4;
    loop {
        let mut w = op.apply(&q);
        let a = par_dot(&q, &w);
        alpha.push(a.as_f64());
        basis.push(q);
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            let coeffs: Vec<T> = basis.par_iter().map(|v| par_dot(v, &w)).collect();
            w.par_chunks_mut(4096).enumerate().for_each(|(ci, chunk)| {
                let off = ci * 4096;
                for (v, &c) in basis.iter().zip(&coeffs) {
                    axpy(-c, &v[off..off + chunk.len()], chunk);
                }
            });
        }
        let b = par_dot(&w, &w).sqrt();
        let k = alpha.len();
        let breakdown = b.as_f64() <= 1e-14 * alpha.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if k >= next_check || k == max_iter || breakdown {
            next_check = k + (k / 8).max(4);
            let (tmin, tmax, err_min, err_max) = ritz_extremes(&alpha, &beta, b.as_f64());
            let estimate = SpectrumEstimate {
                lambda_min: tmin,
                lambda_max: tmax,
                iterations: k,
                converged: breakdown || (err_min <= rel_tol * tmin.abs() && err_max <= rel_tol * tmax.abs()),
            };
            if estimate.converged || k == max_iter {
                return Ok(estimate);
            }
        }
        beta.push(b.as_f64());
        q = w.into_iter().map(|x| x / b).collect();
    }
}

/// Extreme eigenvalues of the Lanczos tridiagonal and their error bounds.
fn ritz_extremes(alpha: &[f64], beta: &[f64], next_beta: f64) -> (f64, f64, f64, f64) {
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let bound = |pos: usize, neighbour: Option<usize>| {
        let i = order[pos];
        let r = (next_beta * eig.eigenvectors[(k - 1, i)]).abs();
        match neighbour {
            Some(nb) => {
                let gap = (eig.eigenvalues[order[nb]] - eig.eigenvalues[i]).abs();
                if gap > 0.0 {
                    r.min(r * r / gap)
                } else {
                    r
                }
            }
            None => r,
        }
    };
    let (lo_nb, hi_nb) = if k > 1 { (Some(1), Some(k - 2)) } else { (None, None) };
    (eig.eigenvalues[order[0]], eig.eigenvalues[order[k - 1]], bound(0, lo_nb), bound(k - 1, hi_nb))
}

/// Default relative accuracy of the extreme eigenvalue estimates.
pub const LANCZOS_TOLERANCE: f64 = 1e-6;

/// Default iteration cap for Lanczos.
pub const LANCZOS_MAX_ITER: usize = 5000;

/// `lambda_max / lambda_min` of the diagonally preconditioned operator.
pub fn condition_number<T: Real>(op: &HelmholtzOperator<T>) -> Result<SpectrumEstimate> {
    extreme_eigenvalues(&Preconditioned(op), LANCZOS_TOLERANCE, LANCZOS_MAX_ITER)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisSpec1D;

    fn dense_of(op: &impl LinearOperator<f64>) -> DMatrix<f64> {
        let n = op.len();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            for (i, v) in op.apply(&e).into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    #[test]
    fn identity_converges_in_one_step() {
        let id = FnOperator { n: 10, f: |x: &[f64]| x.to_vec() };
        let f: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let rep = cg(&id, &f, &[0.0; 10], 1e-12, 100).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
    }

    #[test]
    fn cg_matches_direct_solve() {
        let spec = BasisSpec1D::new(2, 3).unwrap();
        let op = HelmholtzOperator::new(1, spec, 1.0, 0.0).unwrap();
        let pre = Preconditioned(&op);
        let f: Vec<f64> = (0..op.len()).map(|i| ((i * 7 % 5) as f64 - 2.0) / 3.0).collect();
        let rep = cg(&pre, &f, &vec![0.0; op.len()], 1e-10, 1000).unwrap();
        let a = dense_of(&pre);
        let x = a.clone().lu().solve(&nalgebra::DVector::from_vec(f.clone())).unwrap();
        for (u, v) in rep.solution.iter().zip(x.iter()) {
            assert!((u - v).abs() < 1e-8);
        }
        // energy error is non-increasing along the iteration
        let mut last = f64::INFINITY;
        for m in 1..=rep.iterations {
            let xm = cg(&pre, &f, &vec![0.0; op.len()], 0.0, m).unwrap().solution;
            let e = nalgebra::DVector::from_vec(xm) - &x;
            let energy = e.dot(&(&a * &e));
            assert!(energy <= last * (1.0 + 1e-9));
            last = energy;
        }
    }

    #[test]
    fn lanczos_matches_dense_spectrum() {
        for (dim, s, eps, a) in [(1, 3, 1.0, 0.0), (2, 2, 1.0, 1.0), (2, 2, 1e-3, 1.0), (3, 1, 1.0, 0.0)] {
            let spec = BasisSpec1D::new(2, s).unwrap();
            let op = HelmholtzOperator::new(dim, spec, eps, a).unwrap();
            let est = condition_number(&op).unwrap();
            let ev = dense_of(&Preconditioned(&op)).symmetric_eigenvalues();
            let (lo, hi) = (ev.min(), ev.max());
            assert!(est.converged);
            assert!((est.lambda_min - lo).abs() < 1e-8 * lo.max(1.0), "{} vs {lo}", est.lambda_min);
            assert!((est.lambda_max - hi).abs() < 1e-8 * hi, "{} vs {hi}", est.lambda_max);
            assert!(est.lambda_min >= lo - 1e-10 && est.lambda_max <= hi + 1e-10);
        }
    }

    #[test]
    fn lanczos_dense_diagonal() {
        let m = DenseMatrix::from_fn(50, 50, |i, j| if i == j { 1.0 + i as f64 } else { 0.0 });
        let est = extreme_eigenvalues(&m, 1e-10, 200).unwrap();
        assert!((est.lambda_min - 1.0).abs() < 1e-8);
        assert!((est.lambda_max - 50.0).abs() < 1e-8);
    }

    #[test]
    fn equivalent_iteration_weights() {
        assert_eq!(equivalent_iterations(&[10]), 10.0);
        assert_eq!(equivalent_iterations(&[8, 16]), 2.0 + 16.0);
        assert_eq!(equivalent_iterations(&[16, 16, 16]), 1.0 + 4.0 + 16.0);
    }

    #[test]
    fn multilevel_matches_single_level_solve() {
        let spec = |s| BasisSpec1D::new(2, s).unwrap();
        let ops: Vec<_> = (0..=3).map(|s| HelmholtzOperator::new(2, spec(s), 1.0, 0.0).unwrap()).collect();
        let f: Vec<f64> = (0..ops[3].len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let ml = multilevel_galerkin(&ops, &f, 10_000).unwrap();
        assert!(ml.converged);
        let tol = multilevel_tolerance::<f64>(3);
        let direct = cg(&Preconditioned(&ops[3]), &f, &vec![0.0; f.len()], tol, 10_000).unwrap();
        let diff: Vec<f64> = ml.solution.iter().zip(&direct.solution).map(|(a, b)| a - b).collect();
        let r = Preconditioned(&ops[3]).apply(&diff);
        assert!(crate::scalar::norm2(&r) <= 10.0 * tol);
        assert_eq!(ml.level_iterations.len(), 4);
    }
}
