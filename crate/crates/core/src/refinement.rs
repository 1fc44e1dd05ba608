//! Refinement matrices, their explicit duals and the fast one-dimensional
//! multiscale transform.

use crate::basis::{BasisSpec1D, MIN_LEVEL};
use crate::dense::{solve_tridiagonal, DenseMatrix};
use crate::error::{Result, WaveletError};
use crate::gram::orthogonalize_coarsest;
use crate::scalar::Real;

/// Column-compressed sparse matrix with a handful of entries per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseColumns<T> {
    nrows: usize,
    cols: Vec<Vec<(usize, T)>>,
}

impl<T: Real> SparseColumns<T> {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn column(&self, j: usize) -> &[(usize, T)] {
        &self.cols[j]
    }

    /// `out += self * x`
    pub fn mul_add(&self, x: &[T], out: &mut [T]) {
        for (col, &xc) in self.cols.iter().zip(x) {
            if xc == T::zero() {
                continue;
            }
            for &(r, v) in col {
                out[r] += v * xc;
            }
        }
    }

    /// `self^T y`
    pub fn mul_t(&self, y: &[T], out: &mut [T]) {
        for (o, col) in out.iter_mut().zip(&self.cols) {
            *o = col.iter().map(|&(r, v)| v * y[r]).sum();
        }
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(self.nrows, self.ncols());
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, v) in col {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// `M_{j,0}` and `M_{j,1}` with `Phi_j = M_{j,0}^T Phi_{j+1}` and
/// `Psi_j = M_{j,1}^T Phi_{j+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementPair<T> {
    pub level: u32,
    pub m0: SparseColumns<T>,
    pub m1: SparseColumns<T>,
}

/// Dense duals with `M_{j,e}^T Mt_{j,e'} = delta_{e,e'} I`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPair<T> {
    pub level: u32,
    pub mt0: DenseMatrix<T>,
    pub mt1: DenseMatrix<T>,
}

fn check_level(level: u32) -> Result<()> {
    if level < MIN_LEVEL {
        Err(WaveletError::LevelTooCoarse { level, min: MIN_LEVEL })
    } else {
        Ok(())
    }
}

pub fn primal_matrices<T: Real>(level: u32) -> Result<RefinementPair<T>> {
    check_level(level)?;
    let n = 1usize << level;
    let s = T::lit(2.0).sqrt();
    let r = T::ratio;
    let h = [r(1, 4), r(3, 4), r(3, 4), r(1, 4)];
    let hb = [r(1, 2), r(9, 8), r(3, 8)];
    let mut c0 = Vec::with_capacity(n);
    // 0-based column k holds phi_{j,k+1}
    c0.push(hb.iter().enumerate().map(|(i, &v)| (i, v / s)).collect());
    for k in 1..n - 1 {
        // interior phi_{j,k+1} refines onto rows 2k-1 ..= 2k+2 (0-based)
        c0.push(h.iter().enumerate().map(|(i, &v)| (2 * k - 1 + i, v / s)).collect());
    }
    c0.push(hb.iter().rev().enumerate().map(|(i, &v)| (2 * n - 3 + i, v / s)).collect());
    let w = T::ratio(1, 2) / s;
    let c1 = (0..n).map(|k| vec![(2 * k, -w), (2 * k + 1, w)]).collect();
    Ok(RefinementPair {
        level,
        m0: SparseColumns { nrows: 2 * n, cols: c0 },
        m1: SparseColumns { nrows: 2 * n, cols: c1 },
    })
}

/// Constants of the closed-form dual: `a = -3 - 2 sqrt 2`, `b = (13 - 9 sqrt 2) / 6`.
fn dual_constants<T: Real>() -> (T, T) {
    let s = T::lit(2.0).sqrt();
    let a = -T::lit(3.0) - T::lit(2.0) * s;
    let b = (T::lit(13.0) - T::lit(9.0) * s) / T::lit(6.0);
    (a, b)
}

/// Closed-form `Mt_{j,0}`.
///
/// Rows come in equal pairs; with `n = 2^j` the pair value is
/// `B = D^{-1} C^{-1} H^{-1}` where `C^{-1}` has entries `a^{-|k-l|}`,
/// `H^{-1}` scales the first and last column by 2/3, and `D^{-1}` is the
/// bordered identity whose border entries are `d_k`.
pub fn dual_m0<T: Real>(level: u32) -> Result<DenseMatrix<T>> {
    check_level(level)?;
    let n = 1usize << level;
    let ni = n as i32;
    let s = T::lit(2.0).sqrt();
    let (a, b) = dual_constants::<T>();
    let c1 = T::lit(3.0) + s; // 3 + sqrt 2
    let c2 = T::lit(11.0) + T::lit(6.0) * s; // 11 + 6 sqrt 2
    let (six, thirty_six) = (T::lit(6.0), T::lit(36.0));
    let alpha = T::one() / (T::one() - thirty_six * b * b * a.powi(4 - 2 * ni) / c2);
    // d[k] for k = 1..=n (index 0 unused)
    let mut d = vec![T::zero(); n + 1];
    d[1] = six * alpha / c1;
    d[n] = -thirty_six * b * alpha * a.powi(2 - ni) / c2;
    for (k, dk) in d.iter_mut().enumerate().take(n).skip(2) {
        let k = k as i32;
        *dk = -six * b * alpha * a.powi(2 - k) / c1 + thirty_six * b * b * alpha * a.powi(k + 3 - 2 * ni) / c2;
    }
    let inv_pow = |m: usize| a.powi(-(m as i32));
    let edge = T::ratio(2, 3);
    let mut out = DenseMatrix::zeros(2 * n, n);
    for l in 1..=n {
        let hl = if l == 1 || l == n { edge } else { T::one() };
        for k in 1..=n {
            let v = if k == 1 {
                d[1] * inv_pow(l - 1) + d[n] * inv_pow(n - l)
            } else if k == n {
                d[1] * inv_pow(n - l) + d[n] * inv_pow(l - 1)
            } else {
                inv_pow(k.abs_diff(l)) + d[k] * inv_pow(l - 1) + d[n + 1 - k] * inv_pow(n - l)
            };
            out[(2 * k - 2, l - 1)] = v * hl;
            out[(2 * k - 1, l - 1)] = v * hl;
        }
    }
    Ok(out)
}

/// Paired-row matrix `A_j`, `(A_j)_{n,k} = (M_{j,0})_{2k-1,n} + (M_{j,0})_{2k,n}`,
/// returned as (sub, diag, super) diagonals.
pub fn paired_system<T: Real>(pair: &RefinementPair<T>) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = pair.m0.ncols();
    let mut a = DenseMatrix::<T>::zeros(n, n);
    for col in 0..n {
        for &(row, v) in pair.m0.column(col) {
            a[(col, row / 2)] += v;
        }
    }
    let sub = (1..n).map(|i| a[(i, i - 1)]).collect();
    let diag = (0..n).map(|i| a[(i, i)]).collect();
    let sup = (0..n - 1).map(|i| a[(i, i + 1)]).collect();
    (sub, diag, sup)
}

/// `Mt_{j,1}` from the paired-row structure and a tridiagonal solve.
pub fn dual_m1<T: Real>(level: u32) -> Result<DenseMatrix<T>> {
    let pair = primal_matrices::<T>(level)?;
    let n = pair.m0.ncols();
    let (sub, diag, sup) = paired_system(&pair);
    let two_root2 = T::lit(2.0) * T::lit(2.0).sqrt();
    // right-hand side 2 sqrt2 (M_{j,0})_{2l-1, row}
    let mut rhs = DenseMatrix::zeros(n, n);
    for col in 0..n {
        for &(row, v) in pair.m0.column(col) {
            if row % 2 == 0 {
                rhs[(col, row / 2)] = two_root2 * v;
            }
        }
    }
    let even = solve_tridiagonal(&sub, &diag, &sup, &rhs);
    let mut out = DenseMatrix::zeros(2 * n, n);
    for k in 0..n {
        for l in 0..n {
            let e = even[(k, l)];
            out[(2 * k + 1, l)] = e;
            out[(2 * k, l)] = if k == l { e - two_root2 } else { e };
        }
    }
    Ok(out)
}

pub fn dual_matrices<T: Real>(level: u32) -> Result<DualPair<T>> {
    Ok(DualPair { level, mt0: dual_m0(level)?, mt1: dual_m1(level)? })
}

impl<T: Real> RefinementPair<T> {
    pub fn coarse_len(&self) -> usize {
        self.m0.ncols()
    }

    /// `c_{j+1} = M_{j,0} c_j + M_{j,1} d_j`
    pub fn reconstruct(&self, c: &[T], d: &[T]) -> Result<Vec<T>> {
        let n = self.coarse_len();
        for len in [c.len(), d.len()] {
            if len != n {
                return Err(WaveletError::LengthMismatch { expected: n, actual: len });
            }
        }
        let mut out = vec![T::zero(); 2 * n];
        self.reconstruct_into(c, d, &mut out);
        Ok(out)
    }

    pub(crate) fn reconstruct_into(&self, c: &[T], d: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|x| *x = T::zero());
        self.m0.mul_add(c, out);
        self.m1.mul_add(d, out);
    }
}

impl<T: Real> DualPair<T> {
    /// `c_j = Mt_{j,0}^T c_{j+1}`, `d_j = Mt_{j,1}^T c_{j+1}`
    pub fn decompose(&self, fine: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let expected = self.mt0.nrows();
        if fine.len() != expected {
            return Err(WaveletError::LengthMismatch { expected, actual: fine.len() });
        }
        Ok((self.mt0.matvec_t(fine), self.mt1.matvec_t(fine)))
    }
}

/// Change of basis from multiscale coefficients (ordered as
/// [`crate::basis::enumerate_basis`]) to single-scale coefficients at the
/// finest level.
pub fn multiscale_synthesis<T: Real>(spec: &BasisSpec1D, v: &[T]) -> Result<Vec<T>> {
    if v.len() != spec.dim() {
        return Err(WaveletError::LengthMismatch { expected: spec.dim(), actual: v.len() });
    }
    let n0 = 1usize << spec.j0;
    let mut c: Vec<T> = if spec.ortho { orthogonalize_coarsest::<T>(spec)?.matvec(&v[..n0]) } else { v[..n0].to_vec() };
    let mut offset = n0;
    for j in spec.j0..spec.finest_level() {
        let n = 1usize << j;
        let pair = primal_matrices::<T>(j)?;
        c = pair.reconstruct(&c, &v[offset..offset + n])?;
        offset += n;
    }
    Ok(c)
}

/// Numerical checks of the uniform bounds on the dual matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    /// `(j, ||Mt_{j,0}||_2)`
    pub dual_norms: Vec<(u32, f64)>,
    /// `(j, ||S~_j||_2)` with rows of `Mt_{j,0}^T Mt_{j+1,0}^T` summed pairwise.
    pub compressed_norms: Vec<(u32, f64)>,
    /// `(n, ||Mt_{2,0}^T ... Mt_{n-1,0}^T||_2)`
    pub product_norms: Vec<(u32, f64)>,
    /// Least-squares slope of `log2` of the product norms against `n - 2`.
    pub growth_exponent: f64,
}

impl LemmaReport {
    pub const DUAL_NORM_BOUND: f64 = 2.8;
    pub const COMPRESSED_NORM_BOUND: f64 = 2.0 * std::f64::consts::SQRT_2;
    pub const GROWTH_EXPONENT_BOUND: f64 = 0.5;

    pub fn dual_norms_ok(&self) -> bool {
        self.dual_norms.iter().all(|&(_, v)| v <= Self::DUAL_NORM_BOUND)
    }

    pub fn compressed_norms_ok(&self) -> bool {
        self.compressed_norms.iter().all(|&(_, v)| v < Self::COMPRESSED_NORM_BOUND)
    }

    pub fn growth_ok(&self) -> bool {
        self.growth_exponent < Self::GROWTH_EXPONENT_BOUND
    }

    pub fn all_ok(&self) -> bool {
        self.dual_norms_ok() && self.compressed_norms_ok() && self.growth_ok()
    }
}

/// Evaluates the three norm checks for `2 <= j <= jmax`.
///
/// The compressed matrices are formed for `3 <= j <= jmax - 1` and the
/// products for `3 <= n <= jmax`.
pub fn verify_norm_lemmas(jmax: u32) -> Result<LemmaReport> {
    if jmax < 4 {
        return Err(WaveletError::InvalidParameter(format!("jmax must be at least 4, got {jmax}")));
    }
    let duals: Vec<DenseMatrix<f64>> = (MIN_LEVEL..=jmax).map(dual_m0::<f64>).collect::<Result<_>>()?;
    let dual_t = |j: u32| duals[(j - MIN_LEVEL) as usize].transpose();
    let dual_norms = (MIN_LEVEL..=jmax).map(|j| (j, duals[(j - MIN_LEVEL) as usize].norm2())).collect();

    let compressed_norms = (3..jmax)
        .map(|j| {
            let s = dual_t(j).matmul(&dual_t(j + 1));
            let st = DenseMatrix::from_fn(s.nrows() / 2, s.ncols(), |k, l| s[(2 * k, l)] + s[(2 * k + 1, l)]);
            (j, st.norm2())
        })
        .collect();

    let mut product = dual_t(MIN_LEVEL);
    let mut product_norms = Vec::new();
    for n in 3..=jmax {
        if n > 3 {
            product = product.matmul(&dual_t(n - 1));
        }
        product_norms.push((n, product.norm2()));
    }
    let pts: Vec<(f64, f64)> = product_norms.iter().map(|&(n, v)| ((n - MIN_LEVEL) as f64, v.log2())).collect();
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    Ok(LemmaReport { dual_norms, compressed_norms, product_norms, growth_exponent: num / den })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{FunctionIndex, Shapes};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn primal_dimensions_and_stencils() {
        let p = primal_matrices::<f64>(2).unwrap();
        assert_eq!((p.m0.nrows(), p.m0.ncols()), (8, 4));
        assert_eq!((p.m1.nrows(), p.m1.ncols()), (8, 4));
        let s = 2f64.sqrt();
        let col: Vec<_> = p.m0.column(1).to_vec();
        let expect = [(1, 0.25 / s), (2, 0.75 / s), (3, 0.75 / s), (4, 0.25 / s)];
        assert_eq!(col, expect);
        let edge: Vec<_> = p.m0.column(0).to_vec();
        assert_eq!(edge, [(0, 0.5 / s), (1, 9.0 / 8.0 / s), (2, 3.0 / 8.0 / s)]);
        for k in 0..4 {
            assert_eq!(p.m1.column(k).len(), 2);
        }
    }

    #[test]
    fn functional_refinement() {
        let shapes = Shapes::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for j in 2..=4 {
            let p = primal_matrices::<f64>(j).unwrap();
            let n = 1u32 << j;
            let fine: Vec<_> =
                (1..=2 * n).map(|m| shapes.function(FunctionIndex::scaling(j + 1, m)).unwrap()).collect();
            for k in 1..=n {
                let phi = shapes.function(FunctionIndex::scaling(j, k)).unwrap();
                let psi = shapes.function(FunctionIndex::wavelet(j, k)).unwrap();
                for _ in 0..1000 / n as usize {
                    let x: f64 = rng.gen();
                    let r0: f64 = p.m0.column(k as usize - 1).iter().map(|&(m, v)| v * fine[m].eval(x)).sum();
                    let r1: f64 = p.m1.column(k as usize - 1).iter().map(|&(m, v)| v * fine[m].eval(x)).sum();
                    assert!((phi.eval(x) - r0).abs() <= 1e-13);
                    assert!((psi.eval(x) - r1).abs() <= 1e-13);
                }
            }
        }
    }

    #[test]
    fn paired_system_entries() {
        let p = primal_matrices::<f64>(3).unwrap();
        let (sub, diag, sup) = paired_system(&p);
        let s = 2f64.sqrt();
        assert!((diag[0] - 13.0 / 8.0 / s).abs() < 1e-15);
        assert!((sup[0] - 3.0 / 8.0 / s).abs() < 1e-15);
        assert!((diag[3] - 1.5 / s).abs() < 1e-15);
        assert!((sub[2] - 0.25 / s).abs() < 1e-15);
        assert!((sub[6] - 3.0 / 8.0 / s).abs() < 1e-15);
    }

    fn check_biorthogonality(j: u32, tol: f64) {
        let p = primal_matrices::<f64>(j).unwrap();
        let (m0, m1) = (p.m0.to_dense(), p.m1.to_dense());
        let d = dual_matrices::<f64>(j).unwrap();
        let n = 1usize << j;
        let id = DenseMatrix::identity(n);
        let zero = DenseMatrix::zeros(n, n);
        assert!(m0.transpose().matmul(&d.mt0).max_abs_diff(&id) <= tol, "M0^T Mt0, j={j}");
        assert!(m1.transpose().matmul(&d.mt0).max_abs_diff(&zero) <= tol, "M1^T Mt0, j={j}");
        assert!(m0.transpose().matmul(&d.mt1).max_abs_diff(&zero) <= tol, "M0^T Mt1, j={j}");
        assert!(m1.transpose().matmul(&d.mt1).max_abs_diff(&id) <= tol, "M1^T Mt1, j={j}");
        let full = d.mt0.matmul(&m0.transpose());
        let full2 = d.mt1.matmul(&m1.transpose());
        let sum = DenseMatrix::from_fn(2 * n, 2 * n, |a, b| full[(a, b)] + full2[(a, b)]);
        assert!(sum.max_abs_diff(&DenseMatrix::identity(2 * n)) <= tol, "completeness, j={j}");
    }

    #[test]
    fn biorthogonality_small_levels() {
        for j in 2..=6 {
            check_biorthogonality(j, 1e-12);
        }
    }

    #[test]
    fn dual_rows_pair_equal_and_decay() {
        let m = dual_m0::<f64>(4).unwrap();
        for k in 0..16 {
            for l in 0..16 {
                assert_eq!(m[(2 * k, l)], m[(2 * k + 1, l)]);
            }
        }
        let ratio = 3.0 - 2.0 * 2f64.sqrt();
        let c = (0..16)
            .flat_map(|k| (0..16).map(move |l| (k, l)))
            .map(|(k, l): (usize, usize)| m[(2 * k, l)].abs() / ratio.powi(k.abs_diff(l) as i32))
            .fold(0.0, f64::max);
        for j in 5..=8 {
            let m = dual_m0::<f64>(j).unwrap();
            let n = 1usize << j;
            for k in 0..n {
                for l in 0..n {
                    let bound = c * ratio.powi(k.abs_diff(l) as i32);
                    assert!(m[(2 * k, l)].abs() <= bound * (1.0 + 1e-10) + 1e-300, "j={j} ({k},{l})");
                }
            }
        }
    }

    #[test]
    fn transform_examples() {
        let p = primal_matrices::<f64>(3).unwrap();
        let mut e = vec![0.0; 8];
        e[2] = 1.0;
        let out = p.reconstruct(&e, &[0.0; 8]).unwrap();
        assert_eq!(out, p.m0.to_dense().column(2));
        assert!(matches!(p.reconstruct(&e, &[0.0; 7]), Err(WaveletError::LengthMismatch { .. })));
        let d = dual_matrices::<f64>(3).unwrap();
        assert!(d.decompose(&[0.0; 8]).is_err());
    }

    #[test]
    fn boundary_wavelet_single_scale_expansion() {
        // unit wavelet coefficient psi_{2,1} -> first column of M_{2,1}
        let spec = BasisSpec1D::new(2, 1).unwrap();
        let mut v = vec![0.0; 8];
        v[4] = 1.0;
        let c = multiscale_synthesis(&spec, &v).unwrap();
        let m1 = primal_matrices::<f64>(2).unwrap().m1.to_dense();
        assert_eq!(c, m1.column(0));
    }

    #[test]
    fn synthesis_identity_for_single_level() {
        let spec = BasisSpec1D::new(2, 0).unwrap();
        let v = vec![1.0, -2.0, 3.0, 0.5];
        assert_eq!(multiscale_synthesis(&spec, &v).unwrap(), v);
        assert!(multiscale_synthesis(&spec, &v[..3]).is_err());
    }

    #[test]
    fn synthesis_norm_matches_dense_cascade() {
        // oracle: explicit product of block matrices [M0 T | M1]
        let spec = BasisSpec1D::new(2, 4).unwrap();
        let mut t = DenseMatrix::<f64>::identity(4);
        for j in 2..6 {
            let p = primal_matrices::<f64>(j).unwrap();
            let left = p.m0.to_dense().matmul(&t);
            let right = p.m1.to_dense();
            t = DenseMatrix::from_fn(left.nrows(), left.ncols() + right.ncols(), |a, b| {
                if b < left.ncols() {
                    left[(a, b)]
                } else {
                    right[(a, b - left.ncols())]
                }
            });
        }
        let n = spec.dim();
        let fast = DenseMatrix::from_fn(n, n, |_, _| 0.0);
        let mut fast = fast;
        for col in 0..n {
            let mut e = vec![0.0; n];
            e[col] = 1.0;
            for (row, v) in multiscale_synthesis(&spec, &e).unwrap().into_iter().enumerate() {
                fast[(row, col)] = v;
            }
        }
        assert!(fast.max_abs_diff(&t) < 1e-14);
        assert!((fast.norm2() - t.norm2()).abs() <= 1e-10);
    }

    #[test]
    fn single_precision_biorthogonality() {
        let p = primal_matrices::<f32>(4).unwrap();
        let d = dual_m0::<f32>(4).unwrap();
        let prod = p.m0.to_dense().transpose().matmul(&d);
        assert!(prod.max_abs_diff(&DenseMatrix::identity(16)) < 1e-5);
    }

    proptest! {
        #[test]
        fn decompose_inverts_reconstruct(j in 2u32..7, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 1usize << j;
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = primal_matrices::<f64>(j).unwrap();
            let duals = dual_matrices::<f64>(j).unwrap();
            let (c2, d2) = duals.decompose(&p.reconstruct(&c, &d).unwrap()).unwrap();
            for (a, b) in c.iter().chain(&d).zip(c2.iter().chain(&d2)) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
