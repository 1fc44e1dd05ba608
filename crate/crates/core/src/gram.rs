//! Exact single-scale mass and stiffness matrices, the wavelet Gram matrix
//! and the coarsest-level orthogonalisation.

use std::collections::HashMap;

use crate::basis::{BasisSpec1D, FunctionIndex, Kind, Shapes};
use crate::dense::DenseMatrix;
use crate::error::{Result, WaveletError};
use crate::scalar::Real;
use crate::spline::integrate_product;

/// Symmetric band matrix stored by diagonals: `diags[o][i] = A[i][i + o]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix<T> {
    n: usize,
    diags: Vec<Vec<T>>,
}

impl<T: Real> BandMatrix<T> {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self { n, diags: (0..=bandwidth).map(|o| vec![T::zero(); n.saturating_sub(o)]).collect() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.diags.len() - 1
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        self.diags.get(hi - lo).map_or(T::zero(), |d| d[lo])
    }

    fn set(&mut self, i: usize, j: usize, v: T) {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        self.diags[hi - lo][lo] = v;
    }

    pub fn diagonal(&self) -> &[T] {
        &self.diags[0]
    }

    /// `out = A x` on contiguous slices.
    pub fn mul_into(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.n);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.diags[0][i] * x[i];
        }
        for (off, d) in self.diags.iter().enumerate().skip(1) {
            for (i, &v) in d.iter().enumerate() {
                out[i] += v * x[i + off];
                out[i + off] += v * x[i];
            }
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n];
        self.mul_into(x, &mut out);
        out
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        DenseMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn is_strictly_diagonally_dominant(&self) -> bool {
        (0..self.n).all(|i| {
            let off: T = (0..self.n).filter(|&j| j != i).map(|j| self.get(i, j).abs()).sum();
            self.get(i, i).abs() > off
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Placement {
    Left,
    Interior,
    Right,
}

fn placement(position: u32, n: u32) -> Placement {
    if position == 1 {
        Placement::Left
    } else if position == n {
        Placement::Right
    } else {
        Placement::Interior
    }
}

/// Assembles `<f_k, f_l>` (or of derivatives) for one kind at one level,
/// integrating each distinct (placement, placement, offset) shape pair once.
fn assemble_band<T: Real>(level: u32, kind: Kind, derivative: bool, bandwidth: usize) -> BandMatrix<T> {
    let shapes = Shapes::<T>::new();
    let n = 1u32 << level;
    let mut out = BandMatrix::zeros(n as usize, bandwidth);
    let mut cache: HashMap<(Placement, Placement, u32), T> = HashMap::new();
    let make = |k: u32| {
        let f = shapes.function(FunctionIndex { level, kind, position: k }).expect("valid index");
        if derivative {
            f.derivative()
        } else {
            f
        }
    };
    for k in 1..=n {
        for off in 0..=bandwidth as u32 {
            let l = k + off;
            if l > n {
                break;
            }
            let key = (placement(k, n), placement(l, n), off);
            let v = *cache.entry(key).or_insert_with(|| integrate_product(&make(k), &make(l)));
            out.set(k as usize - 1, l as usize - 1, v);
        }
    }
    out
}

/// `<phi_{j,k}, phi_{j,l}>`
pub fn mass_matrix<T: Real>(level: u32) -> BandMatrix<T> {
    assemble_band(level, Kind::Scaling, false, 2)
}

/// `<phi'_{j,k}, phi'_{j,l}>`
pub fn stiffness_matrix<T: Real>(level: u32) -> BandMatrix<T> {
    assemble_band(level, Kind::Scaling, true, 2)
}

/// `U_j = <Psi_j, Psi_j>` (tridiagonal).
pub fn wavelet_gram<T: Real>(level: u32) -> BandMatrix<T> {
    assemble_band(level, Kind::Wavelet, false, 1)
}

/// Transform `T` with `T^T G T = I` for the Gram matrix `G` of `Phi_{j0}`,
/// taken as the inverse transpose of the Cholesky factor of `G`.
pub fn orthogonalize_coarsest<T: Real>(spec: &BasisSpec1D) -> Result<DenseMatrix<T>> {
    if !spec.ortho {
        return Err(WaveletError::InvalidParameter("orthogonalisation requested without the ortho flag".into()));
    }
    let g = mass_matrix::<T>(spec.j0).to_dense();
    Ok(g.cholesky()?.lower_triangular_inverse().transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn mass_and_stiffness_interior_values() {
        for j in 2..8 {
            let m = mass_matrix::<f64>(j);
            let s = stiffness_matrix::<f64>(j);
            assert!(rel(m.get(1, 1), 11.0 / 20.0) < 1e-13);
            assert!(rel(s.get(1, 1), 4f64.powi(j as i32)) < 1e-13);
            assert_eq!(m.get(0, 3), 0.0);
        }
    }

    #[test]
    fn band_matches_pairwise_integration() {
        let shapes = Shapes::<f64>::new();
        for j in 2..=5 {
            let n = 1u32 << j;
            let m = mass_matrix::<f64>(j);
            let s = stiffness_matrix::<f64>(j);
            for k in 1..=n {
                let fk = shapes.function(FunctionIndex::scaling(j, k)).unwrap();
                for l in 1..=n {
                    let fl = shapes.function(FunctionIndex::scaling(j, l)).unwrap();
                    let mm = integrate_product(&fk, &fl);
                    let ss = integrate_product(&fk.derivative(), &fl.derivative());
                    let (a, b) = (k as usize - 1, l as usize - 1);
                    assert!((m.get(a, b) - mm).abs() <= 1e-13 * mm.abs().max(1.0));
                    assert!((s.get(a, b) - ss).abs() <= 1e-13 * ss.abs().max(1.0));
                    if k.abs_diff(l) > 2 {
                        assert_eq!(m.get(a, b), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn wavelet_gram_exact_entries() {
        for j in 2..=9 {
            let u = wavelet_gram::<f64>(j);
            let n = u.dim();
            assert!(rel(u.get(0, 0), 27.0 / 320.0) < 1e-13);
            assert!(rel(u.get(n - 1, n - 1), 27.0 / 320.0) < 1e-13);
            // psi_b = (-phi_b(2x) + phi(2x))/2 and psi overlap with opposite signs
            assert!(rel(u.get(1, 0), -47.0 / 1920.0) < 1e-13);
            assert!(rel(u.get(n - 2, n - 1), -47.0 / 1920.0) < 1e-13);
            assert!(rel(u.get(1, 1), 1.0 / 12.0) < 1e-13);
            if n > 4 {
                assert!(rel(u.get(1, 2), -1.0 / 40.0) < 1e-13);
            }
            assert!(u.is_strictly_diagonally_dominant());
        }
    }

    #[test]
    fn wavelet_gram_conditioning_plateaus() {
        let conds: Vec<f64> = (2..=9)
            .map(|j| {
                let d = wavelet_gram::<f64>(j).to_dense();
                let m = nalgebra::DMatrix::from_fn(d.nrows(), d.ncols(), |a, b| d[(a, b)]);
                let ev = m.symmetric_eigenvalues();
                ev.max() / ev.min()
            })
            .collect();
        for w in conds.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        // Gershgorin discs lie in [1/12 - 1/20, 1/12 + 1/20]
        assert!(conds.iter().all(|&c| c <= (1.0 / 12.0 + 1.0 / 20.0) / (1.0 / 12.0 - 1.0 / 20.0)));
    }

    #[test]
    fn orthogonalization_properties() {
        let spec = BasisSpec1D::new(2, 0).unwrap().with_ortho(true);
        let t = orthogonalize_coarsest::<f64>(&spec).unwrap();
        assert_eq!((t.nrows(), t.ncols()), (4, 4));
        let g = mass_matrix::<f64>(2).to_dense();
        let tgt = t.transpose().matmul(&g).matmul(&t);
        assert!(tgt.max_abs_diff(&DenseMatrix::identity(4)) < 1e-12);
        let s = stiffness_matrix::<f64>(2).to_dense();
        let ts = t.transpose().matmul(&s).matmul(&t);
        assert!((0..4).all(|i| ts[(i, i)] > 0.0));
        assert!(orthogonalize_coarsest::<f64>(&BasisSpec1D::new(2, 0).unwrap()).is_err());
    }
}
