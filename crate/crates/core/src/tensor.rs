//! Isotropic tensor-product wavelet basis on `(0,1)^d` and the matrix-free
//! Helmholtz operator `eps <grad Psi, grad Psi> + a <Psi, Psi>` in multiscale
//! coordinates.
//!
//! Multiscale vectors are ordered as: the scaling block `Phi_{j0}^d`, then for
//! each level `j` the blocks `e = 1 .. 2^d - 1` (bit of dimension 0 most
//! significant; a set bit selects the wavelet factor), each in row-major
//! order of the 1-based positions with dimension 0 slowest.

use rayon::prelude::*;

use crate::basis::{BasisSpec1D, FunctionIndex, Kind, LevelNorms, NormPair, Normalization, Shapes};
use crate::dense::DenseMatrix;
use crate::error::{Result, WaveletError};
use crate::gram::{mass_matrix, orthogonalize_coarsest, stiffness_matrix, BandMatrix};
use crate::refinement::primal_matrices;
use crate::scalar::Real;

/// Coefficients with respect to the tensor multiscale basis.
pub type MultiscaleVector<T> = Vec<T>;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// One tensor basis function: a product over dimensions of `phi_{level,k}`
/// or `psi_{level,k}` factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorIndex {
    pub level: u32,
    /// Bit `l` set means the factor in dimension `l` is a wavelet.
    pub wavelet_mask: u8,
    /// 1-based positions; entries beyond `dim` are zero.
    pub positions: [u32; MAX_DIM],
    pub dim: u8,
}

impl TensorIndex {
    pub fn new(level: u32, wavelet_mask: u8, positions: &[u32]) -> Self {
        let mut p = [0; MAX_DIM];
        p[..positions.len()].copy_from_slice(positions);
        Self { level, wavelet_mask, positions: p, dim: positions.len() as u8 }
    }

    pub fn factor(&self, l: usize) -> FunctionIndex {
        let kind = if self.wavelet_mask >> l & 1 == 1 { Kind::Wavelet } else { Kind::Scaling };
        FunctionIndex { level: self.level, kind, position: self.positions[l] }
    }

    pub fn factors(&self) -> impl Iterator<Item = FunctionIndex> + '_ {
        (0..self.dim as usize).map(|l| self.factor(l))
    }

    pub fn is_scaling(&self) -> bool {
        self.wavelet_mask == 0
    }
}

/// Enumeration of the tensor multiscale basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorLayout {
    pub dim: usize,
    pub j0: u32,
    pub finest: u32,
}

impl TensorLayout {
    pub fn new(dim: usize, spec: &BasisSpec1D) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(WaveletError::UnsupportedDimension(dim));
        }
        Ok(Self { dim, j0: spec.j0, finest: spec.finest_level() })
    }

    pub fn len(&self) -> usize {
        1usize << (self.finest as usize * self.dim)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of coefficients up to (excluding) wavelet level `j`.
    pub fn offset(&self, level: u32) -> usize {
        1usize << (level as usize * self.dim)
    }

    fn mask_from_block(&self, e: usize) -> u8 {
        (0..self.dim).fold(0u8, |m, l| m | (((e >> (self.dim - 1 - l)) & 1) as u8) << l)
    }

    fn block_from_mask(&self, mask: u8) -> usize {
        (0..self.dim).fold(0usize, |e, l| e | (((mask >> l) & 1) as usize) << (self.dim - 1 - l))
    }

    pub fn index(&self, flat: usize) -> TensorIndex {
        let d = self.dim;
        let coarse = self.offset(self.j0);
        let (level, mask, kflat) = if flat < coarse {
            (self.j0, 0u8, flat)
        } else {
            let level = (usize::BITS - 1 - flat.leading_zeros()) / d as u32;
            let block = self.offset(level);
            let rem = flat - block;
            (level, self.mask_from_block(rem / block + 1), rem % block)
        };
        let h = 1usize << level;
        let mut positions = [0u32; MAX_DIM];
        let mut r = kflat;
        for l in (0..d).rev() {
            positions[l] = (r % h) as u32 + 1;
            r /= h;
        }
        TensorIndex { level, wavelet_mask: mask, positions, dim: d as u8 }
    }

    pub fn position(&self, idx: &TensorIndex) -> usize {
        let h = 1usize << idx.level;
        let kflat = (0..self.dim).fold(0usize, |acc, l| acc * h + (idx.positions[l] as usize - 1));
        if idx.wavelet_mask == 0 {
            kflat
        } else {
            let block = self.offset(idx.level);
            block + (self.block_from_mask(idx.wavelet_mask) - 1) * block + kflat
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = TensorIndex> + '_ {
        (0..self.len()).map(|i| self.index(i))
    }
}

type Rows<T> = Vec<Vec<(usize, T)>>;

fn band_rows<T: Real>(b: &BandMatrix<T>) -> Rows<T> {
    let n = b.dim();
    let w = b.bandwidth();
    (0..n).map(|i| (i.saturating_sub(w)..(i + w + 1).min(n)).map(|k| (k, b.get(i, k))).collect()).collect()
}

fn dense_rows<T: Real>(m: &DenseMatrix<T>) -> Rows<T> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().enumerate().filter(|&(_, v)| v != T::zero()).collect()).collect()
}

/// `out = (I ⊗ .. ⊗ R ⊗ .. ⊗ I) x` with `R` acting on `axis` of an `n^d` cube.
fn apply_along<T: Real>(rows: &[Vec<(usize, T)>], x: &[T], out: &mut [T], d: usize, axis: usize) {
    let n = rows.len();
    let inner = n.pow((d - 1 - axis) as u32);
    let block = n * inner;
    let line = |i: usize, src: &[T], dst: &mut [T]| {
        dst.iter_mut().for_each(|v| *v = T::zero());
        for &(k, c) in &rows[i] {
            for (o, &s) in dst.iter_mut().zip(&src[k * inner..(k + 1) * inner]) {
                *o += c * s;
            }
        }
    };
    if inner >= 64 {
        out.par_chunks_mut(inner).enumerate().for_each(|(idx, dst)| {
            let (o, i) = (idx / n, idx % n);
            line(i, &x[o * block..(o + 1) * block], dst);
        });
    } else {
        out.par_chunks_mut(block).zip(x.par_chunks(block)).for_each(|(dst, src)| {
            for i in 0..n {
                line(i, src, &mut dst[i * inner..(i + 1) * inner]);
            }
        });
    }
}

/// Applies `rows` along every axis in turn.
fn apply_all_axes<T: Real>(rows: &[Vec<(usize, T)>], x: &mut Vec<T>, scratch: &mut Vec<T>, d: usize) {
    scratch.resize(x.len(), T::zero());
    for axis in 0..d {
        apply_along(rows, x, scratch, d, axis);
        std::mem::swap(x, scratch);
    }
}

#[derive(Debug, Clone)]
struct CascadeLevel<T> {
    /// Rows of `[M_{j,0} M_{j,1}]`.
    forward: Rows<T>,
    /// Rows of its transpose.
    backward: Rows<T>,
}

/// d-fold tensor of the 1D multiscale synthesis `T_s`.
#[derive(Debug, Clone)]
pub struct TensorSynthesis<T> {
    layout: TensorLayout,
    levels: Vec<CascadeLevel<T>>,
    /// Orthogonalisation of the scaling block when there are no wavelet levels.
    coarse: Option<(Rows<T>, Rows<T>)>,
}

impl<T: Real> TensorSynthesis<T> {
    pub fn new(dim: usize, spec: &BasisSpec1D) -> Result<Self> {
        let layout = TensorLayout::new(dim, spec)?;
        let coarse_transform = if spec.ortho { Some(orthogonalize_coarsest::<T>(spec)?) } else { None };
        let mut levels = Vec::new();
        for j in spec.j0..spec.finest_level() {
            let pair = primal_matrices::<T>(j)?;
            let n = 1usize << j;
            let mut r = DenseMatrix::zeros(2 * n, 2 * n);
            for (shift, m) in [(0, &pair.m0), (n, &pair.m1)] {
                for c in 0..n {
                    for &(row, v) in m.column(c) {
                        r[(row, shift + c)] = v;
                    }
                }
            }
            // every level-j0 scaling factor is the orthogonalised one: R diag(T, I)
            if let (Some(t), true) = (&coarse_transform, j == spec.j0) {
                let mut block = DenseMatrix::identity(2 * n);
                for a in 0..n {
                    for b in 0..n {
                        block[(a, b)] = t[(a, b)];
                    }
                }
                r = r.matmul(&block);
            }
            levels.push(CascadeLevel { forward: dense_rows(&r), backward: dense_rows(&r.transpose()) });
        }
        let coarse = match (&coarse_transform, spec.s) {
            (Some(t), 0) => Some((dense_rows(t), dense_rows(&t.transpose()))),
            _ => None,
        };
        Ok(Self { layout, levels, coarse })
    }

    pub fn layout(&self) -> &TensorLayout {
        &self.layout
    }

    /// Visits every cell of the `(2h)^d` Mallat array at level `j = log2 h`,
    /// pairing it with either the coarse block (`None`) or a slot of `v`.
    fn for_each_slot(&self, level: u32, mut f: impl FnMut(usize, Option<usize>, usize)) {
        let d = self.layout.dim;
        let h = 1usize << level;
        let m = 2 * h;
        let block = self.layout.offset(level);
        let mut digits = [0usize; MAX_DIM];
        for p in 0..m.pow(d as u32) {
            let mut r = p;
            for l in (0..d).rev() {
                digits[l] = r % m;
                r /= m;
            }
            let (mut e, mut kflat) = (0usize, 0usize);
            for &g in &digits[..d] {
                e = 2 * e + usize::from(g >= h);
                kflat = kflat * h + g % h;
            }
            if e == 0 {
                f(p, None, kflat);
            } else {
                f(p, Some(block + (e - 1) * block + kflat), kflat);
            }
        }
    }

    /// Multiscale coefficients to single-scale coefficients at the finest level.
    pub fn synthesize(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_len(v.len())?;
        let d = self.layout.dim;
        let mut c = v[..self.layout.offset(self.layout.j0)].to_vec();
        let mut scratch = Vec::new();
        if let Some((rows, _)) = &self.coarse {
            apply_all_axes(rows, &mut c, &mut scratch, d);
        }
        for (i, lvl) in self.levels.iter().enumerate() {
            let j = self.layout.j0 + i as u32;
            let mut a = vec![T::zero(); (2usize << j).pow(d as u32)];
            self.for_each_slot(j, |p, slot, kflat| {
                a[p] = match slot {
                    None => c[kflat],
                    Some(q) => v[q],
                }
            });
            apply_all_axes(&lvl.forward, &mut a, &mut scratch, d);
            c = a;
        }
        Ok(c)
    }

    /// Transpose of [`Self::synthesize`]: single-scale functionals to
    /// multiscale functionals.
    pub fn synthesize_transpose(&self, y: &[T]) -> Result<Vec<T>> {
        self.check_len(y.len())?;
        let d = self.layout.dim;
        let mut out = vec![T::zero(); self.layout.len()];
        let mut c = y.to_vec();
        let mut scratch = Vec::new();
        for (i, lvl) in self.levels.iter().enumerate().rev() {
            let j = self.layout.j0 + i as u32;
            apply_all_axes(&lvl.backward, &mut c, &mut scratch, d);
            let mut coarse = vec![T::zero(); self.layout.offset(j)];
            self.for_each_slot(j, |p, slot, kflat| match slot {
                None => coarse[kflat] = c[p],
                Some(q) => out[q] = c[p],
            });
            c = coarse;
        }
        if let Some((_, rows)) = &self.coarse {
            apply_all_axes(rows, &mut c, &mut scratch, d);
        }
        out[..c.len()].copy_from_slice(&c);
        Ok(out)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.layout.len() {
            return Err(WaveletError::LengthMismatch { expected: self.layout.len(), actual: len });
        }
        Ok(())
    }
}

/// Squared L2 norms and H1 seminorms of every 1D factor that occurs in the
/// tensor basis, by level.
#[derive(Debug, Clone)]
pub struct FactorNorms<T> {
    j0: u32,
    coarse: Option<Vec<NormPair<T>>>,
    scaling: Vec<LevelNorms<T>>,
    wavelet: Vec<LevelNorms<T>>,
}

impl<T: Real> FactorNorms<T> {
    pub fn new(spec: &BasisSpec1D) -> Result<Self> {
        let shapes = Shapes::<T>::new();
        let levels = spec.j0..spec.finest_level().max(spec.j0 + 1);
        let scaling =
            levels.clone().map(|j| LevelNorms::compute(&shapes, j, Kind::Scaling)).collect::<Result<Vec<_>>>()?;
        let wavelet = levels.map(|j| LevelNorms::compute(&shapes, j, Kind::Wavelet)).collect::<Result<Vec<_>>>()?;
        let coarse = if spec.ortho {
            let t = orthogonalize_coarsest::<T>(spec)?;
            let g = mass_matrix::<T>(spec.j0).to_dense();
            let s = stiffness_matrix::<T>(spec.j0).to_dense();
            let tg = t.transpose().matmul(&g).matmul(&t);
            let ts = t.transpose().matmul(&s).matmul(&t);
            Some((0..t.ncols()).map(|i| NormPair { l2_sq: tg[(i, i)], h1_sq: ts[(i, i)] }).collect())
        } else {
            None
        };
        Ok(Self { j0: spec.j0, coarse, scaling, wavelet })
    }

    pub fn get(&self, f: FunctionIndex) -> NormPair<T> {
        let i = (f.level - self.j0) as usize;
        match f.kind {
            Kind::Scaling if f.level == self.j0 && self.coarse.is_some() => {
                self.coarse.as_ref().unwrap()[f.position as usize - 1]
            }
            Kind::Scaling => self.scaling[i].get(f.level, f.position),
            Kind::Wavelet => self.wavelet[i].get(f.level, f.position),
        }
    }

    /// `(prod m_l, sum_i s_i prod_{l != i} m_l)` for a tensor index.
    pub fn tensor(&self, idx: &TensorIndex) -> NormPair<T> {
        let pairs: Vec<NormPair<T>> = idx.factors().map(|f| self.get(f)).collect();
        let l2_sq = pairs.iter().fold(T::one(), |p, q| p * q.l2_sq);
        let h1_sq = (0..pairs.len())
            .map(|i| pairs.iter().enumerate().fold(T::one(), |p, (l, q)| p * if l == i { q.h1_sq } else { q.l2_sq }))
            .sum();
        NormPair { l2_sq, h1_sq }
    }
}

/// Matrix-free `A_s = eps <grad Psi_s, grad Psi_s> + a <Psi_s, Psi_s>` for the
/// tensor basis, applied as `W T_s^T A_single T_s W` with `W` the basis
/// normalisation.
#[derive(Debug, Clone)]
pub struct HelmholtzOperator<T> {
    pub eps: T,
    pub a: T,
    pub spec: BasisSpec1D,
    synthesis: TensorSynthesis<T>,
    mass: Rows<T>,
    stiffness: Rows<T>,
    norms: FactorNorms<T>,
    weights: Option<Vec<T>>,
    diagonal: Vec<T>,
    inv_sqrt_diagonal: Vec<T>,
}

impl<T: Real> HelmholtzOperator<T> {
    pub fn new(dim: usize, spec: BasisSpec1D, eps: T, a: T) -> Result<Self> {
        if !(eps >= T::zero() && a >= T::zero()) || eps + a <= T::zero() {
            return Err(WaveletError::InvalidParameter(format!(
                "need eps >= 0, a >= 0 and eps + a > 0, got eps = {eps}, a = {a}"
            )));
        }
        let synthesis = TensorSynthesis::new(dim, &spec)?;
        let finest = spec.finest_level();
        let norms = FactorNorms::new(&spec)?;
        let layout = *synthesis.layout();
        let tensor_norms: Vec<NormPair<T>> =
            (0..layout.len()).into_par_iter().map(|i| norms.tensor(&layout.index(i))).collect();
        let weights = match spec.normalization {
            Normalization::None => None,
            Normalization::L2 => Some(tensor_norms.iter().map(|p| p.l2_sq.sqrt().recip()).collect::<Vec<_>>()),
            Normalization::H1Seminorm => Some(tensor_norms.iter().map(|p| p.h1_sq.sqrt().recip()).collect()),
        };
        let mut diagonal: Vec<T> = tensor_norms.iter().map(|p| eps * p.h1_sq + a * p.l2_sq).collect();
        if let Some(w) = &weights {
            diagonal.iter_mut().zip(w).for_each(|(d, &w)| *d *= w * w);
        }
        if let Some(i) = diagonal.iter().position(|&d| d.is_nan() || d <= T::zero()) {
            return Err(WaveletError::ZeroDiagonal(i));
        }
        let inv_sqrt_diagonal = diagonal.iter().map(|d| d.sqrt().recip()).collect();
        Ok(Self {
            eps,
            a,
            spec,
            synthesis,
            mass: band_rows(&mass_matrix::<T>(finest)),
            stiffness: band_rows(&stiffness_matrix::<T>(finest)),
            norms,
            weights,
            diagonal,
            inv_sqrt_diagonal,
        })
    }

    pub fn dim(&self) -> usize {
        self.synthesis.layout().dim
    }

    /// Number of unknowns `N`.
    pub fn len(&self) -> usize {
        self.diagonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagonal.is_empty()
    }

    pub fn layout(&self) -> &TensorLayout {
        self.synthesis.layout()
    }

    pub fn synthesis(&self) -> &TensorSynthesis<T> {
        &self.synthesis
    }

    pub fn factor_norms(&self) -> &FactorNorms<T> {
        &self.norms
    }

    /// Normalisation weight of each basis function (all ones without normalisation).
    pub fn weight(&self, i: usize) -> T {
        self.weights.as_ref().map_or(T::one(), |w| w[i])
    }

    pub fn diagonal(&self) -> &[T] {
        &self.diagonal
    }

    pub fn inv_sqrt_diagonal(&self) -> &[T] {
        &self.inv_sqrt_diagonal
    }

    /// `eps sum_i (M ⊗ .. ⊗ S_i ⊗ .. ⊗ M) u + a (M ⊗ .. ⊗ M) u` at the finest level.
    pub fn apply_single_scale(&self, u: &[T]) -> Vec<T> {
        let d = self.dim();
        let mut mass_part = vec![T::zero(); u.len()];
        let mut full = vec![T::zero(); u.len()];
        let mut tmp = vec![T::zero(); u.len()];
        apply_along(&self.mass, u, &mut mass_part, d, d - 1);
        apply_along(&self.stiffness, u, &mut full, d, d - 1);
        full.iter_mut().zip(&mass_part).for_each(|(f, &m)| *f = self.eps * *f + self.a * m);
        for axis in (0..d - 1).rev() {
            // full <- eps S_axis mass + M_axis full; mass <- M_axis mass
            apply_along(&self.mass, &full, &mut tmp, d, axis);
            apply_along(&self.stiffness, &mass_part, &mut full, d, axis);
            full.iter_mut().zip(&tmp).for_each(|(f, &t)| *f = self.eps * *f + t);
            apply_along(&self.mass, &mass_part, &mut tmp, d, axis);
            std::mem::swap(&mut mass_part, &mut tmp);
        }
        full
    }

    pub fn apply(&self, v: &[T]) -> Result<MultiscaleVector<T>> {
        let x = self.weighted(v);
        let u = self.synthesis.synthesize(&x)?;
        let y = self.apply_single_scale(&u);
        let mut z = self.synthesis.synthesize_transpose(&y)?;
        if let Some(w) = &self.weights {
            z.iter_mut().zip(w).for_each(|(z, &w)| *z *= w);
        }
        Ok(z)
    }

    /// `D^{-1/2} A D^{-1/2} v`
    pub fn apply_preconditioned(&self, v: &[T]) -> Result<MultiscaleVector<T>> {
        if v.len() != self.len() {
            return Err(WaveletError::LengthMismatch { expected: self.len(), actual: v.len() });
        }
        let x: Vec<T> = v.iter().zip(&self.inv_sqrt_diagonal).map(|(&v, &s)| v * s).collect();
        let mut y = self.apply(&x)?;
        y.iter_mut().zip(&self.inv_sqrt_diagonal).for_each(|(y, &s)| *y *= s);
        Ok(y)
    }

    fn weighted(&self, v: &[T]) -> Vec<T> {
        match &self.weights {
            None => v.to_vec(),
            Some(w) => v.iter().zip(w).map(|(&v, &w)| v * w).collect(),
        }
    }

    /// Single-scale coefficients of `u = sum_i v_i D_ii^{-1/2} psi_i`
    /// for a solution `v` of the preconditioned system.
    pub fn preconditioned_to_single_scale(&self, v: &[T]) -> Result<Vec<T>> {
        let x: Vec<T> = v.iter().zip(&self.inv_sqrt_diagonal).map(|(&v, &s)| v * s).collect();
        self.synthesis.synthesize(&self.weighted(&x))
    }

    /// Preconditioned right-hand side `D^{-1/2} <f, Psi>` from the
    /// single-scale functionals `<f, phi_{J,k}>`.
    pub fn preconditioned_load(&self, single_scale: &[T]) -> Result<MultiscaleVector<T>> {
        let z = self.synthesis.synthesize_transpose(single_scale)?;
        let mut f = self.weighted(&z);
        f.iter_mut().zip(&self.inv_sqrt_diagonal).for_each(|(f, &s)| *f *= s);
        Ok(f)
    }
}
