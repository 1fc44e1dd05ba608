//! The univariate basis on `[0, 1]`: dilated scaling functions and wavelets,
//! their index sets and the ordered multiscale family.

use std::collections::HashMap;
use std::sync::RwLock;

use crate::error::{Result, WaveletError};
use crate::scalar::Real;
use crate::spline::{
    boundary_scaling, boundary_wavelet, integrate_product, mother_scaling, mother_wavelet, PiecewisePoly,
};

/// Coarsest level for which the boundary construction is defined.
pub const MIN_LEVEL: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Scaling,
    Wavelet,
}

/// Univariate index `(level, kind, position)` with 1-based position in `1..=2^level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FunctionIndex {
    pub level: u32,
    pub kind: Kind,
    pub position: u32,
}

impl FunctionIndex {
    pub fn new(level: u32, kind: Kind, position: u32) -> Result<Self> {
        check_index(level, position)?;
        Ok(Self { level, kind, position })
    }

    pub fn scaling(level: u32, position: u32) -> Self {
        Self { level, kind: Kind::Scaling, position }
    }

    pub fn wavelet(level: u32, position: u32) -> Self {
        Self { level, kind: Kind::Wavelet, position }
    }

    /// Support as an integer interval in units of `2^-(level+1)`.
    pub fn support_half_units(&self) -> (i64, i64) {
        let n = 1i64 << self.level;
        let k = self.position as i64;
        match self.kind {
            Kind::Scaling if k == 1 => (0, 4),
            Kind::Scaling if k == n => (2 * n - 4, 2 * n),
            Kind::Scaling => (2 * (k - 2), 2 * (k + 1)),
            Kind::Wavelet if k == 1 => (0, 3),
            Kind::Wavelet if k == n => (2 * n - 3, 2 * n),
            Kind::Wavelet => (2 * k - 3, 2 * k + 1),
        }
    }

    pub fn support<T: Real>(&self) -> (T, T) {
        let (a, b) = self.support_half_units();
        let unit = T::pow2(-(self.level as i32 + 1));
        (T::from_i64(a).unwrap() * unit, T::from_i64(b).unwrap() * unit)
    }
}

fn check_index(level: u32, position: u32) -> Result<()> {
    if level < MIN_LEVEL {
        return Err(WaveletError::LevelTooCoarse { level, min: MIN_LEVEL });
    }
    let max = 1u32 << level;
    if position == 0 || position > max {
        return Err(WaveletError::IndexOutOfRange { level, position, max });
    }
    Ok(())
}

/// Diagonal rescaling applied to every basis function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    None,
    L2,
    H1Seminorm,
}

/// Multiscale basis `Phi_{j0} ∪ Psi_{j0} ∪ ... ∪ Psi_{j0+s-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisSpec1D {
    pub j0: u32,
    pub s: u32,
    /// Orthonormalise the coarsest scaling block.
    pub ortho: bool,
    pub normalization: Normalization,
}

impl BasisSpec1D {
    pub fn new(j0: u32, s: u32) -> Result<Self> {
        if j0 < MIN_LEVEL {
            return Err(WaveletError::LevelTooCoarse { level: j0, min: MIN_LEVEL });
        }
        Ok(Self { j0, s, ortho: false, normalization: Normalization::None })
    }

    pub fn with_ortho(mut self, ortho: bool) -> Self {
        self.ortho = ortho;
        self
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    /// Level of the single-scale space spanned by the family.
    pub fn finest_level(&self) -> u32 {
        self.j0 + self.s
    }

    pub fn dim(&self) -> usize {
        1usize << self.finest_level()
    }
}

/// The four generating shapes, built once and dilated on demand.
#[derive(Debug, Clone)]
pub struct Shapes<T> {
    pub phi: PiecewisePoly<T>,
    pub phi_b: PiecewisePoly<T>,
    pub psi: PiecewisePoly<T>,
    pub psi_b: PiecewisePoly<T>,
}

impl<T: Real> Default for Shapes<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Shapes<T> {
    pub fn new() -> Self {
        Self { phi: mother_scaling(), phi_b: boundary_scaling(), psi: mother_wavelet(), psi_b: boundary_wavelet() }
    }

    pub fn function(&self, idx: FunctionIndex) -> Result<PiecewisePoly<T>> {
        check_index(idx.level, idx.position)?;
        let j = idx.level as i32;
        let n = 1u32 << idx.level;
        let dil = T::pow2(j);
        let amp = dil.sqrt();
        let k = idx.position;
        let (interior, boundary) = match idx.kind {
            Kind::Scaling => (&self.phi, &self.phi_b),
            Kind::Wavelet => (&self.psi, &self.psi_b),
        };
        let f = if k == 1 {
            boundary.dilate(dil, T::zero()).scaled(amp)
        } else if k == n {
            let sign = match idx.kind {
                Kind::Scaling => T::one(),
                Kind::Wavelet => -T::one(),
            };
            boundary.dilate(-dil, dil).scaled(sign * amp)
        } else {
            let shift = T::from_i64(2 - k as i64).unwrap();
            interior.dilate(dil, shift).scaled(amp)
        };
        Ok(f)
    }
}

/// `phi_{j,k}` restricted to `[0, 1]`.
pub fn scaling_function<T: Real>(level: u32, position: u32) -> Result<PiecewisePoly<T>> {
    Shapes::new().function(FunctionIndex::new(level, Kind::Scaling, position)?)
}

/// `psi_{j,k}` restricted to `[0, 1]`; the right boundary wavelet carries a minus sign.
pub fn wavelet_function<T: Real>(level: u32, position: u32) -> Result<PiecewisePoly<T>> {
    Shapes::new().function(FunctionIndex::new(level, Kind::Wavelet, position)?)
}

/// Ordered multiscale family: coarsest scaling block, then wavelet levels ascending.
pub fn enumerate_basis(spec: &BasisSpec1D) -> Vec<FunctionIndex> {
    let mut out = Vec::with_capacity(spec.dim());
    out.extend((1..=1u32 << spec.j0).map(|k| FunctionIndex::scaling(spec.j0, k)));
    for j in spec.j0..spec.finest_level() {
        out.extend((1..=1u32 << j).map(|k| FunctionIndex::wavelet(j, k)));
    }
    out
}

/// Squared L2 norm and squared H1 seminorm of one basis function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormPair<T> {
    pub l2_sq: T,
    pub h1_sq: T,
}

pub fn norms<T: Real>(idx: FunctionIndex) -> Result<NormPair<T>> {
    norms_with(&Shapes::new(), idx)
}

fn norms_with<T: Real>(shapes: &Shapes<T>, idx: FunctionIndex) -> Result<NormPair<T>> {
    let f = shapes.function(idx)?;
    let df = f.derivative();
    Ok(NormPair { l2_sq: integrate_product(&f, &f), h1_sq: integrate_product(&df, &df) })
}

/// Thread-safe write-once cache of [`NormPair`]s.
#[derive(Debug)]
pub struct NormCache<T> {
    shapes: Shapes<T>,
    map: RwLock<HashMap<FunctionIndex, NormPair<T>>>,
}

impl<T: Real> Default for NormCache<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> NormCache<T> {
    pub fn new() -> Self {
        Self { shapes: Shapes::new(), map: RwLock::new(HashMap::new()) }
    }

    pub fn get(&self, idx: FunctionIndex) -> Result<NormPair<T>> {
        if let Some(v) = self.map.read().unwrap().get(&idx) {
            return Ok(*v);
        }
        let v = norms_with(&self.shapes, idx)?;
        self.map.write().unwrap().entry(idx).or_insert(v);
        Ok(v)
    }
}

/// Per-level norm table exploiting translation invariance: values for the
/// left boundary, interior and right boundary function of one kind.
#[derive(Debug, Clone, Copy)]
pub struct LevelNorms<T> {
    pub left: NormPair<T>,
    pub interior: NormPair<T>,
    pub right: NormPair<T>,
}

impl<T: Real> LevelNorms<T> {
    pub fn compute(shapes: &Shapes<T>, level: u32, kind: Kind) -> Result<Self> {
        let n = 1u32 << level;
        let at = |k| norms_with(shapes, FunctionIndex { level, kind, position: k });
        Ok(Self { left: at(1)?, interior: at(2)?, right: at(n)? })
    }

    pub fn get(&self, level: u32, position: u32) -> NormPair<T> {
        if position == 1 {
            self.left
        } else if position == 1u32 << level {
            self.right
        } else {
            self.interior
        }
    }
}

/// Samples `(x, phi_{j,k}(x), psi_{j,k}(x))` on a uniform grid of `samples` points.
pub fn sample_pair<T: Real>(level: u32, position: u32, samples: usize) -> Result<Vec<(T, T, T)>> {
    let phi = scaling_function::<T>(level, position)?;
    let psi = wavelet_function::<T>(level, position)?;
    let denom = T::from_usize_lossy(samples.max(2) - 1);
    Ok((0..samples)
        .map(|i| {
            let x = T::from_usize_lossy(i) / denom;
            (x, phi.eval(x), psi.eval(x))
        })
        .collect())
}
