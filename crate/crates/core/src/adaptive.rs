//! A simple adaptive wavelet-Galerkin solver: residuals on a neighbourhood of
//! the active set, bulk chasing, Galerkin solves by CG and periodic
//! coarsening.

use std::sync::RwLock;

use rayon::prelude::*;
use rustc_hash::FxHashMap as HashMap;

use crate::basis::{BasisSpec1D, FunctionIndex, Kind, Shapes, MIN_LEVEL};
use crate::error::{Result, WaveletError};
use crate::problems::{single_scale_error_norms, ErrorNorms, ManufacturedProblem, SeparableFunction, LOAD_NODES};
use crate::scalar::Real;
use crate::solver::{cg, LinearOperator};
use crate::spline::{integrate_product, QuadratureRule};
use crate::tensor::{FactorNorms, TensorIndex, TensorLayout, TensorSynthesis, MAX_DIM};

/// Insertion-ordered set of tensor indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActiveSet {
    order: Vec<TensorIndex>,
    position: HashMap<TensorIndex, usize>,
}

impl ActiveSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Returns `false` if the index was already present.
    pub fn insert(&mut self, idx: TensorIndex) -> bool {
        if self.position.contains_key(&idx) {
            return false;
        }
        self.position.insert(idx, self.order.len());
        self.order.push(idx);
        true
    }

    pub fn contains(&self, idx: &TensorIndex) -> bool {
        self.position.contains_key(idx)
    }

    pub fn position(&self, idx: &TensorIndex) -> Option<usize> {
        self.position.get(idx).copied()
    }

    pub fn indices(&self) -> &[TensorIndex] {
        &self.order
    }

    pub fn iter(&self) -> impl Iterator<Item = &TensorIndex> {
        self.order.iter()
    }

    pub fn max_level(&self) -> Option<u32> {
        self.order.iter().map(|i| i.level).max()
    }

    fn retain(&mut self, keep: &[bool]) -> Vec<usize> {
        let kept: Vec<usize> = (0..self.order.len()).filter(|&i| keep[i]).collect();
        let order: Vec<TensorIndex> = kept.iter().map(|&i| self.order[i]).collect();
        *self = Self::new();
        for idx in order {
            self.insert(idx);
        }
        kept
    }
}

impl FromIterator<TensorIndex> for ActiveSet {
    fn from_iter<I: IntoIterator<Item = TensorIndex>>(iter: I) -> Self {
        let mut s = Self::new();
        for i in iter {
            s.insert(i);
        }
        s
    }
}

/// Exact 1D integrals `(<f, g>, <f', g'>)` of basis function pairs.
#[derive(Debug)]
pub struct EntryCache<T> {
    shapes: Shapes<T>,
    pairs: RwLock<HashMap<(FunctionIndex, FunctionIndex), (T, T)>>,
}

impl<T: Real> Default for EntryCache<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> EntryCache<T> {
    pub fn new() -> Self {
        Self { shapes: Shapes::new(), pairs: RwLock::new(HashMap::default()) }
    }

    pub fn pair(&self, f: FunctionIndex, g: FunctionIndex) -> (T, T) {
        let key = if f <= g { (f, g) } else { (g, f) };
        if let Some(&v) = self.pairs.read().unwrap().get(&key) {
            return v;
        }
        let p = self.shapes.function(key.0).expect("valid index");
        let q = self.shapes.function(key.1).expect("valid index");
        let v = (integrate_product(&p, &q), integrate_product(&p.derivative(), &q.derivative()));
        *self.pairs.write().unwrap().entry(key).or_insert(v)
    }

    pub fn len(&self) -> usize {
        self.pairs.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig<T> {
    /// Bulk parameter in `(0, 1)`.
    pub theta: T,
    /// Stop once the residual on the extended set is below this.
    pub target: T,
    /// Highest wavelet level.
    pub max_level: u32,
    pub max_cycles: usize,
    pub coarsen_every: usize,
    /// Coefficients below this fraction of the mean magnitude are dropped.
    pub coarsen_fraction: T,
    /// Stop growing beyond this many active indices.
    pub max_active: usize,
}

impl<T: Real> Default for AdaptiveConfig<T> {
    fn default() -> Self {
        Self {
            theta: T::lit(0.5),
            target: T::lit(1e-6),
            max_level: 10,
            max_cycles: 200,
            coarsen_every: 5,
            coarsen_fraction: T::lit(0.1),
            max_active: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry<T> {
    pub cycle: usize,
    pub active: usize,
    pub residual: T,
    pub errors: Option<ErrorNorms<T>>,
}

/// Cycles over which the residual has to improve by at least 1%.
pub const STAGNATION_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    /// No admissible index left to add below the maximal level.
    Saturated,
    /// Residual reduced by less than 1% over [`STAGNATION_WINDOW`] cycles.
    Stagnated,
    CycleLimit,
    SizeLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveResult<T> {
    pub active: ActiveSet,
    /// Coefficients of the preconditioned system, aligned with `active`.
    pub coefficients: Vec<T>,
    pub history: Vec<HistoryEntry<T>>,
    pub termination: Termination,
}

/// Adaptive solver for `-eps Δu + a u = f` in the tensor basis with `j0 = 2`.
pub struct AdaptiveSolver<T> {
    pub dim: usize,
    pub eps: T,
    pub a: T,
    pub j0: u32,
    pub max_level: u32,
    norms: FactorNorms<T>,
    cache: EntryCache<T>,
    rhs: SeparableFunction<T>,
    rhs_cache: RwLock<HashMap<(usize, FunctionIndex), T>>,
}

impl<T: Real> AdaptiveSolver<T> {
    pub fn new(dim: usize, eps: T, a: T, max_level: u32, rhs: SeparableFunction<T>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(WaveletError::UnsupportedDimension(dim));
        }
        if rhs.dim != dim {
            return Err(WaveletError::InvalidParameter("right-hand side dimension differs".into()));
        }
        if !(eps >= T::zero() && a >= T::zero()) || eps + a <= T::zero() {
            return Err(WaveletError::InvalidParameter("need eps, a >= 0 and eps + a > 0".into()));
        }
        let j0 = MIN_LEVEL;
        if max_level < j0 {
            return Err(WaveletError::LevelTooCoarse { level: max_level, min: j0 });
        }
        let spec = BasisSpec1D::new(j0, max_level + 1 - j0)?;
        Ok(Self {
            dim,
            eps,
            a,
            j0,
            max_level,
            norms: FactorNorms::new(&spec)?,
            cache: EntryCache::new(),
            rhs,
            rhs_cache: RwLock::new(HashMap::default()),
        })
    }

    pub fn cache(&self) -> &EntryCache<T> {
        &self.cache
    }

    /// Unscaled `a(psi_l, psi_m)`.
    fn raw_entry(&self, l: &TensorIndex, m: &TensorIndex) -> T {
        let mut pairs = [(T::one(), T::zero()); MAX_DIM];
        for (i, p) in pairs.iter_mut().enumerate().take(self.dim) {
            *p = self.cache.pair(l.factor(i), m.factor(i));
        }
        let pairs = &pairs[..self.dim];
        let mass = pairs.iter().fold(T::one(), |p, q| p * q.0);
        let stiff = (0..self.dim)
            .map(|i| pairs.iter().enumerate().fold(T::one(), |p, (k, q)| p * if k == i { q.1 } else { q.0 }))
            .sum::<T>();
        self.eps * stiff + self.a * mass
    }

    pub fn diagonal(&self, l: &TensorIndex) -> T {
        let p = self.norms.tensor(l);
        self.eps * p.h1_sq + self.a * p.l2_sq
    }

    /// Diagonally scaled entry `a(psi_l, psi_m) / sqrt(D_l D_m)`.
    pub fn entry(&self, l: &TensorIndex, m: &TensorIndex) -> T {
        if !supports_overlap(l, m) {
            return T::zero();
        }
        self.raw_entry(l, m) / (self.diagonal(l) * self.diagonal(m)).sqrt()
    }

    fn functional_1d(&self, term: usize, factor: usize, f: FunctionIndex) -> T {
        let key = (term * MAX_DIM + factor, f);
        if let Some(&v) = self.rhs_cache.read().unwrap().get(&key) {
            return v;
        }
        let g = &self.rhs.terms[term].1[factor];
        let poly = self.cache.shapes.function(f).expect("valid index");
        let rule = QuadratureRule::<T>::gauss(LOAD_NODES);
        // composite rule on the cells of the finest single-scale level
        let (a, b) = f.support_half_units();
        let cells = 1i64 << (self.max_level - f.level);
        let h = T::pow2(-(self.max_level as i32 + 1));
        let v = (a * cells..b * cells)
            .map(|c| {
                let lo = T::from_usize_lossy(c as usize) * h;
                rule.integrate(lo, lo + h, |x| g(x) * poly.eval(x))
            })
            .sum::<T>();
        *self.rhs_cache.write().unwrap().entry(key).or_insert(v)
    }

    /// `<f, psi_l> / sqrt(D_l)`.
    pub fn load(&self, l: &TensorIndex) -> T {
        let raw: T = (0..self.rhs.terms.len())
            .map(|t| (0..self.dim).fold(self.rhs.terms[t].0, |p, i| p * self.functional_1d(t, i, l.factor(i))))
            .sum();
        raw / self.diagonal(l).sqrt()
    }

    fn coarse_block(&self) -> Vec<TensorIndex> {
        let spec = BasisSpec1D::new(self.j0, 0).expect("valid coarse level");
        TensorLayout::new(self.dim, &spec).expect("valid dimension").iter().collect()
    }

    /// Indices overlapping `l` whose level is `level` (all kinds present at that level).
    fn overlapping_at(&self, l: &TensorIndex, level: u32) -> Vec<TensorIndex> {
        let masks: Vec<u8> =
            if level == self.j0 { (0..1u8 << self.dim).collect() } else { (1..1u8 << self.dim).collect() };
        let mut out = Vec::new();
        for mask in masks {
            let per_dim: Vec<Vec<u32>> = (0..self.dim)
                .map(|i| {
                    let kind = if mask >> i & 1 == 1 { Kind::Wavelet } else { Kind::Scaling };
                    positions_meeting(l.factor(i), level, kind)
                })
                .collect();
            if per_dim.iter().any(|p| p.is_empty()) {
                continue;
            }
            let mut cursor = vec![0usize; self.dim];
            'outer: loop {
                let pos: Vec<u32> = (0..self.dim).map(|i| per_dim[i][cursor[i]]).collect();
                out.push(TensorIndex::new(level, mask, &pos));
                for i in (0..self.dim).rev() {
                    cursor[i] += 1;
                    if cursor[i] < per_dim[i].len() {
                        continue 'outer;
                    }
                    cursor[i] = 0;
                }
                break;
            }
        }
        out
    }

    /// Neighbourhood: overlapping indices within one level, up to `max_level`.
    pub fn neighbours(&self, l: &TensorIndex) -> Vec<TensorIndex> {
        let lo = l.level.saturating_sub(1).max(self.j0);
        let hi = (l.level + 1).min(self.max_level);
        (lo..=hi).flat_map(|m| self.overlapping_at(l, m)).filter(|m| m != l).collect()
    }

    fn inv_sqrt_diagonal(&self, set: &ActiveSet) -> Vec<T> {
        set.indices().par_iter().map(|l| T::one() / self.diagonal(l).sqrt()).collect()
    }

    /// `(At u)_m` for every `m` in `rows`, with `u` supported on `cols`.
    fn product(&self, rows: &ActiveSet, cols: &ActiveSet, u: &[T]) -> Vec<T> {
        let dr = self.inv_sqrt_diagonal(rows);
        let w: Vec<T> = self.inv_sqrt_diagonal(cols).iter().zip(u).map(|(&d, &x)| d * x).collect();
        // pairs with level(col) <= level(row), found from the row side
        let mut out: Vec<T> = rows
            .indices()
            .par_iter()
            .zip(dr.par_iter())
            .map(|(m, &dm)| {
                let s: T = (self.j0..=m.level)
                    .flat_map(|lvl| self.overlapping_at(m, lvl))
                    .filter_map(|l| cols.position(&l).map(|p| self.raw_entry(m, &l) * w[p]))
                    .sum();
                s * dm
            })
            .collect();
        // pairs with level(col) > level(row), found from the column side
        let extra: Vec<Vec<(usize, T)>> = cols
            .indices()
            .par_iter()
            .zip(w.par_iter())
            .map(|(l, &wl)| {
                if wl == T::zero() {
                    return Vec::new();
                }
                (self.j0..l.level)
                    .flat_map(|lvl| self.overlapping_at(l, lvl))
                    .filter_map(|m| rows.position(&m).map(|p| (p, self.raw_entry(&m, l) * wl * dr[p])))
                    .collect()
            })
            .collect();
        for (p, v) in extra.into_iter().flatten() {
            out[p] += v;
        }
        out
    }

    /// Residual `ft - At u` on `rows`.
    pub fn residual(&self, rows: &ActiveSet, cols: &ActiveSet, u: &[T]) -> Vec<T> {
        let au = self.product(rows, cols, u);
        rows.indices().par_iter().zip(au.par_iter()).map(|(m, &a)| self.load(m) - a).collect()
    }

    fn galerkin_matrix(&self, set: &ActiveSet) -> SparseSymmetric<T> {
        let d = self.inv_sqrt_diagonal(set);
        let rows: Vec<Vec<(usize, T)>> = set
            .indices()
            .par_iter()
            .zip(d.par_iter())
            .map(|(m, &dm)| {
                (self.j0..=m.level)
                    .flat_map(|lvl| self.overlapping_at(m, lvl))
                    .filter_map(|l| set.position(&l).map(|p| (p, self.raw_entry(m, &l) * dm * d[p])))
                    .collect()
            })
            .collect();
        // mirror the entries whose column is coarser than the row
        let mut full: Vec<Vec<(usize, T)>> = rows.clone();
        for (r, row) in rows.iter().enumerate() {
            for &(c, v) in row {
                if set.indices()[c].level < set.indices()[r].level {
                    full[c].push((r, v));
                }
            }
        }
        full.iter_mut().for_each(|row| row.sort_by_key(|&(c, _)| c));
        SparseSymmetric { rows: full }
    }

    /// Galerkin solve on `set` from `u0` with `||r||_2 <= tol`.
    pub fn solve_on(&self, set: &ActiveSet, u0: &[T], tol: T) -> Result<Vec<T>> {
        let a = self.galerkin_matrix(set);
        let f: Vec<T> = set.indices().par_iter().map(|l| self.load(l)).collect();
        Ok(cg(&a, &f, u0, tol, 10_000)?.solution)
    }

    /// Single-scale coefficients of `sum_l u_l D_l^{-1/2} psi_l` at level `max level + 1`.
    pub fn single_scale(&self, set: &ActiveSet, u: &[T]) -> Result<(u32, Vec<T>)> {
        let top = set.max_level().unwrap_or(self.j0);
        let spec = BasisSpec1D::new(self.j0, top + 1 - self.j0)?;
        let synthesis = TensorSynthesis::<T>::new(self.dim, &spec)?;
        let layout = *synthesis.layout();
        let mut full = vec![T::zero(); layout.len()];
        for (l, &ul) in set.iter().zip(u) {
            full[layout.position(l)] = ul / self.diagonal(l).sqrt();
        }
        Ok((spec.finest_level(), synthesis.synthesize(&full)?))
    }

    pub fn solve(
        &self,
        config: &AdaptiveConfig<T>,
        exact: Option<&ManufacturedProblem<T>>,
    ) -> Result<AdaptiveResult<T>> {
        if !(config.theta > T::zero() && config.theta < T::one()) {
            return Err(WaveletError::InvalidParameter(format!("theta must lie in (0, 1), got {}", config.theta)));
        }
        let mut active: ActiveSet = self.coarse_block().into_iter().collect();
        let mut u = vec![T::zero(); active.len()];
        let mut history = Vec::new();
        let mut growth_steps = 0usize;
        let termination = loop {
            let cycle = history.len();
            // 1. extended set
            let mut extended = active.clone();
            let candidates: Vec<Vec<TensorIndex>> = active.indices().par_iter().map(|l| self.neighbours(l)).collect();
            for m in candidates.into_iter().flatten() {
                extended.insert(m);
            }
            // 2. residual
            let r = self.residual(&extended, &active, &u);
            let norm = r.iter().map(|&x| x * x).sum::<T>().sqrt();
            let errors = match exact {
                Some(p) => {
                    let (level, single) = self.single_scale(&active, &u)?;
                    Some(single_scale_error_norms(&single, level, p, None))
                }
                None => None,
            };
            history.push(HistoryEntry { cycle, active: active.len(), residual: norm, errors });
            if norm <= config.target {
                break Termination::Converged;
            }
            if history.len() > STAGNATION_WINDOW {
                let (before, recent) = history.split_at(history.len() - STAGNATION_WINDOW);
                let best = |h: &[HistoryEntry<T>]| h.iter().map(|e| e.residual).fold(T::infinity(), T::min);
                if best(recent) > T::lit(0.99) * best(before) {
                    break Termination::Stagnated;
                }
            }
            if cycle + 1 >= config.max_cycles {
                break Termination::CycleLimit;
            }
            if active.len() >= config.max_active {
                break Termination::SizeLimit;
            }
            // 3. bulk chasing
            let mut order: Vec<usize> = (0..r.len()).collect();
            order.sort_by(|&i, &j| {
                r[j].abs()
                    .partial_cmp(&r[i].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| extended.indices()[i].cmp(&extended.indices()[j]))
            });
            let goal = config.theta * config.theta * norm * norm;
            let mut captured = T::zero();
            let mut added = 0;
            for i in order {
                if captured >= goal {
                    break;
                }
                captured += r[i] * r[i];
                if active.insert(extended.indices()[i]) {
                    added += 1;
                }
            }
            if added == 0 {
                break Termination::Saturated;
            }
            growth_steps += 1;
            u.resize(active.len(), T::zero());
            // 4. Galerkin solve
            let tol = T::lit(0.1) * norm;
            u = self.solve_on(&active, &u, tol)?;
            // 5. coarsening
            if config.coarsen_every > 0 && growth_steps.is_multiple_of(config.coarsen_every) {
                let keep = coarsen_mask(&u, config.coarsen_fraction, tol);
                let kept = active.retain(&keep);
                let trimmed: Vec<T> = kept.iter().map(|&i| u[i]).collect();
                u = self.solve_on(&active, &trimmed, tol)?;
            }
        };
        Ok(AdaptiveResult { active, coefficients: u, history, termination })
    }
}

/// Drops coefficients below `fraction` of the mean magnitude, smallest first,
/// as long as the dropped part has Euclidean norm at most `budget`.
pub fn coarsen_mask<T: Real>(u: &[T], fraction: T, budget: T) -> Vec<bool> {
    let mut keep = vec![true; u.len()];
    if u.is_empty() {
        return keep;
    }
    let mean = u.iter().map(|x| x.abs()).sum::<T>() / T::from_usize_lossy(u.len());
    let mut small: Vec<usize> = (0..u.len()).filter(|&i| u[i].abs() < fraction * mean).collect();
    small.sort_by(|&i, &j| u[i].abs().partial_cmp(&u[j].abs()).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    let mut dropped = T::zero();
    for i in small {
        dropped += u[i] * u[i];
        if dropped > budget * budget {
            break;
        }
        keep[i] = false;
    }
    keep
}

/// Symmetric sparse matrix stored by full rows.
struct SparseSymmetric<T> {
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> LinearOperator<T> for SparseSymmetric<T> {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        self.rows.par_iter().map(|row| row.iter().map(|&(c, v)| v * x[c]).sum()).collect()
    }
}

/// Supports in units of `2^-(level+1)` rescaled to a common unit `2^-(top+1)`.
fn scaled_support(f: FunctionIndex, top: u32) -> (i64, i64) {
    let (a, b) = f.support_half_units();
    let s = 1i64 << (top - f.level);
    (a * s, b * s)
}

fn overlap_1d(f: FunctionIndex, g: FunctionIndex) -> bool {
    let top = f.level.max(g.level);
    let (a, b) = scaled_support(f, top);
    let (c, d) = scaled_support(g, top);
    a < d && c < b
}

fn supports_overlap(l: &TensorIndex, m: &TensorIndex) -> bool {
    (0..l.dim as usize).all(|i| overlap_1d(l.factor(i), m.factor(i)))
}

/// Positions at `level` of the given kind whose support overlaps that of `f`.
fn positions_meeting(f: FunctionIndex, level: u32, kind: Kind) -> Vec<u32> {
    let top = f.level.max(level);
    let (a, b) = scaled_support(f, top);
    let unit = 1i64 << (top - level);
    let n = 1i64 << level;
    // candidate supports span at most 6 half units of `level`
    let first = (a / unit / 2 - 2).max(1);
    let last = ((b + unit - 1) / unit / 2 + 2).min(n);
    (first..=last)
        .map(|k| FunctionIndex { level, kind, position: k as u32 })
        .filter(|&g| {
            let (c, d) = scaled_support(g, top);
            a < d && c < b
        })
        .map(|g| g.position)
        .collect()
}
