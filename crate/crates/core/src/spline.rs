//! Piecewise quadratic polynomials on dyadic grids.
//!
//! Every basis function of the crate is a [`PiecewisePoly`]: a strictly
//! increasing list of breakpoints and, for each interval, the coefficients
//! `[c0, c1, c2]` of `c0 + c1 t + c2 t^2` with `t = x - left_breakpoint`.
//! Products of two such functions are integrated exactly with a Gauss rule on
//! the merged breakpoint grid.

use crate::error::{Result, WaveletError};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePoly<T> {
    breaks: Vec<T>,
    pieces: Vec<[T; 3]>,
}

impl<T: Real> PiecewisePoly<T> {
    pub fn new(breaks: Vec<T>, pieces: Vec<[T; 3]>) -> Result<Self> {
        let ok = if breaks.is_empty() {
            pieces.is_empty()
        } else {
            pieces.len() + 1 == breaks.len() && breaks.windows(2).all(|w| w[0] < w[1])
        };
        if !ok {
            return Err(WaveletError::MalformedPolynomial);
        }
        Ok(Self { breaks, pieces })
    }

    /// Builds a function from pieces written in the global monomial basis
    /// `a + b x + c x^2`.
    pub fn from_global(breaks: Vec<T>, global: &[[T; 3]]) -> Result<Self> {
        if breaks.len() != global.len() + 1 {
            return Err(WaveletError::MalformedPolynomial);
        }
        let pieces = global
            .iter()
            .zip(&breaks)
            .map(|(&[a, b, c], &x0)| {
                let two = T::lit(2.0);
                [a + x0 * (b + x0 * c), b + two * c * x0, c]
            })
            .collect();
        Self::new(breaks, pieces)
    }

    pub fn zero() -> Self {
        Self { breaks: Vec::new(), pieces: Vec::new() }
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breaks
    }

    pub fn pieces(&self) -> &[[T; 3]] {
        &self.pieces
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn support(&self) -> Option<(T, T)> {
        Some((*self.breaks.first()?, *self.breaks.last()?))
    }

    #[inline]
    fn eval_piece(&self, i: usize, x: T) -> T {
        let [c0, c1, c2] = self.pieces[i];
        let t = x - self.breaks[i];
        c0 + t * (c1 + t * c2)
    }

    /// Index of the piece used for evaluation at `x` (right-continuous, the
    /// last piece is closed).
    fn locate(&self, x: T) -> Option<usize> {
        let (lo, hi) = self.support()?;
        if x < lo || x > hi {
            return None;
        }
        let idx = self.breaks.partition_point(|&b| b <= x);
        Some(idx.saturating_sub(1).min(self.pieces.len() - 1))
    }

    /// Value at `x`; exactly zero outside the support.
    pub fn eval(&self, x: T) -> T {
        match self.locate(x) {
            Some(i) => self.eval_piece(i, x),
            None => T::zero(),
        }
    }

    /// Left limit at `x`.
    pub fn eval_left(&self, x: T) -> T {
        let Some((lo, hi)) = self.support() else {
            return T::zero();
        };
        if x <= lo || x > hi {
            return T::zero();
        }
        let idx = self.breaks.partition_point(|&b| b < x);
        self.eval_piece(idx - 1, x)
    }

    /// `x -> self(scale * x + shift)`; `scale` may be negative (mirroring).
    pub fn dilate(&self, scale: T, shift: T) -> Self {
        assert!(scale != T::zero(), "dilation by zero");
        if self.is_zero() {
            return Self::zero();
        }
        let map = |y: T| (y - shift) / scale;
        if scale > T::zero() {
            let breaks = self.breaks.iter().map(|&y| map(y)).collect();
            let pieces = self.pieces.iter().map(|&[c0, c1, c2]| [c0, c1 * scale, c2 * scale * scale]).collect();
            Self { breaks, pieces }
        } else {
            let breaks = self.breaks.iter().rev().map(|&y| map(y)).collect();
            let pieces = self
                .pieces
                .iter()
                .enumerate()
                .rev()
                .map(|(i, &[c0, c1, c2])| {
                    let h = self.breaks[i + 1] - self.breaks[i];
                    let two = T::lit(2.0);
                    [c0 + h * (c1 + h * c2), (c1 + two * c2 * h) * scale, c2 * scale * scale]
                })
                .collect();
            Self { breaks, pieces }
        }
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            breaks: self.breaks.clone(),
            pieces: self.pieces.iter().map(|&[a, b, d]| [a * c, b * c, d * c]).collect(),
        }
    }

    /// Coefficients of the piece containing `[z, ..)` re-centred at `z`,
    /// or zero when `z` lies outside the support.
    fn recentred(&self, z: T, z_next: T) -> [T; 3] {
        let Some((lo, hi)) = self.support() else {
            return [T::zero(); 3];
        };
        if z_next <= lo || z >= hi {
            return [T::zero(); 3];
        }
        let mid = (z + z_next) / T::lit(2.0);
        let i = self.locate(mid).expect("midpoint inside support");
        let [c0, c1, c2] = self.pieces[i];
        let d = z - self.breaks[i];
        let two = T::lit(2.0);
        [c0 + d * (c1 + d * c2), c1 + two * c2 * d, c2]
    }

    /// Linear combination `sum_i c_i p_i` on the merged breakpoint grid.
    pub fn combine(terms: &[(T, &Self)]) -> Self {
        let mut breaks: Vec<T> = terms.iter().flat_map(|(_, p)| p.breaks.iter().copied()).collect();
        breaks.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        breaks.dedup();
        if breaks.len() < 2 {
            return Self::zero();
        }
        let mut pieces: Vec<[T; 3]> = breaks
            .windows(2)
            .map(|w| {
                let mut acc = [T::zero(); 3];
                for (c, p) in terms {
                    let r = p.recentred(w[0], w[1]);
                    for m in 0..3 {
                        acc[m] += *c * r[m];
                    }
                }
                acc
            })
            .collect();
        // trim identically-zero end pieces
        let is_zero = |p: &[T; 3]| p.iter().all(|c| *c == T::zero());
        while pieces.last().is_some_and(is_zero) {
            pieces.pop();
            breaks.pop();
        }
        let lead = pieces.iter().take_while(|p| is_zero(p)).count();
        pieces.drain(..lead);
        breaks.drain(..lead);
        if pieces.is_empty() {
            return Self::zero();
        }
        Self { breaks, pieces }
    }

    /// Piecewise derivative on the same breakpoints (jumps are ignored).
    pub fn derivative(&self) -> Self {
        let two = T::lit(2.0);
        Self {
            breaks: self.breaks.clone(),
            pieces: self.pieces.iter().map(|&[_, c1, c2]| [c1, two * c2, T::zero()]).collect(),
        }
    }

    /// Exact integral over the support.
    pub fn integral(&self) -> T {
        let (two, three) = (T::lit(2.0), T::lit(3.0));
        self.pieces
            .iter()
            .zip(self.breaks.windows(2))
            .map(|(&[c0, c1, c2], w)| {
                let h = w[1] - w[0];
                h * (c0 + h * (c1 / two + h * c2 / three))
            })
            .sum()
    }
}

/// Gauss–Legendre rule on the reference interval `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> QuadratureRule<T> {
    /// `order`-point rule, exact for polynomials of degree `2 * order - 1`.
    pub fn gauss(order: usize) -> Self {
        assert!(order > 0, "quadrature order must be positive");
        let n = order;
        let mut nodes = vec![T::zero(); n];
        let mut weights = vec![T::zero(); n];
        // Newton on P_n in f64, starting from the Chebyshev-like guesses.
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0f64, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 1 { x } else { p1 };
                let pm = if n == 1 { 1.0 } else { p0 };
                dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
                let dx = pn / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // map [-1, 1] -> [0, 1]
            nodes[i] = T::lit(0.5 * (1.0 - x));
            nodes[n - 1 - i] = T::lit(0.5 * (1.0 + x));
            weights[i] = T::lit(0.5 * w);
            weights[n - 1 - i] = T::lit(0.5 * w);
        }
        Self { nodes, weights }
    }

    /// Closed-form three-point rule.
    pub fn gauss3() -> Self {
        let half = T::ratio(1, 2);
        let off = (T::ratio(3, 5)).sqrt() * half;
        Self {
            nodes: vec![half - off, half, half + off],
            weights: vec![T::ratio(5, 18), T::ratio(8, 18), T::ratio(5, 18)],
        }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Highest polynomial degree integrated exactly.
    pub fn exact_degree(&self) -> usize {
        2 * self.order() - 1
    }

    pub fn integrate<F: FnMut(T) -> T>(&self, a: T, b: T, mut f: F) -> T {
        let h = b - a;
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(a + h * x)).sum::<T>() * h
    }
}

/// Exact `integral(p * q)` over the intersection of supports.
pub fn integrate_product<T: Real>(p: &PiecewisePoly<T>, q: &PiecewisePoly<T>) -> T {
    integrate_product_with(p, q, &QuadratureRule::gauss3())
}

/// Same as [`integrate_product`] with a caller-provided rule (order >= 3).
pub fn integrate_product_with<T: Real>(p: &PiecewisePoly<T>, q: &PiecewisePoly<T>, rule: &QuadratureRule<T>) -> T {
    debug_assert!(rule.exact_degree() >= 4);
    let (Some((pa, pb)), Some((qa, qb))) = (p.support(), q.support()) else {
        return T::zero();
    };
    let lo = if pa > qa { pa } else { qa };
    let hi = if pb < qb { pb } else { qb };
    if lo >= hi {
        return T::zero();
    }
    let (mut i, mut j) = (p.locate(lo).unwrap(), q.locate(lo).unwrap());
    let mut left = lo;
    let mut total = T::zero();
    loop {
        let right = {
            let a = p.breaks[i + 1];
            let b = q.breaks[j + 1];
            let r = if a < b { a } else { b };
            if r < hi {
                r
            } else {
                hi
            }
        };
        if right > left {
            total += rule.integrate(left, right, |x| p.eval_piece(i, x) * q.eval_piece(j, x));
        }
        if right >= hi {
            break;
        }
        if p.breaks[i + 1] <= right {
            i += 1;
        }
        if q.breaks[j + 1] <= right {
            j += 1;
        }
        left = right;
    }
    total
}

/// Quadratic B-spline on knots `0, 1, 2, 3`.
pub fn mother_scaling<T: Real>() -> PiecewisePoly<T> {
    let r = T::ratio;
    PiecewisePoly::from_global(
        vec![T::zero(), T::one(), r(2, 1), r(3, 1)],
        &[[T::zero(), T::zero(), r(1, 2)], [r(-3, 2), r(3, 1), r(-1, 1)], [r(9, 2), r(-3, 1), r(1, 2)]],
    )
    .expect("valid mother scaling function")
}

/// Quadratic B-spline on knots `0, 0, 1, 2`.
pub fn boundary_scaling<T: Real>() -> PiecewisePoly<T> {
    let r = T::ratio;
    PiecewisePoly::from_global(
        vec![T::zero(), T::one(), r(2, 1)],
        &[[T::zero(), r(3, 1), r(-9, 4)], [r(3, 1), r(-3, 1), r(3, 4)]],
    )
    .expect("valid boundary scaling function")
}

/// `psi(x) = -phi(2x - 1)/2 + phi(2x - 2)/2`, supported on `[0.5, 2.5]`.
pub fn mother_wavelet<T: Real>() -> PiecewisePoly<T> {
    let phi = mother_scaling::<T>();
    let two = T::lit(2.0);
    let half = T::ratio(1, 2);
    PiecewisePoly::combine(&[(-half, &phi.dilate(two, -T::one())), (half, &phi.dilate(two, -two))])
}

/// `psi_b(x) = -phi_b(2x)/2 + phi(2x)/2`, supported on `[0, 1.5]`.
pub fn boundary_wavelet<T: Real>() -> PiecewisePoly<T> {
    let two = T::lit(2.0);
    let half = T::ratio(1, 2);
    PiecewisePoly::combine(&[
        (-half, &boundary_scaling::<T>().dilate(two, T::zero())),
        (half, &mother_scaling::<T>().dilate(two, T::zero())),
    ])
}
