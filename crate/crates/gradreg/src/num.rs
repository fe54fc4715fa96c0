//! Deterministic numeric foundation: dense matrices, Lp norms and dual
//! exponents, the standard normal CDF, and a seedable random stream.
//!
//! Everything here is generic over the scalar type through [`Real`]; the
//! crate root exports `f64` aliases for the concrete stack.

use crate::error::{Error, Result};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Scalar type the core math is written against: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; panics only for values outside the
    /// target type's range, which never occurs for the constants used here.
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("constant representable in scalar type")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum<T>
        + fmt::Debug
        + fmt::Display
        + Send
        + Sync
        + 'static
{
}

/// Norm parameter `p ∈ [1, ∞]`.
///
/// Stored as a finite 64-bit float plus a distinct infinity marker. The
/// constructor routes values within `1e-9` of 1 to exactly 1 and values
/// above `1e6` to the infinity code path, because the exponent `1/(p-1)`
/// used by the closed-form perturbation overflows near `p = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PNorm {
    Finite(f64),
    Inf,
}

impl PNorm {
    pub const INF: PNorm = PNorm::Inf;

    pub fn new(p: f64) -> Result<PNorm> {
        if p.is_nan() || p < 1.0 - 1e-9 {
            return Err(Error::InvalidParameter(format!("norm parameter p = {p} must be >= 1")));
        }
        if (p - 1.0).abs() <= 1e-9 {
            Ok(PNorm::Finite(1.0))
        } else if p > 1e6 {
            Ok(PNorm::Inf)
        } else {
            Ok(PNorm::Finite(p))
        }
    }

    /// Dual exponent `p*` with `1/p + 1/p* = 1`; `1 ↦ ∞` and `∞ ↦ 1`.
    pub fn dual(self) -> PNorm {
        match self {
            PNorm::Inf => PNorm::Finite(1.0),
            PNorm::Finite(p) if p == 1.0 => PNorm::Inf,
            PNorm::Finite(p) => PNorm::Finite(p / (p - 1.0)),
        }
    }

    pub fn value(self) -> f64 {
        match self {
            PNorm::Finite(p) => p,
            PNorm::Inf => f64::INFINITY,
        }
    }

    pub fn is_one(self) -> bool {
        matches!(self, PNorm::Finite(p) if p == 1.0)
    }
}

impl fmt::Display for PNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PNorm::Finite(p) => write!(f, "{p}"),
            PNorm::Inf => write!(f, "inf"),
        }
    }
}

/// `(Σ|v_i|^p)^(1/p)`, with the max-magnitude limit for `p = ∞`.
///
/// Entries are scaled by the largest magnitude before exponentiation so
/// large `p` does not overflow.
pub fn lp_norm<T: Real>(v: &[T], p: PNorm) -> T {
    match p {
        PNorm::Inf => v.iter().fold(T::zero(), |m, &x| m.max(x.abs())),
        PNorm::Finite(p) if p == 1.0 => v.iter().map(|x| x.abs()).sum(),
        PNorm::Finite(p) => {
            let m = v.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
            if m == T::zero() {
                return T::zero();
            }
            let pe = T::of(p);
            let s: T = v.iter().map(|x| (x.abs() / m).powf(pe)).sum();
            m * s.powf(T::one() / pe)
        }
    }
}

/// Convenience wrapper validating `p` before taking the norm.
pub fn lp_norm_checked<T: Real>(v: &[T], p: f64) -> Result<T> {
    Ok(lp_norm(v, PNorm::new(p)?))
}

/// Dual exponent as a plain float, validating `p`.
pub fn dual_exponent(p: f64) -> Result<f64> {
    Ok(PNorm::new(p)?.dual().value())
}

// ---------------------------------------------------------------------------
// Standard normal CDF
// ---------------------------------------------------------------------------

/// erf(x) by Maclaurin series; used for |x| < 2.5 where it converges fast
/// and cancellation stays below ~1e-12.
fn erf_series<T: Real>(x: T) -> T {
    let two_over_sqrt_pi = T::of(std::f64::consts::FRAC_2_SQRT_PI);
    let x2 = x * x;
    let mut term = x; // (-1)^n x^(2n+1) / n!
    let mut sum = x;
    let mut n = 1u32;
    loop {
        term = term * (-x2) / T::of(n as f64);
        let contrib = term / T::of((2 * n + 1) as f64);
        sum += contrib;
        if contrib.abs() < T::of(1e-18) * sum.abs() || n > 200 {
            break;
        }
        n += 1;
    }
    two_over_sqrt_pi * sum
}

/// erfc(x) for x >= 2.5 by the Laplace continued fraction
/// `erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))`
/// evaluated with the modified Lentz algorithm.
fn erfc_cf<T: Real>(x: T) -> T {
    let tiny = T::of(1e-300);
    let mut f = x;
    if f == T::zero() {
        f = tiny;
    }
    let mut c = f;
    let mut d = T::zero();
    for n in 1..=300u32 {
        let a = T::of(n as f64 / 2.0);
        d = x + a * d;
        if d == T::zero() {
            d = tiny;
        }
        c = x + a / c;
        if c == T::zero() {
            c = tiny;
        }
        d = T::one() / d;
        let delta = c * d;
        f = f * delta;
        if (delta - T::one()).abs() < T::of(1e-17) {
            break;
        }
    }
    let sqrt_pi = T::of(1.772_453_850_905_516);
    (-x * x).exp() / (sqrt_pi * f)
}

fn erfc<T: Real>(x: T) -> T {
    if x < T::zero() {
        return T::of(2.0) - erfc(-x);
    }
    if x < T::of(2.5) {
        T::one() - erf_series(x)
    } else {
        erfc_cf(x)
    }
}

/// Standard normal CDF `Φ(z)`, absolute error below 1e-13 on `[-8, 8]`.
///
/// Built from `Φ(z) = erfc(-z/√2)/2` with erfc evaluated by series /
/// continued fraction; `Φ(z) + Φ(-z) = 1` holds by construction.
pub fn gaussian_cdf<T: Real>(z: T) -> T {
    if z.is_nan() {
        return z;
    }
    if z == T::infinity() {
        return T::one();
    }
    if z == T::neg_infinity() {
        return T::zero();
    }
    let inv_sqrt2 = T::of(std::f64::consts::FRAC_1_SQRT_2);
    T::of(0.5) * erfc(-z * inv_sqrt2)
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// xoshiro256** stream seeded through splitmix64.
///
/// Identical seed gives an identical stream within one build; an instance is
/// single-owner and never shared across concurrent tasks.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn new(seed: u64) -> Rng {
        let mut st = seed;
        Rng {
            s: [
                splitmix64(&mut st),
                splitmix64(&mut st),
                splitmix64(&mut st),
                splitmix64(&mut st),
            ],
        }
    }

    /// Independent stream for `(seed, index)`; parallel measurement loops
    /// derive one substream per example so serial and parallel runs agree.
    pub fn substream(seed: u64, index: u64) -> Rng {
        let mut st = seed;
        let base = splitmix64(&mut st);
        Rng::new(base ^ index.wrapping_mul(0xA076_1D64_78BD_642F))
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal draw via Box-Muller (two uniforms per draw).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn gen_range(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.gen_range(i + 1);
            xs.swap(i, j);
        }
    }
}

/// `n` independent draws from `N(mu, sigma^2)`.
pub fn gaussian_sample<T: Real>(rng: &mut Rng, mu: T, sigma: T, n: usize) -> Result<Vec<T>> {
    if sigma < T::zero() {
        return Err(Error::InvalidParameter(format!(
            "gaussian_sample: sigma = {sigma} must be non-negative"
        )));
    }
    Ok((0..n)
        .map(|_| mu + sigma * T::of(rng.next_gaussian()))
        .collect())
}

// ---------------------------------------------------------------------------
// Matrices
// ---------------------------------------------------------------------------

/// Dense row-major matrix; immutable-after-construction in spirit, safe to
/// share read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixBase<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> MatrixBase<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        MatrixBase {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(MatrixBase { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        MatrixBase { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// `self * x` for a column vector `x`.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&w, &xi)| acc + w * xi)
            })
            .collect()
    }

    /// `self^T * y` for a column vector `y`.
    pub fn tr_matvec(&self, y: &[T]) -> Vec<T> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for r in 0..self.rows {
            let yr = y[r];
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
        out
    }

    pub fn sq_sum(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_norm_pythagorean() {
        assert_eq!(lp_norm(&[3.0, 4.0], PNorm::new(2.0).unwrap()), 5.0);
    }

    #[test]
    fn lp_norm_l1() {
        assert_eq!(lp_norm(&[1.0, -1.0, 1.0], PNorm::new(1.0).unwrap()), 3.0);
    }

    #[test]
    fn lp_norm_linf() {
        assert_eq!(lp_norm(&[2.0, -7.0], PNorm::Inf), 7.0);
    }

    #[test]
    fn lp_norm_zero_vector() {
        assert_eq!(lp_norm(&[0.0f64; 4], PNorm::new(3.0).unwrap()), 0.0);
    }

    #[test]
    fn pnorm_rejects_below_one() {
        assert!(PNorm::new(0.5).is_err());
        assert!(PNorm::new(f64::NAN).is_err());
    }

    #[test]
    fn pnorm_routes_limits() {
        assert!(PNorm::new(1.0 + 5e-10).unwrap().is_one());
        assert_eq!(PNorm::new(2e6).unwrap(), PNorm::Inf);
    }

    #[test]
    fn dual_exponent_cases() {
        assert_eq!(dual_exponent(2.0).unwrap(), 2.0);
        assert_eq!(dual_exponent(3.0).unwrap(), 1.5);
        assert_eq!(PNorm::Inf.dual(), PNorm::Finite(1.0));
        assert_eq!(PNorm::new(1.0).unwrap().dual(), PNorm::Inf);
    }

    #[test]
    fn cdf_fixed_points() {
        assert_eq!(gaussian_cdf(0.0f64), 0.5);
        assert_eq!(gaussian_cdf(f64::INFINITY), 1.0);
        assert_eq!(gaussian_cdf(f64::NEG_INFINITY), 0.0);
        // Derived by numeric integration of the standard normal density.
        assert!((gaussian_cdf(-1.514f64) - 0.0650).abs() < 1e-4);
    }

    /// Independent oracle: Simpson quadrature of the standard normal density
    /// from -12 to z.
    fn cdf_by_quadrature(z: f64) -> f64 {
        let lo = -12.0;
        let n = 200_000usize; // even
        let h = (z - lo) / n as f64;
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(lo) + pdf(z);
        for i in 1..n {
            let x = lo + i as f64 * h;
            s += pdf(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn cdf_matches_quadrature() {
        let mut z = -8.0;
        while z <= 8.0 {
            let want = cdf_by_quadrature(z);
            let got = gaussian_cdf(z);
            assert!(
                (got - want).abs() <= 1e-7,
                "z={z}: got {got}, quadrature {want}"
            );
            z += 0.25;
        }
    }

    #[test]
    fn cdf_symmetry_and_monotonicity() {
        let mut prev = gaussian_cdf(-6.0f64);
        let mut z = -6.0;
        while z <= 6.0 {
            let v = gaussian_cdf(z);
            assert!((v + gaussian_cdf(-z) - 1.0).abs() < 2e-7);
            assert!(v >= prev, "cdf decreased at z={z}");
            prev = v;
            z += 0.01;
        }
    }

    #[test]
    fn gaussian_sample_degenerate_and_deterministic() {
        let mut rng = Rng::new(7);
        let v = gaussian_sample(&mut rng, 2.5f64, 0.0, 3).unwrap();
        assert_eq!(v, vec![2.5, 2.5, 2.5]);

        let a = gaussian_sample(&mut Rng::new(11), 0.0f64, 1.0, 64).unwrap();
        let b = gaussian_sample(&mut Rng::new(11), 0.0f64, 1.0, 64).unwrap();
        assert_eq!(a, b);

        assert!(gaussian_sample(&mut Rng::new(1), 0.0f64, -1.0, 1).is_err());
    }

    #[test]
    fn gaussian_sample_mean() {
        let n = 100_000;
        let v = gaussian_sample(&mut Rng::new(3), 0.0f64, 1.0, n).unwrap();
        let mean: f64 = v.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean = {mean}");
    }

    #[test]
    fn generic_f32_paths() {
        assert!((lp_norm(&[3.0f32, 4.0], PNorm::new(2.0).unwrap()) - 5.0).abs() < 1e-6);
        assert!((gaussian_cdf(0.0f32) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn matrix_ops() {
        let m = MatrixBase::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.matvec(&[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        assert_eq!(m.tr_matvec(&[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
        assert!(MatrixBase::<f64>::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn norm_triangle_and_homogeneity(
                a in proptest::collection::vec(-10.0f64..10.0, 1..6),
                b in proptest::collection::vec(-10.0f64..10.0, 6),
                p in prop_oneof![Just(1.0), Just(1.5), Just(2.0), Just(4.0)],
                c in -3.0f64..3.0,
            ) {
                let p = PNorm::new(p).unwrap();
                let b = &b[..a.len()];
                let sum: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                prop_assert!(lp_norm(&sum, p) <= lp_norm(&a, p) + lp_norm(b, p) + 1e-9);
                let scaled: Vec<f64> = a.iter().map(|x| c * x).collect();
                let expect = c.abs() * lp_norm(&a, p);
                prop_assert!((lp_norm(&scaled, p) - expect).abs() <= 1e-9 * expect.max(1.0));
            }

            #[test]
            fn dual_is_an_involution(p in 1.0f64..50.0) {
                let q = PNorm::new(p).unwrap().dual();
                let back = q.dual().value();
                prop_assert!((back - p).abs() < 1e-6 * p);
            }

            #[test]
            fn cdf_bounds_and_symmetry(z in -8.0f64..8.0) {
                let c = gaussian_cdf(z);
                prop_assert!((0.0..=1.0).contains(&c));
                prop_assert!((c + gaussian_cdf(-z) - 1.0).abs() < 1e-14);
            }
        }
    }
}
