//! The unified Lp worst-case perturbation family: closed-form perturbations
//! for every `p ∈ [1, ∞]`, the induced dual-norm regularizer value, an
//! independent numerical maximizer used as an oracle, the class-wise
//! decomposition of the `p = 2` perturbation, and the dimension-based sigma
//! scaling rule.

use crate::error::{Error, Result};
use crate::model::{backprop, presoftmax_jacobian, MlpModel};
use crate::num::{lp_norm, PNorm, Real, Rng};
use crate::Matrix;

/// Norm parameter and perturbation budget for one attack or training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbSpec {
    pub p: PNorm,
    pub sigma: f64,
}

impl PerturbSpec {
    pub fn new(p: f64, sigma: f64) -> Result<PerturbSpec> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "perturbation budget sigma = {sigma} must be positive"
            )));
        }
        Ok(PerturbSpec {
            p: PNorm::new(p)?,
            sigma,
        })
    }

    pub fn with_pnorm(p: PNorm, sigma: f64) -> Result<PerturbSpec> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "perturbation budget sigma = {sigma} must be positive"
            )));
        }
        Ok(PerturbSpec { p, sigma })
    }
}

fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero() // sign(0) = 0
    }
}

/// `ε = σ sign(∇L) (|∇L|/‖∇L‖_{p*})^{1/(p-1)}`, the maximizer of `gᵀε` over
/// the `p`-ball of radius σ. `p = 1` and `p = ∞` dispatch to their limit
/// implementations; a zero gradient yields a zero perturbation.
pub fn worst_case_epsilon<T: Real>(grad: &[T], spec: &PerturbSpec) -> Vec<T> {
    let sigma = T::of(spec.sigma);
    match spec.p {
        PNorm::Inf => epsilon_sign(grad, sigma),
        PNorm::Finite(p) if p == 1.0 => epsilon_argmax(grad, sigma),
        PNorm::Finite(p) if p == 2.0 => epsilon_l2(grad, sigma),
        PNorm::Finite(p) => {
            let denom = lp_norm(grad, spec.p.dual());
            if denom == T::zero() {
                return vec![T::zero(); grad.len()];
            }
            let e = T::of(1.0 / (p - 1.0));
            grad.iter()
                .map(|&g| sigma * sign(g) * (g.abs() / denom).powf(e))
                .collect()
        }
    }
}

/// The `p = ∞` limit: `σ sign(∇L)` entrywise (fast gradient sign).
pub fn epsilon_sign<T: Real>(grad: &[T], sigma: T) -> Vec<T> {
    grad.iter().map(|&g| sigma * sign(g)).collect()
}

/// The `p = 1` limit: the whole budget on the single largest-magnitude
/// coordinate, signed; ties break to the lowest index.
pub fn epsilon_argmax<T: Real>(grad: &[T], sigma: T) -> Vec<T> {
    let mut out = vec![T::zero(); grad.len()];
    let mut best: Option<usize> = None;
    for (i, g) in grad.iter().enumerate() {
        if g.abs() > T::zero() && best.is_none_or(|b| g.abs() > grad[b].abs()) {
            best = Some(i);
        }
    }
    if let Some(i) = best {
        out[i] = sigma * sign(grad[i]);
    }
    out
}

/// The `p = 2` case: `σ ∇L / ‖∇L‖₂`.
pub fn epsilon_l2<T: Real>(grad: &[T], sigma: T) -> Vec<T> {
    let n = lp_norm(grad, PNorm::Finite(2.0));
    if n == T::zero() {
        return vec![T::zero(); grad.len()];
    }
    grad.iter().map(|&g| sigma * g / n).collect()
}

/// Value of the induced regularizer `σ ‖∇L‖_{p*}`, which equals
/// `gᵀ worst_case_epsilon(g)` for nonzero gradients.
pub fn regularizer_value<T: Real>(grad: &[T], spec: &PerturbSpec) -> T {
    T::of(spec.sigma) * lp_norm(grad, spec.p.dual())
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Independent numerical maximizer of `gᵀε` over the `p`-ball, used to
/// check the closed form.
///
/// `p = 1` enumerates the signed vertices; `p = ∞` runs per-coordinate
/// ascent over the box; finite `p > 1` takes the best of random directions
/// rescaled to the sphere and then refines the coordinate magnitudes by
/// pairwise mass transfers on the simplex `u_i = (|ε_i|/σ)^p`, each transfer
/// solved by golden-section search. The transfer objective is concave, so
/// the sweeps converge to the global maximum.
pub fn oracle_epsilon<T: Real>(
    grad: &[T],
    spec: &PerturbSpec,
    iterations: usize,
    rng: &mut Rng,
) -> Vec<T> {
    let d = grad.len();
    let sigma = T::of(spec.sigma);
    match spec.p {
        PNorm::Finite(p) if p == 1.0 => {
            // enumerate the 2d vertices sigma * (+-e_i)
            let mut best = vec![T::zero(); d];
            let mut best_obj = T::neg_infinity();
            for i in 0..d {
                for s in [T::one(), -T::one()] {
                    let mut cand = vec![T::zero(); d];
                    cand[i] = sigma * s;
                    let obj = dot(grad, &cand);
                    if obj > best_obj {
                        best_obj = obj;
                        best = cand;
                    }
                }
            }
            best
        }
        PNorm::Inf => {
            // separable over the box: optimize each coordinate alone
            let mut eps = vec![T::zero(); d];
            for i in 0..d {
                eps[i] = if grad[i] >= T::zero() { sigma } else { -sigma };
            }
            eps
        }
        PNorm::Finite(p) => {
            // Phase A: random directions on the sphere.
            let mut best = vec![T::zero(); d];
            let mut best_obj = T::neg_infinity();
            for _ in 0..iterations.max(1) {
                let dir: Vec<T> = (0..d).map(|_| T::of(rng.next_gaussian())).collect();
                let norm = lp_norm(&dir, spec.p);
                if norm == T::zero() {
                    continue;
                }
                let cand: Vec<T> = dir.iter().map(|&v| sigma * v / norm).collect();
                let obj = dot(grad, &cand);
                if obj > best_obj {
                    best_obj = obj;
                    best = cand;
                }
            }
            // Phase B: align signs with g, then refine magnitudes.
            let c: Vec<T> = grad.iter().map(|&g| g.abs()).collect();
            let mut u: Vec<T> = best
                .iter()
                .map(|&e| (e.abs() / sigma).powf(T::of(p)))
                .collect();
            let total: T = u.iter().copied().sum();
            if total == T::zero() {
                u = vec![T::one() / T::of(d as f64); d];
            } else {
                u.iter_mut().for_each(|v| *v /= total);
            }
            let inv_p = T::of(1.0 / p);
            let value = |ui: T, ci: T| ci * ui.max(T::zero()).powf(inv_p);
            for _ in 0..200 {
                let mut moved = T::zero();
                for i in 0..d {
                    for j in (i + 1)..d {
                        if c[i] == T::zero() && c[j] == T::zero() {
                            continue;
                        }
                        // transfer delta from u[j] to u[i]
                        let lo = -u[i];
                        let hi = u[j];
                        let h = |delta: T| value(u[i] + delta, c[i]) + value(u[j] - delta, c[j]);
                        let delta = golden_max(h, lo, hi);
                        if delta.abs() > T::of(1e-18) {
                            u[i] += delta;
                            u[j] -= delta;
                            moved = moved.max(delta.abs());
                        }
                    }
                }
                if moved < T::of(1e-15) {
                    break;
                }
            }
            grad.iter()
                .zip(&u)
                .map(|(&g, &ui)| sign(g) * sigma * ui.max(T::zero()).powf(inv_p))
                .collect()
        }
    }
}

/// Golden-section maximizer of a concave `h` on `[lo, hi]`.
fn golden_max<T: Real>(h: impl Fn(T) -> T, mut lo: T, mut hi: T) -> T {
    let phi = T::of(0.618_033_988_749_894_9);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = h(x1);
    let mut f2 = h(x2);
    for _ in 0..120 {
        if hi - lo < T::of(1e-16) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = h(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = h(x1);
        }
    }
    (lo + hi) * T::of(0.5)
}

/// Class-wise decomposition of the `p = 2` perturbation
/// `ε = σ/‖∇_x L‖₂ · (y-t) J_o(x)`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// `y - t`.
    pub residual: Vec<f64>,
    /// Row `k` is `(y_k - t_k) · row_k(J_o(x))` scaled by `σ/‖∇_x L‖₂`;
    /// the rows sum to the full perturbation.
    pub components: Matrix,
    /// Set when the input gradient vanished and the components are zero.
    pub zero_gradient: bool,
}

pub fn decompose_perturbation(
    model: &MlpModel,
    x: &[f64],
    t: &[f64],
    sigma: f64,
) -> Result<Decomposition> {
    let g = backprop(model, x, t, 0.0)?;
    let trace = model.forward(x)?;
    let residual: Vec<f64> = trace.probs.iter().zip(t).map(|(y, t)| y - t).collect();
    let k = model.output_dim();
    let d = model.input_dim();
    let norm = lp_norm(&g.grad_input, PNorm::Finite(2.0));
    if norm == 0.0 {
        return Ok(Decomposition {
            residual,
            components: Matrix::zeros(k, d),
            zero_gradient: true,
        });
    }
    let jac = presoftmax_jacobian(model, x)?;
    let scale = sigma / norm;
    let components = Matrix::from_fn(k, d, |r, c| scale * residual[r] * jac.get(r, c));
    Ok(Decomposition {
        residual,
        components,
        zero_gradient: false,
    })
}

/// `σ' = σ sqrt(d_new/d_ref)`: keep the per-dimension perturbation scale
/// when moving to inputs of a different dimension.
pub fn scale_sigma_for_dim(sigma_ref: f64, d_ref: usize, d_new: usize) -> f64 {
    assert!(d_ref > 0 && d_new > 0);
    sigma_ref * (d_new as f64 / d_ref as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, Layer};

    fn spec(p: f64, sigma: f64) -> PerturbSpec {
        PerturbSpec::new(p, sigma).unwrap()
    }

    fn spec_inf(sigma: f64) -> PerturbSpec {
        PerturbSpec::with_pnorm(PNorm::Inf, sigma).unwrap()
    }

    #[test]
    fn l2_case() {
        let e: Vec<f64> = worst_case_epsilon(&[3.0, 4.0], &spec(2.0, 1.0));
        assert!((e[0] - 0.6).abs() < 1e-12 && (e[1] - 0.8).abs() < 1e-12);
        let e = epsilon_l2(&[3.0, 4.0], 10.0);
        assert_eq!(e, vec![6.0, 8.0]);
    }

    #[test]
    fn zero_gradient_gives_zero() {
        for s in [spec(1.0, 1.0), spec(2.0, 1.0), spec(3.0, 1.0), spec_inf(1.0)] {
            assert_eq!(worst_case_epsilon(&[0.0, 0.0], &s), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn p3_closed_form_value() {
        // direct evaluation: |(1,2)|_{1.5}, then exponent 1/2
        let g = [1.0, 2.0];
        let e: Vec<f64> = worst_case_epsilon(&g, &spec(3.0, 1.0));
        let dual_norm = lp_norm(&g, PNorm::Finite(1.5));
        let want0 = (1.0 / dual_norm).sqrt();
        let want1 = (2.0 / dual_norm).sqrt();
        assert!((e[0] - want0).abs() < 1e-12);
        assert!((e[1] - want1).abs() < 1e-12);
        assert!((e[0] - 0.6392).abs() < 1e-4);
        assert!((e[1] - 0.9040).abs() < 1e-4);
        assert!((lp_norm(&e, PNorm::Finite(3.0)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sign_case() {
        assert_eq!(epsilon_sign(&[-2.0, 5.0, 0.0], 0.25), vec![-0.25, 0.25, 0.0]);
        assert_eq!(epsilon_sign(&[1.0, 2.0, 3.0], 0.5), vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn argmax_case() {
        assert_eq!(epsilon_argmax(&[1.0, -3.0, 2.0], 0.5), vec![0.0, -0.5, 0.0]);
        // tie: lowest index gets the budget
        assert_eq!(epsilon_argmax(&[2.0, 2.0], 1.0), vec![1.0, 0.0]);
        assert_eq!(epsilon_argmax(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
        let e: Vec<f64> = epsilon_argmax(&[1.0, -3.0, 2.0], 0.5);
        assert!((lp_norm(&e, PNorm::Finite(1.0)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn limit_consistency_large_p() {
        let g = [0.3, -1.2, 0.8, -0.05];
        // PNorm::new routes p = 1e7 to the infinity path
        let e: Vec<f64> = worst_case_epsilon(&g, &spec(1e7, 0.5));
        let s: Vec<f64> = epsilon_sign(&g, 0.5);
        for (a, b) in e.iter().zip(&s) {
            assert!((a - b).abs() < 1e-4);
        }
        // finite large p stays close to sign as well
        let e: Vec<f64> = worst_case_epsilon(&g, &spec(1e5, 0.5));
        for (a, b) in e.iter().zip(&s) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn limit_consistency_p_near_one() {
        let g = [0.3, -1.2, 0.8, -0.05]; // distinct magnitudes
        let e: Vec<f64> = worst_case_epsilon(&g, &spec(1.0 + 1e-6, 1.0));
        let a: Vec<f64> = epsilon_argmax(&g, 1.0);
        for (x, y) in e.iter().zip(&a) {
            assert!((x - y).abs() < 1e-3, "{x} vs {y}");
        }
    }

    #[test]
    fn regularizer_values() {
        assert!((regularizer_value::<f64>(&[3.0, 4.0], &spec(2.0, 2.0)) - 10.0).abs() < 1e-12);
        // p = inf: L1 dual
        assert!((regularizer_value::<f64>(&[1.0, -1.0, 1.0], &spec_inf(0.1)) - 0.3).abs() < 1e-12);
        // p = 1: Linf dual
        assert!((regularizer_value::<f64>(&[1.0, -1.0, 1.0], &spec(1.0, 1.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regularizer_equals_inner_product() {
        let mut rng = Rng::new(31);
        for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
            let s = if p.is_finite() { spec(p, 0.7) } else { spec_inf(0.7) };
            for _ in 0..20 {
                let g: Vec<f64> = (0..5).map(|_| rng.next_gaussian()).collect();
                let e = worst_case_epsilon(&g, &s);
                let lhs: f64 = g.iter().zip(&e).map(|(a, b)| a * b).sum();
                assert!((lhs - regularizer_value(&g, &s)).abs() < 1e-9, "p={p}");
            }
        }
    }

    #[test]
    fn holder_equality_l2() {
        let mut rng = Rng::new(8);
        for _ in 0..30 {
            let g: Vec<f64> = (0..6).map(|_| rng.next_gaussian()).collect();
            let e = epsilon_l2(&g, 0.4);
            let lhs: f64 = g.iter().zip(&e).map(|(a, b)| a * b).sum();
            let rhs = 0.4 * lp_norm(&g, PNorm::Finite(2.0));
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn l2_direction_parallel() {
        let e: Vec<f64> = epsilon_l2(&[3.0, 4.0], 2.0);
        // 2-D determinant vanishes for parallel vectors
        assert!((3.0 * e[1] - 4.0 * e[0]).abs() < 1e-12);
    }

    #[test]
    fn oracle_matches_closed_form() {
        let mut rng = Rng::new(4);
        for p in [1.0, 1.5, 2.0, 3.0] {
            for d in [2usize, 3, 5, 8] {
                let g: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
                let s = spec(p, 1.0);
                let closed = worst_case_epsilon(&g, &s);
                let oracle = oracle_epsilon(&g, &s, 200, &mut rng);
                let co: f64 = g.iter().zip(&closed).map(|(a, b)| a * b).sum();
                let oo: f64 = g.iter().zip(&oracle).map(|(a, b)| a * b).sum();
                assert!(oo <= co + 1e-9, "oracle beat closed form: p={p} d={d}");
                assert!(
                    (co - oo) / co.abs().max(1e-12) < 1e-6,
                    "p={p} d={d}: closed {co} vs oracle {oo}"
                );
            }
        }
    }

    #[test]
    fn oracle_inf_recovers_signs() {
        let mut rng = Rng::new(12);
        let g = [0.3, -0.7, 1.1];
        let e = oracle_epsilon(&g, &spec_inf(0.25), 50, &mut rng);
        assert_eq!(e, vec![0.25, -0.25, 0.25]);
    }

    #[test]
    fn budget_exactness() {
        let mut rng = Rng::new(77);
        for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
            let s = if p.is_finite() { spec(p, 0.9) } else { spec_inf(0.9) };
            for _ in 0..20 {
                let g: Vec<f64> = (0..7).map(|_| rng.next_gaussian()).collect();
                let e = worst_case_epsilon(&g, &s);
                assert!((lp_norm(&e, s.p) - 0.9).abs() < 1e-9, "p={p}");
            }
        }
    }

    #[test]
    fn scale_equivariance() {
        let mut rng = Rng::new(21);
        for p in [1.5, 2.0, 3.0] {
            let s = spec(p, 1.3);
            let g: Vec<f64> = (0..6).map(|_| rng.next_gaussian()).collect();
            let e1 = worst_case_epsilon(&g, &s);
            let scaled: Vec<f64> = g.iter().map(|v| v * 17.0).collect();
            let e2 = worst_case_epsilon(&scaled, &s);
            for (a, b) in e1.iter().zip(&e2) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dominance_over_random_ball_points() {
        let mut rng = Rng::new(55);
        for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
            let s = if p.is_finite() { spec(p, 1.0) } else { spec_inf(1.0) };
            let g: Vec<f64> = (0..5).map(|_| rng.next_gaussian()).collect();
            let e = worst_case_epsilon(&g, &s);
            let obj: f64 = g.iter().zip(&e).map(|(a, b)| a * b).sum();
            for _ in 0..100 {
                let u: Vec<f64> = (0..5).map(|_| rng.next_gaussian()).collect();
                let n = lp_norm(&u, s.p);
                if n == 0.0 {
                    continue;
                }
                let cand: f64 = g.iter().zip(&u).map(|(a, b)| a * b / n).sum();
                assert!(cand <= obj + 1e-9, "p={p}");
            }
        }
    }

    #[test]
    fn decomposition_sums_to_epsilon() {
        let model = MlpModel::new(&[6, 5, 3], &mut Rng::new(2));
        let mut rng = Rng::new(3);
        let x: Vec<f64> = (0..6).map(|_| rng.next_f64()).collect();
        let t = [0.0, 1.0, 0.0];
        let sigma = 0.8;
        let dec = decompose_perturbation(&model, &x, &t, sigma).unwrap();
        assert!(!dec.zero_gradient);
        let g = backprop(&model, &x, &t, 0.0).unwrap();
        let eps = epsilon_l2(&g.grad_input, sigma);
        for c in 0..6 {
            let sum: f64 = (0..3).map(|k| dec.components.get(k, c)).sum();
            assert!((sum - eps[c]).abs() < 1e-8, "col {c}");
        }
    }

    #[test]
    fn decomposition_softmax_rows_proportional_to_weights() {
        let w = Matrix::from_fn(3, 4, |r, c| 0.2 * (r as f64 + 1.0) * (c as f64 - 1.5));
        let model = MlpModel {
            layers: vec![Layer {
                weight: w.clone(),
                bias: vec![0.1, -0.2, 0.3],
                activation: Activation::Identity,
            }],
        };
        let x = [0.3, 0.9, 0.1, 0.5];
        let t = [1.0, 0.0, 0.0];
        let dec = decompose_perturbation(&model, &x, &t, 1.0).unwrap();
        let g = backprop(&model, &x, &t, 0.0).unwrap();
        let norm = lp_norm(&g.grad_input, PNorm::Finite(2.0));
        for k in 0..3 {
            let scalar = dec.residual[k] / norm;
            for c in 0..4 {
                assert!((dec.components.get(k, c) - scalar * w.get(k, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decomposition_confident_prediction_vanishes() {
        let model = MlpModel {
            layers: vec![Layer {
                weight: Matrix::from_vec(2, 2, vec![1.0, 0.5, -0.5, 0.2]).unwrap(),
                bias: vec![40.0, -40.0],
                activation: Activation::Identity,
            }],
        };
        let dec = decompose_perturbation(&model, &[0.5, 0.5], &[1.0, 0.0], 1.0).unwrap();
        // components are normalized by the (tiny) gradient norm, but the
        // residual itself collapses
        for r in &dec.residual {
            assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn sigma_scaling() {
        assert_eq!(scale_sigma_for_dim(1.0, 784, 784), 1.0);
        let s = scale_sigma_for_dim(1.0, 784, 3072);
        assert!((s - 1.979).abs() < 1e-3, "{s}");
        let doubled = scale_sigma_for_dim(0.4, 100, 200);
        assert!((doubled - 0.4 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spec_rejects_bad_parameters() {
        assert!(PerturbSpec::new(0.5, 1.0).is_err());
        assert!(PerturbSpec::new(2.0, 0.0).is_err());
        assert!(PerturbSpec::new(2.0, -1.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn grad_and_p() -> impl Strategy<Value = (Vec<f64>, f64, f64)> {
            (
                proptest::collection::vec(-5.0f64..5.0, 2..8),
                prop_oneof![Just(1.0), Just(1.5), Just(2.0), Just(3.0), Just(7.0)],
                0.05f64..2.0,
            )
        }

        proptest! {
            #[test]
            fn budget_is_exhausted((g, p, sigma) in grad_and_p()) {
                prop_assume!(g.iter().any(|v| v.abs() > 1e-6));
                let spec = PerturbSpec::new(p, sigma).unwrap();
                let e: Vec<f64> = worst_case_epsilon(&g, &spec);
                prop_assert!((lp_norm(&e, spec.p) - sigma).abs() < 1e-9);
            }

            #[test]
            fn dominates_random_feasible_points(
                (g, p, sigma) in grad_and_p(),
                dir in proptest::collection::vec(-1.0f64..1.0, 8),
            ) {
                prop_assume!(g.iter().any(|v| v.abs() > 1e-6));
                let spec = PerturbSpec::new(p, sigma).unwrap();
                let e: Vec<f64> = worst_case_epsilon(&g, &spec);
                let best: f64 = g.iter().zip(&e).map(|(a, b)| a * b).sum();
                // scale an arbitrary direction onto the budget sphere
                let dir = &dir[..g.len()];
                let norm = lp_norm(dir, spec.p);
                prop_assume!(norm > 1e-6);
                let other: f64 = g
                    .iter()
                    .zip(dir)
                    .map(|(a, b)| a * b * sigma / norm)
                    .sum();
                prop_assert!(other <= best + 1e-9 * best.abs().max(1.0));
            }

            #[test]
            fn epsilon_is_odd_in_the_gradient((g, p, sigma) in grad_and_p()) {
                let spec = PerturbSpec::new(p, sigma).unwrap();
                let e: Vec<f64> = worst_case_epsilon(&g, &spec);
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                let en: Vec<f64> = worst_case_epsilon(&neg, &spec);
                for (a, b) in e.iter().zip(&en) {
                    prop_assert!((a + b).abs() < 1e-12);
                }
            }
        }
    }
}
