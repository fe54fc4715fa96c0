//! Gaussian-noise misclassification measurement and the probabilistic model
//! relating it to minimum-perturbation statistics: gradient-direction line
//! search, Gaussian fitting of the minimum perturbation lengths, the
//! predicted missrate formula, the union bound over adversarial directions,
//! the near-zero linear-density estimator, and a Monte-Carlo cross-check.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{argmax, backprop, MlpModel};
use crate::num::{gaussian_cdf, lp_norm, PNorm, Rng};
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

/// Isotropic Gaussian input noise `N(0, sigma_noise^2 I_d)`.
#[derive(Debug, Clone, Copy)]
pub struct NoiseModel {
    pub sigma_noise: f64,
    pub d: usize,
}

impl NoiseModel {
    pub fn new(sigma_noise: f64, d: usize) -> Result<NoiseModel> {
        if sigma_noise < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sigma_noise = {sigma_noise} must be non-negative"
            )));
        }
        Ok(NoiseModel { sigma_noise, d })
    }
}

/// Minimum-perturbation lengths over correctly classified examples with
/// their fitted Gaussian moments and histogram.
#[derive(Debug, Clone)]
pub struct MinPerturbStats {
    pub samples: Vec<f64>,
    pub mu_a: f64,
    pub sigma_a: f64,
    pub bin_width: f64,
    /// Histogram counts, bins starting at 0.
    pub counts: Vec<u64>,
    /// Correctly classified examples whose prediction never flipped within
    /// the scan range, or whose gradient vanished.
    pub unresolved: usize,
}

impl MinPerturbStats {
    /// Fit moments and histogram from raw samples.
    pub fn from_samples(samples: Vec<f64>, bin_width: f64, unresolved: usize) -> MinPerturbStats {
        assert!(bin_width > 0.0);
        let n = samples.len();
        let mu_a = if n == 0 {
            0.0
        } else {
            samples.iter().sum::<f64>() / n as f64
        };
        let sigma_a = if n == 0 {
            0.0
        } else {
            (samples.iter().map(|a| (a - mu_a).powi(2)).sum::<f64>() / n as f64).sqrt()
        };
        let n_bins = samples
            .iter()
            .map(|a| (a / bin_width).floor() as usize + 1)
            .max()
            .unwrap_or(0);
        let mut counts = vec![0u64; n_bins];
        for a in &samples {
            let b = ((a / bin_width).floor() as usize).min(n_bins.saturating_sub(1));
            counts[b] += 1;
        }
        MinPerturbStats {
            samples,
            mu_a,
            sigma_a,
            bin_width,
            counts,
            unresolved,
        }
    }
}

/// Actual-versus-predicted misclassification at one noise level.
#[derive(Debug, Clone, Serialize)]
pub struct RiskReport {
    pub p_miss_clean: f64,
    pub predicted_rate: f64,
    pub actual_rate: f64,
    pub n_directions: usize,
}

/// Mean error over `trials` independent Gaussian corruptions `x + η`
/// (raw noise, no clamping). Per-example substreams keyed on
/// `(seed, trial, example)` make parallel and serial runs identical.
pub fn noise_misclassification(
    model: &MlpModel,
    data: &Dataset,
    noise: &NoiseModel,
    trials: usize,
    rng: &mut Rng,
) -> f64 {
    assert!(trials >= 1);
    if data.is_empty() {
        return 0.0;
    }
    let base = rng.next_u64();
    let n = data.len();
    let wrong: usize = (0..trials * n)
        .into_par_iter()
        .map(|idx| {
            let i = idx % n;
            let mut sub = Rng::substream(base, idx as u64);
            let x: Vec<f64> = data
                .inputs
                .row(i)
                .iter()
                .map(|&v| v + noise.sigma_noise * sub.next_gaussian())
                .collect();
            let tr = model.forward(&x).expect("shapes validated");
            usize::from(argmax(&tr.probs) != data.labels[i])
        })
        .sum();
    wrong as f64 / (trials * n) as f64
}

/// Smallest `t` on the grid `step, 2 step, … ≤ t_max` such that moving
/// `x + t e` along the unit gradient direction `e = ∇_x L/‖∇_x L‖₂` flips a
/// correct prediction. Returns `None` for misclassified inputs, vanishing
/// gradients, and scans that never flip. The direction is computed once at
/// `x` and held fixed.
pub fn min_perturbation_line_search(
    model: &MlpModel,
    x: &[f64],
    t: &[f64],
    step: f64,
    t_max: f64,
) -> Option<f64> {
    let label = argmax(t);
    let trace = model.forward(x).ok()?;
    if argmax(&trace.probs) != label {
        return None;
    }
    let g = backprop(model, x, t, 0.0).ok()?;
    let norm = lp_norm(&g.grad_input, PNorm::Finite(2.0));
    if norm == 0.0 {
        return None;
    }
    let e: Vec<f64> = g.grad_input.iter().map(|v| v / norm).collect();
    let mut k = 1usize;
    loop {
        let dist = k as f64 * step;
        if dist > t_max + 1e-12 {
            return None;
        }
        let xp: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a + dist * b).collect();
        let tr = model.forward(&xp).ok()?;
        if argmax(&tr.probs) != label {
            return Some(dist);
        }
        k += 1;
    }
}

/// Line-search over all correctly classified examples; moments by sample
/// statistics, histogram with bins starting at 0.
pub fn min_perturb_stats(
    model: &MlpModel,
    data: &Dataset,
    step: f64,
    t_max: f64,
    bin_width: f64,
) -> MinPerturbStats {
    let results: Vec<Option<Option<f64>>> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let x = data.inputs.row(i);
            let t = data.target(i);
            let tr = model.forward(x).expect("shapes validated");
            if argmax(&tr.probs) != data.labels[i] {
                return None; // misclassified: excluded entirely
            }
            Some(min_perturbation_line_search(model, x, &t, step, t_max))
        })
        .collect();
    let mut samples = Vec::new();
    let mut unresolved = 0usize;
    for r in results {
        match r {
            Some(Some(a)) => samples.push(a),
            Some(None) => unresolved += 1,
            None => {}
        }
    }
    MinPerturbStats::from_samples(samples, bin_width, unresolved)
}

/// `P(miss) + (1 - P(miss)) · min(1, n·P(δ ≥ 0))` with
/// `δ ~ N(-μ_a, σ_noise² + σ_a²)`, clamped to `[0, 1]`.
pub fn predict_missrate(
    p_miss: f64,
    stats: &MinPerturbStats,
    noise: &NoiseModel,
    n: usize,
) -> f64 {
    assert!(n >= 1);
    let var = noise.sigma_noise.powi(2) + stats.sigma_a.powi(2);
    let p_delta = if var == 0.0 {
        if stats.mu_a > 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        gaussian_cdf(-stats.mu_a / var.sqrt())
    };
    (p_miss + (1.0 - p_miss) * (n as f64 * p_delta).min(1.0)).clamp(0.0, 1.0)
}

/// Union bound over `n` adversarial directions: `min(1, n · per_direction)`.
pub fn adversarial_bound(n: usize, per_direction: f64) -> f64 {
    (n as f64 * per_direction).min(1.0)
}

/// Additional misclassification from small noise under a linear density
/// assumption near zero: fit `f(a) = c·a` on `[0, cutoff]` by least squares
/// over histogram bin mass, then integrate
/// `(1 - p_miss) ∫₀^cutoff c·a·(1 - Φ(a/σ_noise)) da` by Simpson quadrature.
pub fn linear_density_missrate(
    stats: &MinPerturbStats,
    p_miss: f64,
    noise: &NoiseModel,
    cutoff: f64,
) -> Result<f64> {
    let total = stats.samples.len();
    let n_bins = (cutoff / stats.bin_width).round() as usize;
    if total == 0 || n_bins == 0 || stats.counts.iter().take(n_bins).all(|&c| c == 0) {
        return Err(Error::EstimatorUndefined(format!(
            "no histogram mass in [0, {cutoff}]"
        )));
    }
    // model bin mass: integral of c*a over the bin
    let mut num = 0.0;
    let mut den = 0.0;
    for b in 0..n_bins.min(stats.counts.len()) {
        let lo = b as f64 * stats.bin_width;
        let hi = lo + stats.bin_width;
        let basis = (hi * hi - lo * lo) / 2.0;
        let mass = stats.counts[b] as f64 / total as f64;
        num += basis * mass;
        den += basis * basis;
    }
    let c = num / den;

    if noise.sigma_noise == 0.0 {
        return Ok(0.0); // 1 - Φ(a/0) vanishes for a > 0
    }
    // Simpson with 2000 intervals (>= 1000 nodes)
    let n = 2000usize;
    let h = cutoff / n as f64;
    let f = |a: f64| c * a * (1.0 - gaussian_cdf(a / noise.sigma_noise));
    let mut s = f(0.0) + f(cutoff);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let integral = s * h / 3.0;
    Ok((1.0 - p_miss) * integral)
}

/// Simulation cross-check for [`predict_missrate`] with `n = 1`: draw
/// `a ~ N(μ_a, σ_a²)` and `η₀ ~ N(0, σ_noise²)`, count `η₀ ≥ a`.
pub fn monte_carlo_missrate(
    p_miss: f64,
    stats: &MinPerturbStats,
    noise: &NoiseModel,
    trials: usize,
    rng: &mut Rng,
) -> f64 {
    assert!(trials >= 10_000);
    let mut hits = 0usize;
    for _ in 0..trials {
        let a = stats.mu_a + stats.sigma_a * rng.next_gaussian();
        let eta = noise.sigma_noise * rng.next_gaussian();
        if eta >= a {
            hits += 1;
        }
    }
    let p_delta = hits as f64 / trials as f64;
    (p_miss + (1.0 - p_miss) * p_delta).clamp(0.0, 1.0)
}

/// Per-example minimum perturbation CSV (one `example,min_perturbation`
/// row per resolved sample).
pub fn write_min_perturb_csv(stats: &MinPerturbStats, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("sample,min_perturbation\n");
    for (i, a) in stats.samples.iter().enumerate() {
        out.push_str(&format!("{i},{a:.6}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}
