//! Mini-batch SGD with worst-case-perturbation injection: each example's
//! perturbation is recomputed from the current input gradient and treated as
//! a constant while the parameter gradient is taken at the perturbed input.
//! Includes the two-stage train-to-matching-loss protocol and plain
//! evaluation.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{argmax, backprop, loss_xent, MlpModel};
use crate::num::{lp_norm, PNorm, Rng};
use crate::perturb::{worst_case_epsilon, PerturbSpec};
use crate::Matrix;
use rayon::prelude::*;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// When set, training injects the worst-case perturbation per example;
    /// absent means plain SGD.
    pub spec: Option<PerturbSpec>,
    /// Coefficient on `‖w‖²` in the minibatch objective
    /// `Σ_{i∈B} L_i + λ‖w‖²`, so the per-example effective coefficient is
    /// `weight_decay / batch_size`.
    pub weight_decay: f64,
    /// Per-unit cap on the L2 norm of incoming weights, projected after
    /// every update.
    pub max_norm: Option<f64>,
    pub momentum: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter("momentum must be in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidParameter("weight_decay must be >= 0".into()));
        }
        Ok(())
    }

    /// Per-example decay coefficient implied by the minibatch objective.
    pub fn effective_decay(&self) -> f64 {
        self.weight_decay / self.batch_size as f64
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            epochs: 10,
            batch_size: 100,
            seed: 42,
            spec: None,
            weight_decay: 0.0,
            max_norm: None,
            momentum: 0.5,
        }
    }
}

/// Momentum buffers; persists across epochs.
#[derive(Debug, Clone)]
pub struct SgdState {
    vel_w: Vec<Matrix>,
    vel_b: Vec<Vec<f64>>,
    pub steps: usize,
}

impl SgdState {
    pub fn new(model: &MlpModel) -> SgdState {
        SgdState {
            vel_w: model
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.weight.rows(), l.weight.cols()))
                .collect(),
            vel_b: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
            steps: 0,
        }
    }
}

/// One pass over `data` in shuffled order. Per example: input gradient at
/// `x`, perturbation from it (held constant), parameter gradient at `x+ε`,
/// then a momentum step on the batch-averaged gradient followed by the
/// max-norm projection. Returns the mean post-perturbation loss.
pub fn sgd_epoch(
    model: &mut MlpModel,
    data: &Dataset,
    cfg: &TrainConfig,
    rng: &mut Rng,
    state: &mut SgdState,
) -> Result<f64> {
    cfg.validate()?;
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);

    let mut loss_sum = 0.0;
    for batch in order.chunks(cfg.batch_size) {
        let mut acc_w: Vec<Matrix> = model
            .layers
            .iter()
            .map(|l| Matrix::zeros(l.weight.rows(), l.weight.cols()))
            .collect();
        let mut acc_b: Vec<Vec<f64>> =
            model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect();

        for &i in batch {
            let x = data.inputs.row(i);
            let t = data.target(i);
            let bundle = match &cfg.spec {
                Some(spec) => {
                    // perturbation from the undecayed loss; decay is
                    // x-independent so its input gradient is zero anyway
                    let clean = backprop(model, x, &t, 0.0)?;
                    let eps = worst_case_epsilon(&clean.grad_input, spec);
                    let xp: Vec<f64> = x.iter().zip(&eps).map(|(a, b)| a + b).collect();
                    backprop(model, &xp, &t, cfg.effective_decay())?
                }
                None => backprop(model, x, &t, cfg.effective_decay())?,
            };
            if !bundle.loss.is_finite() {
                return Err(Error::Diverged { step: state.steps });
            }
            loss_sum += bundle.loss;
            for (acc, g) in acc_w.iter_mut().zip(&bundle.grad_weights) {
                for (a, &v) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += v;
                }
            }
            for (acc, g) in acc_b.iter_mut().zip(&bundle.grad_biases) {
                for (a, &v) in acc.iter_mut().zip(g) {
                    *a += v;
                }
            }
        }

        let scale = cfg.learning_rate / batch.len() as f64;
        for li in 0..model.layers.len() {
            for (v, &g) in state.vel_w[li].data_mut().iter_mut().zip(acc_w[li].data()) {
                *v = cfg.momentum * *v - scale * g;
            }
            for (w, &v) in model.layers[li]
                .weight
                .data_mut()
                .iter_mut()
                .zip(state.vel_w[li].data())
            {
                *w += v;
            }
            for (v, &g) in state.vel_b[li].iter_mut().zip(&acc_b[li]) {
                *v = cfg.momentum * *v - scale * g;
            }
            for (b, &v) in model.layers[li].bias.iter_mut().zip(&state.vel_b[li]) {
                *b += v;
            }
        }
        if let Some(c) = cfg.max_norm {
            model.max_norm_project_inplace(c);
        }
        state.steps += 1;
        if !model.is_finite() {
            return Err(Error::Diverged { step: state.steps });
        }
    }
    Ok(loss_sum / n as f64)
}

/// Per-epoch training metrics; serialized as one CSV row each.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_error: f64,
    pub mean_input_grad_norm: f64,
}

pub fn write_metrics_csv(records: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_error,mean_input_grad_norm\n");
    for r in records {
        out.push_str(&format!(
            "{},{:.12},{:.12},{:.12}\n",
            r.epoch, r.train_loss, r.val_error, r.mean_input_grad_norm
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Mean `‖∇_x L‖₂` over a dataset at the current parameters (decay-free).
pub fn mean_input_grad_norm(model: &MlpModel, data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let norms: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let g = backprop(model, data.inputs.row(i), &data.target(i), 0.0)
                .expect("shapes validated");
            lp_norm(&g.grad_input, PNorm::Finite(2.0))
        })
        .collect();
    norms.iter().sum::<f64>() / norms.len() as f64
}

/// Mean per-example loss (with decay) at fixed parameters.
pub fn mean_loss(model: &MlpModel, data: &Dataset, weight_decay: f64) -> f64 {
    let losses: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let tr = model.forward(data.inputs.row(i)).expect("shapes validated");
            loss_xent(&tr, &data.target(i), model, weight_decay)
        })
        .collect();
    losses.iter().sum::<f64>() / data.len().max(1) as f64
}

/// Train for `cfg.epochs` epochs, recording per-epoch metrics on `val`.
pub fn fit(
    mut model: MlpModel,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<(MlpModel, Vec<EpochRecord>)> {
    let mut rng = Rng::new(cfg.seed);
    let mut state = SgdState::new(&model);
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let train_loss = sgd_epoch(&mut model, train, cfg, &mut rng, &mut state)?;
        records.push(EpochRecord {
            epoch,
            train_loss,
            val_error: evaluate_error(&model, val),
            mean_input_grad_norm: mean_input_grad_norm(&model, val),
        });
    }
    Ok((model, records))
}

#[derive(Debug)]
pub struct TwoStageOutcome {
    pub model: MlpModel,
    /// Whether stage 2 stopped because the held-out slice reached the
    /// stage-1 loss (as opposed to the epoch cap firing).
    pub reached_target: bool,
    pub stage1_loss: f64,
    pub stage2_epochs: usize,
}

/// Train on the first `n_first` examples for `cfg.epochs`, record the final
/// training loss, then train on the full set until the held-out slice
/// (`n_first..N`) reaches that loss, capped at `2 * cfg.epochs`. Stage 2
/// reuses stage 1's learning rate and checks the stop condition once per
/// epoch.
pub fn train_two_stage(
    model: MlpModel,
    full: &Dataset,
    n_first: usize,
    cfg: &TrainConfig,
) -> Result<TwoStageOutcome> {
    if n_first >= full.len() {
        return Err(Error::InvalidParameter(format!(
            "two-stage split {n_first} leaves no held-out slice in {} examples",
            full.len()
        )));
    }
    let (first, held_out) = full.split(n_first)?;

    let mut model = model;
    let mut rng = Rng::new(cfg.seed);
    let mut state = SgdState::new(&model);
    let mut stage1_loss = f64::INFINITY;
    for _ in 0..cfg.epochs {
        stage1_loss = sgd_epoch(&mut model, &first, cfg, &mut rng, &mut state)?;
    }

    let cap = 2 * cfg.epochs;
    let mut rng2 = Rng::new(cfg.seed.wrapping_add(1));
    let mut state2 = SgdState::new(&model);
    let mut reached_target = false;
    let mut stage2_epochs = 0;
    for _ in 0..cap {
        sgd_epoch(&mut model, full, cfg, &mut rng2, &mut state2)?;
        stage2_epochs += 1;
        if mean_loss(&model, &held_out, cfg.effective_decay()) <= stage1_loss {
            reached_target = true;
            break;
        }
    }
    Ok(TwoStageOutcome {
        model,
        reached_target,
        stage1_loss,
        stage2_epochs,
    })
}

/// Fraction of rows where `argmax y` differs from the label; ties break to
/// the lowest index.
pub fn evaluate_error(model: &MlpModel, data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let wrong: usize = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let tr = model.forward(data.inputs.row(i)).expect("shapes validated");
            usize::from(argmax(&tr.probs) != data.labels[i])
        })
        .sum();
    wrong as f64 / data.len() as f64
}
