//! Softmax regression and sigmoid MLPs: forward pass, cross-entropy loss
//! with optional L2 weight decay, backpropagation producing gradients
//! w.r.t. parameters and inputs, pre-softmax Jacobian, max-norm projection,
//! and the Gauss-Newton identity check for softmax cross-entropy.

use crate::error::{Error, Result};
use crate::num::Rng;
use crate::Matrix;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

/// Times the loss had to clamp a vanishing predicted probability. A nonzero
/// count after a long run signals saturation rather than aborting it.
static CLAMP_EVENTS: AtomicU64 = AtomicU64::new(0);

pub fn clamp_events() -> u64 {
    CLAMP_EVENTS.load(Ordering::Relaxed)
}

pub fn reset_clamp_events() {
    CLAMP_EVENTS.store(0, Ordering::Relaxed);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Identity,
}

/// One dense layer; `weight` is `out x in`, so the incoming weights of unit
/// `u` are `weight.row(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Feedforward classifier whose final layer output feeds a softmax head.
/// Zero hidden layers gives softmax regression.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
}

/// Everything the forward pass computed: `activations[0]` is the input,
/// `activations[i+1] = f(pre[i])`, `presoftmax = pre.last()`, `probs` the
/// softmax output.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub pre: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl ForwardTrace {
    pub fn presoftmax(&self) -> &[f64] {
        self.pre.last().expect("model has at least one layer")
    }
}

#[derive(Debug, Clone)]
pub struct GradBundle {
    pub loss: f64,
    pub grad_input: Vec<f64>,
    pub grad_weights: Vec<Matrix>,
    pub grad_biases: Vec<Vec<f64>>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Softmax with max-subtraction.
pub fn softmax(o: &[f64]) -> Vec<f64> {
    let m = o.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = o.iter().map(|&v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl MlpModel {
    /// Hidden layers are sigmoid, the final layer identity into softmax.
    /// Weights start uniform in `±sqrt(6/(fan_in+fan_out))`, biases at zero.
    pub fn new(dims: &[usize], rng: &mut Rng) -> MlpModel {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weight = Matrix::from_fn(fan_out, fan_in, |_, _| {
                bound * (2.0 * rng.next_f64() - 1.0)
            });
            let last = layers.len() == dims.len() - 2;
            layers.push(Layer {
                weight,
                bias: vec![0.0; fan_out],
                activation: if last {
                    Activation::Identity
                } else {
                    Activation::Sigmoid
                },
            });
        }
        MlpModel { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input length {} vs model input dim {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut activations = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut z = layer.weight.matvec(activations.last().unwrap());
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi += b;
            }
            let a = match layer.activation {
                Activation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
                Activation::Identity => z.clone(),
            };
            pre.push(z);
            activations.push(a);
        }
        let probs = softmax(pre.last().unwrap());
        Ok(ForwardTrace {
            pre,
            activations,
            probs,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?.probs))
    }

    /// Rescale any unit whose incoming-weight L2 norm exceeds `c` back to
    /// norm exactly `c`. Biases untouched. Idempotent.
    pub fn max_norm_project(&self, c: f64) -> MlpModel {
        let mut out = self.clone();
        out.max_norm_project_inplace(c);
        out
    }

    pub fn max_norm_project_inplace(&mut self, c: f64) {
        assert!(c > 0.0);
        for layer in &mut self.layers {
            for u in 0..layer.weight.rows() {
                let row = layer.weight.row_mut(u);
                let norm = row.iter().map(|w| w * w).sum::<f64>().sqrt();
                if norm > c {
                    let s = c / norm;
                    for w in row {
                        *w *= s;
                    }
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn one_hot_index(t: &[f64]) -> usize {
    argmax(t)
}

/// Cross-entropy `-log y_l` plus `λ Σ w²` over all weight matrices (decay
/// excludes biases). A vanishing `y_l` is clamped to 1e-300 and counted.
pub fn loss_xent(trace: &ForwardTrace, t: &[f64], model: &MlpModel, weight_decay: f64) -> f64 {
    let l = one_hot_index(t);
    let mut y_l = trace.probs[l];
    if y_l < 1e-300 {
        y_l = 1e-300;
        CLAMP_EVENTS.fetch_add(1, Ordering::Relaxed);
    }
    let decay: f64 = model.layers.iter().map(|la| la.weight.sq_sum()).sum();
    -y_l.ln() + weight_decay * decay
}

/// Gradients of the decayed cross-entropy w.r.t. all parameters and the
/// input, from one forward and one backward pass.
pub fn backprop(model: &MlpModel, x: &[f64], t: &[f64], weight_decay: f64) -> Result<GradBundle> {
    let trace = model.forward(x)?;
    if t.len() != model.output_dim() {
        return Err(Error::Shape(format!(
            "target length {} vs output dim {}",
            t.len(),
            model.output_dim()
        )));
    }
    let loss = loss_xent(&trace, t, model, weight_decay);

    // softmax-xent head: dL/do = y - t
    let delta: Vec<f64> = trace.probs.iter().zip(t).map(|(y, t)| y - t).collect();
    let (grad_input, grad_weights, grad_biases) =
        backprop_from_presoftmax(model, &trace, delta, weight_decay);
    Ok(GradBundle {
        loss,
        grad_input,
        grad_weights,
        grad_biases,
    })
}

/// Propagate a gradient seeded at the pre-softmax vector down to the input.
fn backprop_from_presoftmax(
    model: &MlpModel,
    trace: &ForwardTrace,
    mut delta: Vec<f64>,
    weight_decay: f64,
) -> (Vec<f64>, Vec<Matrix>, Vec<Vec<f64>>) {
    let n_layers = model.layers.len();
    let mut grad_weights = Vec::with_capacity(n_layers);
    let mut grad_biases = Vec::with_capacity(n_layers);
    let mut grad_input = Vec::new();
    for li in (0..n_layers).rev() {
        let layer = &model.layers[li];
        let input_act = &trace.activations[li];
        let mut gw = Matrix::zeros(layer.weight.rows(), layer.weight.cols());
        for r in 0..gw.rows() {
            let dr = delta[r];
            for (g, (&a, &w)) in gw
                .row_mut(r)
                .iter_mut()
                .zip(input_act.iter().zip(layer.weight.row(r)))
            {
                *g = dr * a + 2.0 * weight_decay * w;
            }
        }
        grad_weights.push(gw);
        grad_biases.push(delta.clone());

        let down = layer.weight.tr_matvec(&delta);
        if li == 0 {
            grad_input = down;
        } else {
            // chain through the previous layer's activation
            let prev_act = &trace.activations[li]; // = f(pre[li-1])
            delta = match model.layers[li - 1].activation {
                Activation::Sigmoid => down
                    .iter()
                    .zip(prev_act)
                    .map(|(&d, &s)| d * s * (1.0 - s))
                    .collect(),
                Activation::Identity => down,
            };
        }
    }
    grad_weights.reverse();
    grad_biases.reverse();
    (grad_input, grad_weights, grad_biases)
}

/// `K x d` Jacobian of the pre-softmax vector w.r.t. the input: one backward
/// pass per output unit.
pub fn presoftmax_jacobian(model: &MlpModel, x: &[f64]) -> Result<Matrix> {
    let trace = model.forward(x)?;
    let k = model.output_dim();
    let d = model.input_dim();
    let mut j = Matrix::zeros(k, d);
    for out in 0..k {
        let mut seed = vec![0.0; k];
        seed[out] = 1.0;
        let (gi, _, _) = backprop_from_presoftmax(model, &trace, seed, 0.0);
        j.row_mut(out).copy_from_slice(&gi);
    }
    Ok(j)
}

/// Max elementwise difference between `∇_y L ∇_y Lᵀ` and the analytic
/// Hessian of softmax cross-entropy w.r.t. `y` for a one-hot target at `l`.
/// Both matrices have a single entry `1/y_l²` at `(l,l)`, so the residual is
/// mathematically zero. Entries are scaled by `max(1, |hess|)` so a small
/// `y_l` (entry magnitude up to 1/y_l²) does not turn one-ulp rounding
/// differences into large absolute residuals.
pub fn gn_identity_residual(y: &[f64], l: usize) -> f64 {
    let k = y.len();
    let grad: Vec<f64> = (0..k).map(|i| if i == l { -1.0 / y[i] } else { 0.0 }).collect();
    let mut max_diff: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let outer = grad[i] * grad[j];
            let hess = if i == l && j == l { 1.0 / (y[i] * y[i]) } else { 0.0 };
            max_diff = max_diff.max((outer - hess).abs() / hess.abs().max(1.0));
        }
    }
    max_diff
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

// Flat file layout, all integers and floats little-endian:
//   magic  b"GRLM"
//   u32    version (1)
//   u32    layer count
//   per layer: u32 in_dim, u32 out_dim, u8 activation (0 sigmoid, 1 identity)
//   per layer: out_dim*in_dim f64 weights row-major, then out_dim f64 biases
const MODEL_MAGIC: &[u8; 4] = b"GRLM";
const MODEL_VERSION: u32 = 1;

impl MlpModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for layer in &self.layers {
            buf.extend_from_slice(&(layer.weight.cols() as u32).to_le_bytes());
            buf.extend_from_slice(&(layer.weight.rows() as u32).to_le_bytes());
            buf.push(match layer.activation {
                Activation::Sigmoid => 0,
                Activation::Identity => 1,
            });
        }
        for layer in &self.layers {
            for &w in layer.weight.data() {
                buf.extend_from_slice(&w.to_le_bytes());
            }
            for &b in &layer.bias {
                buf.extend_from_slice(&b.to_le_bytes());
            }
        }
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|source| Error::File {
            path: path.display().to_string(),
            source,
        })?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MlpModel> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| Error::File {
                path: name.clone(),
                source,
            })?;
        let fail = |msg: &str| Error::Config(format!("{name}: {msg}"));
        if bytes.len() < 12 || &bytes[0..4] != MODEL_MAGIC {
            return Err(fail("not a model file"));
        }
        let rd_u32 = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        if rd_u32(4) != MODEL_VERSION {
            return Err(fail("unsupported model version"));
        }
        let n_layers = rd_u32(8) as usize;
        let mut at = 12;
        let mut shapes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            if at + 9 > bytes.len() {
                return Err(fail("truncated header"));
            }
            let in_dim = rd_u32(at) as usize;
            let out_dim = rd_u32(at + 4) as usize;
            let act = match bytes[at + 8] {
                0 => Activation::Sigmoid,
                1 => Activation::Identity,
                _ => return Err(fail("unknown activation tag")),
            };
            shapes.push((in_dim, out_dim, act));
            at += 9;
        }
        let rd_f64 = |at: &mut usize| -> Result<f64> {
            if *at + 8 > bytes.len() {
                return Err(fail("truncated payload"));
            }
            let v = f64::from_le_bytes(bytes[*at..*at + 8].try_into().unwrap());
            *at += 8;
            Ok(v)
        };
        let mut layers = Vec::with_capacity(n_layers);
        for (in_dim, out_dim, act) in shapes {
            let mut data = Vec::with_capacity(in_dim * out_dim);
            for _ in 0..in_dim * out_dim {
                data.push(rd_f64(&mut at)?);
            }
            let mut bias = Vec::with_capacity(out_dim);
            for _ in 0..out_dim {
                bias.push(rd_f64(&mut at)?);
            }
            layers.push(Layer {
                weight: Matrix::from_vec(out_dim, in_dim, data)?,
                bias,
                activation: act,
            });
        }
        Ok(MlpModel { layers })
    }
}
