//! Command implementations behind the `gradreg` binary: `train`, `attack`,
//! and `robust`, all driven by a flat key=value config file. Every run
//! writes its fully resolved config beside the outputs so a run can be
//! reproduced from the artifacts alone.

use crate::data::{synthetic_blobs, Dataset};
use crate::error::{Error, Result};
use crate::model::{backprop, MlpModel};
use crate::num::{lp_norm, Rng};
use crate::perturb::{worst_case_epsilon, PerturbSpec};
use crate::robust::{
    linear_density_missrate, min_perturb_stats, noise_misclassification, predict_missrate,
    write_min_perturb_csv, NoiseModel,
};
use crate::train::{evaluate_error, fit, train_two_stage, write_metrics_csv, TrainConfig};
use crate::viz::{render_perturbation_panel, write_histogram_csv};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// All experiment knobs, parsed from a flat `key = value` file. Lines
/// starting with `#` and blank lines are skipped; unknown keys are errors.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// `synthetic` or `idx`.
    pub dataset: String,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Layer sizes, input first, e.g. `784,100,100,10`.
    pub layers: Vec<usize>,
    pub p: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub max_norm: Option<f64>,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// When > 0, train stage 1 on this many examples then continue on the
    /// full set until the held-out slice matches the stage-1 loss.
    pub two_stage_first: usize,
    /// Inject worst-case perturbations during training.
    pub inject: bool,
    pub noise_levels: Vec<f64>,
    pub noise_trials: usize,
    pub line_search_step: f64,
    pub line_search_max: f64,
    pub bin_width: f64,
    pub density_cutoff: f64,
    /// Examples rendered by `attack` and scanned by `robust` (0 = all).
    pub eval_limit: usize,
    pub attack_examples: usize,
    pub magnify: f64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: "synthetic".into(),
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            layers: vec![4, 3],
            p: f64::INFINITY,
            sigma: 0.1,
            lambda: 0.0,
            max_norm: None,
            lr: 0.5,
            momentum: 0.5,
            epochs: 10,
            batch: 100,
            seed: 42,
            two_stage_first: 0,
            inject: false,
            noise_levels: vec![0.0, 0.1, 0.3],
            noise_trials: 1,
            line_search_step: 0.02,
            line_search_max: 4.0,
            bin_width: 0.05,
            density_cutoff: 0.3,
            eval_limit: 0,
            attack_examples: 16,
            magnify: 2.0,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_list<T: std::str::FromStr>(v: &str, key: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("bad element {:?} in key {key}", s.trim())))
        })
        .collect()
}

fn parse_scalar<T: std::str::FromStr>(v: &str, key: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::Config(format!("bad value {v:?} for key {key}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {line:?}", lineno + 1))
            })?;
            let (key, v) = (key.trim(), value.trim());
            match key {
                "dataset" => cfg.dataset = v.to_string(),
                "train_images" => cfg.train_images = Some(PathBuf::from(v)),
                "train_labels" => cfg.train_labels = Some(PathBuf::from(v)),
                "test_images" => cfg.test_images = Some(PathBuf::from(v)),
                "test_labels" => cfg.test_labels = Some(PathBuf::from(v)),
                "layers" => cfg.layers = parse_list(v, key)?,
                "p" => {
                    cfg.p = if v.eq_ignore_ascii_case("inf") {
                        f64::INFINITY
                    } else {
                        parse_scalar(v, key)?
                    }
                }
                "sigma" => cfg.sigma = parse_scalar(v, key)?,
                "lambda" => cfg.lambda = parse_scalar(v, key)?,
                "max_norm" => cfg.max_norm = Some(parse_scalar(v, key)?),
                "lr" => cfg.lr = parse_scalar(v, key)?,
                "momentum" => cfg.momentum = parse_scalar(v, key)?,
                "epochs" => cfg.epochs = parse_scalar(v, key)?,
                "batch" => cfg.batch = parse_scalar(v, key)?,
                "seed" => cfg.seed = parse_scalar(v, key)?,
                "two_stage_first" => cfg.two_stage_first = parse_scalar(v, key)?,
                "inject" => cfg.inject = parse_scalar(v, key)?,
                "noise_levels" => cfg.noise_levels = parse_list(v, key)?,
                "noise_trials" => cfg.noise_trials = parse_scalar(v, key)?,
                "line_search_step" => cfg.line_search_step = parse_scalar(v, key)?,
                "line_search_max" => cfg.line_search_max = parse_scalar(v, key)?,
                "bin_width" => cfg.bin_width = parse_scalar(v, key)?,
                "density_cutoff" => cfg.density_cutoff = parse_scalar(v, key)?,
                "eval_limit" => cfg.eval_limit = parse_scalar(v, key)?,
                "attack_examples" => cfg.attack_examples = parse_scalar(v, key)?,
                "magnify" => cfg.magnify = parse_scalar(v, key)?,
                "out_dir" => cfg.out_dir = PathBuf::from(v),
                _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
            }
        }
        if cfg.layers.len() < 2 {
            return Err(Error::Config("layers needs at least input,output sizes".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::File {
            path: path.display().to_string(),
            source: e,
        })?;
        RunConfig::parse(&text)
    }

    /// The fully resolved config in a stable key order; parsing the echo
    /// back yields the same config.
    pub fn render(&self) -> String {
        let mut m: BTreeMap<&str, String> = BTreeMap::new();
        m.insert("dataset", self.dataset.clone());
        for (k, v) in [
            ("train_images", &self.train_images),
            ("train_labels", &self.train_labels),
            ("test_images", &self.test_images),
            ("test_labels", &self.test_labels),
        ] {
            if let Some(p) = v {
                m.insert(k, p.display().to_string());
            }
        }
        let join = |xs: &[String]| xs.join(",");
        m.insert(
            "layers",
            join(&self.layers.iter().map(|x| x.to_string()).collect::<Vec<_>>()),
        );
        m.insert(
            "p",
            if self.p.is_infinite() { "inf".into() } else { format!("{}", self.p) },
        );
        m.insert("sigma", format!("{}", self.sigma));
        m.insert("lambda", format!("{}", self.lambda));
        if let Some(c) = self.max_norm {
            m.insert("max_norm", format!("{c}"));
        }
        m.insert("lr", format!("{}", self.lr));
        m.insert("momentum", format!("{}", self.momentum));
        m.insert("epochs", format!("{}", self.epochs));
        m.insert("batch", format!("{}", self.batch));
        m.insert("seed", format!("{}", self.seed));
        m.insert("two_stage_first", format!("{}", self.two_stage_first));
        m.insert("inject", format!("{}", self.inject));
        m.insert(
            "noise_levels",
            join(&self.noise_levels.iter().map(|x| x.to_string()).collect::<Vec<_>>()),
        );
        m.insert("noise_trials", format!("{}", self.noise_trials));
        m.insert("line_search_step", format!("{}", self.line_search_step));
        m.insert("line_search_max", format!("{}", self.line_search_max));
        m.insert("bin_width", format!("{}", self.bin_width));
        m.insert("density_cutoff", format!("{}", self.density_cutoff));
        m.insert("eval_limit", format!("{}", self.eval_limit));
        m.insert("attack_examples", format!("{}", self.attack_examples));
        m.insert("magnify", format!("{}", self.magnify));
        m.insert("out_dir", self.out_dir.display().to_string());
        let mut out = String::new();
        for (k, v) in m {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    fn train_config(&self) -> Result<TrainConfig> {
        let spec = if self.inject {
            Some(PerturbSpec::new(self.p, self.sigma)?)
        } else {
            None
        };
        let cfg = TrainConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch,
            seed: self.seed,
            spec,
            weight_decay: self.lambda,
            max_norm: self.max_norm,
            momentum: self.momentum,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn load_split(&self) -> Result<(Dataset, Dataset)> {
        match self.dataset.as_str() {
            "synthetic" => {
                let d = self.layers[0];
                let k = *self.layers.last().unwrap();
                let mut rng = Rng::new(self.seed ^ 0x5943_7a1d);
                // one draw so train and test share the cluster centers
                let all = synthetic_blobs(&mut rng, 250, d, k, 0.05);
                all.split(200 * k)
            }
            "idx" => {
                let k = *self.layers.last().unwrap();
                let need = |o: &Option<PathBuf>, name: &str| {
                    o.clone()
                        .ok_or_else(|| Error::Config(format!("dataset=idx requires key {name}")))
                };
                let train = Dataset::from_idx(
                    need(&self.train_images, "train_images")?,
                    need(&self.train_labels, "train_labels")?,
                    k,
                )?;
                let test = Dataset::from_idx(
                    need(&self.test_images, "test_images")?,
                    need(&self.test_labels, "test_labels")?,
                    k,
                )?;
                Ok((train, test))
            }
            other => Err(Error::Config(format!(
                "dataset must be synthetic or idx, got {other:?}"
            ))),
        }
    }

    fn limited(&self, data: &Dataset) -> Dataset {
        if self.eval_limit > 0 && self.eval_limit < data.len() {
            data.head(self.eval_limit)
        } else {
            data.clone()
        }
    }
}

fn prepare_out_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::File {
        path: cfg.out_dir.display().to_string(),
        source: e,
    })?;
    std::fs::write(cfg.out_dir.join("resolved_config.txt"), cfg.render())?;
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    test_error: f64,
    final_train_loss: f64,
    epochs_run: usize,
    two_stage: bool,
    reached_target: Option<bool>,
}

/// Train per config, save `model.bin`, `metrics.csv`, `summary.json`.
pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    prepare_out_dir(cfg)?;
    let tc = cfg.train_config()?;
    let (train, test) = cfg.load_split()?;
    let model = MlpModel::new(&cfg.layers, &mut Rng::new(cfg.seed));
    let (model, records, two_stage, reached) = if cfg.two_stage_first > 0 {
        let outcome = train_two_stage(model, &train, cfg.two_stage_first, &tc)?;
        (outcome.model, Vec::new(), true, Some(outcome.reached_target))
    } else {
        let (m, r) = fit(model, &train, &test, &tc)?;
        (m, r, false, None)
    };
    model.save(cfg.out_dir.join("model.bin"))?;
    write_metrics_csv(&records, cfg.out_dir.join("metrics.csv"))?;
    let summary = TrainSummary {
        test_error: evaluate_error(&model, &test),
        final_train_loss: records.last().map(|r| r.train_loss).unwrap_or(f64::NAN),
        epochs_run: records.len(),
        two_stage,
        reached_target: reached,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(cfg.out_dir.join("summary.json"), json)?;
    println!("test_error = {:.4}", summary.test_error);
    Ok(())
}

/// Render the perturbation panel for the first `attack_examples` test
/// inputs and write a per-example CSV.
pub fn cmd_attack(cfg: &RunConfig, model_path: &Path) -> Result<()> {
    let spec = PerturbSpec::new(cfg.p, cfg.sigma)?;
    prepare_out_dir(cfg)?;
    let model = MlpModel::load(model_path)?;
    let (_, test) = cfg.load_split()?;
    let n = cfg.attack_examples.min(test.len());
    let d = model.input_dim();
    let side = (d as f64).sqrt() as usize;
    let (tile_w, tile_h) = if side * side == d { (side, side) } else { (d, 1) };
    let cols = (n as f64).sqrt().ceil().max(1.0) as usize;

    let targets: Vec<Vec<f64>> = (0..n).map(|i| test.target(i)).collect();
    let inputs: Vec<(&[f64], Vec<f64>)> = (0..n)
        .map(|i| (test.inputs.row(i), targets[i].clone()))
        .collect();
    render_perturbation_panel(&model, &inputs, &spec, tile_w, tile_h, cols, cfg.magnify, &cfg.out_dir)?;

    let mut csv = String::from("example,label,pred_clean,pred_perturbed,eps_norm\n");
    for i in 0..n {
        let x = test.inputs.row(i);
        let g = backprop(&model, x, &targets[i], 0.0)?;
        let eps = worst_case_epsilon(&g.grad_input, &spec);
        let xp: Vec<f64> = x.iter().zip(&eps).map(|(a, b)| a + b).collect();
        let clean = model.predict(x)?;
        let pert = model.predict(&xp)?;
        let norm = lp_norm(&eps, spec.p);
        writeln!(csv, "{i},{},{clean},{pert},{norm:.9}", test.labels[i]).unwrap();
    }
    std::fs::write(cfg.out_dir.join("attack.csv"), csv)?;
    Ok(())
}

#[derive(Serialize)]
struct NoiseLevelReport {
    sigma_noise: f64,
    actual_rate: f64,
    predicted_rate: f64,
}

#[derive(Serialize)]
struct RobustReport {
    p_miss_clean: f64,
    mu_a: f64,
    sigma_a: f64,
    resolved: usize,
    unresolved: usize,
    levels: Vec<NoiseLevelReport>,
    linear_density_extra: Option<f64>,
}

/// Measure actual noisy error and the model-based prediction per noise
/// level; write `risk_report.json`, `min_perturbation.csv`, `histogram.csv`.
pub fn cmd_robust(cfg: &RunConfig, model_path: &Path) -> Result<()> {
    prepare_out_dir(cfg)?;
    let model = MlpModel::load(model_path)?;
    let (_, test) = cfg.load_split()?;
    let eval = cfg.limited(&test);
    let p_miss = evaluate_error(&model, &eval);
    let stats = min_perturb_stats(&model, &eval, cfg.line_search_step, cfg.line_search_max, cfg.bin_width);
    write_min_perturb_csv(&stats, cfg.out_dir.join("min_perturbation.csv"))?;
    write_histogram_csv(&stats.counts, stats.bin_width, cfg.out_dir.join("histogram.csv"))?;

    let mut levels = Vec::new();
    for &sn in &cfg.noise_levels {
        let noise = NoiseModel::new(sn, eval.dim())?;
        let actual = if sn == 0.0 {
            p_miss
        } else {
            noise_misclassification(&model, &eval, &noise, cfg.noise_trials.max(1), &mut Rng::new(cfg.seed))
        };
        let predicted = predict_missrate(p_miss, &stats, &noise, 1);
        levels.push(NoiseLevelReport {
            sigma_noise: sn,
            actual_rate: actual,
            predicted_rate: predicted,
        });
    }
    let density = cfg
        .noise_levels
        .iter()
        .find(|&&sn| sn > 0.0)
        .and_then(|&sn| {
            let noise = NoiseModel::new(sn, eval.dim()).ok()?;
            linear_density_missrate(&stats, p_miss, &noise, cfg.density_cutoff).ok()
        });
    let report = RobustReport {
        p_miss_clean: p_miss,
        mu_a: stats.mu_a,
        sigma_a: stats.sigma_a,
        resolved: stats.samples.len(),
        unresolved: stats.unresolved,
        levels,
        linear_density_extra: density,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(cfg.out_dir.join("risk_report.json"), json)?;
    println!("p_miss_clean = {p_miss:.4}, mu_a = {:.4}, sigma_a = {:.4}", report.mu_a, report.sigma_a);
    Ok(())
}
