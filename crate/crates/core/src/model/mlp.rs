//! Dense feed-forward network with rectifier hidden units and a logistic
//! output, trained on binary cross-entropy.
//!
//! Parameters live in one flat vector, layer by layer, each layer storing
//! its `outputs × inputs` weights row-major followed by its biases. The
//! optimizers and the finite-difference check operate on that vector.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::linalg::Matrix;
use crate::num::Real;
use crate::rng;
use crate::tabular::EncodedMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
    /// Plain gradient descent.
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    /// Empty means logistic regression.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    /// Centre and scale every input column on the training rows; the
    /// transform is stored with the model and applied at prediction time.
    #[serde(default = "default_standardize")]
    pub standardize: bool,
}

fn default_hidden() -> Vec<usize> {
    vec![64]
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    32
}
fn default_epochs() -> usize {
    200
}
fn default_patience() -> usize {
    20
}
fn default_standardize() -> bool {
    true
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            activation: Activation::Relu,
            optimizer: Optimizer::Adam,
            learning_rate: default_lr(),
            batch_size: default_batch(),
            max_epochs: default_epochs(),
            patience: default_patience(),
            seed: 0,
            standardize: true,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden.contains(&0) {
            return Err(ModelError::InvalidConfig("hidden layer sizes must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidConfig("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch size must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T: Real = f64> {
    pub input_columns: Vec<String>,
    /// Layer widths from input to the single output unit.
    pub sizes: Vec<usize>,
    pub params: Vec<T>,
    /// Per-column input centre and scale; empty means raw inputs.
    pub input_shift: Vec<T>,
    pub input_scale: Vec<T>,
}

fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

fn clamp_eps<T: Real>() -> T {
    T::of(1e-12).max(T::epsilon())
}

/// Mean binary cross-entropy. The log arguments are floored at `1e-12`
/// (or machine epsilon, whichever is larger) so a confidently wrong
/// prediction stays finite; a perfect prediction costs exactly 0.
pub fn bce_loss<T: Real>(y: &[T], p: &[T]) -> T {
    let eps = clamp_eps::<T>();
    let n = T::from_usize(y.len().max(1)).unwrap();
    let s: T = y
        .iter()
        .zip(p)
        .map(|(&yi, &pi)| {
            let ln_p = pi.max(eps).ln();
            let ln_q = (T::one() - pi).max(eps).ln();
            if yi == T::one() {
                ln_p
            } else if yi == T::zero() {
                ln_q
            } else {
                yi * ln_p + (T::one() - yi) * ln_q
            }
        })
        .sum();
    -s / n
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    input_columns: Vec<String>,
    activation: Activation,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    input_shift: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    input_scale: Vec<f64>,
    layers: Vec<LayerFile>,
}

impl<T: Real> MlpModel<T> {
    /// Randomly initialized network: He-normal weights for rectifier layers,
    /// Glorot-normal for the output layer, zero biases.
    pub fn init(input_columns: Vec<String>, hidden: &[usize], seed: u64) -> Self {
        let mut sizes = vec![input_columns.len()];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut rng = rng::rng_from(seed, &[0]);
        let mut params = Vec::new();
        let n_layers = sizes.len() - 1;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let gain = if l + 1 < n_layers { 2.0 } else { 1.0 };
            let sd = (gain / fan_in.max(1) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let z: f64 = rng.sample(StandardNormal);
                params.push(T::of(z * sd));
            }
            params.extend(std::iter::repeat_n(T::zero(), fan_out));
        }
        Self { input_columns, sizes, params, input_shift: Vec::new(), input_scale: Vec::new() }
    }

    /// Applies the stored input transform.
    fn prepare<'a>(&self, x: &'a [T]) -> std::borrow::Cow<'a, [T]> {
        if self.input_shift.is_empty() {
            std::borrow::Cow::Borrowed(x)
        } else {
            let z = x.iter().zip(&self.input_shift).zip(&self.input_scale).map(|((&v, &m), &s)| (v - m) / s);
            std::borrow::Cow::Owned(z.collect())
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    fn layer_offsets(&self) -> Vec<(usize, usize, usize)> {
        let mut off = 0;
        (0..self.sizes.len() - 1)
            .map(|l| {
                let (i, o) = (self.sizes[l], self.sizes[l + 1]);
                let start = off;
                off += i * o + o;
                (start, i, o)
            })
            .collect()
    }

    /// Weight matrix and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (Matrix<T>, Vec<T>) {
        let (start, i, o) = self.layer_offsets()[l];
        let w = Matrix::from_vec(o, i, self.params[start..start + i * o].to_vec());
        let b = self.params[start + i * o..start + i * o + o].to_vec();
        (w, b)
    }

    /// Forward pass for one row, returning every layer's activations
    /// (input first, output probability last).
    fn forward(&self, x: &[T], offsets: &[(usize, usize, usize)]) -> Vec<Vec<T>> {
        let mut acts = vec![x.to_vec()];
        let last = offsets.len() - 1;
        for (l, &(start, ni, no)) in offsets.iter().enumerate() {
            let a = &acts[l];
            let w = &self.params[start..start + ni * no];
            let b = &self.params[start + ni * no..start + ni * no + no];
            let out: Vec<T> = (0..no)
                .map(|j| {
                    let z = w[j * ni..(j + 1) * ni].iter().zip(a).fold(b[j], |s, (&wi, &ai)| s + wi * ai);
                    if l == last {
                        sigmoid(z)
                    } else {
                        z.max(T::zero())
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    pub fn predict_row(&self, x: &[T]) -> T {
        let offsets = self.layer_offsets();
        self.forward(&self.prepare(x), &offsets).last().unwrap()[0]
    }

    /// Loss and gradient of mean BCE over `rows` of `x`.
    fn loss_and_grad(&self, x: &Matrix<T>, y: &[T], rows: &[usize]) -> (T, Vec<T>) {
        let offsets = self.layer_offsets();
        let mut grad = vec![T::zero(); self.params.len()];
        let n = T::from_usize(rows.len()).unwrap();
        let mut preds = Vec::with_capacity(rows.len());
        let mut targets = Vec::with_capacity(rows.len());
        for &r in rows {
            let acts = self.forward(x.row(r), &offsets);
            let p = acts.last().unwrap()[0];
            preds.push(p);
            targets.push(y[r]);
            // d loss / d z at the logistic output
            let mut delta = vec![(p - y[r]) / n];
            for l in (0..offsets.len()).rev() {
                let (start, ni, no) = offsets[l];
                let a = &acts[l];
                for j in 0..no {
                    let d = delta[j];
                    if d == T::zero() {
                        continue;
                    }
                    let row = &mut grad[start + j * ni..start + (j + 1) * ni];
                    row.iter_mut().zip(a).for_each(|(g, &ai)| *g = *g + d * ai);
                    grad[start + ni * no + j] = grad[start + ni * no + j] + d;
                }
                if l > 0 {
                    let w = &self.params[start..start + ni * no];
                    delta = (0..ni)
                        .map(|i| {
                            if a[i] > T::zero() {
                                (0..no).fold(T::zero(), |s, j| s + w[j * ni + i] * delta[j])
                            } else {
                                T::zero()
                            }
                        })
                        .collect();
                }
            }
        }
        (bce_loss(&targets, &preds), grad)
    }

    fn loss(&self, x: &Matrix<T>, y: &[T], rows: &[usize]) -> T {
        let offsets = self.layer_offsets();
        let preds: Vec<T> = rows.iter().map(|&r| self.forward(x.row(r), &offsets).last().unwrap()[0]).collect();
        let targets: Vec<T> = rows.iter().map(|&r| y[r]).collect();
        bce_loss(&targets, &preds)
    }

    /// Versioned JSON: layer shapes, row-major weights and column names.
    pub fn to_json(&self) -> String {
        let layers = (0..self.sizes.len() - 1)
            .map(|l| {
                let (w, b) = self.layer(l);
                LayerFile {
                    inputs: w.cols(),
                    outputs: w.rows(),
                    weights: w.as_slice().iter().map(|v| v.f64()).collect(),
                    bias: b.iter().map(|v| v.f64()).collect(),
                }
            })
            .collect();
        let file = ModelFile {
            format_version: 1,
            input_columns: self.input_columns.clone(),
            activation: Activation::Relu,
            input_shift: self.input_shift.iter().map(|v| v.f64()).collect(),
            input_scale: self.input_scale.iter().map(|v| v.f64()).collect(),
            layers,
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Serde(e.to_string()))?;
        if file.format_version != 1 {
            return Err(ModelError::Serde(format!("unsupported format version {}", file.format_version)));
        }
        let mut sizes = vec![file.input_columns.len()];
        let mut params = Vec::new();
        for (l, layer) in file.layers.iter().enumerate() {
            if layer.inputs != *sizes.last().unwrap()
                || layer.weights.len() != layer.inputs * layer.outputs
                || layer.bias.len() != layer.outputs
            {
                return Err(ModelError::Serde(format!("layer {l} has inconsistent shapes")));
            }
            sizes.push(layer.outputs);
            params.extend(layer.weights.iter().chain(&layer.bias).map(|&v| T::of(v)));
        }
        if sizes.len() < 2 || *sizes.last().unwrap() != 1 {
            return Err(ModelError::Serde("the last layer must have one output".into()));
        }
        let n = file.input_columns.len();
        let transform_ok = (file.input_shift.is_empty() && file.input_scale.is_empty())
            || (file.input_shift.len() == n && file.input_scale.len() == n && file.input_scale.iter().all(|&s| s > 0.0));
        if !transform_ok {
            return Err(ModelError::Serde("input transform does not match the input columns".into()));
        }
        Ok(Self {
            input_columns: file.input_columns,
            sizes,
            params,
            input_shift: file.input_shift.into_iter().map(T::of).collect(),
            input_scale: file.input_scale.into_iter().map(T::of).collect(),
        })
    }
}

/// Probability of default per row; columns must match the model's inputs.
pub fn predict_proba<T: Real>(model: &MlpModel<T>, x: &EncodedMatrix<T>) -> Result<Vec<T>, ModelError> {
    if x.columns != model.input_columns {
        return Err(ModelError::ColumnMismatch(format!(
            "model expects {} columns, input has {} (or differently named/ordered)",
            model.input_columns.len(),
            x.columns.len()
        )));
    }
    let offsets = model.layer_offsets();
    Ok((0..x.data.rows()).map(|r| model.forward(&model.prepare(x.data.row(r)), &offsets).last().unwrap()[0]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for (i, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            s.push_str(&format!("{},{t},{v}\n", i + 1));
        }
        s
    }
}

fn check_xy<T: Real>(x: &Matrix<T>, y: &[T]) -> Result<(), ModelError> {
    if x.rows() != y.len() {
        return Err(ModelError::Shape(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    Ok(())
}

/// Column means and population standard deviations; constant columns get
/// scale one.
fn column_moments<T: Real>(x: &Matrix<T>) -> (Vec<T>, Vec<T>) {
    let n = T::of(x.rows().max(1) as f64);
    (0..x.cols())
        .map(|c| {
            let col = x.column(c);
            let mean = col.iter().fold(T::zero(), |a, &v| a + v) / n;
            let var = col.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
            let sd = var.sqrt();
            (mean, if sd > T::of(1e-12) { sd } else { T::one() })
        })
        .unzip()
}

fn apply_transform<T: Real>(x: &Matrix<T>, shift: &[T], scale: &[T]) -> Matrix<T> {
    let mut out = x.clone();
    for r in 0..out.rows() {
        for (v, (&m, &s)) in out.row_mut(r).iter_mut().zip(shift.iter().zip(scale)) {
            *v = (*v - m) / s;
        }
    }
    out
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

/// Trains with mini-batch updates and keeps the parameters of the epoch
/// with the lowest validation loss. An empty validation set falls back to
/// the training loss. Deterministic for a given seed.
pub fn train<T: Real>(
    x_train: &EncodedMatrix<T>,
    y_train: &[T],
    x_val: &EncodedMatrix<T>,
    y_val: &[T],
    config: &MlpConfig,
) -> Result<(MlpModel<T>, TrainReport), ModelError> {
    config.validate()?;
    check_xy(&x_train.data, y_train)?;
    check_xy(&x_val.data, y_val)?;
    if x_val.columns != x_train.columns {
        return Err(ModelError::ColumnMismatch("validation columns differ from training columns".into()));
    }
    let has_pos = y_train.iter().any(|&v| v == T::one());
    let has_neg = y_train.iter().any(|&v| v == T::zero());
    if !(has_pos && has_neg) {
        return Err(ModelError::SingleClassTrain);
    }

    let mut model = MlpModel::<T>::init(x_train.columns.clone(), &config.hidden, config.seed);
    let scaled;
    let (xt, xv) = if config.standardize {
        let (shift, scale) = column_moments(&x_train.data);
        scaled = (apply_transform(&x_train.data, &shift, &scale), apply_transform(&x_val.data, &shift, &scale));
        model.input_shift = shift;
        model.input_scale = scale;
        (&scaled.0, &scaled.1)
    } else {
        (&x_train.data, &x_val.data)
    };
    let mut shuffle_rng = rng::rng_from(config.seed, &[1]);
    let lr = T::of(config.learning_rate);
    let (b1, b2, eps) = (T::of(0.9), T::of(0.999), T::of(1e-8));
    let mut adam = Adam { m: vec![T::zero(); model.params.len()], v: vec![T::zero(); model.params.len()], t: 0 };

    let all_train: Vec<usize> = (0..y_train.len()).collect();
    let all_val: Vec<usize> = (0..y_val.len()).collect();
    let mut order = all_train.clone();
    let mut report = TrainReport { train_loss: vec![], val_loss: vec![], best_epoch: 0, best_val_loss: f64::INFINITY };
    let mut best = model.params.clone();
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let (loss, grad) = model.loss_and_grad(xt, y_train, batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b + 1 });
            }
            match config.optimizer {
                Optimizer::Sgd => {
                    model.params.iter_mut().zip(&grad).for_each(|(p, &g)| *p = *p - lr * g);
                }
                Optimizer::Adam => {
                    adam.t += 1;
                    let c1 = T::one() - b1.powi(adam.t);
                    let c2 = T::one() - b2.powi(adam.t);
                    for i in 0..grad.len() {
                        adam.m[i] = b1 * adam.m[i] + (T::one() - b1) * grad[i];
                        adam.v[i] = b2 * adam.v[i] + (T::one() - b2) * grad[i] * grad[i];
                        let mh = adam.m[i] / c1;
                        let vh = adam.v[i] / c2;
                        model.params[i] = model.params[i] - lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
        }
        let tl = model.loss(xt, y_train, &all_train);
        let vl = if y_val.is_empty() { tl } else { model.loss(xv, y_val, &all_val) };
        if !tl.is_finite() || !vl.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch, batch: 0 });
        }
        report.train_loss.push(tl.f64());
        report.val_loss.push(vl.f64());
        if vl.f64() < report.best_val_loss {
            report.best_val_loss = vl.f64();
            report.best_epoch = epoch;
            best.clone_from(&model.params);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    model.params = best;
    Ok((model, report))
}

/// Result of a validation-loss grid search.
#[derive(Debug)]
pub struct GridOutcome<T: Real> {
    pub best_index: usize,
    pub best_config: MlpConfig,
    pub best_model: MlpModel<T>,
    pub reports: Vec<Result<TrainReport, ModelError>>,
}

/// Trains every configuration (concurrently; each carries its own seed) and
/// keeps the lowest best-validation loss, earliest config on ties.
pub fn grid_search<T: Real>(
    configs: &[MlpConfig],
    x_train: &EncodedMatrix<T>,
    y_train: &[T],
    x_val: &EncodedMatrix<T>,
    y_val: &[T],
) -> Result<GridOutcome<T>, ModelError> {
    if configs.is_empty() {
        return Err(ModelError::InvalidConfig("empty configuration grid".into()));
    }
    let results: Vec<Result<(MlpModel<T>, TrainReport), ModelError>> =
        configs.par_iter().map(|c| train(x_train, y_train, x_val, y_val, c)).collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in results.iter().enumerate() {
        if let Ok((_, rep)) = r {
            if best.is_none_or(|(_, l)| rep.best_val_loss < l) {
                best = Some((i, rep.best_val_loss));
            }
        }
    }
    let mut models = Vec::with_capacity(results.len());
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok((m, rep)) => {
                models.push(Some(m));
                reports.push(Ok(rep));
            }
            Err(e) => {
                models.push(None);
                reports.push(Err(e));
            }
        }
    }
    match best {
        Some((i, _)) => Ok(GridOutcome {
            best_index: i,
            best_config: configs[i].clone(),
            best_model: models[i].take().unwrap(),
            reports,
        }),
        None => {
            let first = reports.into_iter().find_map(Result::err).unwrap();
            Err(ModelError::AllConfigsFailed(Box::new(first)))
        }
    }
}

/// Largest relative discrepancy between the back-propagated gradient and
/// central finite differences, over every parameter of a freshly
/// initialized network for `config`.
pub fn gradient_check<T: Real>(config: &MlpConfig, x: &Matrix<T>, y: &[T], eps: T) -> T {
    let cols: Vec<String> = (0..x.cols()).map(|i| format!("x{i}")).collect();
    let model = MlpModel::<T>::init(cols, &config.hidden, config.seed);
    gradient_check_model(&model, x, y, eps)
}

impl<T: Real> MlpModel<T> {
    /// Which hidden units are active, over every row.
    fn relu_pattern(&self, x: &Matrix<T>) -> Vec<bool> {
        let offsets = self.layer_offsets();
        let hidden = offsets.len() - 1;
        (0..x.rows())
            .flat_map(|r| {
                let acts = self.forward(x.row(r), &offsets);
                acts[1..=hidden].iter().flatten().map(|&v| v > T::zero()).collect::<Vec<_>>()
            })
            .collect()
    }
}

/// A central difference is only a derivative when both probes keep the
/// hidden units on the same side of their kink. The step shrinks tenfold
/// (at most four times) until they do; parameters whose kink still lies
/// inside the smallest step are skipped.
pub(crate) fn gradient_check_model<T: Real>(model: &MlpModel<T>, x: &Matrix<T>, y: &[T], eps: T) -> T {
    let rows: Vec<usize> = (0..y.len()).collect();
    let (_, analytic) = model.loss_and_grad(x, y, &rows);
    let base = model.relu_pattern(x);
    let mut probe = model.clone();
    let mut worst = T::zero();
    let mut skipped = 0;
    let two = T::one() + T::one();
    for i in 0..probe.params.len() {
        let orig = probe.params[i];
        let mut h = eps;
        let mut numeric = None;
        for _ in 0..5 {
            probe.params[i] = orig + h;
            let (up, up_pattern) = (probe.loss(x, y, &rows), probe.relu_pattern(x));
            probe.params[i] = orig - h;
            let (down, down_pattern) = (probe.loss(x, y, &rows), probe.relu_pattern(x));
            probe.params[i] = orig;
            if up_pattern == base && down_pattern == base {
                numeric = Some((up - down) / (two * h));
                break;
            }
            h = h / T::of(10.0);
        }
        let Some(numeric) = numeric else {
            skipped += 1;
            continue;
        };
        let denom = analytic[i].abs().max(numeric.abs()).max(T::of(1e-8));
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    if skipped > 0 {
        log::debug!("gradient check skipped {skipped} parameters at a kink");
    }
    worst
}
