//! Pluggable local training: model parameter vectors, two reference
//! learners (multinomial logistic regression and a one-hidden-layer
//! tanh MLP) trained by mini-batch SGD on softmax cross-entropy, and
//! sample-count-weighted model averaging.
//!
//! Everything here is value-semantic: training and aggregation return
//! fresh vectors and never mutate their inputs, because snapshots are
//! shared between protocol actors.

mod logistic;
mod mlp;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::worldsim::TimeStep;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArchKind {
    Logistic,
    Mlp,
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArchKind::Logistic => write!(f, "logistic"),
            ArchKind::Mlp => write!(f, "mlp"),
        }
    }
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(ArchKind::Logistic),
            "mlp" => Ok(ArchKind::Mlp),
            other => Err(Error::config(format!("unknown learner arch `{other}`"))),
        }
    }
}

/// Binds a parameter vector to a concrete architecture. `hidden` is 0
/// for the logistic learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShapeTag {
    pub kind: ArchKind,
    pub input_dim: usize,
    pub hidden: usize,
    pub n_classes: usize,
}

impl ShapeTag {
    pub fn logistic(input_dim: usize, n_classes: usize) -> Self {
        ShapeTag {
            kind: ArchKind::Logistic,
            input_dim,
            hidden: 0,
            n_classes,
        }
    }

    pub fn mlp(input_dim: usize, hidden: usize, n_classes: usize) -> Self {
        ShapeTag {
            kind: ArchKind::Mlp,
            input_dim,
            hidden,
            n_classes,
        }
    }

    pub fn param_count(&self) -> usize {
        match self.kind {
            ArchKind::Logistic => self.n_classes * self.input_dim + self.n_classes,
            ArchKind::Mlp => {
                self.hidden * self.input_dim
                    + self.hidden
                    + self.n_classes * self.hidden
                    + self.n_classes
            }
        }
    }

    fn check_dataset(&self, ds: &LabeledDataset) -> Result<()> {
        if ds.n_features() != self.input_dim || ds.n_classes() != self.n_classes {
            return Err(Error::contract(format!(
                "dataset ({} features, {} classes) does not match model shape {self}",
                ds.n_features(),
                ds.n_classes()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ShapeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {}",
            self.kind, self.input_dim, self.hidden, self.n_classes
        )
    }
}

impl FromStr for ShapeTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(Error::config(format!("bad shape tag `{s}`")));
        }
        let kind: ArchKind = parts[0].parse()?;
        let nums: Vec<usize> = parts[1..]
            .iter()
            .map(|p| p.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::config(format!("bad shape tag `{s}`")))?;
        Ok(ShapeTag {
            kind,
            input_dim: nums[0],
            hidden: nums[1],
            n_classes: nums[2],
        })
    }
}

/// Flat parameter vector bound to an architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub values: Vec<f64>,
    pub shape: ShapeTag,
}

impl ModelParams {
    pub fn new(values: Vec<f64>, shape: ShapeTag) -> Result<Self> {
        if values.len() != shape.param_count() {
            return Err(Error::contract(format!(
                "parameter vector length {} does not match shape {shape} ({} params)",
                values.len(),
                shape.param_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("non-finite model parameter"));
        }
        Ok(ModelParams { values, shape })
    }
}

/// The unit exchanged by every protocol: parameters plus the time they
/// were last updated by training and the sample count used as the
/// aggregation weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSnapshot {
    pub params: ModelParams,
    pub last_update: TimeStep,
    pub n_train_samples: u64,
}

impl ModelSnapshot {
    pub fn new(params: ModelParams) -> Self {
        ModelSnapshot {
            params,
            last_update: 0,
            n_train_samples: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.1,
            batch_size: 16,
            epochs: 1,
            l2: 1e-4,
        }
    }
}

impl Hyperparams {
    pub fn with_epochs(&self, epochs: usize) -> Hyperparams {
        Hyperparams {
            epochs,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub loss: f64,
}

/// Weights uniform in (-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero.
pub fn init_model(shape: ShapeTag, rng: &mut SimRng) -> ModelParams {
    let mut values = vec![0.0; shape.param_count()];
    match shape.kind {
        ArchKind::Logistic => {
            let bound = 1.0 / (shape.input_dim as f64).sqrt();
            for v in values[..shape.n_classes * shape.input_dim].iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
        ArchKind::Mlp => {
            let (d, h, k) = (shape.input_dim, shape.hidden, shape.n_classes);
            let b1 = 1.0 / (d as f64).sqrt();
            for v in values[..h * d].iter_mut() {
                *v = rng.gen_range(-b1..b1);
            }
            let b2 = 1.0 / (h as f64).sqrt();
            let w2_start = h * d + h;
            for v in values[w2_start..w2_start + k * h].iter_mut() {
                *v = rng.gen_range(-b2..b2);
            }
        }
    }
    ModelParams { values, shape }
}

/// Class logits for one feature row.
pub fn logits(params: &ModelParams, x: &[f64]) -> Vec<f64> {
    match params.shape.kind {
        ArchKind::Logistic => logistic::logits(&params.shape, &params.values, x),
        ArchKind::Mlp => mlp::logits(&params.shape, &params.values, x).1,
    }
}

/// Predicted class: argmax over logits, ties to the lowest class index.
pub fn predict(params: &ModelParams, x: &[f64]) -> usize {
    argmax(&logits(params, x))
}

pub(crate) fn argmax(zs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &z) in zs.iter().enumerate().skip(1) {
        if z > zs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax_in_place(zs: &mut [f64]) {
    let max = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in zs.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    for z in zs.iter_mut() {
        *z /= sum;
    }
}

/// Mean softmax cross-entropy plus `0.5 * l2 * ||theta||^2` over the
/// given sample indices, and its gradient. Exposed so tests can check
/// the analytic gradient against finite differences.
pub fn loss_and_gradient(
    params: &ModelParams,
    ds: &LabeledDataset,
    indices: &[usize],
    l2: f64,
) -> Result<(f64, Vec<f64>)> {
    params.shape.check_dataset(ds)?;
    if indices.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    let mut grad = vec![0.0; params.values.len()];
    let mut loss = 0.0;
    for &i in indices {
        let x = ds.feature_row(i);
        let y = ds.label(i);
        loss += match params.shape.kind {
            ArchKind::Logistic => {
                logistic::accumulate(&params.shape, &params.values, x, y, &mut grad)
            }
            ArchKind::Mlp => mlp::accumulate(&params.shape, &params.values, x, y, &mut grad),
        };
    }
    let inv = 1.0 / indices.len() as f64;
    loss *= inv;
    for (g, &w) in grad.iter_mut().zip(&params.values) {
        *g = *g * inv + l2 * w;
    }
    loss += 0.5 * l2 * params.values.iter().map(|w| w * w).sum::<f64>();
    Ok((loss, grad))
}

/// Mini-batch SGD for `hyper.epochs` passes. Returns new parameters;
/// the input is untouched. `epochs == 0` is the identity.
pub fn train(
    params: &ModelParams,
    ds: &LabeledDataset,
    hyper: &Hyperparams,
    rng: &mut SimRng,
) -> Result<ModelParams> {
    params.shape.check_dataset(ds)?;
    let mut out = params.clone();
    if ds.is_empty() {
        return Ok(out);
    }
    let batch = hyper.batch_size.max(1);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    for _ in 0..hyper.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch) {
            let (_, grad) = loss_and_gradient(&out, ds, chunk, hyper.l2)?;
            for (w, g) in out.values.iter_mut().zip(&grad) {
                *w -= hyper.learning_rate * g;
            }
        }
    }
    Ok(out)
}

/// Accuracy (argmax, ties to lowest index) and mean cross-entropy.
pub fn evaluate(params: &ModelParams, ds: &LabeledDataset) -> Result<Metrics> {
    params.shape.check_dataset(ds)?;
    if ds.is_empty() {
        return Err(Error::Evaluation("cannot evaluate on an empty dataset".into()));
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    for i in 0..ds.len() {
        let mut zs = logits(params, ds.feature_row(i));
        if argmax(&zs) == ds.label(i) {
            correct += 1;
        }
        softmax_in_place(&mut zs);
        loss -= zs[ds.label(i)].max(1e-300).ln();
    }
    Ok(Metrics {
        accuracy: correct as f64 / ds.len() as f64,
        loss: loss / ds.len() as f64,
    })
}

/// Convex combination of snapshots weighted by `n_train_samples`.
/// Snapshots that have never trained (weight 0) count as weight 1 so a
/// cold-start model still participates.
pub fn aggregate_weighted(snapshots: &[&ModelSnapshot]) -> Result<ModelParams> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::contract("cannot aggregate an empty snapshot list"))?;
    let shape = first.params.shape;
    if snapshots.iter().any(|s| s.params.shape != shape) {
        return Err(Error::contract("aggregating snapshots of different shapes"));
    }
    // Identical inputs collapse exactly: a convex combination of one
    // vector is that vector, and downstream fixed-point checks (FedAvg
    // broadcast round trips, converged cycles) rely on bit equality.
    if snapshots[1..]
        .iter()
        .all(|s| s.params.values == first.params.values)
    {
        return Ok(first.params.clone());
    }
    let mut acc = vec![0.0; shape.param_count()];
    let mut total = 0.0;
    for s in snapshots {
        let w = s.n_train_samples.max(1) as f64;
        total += w;
        for (a, &v) in acc.iter_mut().zip(&s.params.values) {
            *a += w * v;
        }
    }
    for a in acc.iter_mut() {
        *a /= total;
    }
    ModelParams::new(acc, shape)
}

/// Checkpoint format, three lines: shape tag; `last_update
/// n_train_samples`; space-separated parameter values printed with 17
/// significant digits so the round trip is bit-exact.
pub fn write_snapshot(snap: &ModelSnapshot, mut w: impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "{}", snap.params.shape)?;
    writeln!(w, "{} {}", snap.last_update, snap.n_train_samples)?;
    let line: Vec<String> = snap
        .params
        .values
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect();
    writeln!(w, "{}", line.join(" "))
}

pub fn read_snapshot(text: &str) -> Result<ModelSnapshot> {
    let mut lines = text.lines();
    let shape: ShapeTag = lines
        .next()
        .ok_or_else(|| Error::validation("empty checkpoint"))?
        .parse()?;
    let meta = lines
        .next()
        .ok_or_else(|| Error::validation("checkpoint missing metadata line"))?;
    let mut meta_parts = meta.split_whitespace();
    let last_update: TimeStep = meta_parts
        .next()
        .and_then(|p| p.parse().ok())
        .ok_or_else(|| Error::validation("bad last_update in checkpoint"))?;
    let n_train_samples: u64 = meta_parts
        .next()
        .and_then(|p| p.parse().ok())
        .ok_or_else(|| Error::validation("bad n_train_samples in checkpoint"))?;
    let values: Vec<f64> = lines
        .next()
        .ok_or_else(|| Error::validation("checkpoint missing parameter line"))?
        .split_whitespace()
        .map(|p| p.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::validation("bad parameter value in checkpoint"))?;
    Ok(ModelSnapshot {
        params: ModelParams::new(values, shape)?,
        last_update,
        n_train_samples,
    })
}
