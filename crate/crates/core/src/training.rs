//! Minibatch SGD with momentum, staircase learning-rate decay, dropout on
//! `h0`, optional iterate averaging, early stopping and a grid-search harness.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::network::{Gradients, NetworkModel};

pub const DECAY_FACTOR: f64 = 0.96;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Steps between decays; `None` disables decay.
    pub decay_gamma: Option<u64>,
    pub decay_factor: f64,
    pub max_steps: u64,
    pub batch_size: usize,
    pub l2_lambda: f64,
    pub dropout_p: f64,
    pub eval_metric: String,
    pub early_stop_patience: u32,
    /// Overrides the default dev-evaluation interval.
    pub eval_interval: Option<u64>,
    /// Polyak averaging of parameter iterates.
    pub averaging: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            decay_gamma: Some(8000),
            decay_factor: DECAY_FACTOR,
            max_steps: 10_000,
            batch_size: 32,
            l2_lambda: 1e-4,
            dropout_p: 0.0,
            eval_metric: "accuracy".into(),
            early_stop_patience: 10,
            eval_interval: None,
            averaging: false,
        }
    }
}

pub const TRAINING_KEYS: &[&str] = &[
    "learning_rate",
    "momentum",
    "decay_gamma",
    "decay_factor",
    "max_steps",
    "batch_size",
    "l2_lambda",
    "dropout_p",
    "eval_metric",
    "early_stop_patience",
    "eval_interval",
    "averaging",
];

/// Parses counts like `32000`, `32k` or `3.8M`.
pub fn parse_count(value: &str) -> Option<u64> {
    let v = value.trim();
    let (num, mult) = match v.chars().last()? {
        'k' | 'K' => (&v[..v.len() - 1], 1e3),
        'm' | 'M' => (&v[..v.len() - 1], 1e6),
        _ => (v, 1.0),
    };
    let x: f64 = num.parse().ok()?;
    let total = x * mult;
    (total >= 0.0 && total.fract() == 0.0 && total < u64::MAX as f64).then_some(total as u64)
}

fn parse_real(key: &str, value: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::config(format!("`{key}` expects a number, got `{value}`")))
}

fn parse_int(key: &str, value: &str) -> Result<u64> {
    parse_count(value).ok_or_else(|| Error::config(format!("`{key}` expects a count, got `{value}`")))
}

impl TrainingConfig {
    /// Set one field from its text form. Returns `Ok(false)` for keys that
    /// are not training keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "learning_rate" => self.learning_rate = parse_real(key, value)?,
            "momentum" => self.momentum = parse_real(key, value)?,
            "decay_gamma" => {
                self.decay_gamma = match value.trim() {
                    "inf" | "none" | "0" => None,
                    v => Some(parse_int(key, v)?),
                }
            }
            "decay_factor" => self.decay_factor = parse_real(key, value)?,
            "max_steps" => self.max_steps = parse_int(key, value)?,
            "batch_size" => self.batch_size = parse_int(key, value)? as usize,
            "l2_lambda" => self.l2_lambda = parse_real(key, value)?,
            "dropout_p" => self.dropout_p = parse_real(key, value)?,
            "eval_metric" => self.eval_metric = value.trim().to_string(),
            "early_stop_patience" => self.early_stop_patience = parse_int(key, value)? as u32,
            "eval_interval" => self.eval_interval = Some(parse_int(key, value)?),
            "averaging" => {
                self.averaging = match value.trim() {
                    "true" | "on" | "1" => true,
                    "false" | "off" | "0" => false,
                    v => return Err(Error::config(format!("`averaging` expects true/false, got `{v}`"))),
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::config(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail("momentum must be in [0, 1)");
        }
        if self.decay_gamma == Some(0) {
            return fail("decay_gamma must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return fail("decay_factor must be in (0, 1]");
        }
        if self.max_steps == 0 {
            return fail("max_steps must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !(self.l2_lambda >= 0.0) {
            return fail("l2_lambda must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return fail("dropout_p must be in [0, 1)");
        }
        if self.early_stop_patience == 0 {
            return fail("early_stop_patience must be positive");
        }
        if self.eval_interval == Some(0) {
            return fail("eval_interval must be positive");
        }
        Ok(())
    }

    /// Staircase schedule: `lr * factor^floor(step / gamma)`.
    pub fn lr_at(&self, step: u64) -> f64 {
        match self.decay_gamma {
            Some(g) => self.learning_rate * self.decay_factor.powi((step / g).min(i32::MAX as u64) as i32),
            None => self.learning_rate,
        }
    }

    /// Steps between dev evaluations.
    pub fn eval_every(&self) -> u64 {
        self.eval_interval.unwrap_or_else(|| self.decay_gamma.map_or(100, |g| (g / 4).max(100)))
    }

    /// Key=value lines, one per field.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let gamma = self.decay_gamma.map_or("inf".to_string(), |g| g.to_string());
        let _ = writeln!(s, "learning_rate={}", self.learning_rate);
        let _ = writeln!(s, "momentum={}", self.momentum);
        let _ = writeln!(s, "decay_gamma={gamma}");
        let _ = writeln!(s, "decay_factor={}", self.decay_factor);
        let _ = writeln!(s, "max_steps={}", self.max_steps);
        let _ = writeln!(s, "batch_size={}", self.batch_size);
        let _ = writeln!(s, "l2_lambda={}", self.l2_lambda);
        let _ = writeln!(s, "dropout_p={}", self.dropout_p);
        let _ = writeln!(s, "eval_metric={}", self.eval_metric);
        let _ = writeln!(s, "early_stop_patience={}", self.early_stop_patience);
        if let Some(e) = self.eval_interval {
            let _ = writeln!(s, "eval_interval={e}");
        }
        let _ = writeln!(s, "averaging={}", self.averaging);
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub dev_metric: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("step\tlr\tloss\tdev_metric\n");
        for r in &self.rows {
            let _ = writeln!(s, "{}\t{:.6e}\t{:.6}\t{:.6}", r.step, r.lr, r.loss, r.dev_metric);
        }
        s
    }
}

pub struct TrainOutcome {
    pub model: NetworkModel,
    pub log: TrainingLog,
    pub best_step: u64,
    pub best_metric: f64,
}

/// Running mean of parameter iterates.
struct Averager {
    sums: Vec<Vec<f64>>,
    count: u64,
}

impl Averager {
    fn new(model: &NetworkModel) -> Self {
        Averager { sums: model.tensor_lens().into_iter().map(|n| vec![0.0; n]).collect(), count: 0 }
    }

    fn add(&mut self, model: &mut NetworkModel) -> Result<()> {
        for (s, t) in self.sums.iter_mut().zip(model.tensors_mut()?) {
            s.iter_mut().zip(t.iter()).for_each(|(a, &x)| *a += f64::from(x));
        }
        self.count += 1;
        Ok(())
    }

    fn averaged(&self, model: &NetworkModel) -> Result<NetworkModel> {
        let mut out = model.clone();
        if self.count == 0 {
            return Ok(out);
        }
        let inv = 1.0 / self.count as f64;
        for (s, t) in self.sums.iter().zip(out.tensors_mut()?) {
            t.iter_mut().zip(s).for_each(|(x, &a)| *x = (a * inv) as f32);
        }
        Ok(out)
    }
}

/// Train `model` on `(features, gold label index)` pairs.
///
/// `dev_eval` scores a candidate model on held-out data (higher is better);
/// the returned model is the best-scoring checkpoint.
pub fn train<F>(
    mut model: NetworkModel,
    data: &[(FeatureVector, usize)],
    config: &TrainingConfig,
    seed: u64,
    mut dev_eval: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&NetworkModel) -> Result<f64>,
{
    config.validate()?;
    if data.is_empty() {
        return Err(Error::data("empty training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0usize;

    let mut grads = Gradients::zeros_like(&model);
    let mut velocity: Vec<Vec<f64>> = model.tensor_lens().into_iter().map(|n| vec![0.0; n]).collect();
    let mut averager = config.averaging.then(|| Averager::new(&model));
    let mut mask = vec![1.0f64; model.input_dim()];
    let keep = 1.0 - config.dropout_p;

    let mut log = TrainingLog::default();
    let every = config.eval_every();
    let (mut best_metric, mut best_step, mut best_model) = (f64::NEG_INFINITY, 0u64, model.clone());
    let mut since_best = 0u32;
    let (mut loss_sum, mut loss_steps) = (0.0f64, 0u64);

    for step in 1..=config.max_steps {
        let lr = config.lr_at(step - 1);
        grads.clear();
        let mut batch_loss = 0.0;
        let mut n = 0usize;
        while n < config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let (fv, gold) = &data[order[cursor]];
            cursor += 1;
            let dropout = if config.dropout_p > 0.0 {
                mask.iter_mut().for_each(|m| *m = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 });
                Some(mask.as_slice())
            } else {
                None
            };
            batch_loss += model.example_loss(fv, *gold, dropout, Some(&mut grads))?;
            n += 1;
        }
        let inv = 1.0 / n as f64;
        grads.scale(inv);
        model.add_l2_gradient(&mut grads, config.l2_lambda);
        let loss = batch_loss * inv + config.l2_lambda * model.l2_norm_sq();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step: step as usize, loss, lr });
        }
        loss_sum += loss;
        loss_steps += 1;

        for ((t, v), g) in model.tensors_mut()?.into_iter().zip(&mut velocity).zip(&grads.tensors) {
            for ((x, vi), &gi) in t.iter_mut().zip(v.iter_mut()).zip(g) {
                *vi = config.momentum * *vi - lr * gi;
                *x = (f64::from(*x) + *vi) as f32;
            }
        }
        if let Some(avg) = averager.as_mut() {
            avg.add(&mut model)?;
        }

        if step % every == 0 || step == config.max_steps {
            let candidate = match &averager {
                Some(avg) => avg.averaged(&model)?,
                None => model.clone(),
            };
            let metric = dev_eval(&candidate)?;
            log.rows.push(LogRow { step, lr, loss: loss_sum / loss_steps as f64, dev_metric: metric });
            loss_sum = 0.0;
            loss_steps = 0;
            if metric > best_metric {
                best_metric = metric;
                best_step = step;
                best_model = candidate;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.early_stop_patience {
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome { model: best_model, log, best_step, best_metric })
}

/// One grid cell and the dev metric it reached.
#[derive(Clone, Debug)]
pub struct GridCell {
    pub settings: Vec<(String, String)>,
    pub config: TrainingConfig,
    pub metric: f64,
}

#[derive(Clone, Debug)]
pub struct GridResult {
    pub cells: Vec<GridCell>,
    pub best: usize,
}

impl GridResult {
    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best]
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        if let Some(first) = self.cells.first() {
            let keys: Vec<&str> = first.settings.iter().map(|(k, _)| k.as_str()).collect();
            let _ = writeln!(s, "cell\t{}\tdev_metric\tbest", keys.join("\t"));
        }
        for (i, c) in self.cells.iter().enumerate() {
            let vals: Vec<&str> = c.settings.iter().map(|(_, v)| v.as_str()).collect();
            let _ = writeln!(s, "{i}\t{}\t{:.6}\t{}", vals.join("\t"), c.metric, u8::from(i == self.best));
        }
        s
    }
}

/// Parse grid lines of the form `key=v1,v2,v3`.
pub fn parse_grid(text: &str) -> Result<Vec<(String, Vec<String>)>> {
    let mut grid = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("grid line {}: expected key=v1,v2,...", i + 1)))?;
        let values: Vec<String> = v.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect();
        grid.push((k.trim().to_string(), values));
    }
    Ok(grid)
}

/// Train one model per grid cell (cartesian product, first key outermost)
/// and pick the best dev metric; ties go to the earliest cell.
pub fn grid_search<F>(base: &TrainingConfig, grid: &[(String, Vec<String>)], mut train_cell: F) -> Result<GridResult>
where
    F: FnMut(&TrainingConfig) -> Result<f64>,
{
    if grid.is_empty() || grid.iter().any(|(_, vs)| vs.is_empty()) {
        return Err(Error::config("empty hyperparameter grid"));
    }
    let total: usize = grid.iter().map(|(_, vs)| vs.len()).product();
    let mut cells = Vec::with_capacity(total);
    let mut best = 0usize;
    for idx in 0..total {
        let mut rem = idx;
        let mut picks = vec![0usize; grid.len()];
        for (k, (_, vs)) in grid.iter().enumerate().rev() {
            picks[k] = rem % vs.len();
            rem /= vs.len();
        }
        let mut config = base.clone();
        let mut settings = Vec::with_capacity(grid.len());
        for ((key, vs), &p) in grid.iter().zip(&picks) {
            if !config.set(key, &vs[p])? {
                return Err(Error::config(format!("unknown training key `{key}` in grid")));
            }
            settings.push((key.clone(), vs[p].clone()));
        }
        config.validate()?;
        let metric = train_cell(&config)?;
        if metric > cells.get(best).map_or(f64::NEG_INFINITY, |c: &GridCell| c.metric) {
            best = idx;
        }
        cells.push(GridCell { settings, config, metric });
    }
    Ok(GridResult { cells, best })
}
