use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::net::{Dense, NetMeta, TerminalCostNet, Trace};
use super::features::SCHEMA_VERSION;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Learning rate of the last epoch relative to the first; cosine in between.
    pub final_lr_fraction: f64,
    pub validation_split: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            learning_rate: 0.1,
            momentum: 0.9,
            batch_size: 256,
            epochs: 800,
            final_lr_fraction: 0.05,
            validation_split: 0.2,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLoss>,
    pub n_train: usize,
    pub n_val: usize,
    /// Training-set MSE (normalized units) before the first update.
    pub initial_train_mse: f64,
    /// Held-out RMSE over the mean absolute label, original units.
    pub val_relative_rmse: f64,
}

impl TrainReport {
    pub fn write_loss_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "train_mse", "val_mse"])?;
        for e in &self.epochs {
            w.write_record([e.epoch.to_string(), crate::world::fmt_f64(e.train_mse), crate::world::fmt_f64(e.val_mse)])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn mean_scale(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count().max(1) as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    // Constant columns keep unit scale.
    (mean, if sd > 1e-12 { sd } else { 1.0 })
}

/// Mini-batch SGD with momentum on normalized MSE. Single-threaded and fully
/// determined by `cfg.seed`.
pub fn train(data: &Dataset, cfg: &TrainConfig, gamma: f64) -> Result<(TerminalCostNet, TrainReport)> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Config("training needs at least two samples".into()));
    }
    if !(cfg.final_lr_fraction > 0.0 && cfg.final_lr_fraction <= 1.0) {
        return Err(Error::Config("final_lr_fraction must be in (0, 1]".into()));
    }
    if !(cfg.validation_split > 0.0 && cfg.validation_split < 1.0) || cfg.batch_size == 0 {
        return Err(Error::Config("validation split must be in (0, 1) and batch size > 0".into()));
    }
    let d = data.variant.inputs();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((n as f64 * cfg.validation_split).round() as usize).clamp(1, n - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();

    let mut in_mean = vec![0.0; d];
    let mut in_scale = vec![1.0; d];
    for j in 0..d {
        let (m, s) = mean_scale(train_idx.iter().map(|&i| data.features[i][j]));
        in_mean[j] = m;
        in_scale[j] = s;
    }
    let (out_mean, out_scale) = mean_scale(train_idx.iter().map(|&i| data.labels[i]));

    let mut sizes = vec![d];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let layers = sizes
        .windows(2)
        .map(|w| {
            let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
            let mut l = Dense::zeros(w[0], w[1]);
            l.w.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
            l
        })
        .collect();
    let mut net = TerminalCostNet {
        layers,
        in_mean,
        in_scale,
        out_mean,
        out_scale,
        meta: NetMeta {
            variant: data.variant,
            schema_version: SCHEMA_VERSION,
            feature_names: data.variant.names().iter().map(|s| s.to_string()).collect(),
            gamma,
            corpus_hash: data.corpus_hash.clone(),
            seed: cfg.seed,
        },
    };

    let normalized = |net: &TerminalCostNet, idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        let xs = idx
            .iter()
            .map(|&i| {
                let mut z = vec![0.0; d];
                net.normalize(&data.features[i], &mut z);
                z
            })
            .collect();
        let ys = idx.iter().map(|&i| (data.labels[i] - net.out_mean) / net.out_scale).collect();
        (xs, ys)
    };
    let (train_x, train_y) = normalized(&net, &train_idx);
    let (val_x, val_y) = normalized(&net, val_idx);
    let pos: std::collections::HashMap<usize, usize> =
        train_idx.iter().enumerate().map(|(k, &i)| (i, k)).collect();

    let mut trace = Trace { acts: Vec::new() };
    let mse = |net: &TerminalCostNet, xs: &[Vec<f64>], ys: &[f64], trace: &mut Trace| {
        xs.iter().zip(ys).map(|(x, y)| (net.trace(x, trace) - y).powi(2)).sum::<f64>() / xs.len() as f64
    };
    let initial_train_mse = mse(&net, &train_x, &train_y, &mut trace);

    let mut grads: Vec<Dense> = net.layers.iter().map(|l| Dense::zeros(l.n_in, l.n_out)).collect();
    let mut velocity = grads.clone();
    let mut deltas: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.n_out]).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let progress = if cfg.epochs > 1 { epoch as f64 / (cfg.epochs - 1) as f64 } else { 0.0 };
        let f = cfg.final_lr_fraction;
        let lr = cfg.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()));
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            for g in grads.iter_mut() {
                g.w.fill(0.0);
                g.b.fill(0.0);
            }
            for &i in batch {
                let k = pos[&i];
                let out = net.trace(&train_x[k], &mut trace);
                let err = out - train_y[k];
                loss_sum += err * err;
                backprop(&net, &trace, 2.0 * err, &mut grads, &mut deltas);
            }
            let scale = lr / batch.len() as f64;
            for ((l, g), v) in net.layers.iter_mut().zip(&grads).zip(velocity.iter_mut()) {
                for ((w, gw), vw) in l.w.iter_mut().zip(&g.w).zip(v.w.iter_mut()) {
                    *vw = cfg.momentum * *vw - scale * gw;
                    *w += *vw;
                }
                for ((b, gb), vb) in l.b.iter_mut().zip(&g.b).zip(v.b.iter_mut()) {
                    *vb = cfg.momentum * *vb - scale * gb;
                    *b += *vb;
                }
            }
        }
        let train_mse = loss_sum / train_idx.len() as f64;
        let val_mse = mse(&net, &val_x, &val_y, &mut trace);
        if !train_mse.is_finite() || !val_mse.is_finite() {
            return Err(Error::Training { epoch });
        }
        epochs.push(EpochLoss { epoch, train_mse, val_mse });
    }

    let mut sq = 0.0;
    let mut abs = 0.0;
    for &i in val_idx {
        let p = net.forward(&data.features[i])?;
        sq += (p - data.labels[i]).powi(2);
        abs += data.labels[i].abs();
    }
    let rmse = (sq / n_val as f64).sqrt();
    let mean_abs = abs / n_val as f64;
    let report = TrainReport {
        epochs,
        n_train: train_idx.len(),
        n_val,
        initial_train_mse,
        val_relative_rmse: if mean_abs > 0.0 { rmse / mean_abs } else { rmse },
    };
    Ok((net, report))
}

/// Accumulates `d loss / d params` for one sample given `d loss / d output`.
fn backprop(net: &TerminalCostNet, trace: &Trace, d_out: f64, grads: &mut [Dense], deltas: &mut [Vec<f64>]) {
    let last = net.layers.len() - 1;
    deltas[last][0] = d_out;
    for k in (0..net.layers.len()).rev() {
        let layer = &net.layers[k];
        let input = &trace.acts[k];
        let (lower, upper) = deltas.split_at_mut(k);
        let delta = &upper[0];
        let g = &mut grads[k];
        for (gb, d) in g.b.iter_mut().zip(delta) {
            *gb += d;
        }
        for (i, &xi) in input.iter().enumerate() {
            let row = &mut g.w[i * layer.n_out..(i + 1) * layer.n_out];
            for (gw, d) in row.iter_mut().zip(delta) {
                *gw += xi * d;
            }
        }
        if k > 0 {
            let prev = &mut lower[k - 1];
            for (i, p) in prev.iter_mut().enumerate() {
                let row = &layer.w[i * layer.n_out..(i + 1) * layer.n_out];
                let s: f64 = row.iter().zip(delta).map(|(w, d)| w * d).sum();
                let a = input[i];
                *p = s * (1.0 - a * a);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::features::Variant;

    fn toy(n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ds = Dataset::new(Variant::Ag);
        for _ in 0..n {
            let x: Vec<f64> = (0..13).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = 10.0 + 3.0 * x[0] - 2.0 * x[1] * x[2] + x[6].sin();
            ds.push(x, y, "toy", 0);
        }
        ds
    }

    #[test]
    fn memorizes_a_single_sample() {
        let mut ds = Dataset::new(Variant::Ag);
        for _ in 0..10 {
            ds.push(vec![0.3; 13], 42.0, "one", 0);
        }
        let cfg = TrainConfig { epochs: 50, batch_size: 4, ..TrainConfig::default() };
        let (net, report) = train(&ds, &cfg, 0.8).unwrap();
        assert!((net.forward(&[0.3; 13]).unwrap() - 42.0).abs() < 1e-6);
        assert!(report.epochs.last().unwrap().val_mse < 1e-6);
    }

    #[test]
    fn loss_decreases_and_is_reproducible() {
        let ds = toy(600);
        let cfg = TrainConfig { epochs: 30, batch_size: 32, ..TrainConfig::default() };
        let (a, ra) = train(&ds, &cfg, 0.8).unwrap();
        let (b, _) = train(&ds, &cfg, 0.8).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert!(ra.epochs.last().unwrap().train_mse < ra.initial_train_mse);
        assert!(ra.val_relative_rmse < 0.1, "{}", ra.val_relative_rmse);
    }
}
