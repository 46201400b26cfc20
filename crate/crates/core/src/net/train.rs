use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Gradient, NetError, Network};
use crate::sequences::{fit_scaler, FeatureTable, Scaler};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub rho: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    /// Fraction of shuffled rows held out for validation.
    pub split: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            rho: 0.95,
            epsilon: 1e-7,
            learning_rate: 1.0,
            split: 0.2,
            seed: 0,
        }
    }
}

/// MAE after an epoch, in original target units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mae: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub network: Network,
    pub scaler: Scaler,
    pub a: usize,
    pub config: TrainConfig,
    pub history: Vec<EpochStats>,
    pub corpus_fingerprint: String,
    /// MAE of always predicting 0, on the validation rows.
    pub zero_baseline_mae: f64,
    pub train_rows: usize,
    pub val_rows: usize,
}

impl TrainedModel {
    /// Predicted xT, in original units, for an unscaled feature vector.
    pub fn predict(&self, features: &[f64]) -> Result<f64, NetError> {
        if features.len() != 3 * self.a {
            return Err(NetError::Dimension {
                expected: 3 * self.a,
                got: features.len(),
            });
        }
        let scaled = self.scaler.transform(features)?;
        Ok(self.scaler.inverse_transform_target(self.network.forward(&scaled)?))
    }

    pub fn predict_table(&self, table: &FeatureTable) -> Result<Vec<f64>, NetError> {
        table.rows.iter().map(|r| self.predict(&r.features)).collect()
    }

    pub fn final_stats(&self) -> Option<EpochStats> {
        self.history.last().copied()
    }
}

/// Scaled rows packed contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub width: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn from_table(table: &FeatureTable) -> Result<Self, NetError> {
        let width = table.width();
        let mut x = Vec::with_capacity(width * table.len());
        let mut y = Vec::with_capacity(table.len());
        for row in &table.rows {
            if row.features.len() != width {
                return Err(NetError::Dimension {
                    expected: width,
                    got: row.features.len(),
                });
            }
            let t = row
                .target
                .ok_or_else(|| NetError::InvalidConfig("training row without target".into()))?;
            x.extend_from_slice(&row.features);
            y.push(t);
        }
        Ok(Self { width, x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> (&[f64], f64) {
        (&self.x[i * self.width..(i + 1) * self.width], self.y[i])
    }

    pub fn rows(&self, idx: &[usize]) -> Vec<(&[f64], f64)> {
        idx.iter().map(|&i| self.row(i)).collect()
    }
}

/// Seeded shuffle of `0..n` split into (train, validation). Validation gets
/// `round(n * split)` rows, at least one and leaving at least one for training.
pub fn split_indices(n: usize, split: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), NetError> {
    if !(split > 0.0 && split < 1.0) {
        return Err(NetError::InvalidConfig(format!("split must lie in (0, 1), got {split}")));
    }
    if n < 2 {
        return Err(NetError::InvalidConfig(format!("need at least 2 rows to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64 * split).round() as usize).clamp(1, n - 1);
    let val = idx.split_off(n - n_val);
    Ok((idx, val))
}

struct Adadelta {
    rho: f64,
    epsilon: f64,
    learning_rate: f64,
    acc_grad: Vec<f64>,
    acc_update: Vec<f64>,
}

impl Adadelta {
    fn new(config: &TrainConfig, n_params: usize) -> Self {
        Self {
            rho: config.rho,
            epsilon: config.epsilon,
            learning_rate: config.learning_rate,
            acc_grad: vec![0.0; n_params],
            acc_update: vec![0.0; n_params],
        }
    }

    fn step(&mut self, net: &mut Network, grad: &Gradient) {
        let mut k = 0;
        for (layer, g) in net.layers.iter_mut().zip(&grad.layers) {
            let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
            let grads = g.weights.iter().chain(&g.biases);
            for (p, &g) in params.zip(grads) {
                let (ag, au) = (&mut self.acc_grad[k], &mut self.acc_update[k]);
                *ag = self.rho * *ag + (1.0 - self.rho) * g * g;
                let update = ((*au + self.epsilon).sqrt() / (*ag + self.epsilon).sqrt()) * g;
                *p -= self.learning_rate * update;
                *au = self.rho * *au + (1.0 - self.rho) * update * update;
                k += 1;
            }
        }
    }
}

fn original_mae(net: &Network, scaler: &Scaler, rows: &[(&[f64], f64)]) -> Result<f64, NetError> {
    let mut total = 0.0;
    for (x, t) in rows {
        let pred = scaler.inverse_transform_target(net.forward(x)?);
        total += (pred - scaler.inverse_transform_target(*t)).abs();
    }
    Ok(total / rows.len() as f64)
}

/// Mini-batch MAE training with Adadelta on a scaled table. The row split
/// is reproducible from `split_indices(n, config.split, config.seed)`.
pub fn train(
    mut net: Network,
    scaled: &FeatureTable,
    scaler: Scaler,
    config: &TrainConfig,
    corpus_fingerprint: &str,
) -> Result<TrainedModel, NetError> {
    if config.batch_size == 0 {
        return Err(NetError::InvalidConfig("batch size must be positive".into()));
    }
    if scaler.n_columns() != scaled.width() + 1 {
        return Err(NetError::Dimension {
            expected: scaled.width() + 1,
            got: scaler.n_columns(),
        });
    }
    if net.input_size() != scaled.width() {
        return Err(NetError::Dimension {
            expected: net.input_size(),
            got: scaled.width(),
        });
    }
    let data = Dataset::from_table(scaled)?;
    let (mut train_idx, val_idx) = split_indices(data.len(), config.split, config.seed)?;
    let val_rows = data.rows(&val_idx);
    let zero_baseline_mae = val_rows
        .iter()
        .map(|(_, t)| scaler.inverse_transform_target(*t).abs())
        .sum::<f64>()
        / val_rows.len() as f64;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut opt = Adadelta::new(config, net.n_params());
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        train_idx.shuffle(&mut shuffle_rng);
        for (b, chunk) in train_idx.chunks(config.batch_size).enumerate() {
            let batch = data.rows(chunk);
            let (loss, grad) = net.mae_gradient(&batch)?;
            if !loss.is_finite() {
                return Err(NetError::TrainingFault { epoch, batch: b + 1 });
            }
            opt.step(&mut net, &grad);
            if !net.is_finite() {
                return Err(NetError::TrainingFault { epoch, batch: b + 1 });
            }
        }
        history.push(EpochStats {
            epoch,
            train_mae: original_mae(&net, &scaler, &data.rows(&train_idx))?,
            val_mae: original_mae(&net, &scaler, &val_rows)?,
        });
    }
    Ok(TrainedModel {
        network: net,
        a: scaled.a,
        scaler,
        config: config.clone(),
        history,
        corpus_fingerprint: corpus_fingerprint.to_owned(),
        zero_baseline_mae,
        train_rows: train_idx.len(),
        val_rows: val_idx.len(),
    })
}

/// Fits the scaler on `table`, initialises the network from `config.seed`
/// and trains it.
pub fn fit_model(
    table: &FeatureTable,
    config: &TrainConfig,
    corpus_fingerprint: &str,
) -> Result<TrainedModel, NetError> {
    let scaler = fit_scaler(table)?;
    let scaled = scaler.transform_table(table)?;
    let net = Network::init(table.a, config.seed)?;
    train(net, &scaled, scaler, config, corpus_fingerprint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::{FeatureRow, Provenance};
    use rand::Rng;

    fn table(n: usize, a: usize, seed: u64, target: impl Fn(&[f64]) -> f64) -> FeatureTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = FeatureTable::new(a);
        for i in 0..n {
            let features: Vec<f64> = (0..3 * a).map(|_| rng.gen_range(0.0..1.0)).collect();
            t.rows.push(FeatureRow {
                target: Some(target(&features)),
                features,
                provenance: Provenance {
                    game_id: "g".into(),
                    event_idx: i,
                    player_id: None,
                    location: None,
                },
            });
        }
        t
    }

    #[test]
    fn split_is_seeded_partition() {
        let (tr, va) = split_indices(100, 0.2, 3).unwrap();
        assert_eq!((tr.len(), va.len()), (80, 20));
        let mut all: Vec<_> = tr.iter().chain(&va).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_indices(100, 0.2, 3).unwrap(), (tr, va));
        assert!(split_indices(1, 0.2, 3).is_err());
        assert!(split_indices(10, 1.0, 3).is_err());
    }

    #[test]
    fn constant_zero_targets_fit_exactly() {
        let t = table(200, 2, 1, |_| 0.0);
        let m = fit_model(&t, &TrainConfig::default(), "fp").unwrap();
        assert_eq!(m.history.len(), 50);
        assert_eq!(m.zero_baseline_mae, 0.0);
        let last = m.final_stats().unwrap();
        assert!(last.val_mae <= m.zero_baseline_mae + 1e-6);
        for w in m.history.windows(2) {
            assert!(w[1].train_mae <= w[0].train_mae);
        }
    }

    #[test]
    fn linear_target_beats_baseline_tenfold() {
        let t = table(1000, 2, 2, |f| 0.1 * f[0]);
        let cfg = TrainConfig { seed: 5, ..TrainConfig::default() };
        let m = fit_model(&t, &cfg, "fp").unwrap();
        // baseline by direct averaging over the validation rows
        let (_, val) = split_indices(t.len(), cfg.split, cfg.seed).unwrap();
        let baseline = val.iter().map(|&i| t.rows[i].target.unwrap().abs()).sum::<f64>() / val.len() as f64;
        assert!((baseline - m.zero_baseline_mae).abs() < 1e-12);
        let last = m.final_stats().unwrap();
        assert!(last.val_mae < 0.1 * baseline, "val {} vs baseline {baseline}", last.val_mae);
    }

    #[test]
    fn training_is_deterministic() {
        let t = table(300, 1, 4, |f| f[0] - f[2]);
        let cfg = TrainConfig { epochs: 5, seed: 11, ..TrainConfig::default() };
        let a = fit_model(&t, &cfg, "fp").unwrap();
        let b = fit_model(&t, &cfg, "fp").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_targets_fault() {
        let t = table(50, 1, 4, |f| f[0]);
        let scaler = fit_scaler(&t).unwrap();
        let mut scaled = scaler.transform_table(&t).unwrap();
        for r in &mut scaled.rows {
            r.target = Some(f64::NAN);
        }
        let err = train(Network::init(1, 0).unwrap(), &scaled, scaler, &TrainConfig::default(), "fp").unwrap_err();
        assert!(matches!(err, NetError::TrainingFault { epoch: 1, .. }), "{err}");
    }

    #[test]
    fn mismatched_network_rejected() {
        let t = table(50, 2, 4, |f| f[0]);
        let scaler = fit_scaler(&t).unwrap();
        let scaled = scaler.transform_table(&t).unwrap();
        let err = train(Network::init(3, 0).unwrap(), &scaled, scaler, &TrainConfig::default(), "fp");
        assert!(matches!(err, Err(NetError::Dimension { .. })));
    }
}
