//! Model files are a single JSON document. Floats are written in shortest
//! round-trip form and parsed with exact rounding, so a reloaded model
//! predicts bit-identically.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpochStats, Layer, NetError, Network, TrainConfig, TrainedModel};
use crate::sequences::Scaler;

pub const MODEL_FORMAT: &str = "daxt-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    a: usize,
    layer_sizes: Vec<usize>,
    seed: u64,
    layers: Vec<Layer>,
    scaler: Scaler,
    config: TrainConfig,
    history: Vec<EpochStats>,
    corpus_fingerprint: String,
    zero_baseline_mae: f64,
    train_rows: usize,
    val_rows: usize,
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<(), NetError> {
    let path = path.as_ref();
    let file = ModelFile {
        format: MODEL_FORMAT.to_owned(),
        version: MODEL_VERSION,
        a: model.a,
        layer_sizes: model.network.sizes(),
        seed: model.network.seed,
        layers: model.network.layers.clone(),
        scaler: model.scaler.clone(),
        config: model.config.clone(),
        history: model.history.clone(),
        corpus_fingerprint: model.corpus_fingerprint.clone(),
        zero_baseline_mae: model.zero_baseline_mae,
        train_rows: model.train_rows,
        val_rows: model.val_rows,
    };
    let mut text = serde_json::to_string_pretty(&file).map_err(|e| NetError::Corrupt {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| NetError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, NetError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let corrupt = |reason: String| NetError::Corrupt {
        path: shown.clone(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(|source| NetError::Io {
        path: shown.clone(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
    if value.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) {
        return Err(corrupt(format!("not a {MODEL_FORMAT} document")));
    }
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(MODEL_VERSION) => {}
        other => {
            return Err(NetError::Version {
                path: shown,
                found: other.map_or_else(|| "missing".into(), |v| v.to_string()),
                expected: MODEL_VERSION,
            })
        }
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;

    let network = Network {
        layers: file.layers,
        seed: file.seed,
    };
    if network.layers.is_empty() || network.sizes() != file.layer_sizes {
        return Err(corrupt("layer sizes do not match the stored layers".into()));
    }
    for (l, layer) in network.layers.iter().enumerate() {
        if layer.weights.len() != layer.inputs * layer.outputs || layer.biases.len() != layer.outputs {
            return Err(corrupt(format!("layer {l} has inconsistent parameter counts")));
        }
        if l > 0 && network.layers[l - 1].outputs != layer.inputs {
            return Err(corrupt(format!("layer {l} does not chain onto layer {}", l - 1)));
        }
    }
    if network.sizes().last() != Some(&1) {
        return Err(corrupt("network must have a single output".into()));
    }
    if !network.is_finite() {
        return Err(corrupt("non-finite parameters".into()));
    }
    if file.a < 1 || network.input_size() != 3 * file.a {
        return Err(corrupt(format!("input size {} does not match a = {}", network.input_size(), file.a)));
    }
    if file.scaler.mins.len() != 3 * file.a + 1 || file.scaler.maxs.len() != file.scaler.mins.len() {
        return Err(corrupt("scaler column count must be 3a + 1".into()));
    }
    if file.history.len() != file.config.epochs {
        return Err(corrupt("history length differs from the epoch count".into()));
    }
    Ok(TrainedModel {
        network,
        scaler: file.scaler,
        a: file.a,
        config: file.config,
        history: file.history,
        corpus_fingerprint: file.corpus_fingerprint,
        zero_baseline_mae: file.zero_baseline_mae,
        train_rows: file.train_rows,
        val_rows: file.val_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::fit_model;
    use crate::sequences::{FeatureRow, FeatureTable, Provenance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(a: usize, n: usize) -> FeatureTable {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut t = FeatureTable::new(a);
        for i in 0..n {
            let features: Vec<f64> = (0..3 * a).map(|_| rng.gen_range(-1.0..1.0)).collect();
            t.rows.push(FeatureRow {
                target: Some(features[0] * 0.3 - features[1] * 0.01),
                features,
                provenance: Provenance { game_id: "g".into(), event_idx: i, player_id: None, location: None },
            });
        }
        t
    }

    fn trained(a: usize) -> TrainedModel {
        let cfg = TrainConfig { epochs: 3, seed: 2, ..TrainConfig::default() };
        fit_model(&table(a, 200), &cfg, "abc123").unwrap()
    }

    #[test]
    fn round_trip_predicts_bit_identically() {
        let m = trained(2);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        save_model(&m, &p).unwrap();
        let back = load_model(&p).unwrap();
        assert_eq!(back, m);
        for row in table(2, 100).rows {
            let a = m.predict(&row.features).unwrap();
            let b = back.predict(&row.features).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_file_fails_to_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        save_model(&trained(1), &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        fs::write(&p, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_model(&p), Err(NetError::Corrupt { .. })));
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        save_model(&trained(1), &p).unwrap();
        let text = fs::read_to_string(&p).unwrap().replace("\"version\": 1", "\"version\": 7");
        fs::write(&p, text).unwrap();
        assert!(matches!(load_model(&p), Err(NetError::Version { .. })));
    }

    #[test]
    fn tampered_shapes_are_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        save_model(&trained(1), &p).unwrap();
        let text = fs::read_to_string(&p).unwrap().replacen("\"a\": 1", "\"a\": 2", 1);
        fs::write(&p, text).unwrap();
        assert!(matches!(load_model(&p), Err(NetError::Corrupt { .. })));
    }

    #[test]
    fn wider_model_rejects_narrow_features_at_predict_time() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        save_model(&trained(3), &p).unwrap();
        let m = load_model(&p).unwrap();
        let narrow = table(2, 1);
        assert!(matches!(m.predict(&narrow.rows[0].features), Err(NetError::Dimension { expected: 9, got: 6 })));
    }
}
