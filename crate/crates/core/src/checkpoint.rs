//! Self-describing JSON checkpoints for trained networks.
//!
//! Floats are written with shortest round-trip formatting and parsed with
//! exact round-trip parsing, so `load(save(m))` reproduces every parameter bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{CharVocabulary, BOS, EOS, UNK};
use crate::error::{Error, Result};
use crate::layers::{HybridNetwork, NetworkConfig};
use crate::training::{EpochMetrics, TrainConfig, TrainedModel};

pub const FORMAT_NAME: &str = "attrnet-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct VocabRecord {
    bos: usize,
    eos: usize,
    unk: usize,
    chars: Vec<char>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointDoc {
    format: String,
    format_version: u32,
    network: NetworkConfig,
    training: TrainConfig,
    vocabulary: VocabRecord,
    labels: Vec<String>,
    best_epoch: usize,
    best_validation_accuracy: f64,
    #[serde(default)]
    history: Vec<EpochMetrics>,
    parameters: Vec<TensorRecord>,
}

pub fn to_string(model: &TrainedModel) -> Result<String> {
    let doc = CheckpointDoc {
        format: FORMAT_NAME.to_string(),
        format_version: FORMAT_VERSION,
        network: model.network.config.clone(),
        training: model.config.clone(),
        vocabulary: VocabRecord {
            bos: BOS,
            eos: EOS,
            unk: UNK,
            chars: model.vocab.chars().to_vec(),
        },
        labels: model.labels.clone(),
        best_epoch: model.best_epoch,
        best_validation_accuracy: model.best_validation_accuracy,
        history: model.history.clone(),
        parameters: model
            .network
            .tensors()
            .into_iter()
            .map(|t| TensorRecord {
                name: t.name,
                shape: t.shape,
                values: t.data.to_vec(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn from_str(text: &str) -> Result<TrainedModel> {
    let doc: CheckpointDoc = serde_json::from_str(text).map_err(|e| bad(format!("malformed document: {e}")))?;
    if doc.format != FORMAT_NAME {
        return Err(bad(format!("unknown format {:?}", doc.format)));
    }
    if doc.format_version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            doc.format_version
        )));
    }
    let v = &doc.vocabulary;
    if (v.bos, v.eos, v.unk) != (BOS, EOS, UNK) {
        return Err(bad(format!(
            "marker indices ({}, {}, {}) differ from ({BOS}, {EOS}, {UNK})",
            v.bos, v.eos, v.unk
        )));
    }
    if v.chars.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad("vocabulary characters are not strictly increasing"));
    }
    let vocab = CharVocabulary::from_chars(v.chars.clone());
    if vocab.size() != doc.network.vocab_size {
        return Err(bad(format!(
            "vocabulary has {} entries but the network expects {}",
            vocab.size(),
            doc.network.vocab_size
        )));
    }
    if doc.labels.len() != doc.network.num_classes {
        return Err(bad(format!(
            "{} labels for a network with {} classes",
            doc.labels.len(),
            doc.network.num_classes
        )));
    }

    let mut network = HybridNetwork::zeros(doc.network).map_err(|e| bad(e.to_string()))?;
    let mut stored = doc.parameters.into_iter();
    for slot in network.tensors_mut() {
        let rec = stored
            .next()
            .ok_or_else(|| bad(format!("missing tensor {}", slot.name)))?;
        if rec.name != slot.name {
            return Err(bad(format!("expected tensor {}, found {}", slot.name, rec.name)));
        }
        if rec.shape != slot.shape || rec.values.len() != slot.data.len() {
            return Err(bad(format!(
                "tensor {}: shape {:?} with {} values, expected {:?}",
                rec.name,
                rec.shape,
                rec.values.len(),
                slot.shape
            )));
        }
        slot.data.copy_from_slice(&rec.values);
    }
    if let Some(extra) = stored.next() {
        return Err(bad(format!("unexpected tensor {}", extra.name)));
    }
    Ok(TrainedModel {
        network,
        vocab,
        labels: doc.labels,
        best_epoch: doc.best_epoch,
        best_validation_accuracy: doc.best_validation_accuracy,
        config: doc.training,
        history: doc.history,
    })
}

pub fn save(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_string(model)?).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttributeRecord, DomainCatalog};
    use crate::training::train;

    fn small_model() -> TrainedModel {
        let recs = [("a", "x", "red"), ("a", "x", "blue"), ("a", "y", "12"), ("a", "y", "7°")];
        let cat = DomainCatalog::from_records(recs.iter().map(|&(s, a, v)| AttributeRecord::new(s, a, v))).unwrap();
        let mut cfg = TrainConfig::default();
        cfg.embedding_size = 4;
        cfg.epochs = 2;
        cfg.learning_rate = 1e-2;
        train(&cat, &cfg).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = small_model();
        let back = from_str(&to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        for (a, b) in m.network.tensors().iter().zip(back.network.tensors()) {
            let bits = |d: &[f64]| d.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a.data), bits(b.data));
        }
    }

    #[test]
    fn rejects_wrong_version() {
        let text = to_string(&small_model()).unwrap().replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(matches!(from_str(&text), Err(Error::Checkpoint(m)) if m.contains("version")));
    }

    #[test]
    fn rejects_tampered_shapes_and_labels() {
        let m = small_model();
        let mut doc: serde_json::Value = serde_json::from_str(&to_string(&m).unwrap()).unwrap();
        doc["parameters"][0]["values"].as_array_mut().unwrap().pop();
        assert!(from_str(&doc.to_string()).is_err());

        let mut doc: serde_json::Value = serde_json::from_str(&to_string(&m).unwrap()).unwrap();
        doc["labels"].as_array_mut().unwrap().push("z".into());
        assert!(from_str(&doc.to_string()).is_err());

        let mut doc: serde_json::Value = serde_json::from_str(&to_string(&m).unwrap()).unwrap();
        doc["parameters"].as_array_mut().unwrap().pop();
        assert!(from_str(&doc.to_string()).is_err());

        let mut doc: serde_json::Value = serde_json::from_str(&to_string(&m).unwrap()).unwrap();
        doc["vocabulary"]["chars"].as_array_mut().unwrap().pop();
        assert!(from_str(&doc.to_string()).is_err());
    }

    #[test]
    fn file_round_trip() {
        let m = small_model();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        save(&m, &p).unwrap();
        let back = load(&p).unwrap();
        assert_eq!(back.predict("red").unwrap(), m.predict("red").unwrap());
    }
}
