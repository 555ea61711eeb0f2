//! Flat `key = value` run configuration.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::decoders::{DecoderKind, DecoderSpec, HistoryFeatures, HistoryMode};
use crate::encoder::ModelDims;
use crate::model::ModelConfig;
use crate::oracle::Interpretation;
use crate::training::TrainConfig;
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub model_out: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub decoder: DecoderKind,
    pub history: HistoryMode,
    pub explore: bool,
    pub seed: u64,
    pub epochs: usize,
    pub dev_every: usize,
    pub z: f64,
    pub rho: f64,
    pub eps: f64,
    pub interpretation: Interpretation,
    pub target_train_f1: Option<f64>,
    pub stop_at_target: bool,
    pub joint: bool,
    pub word_dim: usize,
    pub tag_dim: usize,
    pub char_embed_dim: usize,
    pub char_dim: usize,
    pub lstm_dim: usize,
    pub lstm_layers: usize,
    pub label_hidden: usize,
    pub span_hidden: usize,
    pub dropout: f64,
    pub history_dim: usize,
    pub label_embed_dim: usize,
    pub history_span_input: bool,
    pub history_label_input: bool,
    pub history_label_output: bool,
    pub history_span_output: bool,
}

impl Default for Config {
    fn default() -> Self {
        let dims = ModelDims::default();
        let model = ModelConfig::default();
        let train = TrainConfig::new(DecoderSpec {
            kind: DecoderKind::InOrder,
            history: HistoryMode::None,
        });
        Config {
            train: None,
            dev: None,
            model_out: None,
            log: None,
            decoder: DecoderKind::InOrder,
            history: HistoryMode::None,
            explore: train.explore,
            seed: train.seed,
            epochs: train.epochs,
            dev_every: train.dev_every,
            z: train.z,
            rho: train.rho,
            eps: train.eps,
            interpretation: train.interpretation,
            target_train_f1: None,
            stop_at_target: train.stop_at_target,
            joint: train.joint,
            word_dim: dims.word_dim,
            tag_dim: dims.tag_dim,
            char_embed_dim: dims.char_embed_dim,
            char_dim: dims.char_dim,
            lstm_dim: dims.lstm_dim,
            lstm_layers: dims.lstm_layers,
            label_hidden: dims.label_hidden,
            span_hidden: dims.span_hidden,
            dropout: dims.dropout,
            history_dim: model.history_dim,
            label_embed_dim: model.label_embed_dim,
            history_span_input: true,
            history_label_input: true,
            history_label_output: true,
            history_span_output: true,
        }
    }
}

fn parse_value(raw: &str) -> Value {
    match serde_json::from_str::<Value>(raw) {
        Ok(v @ (Value::Bool(_) | Value::Number(_) | Value::Null)) => v,
        _ => Value::String(raw.to_string()),
    }
}

impl Config {
    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Config, Error> {
        Config::default().with_overrides(text.lines().enumerate().filter_map(|(n, line)| {
            let line = line.trim();
            (!line.is_empty() && !line.starts_with('#')).then_some((n + 1, line))
        }))
    }

    /// Applies `key = value` assignments on top of `self`.
    pub fn apply<'a>(&self, assignments: impl IntoIterator<Item = &'a str>) -> Result<Config, Error> {
        self.clone().with_overrides(assignments.into_iter().enumerate().map(|(n, s)| (n + 1, s)))
    }

    fn with_overrides<'a>(self, lines: impl Iterator<Item = (usize, &'a str)>) -> Result<Config, Error> {
        let Value::Object(mut map) = serde_json::to_value(&self).map_err(|e| Error::Config(e.to_string()))? else {
            unreachable!("config serializes to an object")
        };
        for (line_no, line) in lines {
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line_no}: expected key = value, got {line:?}")))?;
            let key = key.trim();
            if !map.contains_key(key) {
                return Err(Error::Config(format!("line {line_no}: unknown key {key:?}")));
            }
            map.insert(key.to_string(), parse_value(raw.trim()));
        }
        let config: Config = serde_json::from_value(Value::Object(map)).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), Error> {
        DecoderSpec::new(self.decoder, self.history)?;
        if self.history != HistoryMode::None {
            self.features().validate()?;
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if self.lstm_layers == 0 {
            return Err(Error::Config("lstm_layers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn features(&self) -> HistoryFeatures {
        HistoryFeatures {
            span_input: self.history_span_input,
            label_input: self.history_label_input,
            label_output: self.history_label_output,
            span_output: self.history_span_output,
        }
    }

    pub fn decoder_spec(&self) -> Result<DecoderSpec, Error> {
        DecoderSpec::new(self.decoder, self.history)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            dims: ModelDims {
                word_dim: self.word_dim,
                tag_dim: self.tag_dim,
                char_embed_dim: self.char_embed_dim,
                char_dim: self.char_dim,
                lstm_dim: self.lstm_dim,
                lstm_layers: self.lstm_layers,
                label_hidden: self.label_hidden,
                span_hidden: self.span_hidden,
                dropout: self.dropout,
            },
            history: self.history,
            features: self.features(),
            history_dim: self.history_dim,
            label_embed_dim: self.label_embed_dim,
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, Error> {
        let cfg = TrainConfig {
            decoder: self.decoder_spec()?,
            explore: self.explore,
            z: self.z,
            rho: self.rho,
            eps: self.eps,
            epochs: self.epochs,
            seed: self.seed,
            dev_every: self.dev_every,
            interpretation: self.interpretation,
            target_train_f1: self.target_train_f1,
            stop_at_target: self.stop_at_target,
            joint: self.joint,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Renders every key in declaration order; unset optional values are
/// omitted.
impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Ok(Value::Object(map)) = serde_json::to_value(self) else {
            return Err(fmt::Error);
        };
        let map: Map<String, Value> = map;
        for (key, value) in map {
            match value {
                Value::Null => {}
                Value::String(s) => writeln!(f, "{key} = {s}")?,
                other => writeln!(f, "{key} = {other}")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut c = Config::default();
        c.train = Some("data/train.txt".into());
        c.history = HistoryMode::Stack;
        c.dropout = 0.25;
        c.target_train_f1 = Some(100.0);
        let text = c.to_string();
        assert_eq!(Config::parse(&text).unwrap(), c);
        assert_eq!(Config::parse(&Config::default().to_string()).unwrap(), Config::default());
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(Config::parse("learning_rate = 3").is_err());
        assert!(Config::parse("decoder = beam").is_err());
        assert!(Config::parse("decoder = cky\nhistory = chain").is_err());
        assert!(Config::parse("history = chain\nhistory_span_input = false\nhistory_label_input = false").is_err());
        assert!(Config::parse("epochs").is_err());
    }

    #[test]
    fn overrides_apply_in_order() {
        let base = Config::parse("# comment\n\nepochs = 5\nexplore = true\n").unwrap();
        assert_eq!(base.epochs, 5);
        assert!(base.explore);
        let c = base.apply(["epochs = 7", "seed = 3"]).unwrap();
        assert_eq!((c.epochs, c.seed), (7, 3));
    }
}
