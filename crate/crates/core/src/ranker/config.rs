use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Shape of the transformer pair encoder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub max_seq_len: usize,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 0,
            width: 64,
            layers: 2,
            heads: 4,
            ff_width: 128,
            max_seq_len: 100,
            dropout: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.width == 0 || self.heads == 0 || self.ff_width == 0 || self.max_seq_len == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if !self.width.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "width {} is not divisible by {} heads",
                self.width, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Full model shape: encoder, recurrent aggregator and classifier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DialBertConfig {
    pub encoder: EncoderConfig,
    /// Hidden size of each direction of the aggregator.
    pub aggregator_hidden: usize,
    /// When false, pair encodings feed the classifier directly.
    pub use_aggregator: bool,
    /// Append the hand-engineered pair features to each pair encoding.
    pub use_features: bool,
}

impl Default for DialBertConfig {
    fn default() -> Self {
        DialBertConfig {
            encoder: EncoderConfig::default(),
            aggregator_hidden: 32,
            use_aggregator: true,
            use_features: false,
        }
    }
}

impl DialBertConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.use_aggregator && self.aggregator_hidden == 0 {
            return Err(Error::Config("aggregator hidden size must be positive".into()));
        }
        Ok(())
    }

    /// Width of each pair encoding entering the aggregator.
    pub fn pair_width(&self) -> usize {
        self.encoder.width + if self.use_features { crate::features::NUM_FEATURES } else { 0 }
    }

    /// Width `H` of the per-slot similarity vectors.
    pub fn output_width(&self) -> usize {
        if self.use_aggregator {
            2 * self.aggregator_hidden
        } else {
            self.pair_width()
        }
    }

    /// Width of the comparison tuple and of the classifier hidden layer.
    pub fn classifier_width(&self) -> usize {
        4 * self.output_width()
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        let e = &self.encoder;
        [
            ("vocab_size", e.vocab_size.to_string()),
            ("width", e.width.to_string()),
            ("layers", e.layers.to_string()),
            ("heads", e.heads.to_string()),
            ("ff_width", e.ff_width.to_string()),
            ("max_seq_len", e.max_seq_len.to_string()),
            ("dropout", e.dropout.to_string()),
            ("aggregator_hidden", self.aggregator_hidden.to_string()),
            ("use_aggregator", self.use_aggregator.to_string()),
            ("use_features", self.use_features.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let encoder = EncoderConfig {
            vocab_size: parse_key(map, "vocab_size")?,
            width: parse_key(map, "width")?,
            layers: parse_key(map, "layers")?,
            heads: parse_key(map, "heads")?,
            ff_width: parse_key(map, "ff_width")?,
            max_seq_len: parse_key(map, "max_seq_len")?,
            dropout: parse_key(map, "dropout")?,
        };
        let config = DialBertConfig {
            encoder,
            aggregator_hidden: parse_key(map, "aggregator_hidden")?,
            use_aggregator: parse_key(map, "use_aggregator")?,
            use_features: parse_key(map, "use_features")?,
        };
        config.validate()?;
        Ok(config)
    }
}

pub(crate) fn parse_key<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = map
        .get(key)
        .ok_or_else(|| Error::Config(format!("missing key {key}")))?;
    raw.parse()
        .map_err(|_| Error::Config(format!("bad value {raw:?} for {key}")))
}

/// Optimization settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Targets per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the conversation loss.
    pub alpha: f64,
    /// Seeds parameter initialization and dropout.
    pub seed: u64,
    /// Seeds the order in which targets are visited.
    pub shuffle_seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Floor applied to probabilities inside logarithms.
    pub prob_floor: f64,
    /// Abort when a step's mean loss exceeds this.
    pub divergence_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 4,
            epochs: 10,
            alpha: 0.1,
            seed: 0,
            shuffle_seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            prob_floor: 1e-12,
            divergence_threshold: 1e3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 {
            return Err(Error::Config("alpha must be non-negative".into()));
        }
        if self.prob_floor <= 0.0 {
            return Err(Error::Config("probability floor must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}
