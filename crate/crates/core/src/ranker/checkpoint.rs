//! Text checkpoint archive: a versioned header of `key=value` lines
//! followed by named tensors, one matrix row per line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::RngCore;

use super::baseline::{FeedforwardRanker, LinearRanker};
use super::config::DialBertConfig;
use super::dialbert::DialBert;
use super::params::ParamSet;
use super::{Example, Ranker};
use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Mat;

const MAGIC: &str = "disentangle-checkpoint 1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    DialBert,
    Linear,
    Feedforward,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::DialBert => "dialbert",
            ModelKind::Linear => "linear",
            ModelKind::Feedforward => "feedforward",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dialbert" => Ok(ModelKind::DialBert),
            "linear" => Ok(ModelKind::Linear),
            "feedforward" => Ok(ModelKind::Feedforward),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Any trained ranker.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    DialBert(DialBert),
    Linear(LinearRanker),
    Feedforward(FeedforwardRanker),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::DialBert(_) => ModelKind::DialBert,
            Model::Linear(_) => ModelKind::Linear,
            Model::Feedforward(_) => ModelKind::Feedforward,
        }
    }

    fn header(&self) -> BTreeMap<String, String> {
        match self {
            Model::DialBert(m) => m.config().to_map(),
            _ => BTreeMap::new(),
        }
    }

    /// Rebuilds a model of the same kind and configuration around `params`.
    pub fn with_params(&self, params: ParamSet) -> Result<Model> {
        rebuild(self.kind(), &self.header(), params)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{MAGIC}").unwrap();
        writeln!(out, "kind={}", self.kind().as_str()).unwrap();
        for (k, v) in self.header() {
            writeln!(out, "{k}={v}").unwrap();
        }
        let params = self.params();
        writeln!(out, "tensors={}", params.len()).unwrap();
        for (name, t) in params.names().iter().zip(params.tensors()) {
            writeln!(out, "tensor {name} {} {}", t.rows, t.cols).unwrap();
            for r in 0..t.rows {
                let row: Vec<String> = t.row(r).iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Model> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("missing or unsupported version header".into()));
        }
        let mut header = BTreeMap::new();
        let count: usize = loop {
            let line = lines.next().ok_or_else(|| bad("truncated header".into()))?;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("bad header line {line:?}")))?;
            if k == "tensors" {
                break v.parse().map_err(|_| bad(format!("bad tensor count {v:?}")))?;
            }
            header.insert(k.to_string(), v.to_string());
        };
        let kind: ModelKind = header
            .remove("kind")
            .ok_or_else(|| bad("missing model kind".into()))?
            .parse()?;
        let mut params = ParamSet::new();
        for _ in 0..count {
            let line = lines.next().ok_or_else(|| bad("truncated tensor list".into()))?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [tag, name, rows, cols] = parts[..] else {
                return Err(bad(format!("bad tensor header {line:?}")));
            };
            if tag != "tensor" {
                return Err(bad(format!("bad tensor header {line:?}")));
            }
            let rows: usize = rows.parse().map_err(|_| bad(format!("bad rows in {line:?}")))?;
            let cols: usize = cols.parse().map_err(|_| bad(format!("bad cols in {line:?}")))?;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let row = lines.next().ok_or_else(|| bad(format!("truncated tensor {name}")))?;
                for v in row.split_whitespace() {
                    data.push(v.parse::<f64>().map_err(|_| bad(format!("bad value {v:?} in {name}")))?);
                }
            }
            if data.len() != rows * cols {
                return Err(bad(format!("tensor {name} has {} values, expected {}", data.len(), rows * cols)));
            }
            params.push(name, Mat::from_vec(rows, cols, data));
        }
        rebuild(kind, &header, params)
    }
}

fn rebuild(kind: ModelKind, header: &BTreeMap<String, String>, params: ParamSet) -> Result<Model> {
    Ok(match kind {
        ModelKind::DialBert => Model::DialBert(DialBert::from_params(DialBertConfig::from_map(header)?, params)?),
        ModelKind::Linear => Model::Linear(LinearRanker::from_params(params)?),
        ModelKind::Feedforward => Model::Feedforward(FeedforwardRanker::from_params(params)?),
    })
}

pub fn save_checkpoint(path: &Path, model: &Model) -> Result<()> {
    std::fs::write(path, model.to_text()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Model::from_text(&text)
}

impl Ranker for Model {
    fn params(&self) -> &ParamSet {
        match self {
            Model::DialBert(m) => m.params(),
            Model::Linear(m) => m.params(),
            Model::Feedforward(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        match self {
            Model::DialBert(m) => m.params_mut(),
            Model::Linear(m) => m.params_mut(),
            Model::Feedforward(m) => m.params_mut(),
        }
    }

    fn needs_features(&self) -> bool {
        match self {
            Model::DialBert(m) => m.needs_features(),
            Model::Linear(_) | Model::Feedforward(_) => true,
        }
    }

    fn dropout_rate(&self) -> f64 {
        match self {
            Model::DialBert(m) => m.dropout_rate(),
            _ => 0.0,
        }
    }

    fn probs_graph<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        vars: &[Var],
        example: &Example,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        match self {
            Model::DialBert(m) => m.probs_graph(tape, vars, example, rng),
            Model::Linear(m) => m.probs_graph(tape, vars, example, rng),
            Model::Feedforward(m) => m.probs_graph(tape, vars, example, rng),
        }
    }
}
