//! Pair encoder, bidirectional LSTM context aggregator and heuristic
//! matching classifier.
//!
//! For a window of `T` slots the model encodes every `[CLS] target [SEP]
//! candidate [SEP]` pair with a small transformer, runs an LSTM in both
//! directions over the slot sequence, and compares each slot's vector `f_i`
//! with the self-pair vector `f_0` through `[f_0, f_i, f_0 * f_i, f_0 - f_i]`,
//! a tanh layer and a scalar projection. A softmax over the valid slots gives
//! the parent distribution.

use rand::{Rng, RngCore};

use super::config::DialBertConfig;
use super::params::ParamSet;
use super::{register_params, Example, Ranker};
use crate::autograd::{Tape, Var};
use crate::corpus::{PAD, SEP};
use crate::error::{Error, Result};
use crate::features::NUM_FEATURES;
use crate::ranker::Scores;
use crate::tensor::Mat;

const EMBEDDING_STD: f64 = 0.02;

#[derive(Clone, Copy)]
enum Init {
    Embedding,
    Dense { fan_in: usize },
    Zeros,
    Ones,
    /// LSTM gate bias: forget gate starts at one.
    ForgetBias { hidden: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct LayerLayout {
    wq: usize,
    bq: usize,
    wk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln1_g: usize,
    ln1_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    ln2_g: usize,
    ln2_b: usize,
}

/// Indices of one LSTM direction's tensors. Gates are ordered input,
/// forget, cell, output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct CellLayout {
    wx: usize,
    wh: usize,
    b: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Layout {
    tok: usize,
    pos: usize,
    seg: usize,
    emb_ln_g: usize,
    emb_ln_b: usize,
    layers: Vec<LayerLayout>,
    cells: Option<(CellLayout, CellLayout)>,
    cls_w: usize,
    cls_b: usize,
    out_w: usize,
}

fn build_layout(config: &DialBertConfig, mut make: impl FnMut(&str, usize, usize, Init) -> Mat) -> (ParamSet, Layout) {
    let e = &config.encoder;
    let d = e.width;
    let mut p = ParamSet::new();
    let mut add = |p: &mut ParamSet, name: &str, rows: usize, cols: usize, init: Init| {
        let m = make(name, rows, cols, init);
        p.push(name, m)
    };
    let tok = add(&mut p, "embeddings.token", e.vocab_size, d, Init::Embedding);
    let pos = add(&mut p, "embeddings.position", e.max_seq_len, d, Init::Embedding);
    let seg = add(&mut p, "embeddings.segment", 2, d, Init::Embedding);
    let emb_ln_g = add(&mut p, "embeddings.norm.gain", 1, d, Init::Ones);
    let emb_ln_b = add(&mut p, "embeddings.norm.bias", 1, d, Init::Zeros);
    let mut layers = Vec::with_capacity(e.layers);
    for l in 0..e.layers {
        let n = |s: &str| format!("encoder.{l}.{s}");
        let dense = Init::Dense { fan_in: d };
        layers.push(LayerLayout {
            wq: add(&mut p, &n("attention.query.weight"), d, d, dense),
            bq: add(&mut p, &n("attention.query.bias"), 1, d, Init::Zeros),
            wk: add(&mut p, &n("attention.key.weight"), d, d, dense),
            wv: add(&mut p, &n("attention.value.weight"), d, d, dense),
            bv: add(&mut p, &n("attention.value.bias"), 1, d, Init::Zeros),
            wo: add(&mut p, &n("attention.output.weight"), d, d, dense),
            bo: add(&mut p, &n("attention.output.bias"), 1, d, Init::Zeros),
            ln1_g: add(&mut p, &n("attention.norm.gain"), 1, d, Init::Ones),
            ln1_b: add(&mut p, &n("attention.norm.bias"), 1, d, Init::Zeros),
            w1: add(&mut p, &n("feedforward.inner.weight"), d, e.ff_width, dense),
            b1: add(&mut p, &n("feedforward.inner.bias"), 1, e.ff_width, Init::Zeros),
            w2: add(
                &mut p,
                &n("feedforward.outer.weight"),
                e.ff_width,
                d,
                Init::Dense { fan_in: e.ff_width },
            ),
            b2: add(&mut p, &n("feedforward.outer.bias"), 1, d, Init::Zeros),
            ln2_g: add(&mut p, &n("feedforward.norm.gain"), 1, d, Init::Ones),
            ln2_b: add(&mut p, &n("feedforward.norm.bias"), 1, d, Init::Zeros),
        });
    }
    let cells = config.use_aggregator.then(|| {
        let k = config.aggregator_hidden;
        let input = config.pair_width();
        let mut cell = |dir: &str| CellLayout {
            wx: add(
                &mut p,
                &format!("aggregator.{dir}.input_weight"),
                input,
                4 * k,
                Init::Dense { fan_in: input },
            ),
            wh: add(
                &mut p,
                &format!("aggregator.{dir}.hidden_weight"),
                k,
                4 * k,
                Init::Dense { fan_in: k },
            ),
            b: add(&mut p, &format!("aggregator.{dir}.bias"), 1, 4 * k, Init::ForgetBias { hidden: k }),
        };
        let fwd = cell("forward");
        let bwd = cell("backward");
        (fwd, bwd)
    });
    let g = config.classifier_width();
    let cls_w = add(&mut p, "classifier.hidden.weight", g, g, Init::Dense { fan_in: g });
    let cls_b = add(&mut p, "classifier.hidden.bias", 1, g, Init::Zeros);
    let out_w = add(&mut p, "classifier.output.weight", g, 1, Init::Dense { fan_in: g });
    let layout = Layout {
        tok,
        pos,
        seg,
        emb_ln_g,
        emb_ln_b,
        layers,
        cells,
        cls_w,
        cls_b,
        out_w,
    };
    (p, layout)
}

fn init_tensor(rows: usize, cols: usize, init: Init, rng: &mut impl Rng) -> Mat {
    match init {
        Init::Embedding => Mat::randn(rows, cols, EMBEDDING_STD, rng),
        Init::Dense { fan_in } => Mat::randn(rows, cols, 1.0 / (fan_in as f64).sqrt(), rng),
        Init::Zeros => Mat::zeros(rows, cols),
        Init::Ones => Mat::filled(rows, cols, 1.0),
        Init::ForgetBias { hidden } => {
            let mut m = Mat::zeros(rows, cols);
            m.data[hidden..2 * hidden].fill(1.0);
            m
        }
    }
}

/// The full pair-ranking model.
#[derive(Clone, Debug, PartialEq)]
pub struct DialBert {
    config: DialBertConfig,
    params: ParamSet,
    layout: Layout,
}

/// Per-forward dropout state; `None` disables dropout.
pub(crate) struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut dyn RngCore,
}

impl Dropout<'_> {
    fn apply(&mut self, tape: &mut Tape, x: Var) -> Var {
        if self.rate == 0.0 {
            return x;
        }
        let keep = 1.0 - self.rate;
        let n = tape.value(x).len();
        let mask = (0..n)
            .map(|_| if self.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        tape.dropout(x, mask)
    }
}

fn maybe_dropout(drop: &mut Option<Dropout>, tape: &mut Tape, x: Var) -> Var {
    match drop {
        Some(d) => d.apply(tape, x),
        None => x,
    }
}

impl DialBert {
    pub fn new(config: DialBertConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (params, layout) = build_layout(&config, |_, r, c, init| init_tensor(r, c, init, rng));
        Ok(DialBert { config, params, layout })
    }

    /// Wraps loaded tensors, checking names and shapes against `config`.
    pub fn from_params(config: DialBertConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        let (template, layout) = build_layout(&config, |_, r, c, _| Mat::zeros(r, c));
        template.check_compatible(&params)?;
        Ok(DialBert { config, params, layout })
    }

    pub fn config(&self) -> &DialBertConfig {
        &self.config
    }

    pub(crate) fn token_embedding_index(&self) -> usize {
        self.layout.tok
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        let e = &self.config.encoder;
        if tokens.len() > e.max_seq_len {
            return Err(Error::Shape(format!(
                "sequence of {} tokens exceeds the maximum of {}",
                tokens.len(),
                e.max_seq_len
            )));
        }
        if tokens.is_empty() {
            return Err(Error::Shape("empty token sequence".into()));
        }
        if let Some(&id) = tokens.iter().find(|&&t| t as usize >= e.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id,
                vocab_size: e.vocab_size,
            });
        }
        Ok(())
    }

    /// Runs the transformer over equal-padded sequences and returns all
    /// hidden states (`n * seq_len` rows) with the padded length.
    pub(crate) fn encode_sequences(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        seqs: &[&[u32]],
        drop: &mut Option<Dropout>,
    ) -> Result<(Var, usize)> {
        for s in seqs {
            self.check_tokens(s)?;
        }
        let e = &self.config.encoder;
        let len = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let rows = seqs.len() * len;
        let mut ids = Vec::with_capacity(rows);
        let mut positions = Vec::with_capacity(rows);
        let mut segments = Vec::with_capacity(rows);
        let mut key_mask = Vec::with_capacity(rows);
        for s in seqs {
            let first_sep = s.iter().position(|&t| t == SEP).unwrap_or(s.len());
            for i in 0..len {
                let real = i < s.len();
                ids.push(if real { s[i] as usize } else { PAD as usize });
                positions.push(i);
                segments.push(usize::from(i > first_sep));
                key_mask.push(real);
            }
        }
        let l = &self.layout;
        let tok = tape.gather(vars[l.tok], ids);
        let pos = tape.gather(vars[l.pos], positions);
        let seg = tape.gather(vars[l.seg], segments);
        let x = tape.add(tok, pos);
        let x = tape.add(x, seg);
        let x = tape.layer_norm(x, vars[l.emb_ln_g], vars[l.emb_ln_b]);
        let mut x = maybe_dropout(drop, tape, x);
        for layer in &l.layers {
            let dense = |tape: &mut Tape, input: Var, w: usize, b: usize| {
                let y = tape.matmul(input, vars[w]);
                tape.add_row(y, vars[b])
            };
            let q = dense(tape, x, layer.wq, layer.bq);
            // a key bias would shift every score of a query equally
            let k = tape.matmul(x, vars[layer.wk]);
            let v = dense(tape, x, layer.wv, layer.bv);
            let att = tape.attention(q, k, v, len, e.heads, &key_mask);
            let att = dense(tape, att, layer.wo, layer.bo);
            let att = maybe_dropout(drop, tape, att);
            let res = tape.add(x, att);
            x = tape.layer_norm(res, vars[layer.ln1_g], vars[layer.ln1_b]);
            let h = dense(tape, x, layer.w1, layer.b1);
            let h = tape.gelu(h);
            let h = dense(tape, h, layer.w2, layer.b2);
            let h = maybe_dropout(drop, tape, h);
            let res = tape.add(x, h);
            x = tape.layer_norm(res, vars[layer.ln2_g], vars[layer.ln2_b]);
        }
        Ok((x, len))
    }

    /// Pair encodings for the valid slots, in slot order, with features
    /// appended when the model uses them.
    fn pair_encodings(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        example: &Example,
        drop: &mut Option<Dropout>,
    ) -> Result<(Var, Vec<usize>)> {
        let batch = &example.batch;
        let slots: Vec<usize> = (0..batch.num_slots()).filter(|&s| batch.valid_mask[s]).collect();
        if slots.first() != Some(&0) {
            return Err(Error::NoValidSlots);
        }
        let seqs: Vec<&[u32]> = slots.iter().map(|&s| batch.pair_tokens[s].as_slice()).collect();
        let (hidden, len) = self.encode_sequences(tape, vars, &seqs, drop)?;
        let cls_rows = (0..slots.len()).map(|i| i * len).collect();
        let mut e = tape.select_rows(hidden, cls_rows);
        if self.config.use_features {
            let features = example
                .features
                .as_ref()
                .ok_or_else(|| Error::Config("model expects pair features".into()))?;
            if features.len() != batch.num_slots() {
                return Err(Error::SchemaMismatch {
                    expected: batch.num_slots(),
                    actual: features.len(),
                });
            }
            let rows: Vec<Vec<f64>> = slots.iter().map(|&s| features[s].values.to_vec()).collect();
            let phi = tape.constant(Mat::from_rows(&rows));
            e = tape.concat_cols(&[e, phi]);
        }
        Ok((e, slots))
    }

    fn lstm_direction(tape: &mut Tape, vars: &[Var], cell: CellLayout, input: Var, hidden: usize, reverse: bool) -> Var {
        let steps = tape.value(input).rows;
        let xw = tape.matmul(input, vars[cell.wx]);
        let xw = tape.add_row(xw, vars[cell.b]);
        let mut outputs = Vec::with_capacity(steps);
        let mut state: Option<(Var, Var)> = None;
        let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
        for t in order {
            let mut gates = tape.select_rows(xw, vec![t]);
            if let Some((h, _)) = state {
                let rec = tape.matmul(h, vars[cell.wh]);
                gates = tape.add(gates, rec);
            }
            let i = tape.slice_cols(gates, 0, hidden);
            let i = tape.sigmoid(i);
            let f = tape.slice_cols(gates, hidden, hidden);
            let f = tape.sigmoid(f);
            let g = tape.slice_cols(gates, 2 * hidden, hidden);
            let g = tape.tanh(g);
            let o = tape.slice_cols(gates, 3 * hidden, hidden);
            let o = tape.sigmoid(o);
            let ig = tape.mul(i, g);
            let c = match state {
                Some((_, c_prev)) => {
                    let fc = tape.mul(f, c_prev);
                    tape.add(fc, ig)
                }
                None => ig,
            };
            let tc = tape.tanh(c);
            let h = tape.mul(o, tc);
            outputs.push(h);
            state = Some((h, c));
        }
        if reverse {
            outputs.reverse();
        }
        tape.concat_rows(&outputs)
    }

    fn aggregate_graph(&self, tape: &mut Tape, vars: &[Var], e: Var) -> Var {
        match self.layout.cells {
            Some((fwd, bwd)) => {
                let k = self.config.aggregator_hidden;
                let forward = Self::lstm_direction(tape, vars, fwd, e, k, false);
                let backward = Self::lstm_direction(tape, vars, bwd, e, k, true);
                tape.concat_cols(&[forward, backward])
            }
            None => e,
        }
    }

    /// One logit per row of `f`; row 0 is the pivot.
    fn classifier_graph(&self, tape: &mut Tape, vars: &[Var], f: Var) -> Var {
        let rows = tape.value(f).rows;
        let pivot = tape.select_rows(f, vec![0; rows]);
        let product = tape.mul(pivot, f);
        let difference = tape.sub(pivot, f);
        let g = tape.concat_cols(&[pivot, f, product, difference]);
        let l = &self.layout;
        let hidden = tape.matmul(g, vars[l.cls_w]);
        let hidden = tape.add_row(hidden, vars[l.cls_b]);
        let hidden = tape.tanh(hidden);
        tape.matmul(hidden, vars[l.out_w])
    }

    pub(crate) fn probs_with_dropout<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        vars: &[Var],
        example: &Example,
        mut drop: Option<Dropout>,
    ) -> Result<Var> {
        let (e, slots) = self.pair_encodings(tape, vars, example, &mut drop)?;
        let f = self.aggregate_graph(tape, vars, e);
        let logits = self.classifier_graph(tape, vars, f);
        let total = example.batch.num_slots();
        let logits = tape.scatter_rows(logits, slots, total);
        Ok(tape.masked_softmax(logits, example.batch.valid_mask.clone()))
    }

    /// Encoder output at the `[CLS]` position for one token sequence.
    pub fn encode_pair(&self, tokens: &[u32]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = register_params(&mut tape, &self.params);
        let (hidden, _) = self.encode_sequences(&mut tape, &vars, &[tokens], &mut None)?;
        Ok(tape.value(hidden).row(0).to_vec())
    }

    /// Runs the bidirectional aggregator over slot encodings (`T x pair_width`),
    /// returning `T x H`. Without an aggregator the input is returned.
    pub fn context_aggregate(&self, encodings: &Mat) -> Result<Mat> {
        if encodings.cols != self.config.pair_width() {
            return Err(Error::Shape(format!(
                "encodings have width {}, expected {}",
                encodings.cols,
                self.config.pair_width()
            )));
        }
        let mut tape = Tape::new();
        let vars = register_params(&mut tape, &self.params);
        let e = tape.constant(encodings.clone());
        let f = self.aggregate_graph(&mut tape, &vars, e);
        Ok(tape.value(f).clone())
    }

    /// Heuristic classifier over similarity vectors (`T x H`, row 0 the
    /// pivot), softmaxed over valid slots.
    pub fn heuristic_score(&self, similarity: &Mat, valid_mask: &[bool]) -> Result<Scores> {
        if similarity.cols != self.config.output_width() || similarity.rows != valid_mask.len() {
            return Err(Error::Shape("similarity matrix does not match the classifier".into()));
        }
        if !valid_mask.first().copied().unwrap_or(false) {
            return Err(Error::NoValidSlots);
        }
        let mut tape = Tape::new();
        let vars = register_params(&mut tape, &self.params);
        let f = tape.constant(similarity.clone());
        let logits = self.classifier_graph(&mut tape, &vars, f);
        Scores::from_logits(&tape.value(logits).data, valid_mask)
    }

    /// Width of the comparison tuple fed to the classifier.
    pub fn comparison_width(&self) -> usize {
        self.params.tensor(self.layout.cls_w).rows
    }

    pub fn num_features(&self) -> usize {
        if self.config.use_features {
            NUM_FEATURES
        } else {
            0
        }
    }
}

impl Ranker for DialBert {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn needs_features(&self) -> bool {
        self.config.use_features
    }

    fn dropout_rate(&self) -> f64 {
        self.config.encoder.dropout
    }

    fn probs_graph<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        vars: &[Var],
        example: &Example,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        let drop = rng.map(|rng| Dropout {
            rate: self.config.encoder.dropout,
            rng,
        });
        self.probs_with_dropout(tape, vars, example, drop)
    }
}
