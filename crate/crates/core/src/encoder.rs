//! Sentence encoding and span scoring.
//!
//! Each word is represented as `[word embedding; char-LSTM summary; tag
//! embedding]` and the padded sentence `<START> w_0 … w_{n-1} <STOP>` is run
//! through a stacked BiLSTM. Fencepost `k` (0 ≤ k ≤ n) takes the forward
//! state after reading `w_{k-1}` and the backward state after reading `w_k`,
//! so a span `(i, j)` is represented by
//! `[fwd_j − fwd_i ; bwd_i − bwd_j]`.
//!
//! Two feed-forward heads score spans: a label head with one output row per
//! non-empty label (the empty label is pinned to 0) and a span head with a
//! single output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::decoders::SpanModel;
use crate::treebank::BinaryTree;
use crate::vocab::{Vocab, START, STOP};
use crate::Error;

/// Encoder and scorer sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub word_dim: usize,
    pub tag_dim: usize,
    pub char_embed_dim: usize,
    pub char_dim: usize,
    /// Hidden size per direction.
    pub lstm_dim: usize,
    pub lstm_layers: usize,
    pub label_hidden: usize,
    pub span_hidden: usize,
    pub dropout: f64,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            word_dim: 100,
            tag_dim: 50,
            char_embed_dim: 32,
            char_dim: 50,
            lstm_dim: 250,
            lstm_layers: 2,
            label_hidden: 250,
            span_hidden: 250,
            dropout: 0.4,
        }
    }
}

impl ModelDims {
    pub fn word_rep_dim(&self) -> usize {
        self.word_dim + self.char_dim + self.tag_dim
    }

    pub fn span_dim(&self) -> usize {
        2 * self.lstm_dim
    }
}

/// Single LSTM cell with fused gate weights (input, forget, cell, output).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCell {
    w: ParamId,
    u: ParamId,
    b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

pub type LstmState = (NodeId, NodeId);

impl LstmCell {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Result<Self, AutodiffError> {
        Ok(LstmCell {
            w: store.add_glorot(&format!("{prefix}.w"), 4 * hidden, input, rng)?,
            u: store.add_glorot(&format!("{prefix}.u"), 4 * hidden, hidden, rng)?,
            b: store.add_zeros(&format!("{prefix}.b"), &[4 * hidden])?,
            input,
            hidden,
        })
    }

    pub fn param_count(input: usize, hidden: usize) -> usize {
        4 * hidden * (input + hidden + 1)
    }

    pub fn zero_state(&self, g: &mut Graph) -> LstmState {
        let h = g.vector(vec![0.0; self.hidden]);
        let c = g.vector(vec![0.0; self.hidden]);
        (h, c)
    }

    pub fn step(&self, g: &mut Graph, x: NodeId, (h, c): LstmState) -> Result<LstmState, AutodiffError> {
        let (w, u, b) = (g.param(self.w), g.param(self.u), g.param(self.b));
        let wx = g.matmul(w, x)?;
        let uh = g.matmul(u, h)?;
        let pre = g.add_n(&[wx, uh, b])?;
        let d = self.hidden;
        let input = g.slice(pre, 0, d)?;
        let forget = g.slice(pre, d, d)?;
        let cell = g.slice(pre, 2 * d, d)?;
        let output = g.slice(pre, 3 * d, d)?;
        let (input, forget, output) = (g.sigmoid(input), g.sigmoid(forget), g.sigmoid(output));
        let cell = g.tanh(cell);
        let keep = g.mul(forget, c)?;
        let write = g.mul(input, cell)?;
        let c_new = g.add(keep, write)?;
        let squashed = g.tanh(c_new);
        let h_new = g.mul(output, squashed)?;
        Ok((h_new, c_new))
    }
}

/// Two-layer ReLU feed-forward network followed by a linear output layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    out: ParamId,
    pub input: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl Mlp {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, outputs: usize, rng: &mut R) -> Result<Self, AutodiffError> {
        Ok(Mlp {
            w1: store.add_glorot(&format!("{prefix}.w1"), hidden, input, rng)?,
            b1: store.add_zeros(&format!("{prefix}.b1"), &[hidden])?,
            w2: store.add_glorot(&format!("{prefix}.w2"), hidden, hidden, rng)?,
            b2: store.add_zeros(&format!("{prefix}.b2"), &[hidden])?,
            out: store.add_glorot(&format!("{prefix}.v"), outputs, hidden, rng)?,
            input,
            hidden,
            outputs,
        })
    }

    pub fn param_count(input: usize, hidden: usize, outputs: usize) -> usize {
        hidden * input + hidden + hidden * hidden + hidden + outputs * hidden
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId, AutodiffError> {
        let (w1, b1, w2, b2, out) = (g.param(self.w1), g.param(self.b1), g.param(self.w2), g.param(self.b2), g.param(self.out));
        let h = g.affine(w1, x, b1)?;
        let h = g.relu(h);
        let h = g.affine(w2, h, b2)?;
        let h = g.relu(h);
        g.matmul(out, h)
    }

    /// Output-layer parameter (one row per output).
    pub fn output_param(&self) -> ParamId {
        self.out
    }

    pub fn params(&self) -> [ParamId; 5] {
        [self.w1, self.b1, self.w2, self.b2, self.out]
    }
}

/// Label and span scoring heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scorer {
    pub label: Mlp,
    pub span: Mlp,
    pub num_labels: usize,
}

impl Scorer {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        label_input: usize,
        span_input: usize,
        dims: &ModelDims,
        num_labels: usize,
        rng: &mut R,
    ) -> Result<Self, AutodiffError> {
        Ok(Scorer {
            label: Mlp::new(store, "label", label_input, dims.label_hidden, num_labels - 1, rng)?,
            span: Mlp::new(store, "span", span_input, dims.span_hidden, 1, rng)?,
            num_labels,
        })
    }

    /// Scores of every label id for one (possibly history-augmented) span
    /// vector. Entry 0 is the empty label and is the constant 0.
    pub fn label_scores(&self, g: &mut Graph, input: NodeId) -> Result<NodeId, AutodiffError> {
        let rest = self.label.forward(g, input)?;
        let empty = g.scalar(0.0);
        g.concat(&[empty, rest])
    }

    pub fn span_score(&self, g: &mut Graph, input: NodeId) -> Result<NodeId, AutodiffError> {
        let out = self.span.forward(g, input)?;
        g.pick(out, 0)
    }

    pub fn score_label(&self, g: &mut Graph, input: NodeId, label: usize) -> Result<f64, Error> {
        if label >= self.num_labels {
            return Err(Error::UnknownLabel(label.to_string()));
        }
        if label == crate::vocab::EMPTY_ID {
            return Ok(0.0);
        }
        let scores = self.label_scores(g, input)?;
        Ok(g.value(scores).data()[label])
    }

    pub fn score_span(&self, g: &mut Graph, input: NodeId) -> Result<f64, Error> {
        let s = self.span_score(g, input)?;
        Ok(g.value(s).item())
    }
}

/// Fencepost states of one sentence inside a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceEncoding {
    /// Forward states for fenceposts 0..=n.
    pub fwd: Vec<NodeId>,
    /// Backward states for fenceposts 0..=n.
    pub bwd: Vec<NodeId>,
}

impl SentenceEncoding {
    pub fn len(&self) -> usize {
        self.fwd.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[fwd_j − fwd_i ; bwd_i − bwd_j]`.
    pub fn span_vector(&self, g: &mut Graph, i: usize, j: usize) -> Result<NodeId, Error> {
        if i >= j || j > self.len() {
            return Err(Error::InvalidSpan { i, j, n: self.len() });
        }
        let f = g.sub(self.fwd[j], self.fwd[i])?;
        let b = g.sub(self.bwd[i], self.bwd[j])?;
        Ok(g.concat(&[f, b])?)
    }
}

/// Randomness used only in training mode.
pub struct TrainNoise<'r, R: Rng> {
    pub rng: &'r mut R,
    pub dropout: f64,
    /// Per-word flag forcing the word embedding to `<UNK>`.
    pub unk: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    word_emb: ParamId,
    tag_emb: ParamId,
    char_emb: ParamId,
    char_lstm: LstmCell,
    layers: Vec<(LstmCell, LstmCell)>,
    pub dims: ModelDims,
}

impl Encoder {
    pub fn new<R: Rng>(store: &mut ParamStore, vocab: &Vocab, dims: &ModelDims, rng: &mut R) -> Result<Self, AutodiffError> {
        let word_emb = store.add_embedding("word_emb", vocab.words.len(), dims.word_dim, rng)?;
        let tag_emb = store.add_embedding("tag_emb", vocab.tags.len(), dims.tag_dim, rng)?;
        let char_emb = store.add_embedding("char_emb", vocab.chars.len(), dims.char_embed_dim, rng)?;
        let char_lstm = LstmCell::new(store, "char_lstm", dims.char_embed_dim, dims.char_dim, rng)?;
        let mut layers = Vec::with_capacity(dims.lstm_layers);
        let mut input = dims.word_rep_dim();
        for l in 0..dims.lstm_layers {
            let fwd = LstmCell::new(store, &format!("lstm{l}.fwd"), input, dims.lstm_dim, rng)?;
            let bwd = LstmCell::new(store, &format!("lstm{l}.bwd"), input, dims.lstm_dim, rng)?;
            layers.push((fwd, bwd));
            input = 2 * dims.lstm_dim;
        }
        Ok(Encoder {
            word_emb,
            tag_emb,
            char_emb,
            char_lstm,
            layers,
            dims: *dims,
        })
    }

    pub fn param_count(vocab: &Vocab, dims: &ModelDims) -> usize {
        let mut total = vocab.words.len() * dims.word_dim + vocab.tags.len() * dims.tag_dim + vocab.chars.len() * dims.char_embed_dim;
        total += LstmCell::param_count(dims.char_embed_dim, dims.char_dim);
        let mut input = dims.word_rep_dim();
        for _ in 0..dims.lstm_layers {
            total += 2 * LstmCell::param_count(input, dims.lstm_dim);
            input = 2 * dims.lstm_dim;
        }
        total
    }

    fn char_summary(&self, g: &mut Graph, vocab: &Vocab, word: &str) -> Result<NodeId, AutodiffError> {
        let mut state = self.char_lstm.zero_state(g);
        for id in vocab.char_ids(word) {
            let x = g.lookup(self.char_emb, id)?;
            state = self.char_lstm.step(g, x, state)?;
        }
        Ok(state.0)
    }

    fn dropout<R: Rng>(g: &mut Graph, x: NodeId, noise: &mut Option<TrainNoise<'_, R>>) -> Result<NodeId, AutodiffError> {
        match noise {
            Some(n) if n.dropout > 0.0 => {
                let keep = 1.0 - n.dropout;
                let len = g.value(x).len();
                let mask = (0..len)
                    .map(|_| if n.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                let mask = g.vector(mask);
                g.mul(x, mask)
            }
            _ => Ok(x),
        }
    }

    /// Encodes one sentence. `noise` switches on training mode (dropout and
    /// forced `<UNK>` words); without it the result is deterministic.
    pub fn encode<R: Rng>(
        &self,
        g: &mut Graph,
        vocab: &Vocab,
        words: &[String],
        tags: &[String],
        mut noise: Option<TrainNoise<'_, R>>,
    ) -> Result<SentenceEncoding, Error> {
        if words.is_empty() {
            return Err(Error::EmptySentence);
        }
        if words.len() != tags.len() {
            return Err(Error::LengthMismatch {
                words: words.len(),
                tags: tags.len(),
            });
        }
        let n = words.len();
        let mut inputs = Vec::with_capacity(n + 2);
        let padded = std::iter::once((START, START))
            .chain(words.iter().map(String::as_str).zip(tags.iter().map(String::as_str)))
            .chain(std::iter::once((STOP, STOP)));
        for (pos, (word, tag)) in padded.enumerate() {
            let forced_unk = pos >= 1 && pos <= n && noise.as_ref().is_some_and(|t| t.unk.get(pos - 1).copied().unwrap_or(false));
            let word_id = if forced_unk { crate::vocab::UNK_ID } else { vocab.word_id(word) };
            let e = g.lookup(self.word_emb, word_id)?;
            let c = self.char_summary(g, vocab, word)?;
            let p = g.lookup(self.tag_emb, vocab.tag_id(tag))?;
            inputs.push(g.concat(&[e, c, p])?);
        }

        let mut fwd_out = Vec::new();
        let mut bwd_out = Vec::new();
        for (fwd, bwd) in &self.layers {
            fwd_out = Vec::with_capacity(inputs.len());
            let mut state = fwd.zero_state(g);
            for &x in &inputs {
                state = fwd.step(g, x, state)?;
                fwd_out.push(Self::dropout(g, state.0, &mut noise)?);
            }
            bwd_out = vec![fwd_out[0]; inputs.len()];
            let mut state = bwd.zero_state(g);
            for t in (0..inputs.len()).rev() {
                state = bwd.step(g, inputs[t], state)?;
                bwd_out[t] = Self::dropout(g, state.0, &mut noise)?;
            }
            inputs = fwd_out.iter().zip(&bwd_out).map(|(&f, &b)| g.concat(&[f, b])).collect::<Result<_, _>>()?;
        }
        Ok(SentenceEncoding {
            fwd: (0..=n).map(|k| fwd_out[k]).collect(),
            bwd: (0..=n).map(|k| bwd_out[k + 1]).collect(),
        })
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.word_emb, self.tag_emb, self.char_emb]
    }
}

/// Sum of label and span scores over every node of a binarized tree.
/// Empty-labeled nodes contribute their span score only.
pub fn tree_score<M: SpanModel>(model: &mut M, bt: &BinaryTree<usize>) -> Result<f64, Error> {
    let state = model.initial_state()?;
    let mut total = 0.0;
    for node in bt.nodes() {
        let labels = model.label_scores(&state, node.start, node.end)?;
        let label = labels.get(node.label).ok_or_else(|| Error::UnknownLabel(node.label.to_string()))?;
        total += label + model.span_score(&state, node.start, node.end)?;
    }
    Ok(total)
}

/// Convenience constructor for tests and tools that need a concrete tensor.
pub fn random_vector<R: Rng>(len: usize, rng: &mut R) -> Tensor {
    Tensor::vector((0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
}
