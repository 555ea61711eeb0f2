use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore};
use crate::encoder::{LstmCell, LstmState};
use crate::Error;

/// Which inputs feed the history LSTM and which scorers read its output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryFeatures {
    /// Span representation as LSTM input.
    pub span_input: bool,
    /// Label embedding as LSTM input.
    pub label_input: bool,
    /// History state appended to the label scorer input.
    pub label_output: bool,
    /// History state appended to the span scorer input.
    pub span_output: bool,
}

impl Default for HistoryFeatures {
    fn default() -> Self {
        HistoryFeatures {
            span_input: true,
            label_input: true,
            label_output: true,
            span_output: true,
        }
    }
}

impl HistoryFeatures {
    pub fn validate(&self) -> Result<(), Error> {
        if !self.span_input && !self.label_input {
            return Err(Error::Config("history tracking needs span or label input".into()));
        }
        if !self.label_output && !self.span_output {
            return Err(Error::Config("history tracking needs label or span output".into()));
        }
        Ok(())
    }
}

/// LSTM over labeled-span decisions: `h_t = LSTM([s_ij; E_ℓ], h_{t-1})`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryTracker {
    cell: LstmCell,
    label_emb: Option<ParamId>,
    pub features: HistoryFeatures,
    pub dim: usize,
}

impl HistoryTracker {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        features: HistoryFeatures,
        span_dim: usize,
        num_labels: usize,
        hidden: usize,
        label_dim: usize,
        rng: &mut R,
    ) -> Result<Self, Error> {
        features.validate()?;
        let label_emb = if features.label_input {
            Some(store.add_embedding("history.label_emb", num_labels, label_dim, rng)?)
        } else {
            None
        };
        let input = Self::input_dim(features, span_dim, label_dim);
        let cell = LstmCell::new(store, "history.lstm", input, hidden, rng)?;
        Ok(HistoryTracker {
            cell,
            label_emb,
            features,
            dim: hidden,
        })
    }

    fn input_dim(features: HistoryFeatures, span_dim: usize, label_dim: usize) -> usize {
        (if features.span_input { span_dim } else { 0 }) + (if features.label_input { label_dim } else { 0 })
    }

    pub fn param_count(features: HistoryFeatures, span_dim: usize, num_labels: usize, hidden: usize, label_dim: usize) -> usize {
        let emb = if features.label_input { num_labels * label_dim } else { 0 };
        emb + LstmCell::param_count(Self::input_dim(features, span_dim, label_dim), hidden)
    }

    pub fn zero_state(&self, g: &mut Graph) -> LstmState {
        self.cell.zero_state(g)
    }

    pub fn record(&self, g: &mut Graph, state: LstmState, span: NodeId, label: usize) -> Result<LstmState, Error> {
        let mut parts = Vec::with_capacity(2);
        if self.features.span_input {
            parts.push(span);
        }
        if let Some(emb) = self.label_emb {
            parts.push(g.lookup(emb, label)?);
        }
        let x = g.concat(&parts)?;
        Ok(self.cell.step(g, x, state)?)
    }
}
