//! CKY, top-down and in-order decoding over a shared span-scoring
//! interface, with optional history threading for the greedy decoders.

mod history;
mod table;

pub use history::{HistoryFeatures, HistoryTracker};
pub use table::TableModel;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::treebank::BinaryTree;
use crate::vocab::EMPTY_ID;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    Cky,
    TopDown,
    InOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistoryMode {
    #[default]
    None,
    Chain,
    Stack,
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecoderKind::Cky => "cky",
            DecoderKind::TopDown => "topdown",
            DecoderKind::InOrder => "inorder",
        })
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "cky" => Ok(DecoderKind::Cky),
            "topdown" => Ok(DecoderKind::TopDown),
            "inorder" => Ok(DecoderKind::InOrder),
            _ => Err(Error::Config(format!("unknown decoder {s:?}"))),
        }
    }
}

impl fmt::Display for HistoryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HistoryMode::None => "none",
            HistoryMode::Chain => "chain",
            HistoryMode::Stack => "stack",
        })
    }
}

impl FromStr for HistoryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "none" => Ok(HistoryMode::None),
            "chain" => Ok(HistoryMode::Chain),
            "stack" => Ok(HistoryMode::Stack),
            _ => Err(Error::Config(format!("unknown history mode {s:?}"))),
        }
    }
}

/// A decoder together with its history variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderSpec {
    pub kind: DecoderKind,
    pub history: HistoryMode,
}

impl DecoderSpec {
    pub fn new(kind: DecoderKind, history: HistoryMode) -> Result<Self, Error> {
        if kind == DecoderKind::Cky && history != HistoryMode::None {
            return Err(Error::Config("the CKY decoder does not support history tracking".into()));
        }
        Ok(DecoderSpec { kind, history })
    }
}

/// Scores spans of one sentence. `State` is the history state threaded
/// through greedy decoding; models without history use a trivial state.
pub trait SpanModel {
    type State: Clone;

    fn len(&self) -> usize;
    fn num_labels(&self) -> usize;
    fn initial_state(&mut self) -> Result<Self::State, Error>;
    /// Scores of every label id for span `(i, j)`; entry 0 is the empty label.
    fn label_scores(&mut self, state: &Self::State, i: usize, j: usize) -> Result<Vec<f64>, Error>;
    fn span_score(&mut self, state: &Self::State, i: usize, j: usize) -> Result<f64, Error>;
    /// Feeds a labeled-span decision into the history.
    fn record(&mut self, state: &Self::State, i: usize, j: usize, label: usize) -> Result<Self::State, Error>;
}

/// Evaluation counters collected while decoding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeStats {
    /// Label argmax computations.
    pub label_evals: usize,
    /// Span-score evaluations.
    pub span_evals: usize,
    /// Candidate combinations compared (split or parent candidates).
    pub combinations: usize,
}

impl DecodeStats {
    pub fn total(&self) -> usize {
        self.label_evals + self.span_evals + self.combinations
    }
}

/// One greedy decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Label { i: usize, j: usize, label: usize },
    Parent { i: usize, j: usize, r: usize, k: usize },
    Split { i: usize, j: usize, k: usize },
}

/// Chooses each decision of a greedy traversal. The greedy decoder takes
/// the model argmax; training substitutes oracle-driven choices.
pub trait DecisionProcess<M: SpanModel> {
    fn label(&mut self, model: &mut M, state: &M::State, i: usize, j: usize) -> Result<usize, Error>;
    fn parent(&mut self, model: &mut M, state: &M::State, i: usize, j: usize, r: usize) -> Result<usize, Error>;
    fn split(&mut self, model: &mut M, state: &M::State, i: usize, j: usize) -> Result<usize, Error>;
}

/// Highest-scoring label; ties go to the lowest id, so the empty label wins
/// whenever every other score is negative.
pub fn label_argmax<M: SpanModel>(model: &mut M, state: &M::State, i: usize, j: usize, stats: &mut DecodeStats) -> Result<(usize, f64), Error> {
    check_span(model.len(), i, j)?;
    let scores = model.label_scores(state, i, j)?;
    stats.label_evals += 1;
    Ok(argmax(&scores))
}

fn argmax(scores: &[f64]) -> (usize, f64) {
    let mut best = (EMPTY_ID, scores[EMPTY_ID]);
    for (id, &s) in scores.iter().enumerate().skip(1) {
        if s > best.1 {
            best = (id, s);
        }
    }
    best
}

/// `argmax_{i<k<j} s_span(i,k) + s_span(k,j)`, smallest `k` on ties.
pub fn split_argmax<M: SpanModel>(model: &mut M, state: &M::State, i: usize, j: usize, stats: &mut DecodeStats) -> Result<usize, Error> {
    check_span(model.len(), i, j)?;
    if j - i < 2 {
        return Err(Error::Internal(format!("cannot split span ({i}, {j})")));
    }
    let mut best: Option<(usize, f64)> = None;
    for k in i + 1..j {
        let s = model.span_score(state, i, k)? + model.span_score(state, k, j)?;
        stats.span_evals += 2;
        stats.combinations += 1;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    Ok(best.map(|b| b.0).unwrap_or(i + 1))
}

/// `argmax_{j<k≤R} s_span(i,k) + s_span(j,k)`, smallest `k` on ties.
pub fn parent_argmax<M: SpanModel>(model: &mut M, state: &M::State, i: usize, j: usize, r: usize, stats: &mut DecodeStats) -> Result<usize, Error> {
    check_span(model.len(), i, j)?;
    if j >= r || r > model.len() {
        return Err(Error::Internal(format!("no parent boundary for ({i}, {j}) under bound {r}")));
    }
    let mut best: Option<(usize, f64)> = None;
    for k in j + 1..=r {
        let s = model.span_score(state, i, k)? + model.span_score(state, j, k)?;
        stats.span_evals += 2;
        stats.combinations += 1;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    Ok(best.map(|b| b.0).unwrap_or(j + 1))
}

fn check_span(n: usize, i: usize, j: usize) -> Result<(), Error> {
    if i < j && j <= n {
        Ok(())
    } else {
        Err(Error::InvalidSpan { i, j, n })
    }
}

/// Plain argmax decisions with counters and a decision trace.
#[derive(Debug, Clone, Default)]
pub struct Greedy {
    pub stats: DecodeStats,
    pub trace: Vec<Decision>,
}

impl<M: SpanModel> DecisionProcess<M> for Greedy {
    fn label(&mut self, model: &mut M, state: &M::State, i: usize, j: usize) -> Result<usize, Error> {
        let (label, _) = label_argmax(model, state, i, j, &mut self.stats)?;
        self.trace.push(Decision::Label { i, j, label });
        Ok(label)
    }

    fn parent(&mut self, model: &mut M, state: &M::State, i: usize, j: usize, r: usize) -> Result<usize, Error> {
        let k = parent_argmax(model, state, i, j, r, &mut self.stats)?;
        self.trace.push(Decision::Parent { i, j, r, k });
        Ok(k)
    }

    fn split(&mut self, model: &mut M, state: &M::State, i: usize, j: usize) -> Result<usize, Error> {
        let k = split_argmax(model, state, i, j, &mut self.stats)?;
        self.trace.push(Decision::Split { i, j, k });
        Ok(k)
    }
}

/// Runs a greedy traversal of the requested kind. CKY is not a decision
/// process and is rejected here.
pub fn run_greedy<M: SpanModel, P: DecisionProcess<M>>(
    model: &mut M,
    process: &mut P,
    spec: DecoderSpec,
) -> Result<BinaryTree<usize>, Error> {
    if model.len() == 0 {
        return Err(Error::EmptySentence);
    }
    let h0 = model.initial_state()?;
    match spec.kind {
        DecoderKind::InOrder => Ok(inorder(model, process, spec.history, 0, 1, model.len(), None, h0)?.0),
        DecoderKind::TopDown => Ok(topdown(model, process, spec.history, 0, model.len(), h0)?.0),
        DecoderKind::Cky => Err(Error::Config("CKY is not a greedy decision process".into())),
    }
}

fn record<M: SpanModel>(model: &mut M, history: HistoryMode, state: M::State, i: usize, j: usize, label: usize) -> Result<M::State, Error> {
    match history {
        HistoryMode::None => Ok(state),
        _ => model.record(&state, i, j, label),
    }
}

type Children = Option<Box<(BinaryTree<usize>, BinaryTree<usize>)>>;

/// In-order call `(i, j, R)`. `children` is the already built split of
/// `(i, j)`; returns the tree over `(i, R)` and the final history state.
#[allow(clippy::too_many_arguments)]
fn inorder<M: SpanModel, P: DecisionProcess<M>>(
    model: &mut M,
    process: &mut P,
    history: HistoryMode,
    i: usize,
    j: usize,
    r: usize,
    children: Children,
    state: M::State,
) -> Result<(BinaryTree<usize>, M::State), Error> {
    let label = process.label(model, &state, i, j)?;
    let node = BinaryTree { start: i, end: j, label, children };
    let after = record(model, history, state, i, j, label)?;
    if j == r {
        return Ok((node, after));
    }
    let k = process.parent(model, &after, i, j, r)?;
    if k <= j || k > r {
        return Err(Error::Internal(format!("parent boundary {k} outside ({j}, {r}]")));
    }
    let (right, right_state) = inorder(model, process, history, j, j + 1, k, None, after.clone())?;
    let next = match history {
        HistoryMode::Chain => right_state,
        _ => after,
    };
    inorder(model, process, history, i, k, r, Some(Box::new((node, right))), next)
}

fn topdown<M: SpanModel, P: DecisionProcess<M>>(
    model: &mut M,
    process: &mut P,
    history: HistoryMode,
    i: usize,
    j: usize,
    state: M::State,
) -> Result<(BinaryTree<usize>, M::State), Error> {
    let label = process.label(model, &state, i, j)?;
    let after = record(model, history, state, i, j, label)?;
    if j - i == 1 {
        return Ok((BinaryTree::leaf(i, label), after));
    }
    let k = process.split(model, &after, i, j)?;
    if k <= i || k >= j {
        return Err(Error::Internal(format!("split {k} outside ({i}, {j})")));
    }
    let (left, left_state) = topdown(model, process, history, i, k, after.clone())?;
    let right_input = match history {
        HistoryMode::Chain => left_state,
        _ => after.clone(),
    };
    let (right, right_state) = topdown(model, process, history, k, j, right_input)?;
    let out = match history {
        HistoryMode::Chain => right_state,
        _ => after,
    };
    Ok((BinaryTree::join(label, left, right), out))
}

pub fn decode_inorder<M: SpanModel>(model: &mut M, history: HistoryMode) -> Result<(BinaryTree<usize>, Greedy), Error> {
    let mut greedy = Greedy::default();
    let tree = run_greedy(model, &mut greedy, DecoderSpec::new(DecoderKind::InOrder, history)?)?;
    Ok((tree, greedy))
}

pub fn decode_topdown<M: SpanModel>(model: &mut M, history: HistoryMode) -> Result<(BinaryTree<usize>, Greedy), Error> {
    let mut greedy = Greedy::default();
    let tree = run_greedy(model, &mut greedy, DecoderSpec::new(DecoderKind::TopDown, history)?)?;
    Ok((tree, greedy))
}

/// Exact chart decoding: maximizes the summed label and span scores over
/// every binarized tree. Ties go to the smallest split, then the lowest
/// label id.
pub fn decode_cky<M: SpanModel>(model: &mut M) -> Result<(BinaryTree<usize>, DecodeStats), Error> {
    let n = model.len();
    if n == 0 {
        return Err(Error::EmptySentence);
    }
    let state = model.initial_state()?;
    let mut stats = DecodeStats::default();
    // best[i][j], label[i][j], split[i][j]
    let mut best = vec![vec![0.0; n + 1]; n + 1];
    let mut labels = vec![vec![EMPTY_ID; n + 1]; n + 1];
    let mut splits = vec![vec![0usize; n + 1]; n + 1];
    for len in 1..=n {
        for i in 0..=n - len {
            let j = i + len;
            let (label, label_score) = label_argmax(model, &state, i, j, &mut stats)?;
            let span = model.span_score(&state, i, j)?;
            stats.span_evals += 1;
            let mut inside = 0.0;
            if len > 1 {
                let mut top: Option<(usize, f64)> = None;
                for k in i + 1..j {
                    stats.combinations += 1;
                    let s = best[i][k] + best[k][j];
                    if top.is_none_or(|(_, b)| s > b) {
                        top = Some((k, s));
                    }
                }
                let (k, s) = top.expect("span of length > 1 has a split");
                splits[i][j] = k;
                inside = s;
            }
            best[i][j] = label_score + span + inside;
            labels[i][j] = label;
        }
    }
    fn build(i: usize, j: usize, labels: &[Vec<usize>], splits: &[Vec<usize>]) -> BinaryTree<usize> {
        if j - i == 1 {
            BinaryTree::leaf(i, labels[i][j])
        } else {
            let k = splits[i][j];
            BinaryTree::join(labels[i][j], build(i, k, labels, splits), build(k, j, labels, splits))
        }
    }
    Ok((build(0, n, &labels, &splits), stats))
}

/// Decodes with any decoder kind, discarding the counters.
pub fn decode<M: SpanModel>(model: &mut M, spec: DecoderSpec) -> Result<BinaryTree<usize>, Error> {
    match spec.kind {
        DecoderKind::Cky => Ok(decode_cky(model)?.0),
        _ => {
            let mut greedy = Greedy::default();
            run_greedy(model, &mut greedy, spec)
        }
    }
}
