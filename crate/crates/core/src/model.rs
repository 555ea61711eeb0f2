//! A complete parser: vocabulary, parameters, encoder, scorers and optional
//! history tracker, with per-sentence scoring and a binary model format.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, ParamStore, Tensor};
use crate::decoders::{decode, DecoderSpec, HistoryFeatures, HistoryMode, HistoryTracker, SpanModel};
use crate::encoder::{Encoder, LstmState, ModelDims, Mlp, Scorer, SentenceEncoding, TrainNoise};
use crate::treebank::{unbinarize, BinaryTree, Tree};
use crate::vocab::Vocab;
use crate::Error;

pub const MAGIC: &[u8] = b"CHARTPARSE1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dims: ModelDims,
    pub history: HistoryMode,
    pub features: HistoryFeatures,
    pub history_dim: usize,
    pub label_embed_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dims: ModelDims::default(),
            history: HistoryMode::None,
            features: HistoryFeatures::default(),
            history_dim: 250,
            label_embed_dim: 50,
        }
    }
}

impl ModelConfig {
    fn tracks_history(&self) -> bool {
        self.history != HistoryMode::None
    }

    fn scorer_inputs(&self) -> (usize, usize) {
        let span = self.dims.span_dim();
        let extra = |on: bool| if self.tracks_history() && on { self.history_dim } else { 0 };
        (span + extra(self.features.label_output), span + extra(self.features.span_output))
    }

    /// Scalar parameter count for a given vocabulary.
    pub fn param_count(&self, vocab: &Vocab) -> usize {
        let (label_in, span_in) = self.scorer_inputs();
        let mut total = Encoder::param_count(vocab, &self.dims)
            + Mlp::param_count(label_in, self.dims.label_hidden, vocab.num_labels() - 1)
            + Mlp::param_count(span_in, self.dims.span_hidden, 1);
        if self.tracks_history() {
            total += HistoryTracker::param_count(self.features, self.dims.span_dim(), vocab.num_labels(), self.history_dim, self.label_embed_dim);
        }
        total
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub scorer: Scorer,
    pub tracker: Option<HistoryTracker>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    vocab: Vocab,
    tensors: Vec<TensorEntry>,
}

impl Model {
    pub fn new<R: Rng>(vocab: Vocab, config: ModelConfig, rng: &mut R) -> Result<Model, Error> {
        if vocab.num_labels() < 2 {
            return Err(Error::Config("the label vocabulary has no constituent labels".into()));
        }
        if config.tracks_history() {
            config.features.validate()?;
        }
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&mut store, &vocab, &config.dims, rng)?;
        let (label_in, span_in) = config.scorer_inputs();
        let scorer = Scorer::new(&mut store, label_in, span_in, &config.dims, vocab.num_labels(), rng)?;
        let tracker = if config.tracks_history() {
            Some(HistoryTracker::new(
                &mut store,
                config.features,
                config.dims.span_dim(),
                vocab.num_labels(),
                config.history_dim,
                config.label_embed_dim,
                rng,
            )?)
        } else {
            None
        };
        Ok(Model {
            config,
            vocab,
            store,
            encoder,
            scorer,
            tracker,
        })
    }

    /// Builds the scoring view of one sentence on `graph`.
    pub fn sentence<'m, R: Rng>(
        &'m self,
        graph: Graph<'m>,
        words: &[String],
        tags: &[String],
        noise: Option<TrainNoise<'_, R>>,
    ) -> Result<SentenceScorer<'m>, Error> {
        let mut graph = graph;
        let encoding = self.encoder.encode(&mut graph, &self.vocab, words, tags, noise)?;
        Ok(SentenceScorer {
            model: self,
            graph,
            encoding,
            spans: HashMap::new(),
            labels: HashMap::new(),
            span_scores: HashMap::new(),
            next_state: 1,
        })
    }

    /// Decodes one sentence into a labeled binary tree over label ids.
    pub fn parse_ids(&self, words: &[String], tags: &[String], spec: DecoderSpec) -> Result<BinaryTree<usize>, Error> {
        let mut s = self.sentence::<ChaCha8Rng>(Graph::new(&self.store), words, tags, None)?;
        decode(&mut s, spec)
    }

    /// Decodes one sentence into an n-ary tree.
    pub fn parse(&self, words: &[String], tags: &[String], spec: DecoderSpec) -> Result<Tree, Error> {
        let ids = self.parse_ids(words, tags, spec)?;
        let named = ids.map_labels(&mut |&l| self.vocab.label_name(l).to_string());
        let leaves: Vec<(String, String)> = words.iter().cloned().zip(tags.iter().cloned()).collect();
        Ok(unbinarize(&named, &leaves)?)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), Error> {
        let mut tensors = Vec::new();
        let mut offset = 0;
        for id in self.store.ids() {
            let value = self.store.value(id);
            tensors.push(TensorEntry {
                name: self.store.name(id).to_string(),
                shape: value.shape().to_vec(),
                offset,
            });
            offset += value.len();
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            config: self.config,
            vocab: self.vocab.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Model(e.to_string()))?;
        let mut buf = Vec::with_capacity(MAGIC.len() + 8 + json.len() + offset * 8);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for id in self.store.ids() {
            for v in self.store.value(id).data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.write_all(&buf).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Model, Error> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes).map_err(|e| Error::Model(e.to_string()))?;
        let bad = |why: &str| Error::Model(why.to_string());
        let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| bad("bad magic"))?;
        if rest.len() < 8 {
            return Err(bad("truncated header"));
        }
        let header_len = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
        let rest = &rest[8..];
        if rest.len() < header_len {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&rest[..header_len]).map_err(|e| Error::Model(format!("bad header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Model(format!(
                "format version {} is not supported (expected {FORMAT_VERSION})",
                header.format_version
            )));
        }
        let data = &rest[header_len..];
        if data.len() % 8 != 0 {
            return Err(bad("parameter data is not a whole number of floats"));
        }
        let floats: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        // Rebuild the structure, then overwrite every value.
        let mut model = Model::new(header.vocab, header.config, &mut ChaCha8Rng::seed_from_u64(0))?;
        if header.tensors.len() != model.store.len() {
            return Err(bad("tensor count does not match the configuration"));
        }
        for entry in &header.tensors {
            let id = model.store.id(&entry.name).ok_or_else(|| Error::Model(format!("unexpected tensor {}", entry.name)))?;
            let len: usize = entry.shape.iter().product();
            if model.store.value(id).shape() != entry.shape.as_slice() || entry.offset + len > floats.len() {
                return Err(Error::Model(format!("tensor {} has the wrong shape or offset", entry.name)));
            }
            *model.store.value_mut(id) = Tensor::new(entry.shape.clone(), floats[entry.offset..entry.offset + len].to_vec())?;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Model, Error> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Model::read_from(std::io::BufReader::new(file))
    }
}

/// History state handle: `id` keys score caches, `lstm` is absent when the
/// model has no tracker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistState {
    pub id: usize,
    pub lstm: Option<LstmState>,
}

/// Scoring view of one encoded sentence.
pub struct SentenceScorer<'m> {
    pub model: &'m Model,
    pub graph: Graph<'m>,
    pub encoding: SentenceEncoding,
    spans: HashMap<(usize, usize), NodeId>,
    labels: HashMap<(usize, usize, usize), NodeId>,
    span_scores: HashMap<(usize, usize, usize), NodeId>,
    next_state: usize,
}

impl SentenceScorer<'_> {
    pub fn span_vector(&mut self, i: usize, j: usize) -> Result<NodeId, Error> {
        if let Some(&v) = self.spans.get(&(i, j)) {
            return Ok(v);
        }
        let v = self.encoding.span_vector(&mut self.graph, i, j)?;
        self.spans.insert((i, j), v);
        Ok(v)
    }

    fn input(&mut self, state: &HistState, i: usize, j: usize, uses_history: bool) -> Result<NodeId, Error> {
        let s = self.span_vector(i, j)?;
        match (state.lstm, uses_history) {
            (Some((h, _)), true) => Ok(self.graph.concat(&[s, h])?),
            _ => Ok(s),
        }
    }

    fn uses(&self, label: bool) -> bool {
        let f = self.model.config.features;
        self.model.tracker.is_some() && if label { f.label_output } else { f.span_output }
    }

    /// Label score vector node (entry 0 is the constant empty-label score).
    pub fn label_node(&mut self, state: &HistState, i: usize, j: usize) -> Result<NodeId, Error> {
        let uses = self.uses(true);
        let key = (if uses { state.id } else { 0 }, i, j);
        if let Some(&v) = self.labels.get(&key) {
            return Ok(v);
        }
        let x = self.input(state, i, j, uses)?;
        let v = self.model.scorer.label_scores(&mut self.graph, x)?;
        self.labels.insert(key, v);
        Ok(v)
    }

    /// Scalar span score node.
    pub fn span_node(&mut self, state: &HistState, i: usize, j: usize) -> Result<NodeId, Error> {
        let uses = self.uses(false);
        let key = (if uses { state.id } else { 0 }, i, j);
        if let Some(&v) = self.span_scores.get(&key) {
            return Ok(v);
        }
        let x = self.input(state, i, j, uses)?;
        let v = self.model.scorer.span_score(&mut self.graph, x)?;
        self.span_scores.insert(key, v);
        Ok(v)
    }
}

impl SpanModel for SentenceScorer<'_> {
    type State = HistState;

    fn len(&self) -> usize {
        self.encoding.len()
    }

    fn num_labels(&self) -> usize {
        self.model.vocab.num_labels()
    }

    fn initial_state(&mut self) -> Result<HistState, Error> {
        let lstm = self.model.tracker.as_ref().map(|t| t.zero_state(&mut self.graph));
        Ok(HistState { id: 0, lstm })
    }

    fn label_scores(&mut self, state: &HistState, i: usize, j: usize) -> Result<Vec<f64>, Error> {
        let node = self.label_node(state, i, j)?;
        Ok(self.graph.value(node).data().to_vec())
    }

    fn span_score(&mut self, state: &HistState, i: usize, j: usize) -> Result<f64, Error> {
        let node = self.span_node(state, i, j)?;
        Ok(self.graph.value(node).item())
    }

    fn record(&mut self, state: &HistState, i: usize, j: usize, label: usize) -> Result<HistState, Error> {
        let (Some(tracker), Some(lstm)) = (self.model.tracker.as_ref(), state.lstm) else {
            return Ok(*state);
        };
        let s = self.span_vector(i, j)?;
        let next = tracker.record(&mut self.graph, lstm, s, label)?;
        let id = self.next_state;
        self.next_state += 1;
        Ok(HistState { id, lstm: Some(next) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoders::{DecoderKind, HistoryMode};
    use crate::treebank::parse_sexpr;

    pub(crate) fn tiny_dims() -> ModelDims {
        ModelDims {
            word_dim: 6,
            tag_dim: 4,
            char_embed_dim: 3,
            char_dim: 4,
            lstm_dim: 5,
            lstm_layers: 1,
            label_hidden: 6,
            span_hidden: 5,
            dropout: 0.0,
        }
    }

    fn setup(history: HistoryMode) -> (Model, Tree) {
        let tree = parse_sexpr("(S (NP (PRP She)) (VP (VBZ loves) (S (VP (VBG writing) (NN code)))) (. .))").unwrap();
        let vocab = Vocab::build(std::slice::from_ref(&tree));
        let config = ModelConfig {
            dims: tiny_dims(),
            history,
            history_dim: 3,
            label_embed_dim: 2,
            ..ModelConfig::default()
        };
        (Model::new(vocab, config, &mut ChaCha8Rng::seed_from_u64(4)).unwrap(), tree)
    }

    #[test]
    fn parses_with_every_decoder() {
        for history in [HistoryMode::None, HistoryMode::Chain, HistoryMode::Stack] {
            let (model, tree) = setup(history);
            for kind in [DecoderKind::Cky, DecoderKind::TopDown, DecoderKind::InOrder] {
                let spec = DecoderSpec {
                    kind,
                    history: if kind == DecoderKind::Cky { HistoryMode::None } else { history },
                };
                let out = model.parse(&tree.words(), &tree.tags(), spec).unwrap();
                assert_eq!(out.leaves(), tree.leaves());
            }
        }
    }

    #[test]
    fn parameter_count_matches_store() {
        for history in [HistoryMode::None, HistoryMode::Chain] {
            let (model, _) = setup(history);
            assert_eq!(model.config.param_count(&model.vocab), model.store.num_scalars());
        }
    }

    #[test]
    fn save_load_round_trip() {
        let (model, tree) = setup(HistoryMode::Stack);
        let mut bytes = Vec::new();
        model.write_to(&mut bytes).unwrap();
        assert!(bytes.starts_with(MAGIC));
        let back = Model::read_from(bytes.as_slice()).unwrap();
        for id in model.store.ids() {
            assert_eq!(model.store.value(id), back.store.value(id));
        }
        let spec = DecoderSpec::new(DecoderKind::InOrder, HistoryMode::Stack).unwrap();
        assert_eq!(
            model.parse(&tree.words(), &tree.tags(), spec).unwrap(),
            back.parse(&tree.words(), &tree.tags(), spec).unwrap()
        );
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, bytes);

        let mut corrupt = bytes.clone();
        corrupt[0] = b'X';
        assert!(Model::read_from(corrupt.as_slice()).is_err());
        assert!(Model::read_from(&bytes[..bytes.len() - 3]).is_err());
    }
}
