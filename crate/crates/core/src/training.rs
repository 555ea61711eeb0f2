//! Decision-level hinge training with static or exploratory trajectories.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Graph, NodeId, ParamStore};
use crate::decoders::{parent_argmax, run_greedy, split_argmax, DecisionProcess, DecodeStats, DecoderKind, DecoderSpec, SpanModel};
use crate::encoder::TrainNoise;
use crate::eval::{score_corpus, EvalReport};
use crate::model::{HistState, Model, SentenceScorer};
use crate::oracle::{oracle_label, oracle_parents, oracle_splits_topdown, Interpretation};
use crate::treebank::{collapse_unaries, gold_index, GoldIndex, Tree};
use crate::vocab::{Vocab, UNK};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub decoder: DecoderSpec,
    pub explore: bool,
    pub z: f64,
    pub rho: f64,
    pub eps: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Evaluate on the dev set every this many epochs (0 disables).
    pub dev_every: usize,
    pub interpretation: Interpretation,
    /// Training-set F1 to track every epoch.
    pub target_train_f1: Option<f64>,
    /// Stop as soon as the target is reached.
    pub stop_at_target: bool,
    /// Add the decision losses of both greedy decoders, whichever decoder
    /// is used for evaluation, so that one scorer serves every decoder.
    pub joint: bool,
}

impl TrainConfig {
    pub fn new(decoder: DecoderSpec) -> Self {
        TrainConfig {
            decoder,
            explore: false,
            z: 0.8375,
            rho: 0.99,
            eps: 1e-7,
            epochs: 30,
            seed: 1,
            dev_every: 1,
            interpretation: Interpretation::Strict,
            target_train_f1: None,
            stop_at_target: true,
            joint: false,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.decoder.kind == DecoderKind::Cky {
            return Err(Error::Config("CKY decoding is not trained directly; train with topdown or inorder".into()));
        }
        if !(self.z >= 0.0 && self.z.is_finite()) {
            return Err(Error::Config(format!("z must be non-negative, got {}", self.z)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// `max(0, 1 − s(ℓ*) + s(ℓ̂))` when the prediction is wrong, else the
/// constant 0.
pub fn hinge_label(g: &mut Graph, scores: NodeId, gold: usize, predicted: usize) -> Result<NodeId, Error> {
    if gold == predicted {
        return Ok(g.scalar(0.0));
    }
    let s_gold = g.pick(scores, gold)?;
    let s_pred = g.pick(scores, predicted)?;
    hinge(g, s_gold, s_pred)
}

fn hinge(g: &mut Graph, gold: NodeId, predicted: NodeId) -> Result<NodeId, Error> {
    let one = g.scalar(1.0);
    let diff = g.sub(predicted, gold)?;
    let pre = g.add(one, diff)?;
    Ok(g.relu(pre))
}

fn pair_score(s: &mut SentenceScorer, state: &HistState, a: (usize, usize), b: (usize, usize)) -> Result<NodeId, Error> {
    let x = s.span_node(state, a.0, a.1)?;
    let y = s.span_node(state, b.0, b.1)?;
    Ok(s.graph.add(x, y)?)
}

/// Parent hinge with `s_parent(k) = s_span(i,k) + s_span(j,k)`.
#[allow(clippy::too_many_arguments)]
pub fn hinge_parent(s: &mut SentenceScorer, state: &HistState, i: usize, j: usize, r: usize, gold: usize, predicted: usize) -> Result<NodeId, Error> {
    if gold <= j || gold > r {
        return Err(Error::Internal(format!("oracle boundary {gold} outside ({j}, {r}]")));
    }
    if gold == predicted {
        return Ok(s.graph.scalar(0.0));
    }
    let sg = pair_score(s, state, (i, gold), (j, gold))?;
    let sp = pair_score(s, state, (i, predicted), (j, predicted))?;
    hinge(&mut s.graph, sg, sp)
}

/// Split hinge with `s_split(k) = s_span(i,k) + s_span(k,j)`.
pub fn hinge_split(s: &mut SentenceScorer, state: &HistState, i: usize, j: usize, gold: usize, predicted: usize) -> Result<NodeId, Error> {
    if gold <= i || gold >= j {
        return Err(Error::Internal(format!("oracle split {gold} outside ({i}, {j})")));
    }
    if gold == predicted {
        return Ok(s.graph.scalar(0.0));
    }
    let sg = pair_score(s, state, (i, gold), (gold, j))?;
    let sp = pair_score(s, state, (i, predicted), (predicted, j))?;
    hinge(&mut s.graph, sg, sp)
}

/// Per-sentence training statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    pub decisions: usize,
    pub errors: usize,
    /// Decisions taken at states off the gold path.
    pub off_gold: usize,
    /// Smallest distance of any argmax gap or active hinge input from a
    /// kink; used to skip non-differentiable points in gradient checks.
    pub kink_distance: f64,
}

/// Decision process that accumulates hinge losses against the oracle.
pub struct OracleTrainer<'g> {
    gold: &'g GoldIndex,
    vocab: &'g Vocab,
    explore: bool,
    interpretation: Interpretation,
    pub losses: Vec<NodeId>,
    pub stats: LossStats,
    off_path: bool,
    scratch: DecodeStats,
}

impl<'g> OracleTrainer<'g> {
    pub fn new(gold: &'g GoldIndex, vocab: &'g Vocab, explore: bool, interpretation: Interpretation) -> Self {
        OracleTrainer {
            gold,
            vocab,
            explore,
            interpretation,
            losses: Vec::new(),
            stats: LossStats {
                kink_distance: f64::INFINITY,
                ..LossStats::default()
            },
            off_path: false,
            scratch: DecodeStats::default(),
        }
    }

    fn note(&mut self, loss: NodeId, g: &Graph, gold: usize, predicted: usize, gap: f64) -> usize {
        self.stats.decisions += 1;
        if self.off_path {
            self.stats.off_gold += 1;
        }
        self.stats.kink_distance = self.stats.kink_distance.min(gap.abs());
        if gold != predicted {
            self.stats.errors += 1;
            self.losses.push(loss);
            // Distance of the hinge input from its kink at 0.
            let v = g.value(loss).item();
            if v > 0.0 {
                self.stats.kink_distance = self.stats.kink_distance.min(v);
            }
        }
        if self.explore {
            if gold != predicted {
                self.off_path = true;
            }
            predicted
        } else {
            gold
        }
    }

    fn gap(best: f64, scores: impl Iterator<Item = f64>) -> f64 {
        scores.filter(|&s| s != best).map(|s| best - s).fold(f64::INFINITY, f64::min)
    }
}

impl<'m> DecisionProcess<SentenceScorer<'m>> for OracleTrainer<'_> {
    fn label(&mut self, s: &mut SentenceScorer<'m>, state: &HistState, i: usize, j: usize) -> Result<usize, Error> {
        let node = s.label_node(state, i, j)?;
        let scores = s.graph.value(node).data().to_vec();
        let mut predicted = 0;
        for (l, &v) in scores.iter().enumerate() {
            if v > scores[predicted] {
                predicted = l;
            }
        }
        let name = oracle_label(self.gold, i, j);
        let gold = self.vocab.label_id(name).ok_or_else(|| Error::UnknownLabel(name.to_string()))?;
        let loss = hinge_label(&mut s.graph, node, gold, predicted)?;
        let gap = Self::gap(scores[predicted], scores.iter().copied());
        Ok(self.note(loss, &s.graph, gold, predicted, gap))
    }

    fn parent(&mut self, s: &mut SentenceScorer<'m>, state: &HistState, i: usize, j: usize, r: usize) -> Result<usize, Error> {
        let predicted = parent_argmax(s, state, i, j, r, &mut self.scratch)?;
        let set = oracle_parents(self.gold, i, j, r, self.interpretation)?;
        let gold = *set.last().expect("non-empty oracle set");
        let loss = hinge_parent(s, state, i, j, r, gold, predicted)?;
        let mut values = Vec::with_capacity(r - j);
        for k in j + 1..=r {
            values.push(s.span_score(state, i, k)? + s.span_score(state, j, k)?);
        }
        let best = values[predicted - j - 1];
        let gap = Self::gap(best, values.into_iter());
        Ok(self.note(loss, &s.graph, gold, predicted, gap))
    }

    fn split(&mut self, s: &mut SentenceScorer<'m>, state: &HistState, i: usize, j: usize) -> Result<usize, Error> {
        let predicted = split_argmax(s, state, i, j, &mut self.scratch)?;
        let gold = oracle_splits_topdown(self.gold, i, j)?[0];
        let loss = hinge_split(s, state, i, j, gold, predicted)?;
        let mut values = Vec::with_capacity(j - i - 1);
        for k in i + 1..j {
            values.push(s.span_score(state, i, k)? + s.span_score(state, k, j)?);
        }
        let best = values[predicted - i - 1];
        let gap = Self::gap(best, values.into_iter());
        Ok(self.note(loss, &s.graph, gold, predicted, gap))
    }
}

/// Runs the training decision sequence for one sentence and returns the
/// summed hinge loss node. Under a joint objective the in-order and
/// top-down sequences are both run and their losses added.
pub fn sentence_loss(s: &mut SentenceScorer, gold: &GoldIndex, cfg: &TrainConfig) -> Result<(NodeId, LossStats), Error> {
    cfg.validate()?;
    let vocab = &s.model.vocab;
    let kinds: &[DecoderKind] = if cfg.joint { &[DecoderKind::InOrder, DecoderKind::TopDown] } else { std::slice::from_ref(&cfg.decoder.kind) };
    let mut losses = Vec::new();
    let mut stats = LossStats {
        kink_distance: f64::INFINITY,
        ..LossStats::default()
    };
    for &kind in kinds {
        let mut trainer = OracleTrainer::new(gold, vocab, cfg.explore, cfg.interpretation);
        run_greedy(s, &mut trainer, DecoderSpec { kind, ..cfg.decoder })?;
        losses.extend(trainer.losses);
        stats.decisions += trainer.stats.decisions;
        stats.errors += trainer.stats.errors;
        stats.off_gold += trainer.stats.off_gold;
        stats.kink_distance = stats.kink_distance.min(trainer.stats.kink_distance);
    }
    let loss = s.graph.add_n(&losses)?;
    Ok((loss, stats))
}

/// Probability of replacing a word seen `count` times by `<UNK>`.
pub fn unk_probability(count: usize, z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else {
        z / (z + count as f64)
    }
}

/// Returns `<UNK>` with probability `z / (z + c(w))`, otherwise the word.
pub fn unk_replace<'w, R: Rng>(word: &'w str, vocab: &Vocab, z: f64, rng: &mut R) -> &'w str {
    if rng.random::<f64>() < unk_probability(vocab.count(word), z) {
        UNK
    } else {
        word
    }
}

/// One epoch's log entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: Option<EvalReport>,
    pub train_f1: Option<f64>,
    pub seconds: f64,
}

impl EpochLog {
    pub const HEADER: &'static str = "epoch\ttrain_loss\tdev_LR\tdev_LP\tdev_F1\ttrain_F1\tseconds";

    /// Tab-separated fields in [`EpochLog::HEADER`] order; `-` marks a
    /// value that was not computed.
    pub fn line(&self) -> String {
        let (lr, lp, f1) = match &self.dev {
            Some(r) => (format!("{:.2}", r.recall), format!("{:.2}", r.precision), format!("{:.2}", r.f1)),
            None => ("-".into(), "-".into(), "-".into()),
        };
        let train = self.train_f1.map_or("-".into(), |f| format!("{f:.2}"));
        format!("{}\t{:.4}\t{lr}\t{lp}\t{f1}\t{train}\t{:.1}", self.epoch, self.train_loss, self.seconds)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochLog>,
    pub best_dev_f1: Option<f64>,
    pub best_epoch: Option<usize>,
    /// First epoch whose training F1 reached the target.
    pub target_epoch: Option<usize>,
    /// Whether training stopped at the target.
    pub stopped_at_target: bool,
}

/// Random streams derived from the master seed.
pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

/// Loss value and gradients of one training sentence.
pub fn sentence_gradients<R: Rng>(
    model: &Model,
    tree: &Tree,
    gold: &GoldIndex,
    cfg: &TrainConfig,
    rng: Option<&mut R>,
) -> Result<(f64, Gradients, LossStats), Error> {
    let words = tree.words();
    let tags = tree.tags();
    let noise = rng.map(|rng| {
        let unk = words.iter().map(|w| unk_replace(w, &model.vocab, cfg.z, rng) == UNK).collect();
        TrainNoise {
            rng,
            dropout: model.config.dims.dropout,
            unk,
        }
    });
    let mut s = model.sentence(Graph::new(&model.store), &words, &tags, noise)?;
    let (loss, stats) = sentence_loss(&mut s, gold, cfg)?;
    let value = s.graph.value(loss).item();
    let grads = if stats.errors > 0 { s.graph.backward(loss)? } else { Gradients::default() };
    Ok((value, grads, stats))
}

/// Parses every tree's sentence and scores against the trees.
pub fn evaluate(model: &Model, trees: &[Tree], spec: DecoderSpec) -> Result<EvalReport, Error> {
    let preds = trees
        .iter()
        .map(|t| model.parse(&t.words(), &t.tags(), spec))
        .collect::<Result<Vec<_>, _>>()?;
    score_corpus(trees, &preds)
}

/// Trains `model` in place. Parameters from the epoch with the best dev F1
/// are restored at the end when a dev set is evaluated.
pub fn train(model: &mut Model, corpus: &[Tree], dev: &[Tree], cfg: &TrainConfig, mut log: impl FnMut(&EpochLog)) -> Result<TrainOutcome, Error> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Config("empty training corpus".into()));
    }
    let golds: Vec<GoldIndex> = corpus.iter().map(|t| gold_index(&collapse_unaries(t))).collect();
    let mut shuffle_rng = stream(cfg.seed, SHUFFLE_STREAM);
    let mut noise_rng = stream(cfg.seed, NOISE_STREAM);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut outcome = TrainOutcome::default();
    let mut best: Option<ParamStore> = None;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for &index in &order {
            let (loss, grads, _) = sentence_gradients(model, &corpus[index], &golds[index], cfg, Some(&mut noise_rng))?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(index));
            }
            total += loss;
            model.store.accumulate(&grads);
            model.store.adadelta_step(cfg.rho, cfg.eps)?;
        }
        let dev_report = if cfg.dev_every > 0 && !dev.is_empty() && epoch % cfg.dev_every == 0 {
            Some(evaluate(model, dev, cfg.decoder)?)
        } else {
            None
        };
        let train_f1 = match cfg.target_train_f1 {
            Some(_) => Some(evaluate(model, corpus, cfg.decoder)?.f1),
            None => None,
        };
        let entry = EpochLog {
            epoch,
            train_loss: total,
            dev: dev_report,
            train_f1,
            seconds: started.elapsed().as_secs_f64(),
        };
        log(&entry);
        if let Some(report) = dev_report {
            if outcome.best_dev_f1.is_none_or(|b| report.f1 > b) {
                outcome.best_dev_f1 = Some(report.f1);
                outcome.best_epoch = Some(epoch);
                best = Some(model.store.clone());
            }
        }
        outcome.epochs.push(entry);
        if let (Some(target), Some(f1)) = (cfg.target_train_f1, train_f1) {
            if f1 >= target && outcome.target_epoch.is_none() {
                outcome.target_epoch = Some(epoch);
            }
            if outcome.target_epoch.is_some() && cfg.stop_at_target {
                outcome.stopped_at_target = true;
                break;
            }
        }
    }
    if let (Some(best), false) = (best, outcome.stopped_at_target) {
        model.store.copy_values_from(&best)?;
    }
    Ok(outcome)
}
