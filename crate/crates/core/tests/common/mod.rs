#![allow(dead_code)]

use chartparse::autodiff::{Graph, ParamId};
use chartparse::decoders::{DecoderKind, DecoderSpec, HistoryFeatures, HistoryMode};
use chartparse::encoder::ModelDims;
use chartparse::model::{Model, ModelConfig};
use chartparse::training::{sentence_gradients, TrainConfig};
use chartparse::treebank::{collapse_unaries, gold_index, parse_sexpr, GoldIndex, Tree};
use chartparse::vocab::Vocab;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FIG1: &str = "(S (NP (PRP She)) (VP (VBZ loves) (S (VP (VBG writing) (NN code)))) (. .))";

pub fn fig1() -> Tree {
    parse_sexpr(FIG1).unwrap()
}

pub fn tiny_dims() -> ModelDims {
    ModelDims {
        word_dim: 5,
        tag_dim: 3,
        char_embed_dim: 3,
        char_dim: 3,
        lstm_dim: 4,
        lstm_layers: 1,
        label_hidden: 6,
        span_hidden: 6,
        dropout: 0.0,
    }
}

pub fn tiny_model(trees: &[Tree], history: HistoryMode, features: HistoryFeatures, seed: u64) -> Model {
    let config = ModelConfig {
        dims: tiny_dims(),
        history,
        features,
        history_dim: 3,
        label_embed_dim: 2,
    };
    Model::new(Vocab::build(trees), config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

pub fn train_config(kind: DecoderKind, history: HistoryMode, explore: bool) -> TrainConfig {
    let mut cfg = TrainConfig::new(DecoderSpec::new(kind, history).unwrap());
    cfg.explore = explore;
    cfg
}

/// Passes the finite-difference tolerance: absolute error ≤ 1e-8 or
/// relative error ≤ 1e-4.
pub fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= 1e-8 || diff / analytic.abs().max(numeric.abs()) <= 1e-4
}

pub struct FdOutcome {
    pub checked: usize,
    pub failed: Vec<String>,
}

const H: f64 = 1e-5;

fn loss_at(model: &Model, tree: &Tree, gold: &GoldIndex, cfg: &TrainConfig) -> (f64, usize, f64) {
    let (loss, _, stats) = sentence_gradients::<ChaCha8Rng>(model, tree, gold, cfg, None).unwrap();
    (loss, stats.errors, stats.kink_distance)
}

fn scale_all(model: &mut Model, factor: f64) {
    let ids: Vec<ParamId> = model.store.ids().collect();
    for id in ids {
        model.store.value_mut(id).data_mut().iter_mut().for_each(|v| *v *= factor);
    }
}

/// Central differences of the full sentence loss at `coords` random
/// coordinates. Coordinates whose perturbation comes within 1e-3 of a
/// hinge or argmax kink are skipped.
pub fn check_sentence_loss(tree: &Tree, history: HistoryMode, kind: DecoderKind, coords: usize, seed: u64) -> FdOutcome {
    let cfg = train_config(kind, history, false);
    let gold = gold_index(&collapse_unaries(tree));
    // An initialisation with every decision clear of its kinks; larger
    // weights spread the scores apart.
    let mut model = (0..200)
        .map(|s| {
            let mut m = tiny_model(&[tree.clone(), fig1()], history, HistoryFeatures::default(), seed * 1000 + s);
            scale_all(&mut m, 3.0);
            m
        })
        .find(|m| {
            let (_, errors, dist) = loss_at(m, tree, &gold, &cfg);
            errors > 0 && dist > 1e-3
        })
        .expect("no usable initialisation");
    let (_, grads, stats) = sentence_gradients::<ChaCha8Rng>(&model, tree, &gold, &cfg, None).unwrap();
    let ids: Vec<ParamId> = model.store.ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outcome = FdOutcome { checked: 0, failed: Vec::new() };
    let mut attempts = 0;
    while outcome.checked < coords && attempts < coords * 20 {
        attempts += 1;
        let id = ids[rng.random_range(0..ids.len())];
        let k = rng.random_range(0..model.store.value(id).len());
        let original = model.store.value(id).data()[k];
        model.store.value_mut(id).data_mut()[k] = original + H;
        let (plus, e1, d1) = loss_at(&model, tree, &gold, &cfg);
        model.store.value_mut(id).data_mut()[k] = original - H;
        let (minus, e2, d2) = loss_at(&model, tree, &gold, &cfg);
        model.store.value_mut(id).data_mut()[k] = original;
        if e1 != stats.errors || e2 != stats.errors || d1 < 1e-3 || d2 < 1e-3 {
            continue;
        }
        let numeric = (plus - minus) / (2.0 * H);
        let analytic = grads.get(id).map_or(0.0, |g| g[k]);
        outcome.checked += 1;
        if !close(analytic, numeric) {
            outcome.failed.push(format!("{}[{k}]: analytic {analytic:e}, numeric {numeric:e}", model.store.name(id)));
        }
    }
    outcome
}

/// Central differences of a weighted sum of one span's label and span
/// scores with respect to the scorer network parameters.
pub fn check_scorers(coords: usize, seed: u64) -> FdOutcome {
    let tree = fig1();
    let mut model = tiny_model(std::slice::from_ref(&tree), HistoryMode::None, HistoryFeatures::default(), seed);
    let words = tree.words();
    let tags = tree.tags();
    let scorer = model.scorer;
    let ids: Vec<ParamId> = scorer.label.params().into_iter().chain(scorer.span.params()).collect();
    let eval = |model: &Model| {
        let mut s = model.sentence::<ChaCha8Rng>(Graph::new(&model.store), &words, &tags, None).unwrap();
        let x = s.span_vector(1, 4).unwrap();
        let labels = model.scorer.label_scores(&mut s.graph, x).unwrap();
        let weights = s.graph.vector((0..model.vocab.num_labels()).map(|l| 1.0 + l as f64 * 0.5).collect());
        let a = s.graph.dot(labels, weights).unwrap();
        let b = model.scorer.span_score(&mut s.graph, x).unwrap();
        let loss = s.graph.add(a, b).unwrap();
        let value = s.graph.value(loss).item();
        (value, s.graph.backward(loss).unwrap())
    };
    let (_, grads) = eval(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outcome = FdOutcome { checked: 0, failed: Vec::new() };
    for _ in 0..coords {
        let id = ids[rng.random_range(0..ids.len())];
        let k = rng.random_range(0..model.store.value(id).len());
        let original = model.store.value(id).data()[k];
        model.store.value_mut(id).data_mut()[k] = original + H;
        let plus = eval(&model).0;
        model.store.value_mut(id).data_mut()[k] = original - H;
        let minus = eval(&model).0;
        model.store.value_mut(id).data_mut()[k] = original;
        let numeric = (plus - minus) / (2.0 * H);
        let analytic = grads.get(id).map_or(0.0, |g| g[k]);
        outcome.checked += 1;
        if !close(analytic, numeric) {
            outcome.failed.push(format!("{}[{k}]: analytic {analytic:e}, numeric {numeric:e}", model.store.name(id)));
        }
    }
    outcome
}
