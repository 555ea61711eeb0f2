mod common;

use chartparse::decoders::{DecoderKind, HistoryMode};
use chartparse::treebank::parse_sexpr;

use common::*;

#[test]
fn sentence_loss_gradients_match_finite_differences() {
    let tree = parse_sexpr("(S (NP (PRP She)) (VP (VBZ runs)) (. .))").unwrap();
    for (history, kind) in [
        (HistoryMode::None, DecoderKind::InOrder),
        (HistoryMode::Chain, DecoderKind::InOrder),
        (HistoryMode::Stack, DecoderKind::InOrder),
        (HistoryMode::Chain, DecoderKind::TopDown),
    ] {
        let out = check_sentence_loss(&tree, history, kind, 100, 3);
        assert!(out.checked >= 100, "only {} usable coordinates", out.checked);
        assert!(out.failed.is_empty(), "{:?}", out.failed);
    }
}

#[test]
fn scorer_gradients_match_finite_differences() {
    let out = check_scorers(150, 8);
    assert_eq!(out.checked, 150);
    assert!(out.failed.is_empty(), "{:?}", out.failed);
}
