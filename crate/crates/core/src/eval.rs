//! Labeled bracket recall, precision and F1.

use std::collections::HashMap;
use std::fmt;

use crate::treebank::{spans_of, Tree};
use crate::Error;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub matched: usize,
    pub gold: usize,
    pub pred: usize,
}

impl EvalCounts {
    pub fn add(self, other: EvalCounts) -> EvalCounts {
        EvalCounts {
            matched: self.matched + other.matched,
            gold: self.gold + other.gold,
            pred: self.pred + other.pred,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub matched: usize,
    pub gold_total: usize,
    pub pred_total: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl From<EvalCounts> for EvalReport {
    fn from(c: EvalCounts) -> Self {
        let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        let recall = pct(c.matched, c.gold);
        let precision = pct(c.matched, c.pred);
        let f1 = if recall + precision == 0.0 {
            0.0
        } else {
            2.0 * recall * precision / (recall + precision)
        };
        EvalReport {
            matched: c.matched,
            gold_total: c.gold,
            pred_total: c.pred,
            recall,
            precision,
            f1,
        }
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "LR={:.2} LP={:.2} F1={:.2} matched={} gold={} pred={}",
            self.recall, self.precision, self.f1, self.matched, self.gold_total, self.pred_total
        )
    }
}

/// Span counts for one sentence pair; constituents are compared as a
/// multiset of `(i, j, label)` with unary chains expanded.
pub fn score_sentence(gold: &Tree, pred: &Tree) -> Result<EvalCounts, Error> {
    if gold.len() != pred.len() {
        return Err(Error::Eval(format!("gold has {} words but prediction has {}", gold.len(), pred.len())));
    }
    let gold_spans = spans_of(gold);
    let pred_spans = spans_of(pred);
    let mut pool: HashMap<_, usize> = HashMap::new();
    for s in &gold_spans {
        *pool.entry((s.start, s.end, s.label.as_str())).or_default() += 1;
    }
    let mut matched = 0;
    for s in &pred_spans {
        if let Some(c) = pool.get_mut(&(s.start, s.end, s.label.as_str())) {
            if *c > 0 {
                *c -= 1;
                matched += 1;
            }
        }
    }
    Ok(EvalCounts {
        matched,
        gold: gold_spans.len(),
        pred: pred_spans.len(),
    })
}

pub fn score_corpus(gold: &[Tree], pred: &[Tree]) -> Result<EvalReport, Error> {
    if gold.is_empty() {
        return Err(Error::Eval("empty corpus".into()));
    }
    if gold.len() != pred.len() {
        return Err(Error::Eval(format!("{} gold trees but {} predicted trees", gold.len(), pred.len())));
    }
    let mut total = EvalCounts::default();
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        let counts = score_sentence(g, p).map_err(|e| Error::Eval(format!("sentence {}: {e}", index + 1)))?;
        total = total.add(counts);
    }
    Ok(total.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::parse_sexpr;

    fn t(s: &str) -> Tree {
        parse_sexpr(s).unwrap()
    }

    #[test]
    fn identical_is_perfect() {
        let g = t("(S (NP (PRP She)) (VP (VBZ loves) (S (VP (VBG writing) (NN code)))) (. .))");
        let r = score_corpus(std::slice::from_ref(&g), std::slice::from_ref(&g)).unwrap();
        assert_eq!((r.recall, r.precision, r.f1), (100.0, 100.0, 100.0));
        assert_eq!(r.matched, 5);
    }

    #[test]
    fn hand_example() {
        // Gold: S(0,4) A(0,2) B(2,4) C(0,1) D(3,4). Pred: S(0,4) A(0,2) B(2,4) E(1,2).
        let g = t("(S (A (C (T a)) (T b)) (B (T c) (D (T d))))");
        let p = t("(S (A (T a) (E (T b))) (B (T c) (T d)))");
        let r = score_corpus(&[g], &[p]).unwrap();
        assert_eq!((r.matched, r.gold_total, r.pred_total), (3, 5, 4));
        assert!((r.recall - 60.0).abs() < 1e-12);
        assert!((r.precision - 75.0).abs() < 1e-12);
        assert!((r.f1 - 200.0 / 3.0).abs() < 1e-3);
        assert_eq!(r.to_string(), "LR=60.00 LP=75.00 F1=66.67 matched=3 gold=5 pred=4");
    }

    #[test]
    fn errors_and_symmetry() {
        assert!(score_corpus(&[], &[]).is_err());
        let a = t("(S (A (T a) (T b)) (T c))");
        let b = t("(S (T a) (B (T b) (T c)))");
        assert!(score_corpus(&[a.clone()], &[]).is_err());
        assert!(score_corpus(&[a.clone()], &[t("(S (T a))")]).is_err());
        let ab = score_corpus(&[a.clone()], &[b.clone()]).unwrap();
        let ba = score_corpus(&[b], &[a]).unwrap();
        assert_eq!(ab.recall, ba.precision);
        assert_eq!(ab.f1, ba.f1);
    }

    #[test]
    fn unary_chain_counts_twice() {
        let g = t("(S (S (VP (VBG w) (NN c))))");
        let r = score_corpus(&[g.clone()], &[g]).unwrap();
        assert_eq!(r.matched, 3);
    }
}
