//! Training oracles: the static label oracle, the dynamic parent-boundary
//! oracle for in-order decoding, the split oracle for top-down decoding,
//! and exhaustive reachability used to validate them.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decoders::{run_greedy, DecisionProcess, DecoderKind, DecoderSpec, HistoryMode, TableModel};
use crate::treebank::{collapse_unaries, gold_index, unbinarize, BinaryTree, GoldIndex, Tree, EMPTY_LABEL};
use crate::Error;

/// How the second enclosure query of the boundary oracle treats a span that
/// is itself gold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpretation {
    /// The enclosing constituent must differ from the queried span.
    #[default]
    Strict,
    /// The queried span encloses itself.
    Inclusive,
}

impl fmt::Display for Interpretation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interpretation::Strict => "strict",
            Interpretation::Inclusive => "inclusive",
        })
    }
}

impl FromStr for Interpretation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "strict" => Ok(Interpretation::Strict),
            "inclusive" => Ok(Interpretation::Inclusive),
            _ => Err(Error::Config(format!("unknown oracle interpretation {s:?}"))),
        }
    }
}

/// Oracle label and boundary set for one in-order state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleAnswer {
    pub label: String,
    pub boundaries: Vec<usize>,
}

impl OracleAnswer {
    /// The rightmost boundary, used as the training target.
    pub fn chosen(&self) -> Option<usize> {
        self.boundaries.last().copied()
    }
}

/// Gold label of `(i, j)`, or the empty label.
pub fn oracle_label(gold: &GoldIndex, i: usize, j: usize) -> &str {
    gold.label(i, j).unwrap_or(EMPTY_LABEL)
}

/// Smallest gold span containing `(i, j)`; the whole sentence always
/// counts as gold. With `strict`, `(i, j)` itself is excluded.
pub fn smallest_enclosing(gold: &GoldIndex, i: usize, j: usize, strict: bool) -> Option<(usize, usize)> {
    let root = (0, gold.n);
    gold.spans
        .keys()
        .copied()
        .chain(std::iter::once(root))
        .filter(|&(a, b)| a <= i && j <= b && !(strict && (a, b) == (i, j)))
        .min_by_key(|&(a, b)| b - a)
}

/// Right-boundary set for the parent of `(i, j)` under bound `r`.
pub fn oracle_parents(gold: &GoldIndex, i: usize, j: usize, r: usize, interpretation: Interpretation) -> Result<Vec<usize>, Error> {
    if !(i < j && j < r && r <= gold.n) {
        return Err(Error::Internal(format!("no parent decision at ({i}, {j}) with bound {r}")));
    }
    let (_, outer_end) = smallest_enclosing(gold, i, j, true)
        .ok_or_else(|| Error::Internal(format!("({i}, {j}) has no enclosing constituent")))?;
    let target = if outer_end == j { r } else { outer_end.min(r) };
    let strict = interpretation == Interpretation::Strict;
    let (a, b) = smallest_enclosing(gold, j, target, strict)
        .ok_or_else(|| Error::Internal(format!("({j}, {target}) has no enclosing constituent")))?;
    let set: Vec<usize> = if a + 1 == b {
        vec![b]
    } else {
        gold.boundaries(a, b)
            .unwrap_or(&[])
            .iter()
            .copied()
            .filter(|&k| j < k && k <= target)
            .collect()
    };
    if set.is_empty() {
        return Err(Error::Internal(format!("empty oracle boundary set at ({i}, {j}) with bound {r}")));
    }
    Ok(set)
}

/// Full oracle answer for an in-order state.
pub fn oracle_answer(gold: &GoldIndex, i: usize, j: usize, r: usize, interpretation: Interpretation) -> Result<OracleAnswer, Error> {
    let boundaries = if j == r { Vec::new() } else { oracle_parents(gold, i, j, r, interpretation)? };
    Ok(OracleAnswer {
        label: oracle_label(gold, i, j).to_string(),
        boundaries,
    })
}

/// Splits of `(i, j)` that cross no gold span strictly inside it.
pub fn oracle_splits_topdown(gold: &GoldIndex, i: usize, j: usize) -> Result<Vec<usize>, Error> {
    if j < i + 2 || j > gold.n {
        return Err(Error::Internal(format!("cannot split ({i}, {j})")));
    }
    let inside: Vec<(usize, usize)> = gold
        .spans
        .keys()
        .copied()
        .filter(|&(a, b)| i <= a && b <= j && (a, b) != (i, j))
        .collect();
    Ok((i + 1..j).filter(|&k| !inside.iter().any(|&(a, b)| a < k && k < b)).collect())
}

/// A state of the in-order decoder: about to handle call `(i, j, r)`, with
/// continuation calls `pending` (outermost first) and `realized` gold
/// constituents already produced. `labeled` marks that `(i, j)` has been
/// labeled and only the parent decision remains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InOrderState {
    pub i: usize,
    pub j: usize,
    pub r: usize,
    pub labeled: bool,
    pub pending: Vec<(usize, usize, usize)>,
    pub realized: usize,
}

impl InOrderState {
    pub fn initial(n: usize) -> Self {
        InOrderState {
            i: 0,
            j: 1,
            r: n,
            labeled: false,
            pending: Vec::new(),
            realized: 0,
        }
    }
}

/// Pending spans of the top-down decoder, each still to be labeled and
/// split, plus gold constituents already produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopDownState {
    pub pending: Vec<(usize, usize)>,
    pub realized: usize,
}

/// Exhaustive best-completion values with memoization.
pub struct Reachability<'g> {
    gold: &'g GoldIndex,
    calls: HashMap<(usize, usize, usize), usize>,
    subtrees: HashMap<(usize, usize), usize>,
}

impl<'g> Reachability<'g> {
    pub fn new(gold: &'g GoldIndex) -> Self {
        Reachability {
            gold,
            calls: HashMap::new(),
            subtrees: HashMap::new(),
        }
    }

    /// Best gold count produced by in-order call `(i, j, r)`.
    pub fn call(&mut self, i: usize, j: usize, r: usize) -> usize {
        if let Some(&v) = self.calls.get(&(i, j, r)) {
            return v;
        }
        let v = self.gold.weight(i, j) + if j == r { 0 } else { self.after_label(i, j, r) };
        self.calls.insert((i, j, r), v);
        v
    }

    /// Best count once `(i, j)` is labeled, over all parent choices.
    pub fn after_label(&mut self, i: usize, j: usize, r: usize) -> usize {
        (j + 1..=r).map(|k| self.parent_value(i, j, r, k)).max().unwrap_or(0)
    }

    /// Best count when `(i, j)` takes parent boundary `k`.
    pub fn parent_value(&mut self, i: usize, j: usize, r: usize, k: usize) -> usize {
        self.call(j, j + 1, k) + self.call(i, k, r)
    }

    /// Best gold count inside a top-down pending span.
    pub fn subtree(&mut self, i: usize, j: usize) -> usize {
        if let Some(&v) = self.subtrees.get(&(i, j)) {
            return v;
        }
        let v = self.gold.weight(i, j) + (i + 1..j).map(|k| self.split_value(i, j, k)).max().unwrap_or(0);
        self.subtrees.insert((i, j), v);
        v
    }

    pub fn split_value(&mut self, i: usize, j: usize, k: usize) -> usize {
        self.subtree(i, k) + self.subtree(k, j)
    }
}

/// Maximum number of gold constituents (unary chains expanded) present in
/// any completion of an in-order decoder state.
pub fn brute_force_reachable(gold: &GoldIndex, state: &InOrderState) -> Result<usize, Error> {
    let n = gold.n;
    let bad = |why: &str| Err(Error::Internal(format!("inconsistent decoder state: {why}")));
    if !(state.i < state.j && state.j <= state.r && state.r <= n) {
        return bad("span outside bound");
    }
    let (mut i, mut r) = (state.i, state.r);
    for &(pi, pk, pr) in state.pending.iter().rev() {
        if pk != r || pi >= i || pr < pk {
            return bad("pending call does not enclose the current one");
        }
        i = pi;
        r = pr;
    }
    if i != 0 || r != n {
        return bad("outermost call does not cover the sentence");
    }
    let mut reach = Reachability::new(gold);
    let current = if state.labeled {
        if state.j == state.r {
            0
        } else {
            reach.after_label(state.i, state.j, state.r)
        }
    } else {
        reach.call(state.i, state.j, state.r)
    };
    let pending: usize = state.pending.iter().map(|&(a, k, b)| reach.call(a, k, b)).sum();
    Ok(state.realized + current + pending)
}

/// Top-down counterpart of [`brute_force_reachable`].
pub fn brute_force_reachable_topdown(gold: &GoldIndex, state: &TopDownState) -> Result<usize, Error> {
    let mut covered = vec![false; gold.n];
    for &(i, j) in &state.pending {
        if i >= j || j > gold.n || covered[i..j].iter().any(|&c| c) {
            return Err(Error::Internal(format!("inconsistent pending span ({i}, {j})")));
        }
        covered[i..j].iter_mut().for_each(|c| *c = true);
    }
    let mut reach = Reachability::new(gold);
    Ok(state.realized + state.pending.iter().map(|&(i, j)| reach.subtree(i, j)).sum::<usize>())
}

/// Follows oracle decisions: gold labels, the rightmost parent boundary
/// and the leftmost split. Label ids index `labels`.
pub struct GoldFollower<'g> {
    pub gold: &'g GoldIndex,
    pub interpretation: Interpretation,
    pub labels: Vec<String>,
}

impl<'g> GoldFollower<'g> {
    pub fn new(gold: &'g GoldIndex, interpretation: Interpretation) -> Self {
        let mut labels = vec![EMPTY_LABEL.to_string()];
        labels.extend(gold.spans.values().cloned().collect::<BTreeSet<_>>());
        GoldFollower {
            gold,
            interpretation,
            labels,
        }
    }
}

impl DecisionProcess<TableModel> for GoldFollower<'_> {
    fn label(&mut self, _: &mut TableModel, _: &(), i: usize, j: usize) -> Result<usize, Error> {
        let label = oracle_label(self.gold, i, j);
        Ok(self.labels.iter().position(|l| l == label).unwrap_or(0))
    }

    fn parent(&mut self, _: &mut TableModel, _: &(), i: usize, j: usize, r: usize) -> Result<usize, Error> {
        Ok(*oracle_parents(self.gold, i, j, r, self.interpretation)?.last().expect("non-empty"))
    }

    fn split(&mut self, _: &mut TableModel, _: &(), i: usize, j: usize) -> Result<usize, Error> {
        Ok(oracle_splits_topdown(self.gold, i, j)?[0])
    }
}

/// Decodes by following the oracle and returns the resulting tree.
pub fn follow_oracle(tree: &Tree, kind: DecoderKind, interpretation: Interpretation) -> Result<Tree, Error> {
    let gold = gold_index(&collapse_unaries(tree));
    let mut follower = GoldFollower::new(&gold, interpretation);
    let mut model = TableModel::zeros(gold.n, follower.labels.len());
    let bt: BinaryTree<usize> = run_greedy(&mut model, &mut follower, DecoderSpec::new(kind, HistoryMode::None)?)?;
    let named = bt.map_labels(&mut |&l| follower.labels[l].clone());
    Ok(unbinarize(&named, &tree.leaves())?)
}

/// Outcome of exhaustive oracle validation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleReport {
    pub interpretation: Interpretation,
    pub trees: usize,
    /// In-order parent-decision states examined.
    pub states: usize,
    /// Top-down split states examined.
    pub split_states: usize,
    /// Rightmost boundary loses reachable gold.
    pub soundness_violations: usize,
    /// Empty set or an element outside `(j, R]`.
    pub bound_violations: usize,
    /// Oracle-following decode does not rebuild the gold tree.
    pub completeness_failures: usize,
    /// Split oracle differs from the exhaustive argmax set.
    pub topdown_violations: usize,
    /// Non-rightmost elements that lose reachable gold. Reported only.
    pub non_rightmost_losses: usize,
}

impl OracleReport {
    pub fn violations(&self) -> usize {
        self.soundness_violations + self.bound_violations + self.completeness_failures + self.topdown_violations
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "interpretation: {}", self.interpretation)?;
        writeln!(f, "trees tested: {}", self.trees)?;
        writeln!(f, "in-order states tested: {}", self.states)?;
        writeln!(f, "top-down states tested: {}", self.split_states)?;
        writeln!(f, "soundness violations: {}", self.soundness_violations)?;
        writeln!(f, "boundary-set violations: {}", self.bound_violations)?;
        writeln!(f, "gold-path failures: {}", self.completeness_failures)?;
        writeln!(f, "top-down split violations: {}", self.topdown_violations)?;
        writeln!(f, "non-rightmost losses (informational): {}", self.non_rightmost_losses)?;
        write!(f, "violations: {}", self.violations())
    }
}

/// Checks one gold tree over every reachable in-order state and every
/// top-down span.
pub fn check_tree(tree: &Tree, interpretation: Interpretation, report: &mut OracleReport) {
    let gold = gold_index(&collapse_unaries(tree));
    let n = gold.n;
    report.trees += 1;
    let mut reach = Reachability::new(&gold);

    // Every call (i, j, R) reachable from (0, 1, n) under arbitrary choices.
    let mut seen = BTreeSet::new();
    let mut frontier = vec![(0, 1, n)];
    while let Some((i, j, r)) = frontier.pop() {
        if !seen.insert((i, j, r)) || j == r {
            continue;
        }
        for k in j + 1..=r {
            frontier.push((j, j + 1, k));
            frontier.push((i, k, r));
        }
    }
    for &(i, j, r) in seen.iter().filter(|&&(_, j, r)| j < r) {
        report.states += 1;
        let set = match oracle_parents(&gold, i, j, r, interpretation) {
            Ok(set) => set,
            Err(_) => {
                report.bound_violations += 1;
                continue;
            }
        };
        if set.iter().any(|&k| k <= j || k > r) {
            report.bound_violations += 1;
        }
        let best = reach.after_label(i, j, r);
        let chosen = *set.last().expect("non-empty");
        if chosen > j && chosen <= r && reach.parent_value(i, j, r, chosen) != best {
            report.soundness_violations += 1;
        }
        report.non_rightmost_losses += set[..set.len() - 1]
            .iter()
            .filter(|&&k| k > j && k <= r && reach.parent_value(i, j, r, k) != best)
            .count();
    }

    for i in 0..n {
        for j in i + 2..=n {
            report.split_states += 1;
            let best = reach.subtree(i, j) - gold.weight(i, j);
            let exact: Vec<usize> = (i + 1..j).filter(|&k| reach.split_value(i, j, k) == best).collect();
            if oracle_splits_topdown(&gold, i, j).ok() != Some(exact) {
                report.topdown_violations += 1;
            }
        }
    }

    for kind in [DecoderKind::InOrder, DecoderKind::TopDown] {
        match follow_oracle(tree, kind, interpretation) {
            Ok(rebuilt) if rebuilt == *tree => {}
            _ => report.completeness_failures += 1,
        }
    }
}

pub fn check_trees(trees: &[Tree], interpretation: Interpretation) -> OracleReport {
    let mut report = OracleReport {
        interpretation,
        ..OracleReport::default()
    };
    for tree in trees {
        check_tree(tree, interpretation, &mut report);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::parse_sexpr;

    const FIG1: &str = "(S (NP (PRP She)) (VP (VBZ loves) (S (VP (VBG writing) (NN code)))) (. .))";

    fn fig1() -> (Tree, GoldIndex) {
        let t = parse_sexpr(FIG1).unwrap();
        let g = gold_index(&collapse_unaries(&t));
        (t, g)
    }

    #[test]
    fn labels() {
        let (_, g) = fig1();
        assert_eq!(oracle_label(&g, 0, 1), "NP");
        assert_eq!(oracle_label(&g, 1, 5), EMPTY_LABEL);
        assert_eq!(oracle_label(&g, 2, 4), "S+VP");
    }

    #[test]
    fn enclosing() {
        let (_, g) = fig1();
        assert_eq!(smallest_enclosing(&g, 1, 2, true), Some((1, 4)));
        assert_eq!(smallest_enclosing(&g, 2, 4, false), Some((2, 4)));
        assert_eq!(smallest_enclosing(&g, 2, 4, true), Some((1, 4)));
        assert_eq!(smallest_enclosing(&g, 0, 5, true), None);
        assert_eq!(smallest_enclosing(&g, 0, 5, false), Some((0, 5)));
    }

    #[test]
    fn fig1_parent_sets() {
        let (_, g) = fig1();
        for interp in [Interpretation::Strict, Interpretation::Inclusive] {
            assert_eq!(oracle_parents(&g, 0, 1, 5, interp).unwrap().last(), Some(&5));
            assert_eq!(oracle_parents(&g, 1, 2, 5, interp).unwrap().last(), Some(&4));
            assert_eq!(oracle_parents(&g, 1, 3, 5, interp).unwrap().last(), Some(&4));
        }
        assert_eq!(oracle_parents(&g, 0, 1, 5, Interpretation::Strict).unwrap(), vec![4, 5]);
        assert_eq!(oracle_parents(&g, 1, 2, 5, Interpretation::Strict).unwrap(), vec![4]);
        assert_eq!(oracle_parents(&g, 1, 2, 5, Interpretation::Inclusive).unwrap(), vec![3, 4]);
        assert!(oracle_parents(&g, 0, 5, 5, Interpretation::Strict).is_err());

        let mut reach = Reachability::new(&g);
        let best = reach.after_label(1, 2, 5);
        assert_eq!(reach.parent_value(1, 2, 5, 4), best);
        assert!(reach.parent_value(1, 2, 5, 3) < best);
        let best = reach.after_label(1, 3, 5);
        assert_eq!(reach.parent_value(1, 3, 5, 4), best);
    }

    #[test]
    fn topdown_splits() {
        let (_, g) = fig1();
        assert_eq!(oracle_splits_topdown(&g, 0, 5).unwrap(), vec![1, 4]);
        assert_eq!(oracle_splits_topdown(&g, 1, 4).unwrap(), vec![2]);
        assert_eq!(oracle_splits_topdown(&g, 2, 4).unwrap(), vec![3]);
        assert_eq!(oracle_splits_topdown(&g, 3, 5).unwrap(), vec![4]);
        assert!(oracle_splits_topdown(&g, 3, 4).is_err());
        let mut reach = Reachability::new(&g);
        let best = reach.subtree(0, 5) - 1;
        let exact: Vec<usize> = (1..5).filter(|&k| reach.split_value(0, 5, k) == best).collect();
        assert_eq!(exact, vec![1, 4]);
    }

    #[test]
    fn reachability_examples() {
        let (_, g) = fig1();
        assert_eq!(brute_force_reachable(&g, &InOrderState::initial(5)).unwrap(), 5);
        // NP(0,1) realized, wrong parent 3: continue at (1,2,3), then (0,3,5).
        let wrong = InOrderState {
            i: 1,
            j: 2,
            r: 3,
            labeled: false,
            pending: vec![(0, 3, 5)],
            realized: 1,
        };
        assert!(brute_force_reachable(&g, &wrong).unwrap() < 5);
        let inconsistent = InOrderState {
            i: 1,
            j: 2,
            r: 4,
            labeled: false,
            pending: vec![(0, 3, 5)],
            realized: 0,
        };
        assert!(brute_force_reachable(&g, &inconsistent).is_err());

        let one = gold_index(&parse_sexpr("(X (T a))").unwrap());
        assert_eq!(brute_force_reachable(&one, &InOrderState::initial(1)).unwrap(), 1);
        let td = TopDownState {
            pending: vec![(0, 5)],
            realized: 0,
        };
        assert_eq!(brute_force_reachable_topdown(&g, &td).unwrap(), 5);
    }

    #[test]
    fn gold_path_rebuilds_fig1() {
        let (t, _) = fig1();
        for interp in [Interpretation::Strict, Interpretation::Inclusive] {
            assert_eq!(follow_oracle(&t, DecoderKind::InOrder, interp).unwrap(), t);
            assert_eq!(follow_oracle(&t, DecoderKind::TopDown, interp).unwrap(), t);
        }
        let report = check_trees(&[t], Interpretation::Strict);
        assert_eq!(report.violations(), 0, "{report}");
    }

    #[test]
    fn inclusive_reading_has_unsound_non_rightmost_elements() {
        let (t, _) = fig1();
        let inclusive = check_trees(std::slice::from_ref(&t), Interpretation::Inclusive);
        assert!(inclusive.non_rightmost_losses > 0);
        let strict = check_trees(&[t], Interpretation::Strict);
        assert_eq!(strict.non_rightmost_losses, 0);
    }
}
