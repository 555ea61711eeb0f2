use chartparse::decoders::{run_greedy, DecisionProcess, DecoderKind, DecoderSpec, HistoryMode, SpanModel, TableModel};
use chartparse::oracle::{oracle_label, oracle_parents, oracle_splits_topdown, follow_oracle, Interpretation};
use chartparse::synth::{pcfg_treebank, random_tree};
use chartparse::treebank::{collapse_unaries, gold_index, GoldIndex, Tree};
use chartparse::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Takes random decisions while querying the oracle at every state, as an
/// exploring trainer would after arbitrary mistakes.
struct RandomWalk<'g> {
    gold: &'g GoldIndex,
    rng: ChaCha8Rng,
    interpretation: Interpretation,
    parent_states: usize,
    split_states: usize,
}

impl DecisionProcess<TableModel> for RandomWalk<'_> {
    fn label(&mut self, _: &mut TableModel, _: &(), i: usize, j: usize) -> Result<usize, Error> {
        assert!(i < j && j <= self.gold.n);
        let _ = oracle_label(self.gold, i, j);
        Ok(0)
    }

    fn parent(&mut self, _: &mut TableModel, _: &(), i: usize, j: usize, r: usize) -> Result<usize, Error> {
        assert!(i < j && j < r && r <= self.gold.n, "bad state ({i}, {j}, {r})");
        let set = oracle_parents(self.gold, i, j, r, self.interpretation)?;
        assert!(!set.is_empty(), "empty oracle set at ({i}, {j}, {r})");
        assert!(set.iter().all(|&k| j < k && k <= r));
        assert!(set.windows(2).all(|w| w[0] < w[1]));
        self.parent_states += 1;
        Ok(self.rng.random_range(j + 1..=r))
    }

    fn split(&mut self, _: &mut TableModel, _: &(), i: usize, j: usize) -> Result<usize, Error> {
        let set = oracle_splits_topdown(self.gold, i, j)?;
        assert!(!set.is_empty() && set.iter().all(|&k| i < k && k < j));
        self.split_states += 1;
        Ok(self.rng.random_range(i + 1..j))
    }
}

fn walk(trees: &[Tree], interpretation: Interpretation, seed: u64) -> (usize, usize) {
    let mut totals = (0, 0);
    for (t, tree) in trees.iter().enumerate() {
        let gold = gold_index(&collapse_unaries(tree));
        let mut model = TableModel::zeros(gold.n, 1);
        for kind in [DecoderKind::InOrder, DecoderKind::TopDown] {
            let mut w = RandomWalk {
                gold: &gold,
                rng: ChaCha8Rng::seed_from_u64(seed + t as u64),
                interpretation,
                parent_states: 0,
                split_states: 0,
            };
            let bt = run_greedy(&mut model, &mut w, DecoderSpec::new(kind, HistoryMode::None).unwrap()).unwrap();
            assert!(bt.validate(model.len()).is_ok());
            totals.0 += w.parent_states;
            totals.1 += w.split_states;
        }
    }
    totals
}

#[test]
fn exploration_never_leaves_the_oracle_domain() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let trees: Vec<Tree> = (0..2500).map(|_| random_tree(&mut rng, 12)).collect();
    for interpretation in [Interpretation::Strict, Interpretation::Inclusive] {
        let (parents, splits) = walk(&trees, interpretation, 5);
        assert!(parents >= 10_000, "only {parents} parent states");
        assert!(splits >= 10_000, "only {splits} split states");
    }
}

#[test]
fn following_the_oracle_rebuilds_gold() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut trees: Vec<Tree> = (0..500).map(|_| random_tree(&mut rng, 10)).collect();
    trees.extend(pcfg_treebank(&mut rng, 200));
    for tree in &trees {
        for kind in [DecoderKind::InOrder, DecoderKind::TopDown] {
            assert_eq!(&follow_oracle(tree, kind, Interpretation::Strict).unwrap(), tree, "{kind}");
        }
    }
}
