//! Synthetic treebanks: a small probabilistic grammar with unary chains and
//! n-ary nodes, and unconstrained random trees for oracle testing.

use rand::Rng;

use crate::treebank::Tree;

enum Sym {
    /// Nonterminal symbol; its label is the part before any `_`.
    Nt(&'static str),
    /// Preterminal symbol; printed tag is the part before any `_`.
    Tag(&'static str),
}

use Sym::{Nt, Tag};

type Rule = (f64, &'static [Sym]);

fn rules(symbol: &str) -> &'static [Rule] {
    match symbol {
        "S" => &[(0.7, &[Nt("NP"), Nt("VP"), Tag(".")]), (0.3, &[Nt("NP"), Nt("VP")])],
        "NP" => &[
            (0.35, &[Tag("DT"), Tag("NN")]),
            (0.2, &[Tag("DT"), Tag("JJ"), Tag("NN")]),
            (0.15, &[Tag("PRP")]),
            (0.1, &[Tag("NNP")]),
            (0.1, &[Tag("DT"), Tag("NNS")]),
            (0.1, &[Tag("DT"), Tag("JJ"), Tag("JJ"), Tag("NNS")]),
        ],
        "VP" => &[
            (0.25, &[Tag("VBZ"), Nt("NP")]),
            (0.1, &[Tag("VBD")]),
            (0.15, &[Tag("VBD"), Nt("NP"), Nt("PP")]),
            (0.15, &[Tag("VBZ"), Nt("S_VP")]),
            (0.1, &[Tag("MD"), Nt("VP_B")]),
            (0.15, &[Tag("VBD"), Nt("NP")]),
            (0.1, &[Tag("VBZ"), Nt("SBAR")]),
        ],
        "VP_B" => &[(0.6, &[Tag("VB"), Nt("NP")]), (0.4, &[Tag("VB")])],
        "S_VP" => &[(1.0, &[Nt("VP_G")])],
        "VP_G" => &[(1.0, &[Tag("VBG"), Nt("NP")])],
        "PP" => &[(1.0, &[Tag("IN"), Nt("NP")])],
        "SBAR" => &[(1.0, &[Tag("IN_C"), Nt("S")])],
        _ => &[],
    }
}

fn words(tag: &str) -> &'static [&'static str] {
    match tag {
        "DT" => &["the", "a", "every", "this"],
        "NN" => &["dog", "cat", "code", "idea", "table", "parser", "river", "book"],
        "NNS" => &["dogs", "ideas", "books", "trees", "rivers"],
        "JJ" => &["big", "small", "green", "old", "quick"],
        "PRP" => &["She", "He", "they", "it"],
        "NNP" => &["Alice", "Bob", "Paris", "Kim"],
        "VBZ" => &["loves", "sees", "likes", "knows"],
        "VBD" => &["saw", "found", "slept", "liked"],
        "VB" => &["see", "find", "write", "read"],
        "VBG" => &["writing", "reading", "watching"],
        "MD" => &["will", "can", "might"],
        "IN" => &["on", "near", "under", "with"],
        "IN_C" => &["that", "whether"],
        "." => &["."],
        _ => &["?"],
    }
}

fn base(name: &str) -> &str {
    name.split('_').next().unwrap_or(name)
}

fn expand<R: Rng>(symbol: &'static str, depth: usize, rng: &mut R) -> Option<Tree> {
    if depth > 6 {
        return None;
    }
    let options = rules(symbol);
    let total: f64 = options.iter().map(|r| r.0).sum();
    let mut draw = rng.random::<f64>() * total;
    let mut chosen = &options[options.len() - 1];
    for option in options {
        if draw < option.0 {
            chosen = option;
            break;
        }
        draw -= option.0;
    }
    let mut children = Vec::with_capacity(chosen.1.len());
    for sym in chosen.1 {
        children.push(match *sym {
            Nt(name) => expand(name, depth + 1, rng)?,
            Tag(tag) => {
                let lexicon = words(tag);
                Tree::leaf(base(tag), lexicon[rng.random_range(0..lexicon.len())])
            }
        });
    }
    Some(Tree::node(base(symbol), children))
}

/// One grammar sentence with `min_len ≤ n ≤ max_len` words.
pub fn pcfg_tree<R: Rng>(rng: &mut R, min_len: usize, max_len: usize) -> Tree {
    loop {
        if let Some(tree) = expand("S", 0, rng) {
            if (min_len..=max_len).contains(&tree.len()) {
                return tree;
            }
        }
    }
}

/// A treebank of `count` grammar sentences of 5 to 15 words.
pub fn pcfg_treebank<R: Rng>(rng: &mut R, count: usize) -> Vec<Tree> {
    (0..count).map(|_| pcfg_tree(rng, 5, 15)).collect()
}

const RANDOM_LABELS: [&str; 4] = ["A", "B", "C", "D"];

/// Random tree of 1 to `max_len` words with arbitrary branching, unary
/// chains and length-one constituents.
pub fn random_tree<R: Rng>(rng: &mut R, max_len: usize) -> Tree {
    let n = rng.random_range(1..=max_len.max(1));
    let mut counter = 0;
    match random_span(rng, n, &mut counter) {
        leaf @ Tree::Leaf { .. } => Tree::node(random_label(rng), vec![leaf]),
        node => node,
    }
}

fn random_label<R: Rng>(rng: &mut R) -> &'static str {
    RANDOM_LABELS[rng.random_range(0..RANDOM_LABELS.len())]
}

fn random_span<R: Rng>(rng: &mut R, len: usize, counter: &mut usize) -> Tree {
    let tree = if len == 1 {
        *counter += 1;
        let leaf = Tree::leaf("T", format!("w{counter}"));
        if rng.random_bool(0.3) {
            Tree::node(random_label(rng), vec![leaf])
        } else {
            leaf
        }
    } else {
        let arity = rng.random_range(2..=len.min(4));
        // Random composition of `len` into `arity` positive parts.
        let mut cuts: Vec<usize> = Vec::with_capacity(arity + 1);
        while cuts.len() < arity - 1 {
            let c = rng.random_range(1..len);
            if !cuts.contains(&c) {
                cuts.push(c);
            }
        }
        cuts.push(0);
        cuts.push(len);
        cuts.sort_unstable();
        let children = cuts.windows(2).map(|w| random_span(rng, w[1] - w[0], counter)).collect();
        Tree::node(random_label(rng), children)
    };
    if matches!(tree, Tree::Node { .. }) && rng.random_bool(0.2) {
        Tree::node(random_label(rng), vec![tree])
    } else {
        tree
    }
}
