//! Bracketed constituency trees.
//!
//! Covers reading and printing one-tree-per-line treebanks, PTB label
//! normalization, unary-chain collapse, implicit (right-branching)
//! binarization with the empty label, and labeled-span extraction.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Internal spelling of the empty label used for binarization artifacts.
pub const EMPTY_LABEL: &str = "∅";
/// ASCII alias of [`EMPTY_LABEL`] accepted and produced in files.
pub const EMPTY_LABEL_ASCII: &str = "EMPTY";
/// Separator joining the labels of a collapsed unary chain.
pub const CHAIN_SEPARATOR: char = '+';
/// Root label emitted when a decoder leaves the whole-sentence span empty.
pub const FALLBACK_ROOT: &str = "TOP";

pub fn is_empty_label(label: &str) -> bool {
    label == EMPTY_LABEL || label == EMPTY_LABEL_ASCII
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    /// Offsets are 1-based byte positions into the input line.
    #[error("unbalanced parentheses at byte {offset}")]
    Unbalanced { offset: usize },
    #[error("empty node at byte {offset}")]
    EmptyNode { offset: usize },
    #[error("missing label at byte {offset}")]
    MissingLabel { offset: usize },
    #[error("preterminal must dominate exactly one word (byte {offset})")]
    BadPreterminal { offset: usize },
    #[error("unexpected token at byte {offset}")]
    Unexpected { offset: usize },
    #[error("trailing input at byte {offset}")]
    Trailing { offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match *self {
            ParseError::Unbalanced { offset }
            | ParseError::EmptyNode { offset }
            | ParseError::MissingLabel { offset }
            | ParseError::BadPreterminal { offset }
            | ParseError::Unexpected { offset }
            | ParseError::Trailing { offset } => offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("illegal character in {what} {text:?}")]
    IllegalCharacter { what: &'static str, text: String },
    #[error("binary tree covers {found} leaves but {expected} words were supplied")]
    LeafCountMismatch { expected: usize, found: usize },
    #[error("malformed binary tree: {0}")]
    MalformedBinary(String),
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: ParseError,
    },
}

/// An n-ary constituency tree. Leaves are preterminals carrying a word and
/// its part-of-speech tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Tree {
    Leaf { tag: String, word: String },
    Node { label: String, children: Vec<Tree> },
}

/// A constituent over the half-open token range `start..end`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl LabeledSpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        LabeledSpan {
            start,
            end,
            label: label.into(),
        }
    }
}

impl Tree {
    pub fn leaf(tag: impl Into<String>, word: impl Into<String>) -> Tree {
        Tree::Leaf {
            tag: tag.into(),
            word: word.into(),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<Tree>) -> Tree {
        Tree::Node {
            label: label.into(),
            children,
        }
    }

    /// Number of words under this tree.
    pub fn len(&self) -> usize {
        match self {
            Tree::Leaf { .. } => 1,
            Tree::Node { children, .. } => children.iter().map(Tree::len).sum(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label(&self) -> &str {
        match self {
            Tree::Leaf { tag, .. } => tag,
            Tree::Node { label, .. } => label,
        }
    }

    /// `(word, tag)` pairs in sentence order.
    pub fn leaves(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<(String, String)>) {
        match self {
            Tree::Leaf { tag, word } => out.push((word.clone(), tag.clone())),
            Tree::Node { children, .. } => children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    pub fn words(&self) -> Vec<String> {
        self.leaves().into_iter().map(|(w, _)| w).collect()
    }

    pub fn tags(&self) -> Vec<String> {
        self.leaves().into_iter().map(|(_, t)| t).collect()
    }

    /// Applies PTB preprocessing. Returns `None` when trace removal deletes
    /// every word.
    pub fn normalize(&self, opts: &Normalization) -> Option<Tree> {
        match self {
            Tree::Leaf { tag, .. } => {
                if opts.remove_traces && tag == "-NONE-" {
                    None
                } else {
                    Some(self.clone())
                }
            }
            Tree::Node { label, children } => {
                let children: Vec<Tree> = children.iter().filter_map(|c| c.normalize(opts)).collect();
                if children.is_empty() {
                    return None;
                }
                let label = if opts.strip_function_tags {
                    strip_function_tags(label).to_string()
                } else {
                    label.clone()
                };
                Some(Tree::Node { label, children })
            }
        }
    }

    /// Merges every unary chain of internal nodes into one node whose label
    /// joins the chain with `sep`. Preterminals are left alone.
    pub fn collapse_unaries_with(&self, sep: char) -> Tree {
        match self {
            Tree::Leaf { .. } => self.clone(),
            Tree::Node { label, children } => {
                let mut label = label.clone();
                let mut children = children;
                while let [Tree::Node {
                    label: inner,
                    children: grand,
                }] = children.as_slice()
                {
                    label.push(sep);
                    label.push_str(inner);
                    children = grand;
                }
                Tree::Node {
                    label,
                    children: children.iter().map(|c| c.collapse_unaries_with(sep)).collect(),
                }
            }
        }
    }

    /// Inverse of [`Tree::collapse_unaries_with`].
    pub fn expand_unaries_with(&self, sep: char) -> Tree {
        match self {
            Tree::Leaf { .. } => self.clone(),
            Tree::Node { label, children } => {
                let children: Vec<Tree> = children.iter().map(|c| c.expand_unaries_with(sep)).collect();
                wrap_chain(label, sep, children)
            }
        }
    }
}

/// Builds the nested nodes for a (possibly collapsed) chain label around
/// `children`.
fn wrap_chain(label: &str, sep: char, children: Vec<Tree>) -> Tree {
    let mut parts: Vec<&str> = label.split(sep).collect();
    let innermost = parts.pop().unwrap_or(label);
    let mut tree = Tree::node(innermost, children);
    while let Some(outer) = parts.pop() {
        tree = Tree::node(outer, vec![tree]);
    }
    tree
}

pub fn collapse_unaries(tree: &Tree) -> Tree {
    tree.collapse_unaries_with(CHAIN_SEPARATOR)
}

/// Strips PTB function tags and indices (`NP-SBJ-1` → `NP`, `NP=2` → `NP`).
/// Labels starting with `-` (`-LRB-`, `-NONE-`) and the empty label are kept.
pub fn strip_function_tags(label: &str) -> &str {
    if label.starts_with('-') || is_empty_label(label) {
        return label;
    }
    match label.find(['-', '=']) {
        Some(pos) if pos > 0 => &label[..pos],
        _ => label,
    }
}

/// Input normalization applied when reading treebank files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Normalization {
    pub strip_function_tags: bool,
    pub remove_traces: bool,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            strip_function_tags: true,
            remove_traces: false,
        }
    }
}

impl Normalization {
    pub fn none() -> Self {
        Normalization {
            strip_function_tags: false,
            remove_traces: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token<'a> {
    Open(usize),
    Close(usize),
    Atom(&'a str, usize),
}

impl Token<'_> {
    fn offset(&self) -> usize {
        match *self {
            Token::Open(o) | Token::Close(o) | Token::Atom(_, o) => o,
        }
    }
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        match bytes[pos] {
            b'(' => {
                tokens.push(Token::Open(pos + 1));
                pos += 1;
            }
            b')' => {
                tokens.push(Token::Close(pos + 1));
                pos += 1;
            }
            b if b.is_ascii_whitespace() => pos += 1,
            _ => {
                let start = pos;
                while pos < bytes.len() && !matches!(bytes[pos], b'(' | b')') && !bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                tokens.push(Token::Atom(&text[start..pos], start + 1));
            }
        }
    }
    tokens
}

struct Parser<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    end_offset: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Result<Token<'a>, ParseError> {
        let tok = self.tokens.get(self.pos).cloned().ok_or(ParseError::Unbalanced {
            offset: self.end_offset,
        })?;
        self.pos += 1;
        Ok(tok)
    }

    // Opening paren already consumed.
    fn node(&mut self, open: usize, is_root: bool) -> Result<Tree, ParseError> {
        let label = match self.next()? {
            Token::Atom(a, _) => Some(a),
            Token::Close(_) => return Err(ParseError::EmptyNode { offset: open }),
            Token::Open(_) => {
                self.pos -= 1;
                None
            }
        };
        // Preterminal: (TAG word)
        if let Some(Token::Atom(word, _)) = self.peek().cloned() {
            let tag = label.ok_or(ParseError::MissingLabel { offset: open })?;
            self.pos += 1;
            return match self.next()? {
                Token::Close(_) => Ok(Tree::leaf(tag, word)),
                tok => Err(ParseError::BadPreterminal { offset: tok.offset() }),
            };
        }
        let mut children = Vec::new();
        loop {
            match self.next()? {
                Token::Open(o) => children.push(self.node(o, false)?),
                Token::Close(_) => break,
                Token::Atom(_, off) => return Err(ParseError::BadPreterminal { offset: off }),
            }
        }
        if children.is_empty() {
            return Err(ParseError::EmptyNode { offset: open });
        }
        match label {
            Some(l) => Ok(Tree::node(l, children)),
            // PTB wraps each sentence in an unlabeled bracket.
            None if is_root && children.len() == 1 => Ok(children.pop().unwrap()),
            None => Err(ParseError::MissingLabel { offset: open }),
        }
    }
}

/// Parses a single bracketed tree such as `(S (NP (PRP She)) (VP (VBZ runs)))`.
pub fn parse_sexpr(text: &str) -> Result<Tree, ParseError> {
    let mut parser = Parser {
        tokens: tokenize(text),
        pos: 0,
        end_offset: text.len() + 1,
    };
    let tree = match parser.next()? {
        Token::Open(o) => parser.node(o, true)?,
        tok => return Err(ParseError::Unexpected { offset: tok.offset() }),
    };
    match parser.peek() {
        None => Ok(tree),
        Some(tok) => Err(ParseError::Trailing { offset: tok.offset() }),
    }
}

fn check_atom(what: &'static str, text: &str) -> Result<(), TreeError> {
    if text.is_empty() || text.chars().any(|c| c == '(' || c == ')' || c.is_whitespace()) {
        return Err(TreeError::IllegalCharacter {
            what,
            text: text.to_string(),
        });
    }
    Ok(())
}

/// Prints a tree in canonical single-space bracketing.
pub fn render_sexpr(tree: &Tree) -> Result<String, TreeError> {
    let mut out = String::new();
    render_into(tree, &mut out)?;
    Ok(out)
}

fn render_into(tree: &Tree, out: &mut String) -> Result<(), TreeError> {
    match tree {
        Tree::Leaf { tag, word } => {
            check_atom("tag", tag)?;
            check_atom("word", word)?;
            out.push('(');
            out.push_str(tag);
            out.push(' ');
            out.push_str(word);
            out.push(')');
        }
        Tree::Node { label, children } => {
            check_atom("label", label)?;
            out.push('(');
            out.push_str(label);
            for child in children {
                out.push(' ');
                render_into(child, out)?;
            }
            out.push(')');
        }
    }
    Ok(())
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match render_sexpr(self) {
            Ok(s) => f.write_str(&s),
            Err(_) => Err(fmt::Error),
        }
    }
}

/// Reads a one-tree-per-line treebank. Blank lines are skipped.
pub fn read_treebank(text: &str, opts: &Normalization) -> Result<Vec<Tree>, TreeError> {
    let mut trees = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tree = parse_sexpr(line).map_err(|source| TreeError::Line {
            line: lineno + 1,
            source,
        })?;
        if let Some(t) = tree.normalize(opts) {
            trees.push(t);
        }
    }
    Ok(trees)
}

/// One labeled span per internal node, in pre-order. Preterminals are
/// excluded; unary chains must already be expanded to count every level.
pub fn spans_of(tree: &Tree) -> Vec<LabeledSpan> {
    let mut out = Vec::new();
    collect_spans(tree, 0, &mut out);
    out
}

fn collect_spans(tree: &Tree, start: usize, out: &mut Vec<LabeledSpan>) -> usize {
    match tree {
        Tree::Leaf { .. } => start + 1,
        Tree::Node { label, children } => {
            let slot = out.len();
            out.push(LabeledSpan::new(start, start, label.clone()));
            let mut end = start;
            for child in children {
                end = collect_spans(child, end, out);
            }
            out[slot].end = end;
            end
        }
    }
}

/// Gold constituents of a collapsed tree, indexed for oracle queries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldIndex {
    pub n: usize,
    /// `(i, j)` → collapsed label.
    pub spans: BTreeMap<(usize, usize), String>,
    /// `(i, j)` → right boundaries of the children of `(i, j)`, for gold
    /// spans longer than one word.
    pub children_boundaries: BTreeMap<(usize, usize), Vec<usize>>,
}

impl GoldIndex {
    pub fn label(&self, i: usize, j: usize) -> Option<&str> {
        self.spans.get(&(i, j)).map(String::as_str)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.spans.contains_key(&(i, j))
    }

    pub fn boundaries(&self, i: usize, j: usize) -> Option<&[usize]> {
        self.children_boundaries.get(&(i, j)).map(Vec::as_slice)
    }

    /// Number of expanded constituents the collapsed label at `(i, j)`
    /// stands for (0 when the span is not gold).
    pub fn weight(&self, i: usize, j: usize) -> usize {
        self.label(i, j).map_or(0, |l| l.split(CHAIN_SEPARATOR).count())
    }

    /// Total number of expanded gold constituents.
    pub fn total_weight(&self) -> usize {
        self.spans.keys().map(|&(i, j)| self.weight(i, j)).sum()
    }
}

/// Indexes a unary-collapsed tree. Any remaining same-span nesting is
/// joined into one collapsed label.
pub fn gold_index(tree: &Tree) -> GoldIndex {
    let mut index = GoldIndex {
        n: tree.len(),
        spans: BTreeMap::new(),
        children_boundaries: BTreeMap::new(),
    };
    index_node(tree, 0, &mut index);
    index
}

fn index_node(tree: &Tree, start: usize, index: &mut GoldIndex) -> usize {
    match tree {
        Tree::Leaf { .. } => start + 1,
        Tree::Node { label, children } => {
            let mut bounds = Vec::with_capacity(children.len());
            let mut end = start;
            for child in children {
                end = index_node(child, end, index);
                bounds.push(end);
            }
            // Children were indexed first; an inner node over the same span
            // belongs below this one in the chain.
            let joined = match index.spans.get(&(start, end)) {
                Some(inner) => format!("{label}{CHAIN_SEPARATOR}{inner}"),
                None => label.clone(),
            };
            index.spans.insert((start, end), joined);
            if end - start > 1 && bounds.len() > 1 {
                index.children_boundaries.insert((start, end), bounds);
            }
            end
        }
    }
}

/// A binarized tree whose nodes carry a label of type `L`, possibly the
/// empty label. Leaves span exactly one word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryTree<L = String> {
    pub start: usize,
    pub end: usize,
    pub label: L,
    pub children: Option<Box<(BinaryTree<L>, BinaryTree<L>)>>,
}

impl<L> BinaryTree<L> {
    pub fn leaf(start: usize, label: L) -> Self {
        BinaryTree {
            start,
            end: start + 1,
            label,
            children: None,
        }
    }

    pub fn join(label: L, left: BinaryTree<L>, right: BinaryTree<L>) -> Self {
        BinaryTree {
            start: left.start,
            end: right.end,
            label,
            children: Some(Box::new((left, right))),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    /// All nodes in pre-order.
    pub fn nodes(&self) -> Vec<&BinaryTree<L>> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            out.push(node);
            if let Some(children) = &node.children {
                stack.push(&children.1);
                stack.push(&children.0);
            }
        }
        out
    }

    pub fn map_labels<M, F: FnMut(&L) -> M>(&self, f: &mut F) -> BinaryTree<M> {
        BinaryTree {
            start: self.start,
            end: self.end,
            label: f(&self.label),
            children: self
                .children
                .as_ref()
                .map(|c| Box::new((c.0.map_labels(f), c.1.map_labels(f)))),
        }
    }

    /// Checks the binary-tree invariants for a sentence of length `n`.
    pub fn validate(&self, n: usize) -> Result<(), TreeError> {
        if self.start != 0 || self.end != n {
            return Err(TreeError::MalformedBinary(format!(
                "root spans ({}, {}) instead of (0, {n})",
                self.start, self.end
            )));
        }
        for node in self.nodes() {
            match &node.children {
                None if node.end != node.start + 1 => {
                    return Err(TreeError::MalformedBinary(format!(
                        "leaf ({}, {}) is longer than one word",
                        node.start, node.end
                    )))
                }
                Some(c) if c.0.start != node.start || c.1.end != node.end || c.0.end != c.1.start || c.0.end <= node.start || c.0.end >= node.end => {
                    return Err(TreeError::MalformedBinary(format!(
                        "children ({}, {}) ({}, {}) do not split ({}, {})",
                        c.0.start, c.0.end, c.1.start, c.1.end, node.start, node.end
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

impl<L: AsRef<str>> fmt::Display for BinaryTree<L> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = self.label.as_ref();
        let label = if is_empty_label(label) { EMPTY_LABEL_ASCII } else { label };
        match &self.children {
            None => write!(f, "({label} {})", self.start),
            Some(c) => write!(f, "({label} {} {})", c.0, c.1),
        }
    }
}

/// Right-branching implicit binarization of a tree. Unary chains are
/// collapsed first; extra nodes carry [`EMPTY_LABEL`].
pub fn binarize(tree: &Tree) -> BinaryTree<String> {
    let collapsed = collapse_unaries(tree);
    binarize_node(&collapsed, 0)
}

fn binarize_node(tree: &Tree, start: usize) -> BinaryTree<String> {
    match tree {
        Tree::Leaf { .. } => BinaryTree::leaf(start, EMPTY_LABEL.to_string()),
        Tree::Node { label, children } => {
            let mut parts = Vec::with_capacity(children.len());
            let mut pos = start;
            for child in children {
                let b = binarize_node(child, pos);
                pos = b.end;
                parts.push(b);
            }
            let mut acc = parts.pop().expect("internal node without children");
            while let Some(left) = parts.pop() {
                acc = BinaryTree::join(EMPTY_LABEL.to_string(), left, acc);
            }
            acc.label = if is_empty_label(&acc.label) {
                label.clone()
            } else {
                // Only reachable for uncollapsed unaries.
                format!("{label}{CHAIN_SEPARATOR}{}", acc.label)
            };
            acc
        }
    }
}

/// Removes empty-labeled nodes, expands collapsed chains and re-attaches
/// the words. An empty root becomes [`FALLBACK_ROOT`].
pub fn unbinarize<L: AsRef<str>>(bt: &BinaryTree<L>, leaves: &[(String, String)]) -> Result<Tree, TreeError> {
    let found = bt.end;
    if bt.start != 0 || found != leaves.len() {
        return Err(TreeError::LeafCountMismatch {
            expected: leaves.len(),
            found,
        });
    }
    bt.validate(leaves.len())?;
    let mut forest = unbinarize_forest(bt, leaves);
    if forest.len() == 1 && matches!(forest[0], Tree::Node { .. }) {
        Ok(forest.pop().unwrap())
    } else {
        Ok(Tree::node(FALLBACK_ROOT, forest))
    }
}

fn unbinarize_forest<L: AsRef<str>>(bt: &BinaryTree<L>, leaves: &[(String, String)]) -> Vec<Tree> {
    let children = match &bt.children {
        None => {
            let (word, tag) = &leaves[bt.start];
            vec![Tree::leaf(tag.clone(), word.clone())]
        }
        Some(c) => {
            let mut v = unbinarize_forest(&c.0, leaves);
            v.extend(unbinarize_forest(&c.1, leaves));
            v
        }
    };
    let label = bt.label.as_ref();
    if is_empty_label(label) {
        children
    } else {
        vec![wrap_chain(label, CHAIN_SEPARATOR, children)]
    }
}
