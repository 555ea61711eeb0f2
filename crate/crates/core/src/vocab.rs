//! Word, character, tag and label vocabularies built from a training corpus.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::treebank::{collapse_unaries, gold_index, Tree, EMPTY_LABEL};

pub const UNK: &str = "<UNK>";
pub const START: &str = "<START>";
pub const STOP: &str = "<STOP>";

pub const UNK_ID: usize = 0;
pub const START_ID: usize = 1;
pub const STOP_ID: usize = 2;
/// Label id of the empty label.
pub const EMPTY_ID: usize = 0;

/// Dense string ↔ id mapping in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Indexer {
    items: Vec<String>,
    ids: HashMap<String, usize>,
}

impl From<Vec<String>> for Indexer {
    fn from(items: Vec<String>) -> Self {
        let ids = items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Indexer { items, ids }
    }
}

impl From<Indexer> for Vec<String> {
    fn from(ix: Indexer) -> Self {
        ix.items
    }
}

impl Indexer {
    pub fn with_specials(specials: &[&str]) -> Self {
        Indexer::from(specials.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    }

    pub fn insert(&mut self, item: &str) -> usize {
        if let Some(&id) = self.ids.get(item) {
            return id;
        }
        let id = self.items.len();
        self.items.push(item.to_string());
        self.ids.insert(item.to_string(), id);
        id
    }

    pub fn get(&self, item: &str) -> Option<usize> {
        self.ids.get(item).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.items[id]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub words: Indexer,
    /// Training-corpus frequency per word id (0 for the specials).
    pub word_counts: Vec<usize>,
    pub tags: Indexer,
    pub chars: Indexer,
    /// Collapsed labels; id 0 is the empty label.
    pub labels: Indexer,
}

impl Vocab {
    pub fn build(trees: &[Tree]) -> Vocab {
        let specials = [UNK, START, STOP];
        let mut vocab = Vocab {
            words: Indexer::with_specials(&specials),
            word_counts: vec![0; 3],
            tags: Indexer::with_specials(&specials),
            chars: Indexer::with_specials(&specials),
            labels: Indexer::with_specials(&[EMPTY_LABEL]),
        };
        for tree in trees {
            for (word, tag) in tree.leaves() {
                let id = vocab.words.insert(&word);
                if id == vocab.word_counts.len() {
                    vocab.word_counts.push(0);
                }
                vocab.word_counts[id] += 1;
                vocab.tags.insert(&tag);
                for c in word.chars() {
                    vocab.chars.insert(c.encode_utf8(&mut [0; 4]));
                }
            }
            for label in gold_index(&collapse_unaries(tree)).spans.values() {
                vocab.labels.insert(label);
            }
        }
        vocab
    }

    pub fn word_id(&self, word: &str) -> usize {
        self.words.get(word).unwrap_or(UNK_ID)
    }

    pub fn tag_id(&self, tag: &str) -> usize {
        self.tags.get(tag).unwrap_or(UNK_ID)
    }

    pub fn char_ids(&self, word: &str) -> Vec<usize> {
        match word {
            START => vec![START_ID],
            STOP => vec![STOP_ID],
            _ => word
                .chars()
                .map(|c| self.chars.get(c.encode_utf8(&mut [0; 4])).unwrap_or(UNK_ID))
                .collect(),
        }
    }

    /// Training frequency of a word (0 when unseen).
    pub fn count(&self, word: &str) -> usize {
        self.words.get(word).map_or(0, |id| self.word_counts[id])
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.labels.get(label)
    }

    pub fn label_name(&self, id: usize) -> &str {
        self.labels.name(id)
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::parse_sexpr;

    #[test]
    fn builds_dense_ids() {
        let trees = vec![
            parse_sexpr("(S (NP (PRP She)) (VP (VBZ runs)))").unwrap(),
            parse_sexpr("(S (NP (PRP She)) (VP (VBZ sleeps) (ADVP (RB well))))").unwrap(),
        ];
        let v = Vocab::build(&trees);
        assert_eq!(v.words.items()[..3], [UNK, START, STOP]);
        assert_eq!(v.count("She"), 2);
        assert_eq!(v.count("runs"), 1);
        assert_eq!(v.count("missing"), 0);
        assert_eq!(v.word_id("missing"), UNK_ID);
        assert_eq!(v.label_name(EMPTY_ID), EMPTY_LABEL);
        assert!(v.label_id("S").is_some());
        assert!(v.label_id("VP").is_some());
        assert_eq!(v.char_ids(START), vec![START_ID]);
        assert_eq!(v.char_ids("zz"), vec![UNK_ID, UNK_ID]);
        assert!(v.word_counts[3..].iter().all(|&c| c >= 1));
    }

    #[test]
    fn serde_round_trip() {
        let trees = vec![parse_sexpr("(S (A (T a)) (B (T b) (T c)))").unwrap()];
        let v = Vocab::build(&trees);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }
}
