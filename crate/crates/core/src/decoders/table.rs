use rand::Rng;

use super::SpanModel;
use crate::vocab::EMPTY_ID;
use crate::Error;

/// Span model backed by explicit score tables, without history.
#[derive(Debug, Clone, PartialEq)]
pub struct TableModel {
    n: usize,
    labels: usize,
    /// `label[i][j][ℓ]`; entry 0 is always 0.
    label: Vec<Vec<Vec<f64>>>,
    span: Vec<Vec<f64>>,
}

impl TableModel {
    /// All scores zero.
    pub fn zeros(n: usize, labels: usize) -> Self {
        TableModel {
            n,
            labels,
            label: vec![vec![vec![0.0; labels]; n + 1]; n + 1],
            span: vec![vec![0.0; n + 1]; n + 1],
        }
    }

    /// Independent uniform scores in `[-1, 1)` for every span and label.
    pub fn random<R: Rng>(n: usize, labels: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(n, labels);
        for i in 0..n {
            for j in i + 1..=n {
                for l in 1..labels {
                    m.label[i][j][l] = rng.random_range(-1.0..1.0);
                }
                m.span[i][j] = rng.random_range(-1.0..1.0);
            }
        }
        m
    }

    pub fn set_label(&mut self, i: usize, j: usize, label: usize, score: f64) {
        if label != EMPTY_ID {
            self.label[i][j][label] = score;
        }
    }

    pub fn set_span(&mut self, i: usize, j: usize, score: f64) {
        self.span[i][j] = score;
    }
}

impl SpanModel for TableModel {
    type State = ();

    fn len(&self) -> usize {
        self.n
    }

    fn num_labels(&self) -> usize {
        self.labels
    }

    fn initial_state(&mut self) -> Result<(), Error> {
        Ok(())
    }

    fn label_scores(&mut self, _: &(), i: usize, j: usize) -> Result<Vec<f64>, Error> {
        Ok(self.label[i][j].clone())
    }

    fn span_score(&mut self, _: &(), i: usize, j: usize) -> Result<f64, Error> {
        Ok(self.span[i][j])
    }

    fn record(&mut self, _: &(), _: usize, _: usize, _: usize) -> Result<(), Error> {
        Ok(())
    }
}
