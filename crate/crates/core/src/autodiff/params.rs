use std::collections::HashMap;

use rand::Rng;

use super::{AutodiffError, Gradients, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
struct Slot {
    name: String,
    value: Tensor,
    grad: Vec<f64>,
    // AdaDelta running averages of g² and Δ².
    avg_sq_grad: Vec<f64>,
    avg_sq_delta: Vec<f64>,
}

/// Named parameter tensors with gradient slots and AdaDelta state.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    slots: Vec<Slot>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId, AutodiffError> {
        if self.by_name.contains_key(name) {
            return Err(AutodiffError::DuplicateParam(name.to_string()));
        }
        let id = ParamId(self.slots.len());
        let n = value.len();
        self.slots.push(Slot {
            name: name.to_string(),
            value,
            grad: vec![0.0; n],
            avg_sq_grad: vec![0.0; n],
            avg_sq_delta: vec![0.0; n],
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Uniform Glorot initialization.
    pub fn add_glorot<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, rng: &mut R) -> Result<ParamId, AutodiffError> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
        self.add(name, Tensor::matrix(rows, cols, data)?)
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId, AutodiffError> {
        self.add(name, Tensor::zeros(shape))
    }

    /// Embedding table, uniform in `±sqrt(3 / cols)` so each row has unit
    /// expected squared norm.
    pub fn add_embedding<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, rng: &mut R) -> Result<ParamId, AutodiffError> {
        let limit = (3.0 / cols.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
        self.add(name, Tensor::matrix(rows, cols, data)?)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.slots.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.slots[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.slots[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.slots[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.slots[id.0].grad
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.slots.iter().map(|s| s.value.len()).sum()
    }

    pub fn accumulate(&mut self, grads: &Gradients) {
        for (id, g) in grads.iter() {
            for (acc, v) in self.slots[id.0].grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for slot in &mut self.slots {
            slot.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Applies one AdaDelta update to every parameter and clears the
    /// gradients.
    pub fn adadelta_step(&mut self, rho: f64, eps: f64) -> Result<(), AutodiffError> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(AutodiffError::InvalidHyperparameter(format!("rho must lie in (0, 1), got {rho}")));
        }
        if let Some(slot) = self.slots.iter().find(|s| s.grad.iter().any(|g| !g.is_finite())) {
            return Err(AutodiffError::NonFiniteGradient(slot.name.clone()));
        }
        for slot in &mut self.slots {
            let values = slot.value.data_mut();
            for k in 0..values.len() {
                let g = slot.grad[k];
                let eg = rho * slot.avg_sq_grad[k] + (1.0 - rho) * g * g;
                let delta = -((slot.avg_sq_delta[k] + eps).sqrt() / (eg + eps).sqrt()) * g;
                slot.avg_sq_grad[k] = eg;
                slot.avg_sq_delta[k] = rho * slot.avg_sq_delta[k] + (1.0 - rho) * delta * delta;
                values[k] += delta;
                slot.grad[k] = 0.0;
            }
        }
        Ok(())
    }

    /// Copies parameter values from `other` (same names and shapes).
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<(), AutodiffError> {
        for slot in &mut self.slots {
            let id = other.id(&slot.name).ok_or_else(|| AutodiffError::UnknownParam(slot.name.clone()))?;
            let src = other.value(id);
            if src.shape() != slot.value.shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "copy",
                    left: slot.value.shape().to_vec(),
                    right: src.shape().to_vec(),
                });
            }
            slot.value = src.clone();
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn avg_sq_grad(&self, id: ParamId) -> &[f64] {
        &self.slots[id.0].avg_sq_grad
    }

    #[cfg(test)]
    pub(crate) fn avg_sq_delta(&self, id: ParamId) -> &[f64] {
        &self.slots[id.0].avg_sq_delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store_with(values: Vec<f64>) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(values)).unwrap();
        (store, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut store, id) = store_with(vec![1.0, -2.0, 3.0]);
        store.adadelta_step(0.99, 1e-7).unwrap();
        assert_eq!(store.value(id).data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_matches_closed_form() {
        let (mut store, id) = store_with(vec![0.5, 0.5]);
        let mut g = Gradients::default();
        g.add_dense(id, &[1.0, 1.0]);
        store.accumulate(&g);
        store.adadelta_step(0.99, 1e-7).unwrap();
        let expected = -(1e-7f64).sqrt() / (0.01f64 + 1e-7).sqrt();
        for v in store.value(id).data() {
            assert!((v - (0.5 + expected)).abs() < 1e-15);
        }
        assert!((store.avg_sq_grad(id)[0] - 0.01).abs() < 1e-15);
        assert!((store.avg_sq_delta(id)[0] - 0.01 * expected * expected).abs() < 1e-18);
        assert!(store.grad(id).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn steps_decrease_convex_quadratic() {
        // f(w) = Σ (w - 3)², grad = 2 (w - 3)
        let (mut store, id) = store_with(vec![0.0, 10.0]);
        let f = |w: &[f64]| w.iter().map(|x| (x - 3.0) * (x - 3.0)).sum::<f64>();
        let mut prev = f(store.value(id).data());
        for _ in 0..2 {
            let grad: Vec<f64> = store.value(id).data().iter().map(|x| 2.0 * (x - 3.0)).collect();
            let mut g = Gradients::default();
            g.add_dense(id, &grad);
            store.accumulate(&g);
            store.adadelta_step(0.99, 1e-7).unwrap();
            let now = f(store.value(id).data());
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn rejects_bad_rho_and_non_finite_gradients() {
        let (mut store, id) = store_with(vec![0.0]);
        assert!(store.adadelta_step(1.0, 1e-7).is_err());
        assert!(store.adadelta_step(0.0, 1e-7).is_err());
        let mut g = Gradients::default();
        g.add_dense(id, &[f64::NAN]);
        store.accumulate(&g);
        match store.adadelta_step(0.9, 1e-7) {
            Err(AutodiffError::NonFiniteGradient(name)) => assert_eq!(name, "w"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let (mut store, _) = store_with(vec![0.0]);
        assert!(matches!(store.add("w", Tensor::scalar(1.0)), Err(AutodiffError::DuplicateParam(_))));
    }

    #[test]
    fn glorot_within_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let id = store.add_glorot("m", 4, 6, &mut rng).unwrap();
        let limit = (6.0f64 / 10.0).sqrt();
        assert!(store.value(id).data().iter().all(|v| v.abs() <= limit));
        assert_eq!(store.value(id).shape(), &[4, 6]);
    }
}
