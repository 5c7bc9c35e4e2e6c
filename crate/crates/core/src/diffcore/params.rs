use std::collections::HashMap;

use rand::Rng;

use super::{mismatch, DenseArray, DiffError, Gradients, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`, shape `[fan_in, fan_out]`.
pub fn xavier_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> DenseArray {
    let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    DenseArray::new(vec![fan_in, fan_out], data).expect("shape")
}

/// Named trainable arrays with one gradient slot each.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<DenseArray>,
    grads: Vec<DenseArray>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: DenseArray) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(DiffError::DuplicateName(name));
        }
        let id = ParamId(self.values.len());
        let zero = value.map(|_| 0.0);
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        self.grads.push(zero);
        Ok(id)
    }

    pub fn add_xavier<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        self.add(name, xavier_uniform(fan_in, fan_out, rng))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> Result<ParamId> {
        self.add(name, DenseArray::zeros(rows, cols))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| DiffError::UnknownParam(name.to_string()))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &DenseArray {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut DenseArray {
        &mut self.values[id.0]
    }

    /// Replaces a value, keeping its shape.
    pub fn set_value(&mut self, id: ParamId, value: DenseArray) -> Result<()> {
        if !value.same_shape(&self.values[id.0]) {
            return Err(mismatch("set_value", self.values[id.0].shape(), value.shape()));
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn grad(&self, id: ParamId) -> &DenseArray {
        &self.grads[id.0]
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }

    /// Adds every parameter gradient recorded in `grads` to the slots.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (id, g) in grads.for_params() {
            self.grads[id.0].add_assign(g);
        }
    }

    pub fn scale_grads(&mut self, k: f64) {
        for g in &mut self.grads {
            for x in g.data_mut() {
                *x *= k;
            }
        }
    }

    pub fn total_count(&self) -> usize {
        self.values.iter().map(DenseArray::len).sum()
    }

    /// `(name, value)` pairs in registration order.
    pub fn named_values(&self) -> impl Iterator<Item = (&str, &DenseArray)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Overwrites values from `(name, array)` pairs; every stored name must be present.
    pub fn load_values<'a>(&mut self, arrays: impl IntoIterator<Item = (&'a str, &'a DenseArray)>) -> Result<()> {
        let mut seen = vec![false; self.values.len()];
        for (name, arr) in arrays {
            let Some(&id) = self.index.get(name) else {
                continue;
            };
            self.set_value(id, arr.clone())?;
            seen[id.0] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(DiffError::UnknownParam(self.names[i].clone()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn xavier_bounds_and_determinism() {
        let a = xavier_uniform(30, 20, &mut stream_rng(1, 0));
        let b = xavier_uniform(30, 20, &mut stream_rng(1, 0));
        assert_eq!(a, b);
        let bound = (6.0f64 / 50.0).sqrt();
        assert!(a.data().iter().all(|x| x.abs() <= bound));
        assert!(a.data().iter().any(|x| x.abs() > bound * 0.9));
    }

    #[test]
    fn names_unique() {
        let mut s = ParamStore::new();
        s.add_zeros("w", 2, 2).unwrap();
        assert!(matches!(s.add_zeros("w", 1, 1), Err(DiffError::DuplicateName(_))));
        assert!(matches!(s.id("x"), Err(DiffError::UnknownParam(_))));
    }
}
