use std::collections::BTreeMap;

use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named learnable tensors. Paths are unique; iteration order is insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: impl Into<String>, tensor: Tensor) -> Result<ParamId> {
        let path = path.into();
        if self.index.contains_key(&path) {
            return Err(Error::Param(format!("duplicate parameter path {path}")));
        }
        self.index.insert(path.clone(), self.names.len());
        self.names.push(path);
        self.tensors.push(tensor.with_grad());
        Ok(ParamId(self.names.len() - 1))
    }

    pub fn id(&self, path: &str) -> Option<ParamId> {
        self.index.get(path).map(|&i| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_path(&self, path: &str) -> Option<&Tensor> {
        self.id(path).map(|id| self.get(id))
    }

    pub fn path(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    /// Replaces values from `other`, which must hold the same paths and shapes.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Incompatible(format!(
                "expected {} parameters, found {}",
                self.len(),
                other.len()
            )));
        }
        for (i, name) in self.names.iter().enumerate() {
            let src = other
                .by_path(name)
                .ok_or_else(|| Error::Incompatible(format!("missing parameter {name}")))?;
            if src.shape() != self.tensors[i].shape() {
                return Err(Error::Incompatible(format!(
                    "{name}: expected shape {:?}, found {:?}",
                    self.tensors[i].shape(),
                    src.shape()
                )));
            }
            self.tensors[i].data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}

/// Lazily records parameters on a tape, at most once per forward pass.
#[derive(Debug, Default)]
pub struct Binder {
    vars: Vec<Option<Var>>,
}

impl Binder {
    pub fn new(store: &ParamStore) -> Self {
        Self {
            vars: vec![None; store.len()],
        }
    }

    pub fn bind(&mut self, tape: &mut Tape, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.vars[id.0] {
            return v;
        }
        let v = tape.leaf(store.get(id));
        self.vars[id.0] = Some(v);
        v
    }

    pub fn var(&self, id: ParamId) -> Option<Var> {
        self.vars[id.0]
    }

    /// Pulls per-parameter gradients; parameters the pass never touched get zeros.
    pub fn collect(&self, store: &ParamStore, grads: &mut Gradients) -> GradSet {
        let data = self
            .vars
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.and_then(|v| grads.take(v))
                    .unwrap_or_else(|| vec![0.0; store.tensors[i].len()])
            })
            .collect();
        GradSet { data }
    }
}

/// One gradient buffer per parameter, aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradSet {
    data: Vec<Vec<f64>>,
}

impl GradSet {
    pub fn zeros(store: &ParamStore) -> Self {
        Self {
            data: store.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.data[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.data[id.0]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn add_assign(&mut self, other: &GradSet) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().flatten().for_each(|x| *x *= s);
    }

    pub fn global_norm(&self) -> f64 {
        self.data.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`; returns the pre-clip norm.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.global_norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
        n
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|x| x.is_finite())
    }

    pub(crate) fn buffers(&self) -> &[Vec<f64>] {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_paths_rejected() {
        let mut s = ParamStore::new();
        s.add("a.w", Tensor::zeros(vec![2])).unwrap();
        assert!(s.add("a.w", Tensor::zeros(vec![2])).is_err());
        assert_eq!(s.id("a.w").unwrap().index(), 0);
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::zeros(vec![2])).unwrap();
        let mut g = GradSet::zeros(&s);
        g.get_mut(id).copy_from_slice(&[3.0, 4.0]);
        assert_eq!(g.clip_global_norm(1.0), 5.0);
        assert!((g.global_norm() - 1.0).abs() < 1e-15);
    }
}
