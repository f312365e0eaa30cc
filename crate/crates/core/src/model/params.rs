use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Element, Graph, Tensor, Var};

/// Named parameters in a fixed insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Element> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: BTreeMap::new(),
        }
    }
}

/// Parameter handles for one graph, in store order.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
    index: BTreeMap<String, usize>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::invalid(format!("unknown parameter '{name}'")))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl<T: Element> ParamStore<T> {
    pub(super) fn seeded(seed: u64) -> Initializer<T> {
        Initializer {
            store: ParamStore::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::invalid(format!("duplicate parameter '{name}'")));
        }
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.tensors.push(value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.input(t.clone())
                }
            })
            .collect();
        Bound {
            vars,
            index: self.index.clone(),
        }
    }

    /// Gradients of every bound parameter; zeros where none reached it.
    pub fn grads(&self, g: &Graph<T>, bound: &Bound) -> Vec<Tensor<T>> {
        self.tensors
            .iter()
            .zip(&bound.vars)
            .map(|(t, v)| g.grad(*v).unwrap_or_else(|| Tensor::zeros(t.dims())))
            .collect()
    }
}

/// Seeded builder used while constructing a model.
pub(super) struct Initializer<T> {
    store: ParamStore<T>,
    rng: ChaCha8Rng,
}

impl<T: Element> Initializer<T> {
    fn uniform(&mut self, dims: &[usize], bound: f64) -> Tensor<T> {
        let n = dims.iter().product();
        let data = (0..n)
            .map(|_| T::from_f64(self.rng.random_range(-bound..bound)))
            .collect();
        Tensor::new(dims.to_vec(), data).expect("positive dims")
    }

    fn add(&mut self, name: String, t: Tensor<T>) {
        self.store
            .insert(&name, t)
            .expect("parameter names are unique by construction");
    }

    /// Kaiming-uniform weight `[fan_in, fan_out]` and `U(±1/√fan_in)` bias.
    pub fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) {
        let w = self.uniform(&[fan_in, fan_out], (6.0 / fan_in as f64).sqrt());
        let b = self.uniform(&[fan_out], 1.0 / (fan_in as f64).sqrt());
        self.add(format!("{name}.w"), w);
        self.add(format!("{name}.b"), b);
    }

    pub fn conv(&mut self, name: &str, c_in: usize, c_out: usize, k: usize) {
        let fan_in = c_in * k * k;
        let w = self.uniform(&[c_out, c_in, k, k], (6.0 / fan_in as f64).sqrt());
        let b = self.uniform(&[c_out], 1.0 / (fan_in as f64).sqrt());
        self.add(format!("{name}.w"), w);
        self.add(format!("{name}.b"), b);
    }

    pub fn normal(&mut self, name: &str, dims: &[usize], std: f64) {
        let dist = Normal::new(0.0, std).expect("finite std");
        let n = dims.iter().product();
        let data = (0..n).map(|_| T::from_f64(dist.sample(&mut self.rng))).collect();
        self.add(
            name.to_string(),
            Tensor::new(dims.to_vec(), data).expect("positive dims"),
        );
    }

    pub fn layer_norm(&mut self, name: &str, d: usize) {
        self.add(format!("{name}.g"), Tensor::full(&[d], T::one()));
        self.add(format!("{name}.b"), Tensor::zeros(&[d]));
    }

    pub fn finish(self) -> ParamStore<T> {
        self.store
    }
}
