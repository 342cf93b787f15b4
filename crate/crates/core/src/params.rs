//! Named parameter tensors.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{Real, Tape, Tensor, Var};
use crate::Error;

/// Position of a parameter in a [`ModelParams`] collection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Normal with standard deviation `gain / sqrt(fan_in)`.
    Scaled { fan_in: usize, gain: f64 },
    Normal(f64),
    Zeros,
}

#[derive(Clone, Debug)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Collects parameter declarations while a model layout is assembled.
#[derive(Clone, Debug, Default)]
pub struct ParamRegistry {
    specs: Vec<ParamSpec>,
}

impl ParamRegistry {
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> ParamId {
        self.specs.push(ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        });
        ParamId(self.specs.len() - 1)
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn initialize(&self, seed: u64) -> Result<ModelParams, Error> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::default();
        for spec in &self.specs {
            let n: usize = spec.shape.iter().product();
            let std = match spec.init {
                Init::Scaled { fan_in, gain } => gain / (fan_in.max(1) as f64).sqrt(),
                Init::Normal(s) => s,
                Init::Zeros => 0.0,
            };
            let data = if std > 0.0 {
                let dist = Normal::new(0.0, std).expect("positive std");
                (0..n).map(|_| dist.sample(&mut rng)).collect()
            } else {
                vec![0.0; n]
            };
            params.insert(spec.name.clone(), Tensor::new(spec.shape.clone(), data)?)?;
        }
        Ok(params)
    }
}

/// Ordered, uniquely named collection of `f64` tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParams {
    entries: Vec<(String, Tensor<f64>)>,
    index: HashMap<String, usize>,
}

impl ModelParams {
    pub fn insert(&mut self, name: String, t: Tensor<f64>) -> Result<ParamId, Error> {
        if self.index.contains_key(&name) {
            return Err(Error::Params(format!("duplicate parameter name {name}")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, t));
        Ok(ParamId(self.entries.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f64>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn by_id(&self, id: ParamId) -> &Tensor<f64> {
        &self.entries[id.0].1
    }

    pub fn by_id_mut(&mut self, id: ParamId) -> &mut Tensor<f64> {
        &mut self.entries[id.0].1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f64>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<f64>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.all_finite())
    }

    /// Checks names, order and shapes against a registry.
    pub fn check_layout(&self, registry: &ParamRegistry) -> Result<(), Error> {
        if self.entries.len() != registry.specs.len() {
            return Err(Error::Params(format!(
                "expected {} parameters, found {}",
                registry.specs.len(),
                self.entries.len()
            )));
        }
        for ((name, t), spec) in self.entries.iter().zip(&registry.specs) {
            if *name != spec.name || t.shape() != spec.shape.as_slice() {
                return Err(Error::Params(format!(
                    "parameter {name} {:?} does not match {} {:?}",
                    t.shape(),
                    spec.name,
                    spec.shape
                )));
            }
        }
        Ok(())
    }

    /// Records every parameter on `tape` as a leaf.
    pub fn bind<T: Real>(&self, tape: &mut Tape<T>, requires_grad: bool) -> Vec<Var> {
        self.entries
            .iter()
            .map(|(_, t)| tape.leaf(t.lift(), requires_grad))
            .collect()
    }
}
