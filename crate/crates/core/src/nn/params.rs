use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Named trainable tensors. Names are dotted paths (`down.0.weight`).
#[derive(Debug, Clone)]
pub struct Params {
    vars: BTreeMap<String, Var>,
    dtype: DType,
}

impl Params {
    pub fn new(dtype: DType) -> Self {
        Self {
            vars: BTreeMap::new(),
            dtype,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> Device {
        Device::Cpu
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.vars.keys().cloned().collect()
    }

    pub fn num_elements(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Independent copy: updates to either store never reach the other.
    pub fn deep_clone(&self) -> Result<Self> {
        let vars = self
            .vars
            .iter()
            .map(|(k, v)| Ok((k.clone(), Var::from_tensor(&v.as_tensor().copy()?)?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            vars,
            dtype: self.dtype,
        })
    }

    /// Builds a store from loaded tensors, converting to `dtype`.
    pub fn from_tensors(tensors: BTreeMap<String, Tensor>, dtype: DType) -> Result<Self> {
        let vars = tensors
            .into_iter()
            .map(|(k, t)| Ok((k, Var::from_tensor(&t.to_dtype(dtype)?)?)))
            .collect::<Result<_>>()?;
        Ok(Self { vars, dtype })
    }

    pub fn tensors(&self) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect()
    }

    pub fn all_finite(&self) -> Result<bool> {
        for v in self.vars.values() {
            let vals = v.as_tensor().flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
            if vals.iter().any(|x| !x.is_finite()) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Flattened values of every parameter in name order.
    pub fn flat_values(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.num_elements());
        for v in self.vars.values() {
            out.extend(v.as_tensor().flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?);
        }
        Ok(out)
    }

    /// Overwrites a parameter with `value` (same shape), keeping its identity.
    pub fn assign(&self, name: &str, value: &Tensor) -> Result<()> {
        let var = self
            .vars
            .get(name)
            .ok_or_else(|| Error::Parameter(format!("no parameter named {name}")))?;
        var.set(&value.to_dtype(self.dtype)?)?;
        Ok(())
    }

    fn insert(&mut self, name: String, var: Var) {
        self.vars.insert(name, var);
    }
}

/// Parameter initialisation rule.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// Uniform on `[-bound, bound]`.
    Uniform(f64),
    Const(f64),
}

/// Fetches parameters from a store, creating them from a seeded RNG when
/// building a fresh model.
pub struct ParamBuilder<'a> {
    params: &'a mut Params,
    rng: Option<&'a mut ChaCha8Rng>,
    prefix: String,
}

impl<'a> ParamBuilder<'a> {
    /// Builder that creates missing parameters.
    pub fn fresh(params: &'a mut Params, rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            params,
            rng: Some(rng),
            prefix: String::new(),
        }
    }

    /// Builder that only reads existing parameters.
    pub fn existing(params: &'a mut Params) -> Self {
        Self {
            params,
            rng: None,
            prefix: String::new(),
        }
    }

    pub fn sub(&mut self, name: impl std::fmt::Display) -> ParamBuilder<'_> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        ParamBuilder {
            params: self.params,
            rng: self.rng.as_deref_mut(),
            prefix,
        }
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype
    }

    pub fn get(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let full = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        if let Some(v) = self.params.get(&full) {
            if v.dims() != shape {
                return Err(Error::Checkpoint(format!(
                    "parameter {full} has shape {:?}, architecture expects {shape:?}",
                    v.dims()
                )));
            }
            return Ok(v.as_tensor().clone());
        }
        let rng = self
            .rng
            .as_deref_mut()
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {full}")))?;
        let n: usize = shape.iter().product();
        let values: Vec<f64> = match init {
            Init::Uniform(b) if b > 0.0 => (0..n).map(|_| rng.random_range(-b..b)).collect(),
            Init::Uniform(_) => vec![0.0; n],
            Init::Const(c) => vec![c; n],
        };
        let t = Tensor::from_vec(values, shape, &Device::Cpu)?.to_dtype(self.params.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.params.insert(full, var);
        Ok(out)
    }
}
