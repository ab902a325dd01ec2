use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Named parameter tensors in a fixed order. Gradients, optimizer moments
/// and Polyak averages share the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.names.push(name.into());
        self.tensors.push(t);
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar entries.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, idx: usize) -> &Tensor {
        &self.tensors[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.tensors[idx]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Checks that `other` has the same names and shapes.
    pub fn check_layout(&self, other: &ParamSet) -> Result<()> {
        if self.names != other.names {
            return Err(Error::domain("parameter names differ"));
        }
        for ((n, a), b) in self.names.iter().zip(&self.tensors).zip(&other.tensors) {
            if a.shape() != b.shape() {
                return Err(Error::domain(format!("parameter {n}: shape {:?} vs {:?}", a.shape(), b.shape())));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Euclidean norm of `self - other` over all entries.
    pub fn distance(&self, other: &ParamSet) -> f64 {
        self.tensors
            .iter()
            .zip(&other.tensors)
            .flat_map(|(a, b)| a.data().iter().zip(b.data()))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}
