use super::Tensor;
use crate::error::{Error, Result};

/// A named trainable tensor. The wrapped leaf is replaced, never mutated,
/// when the optimizer writes new values.
#[derive(Debug, Clone)]
pub struct Parameter {
    name: String,
    tensor: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            tensor: Tensor::leaf(data, shape)?,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn shape(&self) -> &[usize] {
        self.tensor.shape()
    }

    pub fn data(&self) -> &[f64] {
        self.tensor.data()
    }

    pub fn numel(&self) -> usize {
        self.tensor.numel()
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.tensor.grad()
    }

    pub fn zero_grad(&mut self) {
        self.tensor.zero_grad();
    }

    /// Swaps in new values as a fresh leaf; the old gradient is discarded.
    pub fn set_data(&mut self, data: Vec<f64>) -> Result<()> {
        if data.len() != self.numel() {
            return Err(Error::shape(format!(
                "{}: expected {} values, got {}",
                self.name,
                self.numel(),
                data.len()
            )));
        }
        self.tensor = Tensor::leaf(data, &self.tensor.shape().to_vec())?;
        Ok(())
    }
}
