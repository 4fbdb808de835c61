//! Dense `f64` tensors with tape-free reverse-mode automatic differentiation.
//!
//! Every tensor produced by an operation keeps handles to its inputs and a
//! closure mapping the output gradient to input gradients. Calling
//! [`Tensor::backward`] on a scalar walks that graph in reverse topological
//! order. Graph nodes are only recorded when at least one input requires a
//! gradient, so inference through non-parameter inputs allocates nothing extra.

mod adam;
mod conv;
mod gemm;
mod ops;
mod param;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

pub use adam::{adam_update, Adam, AdamConfig, AdamState};
pub use conv::{batchnorm2d, conv2d, conv_transpose2d, maxpool2x2, BatchNormStats};
pub use ops::{
    add, bilinear_resize, concat_channels, dropout, flatten_spatial, layernorm_lastdim, linear,
    matmul, mean, mul, mul_scalar, permute, relu, reshape, sigmoid, softmax_lastdim, sum,
    transpose_last2, unflatten_spatial,
};
pub use param::Parameter;

pub(crate) use gemm::gemm;
pub(crate) use ops::sigmoid_scalar;

/// Maps the gradient of an output to gradients of each parent (`None` for
/// parents that do not require one).
pub(crate) type BackwardFn = Box<dyn Fn(&[f64]) -> Vec<Option<Vec<f64>>> + Send + Sync>;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

struct Node {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<f64>>>,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
}

/// Reference-counted handle to an immutable N-dimensional array.
#[derive(Clone)]
pub struct Tensor(Arc<Node>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish_non_exhaustive()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn check_shape(data_len: usize, shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > 4 {
        return Err(Error::shape(format!("rank must be 1..=4, got {shape:?}")));
    }
    if numel(shape) != data_len {
        return Err(Error::shape(format!(
            "shape {shape:?} needs {} elements, data has {data_len}",
            numel(shape)
        )));
    }
    Ok(())
}

impl Tensor {
    fn build(
        data: Vec<f64>,
        shape: Vec<usize>,
        requires_grad: bool,
        parents: Vec<Tensor>,
        backward: Option<BackwardFn>,
    ) -> Tensor {
        Tensor(Arc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad: Mutex::new(None),
            parents,
            backward,
        }))
    }

    /// Constant tensor that never receives a gradient.
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        check_shape(data.len(), shape)?;
        Ok(Self::build(data, shape.to_vec(), false, Vec::new(), None))
    }

    /// Leaf tensor that accumulates a gradient during [`Tensor::backward`].
    pub fn leaf(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        check_shape(data.len(), shape)?;
        Ok(Self::build(data, shape.to_vec(), true, Vec::new(), None))
    }

    pub fn zeros(shape: &[usize]) -> Result<Tensor> {
        Self::new(vec![0.0; numel(shape)], shape)
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Tensor> {
        Self::new(vec![value; numel(shape)], shape)
    }

    pub fn scalar(value: f64) -> Tensor {
        Self::build(vec![value], vec![1], false, Vec::new(), None)
    }

    /// Result of a differentiable operation. `backward` is only kept when some
    /// parent requires a gradient.
    pub(crate) fn from_op(
        data: Vec<f64>,
        shape: Vec<usize>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Tensor {
        debug_assert_eq!(numel(&shape), data.len());
        if parents.iter().any(Tensor::requires_grad) {
            Self::build(data, shape, true, parents, Some(backward))
        } else {
            Self::build(data, shape, false, Vec::new(), None)
        }
    }

    /// Public hook for fused operations defined outside this module (losses).
    /// `backward` receives the output gradient and returns one gradient per
    /// parent, in order.
    pub fn custom_op<F>(
        data: Vec<f64>,
        shape: &[usize],
        parents: Vec<Tensor>,
        backward: F,
    ) -> Result<Tensor>
    where
        F: Fn(&[f64]) -> Vec<Option<Vec<f64>>> + Send + Sync + 'static,
    {
        check_shape(data.len(), shape)?;
        Ok(Self::from_op(data, shape.to_vec(), parents, Box::new(backward)))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        match self.0.data.as_slice() {
            [v] => Ok(*v),
            d => Err(Error::shape(format!(
                "item() needs one element, tensor has {}",
                d.len()
            ))),
        }
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.lock().expect("grad lock").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock") = None;
    }

    /// Copy of the data as a constant.
    pub fn detach(&self) -> Tensor {
        Self::build(self.0.data.clone(), self.0.shape.clone(), false, Vec::new(), None)
    }

    pub fn into_data(self) -> Vec<f64> {
        match Arc::try_unwrap(self.0) {
            Ok(node) => node.data,
            Err(shared) => shared.data.clone(),
        }
    }

    /// Back-propagates from a one-element tensor. Gradients accumulate into
    /// every reachable tensor that requires one; repeated calls add up.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        // Iterative post-order DFS gives a topological order.
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            for p in &t.0.parents {
                if p.requires_grad() && !visited.contains(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }

        let mut pending: HashMap<u64, Vec<f64>> = HashMap::new();
        pending.insert(self.id(), vec![1.0]);
        for t in order.iter().rev() {
            let Some(g) = pending.remove(&t.id()) else {
                continue;
            };
            if let Some(f) = &t.0.backward {
                let parent_grads = f(&g);
                debug_assert_eq!(parent_grads.len(), t.0.parents.len());
                for (p, pg) in t.0.parents.iter().zip(parent_grads) {
                    let Some(pg) = pg else { continue };
                    if !p.requires_grad() {
                        continue;
                    }
                    debug_assert_eq!(pg.len(), p.numel());
                    match pending.get_mut(&p.id()) {
                        Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                        None => {
                            pending.insert(p.id(), pg);
                        }
                    }
                }
            }
            let mut slot = t.0.grad.lock().expect("grad lock");
            match slot.as_mut() {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => *slot = Some(g),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::new(vec![1.0; 5], &[2, 3]).is_err());
        assert!(Tensor::new(vec![1.0; 6], &[2, 3]).is_ok());
        assert!(Tensor::new(vec![1.0; 32], &[2, 2, 2, 2, 2]).is_err());
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let x = Tensor::leaf((0..9).map(|i| i as f64 * 0.3 - 1.0).collect(), &[3, 3]).unwrap();
        let y = sum(&x);
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 9]);
    }

    #[test]
    fn backward_of_square_sum_is_twice_input() {
        let vals: Vec<f64> = (0..9).map(|i| (i as f64).sin()).collect();
        let x = Tensor::leaf(vals.clone(), &[3, 3]).unwrap();
        let y = sum(&mul(&x, &x).unwrap());
        y.backward().unwrap();
        let g = x.grad().unwrap();
        for (gi, xi) in g.iter().zip(&vals) {
            assert!((gi - 2.0 * xi).abs() < 1e-15);
        }
    }

    #[test]
    fn repeated_backward_accumulates() {
        let x = Tensor::leaf(vec![1.0, 2.0], &[2]).unwrap();
        let y = sum(&mul_scalar(&x, 3.0));
        y.backward().unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![6.0, 6.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let x = Tensor::leaf(vec![1.0, 2.0], &[2]).unwrap();
        let y = mul_scalar(&x, 2.0);
        assert!(matches!(y.backward(), Err(Error::Shape(_))));
    }

    #[test]
    fn intermediates_receive_gradients() {
        let x = Tensor::leaf(vec![1.0, -2.0, 3.0], &[3]).unwrap();
        let h = mul_scalar(&x, 2.0);
        let y = sum(&h);
        y.backward().unwrap();
        assert_eq!(h.grad().unwrap(), vec![1.0; 3]);
        assert_eq!(x.grad().unwrap(), vec![2.0; 3]);
    }

    #[test]
    fn constants_record_no_graph() {
        let x = Tensor::new(vec![1.0, 2.0], &[2]).unwrap();
        let y = mul_scalar(&x, 2.0);
        assert!(!y.requires_grad());
        assert!(y.0.parents.is_empty());
    }

    #[test]
    fn shared_subexpression_gradients_add() {
        // y = sum(x * x + x) -> dy/dx = 2x + 1
        let x = Tensor::leaf(vec![0.5, -1.5], &[2]).unwrap();
        let y = sum(&add(&mul(&x, &x).unwrap(), &x).unwrap());
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, -2.0]);
    }
}
