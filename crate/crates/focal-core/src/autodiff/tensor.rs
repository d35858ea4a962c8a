use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

struct Cell {
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

/// A dense f64 tensor: a shape, a flat row-major value buffer, and an
/// optional gradient buffer filled in by [`super::Tape::backward`].
///
/// `Tensor` is a cheap-to-clone shared handle — parameter structs, tapes
/// and the optimizer all point at the same storage. Shape and the
/// `requires_grad` flag are fixed at construction; only values and
/// gradients mutate.
#[derive(Clone)]
pub struct Tensor {
    shape: Arc<Vec<usize>>,
    requires_grad: bool,
    cell: Arc<Mutex<Cell>>,
}

impl Tensor {
    /// Build a tensor from a flat row-major buffer. Errors when the buffer
    /// length does not match the shape product.
    pub fn new(shape: &[usize], data: Vec<f64>, requires_grad: bool) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "tensor_new",
                format!("shape {:?} wants {} values, got {}", shape, numel, data.len()),
            ));
        }
        Ok(Tensor {
            shape: Arc::new(shape.to_vec()),
            requires_grad,
            cell: Arc::new(Mutex::new(Cell { data, grad: None })),
        })
    }

    pub fn zeros(shape: &[usize], requires_grad: bool) -> Tensor {
        let numel: usize = shape.iter().product();
        Tensor::new(shape, vec![0.0; numel], requires_grad).expect("consistent shape")
    }

    pub fn scalar(value: f64, requires_grad: bool) -> Tensor {
        Tensor::new(&[1, 1], vec![value], requires_grad).expect("consistent shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    /// Interpret the shape as a matrix: `[r, c]` stays, `[n]` becomes
    /// `1 x n`, `[]` becomes `1 x 1`. Higher ranks are rejected where a
    /// matrix is required (at tape entry).
    pub fn matrix_dims(&self) -> Option<(usize, usize)> {
        match self.shape.len() {
            0 => Some((1, 1)),
            1 => Some((1, self.shape[0])),
            2 => Some((self.shape[0], self.shape[1])),
            _ => None,
        }
    }

    /// Copy of the current values.
    pub fn data(&self) -> Vec<f64> {
        self.cell.lock().expect("tensor lock").data.clone()
    }

    /// Run `f` over the current values without copying.
    pub fn with_data<R>(&self, f: impl FnOnce(&[f64]) -> R) -> R {
        f(&self.cell.lock().expect("tensor lock").data)
    }

    /// Run `f` over mutable values (optimizer updates, finite differences).
    pub fn with_data_mut<R>(&self, f: impl FnOnce(&mut [f64]) -> R) -> R {
        f(&mut self.cell.lock().expect("tensor lock").data)
    }

    /// Copy of the gradient buffer, if one has been accumulated.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.cell.lock().expect("tensor lock").grad.clone()
    }

    /// Add `delta` into the gradient buffer, allocating zeros on first use.
    pub fn accumulate_grad(&self, delta: &[f64]) {
        let mut cell = self.cell.lock().expect("tensor lock");
        let n = cell.data.len();
        assert_eq!(delta.len(), n, "gradient length must match tensor length");
        let grad = cell.grad.get_or_insert_with(|| vec![0.0; n]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    /// Ensure a (possibly zero) gradient buffer exists.
    pub fn ensure_grad(&self) {
        let mut cell = self.cell.lock().expect("tensor lock");
        let n = cell.data.len();
        cell.grad.get_or_insert_with(|| vec![0.0; n]);
    }

    /// Drop the gradient buffer.
    pub fn zero_grad(&self) {
        self.cell.lock().expect("tensor lock").grad = None;
    }

    /// True when both handles share storage.
    pub fn same_storage(&self, other: &Tensor) -> bool {
        Arc::ptr_eq(&self.cell, &other.cell)
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("requires_grad", &self.requires_grad)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_length_mismatch() {
        assert!(Tensor::new(&[2, 2], vec![1.0; 3], false).is_err());
    }

    #[test]
    fn grad_accumulates_across_calls() {
        let t = Tensor::new(&[3], vec![1.0, 2.0, 3.0], true).unwrap();
        t.accumulate_grad(&[1.0, 1.0, 1.0]);
        t.accumulate_grad(&[0.5, 0.5, 0.5]);
        assert_eq!(t.grad().unwrap(), vec![1.5, 1.5, 1.5]);
        t.zero_grad();
        assert!(t.grad().is_none());
    }

    #[test]
    fn clones_share_storage() {
        let t = Tensor::zeros(&[2], true);
        let u = t.clone();
        u.with_data_mut(|d| d[0] = 5.0);
        assert_eq!(t.data()[0], 5.0);
        assert!(t.same_storage(&u));
    }
}
