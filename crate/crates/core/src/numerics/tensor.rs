//! Dense 64-bit tensors with an implicit reverse-mode computation graph.
//!
//! A `Tensor` is a cheaply clonable handle to shared storage. Operations in
//! [`crate::numerics::ops`] produce new tensors and, while gradients are
//! enabled and any input is tracked, record a backward closure so that
//! [`crate::numerics::autograd::backward`] can later accumulate gradients
//! into the leaf tensors that were marked with `requires_grad`.

use std::cell::{Cell, Ref, RefCell};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` with gradient recording disabled on the current thread.
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    let out = f();
    GRAD_ENABLED.with(|g| g.set(prev));
    out
}

pub(crate) fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Computes per-parent gradient contributions given the output gradient,
/// the output values, and the parent tensors.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &[f64], &[Tensor]) -> Vec<Option<Vec<f64>>>>;

pub(crate) struct Node {
    pub(crate) parents: Vec<Tensor>,
    pub(crate) backward: BackwardFn,
}

pub(crate) struct Inner {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) values: Vec<f64>,
    pub(crate) grad: Option<Vec<f64>>,
    pub(crate) requires_grad: bool,
    pub(crate) node: Option<Node>,
}

#[derive(Clone)]
pub struct Tensor {
    pub(crate) inner: Rc<RefCell<Inner>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::InvalidShape {
                op: "tensor",
                detail: format!(
                    "shape {:?} implies {} values, got {}",
                    shape,
                    expected,
                    values.len()
                ),
            });
        }
        Ok(Self::build(shape, values, false, None))
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self::build(shape, vec![0.0; len], false, None)
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let len = shape.iter().product();
        Self::build(shape, vec![value; len], false, None)
    }

    pub fn scalar(value: f64) -> Self {
        Self::build(vec![], vec![value], false, None)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput { context: "from_rows" });
        }
        let cols = rows[0].len();
        let mut values = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::InvalidShape {
                    op: "from_rows",
                    detail: format!("ragged rows: {} vs {}", cols, row.len()),
                });
            }
            values.extend_from_slice(row);
        }
        Ok(Self::build(vec![rows.len(), cols], values, false, None))
    }

    pub(crate) fn build(
        shape: Vec<usize>,
        values: Vec<f64>,
        requires_grad: bool,
        node: Option<Node>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Tensor {
            inner: Rc::new(RefCell::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                values,
                grad: None,
                requires_grad,
                node,
            })),
        }
    }

    /// Marks this tensor as a trainable leaf and returns it.
    pub fn requires_grad(self) -> Self {
        self.inner.borrow_mut().requires_grad = true;
        self
    }

    pub fn is_trainable(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    /// True when this tensor participates in gradient computation, either as
    /// a trainable leaf or as the output of a recorded operation.
    pub(crate) fn tracked(&self) -> bool {
        let inner = self.inner.borrow();
        inner.requires_grad || inner.node.is_some()
    }

    pub(crate) fn id(&self) -> u64 {
        self.inner.borrow().id
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> Ref<'_, [f64]> {
        Ref::map(self.inner.borrow(), |inner| inner.values.as_slice())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.borrow().values.clone()
    }

    /// Extracts the single value of a scalar or one-element tensor.
    pub fn item(&self) -> Result<f64> {
        let inner = self.inner.borrow();
        if inner.values.len() != 1 {
            return Err(Error::NonScalarLoss {
                shape: inner.shape.clone(),
            });
        }
        Ok(inner.values[0])
    }

    /// Overwrites the stored values in place; shape must be unchanged.
    pub fn set_values(&self, values: &[f64]) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        if values.len() != inner.values.len() {
            return Err(Error::DimMismatch {
                context: "set_values",
                expected: inner.values.len(),
                got: values.len(),
            });
        }
        inner.values.copy_from_slice(values);
        Ok(())
    }

    /// Applies `f` to the stored values in place.
    pub fn update_values(&self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.inner.borrow_mut().values);
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    pub fn clear_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    pub(crate) fn accumulate_grad(&self, contribution: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        match inner.grad {
            Some(ref mut g) => {
                for (a, b) in g.iter_mut().zip(contribution) {
                    *a += b;
                }
            }
            None => inner.grad = Some(contribution.to_vec()),
        }
    }

    /// A leaf copy of the values with no graph history.
    pub fn detached(&self) -> Tensor {
        let inner = self.inner.borrow();
        Tensor::build(inner.shape.clone(), inner.values.clone(), false, None)
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &inner.shape)
            .field("requires_grad", &inner.requires_grad)
            .field("values", &inner.values)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_value_count() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        let err = Tensor::new(vec![2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, Error::InvalidShape { .. }));
    }

    #[test]
    fn item_rejects_non_scalar() {
        let t = Tensor::zeros(vec![2]);
        assert!(t.item().is_err());
        assert_eq!(Tensor::scalar(4.5).item().unwrap(), 4.5);
    }

    #[test]
    fn no_grad_restores_state() {
        assert!(grad_enabled());
        no_grad(|| {
            assert!(!grad_enabled());
            no_grad(|| assert!(!grad_enabled()));
            assert!(!grad_enabled());
        });
        assert!(grad_enabled());
    }
}
