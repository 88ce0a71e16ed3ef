//! Reverse-mode gradient accumulation.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Propagates gradients from a scalar loss back to every trainable leaf that
/// contributed to it. Leaf gradients accumulate across calls; interior nodes
/// keep no gradient state.
pub fn backward(loss: &Tensor) -> Result<()> {
    if loss.len() != 1 {
        return Err(Error::NonScalarLoss { shape: loss.shape() });
    }

    // Reachable tensors, deepest first. Ids are assigned in creation order,
    // so descending id order is a valid reverse-topological order.
    let mut stack = vec![loss.clone()];
    let mut visited: HashMap<u64, Tensor> = HashMap::new();
    while let Some(t) = stack.pop() {
        let id = t.id();
        if visited.contains_key(&id) {
            continue;
        }
        if let Some(node) = t.inner.borrow().node.as_ref() {
            stack.extend(node.parents.iter().cloned());
        }
        visited.insert(id, t);
    }
    let mut order: Vec<u64> = visited.keys().copied().collect();
    order.sort_unstable_by(|a, b| b.cmp(a));

    let mut grads: HashMap<u64, Vec<f64>> = HashMap::new();
    grads.insert(loss.id(), vec![1.0]);

    for id in order {
        let tensor = &visited[&id];
        let Some(grad) = grads.remove(&id) else {
            continue;
        };
        let inner = tensor.inner.borrow();
        if let Some(node) = inner.node.as_ref() {
            let contributions = (node.backward)(&grad, &inner.values, &node.parents);
            debug_assert_eq!(contributions.len(), node.parents.len());
            for (parent, contribution) in node.parents.iter().zip(contributions) {
                let Some(contribution) = contribution else {
                    continue;
                };
                if !parent.tracked() {
                    continue;
                }
                grads
                    .entry(parent.id())
                    .and_modify(|acc| {
                        for (a, b) in acc.iter_mut().zip(&contribution) {
                            *a += b;
                        }
                    })
                    .or_insert(contribution);
            }
        } else if inner.requires_grad {
            drop(inner);
            tensor.accumulate_grad(&grad);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ops;

    #[test]
    fn backward_rejects_non_scalar() {
        let x = Tensor::zeros(vec![2]).requires_grad();
        let y = ops::scale(&x, 2.0);
        assert!(matches!(backward(&y), Err(Error::NonScalarLoss { .. })));
    }

    #[test]
    fn grads_accumulate_across_backward_calls() {
        let x = Tensor::new(vec![2], vec![3.0, -1.0]).unwrap().requires_grad();
        for _ in 0..2 {
            let loss = ops::sum_all(&x);
            backward(&loss).unwrap();
        }
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn shared_subexpression_gets_both_contributions() {
        // loss = sum(x) + sum(x) => dx = 2
        let x = Tensor::new(vec![2], vec![1.0, 1.0]).unwrap().requires_grad();
        let s = ops::sum_all(&x);
        let loss = ops::add(&s, &s).unwrap();
        backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn untracked_leaves_receive_no_gradient() {
        let x = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let y = Tensor::new(vec![2], vec![3.0, 4.0]).unwrap().requires_grad();
        let loss = ops::sum_all(&ops::mul(&x, &y).unwrap());
        backward(&loss).unwrap();
        assert!(x.grad().is_none());
        assert_eq!(y.grad().unwrap(), vec![1.0, 2.0]);
    }
}
