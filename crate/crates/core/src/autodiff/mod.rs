//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Each [`Var`] is a node in an implicit tape: it stores its forward value,
//! the parent nodes it was computed from, and a backward closure that maps the
//! incoming output gradient to gradient contributions for the parents.
//! Calling [`Var::backward`] on a scalar replays the tape in reverse creation
//! order and accumulates a gradient into every node that requires one.
//!
//! Node ids come from a global counter, so parents always carry smaller ids
//! than their children and reverse-id order is a valid topological order.

mod elementwise;
mod image;
mod linalg;
mod reduce;

pub use elementwise::*;
pub use image::*;
pub use linalg::*;
pub use reduce::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

type BackwardFn = Box<dyn Fn(&Tensor, &[Var])>;

pub struct VarNode {
    id: u64,
    data: Tensor,
    grad: RefCell<Option<Tensor>>,
    requires_grad: bool,
    parents: Vec<Var>,
    backward_fn: Option<BackwardFn>,
}

/// A tensor tracked on the gradient tape. Cloning is cheap (shared node).
#[derive(Clone)]
pub struct Var(Rc<VarNode>);

impl Var {
    /// A differentiable leaf (parameter or checked input).
    pub fn leaf(data: Tensor) -> Var {
        Var(Rc::new(VarNode {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            data,
            grad: RefCell::new(None),
            requires_grad: true,
            parents: Vec::new(),
            backward_fn: None,
        }))
    }

    /// A constant: no gradient is accumulated and none flows past it.
    pub fn constant(data: Tensor) -> Var {
        Var(Rc::new(VarNode {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            data,
            grad: RefCell::new(None),
            requires_grad: false,
            parents: Vec::new(),
            backward_fn: None,
        }))
    }

    pub(crate) fn from_op(data: Tensor, parents: Vec<Var>, backward_fn: BackwardFn) -> Var {
        let requires_grad = parents.iter().any(|p| p.0.requires_grad);
        Var(Rc::new(VarNode {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            data,
            grad: RefCell::new(None),
            requires_grad,
            parents,
            backward_fn: if requires_grad { Some(backward_fn) } else { None },
        }))
    }

    pub fn data(&self) -> &Tensor {
        &self.0.data
    }

    pub fn shape(&self) -> &[usize] {
        self.0.data.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Gradient accumulated by the last `backward` call, if any.
    pub fn grad(&self) -> Option<Tensor> {
        self.0.grad.borrow().clone()
    }

    pub fn take_grad(&self) -> Option<Tensor> {
        self.0.grad.borrow_mut().take()
    }

    /// Accumulate a gradient contribution into this node.
    pub(crate) fn accum_grad(&self, g: &Tensor) {
        if !self.0.requires_grad {
            return;
        }
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => acc.add_assign(g),
            None => *slot = Some(g.clone()),
        }
    }

    /// Reverse sweep from a scalar output. Clears any gradients left over from
    /// a previous sweep over the reachable subgraph first.
    pub fn backward(&self) -> Result<()> {
        if self.0.data.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("expected scalar output, got shape {:?}", self.shape()),
            ));
        }
        // Collect the reachable subgraph.
        let mut seen: HashMap<u64, Var> = HashMap::new();
        let mut stack = vec![self.clone()];
        while let Some(v) = stack.pop() {
            if !v.0.requires_grad || seen.contains_key(&v.0.id) {
                continue;
            }
            for p in &v.0.parents {
                stack.push(p.clone());
            }
            seen.insert(v.0.id, v);
        }
        let mut order: Vec<Var> = seen.into_values().collect();
        order.sort_by_key(|v| std::cmp::Reverse(v.0.id));
        for v in &order {
            *v.0.grad.borrow_mut() = None;
        }
        self.accum_grad(&Tensor::scalar(1.0));
        for v in &order {
            let g = v.0.grad.borrow().clone();
            if let (Some(g), Some(f)) = (g, v.0.backward_fn.as_ref()) {
                f(&g, &v.0.parents);
            }
        }
        Ok(())
    }
}
