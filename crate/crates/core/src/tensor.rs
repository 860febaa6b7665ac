//! Dense f32 tensors with a reverse-mode autodiff graph.
//!
//! Every op produces a new immutable [`Tensor`]. When at least one input
//! requires a gradient, the result keeps a link to its inputs together with a
//! closure that maps the output gradient to input gradients. [`Tensor::backward`]
//! walks that graph in reverse topological order and accumulates gradients
//! into the leaf tensors (parameters and user inputs created with
//! [`Tensor::parameter`] or [`Tensor::requires_grad_`]).
//!
//! Gradients of leaves accumulate across repeated `backward` calls until
//! [`Tensor::zero_grad`] is called.

use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::TensorError;

pub(crate) type BackwardFn = Box<dyn Fn(&[f32]) -> Vec<Option<Vec<f32>>> + Send + Sync>;

struct Node {
    shape: Vec<usize>,
    data: Vec<f32>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<f32>>>,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
}

/// Reference-counted handle to an immutable tensor node.
#[derive(Clone)]
pub struct Tensor(Arc<Node>);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` without recording autodiff history on this thread.
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    let _restore = Restore(prev);
    f()
}

fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    /// Builds a constant tensor. Zero-sized dimensions are allowed.
    pub fn new(data: Vec<f32>, shape: &[usize]) -> Result<Self, TensorError> {
        if numel(shape) != data.len() {
            return Err(TensorError::DataLength {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        Ok(Self::from_parts(data, shape.to_vec(), false))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_parts(vec![0.0; numel(shape)], shape.to_vec(), false)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        Self::from_parts(vec![value; numel(shape)], shape.to_vec(), false)
    }

    pub fn scalar(value: f32) -> Self {
        Self::from_parts(vec![value], vec![1], false)
    }

    /// Leaf tensor that collects gradients.
    pub fn parameter(data: Vec<f32>, shape: &[usize]) -> Result<Self, TensorError> {
        let t = Self::new(data, shape)?;
        Ok(t.requires_grad_())
    }

    /// Returns a leaf copy of this tensor that collects gradients.
    pub fn requires_grad_(&self) -> Self {
        Self::from_parts(self.0.data.clone(), self.0.shape.clone(), true)
    }

    /// Returns a constant copy that is cut off from the graph.
    pub fn detach(&self) -> Self {
        Self::from_parts(self.0.data.clone(), self.0.shape.clone(), false)
    }

    fn from_parts(data: Vec<f32>, shape: Vec<usize>, requires_grad: bool) -> Self {
        Tensor(Arc::new(Node {
            shape,
            data,
            requires_grad,
            grad: Mutex::new(None),
            parents: Vec::new(),
            backward: None,
        }))
    }

    /// Output of a differentiable op. `backward` receives the gradient of the
    /// output and returns one optional gradient per parent, in order.
    pub(crate) fn from_op(
        data: Vec<f32>,
        shape: Vec<usize>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        let track = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        if !track {
            return Self::from_parts(data, shape, false);
        }
        Tensor(Arc::new(Node {
            shape,
            data,
            requires_grad: true,
            grad: Mutex::new(None),
            parents,
            backward: Some(backward),
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.0.data.clone()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.backward.is_none()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f32, TensorError> {
        match self.0.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(TensorError::NotScalar(self.shape().to_vec())),
        }
    }

    /// Accumulated gradient, if any has been stored on this leaf.
    pub fn grad(&self) -> Option<Vec<f32>> {
        self.0.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock poisoned") = None;
    }

    /// Same storage, viewed with a different shape of equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self, TensorError> {
        if numel(shape) != self.numel() {
            return Err(TensorError::DataLength {
                shape: shape.to_vec(),
                len: self.numel(),
            });
        }
        let in_shape = self.shape().to_vec();
        Ok(Self::from_op(
            self.0.data.clone(),
            shape.to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                debug_assert_eq!(numel(&in_shape), g.len());
                vec![Some(g.to_vec())]
            }),
        ))
    }

    /// Back-propagates from a single-element loss.
    pub fn backward(&self) -> Result<(), TensorError> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar(self.shape().to_vec()));
        }
        self.backward_with(&[1.0])
    }

    /// Back-propagates an explicit output gradient (vector-Jacobian product).
    pub fn backward_with(&self, seed: &[f32]) -> Result<(), TensorError> {
        if seed.len() != self.numel() {
            return Err(TensorError::DataLength {
                shape: self.shape().to_vec(),
                len: seed.len(),
            });
        }
        if !self.requires_grad() {
            return Ok(());
        }

        let order = self.topo_order();
        let mut pending: HashMap<*const Node, Vec<f32>> = HashMap::new();
        pending.insert(Arc::as_ptr(&self.0), seed.to_vec());

        for node in order.iter().rev() {
            let Some(grad) = pending.remove(&Arc::as_ptr(&node.0)) else {
                continue;
            };
            match &node.0.backward {
                None => {
                    let mut slot = node.0.grad.lock().expect("grad lock poisoned");
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&grad).for_each(|(a, g)| *a += g),
                        None => *slot = Some(grad),
                    }
                }
                Some(f) => {
                    let parent_grads = f(&grad);
                    debug_assert_eq!(parent_grads.len(), node.0.parents.len());
                    for (parent, pg) in node.0.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !parent.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(pg.len(), parent.numel());
                        pending
                            .entry(Arc::as_ptr(&parent.0))
                            .and_modify(|acc| acc.iter_mut().zip(&pg).for_each(|(a, g)| *a += g))
                            .or_insert(pg);
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order over the nodes that require gradients.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut seen: HashSet<*const Node> = HashSet::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !seen.insert(Arc::as_ptr(&node.0)) {
                continue;
            }
            stack.push((node.clone(), true));
            for p in node.0.parents.iter().rev() {
                if p.requires_grad() && !seen.contains(&Arc::as_ptr(&p.0)) {
                    stack.push((p.clone(), false));
                }
            }
        }
        order
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish_non_exhaustive()
    }
}

/// A named trainable tensor.
#[derive(Debug, Clone)]
pub struct Parameter {
    name: String,
    tensor: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, data: Vec<f32>, shape: &[usize]) -> Result<Self, TensorError> {
        let name = name.into();
        if name.is_empty() {
            return Err(TensorError::EmptyName);
        }
        Ok(Self {
            name,
            tensor: Tensor::parameter(data, shape)?,
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

    pub fn data(&self) -> &[f32] {
        self.tensor.data()
    }

    pub fn grad(&self) -> Option<Vec<f32>> {
        self.tensor.grad()
    }

    pub fn zero_grad(&self) {
        self.tensor.zero_grad()
    }

    /// Replaces the values; the new leaf starts with no gradient.
    pub fn set_data(&mut self, data: Vec<f32>) -> Result<(), TensorError> {
        if data.len() != self.tensor.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "set_data",
                lhs: self.shape().to_vec(),
                rhs: vec![data.len()],
            });
        }
        let shape = self.shape().to_vec();
        self.tensor = Tensor::parameter(data, &shape)?;
        Ok(())
    }
}
