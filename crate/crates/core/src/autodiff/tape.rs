use std::collections::BTreeMap;
use std::fmt;

use super::params::ParameterStore;
use super::AutodiffError;

/// Dense row-major array of reals.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, AutodiffError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(AutodiffError::Shape(format!("shape {shape:?} needs {numel} values, got {}", data.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel] }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![1], data: vec![v] }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

/// A differentiable operation: forward evaluation plus its exact
/// vector-Jacobian product.
pub trait Function {
    fn name(&self) -> &'static str;

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor, AutodiffError>;

    /// Gradients for the inputs flagged in `needs`; entries for the other
    /// inputs may be left empty.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &[f64], needs: &[bool]) -> Vec<Vec<f64>>;
}

struct Node {
    value: Tensor,
    inputs: Vec<Var>,
    func: Option<Box<dyn Function>>,
    requires_grad: bool,
}

/// Append-only record of a computation. Inputs always precede the nodes
/// that consume them, so a reverse sweep visits each node once.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value that is never differentiated.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Vec::new(), None, false)
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Vec::new(), None, true)
    }

    /// Leaf holding a copy of a stored parameter; repeated requests for the
    /// same name return the same node.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<Var, AutodiffError> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let p = store.get(name).ok_or_else(|| AutodiffError::UnknownParameter(name.to_string()))?;
        let v = self.leaf(Tensor { shape: p.shape.clone(), data: p.value.clone() });
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// Evaluates `func` on the given nodes and appends the result.
    pub fn record(&mut self, func: Box<dyn Function>, inputs: &[Var]) -> Result<Var, AutodiffError> {
        let value = {
            let vals: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            func.forward(&vals)?
        };
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let func = if requires_grad { Some(func) } else { None };
        Ok(self.push(value, inputs.to_vec(), func, requires_grad))
    }

    fn push(&mut self, value: Tensor, inputs: Vec<Var>, func: Option<Box<dyn Function>>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, inputs, func, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Reverse sweep from a single-element root seeded with 1.
    pub fn backward(&self, root: Var) -> Result<Gradients, AutodiffError> {
        let root_value = &self.nodes[root.0].value;
        if root_value.numel() != 1 {
            return Err(AutodiffError::Shape(format!(
                "backward needs a scalar root, got shape {:?}",
                root_value.shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            let Some(func) = node.func.as_ref() else { continue };
            let Some(grad) = grads[id].take() else { continue };
            let needs: Vec<bool> = node.inputs.iter().map(|v| self.nodes[v.0].requires_grad).collect();
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let input_grads = func.backward(&inputs, &node.value, &grad, &needs);
            for ((input, g), need) in node.inputs.iter().zip(input_grads).zip(&needs) {
                if !need {
                    continue;
                }
                debug_assert_eq!(g.len(), self.nodes[input.0].value.numel(), "{}", func.name());
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        let param_grads = self
            .params
            .iter()
            .map(|(name, v)| {
                let g =
                    grads.get(v.0).and_then(|g| g.clone()).unwrap_or_else(|| vec![0.0; self.nodes[v.0].value.numel()]);
                (name.clone(), g)
            })
            .collect();
        Ok(Gradients { grads, param_grads })
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    param_grads: BTreeMap<String, Vec<f64>>,
}

impl Gradients {
    /// Gradient of a leaf; zeros when the root does not depend on it.
    pub fn get(&self, tape: &Tape, v: Var) -> Vec<f64> {
        self.grads.get(v.0).and_then(|g| g.clone()).unwrap_or_else(|| vec![0.0; tape.value(v).numel()])
    }

    /// Parameter gradients keyed by name, in name order.
    pub fn params(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.param_grads
    }

    pub fn into_params(self) -> BTreeMap<String, Vec<f64>> {
        self.param_grads
    }
}
