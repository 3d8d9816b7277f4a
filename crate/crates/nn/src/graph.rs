use crate::tensor::Tensor;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

type BackwardFn = Box<dyn Fn(&Tensor, &mut dyn FnMut(usize, Tensor))>;

struct Node {
    value: Tensor,
    requires_grad: bool,
    backward: Option<BackwardFn>,
}

/// Reverse-mode tape. Nodes are appended in forward order; `backward` walks
/// them in reverse, accumulating gradients for every node that needs one.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push(value, requires_grad, None)
    }

    pub(crate) fn push(
        &mut self,
        value: Tensor,
        requires_grad: bool,
        backward: Option<BackwardFn>,
    ) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, requires_grad, backward });
        id
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Backpropagates from a scalar root.
    pub fn backward(&self, root: NodeId) -> Gradients {
        assert_eq!(
            self.nodes[root.0].value.len(),
            1,
            "backward root must be a scalar"
        );
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] =
            Some(ndarray::ArrayD::ones(self.nodes[root.0].value.raw_dim()).into_shared());
        for i in (0..=root.0).rev() {
            let Some(bw) = self.nodes[i].backward.as_ref() else { continue };
            let Some(g) = grads[i].clone() else { continue };
            bw(&g, &mut |parent, contribution| {
                match &mut grads[parent] {
                    Some(existing) => {
                        let sum = (&*existing + &contribution).into_shared();
                        *existing = sum;
                    }
                    slot @ None => *slot = Some(contribution),
                }
            });
        }
        Gradients { grads }
    }
}

/// Gradients indexed by node id.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}
