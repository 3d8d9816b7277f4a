use std::collections::BTreeMap;

use crate::tensor::Tensor;

/// A named trainable tensor. Names are hierarchical (`vocoder.blocks.0.pw1.w`)
/// and unique within a model, and double as checkpoint keys.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Self { name: name.into(), value }
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

/// Anything holding parameters exposes them for optimization and checkpointing.
pub trait HasParams {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>);

    fn param_count(&mut self) -> usize {
        let mut v = Vec::new();
        self.visit_params(&mut v);
        v.iter().map(|p| p.numel()).sum()
    }

    fn snapshot(&mut self) -> BTreeMap<String, Tensor> {
        let mut v = Vec::new();
        self.visit_params(&mut v);
        v.into_iter().map(|p| (p.name.clone(), p.value.clone())).collect()
    }

    fn load_snapshot(&mut self, snap: &BTreeMap<String, Tensor>) -> Result<(), String> {
        let mut v = Vec::new();
        self.visit_params(&mut v);
        for p in v {
            let t = snap
                .get(&p.name)
                .ok_or_else(|| format!("checkpoint is missing tensor {}", p.name))?;
            if t.shape() != p.value.shape() {
                return Err(format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                ));
            }
            p.value = t.clone();
        }
        Ok(())
    }
}
