//! Recorded forward graph with per-operator reverse-mode backward.
//!
//! A [`Graph`] owns every intermediate value of one forward pass. Each node
//! remembers the operator that produced it together with whatever that
//! operator's backward needs (batch statistics, pooling argmax, ...).
//! [`Graph::backward`] walks the nodes in reverse creation order.
//!
//! An inference graph ([`Graph::inference`]) keeps values only; asking it for
//! gradients is an error.

use std::cell::Cell;

use indexmap::IndexMap;

use super::conv::{conv2d_backward, conv2d_forward, ConvSpec};
use super::elementwise::{
    accumulate_channels, add, concat_channels, relu_backward, relu_forward, slice_channels,
};
use super::norm::{
    batchnorm_backward, batchnorm_eval_backward, batchnorm_train, eval_inv_std, normalize, BnCache,
    Mode,
};
use super::pool::{maxpool_backward, maxpool_forward, PoolSpec};
use super::resize::{upsample_bilinear, upsample_bilinear_backward};
use super::tensor::Tensor;
use crate::error::{shape_err, Error, Result};

thread_local! {
    static TAPE_RECORDS: Cell<u64> = const { Cell::new(0) };
    static GRAD_BUFFERS: Cell<u64> = const { Cell::new(0) };
}

/// Per-thread counters of backward bookkeeping: (recorded ops, gradient buffers).
pub fn autodiff_counters() -> (u64, u64) {
    (TAPE_RECORDS.with(Cell::get), GRAD_BUFFERS.with(Cell::get))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum BnRecord {
    Train(BnCache),
    Eval { mean: Vec<f32>, inv_std: Vec<f32> },
}

enum Op {
    Leaf,
    Param(String),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        spec: ConvSpec,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        record: BnRecord,
    },
    Relu(Var),
    MaxPool {
        x: Var,
        argmax: Vec<u32>,
    },
    Upsample(Var),
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    Add(Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Batch statistics observed by a train-mode batch norm, to be folded into the
/// owning layer's running estimates by the caller.
#[derive(Debug, Clone)]
pub struct BnUpdate {
    pub layer: String,
    pub mean: Vec<f32>,
    pub unbiased_var: Vec<f32>,
}

/// Running statistics consumed by an eval-mode batch norm.
#[derive(Debug, Clone, Copy)]
pub struct BnRunning<'a> {
    pub mean: &'a [f32],
    pub var: &'a [f32],
    pub eps: f32,
}

pub struct Graph {
    nodes: Vec<Node>,
    record: bool,
    bn_updates: Vec<BnUpdate>,
    marks: IndexMap<String, Var>,
    conv_macs: u64,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    /// A graph that records everything needed for [`Graph::backward`].
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            record: true,
            bn_updates: Vec::new(),
            marks: IndexMap::new(),
            conv_macs: 0,
        }
    }

    /// A forward-only graph.
    pub fn inference() -> Self {
        Self {
            record: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Multiply-accumulates executed by convolutions so far (whole batch).
    pub fn conv_macs(&self) -> u64 {
        self.conv_macs
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let op = if self.record {
            TAPE_RECORDS.with(|c| c.set(c.get() + 1));
            op
        } else {
            match op {
                Op::Param(name) => Op::Param(name),
                _ => Op::Leaf,
            }
        };
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf whose gradient is reported under `name`.
    pub fn param(&mut self, name: &str, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Param(name.to_string()),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn take_value(&mut self, v: Var) -> Tensor {
        std::mem::replace(&mut self.nodes[v.0].value, Tensor::zeros([0, 0, 0, 0]))
    }

    /// Names an intermediate value so analyses can fetch it after the pass.
    pub fn mark(&mut self, name: impl Into<String>, v: Var) {
        self.marks.insert(name.into(), v);
    }

    pub fn marked(&self, name: &str) -> Option<Var> {
        self.marks.get(name).copied()
    }

    pub fn marks(&self) -> &IndexMap<String, Var> {
        &self.marks
    }

    pub fn bn_updates(&self) -> &[BnUpdate] {
        &self.bn_updates
    }

    pub fn take_bn_updates(&mut self) -> Vec<BnUpdate> {
        std::mem::take(&mut self.bn_updates)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let bias = b.map(|b| self.value(b).data());
        let out = conv2d_forward(self.value(x), self.value(w), bias, &spec)?;
        self.conv_macs += spec.macs(out.shape());
        Ok(self.push(out, Op::Conv { x, w, b, spec }))
    }

    pub fn batch_norm(
        &mut self,
        layer: &str,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: Mode,
        running: BnRunning<'_>,
    ) -> Result<Var> {
        let xv = self.value(x);
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        if running.mean.len() != g.len() || running.var.len() != g.len() {
            return Err(shape_err("batchnorm", "running statistics length mismatch"));
        }
        let (out, record) = match mode {
            Mode::Train => {
                let (out, cache) = batchnorm_train(xv, g, bt, running.eps)?;
                self.bn_updates.push(BnUpdate {
                    layer: layer.to_string(),
                    mean: cache.mean.clone(),
                    unbiased_var: cache.unbiased_var(),
                });
                (out, BnRecord::Train(cache))
            }
            Mode::Eval => {
                if xv.c() != g.len() {
                    return Err(shape_err("batchnorm", "channel mismatch"));
                }
                xv.ensure_finite("batchnorm")?;
                let inv_std = eval_inv_std(running.var, running.eps);
                let out = normalize(xv, running.mean, &inv_std, g, bt);
                (
                    out,
                    BnRecord::Eval {
                        mean: running.mean.to_vec(),
                        inv_std,
                    },
                )
            }
        };
        Ok(self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                record,
            },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = relu_forward(self.value(x));
        self.push(out, Op::Relu(x))
    }

    pub fn max_pool(&mut self, x: Var, spec: PoolSpec) -> Result<Var> {
        let (out, argmax) = maxpool_forward(self.value(x), spec)?;
        Ok(self.push(out, Op::MaxPool { x, argmax }))
    }

    pub fn upsample(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let out = upsample_bilinear(self.value(x), out_h, out_w)?;
        Ok(self.push(out, Op::Upsample(x)))
    }

    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = xs.iter().map(|&v| self.value(v)).collect();
        let out = concat_channels(&values)?;
        Ok(self.push(out, Op::Concat(xs.to_vec())))
    }

    pub fn slice(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let out = slice_channels(self.value(x), start, width)?;
        Ok(self.push(out, Op::Slice { x, start }))
    }

    /// Cuts `x` into consecutive channel groups of the given widths.
    pub fn split(&mut self, x: Var, widths: &[usize]) -> Result<Vec<Var>> {
        if widths.iter().sum::<usize>() != self.value(x).c() {
            return Err(shape_err("split_channels", "widths do not cover the input"));
        }
        let mut start = 0;
        let mut parts = Vec::with_capacity(widths.len());
        for &w in widths {
            parts.push(self.slice(x, start, w)?);
            start += w;
        }
        Ok(parts)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = add(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Reverse pass from `root` seeded with `seed` (same shape as `root`).
    pub fn backward(&self, root: Var, seed: Tensor) -> Result<Gradients> {
        if !self.record {
            return Err(Error::InvalidConfig(
                "backward requested on an inference graph".into(),
            ));
        }
        seed.ensure_shape("backward seed", self.value(root).shape())?;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);
        let mut params = GradStore::default();

        fn accumulate(slot: &mut Option<Tensor>, g: Tensor) -> Result<()> {
            match slot {
                Some(existing) => existing.add_assign(&g),
                None => {
                    GRAD_BUFFERS.with(|c| c.set(c.get() + 1));
                    *slot = Some(g);
                    Ok(())
                }
            }
        }

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                }
                Op::Param(name) => {
                    params.accumulate(name, &g)?;
                    grads[idx] = Some(g);
                }
                Op::Conv { x, w, b, spec } => {
                    let cg = conv2d_backward(self.value(*x), self.value(*w), spec, &g)?;
                    accumulate(&mut grads[x.0], cg.grad_x)?;
                    accumulate(&mut grads[w.0], cg.grad_w)?;
                    if let (Some(b), Some(gb)) = (b, cg.grad_b) {
                        accumulate(&mut grads[b.0], Tensor::channel_vector(gb))?;
                    }
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    record,
                } => {
                    let xv = self.value(*x);
                    let gv = self.value(*gamma).data();
                    let bg = match record {
                        BnRecord::Train(cache) => batchnorm_backward(xv, gv, cache, &g)?,
                        BnRecord::Eval { mean, inv_std } => {
                            batchnorm_eval_backward(xv, gv, mean, inv_std, &g)?
                        }
                    };
                    accumulate(&mut grads[x.0], bg.grad_x)?;
                    accumulate(&mut grads[gamma.0], Tensor::channel_vector(bg.grad_gamma))?;
                    accumulate(&mut grads[beta.0], Tensor::channel_vector(bg.grad_beta))?;
                }
                Op::Relu(x) => {
                    let gx = relu_backward(self.value(*x), &g)?;
                    accumulate(&mut grads[x.0], gx)?;
                }
                Op::MaxPool { x, argmax } => {
                    let gx = maxpool_backward(self.value(*x).shape(), argmax, &g)?;
                    accumulate(&mut grads[x.0], gx)?;
                }
                Op::Upsample(x) => {
                    let gx = upsample_bilinear_backward(self.value(*x).shape(), &g)?;
                    accumulate(&mut grads[x.0], gx)?;
                }
                Op::Concat(xs) => {
                    let mut start = 0;
                    for x in xs {
                        let width = self.value(*x).c();
                        accumulate(&mut grads[x.0], slice_channels(&g, start, width)?)?;
                        start += width;
                    }
                }
                Op::Slice { x, start } => {
                    let slot = &mut grads[x.0];
                    if slot.is_none() {
                        GRAD_BUFFERS.with(|c| c.set(c.get() + 1));
                        *slot = Some(Tensor::zeros(self.value(*x).shape()));
                    }
                    if let Some(dst) = slot.as_mut() {
                        accumulate_channels(dst, *start, &g)?;
                    }
                }
                Op::Add(a, b) => {
                    if a == b {
                        let mut twice = g.clone();
                        twice.add_assign(&g)?;
                        accumulate(&mut grads[a.0], twice)?;
                    } else {
                        accumulate(&mut grads[a.0], g.clone())?;
                        accumulate(&mut grads[b.0], g)?;
                    }
                }
            }
        }
        Ok(Gradients { by_var: grads, params })
    }
}

/// Parameter gradients keyed by parameter name, in first-use order.
#[derive(Debug, Clone, Default)]
pub struct GradStore {
    entries: IndexMap<String, Tensor>,
}

impl GradStore {
    fn accumulate(&mut self, name: &str, g: &Tensor) -> Result<()> {
        match self.entries.get_mut(name) {
            Some(existing) => existing.add_assign(g),
            None => {
                self.entries.insert(name.to_string(), g.clone());
                Ok(())
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, g: Tensor) {
        self.entries.insert(name.into(), g);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub struct Gradients {
    by_var: Vec<Option<Tensor>>,
    pub params: GradStore,
}

impl Gradients {
    /// Gradient reaching `v`, or `None` if `v` does not influence the root.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.by_var.get(v.0).and_then(Option::as_ref)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_input_accumulates() {
        let mut g = Graph::new();
        let x = g.input(Tensor::full([1, 1, 1, 2], 3.0));
        let y = g.add(x, x).unwrap();
        let z = g.relu(y);
        let grads = g.backward(z, Tensor::full([1, 1, 1, 2], 1.0)).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn inference_graph_refuses_backward() {
        let mut g = Graph::inference();
        let x = g.input(Tensor::full([1, 1, 1, 1], 1.0));
        let y = g.relu(x);
        assert!(g.backward(y, Tensor::full([1, 1, 1, 1], 1.0)).is_err());
    }

    #[test]
    fn inference_records_nothing() {
        let before = autodiff_counters();
        let mut g = Graph::inference();
        let x = g.input(Tensor::full([1, 2, 2, 2], 1.0));
        let parts = g.split(x, &[1, 1]).unwrap();
        let y = g.concat(&parts).unwrap();
        g.relu(y);
        assert_eq!(autodiff_counters(), before);
    }

    #[test]
    fn split_then_concat_passes_gradient_through() {
        let mut g = Graph::new();
        let x = g.input(Tensor::full([1, 3, 1, 1], 1.0));
        let parts = g.split(x, &[2, 1]).unwrap();
        let y = g.concat(&[parts[1], parts[0]]).unwrap();
        let seed = Tensor::from_vec([1, 3, 1, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let grads = g.backward(y, seed).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[2.0, 3.0, 1.0]);
    }

    #[test]
    fn param_gradients_are_named() {
        let mut g = Graph::new();
        let x = g.input(Tensor::full([1, 1, 1, 1], 2.0));
        let w = g.param("layer.weight", Tensor::full([1, 1, 1, 1], 3.0));
        let y = g.conv2d(x, w, None, ConvSpec::new(1, 1, 1)).unwrap();
        let grads = g.backward(y, Tensor::full([1, 1, 1, 1], 1.0)).unwrap();
        assert_eq!(grads.params.get("layer.weight").unwrap().data(), &[2.0]);
        assert_eq!(grads.wrt(x).unwrap().data(), &[3.0]);
    }
}
