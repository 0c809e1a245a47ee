//! An append-only tape of tensor-valued nodes with reverse-mode gradients.
//!
//! Values reuse [`LogTensor`] storage, but tape nodes may hold any finite
//! reals (samples, means, scales) as well as log-domain factors. Binary and
//! ternary element-wise ops broadcast by axis id.

use std::fmt;

use crate::logtensor::{contract, for_each_offset, union_axes, AxisId, LogTensor};

use super::GradError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    GaussianLogDensity { x: NodeId, mean: NodeId, sd: NodeId },
    Contract { inputs: Vec<NodeId>, axis: AxisId, normalize: bool },
    StopGradient(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    op: Op,
    value: LogTensor,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tape {
    nodes: Vec<Node>,
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Gradients of one scalar output with respect to every node.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
}

impl Gradients {
    /// Gradient with respect to `id`, in the node's storage order; zeros when
    /// the output does not depend on it.
    pub fn wrt(&self, id: NodeId) -> Vec<f64> {
        self.grads[id.0].clone().unwrap_or_else(|| vec![0.0; self.lens[id.0]])
    }

    /// Gradient with respect to a scalar node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.grads[id.0].as_ref().map_or(0.0, |g| g[0])
    }
}

/// Storage strides of each operand along the union of their axes.
fn broadcast(values: &[&LogTensor]) -> Result<(Vec<(AxisId, usize)>, Vec<Vec<usize>>), GradError> {
    let axes = union_axes(values.iter().copied())?;
    let strides = values.iter().map(|v| v.strides_along(&axes)).collect();
    Ok((axes, strides))
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

    fn push(&mut self, op: Op, value: LogTensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<(), GradError> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(GradError::UnknownNode(id))
        }
    }

    /// A leaf holding `value`; gradients are reported for every leaf.
    pub fn leaf(&mut self, value: LogTensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.push(Op::Leaf, LogTensor::from_parts(Vec::new(), vec![v]))
    }

    /// A leaf vector over one axis.
    pub fn vector(&mut self, axis: AxisId, values: Vec<f64>) -> Result<NodeId, GradError> {
        if values.is_empty() {
            return Err(crate::logtensor::TensorError::EmptyAxis(axis).into());
        }
        Ok(self.push(Op::Leaf, LogTensor::from_parts(vec![(axis, values.len())], values)))
    }

    pub fn value(&self, id: NodeId) -> &LogTensor {
        &self.nodes[id.0].value
    }

    fn elementwise(&mut self, inputs: &[NodeId], op: Op, f: impl Fn(&[f64]) -> f64) -> Result<NodeId, GradError> {
        for &i in inputs {
            self.check(i)?;
        }
        let values: Vec<&LogTensor> = inputs.iter().map(|&i| &self.nodes[i.0].value).collect();
        let (axes, strides) = broadcast(&values)?;
        let mut data = Vec::with_capacity(axes.iter().map(|&(_, n)| n).product());
        let mut args = vec![0.0; inputs.len()];
        for_each_offset(&axes, &strides, |o| {
            for (a, (v, &off)) in args.iter_mut().zip(values.iter().zip(o)) {
                *a = v.data()[off];
            }
            data.push(f(&args));
        });
        Ok(self.push(op, LogTensor::from_parts(axes, data)))
    }

    /// Element-wise sum; in the log domain this is the factor product.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        self.elementwise(&[a, b], Op::Add(a, b), |v| v[0] + v[1])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        self.elementwise(&[a, b], Op::Sub(a, b), |v| v[0] - v[1])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        self.elementwise(&[a, b], Op::Mul(a, b), |v| v[0] * v[1])
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId, GradError> {
        self.elementwise(&[a], Op::Scale(a, c), |v| c * v[0])
    }

    /// `log N(x; mean, sd²)` element-wise.
    pub fn gaussian_log_density(&mut self, x: NodeId, mean: NodeId, sd: NodeId) -> Result<NodeId, GradError> {
        self.elementwise(&[x, mean, sd], Op::GaussianLogDensity { x, mean, sd }, |v| {
            let u = (v[0] - v[1]) / v[2];
            -HALF_LN_2PI - v[2].ln() - 0.5 * u * u
        })
    }

    /// `log Σ exp` over `axis`, or the log-mean with `normalize`.
    pub fn logsumexp_reduce(&mut self, input: NodeId, axis: AxisId, normalize: bool) -> Result<NodeId, GradError> {
        self.contract(&[input], axis, normalize)
    }

    /// Sums `axis` out of the log-product of `inputs` (log-domain matrix
    /// product when two operands form one).
    pub fn contract(&mut self, inputs: &[NodeId], axis: AxisId, normalize: bool) -> Result<NodeId, GradError> {
        for &i in inputs {
            self.check(i)?;
        }
        let values: Vec<&LogTensor> = inputs.iter().map(|&i| &self.nodes[i.0].value).collect();
        let value = contract(&values, axis, normalize)?;
        Ok(self.push(
            Op::Contract {
                inputs: inputs.to_vec(),
                axis,
                normalize,
            },
            value,
        ))
    }

    /// Same value as `a`; gradients do not flow back through it.
    pub fn stop_gradient(&mut self, a: NodeId) -> Result<NodeId, GradError> {
        self.check(a)?;
        let value = self.nodes[a.0].value.clone();
        Ok(self.push(Op::StopGradient(a), value))
    }

    /// Reverse-mode gradients of the scalar node `output`.
    pub fn backward(&self, output: NodeId) -> Result<Gradients, GradError> {
        self.check(output)?;
        if !self.nodes[output.0].value.is_scalar() {
            return Err(GradError::NotScalar(output));
        }
        let lens: Vec<usize> = self.nodes.iter().map(|n| n.value.len()).collect();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![1.0]);

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].clone() else { continue };
            if g.iter().any(|v| !v.is_finite()) {
                return Err(GradError::NonFinite(NodeId(i)));
            }
            let node = &self.nodes[i];
            let out = &node.value;
            match &node.op {
                Op::Leaf | Op::StopGradient(_) => {}
                Op::Scale(a, c) => {
                    let ga = slot(&mut grads, &lens, *a);
                    for (x, gi) in ga.iter_mut().zip(&g) {
                        *x += c * gi;
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let (axes, strides) = broadcast(&[va, vb])?;
                    let mut da = vec![0.0; va.len()];
                    let mut db = vec![0.0; vb.len()];
                    let mut k = 0;
                    let op = node.op.clone();
                    for_each_offset(&axes, &strides, |o| {
                        let gk = g[k];
                        k += 1;
                        match op {
                            Op::Add(..) => {
                                da[o[0]] += gk;
                                db[o[1]] += gk;
                            }
                            Op::Sub(..) => {
                                da[o[0]] += gk;
                                db[o[1]] -= gk;
                            }
                            _ => {
                                da[o[0]] += gk * vb.data()[o[1]];
                                db[o[1]] += gk * va.data()[o[0]];
                            }
                        }
                    });
                    add_into(slot(&mut grads, &lens, *a), &da);
                    add_into(slot(&mut grads, &lens, *b), &db);
                }
                Op::GaussianLogDensity { x, mean, sd } => {
                    let vals = [&self.nodes[x.0].value, &self.nodes[mean.0].value, &self.nodes[sd.0].value];
                    let (axes, strides) = broadcast(&vals)?;
                    let mut dx = vec![0.0; vals[0].len()];
                    let mut dm = vec![0.0; vals[1].len()];
                    let mut ds = vec![0.0; vals[2].len()];
                    let mut k = 0;
                    for_each_offset(&axes, &strides, |o| {
                        let gk = g[k];
                        k += 1;
                        let (xv, mv, sv) = (vals[0].data()[o[0]], vals[1].data()[o[1]], vals[2].data()[o[2]]);
                        let r = xv - mv;
                        let s2 = sv * sv;
                        dx[o[0]] -= gk * r / s2;
                        dm[o[1]] += gk * r / s2;
                        ds[o[2]] += gk * (r * r / (s2 * sv) - 1.0 / sv);
                    });
                    add_into(slot(&mut grads, &lens, *x), &dx);
                    add_into(slot(&mut grads, &lens, *mean), &dm);
                    add_into(slot(&mut grads, &lens, *sd), &ds);
                }
                Op::Contract { inputs, axis, normalize } => {
                    let vals: Vec<&LogTensor> = inputs.iter().map(|&j| &self.nodes[j.0].value).collect();
                    let (axes, mut strides) = broadcast(&vals)?;
                    strides.push(out.strides_along(&axes));
                    let n = axes.iter().find(|&&(a, _)| a == *axis).map_or(1, |&(_, n)| n);
                    let shift = if *normalize { (n as f64).ln() } else { 0.0 };
                    let mut d: Vec<Vec<f64>> = vals.iter().map(|v| vec![0.0; v.len()]).collect();
                    let m = vals.len();
                    // Responsibility of each summand: p = exp(Σ inputs − unnormalised output).
                    for_each_offset(&axes, &strides, |o| {
                        let total = out.data()[o[m]];
                        if total == f64::NEG_INFINITY {
                            return;
                        }
                        let s: f64 = vals.iter().zip(o).map(|(v, &off)| v.data()[off]).sum();
                        let p = (s - total - shift).exp();
                        let gp = g[o[m]] * p;
                        for (dj, &off) in d.iter_mut().zip(o) {
                            dj[off] += gp;
                        }
                    });
                    for (&j, dj) in inputs.iter().zip(&d) {
                        add_into(slot(&mut grads, &lens, j), dj);
                    }
                }
            }
        }
        Ok(Gradients { grads, lens })
    }
}

fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], lens: &[usize], id: NodeId) -> &'a mut Vec<f64> {
    grads[id.0].get_or_insert_with(|| vec![0.0; lens[id.0]])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
