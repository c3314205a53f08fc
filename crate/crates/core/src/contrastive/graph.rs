//! A small reverse-mode tape over whole tensors.

use super::ops::{self, LossReport};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    },
    Relu(Var),
    GlobalAvgPool(Var),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    // dL/dz is produced together with the loss value
    InfoNce {
        z: Var,
        dz: Tensor,
    },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records operations as they are evaluated; `backward` replays them in reverse.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let out = ops::conv2d(self.value(x), self.value(w), self.value(b), stride, pad)?;
        Ok(self.push(out, Op::Conv2d { x, w, b, stride, pad }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = ops::relu(self.value(x));
        self.push(out, Op::Relu(x))
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let out = ops::global_avg_pool(self.value(x))?;
        Ok(self.push(out, Op::GlobalAvgPool(x)))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = ops::linear(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(out, Op::Linear { x, w, b }))
    }

    /// Scalar InfoNCE loss node.
    pub fn info_nce(&mut self, z: Var, pairs: &[(usize, usize)], tau: f64) -> Result<(Var, LossReport)> {
        let (report, dz) = ops::info_nce(self.value(z), pairs, tau)?;
        let loss = Tensor::from_vec(&[1], vec![report.loss])?;
        Ok((self.push(loss, Op::InfoNce { z, dz }), report))
    }

    /// Sign pattern of every rectifier input, in tape order.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(x),
                _ => None,
            })
            .flat_map(|x| self.value(x).data.iter().map(|v| *v > 0.0))
            .collect()
    }

    /// Gradients of scalar node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("scalar loss", format!("{:?}", self.value(loss).shape)));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::from_vec(&[1], vec![1.0])?);
        let accumulate = |grads: &mut Vec<Option<Tensor>>, v: Var, g: Tensor| match &mut grads[v.0] {
            Some(t) => t.add_assign(&g),
            slot => *slot = Some(g),
        };
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Conv2d { x, w, b, stride, pad } => {
                    let (dx, dw, db) =
                        ops::conv2d_backward(self.value(*x), self.value(*w), self.value(*b), *stride, *pad, &g)?;
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                    accumulate(&mut grads, *b, db);
                }
                Op::Relu(x) => {
                    let dx = ops::relu_backward(self.value(*x), &g);
                    accumulate(&mut grads, *x, dx);
                }
                Op::GlobalAvgPool(x) => {
                    let dx = ops::global_avg_pool_backward(self.value(*x), &g);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Linear { x, w, b } => {
                    let (dx, dw, db) = ops::linear_backward(self.value(*x), self.value(*w), &g);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                    accumulate(&mut grads, *b, db);
                }
                Op::InfoNce { z, dz } => {
                    let mut dz = dz.clone();
                    dz.data.iter_mut().for_each(|v| *v *= g.data[0]);
                    accumulate(&mut grads, *z, dz);
                }
            }
            grads[i] = Some(g);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.unwrap_or_else(|| n.value.zeros_like()))
            .collect();
        Ok(Gradients { grads })
    }
}

/// Result of [`Graph::backward`]; nodes off every path to the loss get zeros.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> &Tensor {
        &self.grads[v.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(&[4, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, -1.0, 0.5]).unwrap());
        let unused = g.leaf(Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap());
        let w = g.leaf(Tensor::from_vec(&[2, 2], vec![1.0, 0.2, -0.3, 1.0]).unwrap());
        let b = g.leaf(Tensor::zeros(&[2]));
        let z = g.linear(x, w, b).unwrap();
        let (loss, _) = g.info_nce(z, &[(0, 1), (2, 3)], 0.5).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(unused).data.iter().all(|v| *v == 0.0));
        assert!(grads.get(w).norm() > 0.0);
    }

    #[test]
    fn input_gradient_has_input_shape() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(&[4, 1], vec![1.0, 2.0, -1.0, 3.0]).unwrap());
        let w = g.leaf(Tensor::from_vec(&[2, 1], vec![1.0, -1.0]).unwrap());
        let b = g.leaf(Tensor::from_vec(&[2], vec![0.1, 0.2]).unwrap());
        let z = g.linear(x, w, b).unwrap();
        let (loss, _) = g.info_nce(z, &[(0, 1), (2, 3)], 1.0).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).shape, vec![4, 1]);
        assert!(grads.get(x).all_finite());
    }
}
