//! Convolutional encoder `f` and two-layer projection head `g`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::ops;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Layer sizes of the encoder and head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub in_channels: usize,
    /// Output channels of each stride-2 convolution block.
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub hidden: usize,
    pub head_hidden: usize,
    pub head_out: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            conv_channels: vec![8, 16, 32],
            kernel: 3,
            hidden: 64,
            head_hidden: 23,
            head_out: 8,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0
            || self.conv_channels.is_empty()
            || self.conv_channels.contains(&0)
            || self.kernel % 2 == 0
            || self.hidden == 0
            || self.head_hidden == 0
            || self.head_out == 0
        {
            return Err(Error::invalid("encoder layers need positive sizes and an odd kernel"));
        }
        Ok(())
    }

    /// Parameter names and shapes in a fixed order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let k = self.kernel;
        let mut out = Vec::new();
        let mut c = self.in_channels;
        for (i, &o) in self.conv_channels.iter().enumerate() {
            out.push((format!("conv{}.weight", i + 1), vec![o, c, k, k]));
            out.push((format!("conv{}.bias", i + 1), vec![o]));
            c = o;
        }
        out.push(("fc.weight".into(), vec![self.hidden, c]));
        out.push(("fc.bias".into(), vec![self.hidden]));
        out.push(("head1.weight".into(), vec![self.head_hidden, self.hidden]));
        out.push(("head1.bias".into(), vec![self.head_hidden]));
        out.push(("head2.weight".into(), vec![self.head_out, self.head_hidden]));
        out.push(("head2.bias".into(), vec![self.head_out]));
        out
    }
}

/// Named parameter tensors in [`EncoderConfig::parameter_shapes`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl EncoderParams {
    /// He fan-in normal weights, zero biases.
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, shape) in config.parameter_shapes() {
            let mut t = Tensor::zeros(&shape);
            if shape.len() > 1 {
                let fan_in: usize = shape[1..].iter().product();
                let normal =
                    Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
                t.data.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(Self { names, tensors })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn check(&self, config: &EncoderConfig) -> Result<()> {
        let shapes = config.parameter_shapes();
        if shapes.len() != self.tensors.len() {
            return Err(Error::shape(shapes.len(), self.tensors.len()));
        }
        for ((name, shape), (n, t)) in shapes.iter().zip(self.names.iter().zip(&self.tensors)) {
            if name != n || *shape != t.shape {
                return Err(Error::shape(format!("{name} {shape:?}"), format!("{n} {:?}", t.shape)));
            }
        }
        Ok(())
    }
}

/// Tape handles of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub params: Vec<Var>,
    pub hidden: Var,
    pub projection: Var,
}

/// Record `h = f(x)` and `z = g(h)` for an `[N, C, H, W]` batch.
pub fn forward(graph: &mut Graph, config: &EncoderConfig, params: &EncoderParams, x: Tensor) -> Result<Forward> {
    params.check(config)?;
    if x.shape.len() != 4 || x.shape[1] != config.in_channels {
        return Err(Error::shape(
            format!("[N, {}, H, W]", config.in_channels),
            format!("{:?}", x.shape),
        ));
    }
    let vars: Vec<Var> = params.tensors.iter().map(|t| graph.leaf(t.clone())).collect();
    let pad = config.kernel / 2;
    let mut h = graph.leaf(x);
    let blocks = config.conv_channels.len();
    for i in 0..blocks {
        h = graph.conv2d(h, vars[2 * i], vars[2 * i + 1], 2, pad)?;
        h = graph.relu(h);
    }
    let pooled = graph.global_avg_pool(h)?;
    let hidden = graph.linear(pooled, vars[2 * blocks], vars[2 * blocks + 1])?;
    let a = graph.linear(hidden, vars[2 * blocks + 2], vars[2 * blocks + 3])?;
    let a = graph.relu(a);
    let projection = graph.linear(a, vars[2 * blocks + 4], vars[2 * blocks + 5])?;
    Ok(Forward {
        params: vars,
        hidden,
        projection,
    })
}

/// Hidden representation only, without recording a tape.
pub fn encode(config: &EncoderConfig, params: &EncoderParams, x: &Tensor) -> Result<Tensor> {
    params.check(config)?;
    let pad = config.kernel / 2;
    let blocks = config.conv_channels.len();
    let t = &params.tensors;
    let mut h = ops::relu(&ops::conv2d(x, &t[0], &t[1], 2, pad)?);
    for i in 1..blocks {
        h = ops::relu(&ops::conv2d(&h, &t[2 * i], &t[2 * i + 1], 2, pad)?);
    }
    ops::linear(&ops::global_avg_pool(&h)?, &t[2 * blocks], &t[2 * blocks + 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sizes() {
        let cfg = EncoderConfig::default();
        let p = EncoderParams::init(&cfg, 0).unwrap();
        assert_eq!(p.names.len(), 12);
        assert_eq!(p.get("conv2.weight").unwrap().shape, vec![16, 8, 3, 3]);
        assert_eq!(p.get("head2.weight").unwrap().shape, vec![8, 23]);
    }

    #[test]
    fn zero_input_through_zero_head_gives_bias() {
        let cfg = EncoderConfig::default();
        let mut p = EncoderParams::init(&cfg, 1).unwrap();
        let i = p.names.iter().position(|n| n == "head2.weight").unwrap();
        p.tensors[i].data.fill(0.0);
        p.tensors[i + 1].data = (0..8).map(|v| v as f64 * 0.1).collect();
        let mut g = Graph::new();
        let fw = forward(&mut g, &cfg, &p, Tensor::zeros(&[2, 3, 16, 16])).unwrap();
        let z = g.value(fw.projection);
        assert_eq!(z.row(0), &p.tensors[i + 1].data[..]);
        assert_eq!(z.row(1), &p.tensors[i + 1].data[..]);
    }

    #[test]
    fn tape_and_plain_encoders_agree() {
        let cfg = EncoderConfig::default();
        let p = EncoderParams::init(&cfg, 2).unwrap();
        let x = Tensor::from_vec(
            &[2, 3, 16, 16],
            (0..1536).map(|v| ((v * 37) % 101) as f64 / 50.0 - 1.0).collect(),
        )
        .unwrap();
        let mut g = Graph::new();
        let fw = forward(&mut g, &cfg, &p, x.clone()).unwrap();
        assert_eq!(g.value(fw.hidden), &encode(&cfg, &p, &x).unwrap());
    }
}
