//! Linear probes on frozen features.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::Samples;

pub const PROBE_MAX_ITER: usize = 10_000;
pub const PROBE_GRAD_TOL: f64 = 1e-6;
const ZSCORE_FLOOR: f64 = 1e-12;

/// Per-feature standardization fitted on a training subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ZScore {
    pub fn fit(x: &Samples) -> Self {
        let (n, d) = (x.rows().max(1) as f64, x.cols());
        let mut mean = vec![0.0; d];
        for r in x.iter() {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in x.iter() {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > ZSCORE_FLOOR {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply(&self, x: &Samples) -> Samples {
        let mut out = Samples::empty(x.cols());
        for r in x.iter() {
            out.push(&self.apply_row(r)).expect("same width");
        }
        out
    }
}

/// One-vs-rest logistic regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticProbe {
    pub zscore: ZScore,
    pub classes: Vec<usize>,
    /// One weight row per class.
    pub weights: Samples,
    pub bias: Vec<f64>,
    pub l2: f64,
    pub iterations: Vec<usize>,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

// largest squared singular value of [x | 1] by power iteration
fn lipschitz(x: &Samples) -> f64 {
    let d = x.cols() + 1;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut u = vec![0.0; d];
        for r in x.iter() {
            let xv: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[d - 1];
            for (ui, a) in u.iter_mut().zip(r) {
                *ui += a * xv;
            }
            u[d - 1] += xv;
        }
        let norm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lambda = norm;
        v = u.into_iter().map(|a| a / norm).collect();
    }
    lambda
}

/// Minimizes `sum log-loss + l2/2 |w|^2` by fixed-step gradient descent.
fn fit_binary(x: &Samples, y: &[f64], l2: f64, step: f64) -> (Vec<f64>, f64, usize) {
    let d = x.cols();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for it in 0..PROBE_MAX_ITER {
        let mut gw: Vec<f64> = w.iter().map(|v| l2 * v).collect();
        let mut gb = 0.0;
        for (r, t) in x.iter().zip(y) {
            let p = sigmoid(r.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b);
            let e = p - t;
            gw.iter_mut().zip(r).for_each(|(g, a)| *g += e * a);
            gb += e;
        }
        let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if norm < PROBE_GRAD_TOL {
            return (w, b, it);
        }
        w.iter_mut().zip(&gw).for_each(|(v, g)| *v -= step * g);
        b -= step * gb;
    }
    (w, b, PROBE_MAX_ITER)
}

impl LogisticProbe {
    pub fn fit(x: &Samples, labels: &[usize], l2: f64) -> Result<Self> {
        if labels.len() != x.rows() {
            return Err(Error::shape(x.rows(), labels.len()));
        }
        if !(l2 >= 0.0) {
            return Err(Error::invalid("L2 strength must be non-negative"));
        }
        let mut classes = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::invalid("probe needs at least two classes"));
        }
        let zscore = ZScore::fit(x);
        let xs = zscore.apply(x);
        let step = 1.0 / (lipschitz(&xs) / 4.0 + l2);
        let mut weights = Samples::empty(x.cols());
        let mut bias = Vec::new();
        let mut iterations = Vec::new();
        for &c in &classes {
            let y: Vec<f64> = labels.iter().map(|l| (*l == c) as u8 as f64).collect();
            let (w, b, it) = fit_binary(&xs, &y, l2, step);
            weights.push(&w)?;
            bias.push(b);
            iterations.push(it);
        }
        Ok(Self {
            zscore,
            classes,
            weights,
            bias,
            l2,
            iterations,
        })
    }

    /// Class with the largest one-vs-rest score; ties go to the lower class.
    pub fn predict_row(&self, row: &[f64]) -> usize {
        let z = self.zscore.apply_row(row);
        let mut best = (0, f64::NEG_INFINITY);
        for (i, (w, b)) in self.weights.iter().zip(&self.bias).enumerate() {
            let s = w.iter().zip(&z).map(|(a, c)| a * c).sum::<f64>() + b;
            if s > best.1 {
                best = (i, s);
            }
        }
        self.classes[best.0]
    }

    pub fn predict(&self, x: &Samples) -> Vec<usize> {
        x.iter().map(|r| self.predict_row(r)).collect()
    }
}

/// F1 averaged over every class seen in either labeling.
pub fn macro_f1(truth: &[usize], predicted: &[usize]) -> f64 {
    let mut classes: Vec<usize> = truth.iter().chain(predicted).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.is_empty() {
        return 0.0;
    }
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let tp = truth
                .iter()
                .zip(predicted)
                .filter(|(t, p)| **t == c && **p == c)
                .count();
            let fp = truth
                .iter()
                .zip(predicted)
                .filter(|(t, p)| **t != c && **p == c)
                .count();
            let fn_ = truth
                .iter()
                .zip(predicted)
                .filter(|(t, p)| **t == c && **p != c)
                .count();
            if tp == 0 {
                0.0
            } else {
                2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
            }
        })
        .sum();
    total / classes.len() as f64
}

/// Train/test split with `n_per_class` training samples from every class.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn stratified_split(labels: &[usize], n_per_class: usize, seed: u64) -> Result<Split> {
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid("probe needs at least two classes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    for c in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.len() < n_per_class {
            return Err(Error::invalid(format!(
                "class {c} has {} samples, fewer than {n_per_class}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..n_per_class]);
    }
    train.sort_unstable();
    let test = (0..labels.len()).filter(|i| train.binary_search(i).is_err()).collect();
    Ok(Split { train, test })
}

pub fn fit_probe_classifier(
    features: &Samples,
    labels: &[usize],
    n_per_class: usize,
    seed: u64,
    l2: f64,
) -> Result<(LogisticProbe, Split)> {
    if labels.len() != features.rows() {
        return Err(Error::shape(features.rows(), labels.len()));
    }
    let split = stratified_split(labels, n_per_class, seed)?;
    let y: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
    let probe = LogisticProbe::fit(&features.select(&split.train), &y, l2)?;
    Ok((probe, split))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierProbeConfig {
    pub n_per_class: usize,
    pub repeats: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ClassifierProbeConfig {
    fn default() -> Self {
        Self {
            n_per_class: 30,
            repeats: 50,
            l2: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeScore {
    pub mean: f64,
    pub stderr: f64,
    pub scores: Vec<f64>,
}

impl ProbeScore {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let stderr = if scores.len() > 1 {
            (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, scores }
    }
}

/// Macro F1 on the held-out samples, repeated over seeded training subsets.
pub fn evaluate_classifier(features: &Samples, labels: &[usize], config: &ClassifierProbeConfig) -> Result<ProbeScore> {
    if config.repeats == 0 {
        return Err(Error::invalid("at least one repeat"));
    }
    let mut scores = Vec::with_capacity(config.repeats);
    for r in 0..config.repeats as u64 {
        let (probe, split) = fit_probe_classifier(
            features,
            labels,
            config.n_per_class,
            config.seed.wrapping_add(r),
            config.l2,
        )?;
        let test = if split.test.is_empty() {
            &split.train
        } else {
            &split.test
        };
        let truth: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
        let pred = probe.predict(&features.select(test));
        scores.push(macro_f1(&truth, &pred));
    }
    Ok(ProbeScore::from_scores(scores))
}

/// Closed-form ridge regression on z-scored features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeProbe {
    pub zscore: ZScore,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
}

impl RidgeProbe {
    pub fn fit(x: &Samples, targets: &[f64], lambda: f64) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        if targets.len() != n {
            return Err(Error::shape(n, targets.len()));
        }
        if n < 2 {
            return Err(Error::invalid("ridge probe needs at least two samples"));
        }
        if !(lambda >= 0.0) {
            return Err(Error::invalid("ridge strength must be non-negative"));
        }
        let zscore = ZScore::fit(x);
        let xs = zscore.apply(x);
        let bias = targets.iter().sum::<f64>() / n as f64;
        let m = DMatrix::from_row_slice(n, d, xs.as_flat());
        let y = DVector::from_iterator(n, targets.iter().map(|t| t - bias));
        let a = m.transpose() * &m + DMatrix::identity(d, d) * lambda;
        let rhs = m.transpose() * y;
        let w = match a.clone().cholesky() {
            Some(c) => c.solve(&rhs),
            None => a
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|e| Error::invalid(e.to_string()))?,
        };
        Ok(Self {
            zscore,
            weights: w.iter().copied().collect(),
            bias,
            lambda,
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.zscore
            .apply_row(row)
            .iter()
            .zip(&self.weights)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, x: &Samples) -> Vec<f64> {
        x.iter().map(|r| self.predict_row(r)).collect()
    }
}

/// Coefficient of determination; 0 for a constant truth.
pub fn r2_score(truth: &[f64], predicted: &[f64]) -> f64 {
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return 0.0;
    }
    let ss_res: f64 = truth.iter().zip(predicted).map(|(t, p)| (t - p).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressorProbeConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for RegressorProbeConfig {
    fn default() -> Self {
        Self {
            n_train: 10_000,
            n_test: 10_000,
            lambda: 1e4,
            seed: 0,
        }
    }
}

pub fn fit_probe_regressor(features: &Samples, targets: &[f64], lambda: f64) -> Result<RidgeProbe> {
    RidgeProbe::fit(features, targets, lambda)
}

/// Held-out R² on disjoint random train and test subsets.
pub fn evaluate_regressor(features: &Samples, targets: &[f64], config: &RegressorProbeConfig) -> Result<f64> {
    let n = features.rows();
    if targets.len() != n {
        return Err(Error::shape(n, targets.len()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_train = config.n_train.min(n / 2);
    let train = &order[..n_train];
    let test = &order[n_train..(n_train + config.n_test).min(n)];
    let y: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
    let probe = RidgeProbe::fit(&features.select(train), &y, config.lambda)?;
    let truth: Vec<f64> = test.iter().map(|&i| targets[i]).collect();
    Ok(r2_score(&truth, &probe.predict(&features.select(test))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, d: usize, seed: u64) -> Samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Samples::from_flat((0..n * d).map(|_| rng.sample(StandardNormal)).collect(), d).unwrap()
    }

    #[test]
    fn separable_blobs() {
        let mut x = gaussian(400, 3, 1);
        let labels: Vec<usize> = (0..400).map(|i| i % 2).collect();
        for i in 0..400 {
            x.row_mut(i)[0] += 8.0 * labels[i] as f64;
        }
        let cfg = ClassifierProbeConfig {
            repeats: 3,
            ..Default::default()
        };
        assert!(evaluate_classifier(&x, &labels, &cfg).unwrap().mean > 0.99);
    }

    #[test]
    fn one_point_per_class_fits_itself() {
        let x = Samples::from_flat(vec![0.0, 1.0, 3.0, -1.0, 2.0, 2.0], 2).unwrap();
        let p = LogisticProbe::fit(&x, &[0, 1, 2], 1.0).unwrap();
        assert_eq!(p.predict(&x), vec![0, 1, 2]);
    }

    #[test]
    fn affine_rescaling_keeps_decisions() {
        let x = gaussian(60, 4, 2);
        let labels: Vec<usize> = (0..60)
            .map(|i| if x.row(i)[1] + 0.3 * x.row(i)[2] > 0.0 { 1 } else { 0 })
            .collect();
        let mut y = x.clone();
        for i in 0..60 {
            let r = y.row_mut(i);
            r[0] = 3.0 * r[0] + 5.0;
            r[2] = -0.5 * r[2] + 1.0;
        }
        let a = LogisticProbe::fit(&x, &labels, 1.0).unwrap();
        let b = LogisticProbe::fit(&y, &labels, 1.0).unwrap();
        assert_eq!(a.predict(&x), b.predict(&y));
    }

    #[test]
    fn f1_counts() {
        assert_eq!(macro_f1(&[0, 0, 1, 1], &[0, 0, 1, 1]), 1.0);
        // class 0: tp 1 fp 0 fn 1 -> 2/3; class 1: tp 2 fp 1 fn 0 -> 4/5
        let v = macro_f1(&[0, 0, 1, 1], &[0, 1, 1, 1]);
        assert!((v - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn exact_linear_target() {
        let x = gaussian(200, 5, 3);
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] - r[3] + 0.5 * r[4] + 7.0).collect();
        let cfg = RegressorProbeConfig {
            n_train: 100,
            n_test: 100,
            lambda: 0.0,
            seed: 1,
        };
        assert!((evaluate_regressor(&x, &y, &cfg).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_target_scores_zero() {
        assert_eq!(r2_score(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]), 0.0);
    }
}
