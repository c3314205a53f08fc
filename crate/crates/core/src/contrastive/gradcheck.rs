//! Central finite-difference check of the analytic gradients.

use super::encoder::{forward, EncoderConfig, EncoderParams};
use super::graph::Graph;
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Parameter name and element index of the largest error.
    pub worst: (String, usize),
    /// Elements whose step crossed a rectifier kink and were redone with a smaller step.
    pub kink_retries: usize,
    /// Elements that still crossed a kink at the smallest step.
    pub kink_skipped: usize,
}

fn loss_and_pattern(
    config: &EncoderConfig,
    params: &EncoderParams,
    x: &Tensor,
    pairs: &[(usize, usize)],
    tau: f64,
) -> Result<(f64, Vec<bool>)> {
    let mut g = Graph::new();
    let fw = forward(&mut g, config, params, x.clone())?;
    let (_, report) = g.info_nce(fw.projection, pairs, tau)?;
    Ok((report.loss, g.relu_pattern()))
}

/// Compare every parameter's analytic gradient with a central difference of
/// step `h`. Errors are `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(
    config: &EncoderConfig,
    params: &EncoderParams,
    x: &Tensor,
    pairs: &[(usize, usize)],
    tau: f64,
    h: f64,
    floor: f64,
) -> Result<GradCheckReport> {
    let mut g = Graph::new();
    let fw = forward(&mut g, config, params, x.clone())?;
    let (loss, _) = g.info_nce(fw.projection, pairs, tau)?;
    let grads = g.backward(loss)?;
    let base_pattern = g.relu_pattern();

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: (String::new(), 0),
        kink_retries: 0,
        kink_skipped: 0,
    };
    let mut probe = params.clone();
    for (t, var) in fw.params.iter().enumerate() {
        let analytic = grads.get(*var);
        for i in 0..probe.tensors[t].len() {
            let original = probe.tensors[t].data[i];
            let mut step = h;
            let mut numeric = None;
            for attempt in 0..3 {
                probe.tensors[t].data[i] = original + step;
                let (lp, pp) = loss_and_pattern(config, &probe, x, pairs, tau)?;
                probe.tensors[t].data[i] = original - step;
                let (lm, pm) = loss_and_pattern(config, &probe, x, pairs, tau)?;
                if pp == base_pattern && pm == base_pattern {
                    numeric = Some((lp - lm) / (2.0 * step));
                    break;
                }
                if attempt == 0 {
                    report.kink_retries += 1;
                }
                step *= 0.01;
            }
            probe.tensors[t].data[i] = original;
            let Some(numeric) = numeric else {
                report.kink_skipped += 1;
                continue;
            };
            let a = analytic.data[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (params.names[t].clone(), i);
            }
        }
    }
    Ok(report)
}
