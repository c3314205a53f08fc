use crate::error::{Error, Result};
use crate::grid::Grid;

/// Mean IoU of cluster labels between adjacent sections, in percent.
/// Per pair the mean runs over clusters present on either foreground.
pub fn cross_section_iou(labels: &[Grid<usize>], masks: &[Grid<bool>]) -> Result<f64> {
    if labels.len() < 2 {
        return Err(Error::invalid("cross-section IoU needs at least two sections"));
    }
    if masks.len() != labels.len() {
        return Err(Error::shape(labels.len(), masks.len()));
    }
    let dims = labels[0].dims();
    for (l, m) in labels.iter().zip(masks) {
        if l.dims() != dims || m.dims() != dims {
            return Err(Error::shape(
                format!("{dims:?}"),
                format!("{:?} / {:?}", l.dims(), m.dims()),
            ));
        }
    }
    let mut total = 0.0;
    for s in 0..labels.len() - 1 {
        total += pair_iou(&labels[s], &masks[s], &labels[s + 1], &masks[s + 1]);
    }
    Ok(100.0 * total / (labels.len() - 1) as f64)
}

fn pair_iou(la: &Grid<usize>, ma: &Grid<bool>, lb: &Grid<usize>, mb: &Grid<bool>) -> f64 {
    use std::collections::BTreeMap;
    // cluster -> (intersection, union)
    let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for i in 0..la.len() {
        let a = ma.as_slice()[i].then(|| la.as_slice()[i]);
        let b = mb.as_slice()[i].then(|| lb.as_slice()[i]);
        match (a, b) {
            (Some(x), Some(y)) if x == y => {
                let e = counts.entry(x).or_default();
                e.0 += 1;
                e.1 += 1;
            }
            _ => {
                for c in [a, b].into_iter().flatten() {
                    counts.entry(c).or_default().1 += 1;
                }
            }
        }
    }
    if counts.is_empty() {
        return 0.0;
    }
    counts.values().map(|(i, u)| *i as f64 / *u as f64).sum::<f64>() / counts.len() as f64
}
