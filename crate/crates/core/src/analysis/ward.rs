use serde::{Deserialize, Serialize};

use super::kmeans::sq_dist;
use crate::error::{Error, Result};
use crate::pipeline::Samples;

/// One agglomeration step. Leaves are `0..n`; merge `i` creates node `n + i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Tab-separated merge table with a header line.
    pub fn to_table(&self) -> String {
        let mut s = String::from("a\tb\theight\tsize\n");
        for m in &self.merges {
            s.push_str(&format!("{}\t{}\t{}\t{}\n", m.a, m.b, m.height, m.size));
        }
        s
    }
}

/// Ward linkage with Lance-Williams updates. `sizes` weights the initial
/// points; all ones when absent.
pub fn ward_agglomerate(points: &Samples, sizes: Option<&[usize]>) -> Result<Dendrogram> {
    let n = points.rows();
    if n < 2 {
        return Err(Error::invalid("Ward linkage needs at least two points"));
    }
    let mut size: Vec<f64> = match sizes {
        Some(s) if s.len() == n && s.iter().all(|v| *v > 0) => s.iter().map(|v| *v as f64).collect(),
        Some(s) => return Err(Error::shape(format!("{n} positive sizes"), s.len())),
        None => vec![1.0; n],
    };
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let w = 2.0 * size[i] * size[j] / (size[i] + size[j]);
            let d = (w * sq_dist(points.row(i), points.row(j))).sqrt();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    // slot i holds the cluster currently stored in row i
    let mut id: Vec<usize> = (0..n).collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut best = (0, 0, f64::INFINITY);
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                let d = dist[i * n + j];
                let key = (id[i].min(id[j]), id[i].max(id[j]));
                let best_key = (id[best.0].min(id[best.1]), id[best.0].max(id[best.1]));
                if d < best.2 || (d == best.2 && key < best_key) {
                    best = (i, j, d);
                }
            }
        }
        let (i, j, h) = best;
        let (ni, nj) = (size[i], size[j]);
        for &k in &active {
            if k == i || k == j {
                continue;
            }
            let nk = size[k];
            let (dki, dkj) = (dist[k * n + i], dist[k * n + j]);
            let v = ((nk + ni) * dki * dki + (nk + nj) * dkj * dkj - nk * h * h) / (nk + ni + nj);
            let d = v.max(0.0).sqrt();
            dist[k * n + i] = d;
            dist[i * n + k] = d;
        }
        merges.push(Merge {
            a: id[i].min(id[j]),
            b: id[i].max(id[j]),
            height: h,
            size: (ni + nj).round() as usize,
        });
        size[i] = ni + nj;
        id[i] = n + step;
        active.retain(|&k| k != j);
    }
    Ok(Dendrogram { leaves: n, merges })
}

/// Leaf labels after applying the first `leaves - m` merges, numbered by
/// first appearance.
pub fn cut(dendrogram: &Dendrogram, m: usize) -> Result<Vec<usize>> {
    let n = dendrogram.leaves;
    if m == 0 || m > n {
        return Err(Error::invalid(format!("cannot cut {n} leaves into {m} clusters")));
    }
    let mut parent: Vec<usize> = (0..2 * n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (step, merge) in dendrogram.merges.iter().take(n - m).enumerate() {
        let node = n + step;
        let ra = find(&mut parent, merge.a);
        let rb = find(&mut parent, merge.b);
        parent[ra] = node;
        parent[rb] = node;
    }
    let mut label_of_root = std::collections::HashMap::new();
    Ok((0..n)
        .map(|leaf| {
            let r = find(&mut parent, leaf);
            let next = label_of_root.len();
            *label_of_root.entry(r).or_insert(next)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_merge_at_distance() {
        let p = Samples::from_flat(vec![0.0, 0.0, 3.0, 4.0], 2).unwrap();
        let d = ward_agglomerate(&p, None).unwrap();
        assert_eq!(d.merges.len(), 1);
        assert!((d.merges[0].height - 5.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_points() {
        let p = Samples::from_flat(vec![0.0, 1.0, 10.0], 1).unwrap();
        let d = ward_agglomerate(&p, None).unwrap();
        assert_eq!((d.merges[0].a, d.merges[0].b), (0, 1));
        assert_eq!((d.merges[1].a, d.merges[1].b), (2, 3));
        // {0,1} vs {10}: sqrt(2*2*1/3) * 9.5
        assert!((d.merges[1].height - (4.0f64 / 3.0).sqrt() * 9.5).abs() < 1e-12);
    }

    #[test]
    fn cut_extremes_and_blobs() {
        let p = Samples::from_flat(vec![0.0, 0.1, 0.2, 9.0, 9.1, 9.3], 1).unwrap();
        let d = ward_agglomerate(&p, None).unwrap();
        assert_eq!(cut(&d, 6).unwrap(), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(cut(&d, 1).unwrap(), vec![0; 6]);
        assert_eq!(cut(&d, 2).unwrap(), vec![0, 0, 0, 1, 1, 1]);
        assert!(cut(&d, 0).is_err());
        for w in d.merges.windows(2) {
            assert!(w[1].height >= w[0].height);
        }
        assert!(d.to_table().starts_with("a\tb\theight\tsize\n"));
    }
}
