//! Binned CART trees shared by the forest (Gini on class indicators) and the
//! boosted model (squared error on residuals).
//!
//! Both criteria reduce to maximizing `Σ_k S_k(L)²/n_L + Σ_k S_k(R)²/n_R`
//! where `S_k` sums target channel `k` over a child: with one-hot channels
//! this is Gini gain, with a single residual channel it is variance
//! reduction.

use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;

/// At most this many bins per feature.
pub const MAX_BINS: usize = 256;

/// Per-feature cut points learned from training rows. A value `x` falls in
/// bin `b` where `cuts[b-1] < x <= cuts[b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Binner {
    cuts: Vec<Vec<f64>>,
}

impl Binner {
    /// `column(j)` yields feature `j` over the training rows.
    pub fn fit(d: usize, column: impl Fn(usize) -> Vec<f64>) -> Self {
        let cuts = (0..d)
            .map(|j| {
                let mut v = column(j);
                v.sort_by(f64::total_cmp);
                v.dedup();
                if v.len() <= MAX_BINS {
                    v.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect()
                } else {
                    let mut c: Vec<f64> = (1..MAX_BINS).map(|q| v[q * v.len() / MAX_BINS - 1]).collect();
                    c.dedup();
                    c.retain(|x| *x < *v.last().unwrap());
                    c
                }
            })
            .collect();
        Self { cuts }
    }

    pub fn n_bins(&self, j: usize) -> usize {
        self.cuts[j].len() + 1
    }

    pub fn bin(&self, j: usize, x: f64) -> u8 {
        self.cuts[j].partition_point(|c| *c < x) as u8
    }

    /// Upper edge of bin `b`, used as the split threshold.
    pub fn threshold(&self, j: usize, b: usize) -> f64 {
        self.cuts[j][b]
    }
}

/// Column-major bin indices of the training rows.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    pub binner: Binner,
    pub n: usize,
    pub d: usize,
    bins: Vec<u8>,
}

impl BinnedMatrix {
    /// `x` is row-major `n × d`.
    pub fn new(x: &[f64], n: usize, d: usize) -> Self {
        let binner = Binner::fit(d, |j| (0..n).map(|i| x[i * d + j]).collect());
        let mut bins = vec![0u8; n * d];
        for j in 0..d {
            for i in 0..n {
                bins[j * n + i] = binner.bin(j, x[i * d + j]);
            }
        }
        Self { binner, n, d, bins }
    }

    fn column(&self, j: usize) -> &[u8] {
        &self.bins[j * self.n..(j + 1) * self.n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, x: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { value } => return value,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    /// Features used by any split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

pub struct GrowParams<'a> {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features drawn per node; `None` considers all.
    pub max_features: Option<usize>,
    pub rng: Option<&'a mut SplitMix64>,
}

/// Grows a tree over `rows` (duplicates allowed) of `data`. `channels` holds
/// `k` target values per training row; `leaf` turns a node's rows into its
/// stored value.
pub fn grow(
    data: &BinnedMatrix,
    rows: Vec<u32>,
    channels: &[f64],
    k: usize,
    mut params: GrowParams<'_>,
    leaf: &dyn Fn(&[u32]) -> Vec<f64>,
) -> Tree {
    let mut tree = Tree { nodes: Vec::new() };
    let mut features: Vec<usize> = (0..data.d).collect();
    let mut hist = vec![0.0; MAX_BINS * (k + 1)];
    // Stack of (node slot, rows, depth).
    let mut stack = vec![(0usize, rows, 0usize)];
    tree.nodes.push(Node::Leaf { value: Vec::new() });
    while let Some((slot, rows, depth)) = stack.pop() {
        let split = if depth < params.max_depth && rows.len() >= 2 * params.min_leaf.max(1) {
            best_split(data, &rows, channels, k, &mut features, &mut hist, &mut params)
        } else {
            None
        };
        match split {
            Some((feature, bin)) => {
                let col = data.column(feature);
                let (l, r): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&i| (col[i as usize] as usize) <= bin);
                let (li, ri) = (tree.nodes.len(), tree.nodes.len() + 1);
                tree.nodes.push(Node::Leaf { value: Vec::new() });
                tree.nodes.push(Node::Leaf { value: Vec::new() });
                tree.nodes[slot] =
                    Node::Split { feature, threshold: data.binner.threshold(feature, bin), left: li, right: ri };
                stack.push((ri, r, depth + 1));
                stack.push((li, l, depth + 1));
            }
            None => tree.nodes[slot] = Node::Leaf { value: leaf(&rows) },
        }
    }
    tree
}

/// Best `(feature, bin)` by the channel-sum criterion, or `None` if no split
/// improves on the parent. Candidates are scanned in drawn-feature order then
/// ascending bin; the first strict maximum wins.
fn best_split(
    data: &BinnedMatrix,
    rows: &[u32],
    channels: &[f64],
    k: usize,
    features: &mut [usize],
    hist: &mut [f64],
    params: &mut GrowParams<'_>,
) -> Option<(usize, usize)> {
    let w = k + 1;
    let n = rows.len() as f64;
    let mut total = vec![0.0; k];
    for &i in rows {
        for c in 0..k {
            total[c] += channels[i as usize * k + c];
        }
    }
    let parent: f64 = total.iter().map(|s| s * s).sum::<f64>() / n;
    let m = params.max_features.unwrap_or(data.d).min(data.d);
    if let Some(rng) = params.rng.as_deref_mut() {
        // Partial Fisher-Yates: the first `m` slots become the draw.
        for i in 0..m {
            let j = i + rng.below(data.d - i);
            features.swap(i, j);
        }
    }
    let min_leaf = params.min_leaf.max(1) as f64;
    let mut best: Option<(usize, usize)> = None;
    let mut best_score = parent + 1e-12 * parent.abs().max(1.0);
    let mut left = vec![0.0; k];
    for &f in &features[..m] {
        let nb = data.binner.n_bins(f);
        if nb < 2 {
            continue;
        }
        let hist = &mut hist[..nb * w];
        hist.fill(0.0);
        let col = data.column(f);
        for &i in rows {
            let h = &mut hist[col[i as usize] as usize * w..][..w];
            h[0] += 1.0;
            for c in 0..k {
                h[c + 1] += channels[i as usize * k + c];
            }
        }
        left.fill(0.0);
        let mut nl = 0.0;
        for b in 0..nb - 1 {
            let h = &hist[b * w..][..w];
            nl += h[0];
            for c in 0..k {
                left[c] += h[c + 1];
            }
            let nr = n - nl;
            if nl < min_leaf {
                continue;
            }
            if nr < min_leaf {
                break;
            }
            let mut score = 0.0;
            let mut sr = 0.0;
            for c in 0..k {
                score += left[c] * left[c];
                let r = total[c] - left[c];
                sr += r * r;
            }
            score = score / nl + sr / nr;
            if score > best_score {
                best_score = score;
                best = Some((f, b));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binning_few_values_uses_midpoints() {
        let b = Binner::fit(1, |_| vec![3.0, 1.0, 2.0, 2.0]);
        assert_eq!(b.n_bins(0), 3);
        assert_eq!(b.threshold(0, 0), 1.5);
        assert_eq!((b.bin(0, 1.0), b.bin(0, 1.5), b.bin(0, 1.6), b.bin(0, 9.0)), (0, 0, 1, 2));
    }

    #[test]
    fn binning_many_values_caps_bins() {
        let b = Binner::fit(1, |_| (0..10_000).map(|i| i as f64).collect());
        assert!(b.n_bins(0) <= MAX_BINS);
        assert!(b.n_bins(0) > 200);
    }

    #[test]
    fn pure_split_on_one_feature() {
        // Feature 1 separates classes; feature 0 is noise.
        let x = [0.3, 0.0, 0.1, 0.1, 0.9, 0.2, 0.5, 1.0, 0.2, 1.1, 0.7, 0.9];
        let labels = [0, 0, 0, 1, 1, 1];
        let data = BinnedMatrix::new(&x, 6, 2);
        let mut ch = vec![0.0; 12];
        for (i, l) in labels.iter().enumerate() {
            ch[i * 2 + l] = 1.0;
        }
        let leaf = |rows: &[u32]| {
            let mut c = vec![0.0; 2];
            for &r in rows {
                c[labels[r as usize]] += 1.0;
            }
            c
        };
        let t = grow(
            &data,
            (0..6).collect(),
            &ch,
            2,
            GrowParams { max_depth: 5, min_leaf: 1, max_features: None, rng: None },
            &leaf,
        );
        assert_eq!(t.depth(), 1);
        assert_eq!(t.used_features(), vec![1]);
        for i in 0..6 {
            let v = t.leaf_value(&x[i * 2..i * 2 + 2]);
            assert_eq!(v[labels[i]], 3.0);
        }
    }
}
