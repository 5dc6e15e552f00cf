//! Deterministic k-nearest-neighbor indices over row features.

/// For each of the n rows of `feats` (n x d, row-major), the k nearest
/// other rows by squared Euclidean distance, nearest first. Self is
/// excluded; ties resolve to the lower index. Panics if k >= n.
pub fn knn_indices(feats: &[f64], d: usize, k: usize) -> Vec<usize> {
    assert!(d > 0 && feats.len() % d == 0);
    let n = feats.len() / d;
    assert!(k >= 1 && k < n, "knn needs 1 <= k < n (k={k}, n={n})");
    let row = |i: usize| &feats[i * d..(i + 1) * d];
    let mut out = Vec::with_capacity(n * k);
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        dists.clear();
        let ri = row(i);
        for j in 0..n {
            if j == i {
                continue;
            }
            let rj = row(j);
            let mut acc = 0.0;
            for c in 0..d {
                let t = ri[c] - rj[c];
                acc += t * t;
            }
            dists.push((acc, j));
        }
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        out.extend(dists.iter().take(k).map(|&(_, j)| j));
    }
    out
}
