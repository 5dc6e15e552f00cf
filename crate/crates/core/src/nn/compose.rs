//! Composite graph builders: layers and losses assembled from primitive
//! ops. The chamfer builder mirrors `geometry::chamfer_distance` (sum of
//! the two directed means, same tie rule) so the two agree to the bit on
//! identical inputs.

use super::graph::Tensor;
use crate::geometry::ChamferMode;

/// x [m,k] -> x W + b with W [k,n], b [n].
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    x.matmul(w).add_row(b)
}

/// Mean over rows of squared row distance: (1/m) sum_i |a_i - b_i|^2.
pub fn mse_rows(a: &Tensor, b: &Tensor) -> Tensor {
    a.sub(b).square().sum_axis1().mean()
}

/// Nearest row of `b` for every row of `a`; ties keep the lowest index.
fn nearest_rows(a: &[f64], b: &[f64], d: usize) -> Vec<usize> {
    let n = a.len() / d;
    let m = b.len() / d;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let pa = &a[i * d..(i + 1) * d];
        let mut best = f64::INFINITY;
        let mut best_j = 0usize;
        for j in 0..m {
            let pb = &b[j * d..(j + 1) * d];
            let mut dist = 0.0;
            for c in 0..d {
                let t = pa[c] - pb[c];
                dist += t * t;
            }
            if dist < best {
                best = dist;
                best_j = j;
            }
        }
        out.push(best_j);
    }
    out
}

/// Differentiable chamfer between two point sets [n,3] and [m,3].
///
/// Matches are fixed at the current values (the standard chamfer
/// subgradient); distances then flow through the graph.
pub fn chamfer(a: &Tensor, b: &Tensor, mode: ChamferMode) -> Tensor {
    assert_eq!(a.shape().len(), 2, "chamfer expects [n,d] tensors");
    assert_eq!(a.shape()[1], b.shape()[1], "chamfer dim mismatch");
    let d = a.shape()[1];
    let va = a.value();
    let vb = b.value();
    let idx_ab = nearest_rows(&va, &vb, d);
    let idx_ba = nearest_rows(&vb, &va, d);

    let directed = |from: &Tensor, to: &Tensor, idx: &[usize]| -> Tensor {
        let diff = from.sub(&to.gather_rows(idx));
        let sq = diff.square().sum_axis1();
        match mode {
            ChamferMode::SquaredL2Point => sq.mean(),
            ChamferMode::L1Point => sq.sqrt().mean(),
        }
    };
    directed(a, b, &idx_ab).add(&directed(b, a, &idx_ba))
}
