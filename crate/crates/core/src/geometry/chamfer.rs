use super::types::{dist_sq, sub, PointSet, Vec3};
use crate::error::{Error, Result};

/// Which per-pair distance feeds the symmetric Chamfer sum.
///
/// `L1Point` uses Euclidean point distances (the plain CD metric);
/// `SquaredL2Point` uses squared Euclidean distances (the smooth variant
/// used by the prediction-refinement loss).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChamferMode {
    L1Point,
    SquaredL2Point,
}

fn nearest(point: Vec3, set: &[Vec3]) -> (usize, f64) {
    // Ties broken by lowest index: strict `<` keeps the first minimum.
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (j, q) in set.iter().enumerate() {
        let d = dist_sq(point, *q);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, best_d)
}

fn directed_mean(from: &[Vec3], to: &[Vec3], mode: ChamferMode) -> (f64, Vec<usize>) {
    let mut sum = 0.0;
    let mut idx = Vec::with_capacity(from.len());
    for p in from {
        let (j, d_sq) = nearest(*p, to);
        idx.push(j);
        sum += match mode {
            ChamferMode::L1Point => d_sq.sqrt(),
            ChamferMode::SquaredL2Point => d_sq,
        };
    }
    (sum / from.len() as f64, idx)
}

/// Symmetric Chamfer distance: `mean_a min_b d(a,b) + mean_b min_a d(a,b)`.
///
/// Means (not sums) per direction, so the value does not scale with the
/// point counts of either set.
pub fn chamfer_distance(a: &PointSet, b: &PointSet, mode: ChamferMode) -> Result<f64> {
    validate(a, b)?;
    let (fwd, _) = directed_mean(&a.points, &b.points, mode);
    let (bwd, _) = directed_mean(&b.points, &a.points, mode);
    Ok(fwd + bwd)
}

fn validate(a: &PointSet, b: &PointSet) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("chamfer distance needs non-empty point sets"));
    }
    for p in a.points.iter().chain(b.points.iter()) {
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("chamfer distance got a non-finite coordinate"));
        }
    }
    Ok(())
}

/// Chamfer distance together with its analytic gradient with respect to
/// every coordinate of both sets (nearest-neighbour assignments treated as
/// locally constant, which is exact wherever they are unique).
pub fn chamfer_distance_with_grad(
    a: &PointSet,
    b: &PointSet,
    mode: ChamferMode,
) -> Result<(f64, Vec<Vec3>, Vec<Vec3>)> {
    validate(a, b)?;
    let (fwd, idx_ab) = directed_mean(&a.points, &b.points, mode);
    let (bwd, idx_ba) = directed_mean(&b.points, &a.points, mode);

    let mut ga = vec![[0.0; 3]; a.len()];
    let mut gb = vec![[0.0; 3]; b.len()];
    let na = a.len() as f64;
    let nb = b.len() as f64;

    // d/dp of |p - q| is (p - q)/|p - q|; of |p - q|^2 is 2(p - q).
    let accumulate = |p: Vec3, q: Vec3, w: f64, gp: &mut Vec3, gq: &mut Vec3| {
        let diff = sub(p, q);
        let g = match mode {
            ChamferMode::L1Point => {
                let n = (diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]).sqrt();
                if n == 0.0 {
                    [0.0; 3]
                } else {
                    [diff[0] / n, diff[1] / n, diff[2] / n]
                }
            }
            ChamferMode::SquaredL2Point => [2.0 * diff[0], 2.0 * diff[1], 2.0 * diff[2]],
        };
        for k in 0..3 {
            gp[k] += w * g[k];
            gq[k] -= w * g[k];
        }
    };

    for (i, &j) in idx_ab.iter().enumerate() {
        let (pa, pb) = (a.points[i], b.points[j]);
        let (mut gi, mut gj) = (ga[i], gb[j]);
        accumulate(pa, pb, 1.0 / na, &mut gi, &mut gj);
        ga[i] = gi;
        gb[j] = gj;
    }
    for (j, &i) in idx_ba.iter().enumerate() {
        let (pb, pa) = (b.points[j], a.points[i]);
        let (mut gj, mut gi) = (gb[j], ga[i]);
        accumulate(pb, pa, 1.0 / nb, &mut gj, &mut gi);
        gb[j] = gj;
        ga[i] = gi;
    }

    Ok((fwd + bwd, ga, gb))
}
