use super::types::{dist_sq, PointSet, Vec3};
use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Landmark-driven radial-basis warp: thin-plate kernel `r^3` in 3D plus an
/// affine polynomial term, solved so every source landmark maps exactly onto
/// its target landmark.
#[derive(Debug, Clone)]
pub struct RbfWarp {
    sources: Vec<Vec3>,
    /// Per-landmark kernel weights, one 3-vector per landmark.
    weights: Vec<Vec3>,
    /// Affine part: constant + linear in (x, y, z), one 3-vector per row.
    affine: [Vec3; 4],
}

fn kernel(r_sq: f64) -> f64 {
    // r^3 computed from r^2 to avoid an extra sqrt on the hot path.
    r_sq * r_sq.sqrt()
}

impl RbfWarp {
    /// Fit the interpolant mapping `source` landmarks onto `target` landmarks.
    pub fn fit(source: &PointSet, target: &PointSet) -> Result<Self> {
        if source.len() != target.len() {
            return Err(Error::invalid(format!(
                "landmark count mismatch: {} source vs {} target",
                source.len(),
                target.len()
            )));
        }
        let m = source.len();
        if m < 4 {
            return Err(Error::invalid(format!("need at least 4 landmarks, got {m}")));
        }

        // [ K  P ] [w]   [t]
        // [ P' 0 ] [a] = [0]   with K_ij = |s_i - s_j|^3, P_i = (1, x, y, z)
        let n = m + 4;
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..m {
            for j in 0..m {
                a[(i, j)] = kernel(dist_sq(source.points[i], source.points[j]));
            }
            a[(i, m)] = 1.0;
            a[(m, i)] = 1.0;
            for k in 0..3 {
                a[(i, m + 1 + k)] = source.points[i][k];
                a[(m + 1 + k, i)] = source.points[i][k];
            }
        }

        let mut rhs = DMatrix::<f64>::zeros(n, 3);
        for i in 0..m {
            for k in 0..3 {
                rhs[(i, k)] = target.points[i][k];
            }
        }

        let lu = a.clone().full_piv_lu();
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Degenerate("singular RBF interpolation system (coplanar or duplicated landmarks)".into()))?;

        // Guard against near-singular systems that LU still "solves": the
        // interpolation must reproduce the landmarks.
        let residual = (&a * &sol - &rhs).abs().max();
        let scale = rhs.abs().max().max(1.0);
        if !residual.is_finite() || residual > 1e-6 * scale {
            return Err(Error::Degenerate(format!(
                "RBF system is numerically singular (residual {residual:.3e})"
            )));
        }

        let weights = (0..m).map(|i| [sol[(i, 0)], sol[(i, 1)], sol[(i, 2)]]).collect();
        let mut affine = [[0.0; 3]; 4];
        for r in 0..4 {
            for k in 0..3 {
                affine[r][k] = sol[(m + r, k)];
            }
        }

        Ok(Self {
            sources: source.points.clone(),
            weights,
            affine,
        })
    }

    /// Warp a single point.
    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        let mut out = [
            self.affine[0][0] + self.affine[1][0] * p[0] + self.affine[2][0] * p[1] + self.affine[3][0] * p[2],
            self.affine[0][1] + self.affine[1][1] * p[0] + self.affine[2][1] * p[1] + self.affine[3][1] * p[2],
            self.affine[0][2] + self.affine[1][2] * p[0] + self.affine[2][2] * p[1] + self.affine[3][2] * p[2],
        ];
        for (s, w) in self.sources.iter().zip(self.weights.iter()) {
            let k = kernel(dist_sq(p, *s));
            for c in 0..3 {
                out[c] += k * w[c];
            }
        }
        out
    }

    /// Warp every query point.
    pub fn apply(&self, query: &PointSet) -> PointSet {
        PointSet {
            points: query.points.iter().map(|p| self.apply_point(*p)).collect(),
        }
    }
}

/// Fit the warp `source -> target` and apply it to `query`.
pub fn rbf_warp(source: &PointSet, target: &PointSet, query: &PointSet) -> Result<PointSet> {
    Ok(RbfWarp::fit(source, target)?.apply(query))
}
