//! PCA shape model and the compactness / specificity / generalization
//! triad.
//!
//! Fitting uses the Gram trick: the cohort has N samples of dimension
//! D = 3M with N << D, so the N x N Gram spectrum is computed and mapped
//! back to D-space eigenvectors. Eigenvalues are those of the sample
//! covariance (divisor N - 1), sorted non-increasing; eigenpairs whose
//! eigenvalue is numerically zero are dropped, so `rank()` is the number
//! of retained modes.
//!
//! Specificity and generalization are normalized per point and per shape
//! so their scale does not depend on M or cohort size. Both operate over
//! the basis capturing 95% of variance, matching the compactness
//! threshold.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointSet;

/// Share of variance the working basis must capture.
pub const VARIANCE_THRESHOLD: f64 = 0.95;

/// PCA over arbitrary equal-length vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Retained eigenvectors, orthonormal, aligned with `eigenvalues`.
    pub eigenvectors: Vec<Vec<f64>>,
    /// Positive, non-increasing.
    pub eigenvalues: Vec<f64>,
    pub training_count: usize,
}

/// PCA over flattened correspondence sets (D = 3 * points).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaShapeModel {
    pub pca: PcaModel,
    pub points: usize,
}

pub fn fit_pca_vectors(rows: &[Vec<f64>]) -> Result<PcaModel> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::invalid("PCA needs at least 2 training vectors"));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("PCA training vectors must share a positive length"));
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    // Gram matrix X X^T / (n-1), n x n.
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            let v = dot / (n - 1) as f64;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let floor = (1e-12 * lmax).max(1e-14);
    let mut eigenvalues = Vec::new();
    let mut eigenvectors = Vec::new();
    for &idx in &order {
        let lambda = eig.eigenvalues[idx];
        if lambda <= floor {
            continue;
        }
        // Map the Gram eigenvector u back to data space: v = X^T u.
        let mut v = vec![0.0; d];
        for (i, row) in centered.iter().enumerate() {
            let u = eig.eigenvectors[(i, idx)];
            for (vc, rc) in v.iter_mut().zip(row) {
                *vc += u * rc;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 0.0 {
            continue;
        }
        for vc in &mut v {
            *vc /= norm;
        }
        eigenvalues.push(lambda);
        eigenvectors.push(v);
    }
    Ok(PcaModel { mean, eigenvectors, eigenvalues, training_count: n })
}

pub fn fit_pca(corrs: &[PointSet]) -> Result<PcaShapeModel> {
    if corrs.is_empty() {
        return Err(Error::invalid("PCA needs training correspondences"));
    }
    let points = corrs[0].len();
    if corrs.iter().any(|c| c.len() != points) {
        return Err(Error::invalid("correspondence sets must share the same M"));
    }
    let rows: Vec<Vec<f64>> = corrs.iter().map(|c| c.flattened()).collect();
    Ok(PcaShapeModel { pca: fit_pca_vectors(&rows)?, points })
}

impl PcaModel {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn total_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Modes needed to reach `threshold` of total variance; 0 when the
    /// model is degenerate (no variance at all).
    pub fn modes_for(&self, threshold: f64) -> usize {
        let total = self.total_variance();
        if total <= 0.0 {
            return 0;
        }
        let mut acc = 0.0;
        for (i, l) in self.eigenvalues.iter().enumerate() {
            acc += l;
            if acc / total >= threshold {
                return i + 1;
            }
        }
        self.rank()
    }

    /// Coefficients of `x` on the first `k` modes.
    pub fn project(&self, x: &[f64], k: usize) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::invalid(format!(
                "vector length {} does not match model dimension {}",
                x.len(),
                self.mean.len()
            )));
        }
        let k = k.min(self.rank());
        Ok((0..k)
            .map(|i| {
                self.eigenvectors[i]
                    .iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(v, (xi, mi))| v * (xi - mi))
                    .sum()
            })
            .collect())
    }

    /// mean + sum_i coeffs[i] * v_i.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, v) in coeffs.iter().zip(&self.eigenvectors) {
            for (o, vc) in out.iter_mut().zip(v) {
                *o += c * vc;
            }
        }
        out
    }

    /// Projection of `x` onto the first `k` modes, back in data space.
    pub fn reconstruct_in_basis(&self, x: &[f64], k: usize) -> Result<Vec<f64>> {
        Ok(self.reconstruct(&self.project(x, k)?))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompactnessReport {
    /// Smallest k whose cumulative variance share reaches the threshold.
    pub modes: usize,
    /// Cumulative variance share per mode, length = rank.
    pub curve: Vec<f64>,
    /// True when the cohort had no variance; `modes` is 0 then.
    pub degenerate: bool,
}

pub fn compactness(model: &PcaShapeModel, threshold: f64) -> Result<CompactnessReport> {
    if !(0.0 < threshold && threshold <= 1.0) {
        return Err(Error::invalid("compactness threshold must lie in (0, 1]"));
    }
    let pca = &model.pca;
    let total = pca.total_variance();
    if total <= 0.0 {
        return Ok(CompactnessReport { modes: 0, curve: Vec::new(), degenerate: true });
    }
    let mut curve = Vec::with_capacity(pca.rank());
    let mut acc = 0.0;
    for l in &pca.eigenvalues {
        acc += l;
        curve.push(acc / total);
    }
    Ok(CompactnessReport { modes: pca.modes_for(threshold), curve, degenerate: false })
}

/// Mean, over J generated samples, of the per-point squared distance to
/// the nearest training correspondence vector. Sampling: one ChaCha20
/// stream from `seed`; per sample, standard normals in mode order scaled
/// by sqrt(lambda_i) over the 95% basis.
pub fn specificity(
    model: &PcaShapeModel,
    training: &[PointSet],
    j: usize,
    seed: u64,
) -> Result<f64> {
    if j < 1 {
        return Err(Error::invalid("specificity needs at least one sample"));
    }
    if training.is_empty() {
        return Err(Error::invalid("specificity needs the training cohort"));
    }
    let flat: Vec<Vec<f64>> = training.iter().map(|c| c.flattened()).collect();
    if flat.iter().any(|f| f.len() != model.pca.mean.len()) {
        return Err(Error::invalid("training correspondences do not match the model"));
    }
    let k = model.pca.modes_for(VARIANCE_THRESHOLD);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    for _ in 0..j {
        let coeffs: Vec<f64> = model.pca.eigenvalues[..k]
            .iter()
            .map(|l| {
                let n: f64 = StandardNormal.sample(&mut rng);
                n * l.sqrt()
            })
            .collect();
        let sample = model.pca.reconstruct(&coeffs);
        let nearest = flat
            .iter()
            .map(|t| {
                sample
                    .iter()
                    .zip(t)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        sum += nearest / model.points as f64;
    }
    Ok(sum / j as f64)
}

/// Mean, over held-out shapes, of the per-point squared reconstruction
/// error after projecting onto the 95% basis.
pub fn generalization(model: &PcaShapeModel, heldout: &[PointSet]) -> Result<f64> {
    if heldout.is_empty() {
        return Err(Error::invalid("generalization needs held-out shapes"));
    }
    if heldout.iter().any(|c| c.len() != model.points) {
        return Err(Error::invalid(format!(
            "held-out sets must have M = {} points",
            model.points
        )));
    }
    let k = model.pca.modes_for(VARIANCE_THRESHOLD);
    let mut sum = 0.0;
    for shape in heldout {
        let x = shape.flattened();
        let recon = model.pca.reconstruct_in_basis(&x, k)?;
        let err: f64 = x.iter().zip(&recon).map(|(a, b)| (a - b) * (a - b)).sum();
        sum += err / model.points as f64;
    }
    Ok(sum / heldout.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cloud(points: &[[f64; 3]]) -> PointSet {
        PointSet::new(points.to_vec()).unwrap()
    }

    fn random_cohort(rng: &mut ChaCha20Rng, n: usize, m: usize) -> Vec<PointSet> {
        (0..n)
            .map(|_| {
                cloud(
                    &(0..m)
                        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                        .collect::<Vec<_>>(),
                )
            })
            .collect()
    }

    #[test]
    fn identical_inputs_give_zero_variance_and_the_input_mean() {
        let c = cloud(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let model = fit_pca(&[c.clone(), c.clone(), c.clone()]).unwrap();
        assert_eq!(model.pca.rank(), 0);
        assert_eq!(model.pca.mean, c.flattened());
        let report = compactness(&model, 0.95).unwrap();
        assert!(report.degenerate);
        assert_eq!(report.modes, 0);
    }

    #[test]
    fn single_direction_of_variation_yields_one_mode() {
        let base = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let cohort: Vec<PointSet> = (0..5)
            .map(|i| {
                let t = i as f64 * 0.3;
                cloud(&base.map(|p| [p[0] + t, p[1], p[2]]))
            })
            .collect();
        let model = fit_pca(&cohort).unwrap();
        let big = model.pca.eigenvalues.iter().filter(|&&l| l > 1e-10).count();
        assert_eq!(big, 1);
        assert_eq!(compactness(&model, 0.95).unwrap().modes, 1);
    }

    #[test]
    fn eigenvalues_match_direct_covariance_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(3..8);
            let m = rng.gen_range(2..5);
            let cohort = random_cohort(&mut rng, n, m);
            let model = fit_pca(&cohort).unwrap();

            // Oracle: explicit D x D covariance eigendecomposition.
            let d = 3 * m;
            let rows: Vec<Vec<f64>> = cohort.iter().map(|c| c.flattened()).collect();
            let mut mean = vec![0.0; d];
            for r in &rows {
                for (mu, v) in mean.iter_mut().zip(r) {
                    *mu += v / n as f64;
                }
            }
            let mut cov: DMatrix<f64> = DMatrix::zeros(d, d);
            for r in &rows {
                for i in 0..d {
                    for j in 0..d {
                        cov[(i, j)] += (r[i] - mean[i]) * (r[j] - mean[j]) / (n - 1) as f64;
                    }
                }
            }
            let mut oracle: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().cloned().collect();
            oracle.sort_by(|a, b| b.partial_cmp(a).unwrap());

            for (got, want) in model.pca.eigenvalues.iter().zip(&oracle) {
                assert!(
                    (got - want).abs() <= 1e-8 * want.abs().max(1.0),
                    "eigenvalue {got} vs oracle {want}"
                );
            }
        }
    }

    #[test]
    fn basis_is_orthonormal_and_reconstructs_training_samples() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let cohort = random_cohort(&mut rng, 6, 4);
        let model = fit_pca(&cohort).unwrap();
        let vecs = &model.pca.eigenvectors;
        for i in 0..vecs.len() {
            for j in 0..vecs.len() {
                let dot: f64 = vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() <= 1e-8, "v{i}.v{j} = {dot}");
            }
        }
        for c in &cohort {
            let x = c.flattened();
            let recon = model.pca.reconstruct_in_basis(&x, model.pca.rank()).unwrap();
            let num: f64 = x.iter().zip(&recon).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let den: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(num <= 1e-6 * den.max(1.0), "reconstruction error {num}");
        }
    }

    #[test]
    fn compactness_known_eigenvalues_and_monotonicity() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        // (3,1) after rank truncation: 3/4 < 0.95 <= 4/4 -> 2 modes.
        let cohort: Vec<PointSet> = {
            // Two orthogonal directions with variances 3 and 1.
            let dirs = [[1.0, 0.0], [0.0, 1.0]];
            let coeff = [
                [1.732, 1.0],
                [-1.732, -1.0],
                [1.732, -1.0],
                [-1.732, 1.0],
            ];
            coeff
                .iter()
                .map(|c| {
                    cloud(&[[
                        c[0] * dirs[0][0] + c[1] * dirs[1][0],
                        c[0] * dirs[0][1] + c[1] * dirs[1][1],
                        0.0,
                    ]])
                })
                .collect()
        };
        let model = fit_pca(&cohort).unwrap();
        assert_eq!(model.pca.rank(), 2);
        let r95 = compactness(&model, 0.95).unwrap();
        assert_eq!(r95.modes, 2);
        assert_eq!(compactness(&model, 0.70).unwrap().modes, 1);

        // Monotone: lower thresholds never need more modes.
        let cohort = random_cohort(&mut rng, 7, 3);
        let model = fit_pca(&cohort).unwrap();
        let mut prev = usize::MAX;
        for t in [0.99, 0.95, 0.9, 0.7, 0.5, 0.3] {
            let modes = compactness(&model, t).unwrap().modes;
            assert!(modes <= prev, "modes increased at threshold {t}");
            prev = modes;
        }
    }

    #[test]
    fn specificity_matches_independent_oracle_with_shared_seed() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let cohort = random_cohort(&mut rng, 6, 3);
        let model = fit_pca(&cohort).unwrap();
        let got = specificity(&model, &cohort, 100, 42).unwrap();

        // Independent re-implementation, same seed and draw order.
        let k = model.pca.modes_for(VARIANCE_THRESHOLD);
        let flat: Vec<Vec<f64>> = cohort.iter().map(|c| c.flattened()).collect();
        let mut rng2 = ChaCha20Rng::seed_from_u64(42);
        let mut sum = 0.0;
        for _ in 0..100 {
            let mut x = model.pca.mean.clone();
            for i in 0..k {
                let n: f64 = StandardNormal.sample(&mut rng2);
                let c = n * model.pca.eigenvalues[i].sqrt();
                for (xv, vv) in x.iter_mut().zip(&model.pca.eigenvectors[i]) {
                    *xv += c * vv;
                }
            }
            let mut best = f64::INFINITY;
            for t in &flat {
                let d: f64 = x.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
                best = best.min(d);
            }
            sum += best / model.points as f64;
        }
        let want = sum / 100.0;
        assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
        assert!(got >= 0.0);
    }

    #[test]
    fn specificity_degenerate_cohort_is_distance_to_nearest_training() {
        let c = cloud(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let model = fit_pca(&[c.clone(), c.clone()]).unwrap();
        // Every generated sample is the mean = the single shape: 0.
        let s = specificity(&model, &[c.clone(), c], 10, 0).unwrap();
        assert!(s.abs() <= 1e-18);
    }

    #[test]
    fn generalization_zero_cases_and_least_squares_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let cohort = random_cohort(&mut rng, 6, 3);
        let model = fit_pca(&cohort).unwrap();
        let k = model.pca.modes_for(VARIANCE_THRESHOLD);

        // Held-out = mean -> 0.
        let mean_ps = PointSet::from_flat(&model.pca.mean).unwrap();
        assert!(generalization(&model, &[mean_ps]).unwrap() <= 1e-16);

        // In-span held-out -> ~0.
        let mut coeffs = vec![0.0; k];
        for c in coeffs.iter_mut() {
            *c = rng.gen_range(-0.5..0.5);
        }
        let in_span = PointSet::from_flat(&model.pca.reconstruct(&coeffs)).unwrap();
        assert!(generalization(&model, &[in_span]).unwrap() <= 1e-8);

        // Random held-out vs normal-equations oracle.
        let held = random_cohort(&mut rng, 3, 3);
        let got = generalization(&model, &held).unwrap();
        let mut sum = 0.0;
        for h in &held {
            let x = h.flattened();
            // Solve min_c |x - mean - V c| via normal equations.
            let d = x.len();
            let v = DMatrix::from_fn(d, k, |r, c| model.pca.eigenvectors[c][r]);
            let xm = nalgebra::DVector::from_fn(d, |r, _| x[r] - model.pca.mean[r]);
            let vtv = v.transpose() * &v;
            let vtx = v.transpose() * &xm;
            let c = vtv.lu().solve(&vtx).unwrap();
            let recon = &v * c;
            let err = (&xm - recon).norm_squared();
            sum += err / model.points as f64;
        }
        let want = sum / held.len() as f64;
        assert!((got - want).abs() <= 1e-8 * want.max(1.0), "{got} vs {want}");
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let a = cloud(&[[0.0, 0.0, 0.0]]);
        let b = cloud(&[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]);
        assert!(fit_pca(&[a.clone()]).is_err());
        assert!(fit_pca(&[a.clone(), b.clone()]).is_err());
        let model = fit_pca(&[b.clone(), b.clone()]).unwrap();
        assert!(specificity(&model, &[b.clone(), b.clone()], 0, 0).is_err());
        assert!(generalization(&model, &[a]).is_err());
        assert!(compactness(&model, 0.0).is_err());
    }
}
