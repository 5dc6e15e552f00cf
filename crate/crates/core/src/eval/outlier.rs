//! Outlier-degree screening against the training cohort.
//!
//! Shape degree: Mahalanobis distance over the cohort PCA's 95% basis
//! plus a residual term scaled by the last retained eigenvalue, so both
//! in-span extremes and out-of-span shapes register. Image degree: mean
//! per-voxel squared reconstruction error under a cohort PCA of
//! mean-pooled intensities. Both are standardized to z-scores over the
//! cohort's own raw degrees (cohort members included in the fit).
//!
//! The synthetic meshes share one grid topology, so flattened vertex
//! vectors are directly comparable without a trained correspondence
//! model; screening runs before any training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::pca::{fit_pca_vectors, PcaModel, VARIANCE_THRESHOLD};
use crate::geometry::PointSet;
use crate::image::VolumeImage;

pub const MIN_COHORT: usize = 10;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OutlierDegrees {
    pub shape_degree: f64,
    pub image_degree: f64,
}

fn zscore_params(raw: &[f64]) -> (f64, f64) {
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let var = raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn zscore(raw: f64, mean: f64, std: f64) -> f64 {
    if std > 0.0 {
        (raw - mean) / std
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeOutlierModel {
    pca: PcaModel,
    points: usize,
    modes: usize,
    raw_mean: f64,
    raw_std: f64,
}

impl ShapeOutlierModel {
    pub fn fit(cohort: &[PointSet]) -> Result<Self> {
        if cohort.len() < MIN_COHORT {
            return Err(Error::invalid(format!(
                "outlier screening needs a cohort of at least {MIN_COHORT}, got {}",
                cohort.len()
            )));
        }
        let points = cohort[0].len();
        if cohort.iter().any(|c| c.len() != points) {
            return Err(Error::invalid("cohort shapes must share a point count"));
        }
        let rows: Vec<Vec<f64>> = cohort.iter().map(|c| c.flattened()).collect();
        let pca = fit_pca_vectors(&rows)?;
        let modes = pca.modes_for(VARIANCE_THRESHOLD);
        let mut model = Self { pca, points, modes, raw_mean: 0.0, raw_std: 1.0 };
        let raw: Vec<f64> = cohort.iter().map(|c| model.raw_degree(c)).collect::<Result<_>>()?;
        let (m, s) = zscore_params(&raw);
        model.raw_mean = m;
        model.raw_std = s;
        Ok(model)
    }

    fn raw_degree(&self, shape: &PointSet) -> Result<f64> {
        if shape.len() != self.points {
            return Err(Error::invalid(format!(
                "shape has {} points, cohort uses {}",
                shape.len(),
                self.points
            )));
        }
        let x = shape.flattened();
        if self.modes == 0 {
            // Degenerate cohort: plain distance to the mean.
            let d: f64 = x
                .iter()
                .zip(&self.pca.mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            return Ok(d.sqrt());
        }
        let coeffs = self.pca.project(&x, self.modes)?;
        let recon = self.pca.reconstruct(&coeffs);
        let mut d2 = 0.0;
        for (c, l) in coeffs.iter().zip(&self.pca.eigenvalues) {
            d2 += c * c / l;
        }
        let resid: f64 = x.iter().zip(&recon).map(|(a, b)| (a - b) * (a - b)).sum();
        // Out-of-span residual, scaled like the weakest retained mode.
        d2 += resid / self.pca.eigenvalues[self.modes - 1];
        Ok(d2.sqrt())
    }

    /// Cohort z-score of the shape's Mahalanobis-style degree.
    pub fn degree(&self, shape: &PointSet) -> Result<f64> {
        Ok(zscore(self.raw_degree(shape)?, self.raw_mean, self.raw_std))
    }
}

/// Mean-pool a volume down so no axis exceeds `target` voxels.
fn pooled_intensities(v: &VolumeImage, target: usize) -> (Vec<f64>, [usize; 3]) {
    let f = v.dims.iter().map(|&d| d.div_ceil(target)).max().unwrap().max(1);
    let od = [v.dims[0] / f, v.dims[1] / f, v.dims[2] / f];
    let mut out = Vec::with_capacity(od[0] * od[1] * od[2]);
    for z in 0..od[2] {
        for y in 0..od[1] {
            for x in 0..od[0] {
                let mut sum = 0.0;
                for dz in 0..f {
                    for dy in 0..f {
                        for dx in 0..f {
                            sum += v.at(x * f + dx, y * f + dy, z * f + dz) as f64;
                        }
                    }
                }
                out.push(sum / (f * f * f) as f64);
            }
        }
    }
    (out, od)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageOutlierModel {
    pca: PcaModel,
    source_dims: [usize; 3],
    pool_target: usize,
    modes: usize,
    raw_mean: f64,
    raw_std: f64,
}

impl ImageOutlierModel {
    pub fn fit(cohort: &[&VolumeImage], pool_target: usize) -> Result<Self> {
        if cohort.len() < MIN_COHORT {
            return Err(Error::invalid(format!(
                "outlier screening needs a cohort of at least {MIN_COHORT}, got {}",
                cohort.len()
            )));
        }
        if pool_target == 0 {
            return Err(Error::invalid("pool target must be positive"));
        }
        let source_dims = cohort[0].dims;
        if cohort.iter().any(|v| v.dims != source_dims) {
            return Err(Error::invalid("cohort volumes must share dimensions"));
        }
        let rows: Vec<Vec<f64>> = cohort
            .iter()
            .map(|v| pooled_intensities(v, pool_target).0)
            .collect();
        let pca = fit_pca_vectors(&rows)?;
        let modes = pca.modes_for(VARIANCE_THRESHOLD);
        let mut model = Self {
            pca,
            source_dims,
            pool_target,
            modes,
            raw_mean: 0.0,
            raw_std: 1.0,
        };
        let raw: Vec<f64> = cohort.iter().map(|v| model.raw_degree(v)).collect::<Result<_>>()?;
        let (m, s) = zscore_params(&raw);
        model.raw_mean = m;
        model.raw_std = s;
        Ok(model)
    }

    fn raw_degree(&self, v: &VolumeImage) -> Result<f64> {
        if v.dims != self.source_dims {
            return Err(Error::invalid(format!(
                "volume dims {:?} do not match cohort {:?}",
                v.dims, self.source_dims
            )));
        }
        let (x, _) = pooled_intensities(v, self.pool_target);
        let recon = self.pca.reconstruct_in_basis(&x, self.modes)?;
        let err: f64 = x.iter().zip(&recon).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(err / x.len() as f64)
    }

    /// Cohort z-score of the image's reconstruction error.
    pub fn degree(&self, v: &VolumeImage) -> Result<f64> {
        Ok(zscore(self.raw_degree(v)?, self.raw_mean, self.raw_std))
    }
}

/// Both degrees for one sample.
pub fn outlier_degree(
    shape_model: &ShapeOutlierModel,
    image_model: &ImageOutlierModel,
    shape: &PointSet,
    volume: &VolumeImage,
) -> Result<OutlierDegrees> {
    Ok(OutlierDegrees {
        shape_degree: shape_model.degree(shape)?,
        image_degree: image_model.degree(volume)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{build_mesh, inject_image_outlier, render_volume, ImageOutlierKind,
        RenderOptions, ShapeParams};

    fn cohort_params(i: usize) -> ShapeParams {
        ShapeParams {
            semi_axes: [
                7.0 + 0.08 * (i % 13) as f64,
                6.0 + 0.06 * (i % 11) as f64,
                5.0 + 0.05 * (i % 7) as f64,
            ],
            bump_amplitude: 0.2 + 0.01 * (i % 5) as f64,
            bump_frequency: 3,
            appendage_length: 0.0,
        }
    }

    fn render_opts(seed: u64) -> RenderOptions {
        RenderOptions {
            dims: [20, 18, 16],
            spacing: [1.0, 1.0, 1.2],
            noise_seed: seed,
            ..RenderOptions::default()
        }
    }

    fn shape_cohort(n: usize) -> Vec<PointSet> {
        (0..n)
            .map(|i| build_mesh(&cohort_params(i), 8).vertex_point_set())
            .collect()
    }

    #[test]
    fn cohort_members_sit_inside_three_sigma() {
        let cohort = shape_cohort(24);
        let model = ShapeOutlierModel::fit(&cohort).unwrap();
        let degrees: Vec<f64> = cohort.iter().map(|c| model.degree(c).unwrap()).collect();
        let inside = degrees.iter().filter(|d| d.abs() <= 3.0).count();
        assert!(
            inside as f64 >= 0.99 * cohort.len() as f64,
            "only {inside}/{} within 3 sigma",
            cohort.len()
        );
    }

    #[test]
    fn injected_shape_outlier_scores_above_the_cohort_tail() {
        let cohort = shape_cohort(24);
        let model = ShapeOutlierModel::fit(&cohort).unwrap();
        let mut degrees: Vec<f64> = cohort.iter().map(|c| model.degree(c).unwrap()).collect();
        degrees.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let p95 = degrees[(0.95 * (degrees.len() - 1) as f64).round() as usize];

        let outlier = ShapeParams {
            semi_axes: [11.5, 6.0, 5.0], // far outside the cohort's range
            bump_amplitude: 0.2,
            bump_frequency: 3,
            appendage_length: 1.5,
        };
        let d = model
            .degree(&build_mesh(&outlier, 8).vertex_point_set())
            .unwrap();
        assert!(d > p95, "outlier degree {d} <= cohort p95 {p95}");
    }

    #[test]
    fn image_outliers_score_high() {
        let volumes: Vec<VolumeImage> = (0..12)
            .map(|i| render_volume(&build_mesh(&cohort_params(i), 8), &render_opts(i as u64)).unwrap())
            .collect();
        let refs: Vec<&VolumeImage> = volumes.iter().collect();
        let model = ImageOutlierModel::fit(&refs, 8).unwrap();

        let members: Vec<f64> = refs.iter().map(|v| model.degree(v).unwrap()).collect();
        let max_member = members.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

        let mut corrupted =
            render_volume(&build_mesh(&cohort_params(0), 8), &render_opts(99)).unwrap();
        inject_image_outlier(&mut corrupted, ImageOutlierKind::BiasField { slope: 0.9 }, 1).unwrap();
        let d = model.degree(&corrupted).unwrap();
        assert!(d > max_member, "bias-field degree {d} <= max member {max_member}");
    }

    #[test]
    fn small_cohorts_are_rejected() {
        let cohort = shape_cohort(9);
        assert!(ShapeOutlierModel::fit(&cohort).is_err());
    }

    #[test]
    fn mean_like_sample_scores_minimal() {
        let cohort = shape_cohort(24);
        let model = ShapeOutlierModel::fit(&cohort).unwrap();
        let mean = PointSet::from_flat(&model.pca.mean).unwrap();
        let d_mean = model.degree(&mean).unwrap();
        let max_member = cohort
            .iter()
            .map(|c| model.degree(c).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(d_mean <= max_member + 1e-9);
    }
}
