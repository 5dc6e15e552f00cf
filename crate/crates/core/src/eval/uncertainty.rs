//! Aleatoric uncertainty fields and their calibration against geometric
//! error.
//!
//! A field is built by decoding many reparameterized latent samples and
//! summarizing each correspondence point's spread: sigma = sqrt of the
//! trace of the per-point sample covariance (divisor count - 1).
//! Calibration pairs each point's sigma with the exact distance from the
//! mean predicted point to the true surface and reports Pearson r both
//! pooled across samples and per sample, plus confident-wrong flags
//! (top error quartile crossed with bottom uncertainty quartile).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_to_surface_distance, PointSet, SurfaceMesh};
use crate::nn::{sample_latents, ParamStore};
use crate::student::{Student, StudentInput};
use crate::teacher::Teacher;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UncertaintyField {
    /// Per-point mean of the decoded samples, M x 3.
    pub mean: PointSet,
    /// Per-point scale, M non-negative scalars.
    pub sigma: Vec<f64>,
}

/// Summarizes decoded correspondence samples into a field. Aggregation is
/// two-pass (mean, then squared deviations), so sample order cannot move
/// the result beyond roundoff.
pub fn uncertainty_from_samples(samples: &[PointSet]) -> Result<UncertaintyField> {
    if samples.len() < 2 {
        return Err(Error::invalid("uncertainty needs at least 2 decoded samples"));
    }
    let m = samples[0].len();
    if m == 0 || samples.iter().any(|s| s.len() != m) {
        return Err(Error::invalid("decoded samples must share a positive point count"));
    }
    let n = samples.len() as f64;
    let mut mean = vec![[0.0f64; 3]; m];
    for s in samples {
        for (acc, p) in mean.iter_mut().zip(s.points.iter()) {
            for c in 0..3 {
                acc[c] += p[c];
            }
        }
    }
    for acc in &mut mean {
        for c in acc.iter_mut() {
            *c /= n;
        }
    }
    let mut sigma = Vec::with_capacity(m);
    for i in 0..m {
        let mut trace = 0.0;
        for s in samples {
            let p = s.points[i];
            for c in 0..3 {
                let d = p[c] - mean[i][c];
                trace += d * d;
            }
        }
        sigma.push((trace / (n - 1.0)).sqrt());
    }
    Ok(UncertaintyField { mean: PointSet::new(mean)?, sigma })
}

/// Field from an explicit latent Gaussian: decodes `count` samples drawn
/// by [`sample_latents`] through the teacher decoder.
pub fn uncertainty_from_latent(
    teacher: &Teacher,
    tparams: &ParamStore,
    mean: &[f64],
    logvar: &[f64],
    count: usize,
    seed: u64,
) -> Result<UncertaintyField> {
    if count < 2 {
        return Err(Error::invalid("uncertainty needs count >= 2"));
    }
    let latents = sample_latents(mean, logvar, count, seed)?;
    let decoded = latents
        .iter()
        .map(|z| teacher.decode_correspondences(tparams, z))
        .collect::<Result<Vec<_>>>()?;
    uncertainty_from_samples(&decoded)
}

/// Field for one image: student encodes, teacher decodes the samples.
#[allow(clippy::too_many_arguments)]
pub fn estimate_uncertainty(
    student: &Student,
    sparams: &ParamStore,
    sbuffers: &ParamStore,
    teacher: &Teacher,
    tparams: &ParamStore,
    input: &StudentInput,
    count: usize,
    seed: u64,
) -> Result<UncertaintyField> {
    let (mean, logvar) = student.encode_image(sparams, sbuffers, input)?;
    uncertainty_from_latent(teacher, tparams, &mean, &logvar, count, seed)
}

/// Pearson correlation; None when either variable is constant (or there
/// are fewer than 2 pairs), the explicit undefined marker.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// One evaluated sample: the predicted field against its true mesh.
pub struct CalibrationSample<'a> {
    pub id: usize,
    pub truth: &'a SurfaceMesh,
    pub field: &'a UncertaintyField,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleCalibration {
    pub id: usize,
    /// Per-sample Pearson r; None when undefined.
    pub r: Option<f64>,
    pub mean_error: f64,
    pub mean_sigma: f64,
    /// Top error quartile and bottom uncertainty quartile.
    pub flagged_confident_wrong: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// r over all (error, sigma) points pooled across samples.
    pub pooled_r: Option<f64>,
    /// Mean of the defined per-sample r values.
    pub mean_per_sample_r: Option<f64>,
    pub per_sample: Vec<SampleCalibration>,
    /// Pooled (error, sigma) pairs, scatter-plot ready.
    pub pairs: Vec<(f64, f64)>,
}

/// Linear-interpolation percentile (inputs need not be sorted).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if v.len() == 1 {
        return v[0];
    }
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] * (1.0 - frac) + v[hi] * frac
}

pub fn calibration(samples: &[CalibrationSample]) -> Result<CalibrationReport> {
    if samples.len() < 2 {
        return Err(Error::invalid("calibration needs at least 2 evaluated samples"));
    }
    let mut pairs = Vec::new();
    let mut per_sample = Vec::with_capacity(samples.len());
    for s in samples {
        let field = s.field;
        if field.mean.len() != field.sigma.len() {
            return Err(Error::invalid("uncertainty field is inconsistent"));
        }
        let errors: Vec<f64> = field
            .mean
            .points
            .iter()
            .map(|p| point_to_surface_distance(*p, s.truth))
            .collect();
        let r = pearson(&errors, &field.sigma);
        let mean_error = errors.iter().sum::<f64>() / errors.len() as f64;
        let mean_sigma = field.sigma.iter().sum::<f64>() / field.sigma.len() as f64;
        pairs.extend(errors.iter().cloned().zip(field.sigma.iter().cloned()));
        per_sample.push(SampleCalibration {
            id: s.id,
            r,
            mean_error,
            mean_sigma,
            flagged_confident_wrong: false,
        });
    }

    let err_hi = percentile(&per_sample.iter().map(|s| s.mean_error).collect::<Vec<_>>(), 0.75);
    let sig_lo = percentile(&per_sample.iter().map(|s| s.mean_sigma).collect::<Vec<_>>(), 0.25);
    for s in &mut per_sample {
        s.flagged_confident_wrong = s.mean_error >= err_hi && s.mean_sigma <= sig_lo;
    }

    let (errs, sigs): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
    let pooled_r = pearson(&errs, &sigs);
    let defined: Vec<f64> = per_sample.iter().filter_map(|s| s.r).collect();
    let mean_per_sample_r = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    Ok(CalibrationReport { pooled_r, mean_per_sample_r, per_sample, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn cloud(points: &[[f64; 3]]) -> PointSet {
        PointSet::new(points.to_vec()).unwrap()
    }

    #[test]
    fn field_statistics_are_order_invariant() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut samples: Vec<PointSet> = (0..50)
            .map(|_| {
                cloud(
                    &(0..6)
                        .map(|_| {
                            [
                                rng.gen_range(-1.0..1.0),
                                rng.gen_range(-1.0..1.0),
                                rng.gen_range(-1.0..1.0),
                            ]
                        })
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        let a = uncertainty_from_samples(&samples).unwrap();
        samples.reverse();
        samples.swap(3, 17);
        let b = uncertainty_from_samples(&samples).unwrap();
        for (x, y) in a.sigma.iter().zip(&b.sigma) {
            assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn identical_samples_collapse_sigma() {
        let c = cloud(&[[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]);
        let f = uncertainty_from_samples(&[c.clone(), c.clone(), c]).unwrap();
        assert!(f.sigma.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn sigma_matches_hand_computed_trace() {
        // Two samples, one point: positions (0,0,0) and (2,0,0).
        // mean (1,0,0); deviations (-1,0,0), (1,0,0); var_x = 2/(2-1) = 2.
        let a = cloud(&[[0.0, 0.0, 0.0]]);
        let b = cloud(&[[2.0, 0.0, 0.0]]);
        let f = uncertainty_from_samples(&[a, b]).unwrap();
        assert!((f.sigma[0] - 2.0f64.sqrt()).abs() <= 1e-12);
        assert_eq!(f.mean.points[0], [1.0, 0.0, 0.0]);
    }

    #[test]
    fn pearson_known_cases_and_affine_invariance() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() <= 1e-9);

        let rev: Vec<f64> = x.iter().rev().cloned().collect();
        assert!(pearson(&x, &rev).unwrap() < 0.0);

        assert_eq!(pearson(&x, &[1.0, 1.0, 1.0, 1.0]), None);
        assert_eq!(pearson(&x, &x[..2]), None);

        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..40).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..40).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let r = pearson(&a, &b).unwrap();

        // Direct textbook formula.
        let n = 40.0;
        let (sx, sy): (f64, f64) = (a.iter().sum(), b.iter().sum());
        let sxx: f64 = a.iter().map(|v| v * v).sum();
        let syy: f64 = b.iter().map(|v| v * v).sum();
        let sxy: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
        let want = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
        assert!((r - want).abs() <= 1e-12);

        let a2: Vec<f64> = a.iter().map(|v| 3.0 * v + 7.0).collect();
        let b2: Vec<f64> = b.iter().map(|v| 0.5 * v - 2.0).collect();
        assert!((pearson(&a2, &b2).unwrap() - r).abs() <= 1e-9);
    }

    #[test]
    fn calibration_flags_confident_wrong_samples() {
        // Four samples around a flat quad; errors equal the z offset,
        // sigmas chosen so sample 3 is wrong but confident.
        let mesh = SurfaceMesh::new(
            vec![[0.0, 0.0, 0.0], [4.0, 0.0, 0.0], [0.0, 4.0, 0.0], [4.0, 4.0, 0.0]],
            vec![[0, 1, 2], [1, 3, 2]],
        )
        .unwrap();
        let make = |offset: f64, sigma: f64| UncertaintyField {
            mean: cloud(&[[1.0, 1.0, offset], [2.0, 0.5, offset]]),
            sigma: vec![sigma, sigma * 1.01],
        };
        let fields = [
            make(0.1, 0.10),
            make(0.2, 0.22),
            make(0.3, 0.31),
            make(3.0, 0.01), // large error, tiny sigma
        ];
        let samples: Vec<CalibrationSample> = fields
            .iter()
            .enumerate()
            .map(|(i, f)| CalibrationSample { id: i, truth: &mesh, field: f })
            .collect();
        let report = calibration(&samples).unwrap();
        let flagged: Vec<usize> = report
            .per_sample
            .iter()
            .filter(|s| s.flagged_confident_wrong)
            .map(|s| s.id)
            .collect();
        assert_eq!(flagged, vec![3]);
        assert_eq!(report.pairs.len(), 8);
        // Sample 3 drags pooled correlation negative.
        assert!(report.pooled_r.unwrap() < 0.0);
    }

    #[test]
    fn calibration_needs_two_samples() {
        let mesh = SurfaceMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]],
            vec![[0, 1, 2], [1, 3, 2]],
        )
        .unwrap();
        let f = UncertaintyField { mean: cloud(&[[0.0, 0.0, 1.0]]), sigma: vec![1.0] };
        let one = [CalibrationSample { id: 0, truth: &mesh, field: &f }];
        assert!(calibration(&one).is_err());
    }
}
