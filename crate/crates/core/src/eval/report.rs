//! Full evaluation of a trained variant on one split, producing the
//! report consumed by the CLI and the experiment recipes.
//!
//! Predicted correspondences are the per-point mean of the decoded latent
//! samples, the same points whose spread defines sigma; every geometric
//! metric and the calibration pairing use that one prediction. The SSM
//! block is fit on the training split's teacher correspondences; the mean
//! shape for S2S is their per-point mean carried by the medoid training
//! mesh.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::outlier::{ImageOutlierModel, OutlierDegrees, ShapeOutlierModel};
use crate::eval::pca::{compactness, fit_pca, specificity, generalization, PcaShapeModel};
use crate::eval::uncertainty::{
    calibration, estimate_uncertainty, CalibrationReport, CalibrationSample, UncertaintyField,
};
use crate::geometry::{
    chamfer_distance, point_to_mesh_distance, surface_to_surface_distance, ChamferMode, PointSet,
    SurfaceMesh,
};
use crate::nn::ParamStore;
use crate::student::Student;
use crate::synth::OutlierTag;
use crate::teacher::{medoid_index, Teacher};
use crate::train::{input_of, LoadedSample};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Latent samples per image for the uncertainty field.
    pub uncertainty_samples: usize,
    pub uncertainty_seed: u64,
    /// Samples drawn for the specificity estimate.
    pub specificity_samples: usize,
    pub variance_threshold: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            uncertainty_samples: 30,
            uncertainty_seed: 0,
            specificity_samples: 100,
            variance_threshold: 0.95,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: usize,
    pub outlier: OutlierTag,
    /// Chamfer (mean point distance form) between prediction and truth.
    pub cd_l1: f64,
    /// Squared-L2 chamfer, the phase-c validation metric.
    pub cd_l2: f64,
    pub p2m: f64,
    pub s2s: f64,
    pub mean_sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SsmMetrics {
    pub compactness_modes: usize,
    pub cumulative_variance: Vec<f64>,
    pub specificity: f64,
    pub generalization: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub split: String,
    pub samples: Vec<SampleMetrics>,
    pub ssm: SsmMetrics,
    pub calibration: CalibrationReport,
    pub median_cd_l1: f64,
    pub median_cd_l2: f64,
    pub median_p2m: f64,
    pub median_s2s: f64,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Teacher correspondences for every sample, in order.
pub fn teacher_correspondences(
    teacher: &Teacher,
    tparams: &ParamStore,
    samples: &[LoadedSample],
) -> Result<Vec<PointSet>> {
    samples
        .iter()
        .map(|s| {
            let z = teacher.encode_surface(tparams, &s.vertices)?;
            teacher.decode_correspondences(tparams, &z)
        })
        .collect()
}

/// Per-point mean of a cohort of equal-M point sets.
pub fn mean_point_set(sets: &[PointSet]) -> Result<PointSet> {
    if sets.is_empty() {
        return Err(Error::invalid("mean of an empty cohort"));
    }
    let m = sets[0].len();
    if sets.iter().any(|s| s.len() != m) {
        return Err(Error::invalid("cohort point counts differ"));
    }
    let mut acc = vec![[0.0f64; 3]; m];
    for s in sets {
        for (a, p) in acc.iter_mut().zip(&s.points) {
            for c in 0..3 {
                a[c] += p[c] / sets.len() as f64;
            }
        }
    }
    PointSet::new(acc)
}

/// The S2S reference: mean training correspondences plus the medoid
/// training mesh that carries them.
pub struct MeanShape {
    pub corr: PointSet,
    pub mesh: SurfaceMesh,
}

pub fn mean_shape(
    train: &[LoadedSample],
    train_corrs: &[PointSet],
) -> Result<MeanShape> {
    let corr = mean_point_set(train_corrs)?;
    let cohort: Vec<PointSet> = train.iter().map(|s| s.vertices.clone()).collect();
    let medoid = medoid_index(&cohort, 128)?;
    Ok(MeanShape { corr, mesh: train[medoid].mesh.clone() })
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_split(
    teacher: &Teacher,
    tparams: &ParamStore,
    student: &Student,
    sparams: &ParamStore,
    sbuffers: &ParamStore,
    train: &[LoadedSample],
    eval_samples: &[LoadedSample],
    split_name: &str,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if eval_samples.len() < 2 {
        return Err(Error::invalid("evaluation needs at least 2 samples"));
    }
    let train_corrs = teacher_correspondences(teacher, tparams, train)?;
    let eval_corrs = teacher_correspondences(teacher, tparams, eval_samples)?;
    let model: PcaShapeModel = fit_pca(&train_corrs)?;
    let comp = compactness(&model, opts.variance_threshold)?;
    let spec = specificity(&model, &train_corrs, opts.specificity_samples, opts.uncertainty_seed)?;
    let gen = generalization(&model, &eval_corrs)?;
    let reference = mean_shape(train, &train_corrs)?;

    let mut fields: Vec<UncertaintyField> = Vec::with_capacity(eval_samples.len());
    let mut samples = Vec::with_capacity(eval_samples.len());
    for s in eval_samples {
        let input = input_of(s, student.variant)?;
        let field = estimate_uncertainty(
            student,
            sparams,
            sbuffers,
            teacher,
            tparams,
            &input,
            opts.uncertainty_samples,
            opts.uncertainty_seed ^ s.id as u64,
        )?;
        let pred = &field.mean;
        let cd_l1 = chamfer_distance(&s.vertices, pred, ChamferMode::L1Point)?;
        let cd_l2 = chamfer_distance(&s.vertices, pred, ChamferMode::SquaredL2Point)?;
        let p2m = point_to_mesh_distance(pred, &s.mesh)?;
        let s2s = surface_to_surface_distance(&s.mesh, pred, &reference.corr, &reference.mesh)?;
        let mean_sigma = field.sigma.iter().sum::<f64>() / field.sigma.len() as f64;
        samples.push(SampleMetrics {
            id: s.id,
            outlier: s.outlier,
            cd_l1,
            cd_l2,
            p2m,
            s2s,
            mean_sigma,
        });
        fields.push(field);
    }

    let calib_inputs: Vec<CalibrationSample> = eval_samples
        .iter()
        .zip(&fields)
        .map(|(s, f)| CalibrationSample { id: s.id, truth: &s.mesh, field: f })
        .collect();
    let calib = calibration(&calib_inputs)?;

    Ok(EvalReport {
        variant: student.variant.label(),
        split: split_name.to_string(),
        median_cd_l1: median(&samples.iter().map(|s| s.cd_l1).collect::<Vec<_>>()),
        median_cd_l2: median(&samples.iter().map(|s| s.cd_l2).collect::<Vec<_>>()),
        median_p2m: median(&samples.iter().map(|s| s.p2m).collect::<Vec<_>>()),
        median_s2s: median(&samples.iter().map(|s| s.s2s).collect::<Vec<_>>()),
        samples,
        ssm: SsmMetrics {
            compactness_modes: comp.modes,
            cumulative_variance: comp.curve,
            specificity: spec,
            generalization: gen,
        },
        calibration: calib,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutlierRecord {
    pub id: usize,
    pub tag: OutlierTag,
    pub degrees: OutlierDegrees,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutlierReport {
    pub cohort_size: usize,
    /// Names the degree instantiation so downstream readers know which
    /// formula produced these numbers.
    pub method: String,
    pub records: Vec<OutlierRecord>,
}

/// See [`ShapeOutlierModel`] and [`ImageOutlierModel`] for the formulas.
pub const OUTLIER_METHOD: &str = "shape: z-scored PCA Mahalanobis distance with residual term; \
     image: z-scored PCA reconstruction error of pooled intensities";

/// Screens `subjects` against the training cohort. Needs volumes loaded
/// on both cohorts.
pub fn screen_outliers(
    train: &[LoadedSample],
    subjects: &[LoadedSample],
    pool_target: usize,
) -> Result<OutlierReport> {
    let shapes: Vec<PointSet> = train.iter().map(|s| s.vertices.clone()).collect();
    let shape_model = ShapeOutlierModel::fit(&shapes)?;
    let volumes: Vec<&crate::image::VolumeImage> = train
        .iter()
        .map(|s| {
            s.volume
                .as_ref()
                .ok_or_else(|| Error::invalid(format!("sample {} has no volume loaded", s.id)))
        })
        .collect::<Result<_>>()?;
    let image_model = ImageOutlierModel::fit(&volumes, pool_target)?;

    let mut records = Vec::with_capacity(subjects.len());
    for s in subjects {
        let volume = s
            .volume
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("sample {} has no volume loaded", s.id)))?;
        records.push(OutlierRecord {
            id: s.id,
            tag: s.outlier,
            degrees: OutlierDegrees {
                shape_degree: shape_model.degree(&s.vertices)?,
                image_degree: image_model.degree(volume)?,
            },
        });
    }
    Ok(OutlierReport {
        cohort_size: train.len(),
        method: OUTLIER_METHOD.to_string(),
        records,
    })
}
