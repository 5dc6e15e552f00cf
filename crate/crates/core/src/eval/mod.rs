//! Evaluation: SSM quality metrics, uncertainty calibration, outlier
//! screening, and the per-split report.

pub mod outlier;
pub mod pca;
pub mod report;
pub mod uncertainty;

pub use outlier::{ImageOutlierModel, OutlierDegrees, ShapeOutlierModel, MIN_COHORT};
pub use pca::{
    compactness, fit_pca, fit_pca_vectors, generalization, specificity, CompactnessReport,
    PcaModel, PcaShapeModel, VARIANCE_THRESHOLD,
};
pub use report::{
    evaluate_split, mean_point_set, mean_shape, median, screen_outliers, teacher_correspondences,
    EvalOptions, EvalReport, MeanShape, OutlierRecord, OutlierReport, SampleMetrics, SsmMetrics,
    OUTLIER_METHOD,
};
pub use uncertainty::{
    calibration, estimate_uncertainty, pearson, percentile, uncertainty_from_latent,
    uncertainty_from_samples, CalibrationReport, CalibrationSample, SampleCalibration,
    UncertaintyField,
};
