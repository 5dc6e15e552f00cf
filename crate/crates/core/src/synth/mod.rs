//! Synthetic anatomy factory: a parametric shape family with aligned meshes,
//! rendered volumes, orthogonal slices, and injected outliers, written as a
//! manifest-driven dataset.

mod dataset;
mod meshgen;
mod params;
mod render;
mod slices;

pub use dataset::{
    generate_dataset, load_manifest, DatasetManifest, DatasetOptions, ManifestEntry, OutlierTag,
    Split,
};
pub use meshgen::build_mesh;
pub use params::{sample_shape_params, ParamRanges, ShapeParams, TaggedParams};
pub use render::{inject_image_outlier, render_volume, ImageOutlierKind, RenderOptions};
pub use slices::{extract_orthogonal_slices, SliceIndices};
