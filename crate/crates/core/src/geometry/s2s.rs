use super::p2m::{mean_point_to_surface, surface_samples};
use super::types::{PointSet, SurfaceMesh};
use super::warp::RbfWarp;
use crate::error::{Error, Result};

/// Symmetric mean surface distance between two meshes, estimated over the
/// deterministic dense surface samplings of both: the average of the two
/// directed sample-to-surface means.
pub fn mesh_surface_distance(a: &SurfaceMesh, b: &SurfaceMesh) -> f64 {
    let sa = surface_samples(a);
    let sb = surface_samples(b);
    let d_ab = mean_point_to_surface(&sa.points, b);
    let d_ba = mean_point_to_surface(&sb.points, a);
    0.5 * (d_ab + d_ba)
}

/// Reconstruct a mesh for `predicted_corr` by warping the mean mesh with the
/// landmark warp `mean_corr -> predicted_corr`, then measure the symmetric
/// mean surface distance between the truth mesh and the reconstruction.
pub fn surface_to_surface_distance(
    truth: &SurfaceMesh,
    predicted_corr: &PointSet,
    mean_corr: &PointSet,
    mean_mesh: &SurfaceMesh,
) -> Result<f64> {
    if predicted_corr.len() != mean_corr.len() {
        return Err(Error::invalid(format!(
            "correspondence count mismatch: {} predicted vs {} mean",
            predicted_corr.len(),
            mean_corr.len()
        )));
    }
    let recon = reconstruct_mesh(predicted_corr, mean_corr, mean_mesh)?;
    Ok(mesh_surface_distance(truth, &recon))
}

/// The warped mean mesh itself, for callers that want the geometry.
pub fn reconstruct_mesh(
    predicted_corr: &PointSet,
    mean_corr: &PointSet,
    mean_mesh: &SurfaceMesh,
) -> Result<SurfaceMesh> {
    let warp = RbfWarp::fit(mean_corr, predicted_corr)?;
    let vertices = mean_mesh.vertices.iter().map(|v| warp.apply_point(*v)).collect();
    mean_mesh.with_vertices(vertices)
}
