//! Pure geometric kernels: point-set distances, point-to-mesh distances,
//! landmark-driven warping, and surface-to-surface distance.
//!
//! Everything in this module is a pure function of its inputs and safe to
//! call concurrently.

mod chamfer;
mod p2m;
mod s2s;
mod tri;
mod types;
mod warp;

pub use chamfer::{chamfer_distance, chamfer_distance_with_grad, ChamferMode};
pub use p2m::{
    mean_point_to_surface, point_to_mesh_distance, point_to_mesh_terms, point_to_surface_distance,
    surface_samples, P2mTerms, SAMPLES_PER_FACE,
};
pub use s2s::{mesh_surface_distance, reconstruct_mesh, surface_to_surface_distance};
pub use tri::{closest_point_on_triangle, point_triangle_distance_sq};
pub use types::{PointSet, SurfaceMesh, Vec3};
pub use warp::{rbf_warp, RbfWarp};
