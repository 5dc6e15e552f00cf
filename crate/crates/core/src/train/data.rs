//! Loads manifest entries into memory for training and evaluation.
//!
//! Desk-scale cohorts fit comfortably in RAM, so every phase works from
//! fully loaded samples; there is no streaming path.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{PointSet, SurfaceMesh};
use crate::image::{read_slice_triple, read_volume, SliceTriple, VolumeImage};
use crate::io::read_ply;
use crate::student::{StudentInput, StudentVariant};
use crate::synth::{extract_orthogonal_slices, ManifestEntry, OutlierTag, SliceIndices};

#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub id: usize,
    pub outlier: OutlierTag,
    pub mesh: SurfaceMesh,
    /// Cached `mesh.vertex_point_set()`.
    pub vertices: PointSet,
    pub volume: Option<VolumeImage>,
    pub slices: Option<SliceTriple>,
}

/// What image data a run needs alongside the meshes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageNeeds {
    None,
    Volume,
    /// `thickness: None` reads the slices synthesized with the dataset;
    /// `Some(t)` re-extracts center slices of thickness `t` from the volume.
    Slices { thickness: Option<usize> },
}

impl ImageNeeds {
    pub fn for_variant(variant: StudentVariant, thickness: Option<usize>) -> Self {
        match variant {
            StudentVariant::Full3d => ImageNeeds::Volume,
            StudentVariant::Orthogonal | StudentVariant::SingleSlice(_) => {
                ImageNeeds::Slices { thickness }
            }
        }
    }
}

pub fn load_samples(
    root: &Path,
    entries: &[ManifestEntry],
    needs: ImageNeeds,
) -> Result<Vec<LoadedSample>> {
    let mut out = Vec::with_capacity(entries.len());
    for entry in entries {
        let mesh = read_ply(&entry.mesh_path(root))?;
        let vertices = mesh.vertex_point_set();
        let (volume, slices) = match needs {
            ImageNeeds::None => (None, None),
            ImageNeeds::Volume => (Some(read_volume(&entry.volume_path(root))?), None),
            ImageNeeds::Slices { thickness: None } => (
                None,
                Some(read_slice_triple(
                    &entry.slice_path(root, "axial"),
                    &entry.slice_path(root, "sagittal"),
                    &entry.slice_path(root, "coronal"),
                )?),
            ),
            ImageNeeds::Slices { thickness: Some(t) } => {
                let v = read_volume(&entry.volume_path(root))?;
                let s = extract_orthogonal_slices(&v, SliceIndices::Center, t)?;
                (None, Some(s))
            }
        };
        out.push(LoadedSample {
            id: entry.id,
            outlier: entry.outlier.clone(),
            mesh,
            vertices,
            volume,
            slices,
        });
    }
    Ok(out)
}

/// The student input view of one loaded sample.
pub fn input_of<'a>(sample: &'a LoadedSample, variant: StudentVariant) -> Result<StudentInput<'a>> {
    match variant {
        StudentVariant::Full3d => sample
            .volume
            .as_ref()
            .map(StudentInput::Volume)
            .ok_or_else(|| Error::invalid(format!("sample {} has no volume loaded", sample.id))),
        StudentVariant::Orthogonal | StudentVariant::SingleSlice(_) => sample
            .slices
            .as_ref()
            .map(StudentInput::Slices)
            .ok_or_else(|| Error::invalid(format!("sample {} has no slices loaded", sample.id))),
    }
}

/// Volume dims every image in the cohort must share.
pub fn cohort_dims(samples: &[LoadedSample]) -> Result<[usize; 3]> {
    let dims_of = |s: &LoadedSample| -> Option<[usize; 3]> {
        s.volume
            .as_ref()
            .map(|v| v.dims)
            .or_else(|| s.slices.as_ref().map(|t| t.source_dims))
    };
    let first = samples
        .first()
        .and_then(dims_of)
        .ok_or_else(|| Error::invalid("cohort has no image data"))?;
    for s in samples {
        match dims_of(s) {
            Some(d) if d == first => {}
            Some(d) => {
                return Err(Error::invalid(format!(
                    "sample {} has dims {:?}, cohort uses {:?}",
                    s.id, d, first
                )))
            }
            None => return Err(Error::invalid(format!("sample {} has no image data", s.id))),
        }
    }
    Ok(first)
}
