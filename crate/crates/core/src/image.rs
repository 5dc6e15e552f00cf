//! In-memory image types and their on-disk format: raw little-endian f32
//! arrays in x-fastest order plus a JSON sidecar describing the geometry.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

/// Dense 3D intensity volume. Voxel `(x, y, z)` lives at index
/// `x + dims[0] * (y + dims[1] * z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeImage {
    pub voxels: Vec<f32>,
    pub dims: [usize; 3],
    /// mm per voxel along each axis.
    pub spacing: [f64; 3],
    /// World position (mm) of the voxel-(0,0,0) center.
    pub origin: [f64; 3],
}

impl VolumeImage {
    pub fn new(voxels: Vec<f32>, dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("volume dims must be positive"));
        }
        if voxels.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::invalid(format!(
                "voxel count {} does not match dims {:?}",
                voxels.len(),
                dims
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("spacing must be positive"));
        }
        if voxels.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("volume intensities must be finite"));
        }
        Ok(Self {
            voxels,
            dims,
            spacing,
            origin,
        })
    }

    pub fn zeros(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Self {
        Self {
            voxels: vec![0.0; dims[0] * dims[1] * dims[2]],
            dims,
            spacing,
            origin,
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f32 {
        self.voxels[self.index(x, y, z)]
    }

    /// World coordinates (mm) of a voxel center.
    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        [
            self.origin[0] + x as f64 * self.spacing[0],
            self.origin[1] + y as f64 * self.spacing[1],
            self.origin[2] + z as f64 * self.spacing[2],
        ]
    }
}

/// A single extracted 2D slice; `dims` is (width, height) in the slice's own
/// row-major (width-fastest) layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice2d {
    pub pixels: Vec<f32>,
    pub dims: [usize; 2],
}

impl Slice2d {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f32 {
        self.pixels[i + self.dims[0] * j]
    }
}

/// The three orthogonal slices of one sample.
///
/// Axis convention: axial fixes z (pixels over x, y), sagittal fixes x
/// (pixels over y, z), coronal fixes y (pixels over x, z).
#[derive(Debug, Clone, PartialEq)]
pub struct SliceTriple {
    pub axial: Slice2d,
    pub sagittal: Slice2d,
    pub coronal: Slice2d,
    pub source_dims: [usize; 3],
    pub spacing: [f64; 3],
    pub slice_indices: [usize; 3],
    pub thickness_voxels: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VolumeSidecar {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    axis_order: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SliceSidecar {
    axis: String,
    dims: [usize; 2],
    source_dims: [usize; 3],
    spacing: [f64; 3],
    slice_index: usize,
    thickness_voxels: usize,
    axis_order: String,
}

fn write_raw_f32(path: &Path, data: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

fn read_raw_f32(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() != expected * 4 {
        return Err(Error::format(
            path.display().to_string(),
            format!("expected {} bytes of f32 data, found {}", expected * 4, buf.len()),
        ));
    }
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn sidecar_path(raw_path: &Path) -> std::path::PathBuf {
    raw_path.with_extension("json")
}

pub fn write_volume(path: &Path, v: &VolumeImage) -> Result<()> {
    write_raw_f32(path, &v.voxels)?;
    let sidecar = VolumeSidecar {
        dims: v.dims,
        spacing: v.spacing,
        origin: v.origin,
        axis_order: "x-fastest".into(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_volume(path: &Path) -> Result<VolumeImage> {
    let sidecar: VolumeSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let n = sidecar.dims[0] * sidecar.dims[1] * sidecar.dims[2];
    let voxels = read_raw_f32(path, n)?;
    VolumeImage::new(voxels, sidecar.dims, sidecar.spacing, sidecar.origin)
}

pub fn write_slice(path: &Path, triple: &SliceTriple, axis: &str) -> Result<()> {
    let (slice, index) = match axis {
        "axial" => (&triple.axial, triple.slice_indices[2]),
        "sagittal" => (&triple.sagittal, triple.slice_indices[0]),
        "coronal" => (&triple.coronal, triple.slice_indices[1]),
        other => return Err(Error::invalid(format!("unknown slice axis {other:?}"))),
    };
    write_raw_f32(path, &slice.pixels)?;
    let sidecar = SliceSidecar {
        axis: axis.into(),
        dims: slice.dims,
        source_dims: triple.source_dims,
        spacing: triple.spacing,
        slice_index: index,
        thickness_voxels: triple.thickness_voxels,
        axis_order: "x-fastest".into(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_slice(path: &Path) -> Result<(Slice2d, String, [usize; 3], usize, usize)> {
    let sidecar: SliceSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let n = sidecar.dims[0] * sidecar.dims[1];
    let pixels = read_raw_f32(path, n)?;
    Ok((
        Slice2d {
            pixels,
            dims: sidecar.dims,
        },
        sidecar.axis,
        sidecar.source_dims,
        sidecar.slice_index,
        sidecar.thickness_voxels,
    ))
}

/// Read the three slice files of a sample back into a [`SliceTriple`].
pub fn read_slice_triple(axial: &Path, sagittal: &Path, coronal: &Path) -> Result<SliceTriple> {
    let (ax, ax_axis, source_dims, ax_index, thickness) = read_slice(axial)?;
    let (sg, sg_axis, _, sg_index, _) = read_slice(sagittal)?;
    let (cr, cr_axis, _, cr_index, _) = read_slice(coronal)?;
    for (axis, want) in [(&ax_axis, "axial"), (&sg_axis, "sagittal"), (&cr_axis, "coronal")] {
        if axis != want {
            return Err(Error::format(
                axial.display().to_string(),
                format!("expected {want} slice, sidecar says {axis}"),
            ));
        }
    }
    let sidecar: SliceSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(axial))?)?;
    Ok(SliceTriple {
        axial: ax,
        sagittal: sg,
        coronal: cr,
        source_dims,
        spacing: sidecar.spacing,
        slice_indices: [sg_index, cr_index, ax_index],
        thickness_voxels: thickness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn volume_round_trip_is_byte_identical() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("v.raw");
        let v = VolumeImage::new(
            (0..24).map(|i| i as f32 * 0.5).collect(),
            [2, 3, 4],
            [1.0, 1.0, 2.0],
            [-1.0, -1.5, -4.0],
        )
        .unwrap();
        write_volume(&path, &v).unwrap();
        let bytes1 = fs::read(&path).unwrap();
        write_volume(&path, &v).unwrap();
        let bytes2 = fs::read(&path).unwrap();
        assert_eq!(bytes1, bytes2);
        assert_eq!(read_volume(&path).unwrap(), v);
    }

    #[test]
    fn volume_validation() {
        assert!(VolumeImage::new(vec![0.0; 5], [2, 3, 4], [1.0; 3], [0.0; 3]).is_err());
        assert!(VolumeImage::new(vec![f32::NAN; 8], [2, 2, 2], [1.0; 3], [0.0; 3]).is_err());
        assert!(VolumeImage::new(vec![0.0; 8], [2, 2, 2], [0.0; 3], [0.0; 3]).is_err());
    }
}
