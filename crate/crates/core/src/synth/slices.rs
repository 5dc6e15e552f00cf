//! Extracts the three orthogonal 2D slices a sparse-input model consumes.
//!
//! Axial fixes z, sagittal fixes x, coronal fixes y. A thickness of `t`
//! voxels (odd) averages the `t` planes centered on the slice index,
//! clamped to the volume, emulating thick-slice acquisitions.

use crate::error::{Error, Result};
use crate::image::{Slice2d, SliceTriple, VolumeImage};

/// Which plane to take along each axis: the volume center or explicit
/// per-axis indices `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceIndices {
    Center,
    At([usize; 3]),
}

fn slab_range(center: usize, thickness: usize, extent: usize) -> (usize, usize) {
    let half = thickness / 2;
    let lo = center.saturating_sub(half);
    let hi = (center + half).min(extent - 1);
    (lo, hi)
}

pub fn extract_orthogonal_slices(
    volume: &VolumeImage,
    indices: SliceIndices,
    thickness_voxels: usize,
) -> Result<SliceTriple> {
    if thickness_voxels == 0 || thickness_voxels % 2 == 0 {
        return Err(Error::invalid(format!(
            "slice thickness must be odd and positive, got {thickness_voxels}"
        )));
    }
    let [nx, ny, nz] = volume.dims;
    let idx = match indices {
        SliceIndices::Center => [nx / 2, ny / 2, nz / 2],
        SliceIndices::At(i) => i,
    };
    for (a, (&i, &n)) in idx.iter().zip(&volume.dims).enumerate() {
        if i >= n {
            return Err(Error::invalid(format!(
                "slice index {i} out of range for axis {a} (extent {n})"
            )));
        }
    }

    // Axial: average over z slab, pixels laid out x-fastest over (x, y).
    let (z0, z1) = slab_range(idx[2], thickness_voxels, nz);
    let mut axial = vec![0.0f32; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            let mut acc = 0.0f64;
            for z in z0..=z1 {
                acc += volume.at(x, y, z) as f64;
            }
            axial[x + nx * y] = (acc / (z1 - z0 + 1) as f64) as f32;
        }
    }

    // Sagittal: average over x slab, pixels y-fastest over (y, z).
    let (x0, x1) = slab_range(idx[0], thickness_voxels, nx);
    let mut sagittal = vec![0.0f32; ny * nz];
    for z in 0..nz {
        for y in 0..ny {
            let mut acc = 0.0f64;
            for x in x0..=x1 {
                acc += volume.at(x, y, z) as f64;
            }
            sagittal[y + ny * z] = (acc / (x1 - x0 + 1) as f64) as f32;
        }
    }

    // Coronal: average over y slab, pixels x-fastest over (x, z).
    let (y0, y1) = slab_range(idx[1], thickness_voxels, ny);
    let mut coronal = vec![0.0f32; nx * nz];
    for z in 0..nz {
        for x in 0..nx {
            let mut acc = 0.0f64;
            for y in y0..=y1 {
                acc += volume.at(x, y, z) as f64;
            }
            coronal[x + nx * z] = (acc / (y1 - y0 + 1) as f64) as f32;
        }
    }

    Ok(SliceTriple {
        axial: Slice2d { pixels: axial, dims: [nx, ny] },
        sagittal: Slice2d { pixels: sagittal, dims: [ny, nz] },
        coronal: Slice2d { pixels: coronal, dims: [nx, nz] },
        source_dims: volume.dims,
        spacing: volume.spacing,
        slice_indices: idx,
        thickness_voxels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Volume whose voxel (x,y,z) stores 100x + 10y + z.
    fn coded_volume(n: usize) -> VolumeImage {
        let mut v = VolumeImage::zeros([n, n, n], [1.0; 3], [0.0; 3]);
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let i = v.index(x, y, z);
                    v.voxels[i] = (100 * x + 10 * y + z) as f32;
                }
            }
        }
        v
    }

    #[test]
    fn thin_slices_read_exact_planes() {
        let v = coded_volume(8);
        let t = extract_orthogonal_slices(&v, SliceIndices::At([2, 5, 3]), 1).unwrap();
        assert_eq!(t.axial.at(4, 6), (100 * 4 + 10 * 6 + 3) as f32);
        assert_eq!(t.sagittal.at(1, 7), (100 * 2 + 10 * 1 + 7) as f32);
        assert_eq!(t.coronal.at(6, 2), (100 * 6 + 10 * 5 + 2) as f32);
    }

    #[test]
    fn center_matches_explicit_half_indices() {
        let v = coded_volume(8);
        let a = extract_orthogonal_slices(&v, SliceIndices::Center, 1).unwrap();
        let b = extract_orthogonal_slices(&v, SliceIndices::At([4, 4, 4]), 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn thickness_averages_the_slab() {
        let v = coded_volume(8);
        let t = extract_orthogonal_slices(&v, SliceIndices::At([4, 4, 4]), 3).unwrap();
        // Axial at (x, y): mean over z in {3,4,5} = 100x + 10y + 4.
        assert_eq!(t.axial.at(2, 3), (100 * 2 + 10 * 3 + 4) as f32);
        // Sagittal at (y, z): mean over x in {3,4,5} = 400 + 10y + z.
        assert_eq!(t.sagittal.at(3, 6), (400 + 30 + 6) as f32);
    }

    #[test]
    fn slab_clamps_at_the_border() {
        let v = coded_volume(8);
        let t = extract_orthogonal_slices(&v, SliceIndices::At([0, 4, 7]), 3).unwrap();
        // z slab at 7 clamps to {6,7}: mean z component 6.5.
        assert_eq!(t.axial.at(1, 1), 100.0 + 10.0 + 6.5);
        // x slab at 0 clamps to {0,1}: mean x component 50.
        assert_eq!(t.sagittal.at(2, 2), 50.0 + 20.0 + 2.0);
    }

    #[test]
    fn invalid_requests_are_rejected() {
        let v = coded_volume(8);
        assert!(extract_orthogonal_slices(&v, SliceIndices::Center, 0).is_err());
        assert!(extract_orthogonal_slices(&v, SliceIndices::Center, 2).is_err());
        assert!(extract_orthogonal_slices(&v, SliceIndices::At([8, 0, 0]), 1).is_err());
    }
}
