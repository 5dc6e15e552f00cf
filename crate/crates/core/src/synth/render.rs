//! Rasterizes a closed surface mesh into an intensity volume.
//!
//! Interior voxels read `contrast`, exterior voxels 0, with a linear
//! partial-volume ramp of width `ramp_width_mm` across the boundary. The
//! signed distance is exact within the ramp band (point-triangle distance
//! against spatially binned faces) and clamped to a plateau beyond it.
//! Inside/outside is decided per voxel row by ray-crossing parity, which is
//! well defined because generated meshes are watertight.

use crate::error::{Error, Result};
use crate::geometry::{point_triangle_distance_sq, SurfaceMesh, Vec3};
use crate::image::VolumeImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Interior intensity; exterior is 0.
    pub contrast: f64,
    /// Standard deviation of additive Gaussian noise (0 disables it).
    pub noise_std: f64,
    /// Width of the linear intensity ramp across the surface, in mm.
    pub ramp_width_mm: f64,
    pub noise_seed: u64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            dims: [64, 64, 64],
            spacing: [0.75, 0.75, 0.75],
            contrast: 100.0,
            noise_std: 2.0,
            ramp_width_mm: 1.5,
            noise_seed: 0,
        }
    }
}

impl RenderOptions {
    fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 8) {
            return Err(Error::invalid("render dims must be at least 8 per axis"));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("render spacing must be positive"));
        }
        if !(self.contrast > 0.0) {
            return Err(Error::invalid("render contrast must be positive"));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::invalid("render noise_std must be non-negative"));
        }
        if !(self.ramp_width_mm > 0.0) {
            return Err(Error::invalid("render ramp width must be positive"));
        }
        Ok(())
    }

    /// Volume centered on the world origin: voxel-center grid spans
    /// `±(dims-1)/2 * spacing` per axis.
    pub fn origin(&self) -> [f64; 3] {
        [
            -0.5 * (self.dims[0] - 1) as f64 * self.spacing[0],
            -0.5 * (self.dims[1] - 1) as f64 * self.spacing[1],
            -0.5 * (self.dims[2] - 1) as f64 * self.spacing[2],
        ]
    }
}

/// Degradations applied to held-out image outliers.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImageOutlierKind {
    /// Multiplies every intensity by `factor` (0 < factor < 1), shrinking
    /// the interior/exterior gap.
    LowContrast { factor: f64 },
    /// Adds fresh zero-mean Gaussian noise of the given deviation on top of
    /// whatever the render already contains.
    HighNoise { std: f64 },
    /// Multiplies by a linear gain field along x with unit gain at the
    /// center voxel; gain spans `1 ± slope` across the half-extent.
    BiasField { slope: f64 },
}

const BIN_SHIFT: usize = 2; // 4 voxels per bin cell

struct FaceBins {
    counts: Vec<Vec<u32>>,
    nbx: usize,
    nby: usize,
}

impl FaceBins {
    #[inline]
    fn cell(&self, bx: usize, by: usize, bz: usize) -> &[u32] {
        &self.counts[bx + self.nbx * (by + self.nby * bz)]
    }
}

fn bin_faces(mesh: &SurfaceMesh, opts: &RenderOptions, band: f64) -> FaceBins {
    let origin = opts.origin();
    let nbx = (opts.dims[0] >> BIN_SHIFT) + 1;
    let nby = (opts.dims[1] >> BIN_SHIFT) + 1;
    let nbz = (opts.dims[2] >> BIN_SHIFT) + 1;
    let mut counts = vec![Vec::new(); nbx * nby * nbz];
    let to_bin = |w: f64, axis: usize, max_bin: usize| -> usize {
        let idx = (w - origin[axis]) / opts.spacing[axis];
        let idx = idx.clamp(0.0, (opts.dims[axis] - 1) as f64) as usize;
        (idx >> BIN_SHIFT).min(max_bin - 1)
    };
    for (fi, face) in mesh.faces.iter().enumerate() {
        let pts = [mesh.vertices[face[0]], mesh.vertices[face[1]], mesh.vertices[face[2]]];
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in pts {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a] - band);
                hi[a] = hi[a].max(p[a] + band);
            }
        }
        let (bx0, bx1) = (to_bin(lo[0], 0, nbx), to_bin(hi[0], 0, nbx));
        let (by0, by1) = (to_bin(lo[1], 1, nby), to_bin(hi[1], 1, nby));
        let (bz0, bz1) = (to_bin(lo[2], 2, nbz), to_bin(hi[2], 2, nbz));
        for bz in bz0..=bz1 {
            for by in by0..=by1 {
                for bx in bx0..=bx1 {
                    counts[bx + nbx * (by + nby * bz)].push(fi as u32);
                }
            }
        }
    }
    FaceBins { counts, nbx, nby }
}

/// x-coordinates where the +x ray through `(ry, rz)` crosses the mesh.
fn row_crossings(mesh: &SurfaceMesh, faces: &[u32], ry: f64, rz: f64, xs: &mut Vec<f64>) {
    xs.clear();
    for &fi in faces {
        let f = mesh.faces[fi as usize];
        let v0 = mesh.vertices[f[0]];
        let v1 = mesh.vertices[f[1]];
        let v2 = mesh.vertices[f[2]];
        if let Some(x) = ray_x_triangle(v0, v1, v2, ry, rz) {
            xs.push(x);
        }
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
}

/// Moller-Trumbore specialized to direction (1, 0, 0); returns the crossing
/// x, or None when the ray misses or runs parallel to the face.
fn ray_x_triangle(v0: Vec3, v1: Vec3, v2: Vec3, ry: f64, rz: f64) -> Option<f64> {
    let e1 = [v1[0] - v0[0], v1[1] - v0[1], v1[2] - v0[2]];
    let e2 = [v2[0] - v0[0], v2[1] - v0[1], v2[2] - v0[2]];
    // h = dir x e2 with dir = (1,0,0)
    let h = [0.0, -e2[2], e2[1]];
    let a = e1[0] * h[0] + e1[1] * h[1] + e1[2] * h[2];
    if a.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / a;
    let s = [-v0[0], ry - v0[1], rz - v0[2]];
    let u = inv * (s[0] * h[0] + s[1] * h[1] + s[2] * h[2]);
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = [
        s[1] * e1[2] - s[2] * e1[1],
        s[2] * e1[0] - s[0] * e1[2],
        s[0] * e1[1] - s[1] * e1[0],
    ];
    let v = inv * q[0];
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(inv * (e2[0] * q[0] + e2[1] * q[1] + e2[2] * q[2]))
}

pub fn render_volume(mesh: &SurfaceMesh, opts: &RenderOptions) -> Result<VolumeImage> {
    opts.validate()?;
    let origin = opts.origin();
    let (lo, hi) = mesh.bounding_box();
    let half = opts.ramp_width_mm * 0.5;
    for a in 0..3 {
        let extent_hi = origin[a] + (opts.dims[a] - 1) as f64 * opts.spacing[a];
        if lo[a] - half < origin[a] || hi[a] + half > extent_hi {
            return Err(Error::invalid(format!(
                "mesh (with ramp margin) extends outside the render volume on axis {a}: \
                 [{:.3}, {:.3}] vs [{:.3}, {:.3}]",
                lo[a] - half,
                hi[a] + half,
                origin[a],
                extent_hi
            )));
        }
    }

    let band = opts.ramp_width_mm;
    let bins = bin_faces(mesh, opts, band);

    // Tiny fixed ray offset so rows never pass exactly through mesh edges.
    let jy = 1.23e-5 * opts.spacing[1];
    let jz = 2.17e-5 * opts.spacing[2];

    let [nx, ny, nz] = opts.dims;
    let mut volume = VolumeImage::zeros(opts.dims, opts.spacing, origin);
    let mut xs: Vec<f64> = Vec::new();
    for z in 0..nz {
        let wz = origin[2] + z as f64 * opts.spacing[2];
        let bz = z >> BIN_SHIFT;
        for y in 0..ny {
            let wy = origin[1] + y as f64 * opts.spacing[1];
            let by = y >> BIN_SHIFT;
            // Parity needs every face the row can hit, so gather crossings
            // over the full x range of bins at this (y, z).
            let mut row_faces: Vec<u32> = Vec::new();
            for bx in 0..bins.nbx {
                row_faces.extend_from_slice(bins.cell(bx, by, bz));
            }
            row_faces.sort_unstable();
            row_faces.dedup();
            row_crossings(mesh, &row_faces, wy + jy, wz + jz, &mut xs);

            let mut crossing_ptr = 0usize;
            for x in 0..nx {
                let wx = origin[0] + x as f64 * opts.spacing[0];
                while crossing_ptr < xs.len() && xs[crossing_ptr] <= wx {
                    crossing_ptr += 1;
                }
                let inside = crossing_ptr % 2 == 1;

                let bx = x >> BIN_SHIFT;
                let nearby = bins.cell(bx, by, bz);
                let mut d = band;
                if !nearby.is_empty() {
                    let p = [wx, wy, wz];
                    let mut best = f64::INFINITY;
                    for &fi in nearby {
                        let f = mesh.faces[fi as usize];
                        let d2 = point_triangle_distance_sq(
                            p,
                            mesh.vertices[f[0]],
                            mesh.vertices[f[1]],
                            mesh.vertices[f[2]],
                        );
                        if d2 < best {
                            best = d2;
                        }
                    }
                    d = best.sqrt().min(band);
                }
                let sd = if inside { -d } else { d };
                let frac = (0.5 - sd / opts.ramp_width_mm).clamp(0.0, 1.0);
                let vi = volume.index(x, y, z);
                volume.voxels[vi] = (opts.contrast * frac) as f32;
            }
        }
    }

    if opts.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.noise_seed);
        let normal = Normal::new(0.0, opts.noise_std).map_err(|_| Error::invalid("bad noise std"))?;
        for v in &mut volume.voxels {
            *v += normal.sample(&mut rng) as f32;
        }
    }
    Ok(volume)
}

/// Returns a degraded copy of `volume`; the input is left untouched.
pub fn inject_image_outlier(
    volume: &VolumeImage,
    kind: ImageOutlierKind,
    seed: u64,
) -> Result<VolumeImage> {
    let mut out = volume.clone();
    match kind {
        ImageOutlierKind::LowContrast { factor } => {
            if !(factor > 0.0 && factor < 1.0) {
                return Err(Error::invalid("low-contrast factor must lie in (0, 1)"));
            }
            for v in &mut out.voxels {
                *v = (*v as f64 * factor) as f32;
            }
        }
        ImageOutlierKind::HighNoise { std } => {
            if !(std > 0.0) || !std.is_finite() {
                return Err(Error::invalid("high-noise std must be positive"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, std).map_err(|_| Error::invalid("bad noise std"))?;
            for v in &mut out.voxels {
                *v += normal.sample(&mut rng) as f32;
            }
        }
        ImageOutlierKind::BiasField { slope } => {
            if !(slope > 0.0 && slope < 1.0) {
                return Err(Error::invalid("bias-field slope must lie in (0, 1)"));
            }
            let cx = out.dims[0] / 2;
            let half_extent = (out.dims[0] as f64) / 2.0;
            for z in 0..out.dims[2] {
                for y in 0..out.dims[1] {
                    for x in 0..out.dims[0] {
                        let gain = 1.0 + slope * (x as f64 - cx as f64) / half_extent;
                        let i = out.index(x, y, z);
                        out.voxels[i] = (out.voxels[i] as f64 * gain) as f32;
                    }
                }
            }
        }
    }
    Ok(out)
}
