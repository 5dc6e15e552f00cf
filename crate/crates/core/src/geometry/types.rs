use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// 3D point or vector in world millimetres.
pub type Vec3 = [f64; 3];

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm_sq(a: Vec3) -> f64 {
    dot(a, a)
}

pub(crate) fn norm(a: Vec3) -> f64 {
    norm_sq(a).sqrt()
}

pub(crate) fn dist_sq(a: Vec3, b: Vec3) -> f64 {
    norm_sq(sub(a, b))
}

/// Ordered list of M 3D points. Index m is the same anatomical landmark
/// across samples; the ordering *is* the correspondence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub points: Vec<Vec3>,
}

impl PointSet {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point set must contain at least one point"));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid(format!("non-finite coordinate at point {i}")));
            }
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Flatten to a 3M vector (x0,y0,z0,x1,...), the layout used by the PCA
    /// shape model.
    pub fn flattened(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.points.len() * 3);
        for p in &self.points {
            out.extend_from_slice(p);
        }
        out
    }

    /// Inverse of [`PointSet::flattened`].
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.is_empty() || flat.len() % 3 != 0 {
            return Err(Error::invalid(format!(
                "flat vector length {} is not a positive multiple of 3",
                flat.len()
            )));
        }
        Self::new(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn translated(&self, t: Vec3) -> PointSet {
        PointSet {
            points: self.points.iter().map(|p| add(*p, t)).collect(),
        }
    }

    pub fn centroid(&self) -> Vec3 {
        let mut c = [0.0; 3];
        for p in &self.points {
            c = add(c, *p);
        }
        scale(c, 1.0 / self.points.len() as f64)
    }
}

/// Triangulated surface: vertex positions plus face connectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl SurfaceMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.len() < 4 {
            return Err(Error::invalid(format!(
                "mesh needs at least 4 vertices, got {}",
                vertices.len()
            )));
        }
        if faces.is_empty() {
            return Err(Error::invalid("mesh needs at least one face"));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid(format!("non-finite coordinate at vertex {i}")));
            }
        }
        let nv = vertices.len();
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&ix| ix >= nv) {
                return Err(Error::invalid(format!("face {i} indexes past vertex count {nv}")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::invalid(format!("face {i} is degenerate: {f:?}")));
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertex_point_set(&self) -> PointSet {
        PointSet {
            points: self.vertices.clone(),
        }
    }

    pub fn translated(&self, t: Vec3) -> SurfaceMesh {
        SurfaceMesh {
            vertices: self.vertices.iter().map(|v| add(*v, t)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Replace vertex positions, keeping connectivity. Counts must match.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<SurfaceMesh> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::invalid(format!(
                "vertex count mismatch: {} vs {}",
                vertices.len(),
                self.vertices.len()
            )));
        }
        SurfaceMesh::new(vertices, self.faces.clone())
    }

    pub fn face_area(&self, f: [usize; 3]) -> f64 {
        let a = self.vertices[f[0]];
        let b = self.vertices[f[1]];
        let c = self.vertices[f[2]];
        let ab = sub(b, a);
        let ac = sub(c, a);
        let cx = [
            ab[1] * ac[2] - ab[2] * ac[1],
            ab[2] * ac[0] - ab[0] * ac[2],
            ab[0] * ac[1] - ab[1] * ac[0],
        ];
        0.5 * norm(cx)
    }

    /// Axis-aligned bounding box as (min, max).
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }
}
