use super::params::ShapeParams;
use crate::geometry::{SurfaceMesh, Vec3};

/// Radial surface offset (mm) of the bump + appendage fields along the unit
/// direction `u` at spherical coordinates `(theta, phi)`.
fn radial_offset(p: &ShapeParams, theta: f64, phi: f64, u: Vec3) -> f64 {
    let n = p.bump_frequency as f64;
    let bumps = p.bump_amplitude * (n * theta).sin() * (n * phi).cos();
    // Appendage: a smooth lobe around the +x axis.
    let cos_gap = u[0].clamp(-1.0, 1.0);
    let angle = cos_gap.acos();
    let sigma = 0.5; // lobe angular width (rad)
    let appendage = p.appendage_length * (-(angle / sigma).powi(2)).exp();
    bumps + appendage
}

/// Triangulate the parametric shape on a closed UV-sphere grid.
///
/// `resolution` is the number of latitude rings; the grid uses twice as many
/// longitude steps, giving `(resolution - 1) * 2 * resolution + 2` vertices.
/// Identical parameters produce identical meshes.
pub fn build_mesh(p: &ShapeParams, resolution: usize) -> SurfaceMesh {
    assert!(resolution >= 8, "mesh resolution must be >= 8");
    let n_theta = resolution; // latitude bands; interior rings = n_theta - 1
    let n_phi = 2 * resolution;

    let surface_point = |theta: f64, phi: f64| -> Vec3 {
        let base = [
            p.semi_axes[0] * theta.sin() * phi.cos(),
            p.semi_axes[1] * theta.sin() * phi.sin(),
            p.semi_axes[2] * theta.cos(),
        ];
        let r = (base[0] * base[0] + base[1] * base[1] + base[2] * base[2]).sqrt();
        let u = if r > 0.0 {
            [base[0] / r, base[1] / r, base[2] / r]
        } else {
            [0.0, 0.0, 1.0]
        };
        let off = radial_offset(p, theta, phi, u);
        [base[0] + off * u[0], base[1] + off * u[1], base[2] + off * u[2]]
    };

    let mut vertices: Vec<Vec3> = Vec::with_capacity((n_theta - 1) * n_phi + 2);
    vertices.push(surface_point(0.0, 0.0)); // north pole
    for i in 1..n_theta {
        let theta = std::f64::consts::PI * i as f64 / n_theta as f64;
        for j in 0..n_phi {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / n_phi as f64;
            vertices.push(surface_point(theta, phi));
        }
    }
    vertices.push(surface_point(std::f64::consts::PI, 0.0)); // south pole

    let ring = |i: usize, j: usize| 1 + (i - 1) * n_phi + (j % n_phi);
    let south = vertices.len() - 1;
    let mut faces: Vec<[usize; 3]> = Vec::with_capacity(2 * (n_theta - 1) * n_phi);
    // North cap fan.
    for j in 0..n_phi {
        faces.push([0, ring(1, j), ring(1, j + 1)]);
    }
    // Quad strips split into triangles.
    for i in 1..n_theta - 1 {
        for j in 0..n_phi {
            let (a, b) = (ring(i, j), ring(i, j + 1));
            let (c, d) = (ring(i + 1, j), ring(i + 1, j + 1));
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
    }
    // South cap fan.
    for j in 0..n_phi {
        faces.push([south, ring(n_theta - 1, j + 1), ring(n_theta - 1, j)]);
    }

    SurfaceMesh::new(vertices, faces).expect("generated mesh is structurally valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn sphere_params(r: f64) -> ShapeParams {
        ShapeParams {
            semi_axes: [r, r, r],
            bump_amplitude: 0.0,
            bump_frequency: 2,
            appendage_length: 0.0,
        }
    }

    #[test]
    fn sphere_vertices_lie_on_the_sphere() {
        let r = 7.5;
        let mesh = build_mesh(&sphere_params(r), 12);
        for v in &mesh.vertices {
            let d = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!((d - r).abs() <= 1e-6 * r, "radius {d}");
        }
    }

    #[test]
    fn ellipsoid_vertices_satisfy_the_implicit_equation() {
        let p = ShapeParams {
            semi_axes: [12.0, 9.0, 7.0],
            bump_amplitude: 0.0,
            bump_frequency: 3,
            appendage_length: 0.0,
        };
        let mesh = build_mesh(&p, 10);
        for v in &mesh.vertices {
            let q = (v[0] / p.semi_axes[0]).powi(2)
                + (v[1] / p.semi_axes[1]).powi(2)
                + (v[2] / p.semi_axes[2]).powi(2);
            assert!((q - 1.0).abs() <= 1e-6, "implicit value {q}");
        }
    }

    #[test]
    fn mesh_is_watertight() {
        let p = ShapeParams {
            semi_axes: [12.0, 9.0, 7.0],
            bump_amplitude: 0.8,
            bump_frequency: 4,
            appendage_length: 2.0,
        };
        let mesh = build_mesh(&p, 9);
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &mesh.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let key = (a.min(b), a.max(b));
                *edges.entry(key).or_insert(0) += 1;
            }
        }
        for (edge, count) in edges {
            assert_eq!(count, 2, "edge {edge:?} shared by {count} faces");
        }
    }

    #[test]
    fn identical_params_identical_mesh() {
        let p = ShapeParams {
            semi_axes: [11.0, 10.0, 8.0],
            bump_amplitude: 0.5,
            bump_frequency: 3,
            appendage_length: 1.0,
        };
        assert_eq!(build_mesh(&p, 10), build_mesh(&p, 10));
    }

    #[test]
    fn vertex_count_matches_formula() {
        let mesh = build_mesh(&sphere_params(5.0), 16);
        assert_eq!(mesh.vertex_count(), 15 * 32 + 2);
    }
}
