use super::types::{add, dot, norm_sq, scale, sub, Vec3};

/// Exact squared distance from `p` to triangle `(a, b, c)`, via Voronoi
/// region classification of the closest point.
pub fn point_triangle_distance_sq(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> f64 {
    norm_sq(sub(p, closest_point_on_triangle(p, a, b, c)))
}

/// Closest point on triangle `(a, b, c)` to `p`.
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);

    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }

    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return add(a, scale(ab, v));
    }

    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return add(a, scale(ac, w));
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return add(b, scale(sub(c, b), w));
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    add(add(a, scale(ab, v)), scale(ac, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Independent oracle: enumerate the interior critical point, the three
    /// clamped edge minimisers, and the three vertices; take the best.
    fn oracle_distance_sq(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> f64 {
        let mut best = f64::INFINITY;
        let eval = |s: f64, t: f64| {
            let q = add(add(a, scale(sub(b, a), s)), scale(sub(c, a), t));
            norm_sq(sub(p, q))
        };
        // Interior: unconstrained minimiser of the quadratic in (s, t).
        let e0 = sub(b, a);
        let e1 = sub(c, a);
        let ap = sub(p, a);
        let (a00, a01, a11) = (dot(e0, e0), dot(e0, e1), dot(e1, e1));
        let (b0, b1) = (dot(e0, ap), dot(e1, ap));
        let det = a00 * a11 - a01 * a01;
        if det.abs() > 1e-18 {
            let s = (a11 * b0 - a01 * b1) / det;
            let t = (a00 * b1 - a01 * b0) / det;
            if s >= 0.0 && t >= 0.0 && s + t <= 1.0 {
                best = best.min(eval(s, t));
            }
        }
        // Edges: 1D quadratics clamped to [0, 1].
        let clamp01 = |x: f64| x.clamp(0.0, 1.0);
        // edge a-b: t = 0
        if a00 > 0.0 {
            best = best.min(eval(clamp01(b0 / a00), 0.0));
        }
        // edge a-c: s = 0
        if a11 > 0.0 {
            best = best.min(eval(0.0, clamp01(b1 / a11)));
        }
        // edge b-c: s + t = 1, parameterised by t
        let bc = sub(c, b);
        let bp = sub(p, b);
        let bb = dot(bc, bc);
        if bb > 0.0 {
            let t = clamp01(dot(bc, bp) / bb);
            best = best.min(eval(1.0 - t, t));
        }
        // Vertices.
        best = best.min(eval(0.0, 0.0)).min(eval(1.0, 0.0)).min(eval(0.0, 1.0));
        best
    }

    #[test]
    fn orthogonal_projection_case() {
        let d = point_triangle_distance_sq(
            [0.25, 0.25, 1.0],
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
        );
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_enumeration_oracle() {
        let mut rng = StdRng::seed_from_u64(21);
        for _ in 0..500 {
            let r = |rng: &mut StdRng| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let (a, b, c, p) = (r(&mut rng), r(&mut rng), r(&mut rng), r(&mut rng));
            let got = point_triangle_distance_sq(p, a, b, c);
            let want = oracle_distance_sq(p, a, b, c);
            assert!(
                (got.sqrt() - want.sqrt()).abs() <= 1e-9,
                "got {got}, want {want}"
            );
        }
    }

    #[test]
    fn zero_on_the_triangle() {
        let a = [0.0, 0.0, 0.0];
        let b = [2.0, 0.0, 0.0];
        let c = [0.0, 2.0, 0.0];
        let inside = [0.5, 0.5, 0.0];
        assert!(point_triangle_distance_sq(inside, a, b, c) < 1e-30);
    }
}
