use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Parameters of one member of the synthetic shape family: a bump-modulated
/// ellipsoid with an optional appendage lobe along +x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    /// Ellipsoid semi-axes (a, b, c) in mm.
    pub semi_axes: [f64; 3],
    /// Radial bump amplitude in mm.
    pub bump_amplitude: f64,
    /// Angular frequency of the bump pattern.
    pub bump_frequency: u32,
    /// Appendage lobe length in mm (0 disables it).
    pub appendage_length: f64,
}

impl ShapeParams {
    /// Upper bound on the distance of any surface point from the origin.
    pub fn max_radius(&self) -> f64 {
        let a = self.semi_axes.iter().cloned().fold(0.0, f64::max);
        a + self.bump_amplitude + self.appendage_length
    }

    pub fn validate(&self, ranges: &ParamRanges) -> Result<()> {
        if self.semi_axes.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("semi-axes must be positive and finite"));
        }
        if !(self.bump_amplitude >= 0.0) || !(self.appendage_length >= 0.0) {
            return Err(Error::invalid("bump amplitude and appendage length must be >= 0"));
        }
        let _ = ranges;
        Ok(())
    }
}

/// Inlier sampling ranges for each shape parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub semi_axes: [[f64; 2]; 3],
    pub bump_amplitude: [f64; 2],
    pub bump_frequency: [u32; 2],
    pub appendage_length: [f64; 2],
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            semi_axes: [[10.0, 14.0], [8.0, 12.0], [6.0, 10.0]],
            bump_amplitude: [0.0, 1.0],
            bump_frequency: [2, 5],
            appendage_length: [0.0, 3.0],
        }
    }
}

impl ParamRanges {
    /// True when `p` lies inside every inlier range bound.
    pub fn contains(&self, p: &ShapeParams) -> bool {
        for k in 0..3 {
            if p.semi_axes[k] < self.semi_axes[k][0] || p.semi_axes[k] > self.semi_axes[k][1] {
                return false;
            }
        }
        p.bump_amplitude >= self.bump_amplitude[0]
            && p.bump_amplitude <= self.bump_amplitude[1]
            && p.bump_frequency >= self.bump_frequency[0]
            && p.bump_frequency <= self.bump_frequency[1]
            && p.appendage_length >= self.appendage_length[0]
            && p.appendage_length <= self.appendage_length[1]
    }
}

/// Shape parameters plus the generation-time outlier tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedParams {
    pub params: ShapeParams,
    pub shape_outlier: bool,
}

fn draw_inlier(rng: &mut ChaCha20Rng, ranges: &ParamRanges) -> ShapeParams {
    let u = |rng: &mut ChaCha20Rng, r: [f64; 2]| rng.gen_range(r[0]..=r[1]);
    ShapeParams {
        semi_axes: [
            u(rng, ranges.semi_axes[0]),
            u(rng, ranges.semi_axes[1]),
            u(rng, ranges.semi_axes[2]),
        ],
        bump_amplitude: u(rng, ranges.bump_amplitude),
        bump_frequency: rng.gen_range(ranges.bump_frequency[0]..=ranges.bump_frequency[1]),
        appendage_length: u(rng, ranges.appendage_length),
    }
}

/// Shape outliers start from an inlier draw, then push one continuous field
/// beyond its inlier range by 20-60% of the range span. The overshoot is
/// capped so outlier shapes still fit the rendering volume.
fn draw_shape_outlier(rng: &mut ChaCha20Rng, ranges: &ParamRanges) -> ShapeParams {
    let mut p = draw_inlier(rng, ranges);
    let field = rng.gen_range(0..4usize);
    let excess = |rng: &mut ChaCha20Rng, r: [f64; 2]| {
        let span = (r[1] - r[0]).max(1e-6);
        r[1] + span * rng.gen_range(0.2..0.6)
    };
    match field {
        0 => p.semi_axes[0] = excess(rng, ranges.semi_axes[0]),
        1 => p.semi_axes[1] = excess(rng, ranges.semi_axes[1]),
        2 => p.semi_axes[2] = excess(rng, ranges.semi_axes[2]),
        _ => p.appendage_length = excess(rng, ranges.appendage_length),
    }
    p
}

/// Draw `count` parameter sets; each is independently a shape outlier with
/// probability `outlier_fraction`. Deterministic given `seed`.
pub fn sample_shape_params(
    count: usize,
    seed: u64,
    outlier_fraction: f64,
    ranges: &ParamRanges,
) -> Result<Vec<TaggedParams>> {
    if count < 1 {
        return Err(Error::invalid("count must be >= 1"));
    }
    if !(0.0..=1.0).contains(&outlier_fraction) {
        return Err(Error::invalid("outlier_fraction must be in [0, 1]"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let is_outlier = rng.gen::<f64>() < outlier_fraction;
        let params = if is_outlier {
            draw_shape_outlier(&mut rng, ranges)
        } else {
            draw_inlier(&mut rng, ranges)
        };
        out.push(TaggedParams {
            params,
            shape_outlier: is_outlier,
        });
    }
    Ok(out)
}
