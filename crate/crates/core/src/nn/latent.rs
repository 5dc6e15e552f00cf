//! Latent-distribution utilities: the in-graph reparameterized sample and
//! the plain sampler used at evaluation time.
//!
//! Neither clamps `logvar`; any clamping policy belongs to the encoder
//! head that produced it, so a degenerate logvar (for example -80)
//! collapses samples onto the mean exactly.

use super::graph::{Graph, Tensor};
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// z = mean + exp(logvar / 2) * eps with eps fixed; gradients reach both
/// `mean` and `logvar`.
pub fn reparam_sample(g: &Graph, mean: &Tensor, logvar: &Tensor, eps: &[f64]) -> Tensor {
    assert_eq!(mean.shape(), logvar.shape(), "mean/logvar shape mismatch");
    assert_eq!(mean.len(), eps.len(), "eps length mismatch");
    let eps_t = g.constant(eps.to_vec(), mean.shape());
    mean.add(&logvar.scale(0.5).exp().mul(&eps_t))
}

/// Draws `count` latent vectors from N(mean, diag(exp(logvar))).
///
/// Noise order is fixed: sample-major, dimension-minor, from one ChaCha20
/// stream seeded with `seed`.
pub fn sample_latents(mean: &[f64], logvar: &[f64], count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if mean.len() != logvar.len() {
        return Err(Error::invalid(format!(
            "mean has {} dims, logvar {}",
            mean.len(),
            logvar.len()
        )));
    }
    if mean.is_empty() {
        return Err(Error::invalid("empty latent"));
    }
    if count == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    if mean.iter().chain(logvar).any(|v| !v.is_finite()) {
        return Err(Error::invalid("latent parameters must be finite"));
    }
    let std: Vec<f64> = logvar.iter().map(|lv| (0.5 * lv).exp()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let z: Vec<f64> = mean
            .iter()
            .zip(&std)
            .map(|(&m, &s)| {
                let e: f64 = StandardNormal.sample(&mut rng);
                m + s * e
            })
            .collect();
        out.push(z);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_statistics_match_the_distribution() {
        let mean = vec![1.5, -2.0, 0.0];
        let logvar = vec![0.0, (0.5f64).ln() * 2.0, (2.0f64).ln() * 2.0]; // std 1, 0.5, 2
        let n = 100_000;
        let samples = sample_latents(&mean, &logvar, n, 99).unwrap();
        for d in 0..3 {
            let m: f64 = samples.iter().map(|z| z[d]).sum::<f64>() / n as f64;
            let v: f64 = samples.iter().map(|z| (z[d] - m) * (z[d] - m)).sum::<f64>() / n as f64;
            let want_std = (0.5 * logvar[d]).exp();
            assert!((m - mean[d]).abs() < 4.0 * want_std / (n as f64).sqrt() + 1e-3);
            assert!((v.sqrt() - want_std).abs() / want_std < 0.02);
        }
    }

    #[test]
    fn degenerate_logvar_collapses_onto_mean() {
        let mean = vec![0.3, -4.0];
        let logvar = vec![-80.0, -80.0];
        for z in sample_latents(&mean, &logvar, 1000, 5).unwrap() {
            assert!((z[0] - 0.3).abs() <= 1e-12);
            assert!((z[1] + 4.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let mean = vec![0.0; 4];
        let logvar = vec![0.0; 4];
        assert_eq!(
            sample_latents(&mean, &logvar, 10, 3).unwrap(),
            sample_latents(&mean, &logvar, 10, 3).unwrap()
        );
        assert_ne!(
            sample_latents(&mean, &logvar, 10, 3).unwrap(),
            sample_latents(&mean, &logvar, 10, 4).unwrap()
        );
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(sample_latents(&[0.0], &[0.0, 1.0], 1, 0).is_err());
        assert!(sample_latents(&[], &[], 1, 0).is_err());
        assert!(sample_latents(&[0.0], &[0.0], 0, 0).is_err());
        assert!(sample_latents(&[f64::NAN], &[0.0], 1, 0).is_err());
    }

    #[test]
    fn reparam_matches_plain_sampler_for_same_eps() {
        let g = Graph::new();
        let mean = g.constant(vec![1.0, 2.0], &[1, 2]);
        let logvar = g.constant(vec![0.4, -1.2], &[1, 2]);
        let eps = vec![0.7, -0.3];
        let z = reparam_sample(&g, &mean, &logvar, &eps);
        let want: Vec<f64> = vec![
            1.0 + (0.2f64).exp() * 0.7,
            2.0 + (-0.6f64).exp() * -0.3,
        ];
        for (a, b) in z.value().iter().zip(&want) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
