//! Batch normalization kernels over [b, c, spatial…] buffers.

/// Everything the backward pass needs from a training-mode forward.
pub(crate) struct BnCache {
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
    pub eps: f64,
    /// Spatial extent per channel (product of dims after the channel dim).
    pub spatial: usize,
    pub channels: usize,
}

#[inline]
fn channel_of(i: usize, spatial: usize, channels: usize) -> usize {
    (i / spatial) % channels
}

pub(crate) fn batchnorm_forward_train(
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    shape: &[usize],
    eps: f64,
) -> (Vec<f64>, BnCache) {
    let c = shape[1];
    let spatial: usize = shape[2..].iter().product::<usize>().max(1);
    let per_channel = (x.len() / c) as f64;

    let mut mu = vec![0.0; c];
    for (i, &v) in x.iter().enumerate() {
        mu[channel_of(i, spatial, c)] += v;
    }
    for m in &mut mu {
        *m /= per_channel;
    }
    // Biased variance, matching the normalization actually applied.
    let mut var = vec![0.0; c];
    for (i, &v) in x.iter().enumerate() {
        let ch = channel_of(i, spatial, c);
        let d = v - mu[ch];
        var[ch] += d * d;
    }
    for v in &mut var {
        *v /= per_channel;
    }

    let mut y = vec![0.0; x.len()];
    for (i, &v) in x.iter().enumerate() {
        let ch = channel_of(i, spatial, c);
        y[i] = gamma[ch] * (v - mu[ch]) / (var[ch] + eps).sqrt() + beta[ch];
    }
    (
        y,
        BnCache {
            mu,
            var,
            eps,
            spatial,
            channels: c,
        },
    )
}

pub(crate) fn batchnorm_backward(
    x: &[f64],
    gamma: &[f64],
    gout: &[f64],
    cache: &BnCache,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let c = cache.channels;
    let spatial = cache.spatial;
    let n = (x.len() / c) as f64;

    let inv_std: Vec<f64> = cache.var.iter().map(|&v| 1.0 / (v + cache.eps).sqrt()).collect();

    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    // Accumulators for the batch-statistic terms of dx.
    let mut sum_dy = vec![0.0; c];
    let mut sum_dy_xhat = vec![0.0; c];
    for i in 0..x.len() {
        let ch = channel_of(i, spatial, c);
        let xhat = (x[i] - cache.mu[ch]) * inv_std[ch];
        dgamma[ch] += gout[i] * xhat;
        dbeta[ch] += gout[i];
        sum_dy[ch] += gout[i];
        sum_dy_xhat[ch] += gout[i] * xhat;
    }

    // dx = gamma * inv_std / N * (N dy - sum(dy) - xhat * sum(dy xhat))
    let mut dx = vec![0.0; x.len()];
    for i in 0..x.len() {
        let ch = channel_of(i, spatial, c);
        let xhat = (x[i] - cache.mu[ch]) * inv_std[ch];
        dx[i] = gamma[ch] * inv_std[ch] / n
            * (n * gout[i] - sum_dy[ch] - xhat * sum_dy_xhat[ch]);
    }
    (dx, dgamma, dbeta)
}
