//! A small reverse-mode autodiff engine over f64 tensors.
//!
//! Scalar f64 everywhere, single threaded, fixed accumulation order:
//! training runs are reproducible to the bit and gradients can be checked
//! against central differences at f64 precision. The op set is exactly
//! what the teacher and student architectures need, nothing more.

mod adam;
mod compose;
mod conv;
mod graph;
mod latent;
mod neighbors;
mod norm;
mod params;

pub use adam::Adam;
pub use compose::{chamfer, linear, mse_rows};
pub use graph::{Grads, Graph, Tensor};
pub use latent::{reparam_sample, sample_latents};
pub use neighbors::knn_indices;
pub use params::{Init, Param, ParamRef, ParamStore};

#[cfg(test)]
mod fd_tests {
    use super::*;
    use crate::geometry::ChamferMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    /// Checks analytic gradients of `build`'s scalar output against central
    /// differences for every input coordinate.
    fn fd_check<F>(inputs: &[(Vec<f64>, Vec<usize>)], build: F, tol: f64)
    where
        F: Fn(&Graph, &[Tensor]) -> Tensor,
    {
        let eval = |data: &[Vec<f64>]| -> f64 {
            let g = Graph::new();
            let ts: Vec<Tensor> = data
                .iter()
                .zip(inputs)
                .map(|(d, (_, s))| g.constant(d.clone(), s))
                .collect();
            build(&g, &ts).scalar_value()
        };

        let g = Graph::new();
        let ts: Vec<Tensor> = inputs
            .iter()
            .map(|(d, s)| g.constant(d.clone(), s))
            .collect();
        let loss = build(&g, &ts);
        let grads = g.backward(&loss);
        let analytic: Vec<Vec<f64>> = ts.iter().map(|t| grads.of(t)).collect();

        let mut data: Vec<Vec<f64>> = inputs.iter().map(|(d, _)| d.clone()).collect();
        for pi in 0..data.len() {
            for j in 0..data[pi].len() {
                let orig = data[pi][j];
                let h = 1e-5 * (1.0 + orig.abs());
                data[pi][j] = orig + h;
                let lp = eval(&data);
                data[pi][j] = orig - h;
                let lm = eval(&data);
                data[pi][j] = orig;
                let numeric = (lp - lm) / (2.0 * h);
                let a = analytic[pi][j];
                let denom = a.abs().max(numeric.abs()).max(1.0);
                assert!(
                    (a - numeric).abs() / denom <= tol,
                    "input {pi}[{j}]: analytic {a:.9e} vs numeric {numeric:.9e}"
                );
            }
        }
    }

    fn randvec(rng: &mut ChaCha20Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(lo..hi)).collect()
    }

    /// Random values bounded away from zero (activation kinks).
    fn randvec_offzero(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let v: f64 = rng.gen_range(0.05..1.0);
                if rng.gen_bool(0.5) {
                    v
                } else {
                    -v
                }
            })
            .collect()
    }

    #[test]
    fn elementwise_arithmetic() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let a = randvec(&mut rng, 12, -2.0, 2.0);
        let b = randvec(&mut rng, 12, -2.0, 2.0);
        fd_check(
            &[(a, vec![3, 4]), (b, vec![3, 4])],
            |_, ts| {
                ts[0]
                    .mul(&ts[1])
                    .add(&ts[0])
                    .sub(&ts[1])
                    .scale(1.7)
                    .add_scalar(0.3)
                    .square()
                    .sum()
            },
            1e-6,
        );
    }

    #[test]
    fn exp_sqrt_mean() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let x = randvec(&mut rng, 10, 0.2, 1.5);
        fd_check(
            &[(x, vec![10])],
            |_, ts| ts[0].exp().sqrt().mean(),
            1e-6,
        );
    }

    #[test]
    fn clamp_passes_gradient_only_in_the_interior() {
        // Values placed well inside and well outside the clamp window.
        let x = vec![-3.0, -0.5, 0.2, 0.9, 4.0];
        fd_check(
            &[(x, vec![5])],
            |_, ts| ts[0].clamp(-1.0, 1.0).square().sum(),
            1e-6,
        );
        let g = Graph::new();
        let t = g.constant(vec![-3.0, 0.2, 4.0], &[3]);
        let loss = t.clamp(-1.0, 1.0).sum();
        let grads = g.backward(&loss);
        assert_eq!(grads.of(&t), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn activations() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let x = randvec_offzero(&mut rng, 14);
        fd_check(
            &[(x.clone(), vec![14])],
            |_, ts| ts[0].relu().sum(),
            1e-6,
        );
        fd_check(
            &[(x.clone(), vec![14])],
            |_, ts| ts[0].leaky_relu(0.2).square().sum(),
            1e-6,
        );
        fd_check(
            &[(x, vec![14]), (vec![0.35], vec![1])],
            |_, ts| ts[0].prelu(&ts[1]).square().sum(),
            1e-6,
        );
    }

    #[test]
    fn matmul_and_bias() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let a = randvec(&mut rng, 12, -1.0, 1.0);
        let w = randvec(&mut rng, 8, -1.0, 1.0);
        let b = randvec(&mut rng, 2, -1.0, 1.0);
        fd_check(
            &[(a, vec![3, 4]), (w, vec![4, 2]), (b, vec![2])],
            |_, ts| linear(&ts[0], &ts[1], &ts[2]).square().sum(),
            1e-6,
        );
    }

    #[test]
    fn reductions() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let x = randvec(&mut rng, 12, -1.0, 1.0);
        fd_check(
            &[(x, vec![4, 3])],
            |_, ts| ts[0].sum_axis1().square().mean(),
            1e-6,
        );
    }

    #[test]
    fn max_reductions_route_gradient_to_the_winner() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        // Distinct values so FD never crosses a tie.
        let mut x: Vec<f64> = (0..24).map(|i| i as f64 * 0.37).collect();
        use rand::seq::SliceRandom;
        x.shuffle(&mut rng);
        fd_check(
            &[(x.clone(), vec![6, 4])],
            |_, ts| ts[0].max_axis0().square().sum(),
            1e-6,
        );
        fd_check(
            &[(x, vec![6, 4])],
            |_, ts| ts[0].max_group(3).square().sum(),
            1e-6,
        );
    }

    #[test]
    fn structural_ops() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let a = randvec(&mut rng, 6, -1.0, 1.0);
        let b = randvec(&mut rng, 8, -1.0, 1.0);
        fd_check(
            &[(a.clone(), vec![2, 3]), (b, vec![2, 4])],
            |_, ts| ts[0].concat_cols(&ts[1]).square().sum(),
            1e-6,
        );
        // Repeated gather indices must accumulate.
        fd_check(
            &[(a.clone(), vec![2, 3])],
            |_, ts| ts[0].gather_rows(&[1, 0, 1, 1]).square().sum(),
            1e-6,
        );
        fd_check(
            &[(a[..3].to_vec(), vec![3])],
            |_, ts| ts[0].broadcast_row(5).square().sum(),
            1e-6,
        );
        fd_check(
            &[(a, vec![6])],
            |_, ts| ts[0].reshape(&[2, 3]).sum_axis1().square().sum(),
            1e-6,
        );
    }

    #[test]
    fn conv2d_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let x = randvec(&mut rng, 2 * 2 * 5 * 6, -1.0, 1.0);
        let w = randvec(&mut rng, 3 * 2 * 3 * 3, -0.5, 0.5);
        let b = randvec(&mut rng, 3, -0.5, 0.5);
        fd_check(
            &[(x, vec![2, 2, 5, 6]), (w, vec![3, 2, 3, 3]), (b, vec![3])],
            |_, ts| ts[0].conv2d(&ts[1], &ts[2]).square().sum(),
            1e-5,
        );
    }

    #[test]
    fn maxpool2d_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut x: Vec<f64> = (0..72).map(|i| i as f64 * 0.11).collect();
        use rand::seq::SliceRandom;
        x.shuffle(&mut rng);
        fd_check(
            &[(x, vec![1, 2, 6, 6])],
            |_, ts| ts[0].maxpool2d().square().sum(),
            1e-6,
        );
    }

    #[test]
    fn conv3d_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let x = randvec(&mut rng, 2 * 4 * 4 * 3, -1.0, 1.0);
        let w = randvec(&mut rng, 2 * 2 * 27, -0.5, 0.5);
        let b = randvec(&mut rng, 2, -0.5, 0.5);
        fd_check(
            &[
                (x, vec![1, 2, 4, 4, 3]),
                (w, vec![2, 2, 3, 3, 3]),
                (b, vec![2]),
            ],
            |_, ts| ts[0].conv3d(&ts[1], &ts[2]).square().sum(),
            1e-5,
        );
    }

    #[test]
    fn maxpool3d_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut x: Vec<f64> = (0..64).map(|i| i as f64 * 0.23).collect();
        use rand::seq::SliceRandom;
        x.shuffle(&mut rng);
        fd_check(
            &[(x, vec![1, 1, 4, 4, 4])],
            |_, ts| ts[0].maxpool3d().square().sum(),
            1e-6,
        );
    }

    #[test]
    fn batchnorm_training_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let x = randvec(&mut rng, 4 * 3 * 5, -2.0, 2.0);
        let gamma = randvec(&mut rng, 3, 0.5, 1.5);
        let beta = randvec(&mut rng, 3, -0.5, 0.5);
        fd_check(
            &[(x, vec![4, 3, 5]), (gamma, vec![3]), (beta, vec![3])],
            |_, ts| {
                let (y, _) = ts[0].batch_norm(&ts[1], &ts[2], 1e-5, None);
                y.square().sum()
            },
            2e-5,
        );
    }

    #[test]
    fn batchnorm_eval_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let x = randvec(&mut rng, 2 * 3 * 4, -2.0, 2.0);
        let gamma = randvec(&mut rng, 3, 0.5, 1.5);
        let beta = randvec(&mut rng, 3, -0.5, 0.5);
        let mu = vec![0.1, -0.2, 0.3];
        let var = vec![1.1, 0.9, 1.3];
        fd_check(
            &[(x, vec![2, 3, 4]), (gamma, vec![3]), (beta, vec![3])],
            |_, ts| {
                let (y, stats) = ts[0].batch_norm(&ts[1], &ts[2], 1e-5, Some((&mu, &var)));
                assert!(stats.is_none());
                y.square().sum()
            },
            1e-6,
        );
    }

    #[test]
    fn batchnorm_normalizes_in_training_mode() {
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let x = randvec(&mut rng, 4 * 2 * 8, -3.0, 5.0);
        let g = Graph::new();
        let xt = g.constant(x, &[4, 2, 8]);
        let gamma = g.constant(vec![1.0, 1.0], &[2]);
        let beta = g.constant(vec![0.0, 0.0], &[2]);
        let (y, stats) = xt.batch_norm(&gamma, &beta, 1e-8, None);
        let (mu, var) = stats.unwrap();
        assert_eq!(mu.len(), 2);
        assert_eq!(var.len(), 2);
        let v = y.value();
        // Per-channel mean ~0, variance ~1 after normalization.
        for c in 0..2 {
            let mut xs = Vec::with_capacity(32);
            for b in 0..4 {
                for s in 0..8 {
                    xs.push(v[(b * 2 + c) * 8 + s]);
                }
            }
            let m: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
            let vv: f64 = xs.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / xs.len() as f64;
            assert!(m.abs() < 1e-10);
            assert!((vv - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn chamfer_gradients_both_modes() {
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        let a = randvec(&mut rng, 21, -2.0, 2.0);
        let b = randvec(&mut rng, 15, -2.0, 2.0);
        for (mode, tol) in [(ChamferMode::SquaredL2Point, 1e-6), (ChamferMode::L1Point, 1e-5)] {
            fd_check(
                &[(a.clone(), vec![7, 3]), (b.clone(), vec![5, 3])],
                |_, ts| chamfer(&ts[0], &ts[1], mode),
                tol,
            );
        }
    }

    #[test]
    fn mse_and_reparam_gradients() {
        let mut rng = ChaCha20Rng::seed_from_u64(16);
        let a = randvec(&mut rng, 12, -1.0, 1.0);
        let b = randvec(&mut rng, 12, -1.0, 1.0);
        fd_check(
            &[(a, vec![4, 3]), (b, vec![4, 3])],
            |_, ts| mse_rows(&ts[0], &ts[1]),
            1e-6,
        );
        let mean = randvec(&mut rng, 6, -1.0, 1.0);
        let logvar = randvec(&mut rng, 6, -1.5, 0.5);
        let eps = randvec(&mut rng, 6, -1.0, 1.0);
        fd_check(
            &[(mean, vec![2, 3]), (logvar, vec![2, 3])],
            |g, ts| reparam_sample(g, &ts[0], &ts[1], &eps).square().sum(),
            1e-6,
        );
    }

    #[test]
    fn param_grads_align_with_store_and_accumulate_rebinds() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let mut store = ParamStore::new();
        let w = store.register("w", &[3], Init::HeNormal { fan_in: 3 }, &mut rng);
        let u = store.register("u", &[3], Init::HeNormal { fan_in: 3 }, &mut rng);

        let g = Graph::new();
        let wt1 = g.param(&store, w);
        let wt2 = g.param(&store, w); // bound twice
        let ut = g.param(&store, u);
        let loss = wt1.mul(&wt2).sum().add(&ut.sum());
        let grads = g.backward(&loss);
        let pg = g.param_grads(&store, &grads);
        let wv = &store.get(w).data;
        for j in 0..3 {
            // d(w*w)/dw = 2w, accumulated across the two bindings.
            assert!((pg[w.index()][j] - 2.0 * wv[j]).abs() < 1e-12);
            assert!((pg[u.index()][j] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn param_grads_separate_stores_bound_in_one_graph() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let mut sa = ParamStore::new();
        let mut sb = ParamStore::new();
        // Same ref indices in both stores; identity must come from the
        // store, not the index.
        let a0 = sa.register("a0", &[2], Init::Constant(2.0), &mut rng);
        let b0 = sb.register("b0", &[2], Init::Constant(5.0), &mut rng);

        let g = Graph::new();
        let at = g.param(&sa, a0);
        let bt = g.param(&sb, b0);
        let loss = at.mul(&bt).sum(); // dL/da = b, dL/db = a
        let grads = g.backward(&loss);
        let ga = g.param_grads(&sa, &grads);
        let gb = g.param_grads(&sb, &grads);
        assert_eq!(ga[a0.index()], vec![5.0, 5.0]);
        assert_eq!(gb[b0.index()], vec![2.0, 2.0]);
        // A clone keeps its identity and still collects the same grads.
        let gc = g.param_grads(&sa.clone(), &grads);
        assert_eq!(gc[a0.index()], vec![5.0, 5.0]);
    }

    #[test]
    fn sqrt_subgradient_at_zero_is_zero() {
        let g = Graph::new();
        let mut store = ParamStore::new();
        let mut rng = ChaCha20Rng::seed_from_u64(29);
        let x = store.register("x", &[2], Init::Zeros, &mut rng);
        store.get_mut(x).data = vec![0.0, 4.0];
        let xt = g.param(&store, x);
        let loss = xt.sqrt().sum();
        let grads = g.backward(&loss);
        let pg = g.param_grads(&store, &grads);
        assert_eq!(pg[x.index()][0], 0.0);
        assert!((pg[x.index()][1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn backward_is_deterministic() {
        let mut rng = ChaCha20Rng::seed_from_u64(18);
        let x = randvec(&mut rng, 40, -1.0, 1.0);
        let run = || {
            let g = Graph::new();
            let t = g.constant(x.clone(), &[10, 4]);
            let loss = t.leaky_relu(0.2).sum_axis1().square().mean();
            let grads = g.backward(&loss);
            (loss.scalar_value(), grads.of(&t))
        };
        let (l1, g1) = run();
        let (l2, g2) = run();
        assert_eq!(l1.to_bits(), l2.to_bits());
        assert_eq!(
            g1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            g2.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
