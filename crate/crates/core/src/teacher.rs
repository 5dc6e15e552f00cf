//! Surface teacher: a point-cloud autoencoder whose bottleneck drives an
//! implicit template-deformation decoder.
//!
//! The encoder is a stack of EdgeConv blocks (dynamic kNN graph in feature
//! space, shared edge MLP, neighbor max) followed by a global max pool and
//! a linear projection to the latent. Correspondences are produced by
//! displacing a fixed template point set with an MLP conditioned on the
//! latent; the displacement head starts at zero so training begins from
//! the template itself.
//!
//! Every operation is permutation invariant by construction: reordering
//! the input points leaves the latent bit-identical (kNN ties aside).

use crate::error::{Error, Result};
use crate::geometry::{chamfer_distance, ChamferMode, PointSet};
use crate::nn::{knn_indices, linear, Graph, Init, ParamRef, ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    /// Latent width L.
    pub latent_dim: usize,
    /// Output width of each EdgeConv block.
    pub edgeconv_dims: Vec<usize>,
    /// Neighbors per point in the dynamic graph.
    pub k: usize,
    /// Hidden width of the vertex-reconstruction branch.
    pub decoder_hidden: usize,
    /// Hidden widths of the implicit displacement MLP.
    pub implicit_hidden: Vec<usize>,
    /// Weight of the vertex MSE term in the teacher loss.
    pub alpha: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            latent_dim: 256,
            edgeconv_dims: vec![64, 64, 128],
            k: 27,
            decoder_hidden: 256,
            implicit_hidden: vec![256, 256],
            alpha: 1.0,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.k == 0 {
            return Err(Error::invalid("latent_dim and k must be positive"));
        }
        if self.edgeconv_dims.is_empty() || self.implicit_hidden.is_empty() {
            return Err(Error::invalid("teacher layer lists must be non-empty"));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid("alpha must be finite and non-negative"));
        }
        Ok(())
    }
}

struct LinearRefs {
    w: ParamRef,
    b: ParamRef,
}

/// Teacher model: configuration, template, and parameter handles. The
/// parameter values live in the [`ParamStore`] created by [`Teacher::new`].
pub struct Teacher {
    pub config: TeacherConfig,
    /// Fixed correspondence template, M x 3.
    pub template: PointSet,
    /// Vertex count the reconstruction branch was built for.
    pub vertex_count: usize,
    edge_layers: Vec<LinearRefs>,
    proj: LinearRefs,
    dec1: LinearRefs,
    dec2: LinearRefs,
    implicit: Vec<LinearRefs>,
    implicit_out: LinearRefs,
}

impl Teacher {
    /// Registers all parameters into a fresh store. `seed` fixes the
    /// initialization stream.
    pub fn new(
        config: TeacherConfig,
        template: PointSet,
        vertex_count: usize,
        seed: u64,
    ) -> Result<(Self, ParamStore)> {
        config.validate()?;
        if vertex_count < 4 {
            return Err(Error::invalid("teacher needs at least 4 vertices"));
        }
        let mut store = ParamStore::new();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut reg_linear = |store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, zero: bool| {
            let init = if zero {
                Init::Zeros
            } else {
                Init::XavierUniform { fan_in, fan_out }
            };
            LinearRefs {
                w: store.register(&format!("{name}.w"), &[fan_in, fan_out], init, &mut rng),
                b: store.register(&format!("{name}.b"), &[fan_out], Init::Zeros, &mut rng),
            }
        };

        let mut edge_layers = Vec::new();
        let mut d_in = 3usize;
        for (i, &d_out) in config.edgeconv_dims.iter().enumerate() {
            edge_layers.push(reg_linear(&mut store, &format!("enc.edge{i}"), 2 * d_in, d_out, false));
            d_in = d_out;
        }
        let proj = reg_linear(&mut store, "enc.proj", d_in, config.latent_dim, false);
        let dec1 = reg_linear(&mut store, "dec.fc1", config.latent_dim, config.decoder_hidden, false);
        let dec2 = reg_linear(&mut store, "dec.fc2", config.decoder_hidden, vertex_count * 3, false);

        let mut implicit = Vec::new();
        let mut h_in = config.latent_dim + 3;
        for (i, &h) in config.implicit_hidden.iter().enumerate() {
            implicit.push(reg_linear(&mut store, &format!("imp.fc{i}"), h_in, h, false));
            h_in = h;
        }
        // Zero displacement at init: correspondences start on the template.
        let implicit_out = reg_linear(&mut store, "imp.out", h_in, 3, true);

        Ok((
            Self {
                config,
                template,
                vertex_count,
                edge_layers,
                proj,
                dec1,
                dec2,
                implicit,
                implicit_out,
            },
            store,
        ))
    }

    /// EdgeConv encoder, graph-side: points [n,3] -> latent [1,L].
    pub fn encode_t(&self, g: &Graph, store: &ParamStore, points: &Tensor) -> Tensor {
        let n = points.shape()[0];
        assert!(
            n > self.config.k,
            "encoder needs more points ({n}) than neighbors k={}",
            self.config.k
        );
        let k = self.config.k;
        // Row i repeated k times, matching each neighbor row.
        let rep_idx: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat(i).take(k)).collect();
        let mut x = points.clone();
        for layer in &self.edge_layers {
            let feats = x.value();
            let d = x.shape()[1];
            let nbr_idx = knn_indices(&feats, d, k);
            let xi = x.gather_rows(&rep_idx);
            let xj = x.gather_rows(&nbr_idx);
            let edge = xi.concat_cols(&xj.sub(&xi));
            let w = g.param(store, layer.w);
            let b = g.param(store, layer.b);
            x = linear(&edge, &w, &b).leaky_relu(0.2).max_group(k);
        }
        let global = x.max_axis0().reshape(&[1, x.shape()[1]]);
        let w = g.param(store, self.proj.w);
        let b = g.param(store, self.proj.b);
        linear(&global, &w, &b)
    }

    /// Vertex reconstruction branch, graph-side: z [1,L] -> [NV,3].
    pub fn reconstruct_t(&self, g: &Graph, store: &ParamStore, z: &Tensor) -> Tensor {
        let w1 = g.param(store, self.dec1.w);
        let b1 = g.param(store, self.dec1.b);
        let w2 = g.param(store, self.dec2.w);
        let b2 = g.param(store, self.dec2.b);
        let h = linear(z, &w1, &b1).leaky_relu(0.2);
        linear(&h, &w2, &b2).reshape(&[self.vertex_count, 3])
    }

    /// Implicit decoder, graph-side: z [1,L] -> correspondences [M,3].
    pub fn correspondences_t(&self, g: &Graph, store: &ParamStore, z: &Tensor) -> Tensor {
        let m = self.template.len();
        let template = g.constant(self.template.flattened(), &[m, 3]);
        let zrow = z.reshape(&[self.config.latent_dim]).broadcast_row(m);
        let mut h = zrow.concat_cols(&template);
        for layer in &self.implicit {
            let w = g.param(store, layer.w);
            let b = g.param(store, layer.b);
            h = linear(&h, &w, &b).leaky_relu(0.2);
        }
        let w = g.param(store, self.implicit_out.w);
        let b = g.param(store, self.implicit_out.b);
        let disp = linear(&h, &w, &b);
        template.add(&disp)
    }

    /// Latent for a surface, outside any training graph.
    pub fn encode_surface(&self, store: &ParamStore, points: &PointSet) -> Result<Vec<f64>> {
        if points.len() <= self.config.k {
            return Err(Error::invalid(format!(
                "surface has {} points, need more than k={}",
                points.len(),
                self.config.k
            )));
        }
        let g = Graph::new();
        let p = g.constant(points.flattened(), &[points.len(), 3]);
        Ok(self.encode_t(&g, store, &p).value())
    }

    /// Reconstructed vertices for a latent.
    pub fn reconstruct_vertices(&self, store: &ParamStore, latent: &[f64]) -> Result<PointSet> {
        self.check_latent(latent)?;
        let g = Graph::new();
        let z = g.constant(latent.to_vec(), &[1, self.config.latent_dim]);
        PointSet::from_flat(&self.reconstruct_t(&g, store, &z).value())
    }

    /// Correspondence points for a latent.
    pub fn decode_correspondences(&self, store: &ParamStore, latent: &[f64]) -> Result<PointSet> {
        self.check_latent(latent)?;
        let g = Graph::new();
        let z = g.constant(latent.to_vec(), &[1, self.config.latent_dim]);
        PointSet::from_flat(&self.correspondences_t(&g, store, &z).value())
    }

    fn check_latent(&self, latent: &[f64]) -> Result<()> {
        if latent.len() != self.config.latent_dim {
            return Err(Error::invalid(format!(
                "latent has {} dims, model expects {}",
                latent.len(),
                self.config.latent_dim
            )));
        }
        if latent.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("latent must be finite"));
        }
        Ok(())
    }

    /// Teacher objective for one surface: chamfer(V, C) + alpha * MSE(V, V-hat).
    /// Returns (total, chamfer part, mse part) as graph nodes.
    pub fn loss_t(
        &self,
        g: &Graph,
        store: &ParamStore,
        vertices: &Tensor,
    ) -> (Tensor, Tensor, Tensor) {
        assert_eq!(
            vertices.shape()[0],
            self.vertex_count,
            "teacher was built for {} vertices",
            self.vertex_count
        );
        let z = self.encode_t(g, store, vertices);
        let corr = self.correspondences_t(g, store, &z);
        let recon = self.reconstruct_t(g, store, &z);
        let cd = crate::nn::chamfer(vertices, &corr, ChamferMode::L1Point);
        let mse = crate::nn::mse_rows(vertices, &recon);
        let total = cd.add(&mse.scale(self.config.alpha));
        (total, cd, mse)
    }
}

/// Farthest-point sampling over a point set; starts at index 0, ties break
/// to the lowest index. Returns selected indices in pick order.
pub fn farthest_point_indices(points: &PointSet, m: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if m == 0 || m > n {
        return Err(Error::invalid(format!("cannot pick {m} of {n} points")));
    }
    let p = &points.points;
    let d2 = |a: [f64; 3], b: [f64; 3]| {
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        let dz = a[2] - b[2];
        dx * dx + dy * dy + dz * dz
    };
    let mut chosen = Vec::with_capacity(m);
    let mut min_d = vec![f64::INFINITY; n];
    let mut cur = 0usize;
    chosen.push(cur);
    for _ in 1..m {
        let mut best = f64::NEG_INFINITY;
        let mut best_i = 0usize;
        for i in 0..n {
            let di = d2(p[i], p[cur]).min(min_d[i]);
            min_d[i] = di;
            if di > best {
                best = di;
                best_i = i;
            }
        }
        cur = best_i;
        chosen.push(cur);
    }
    Ok(chosen)
}

/// Index of the cohort's medoid: the member minimizing summed chamfer
/// distance to all others, approximated on FPS subsets of up to
/// `subset` points for tractability. Deterministic; ties to lowest index.
pub fn medoid_index(cohort: &[PointSet], subset: usize) -> Result<usize> {
    if cohort.is_empty() {
        return Err(Error::invalid("empty cohort"));
    }
    if cohort.len() == 1 {
        return Ok(0);
    }
    let subsets: Vec<PointSet> = cohort
        .iter()
        .map(|ps| {
            let m = ps.len().min(subset);
            let idx = farthest_point_indices(ps, m)?;
            PointSet::new(idx.into_iter().map(|i| ps.points[i]).collect())
        })
        .collect::<Result<_>>()?;
    let n = subsets.len();
    let mut pair = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = chamfer_distance(&subsets[i], &subsets[j], ChamferMode::L1Point)?;
            pair[i * n + j] = d;
            pair[j * n + i] = d;
        }
    }
    let mut best = f64::INFINITY;
    let mut best_i = 0usize;
    for i in 0..n {
        let total: f64 = (0..n).map(|j| pair[i * n + j]).sum();
        if total < best {
            best = total;
            best_i = i;
        }
    }
    Ok(best_i)
}

/// Template for a training cohort: M farthest-point samples from the
/// medoid's vertices.
pub fn select_template(cohort: &[PointSet], m: usize) -> Result<PointSet> {
    let medoid = medoid_index(cohort, 128)?;
    let ps = &cohort[medoid];
    if m > ps.len() {
        return Err(Error::invalid(format!(
            "template size {m} exceeds medoid vertex count {}",
            ps.len()
        )));
    }
    let idx = farthest_point_indices(ps, m)?;
    PointSet::new(idx.into_iter().map(|i| ps.points[i]).collect())
}
