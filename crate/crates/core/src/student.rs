//! Image student: CNN encoders that map sparse image inputs to a Gaussian
//! over the teacher's latent space.
//!
//! Three variants share one head design. `Orthogonal` runs a 2D backbone
//! per slice axis and aggregates the three feature vectors; `SingleSlice`
//! keeps one backbone; `Full3d` swaps in a 3D backbone over the whole
//! volume. The head emits a mean and a log-variance per latent dimension;
//! the log-variance is clamped to a configurable band, and that clamp is
//! the only place it happens (samplers never clamp).
//!
//! Inputs are normalized per image to zero mean and unit variance, so the
//! encoders see acquisition artifacts as shape changes rather than global
//! gain.

use crate::error::{Error, Result};
use crate::image::{Slice2d, SliceTriple, VolumeImage};
use crate::nn::{linear, Graph, Init, ParamRef, ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceAxis {
    Axial,
    Sagittal,
    Coronal,
}

impl SliceAxis {
    pub const ALL: [SliceAxis; 3] = [SliceAxis::Axial, SliceAxis::Sagittal, SliceAxis::Coronal];

    pub fn name(&self) -> &'static str {
        match self {
            SliceAxis::Axial => "axial",
            SliceAxis::Sagittal => "sagittal",
            SliceAxis::Coronal => "coronal",
        }
    }

    /// (width, height) of this axis' slice for a volume of `dims`.
    fn slice_dims(&self, dims: [usize; 3]) -> [usize; 2] {
        match self {
            SliceAxis::Axial => [dims[0], dims[1]],
            SliceAxis::Sagittal => [dims[1], dims[2]],
            SliceAxis::Coronal => [dims[0], dims[2]],
        }
    }

    fn of<'a>(&self, t: &'a SliceTriple) -> &'a Slice2d {
        match self {
            SliceAxis::Axial => &t.axial,
            SliceAxis::Sagittal => &t.sagittal,
            SliceAxis::Coronal => &t.coronal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudentVariant {
    Full3d,
    Orthogonal,
    SingleSlice(SliceAxis),
}

impl StudentVariant {
    pub fn label(&self) -> String {
        match self {
            StudentVariant::Full3d => "full3d".into(),
            StudentVariant::Orthogonal => "orthogonal".into(),
            StudentVariant::SingleSlice(a) => format!("single_{}", a.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudentConfig {
    /// Latent width L; must match the teacher it aligns to.
    pub latent_dim: usize,
    /// Channels per conv stage (one BN+ReLU+pool per stage).
    pub conv_filters: Vec<usize>,
    /// Square (cubic) conv kernel edge; odd.
    pub conv_kernel: usize,
    /// Per-backbone feature width after the flatten projection.
    pub fc_dim: usize,
    /// Aggregator hidden width.
    pub agg_hidden: usize,
    /// logvar is clamped to [-c, c].
    pub logvar_clamp: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for StudentConfig {
    fn default() -> Self {
        Self {
            latent_dim: 256,
            conv_filters: vec![12, 24, 48, 96, 192],
            conv_kernel: 5,
            fc_dim: 256,
            agg_hidden: 256,
            logvar_clamp: 10.0,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl StudentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.fc_dim == 0 || self.agg_hidden == 0 {
            return Err(Error::invalid("student widths must be positive"));
        }
        if self.conv_filters.is_empty() {
            return Err(Error::invalid("student needs at least one conv stage"));
        }
        if self.conv_kernel % 2 == 0 || self.conv_kernel == 0 {
            return Err(Error::invalid("conv kernel must be odd"));
        }
        if !(self.logvar_clamp > 0.0) {
            return Err(Error::invalid("logvar clamp must be positive"));
        }
        if !(0.0 < self.bn_momentum && self.bn_momentum < 1.0) {
            return Err(Error::invalid("bn momentum must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// One sample's input; which field is read depends on the variant.
#[derive(Debug, Clone, Copy)]
pub enum StudentInput<'a> {
    Volume(&'a VolumeImage),
    Slices(&'a SliceTriple),
}

struct ConvStage {
    w: ParamRef,
    b: ParamRef,
    gamma: ParamRef,
    beta: ParamRef,
    run_mu: ParamRef,
    run_var: ParamRef,
}

struct Backbone {
    stages: Vec<ConvStage>,
    fc_w: ParamRef,
    fc_b: ParamRef,
    /// Spatial dims fed to the first conv ([h,w] or [d,h,w]).
    in_dims: Vec<usize>,
    flat: usize,
}

/// Spatial extent after `stages` halvings.
fn pooled(extent: usize, stages: usize) -> usize {
    (0..stages).fold(extent, |e, _| e / 2)
}

pub struct Student {
    pub variant: StudentVariant,
    pub config: StudentConfig,
    pub volume_dims: [usize; 3],
    backbones: Vec<(SliceAxis, Backbone)>,
    backbone3d: Option<Backbone>,
    agg_w: ParamRef,
    agg_b: ParamRef,
    agg_alpha: ParamRef,
    mean_w: ParamRef,
    mean_b: ParamRef,
    logvar_w: ParamRef,
    logvar_b: ParamRef,
}

impl Student {
    /// Registers parameters and batch-norm buffers into fresh stores.
    pub fn new(
        variant: StudentVariant,
        config: StudentConfig,
        volume_dims: [usize; 3],
        seed: u64,
    ) -> Result<(Self, ParamStore, ParamStore)> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut buffers = ParamStore::new();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);

        let stages = config.conv_filters.len();
        let check_extent = |dims: &[usize]| -> Result<()> {
            for &e in dims {
                if pooled(e, stages) == 0 {
                    return Err(Error::invalid(format!(
                        "input extent {e} collapses to zero after {stages} pooling stages"
                    )));
                }
            }
            Ok(())
        };

        let build_backbone = |prefix: &str,
                              in_dims: Vec<usize>,
                              conv3d: bool,
                              params: &mut ParamStore,
                              buffers: &mut ParamStore,
                              rng: &mut ChaCha20Rng|
         -> Result<Backbone> {
            check_extent(&in_dims)?;
            let k = config.conv_kernel;
            let mut stages_v = Vec::new();
            let mut c_in = 1usize;
            for (i, &c_out) in config.conv_filters.iter().enumerate() {
                let kernel_vol = if conv3d { k * k * k } else { k * k };
                let wshape: Vec<usize> = if conv3d {
                    vec![c_out, c_in, k, k, k]
                } else {
                    vec![c_out, c_in, k, k]
                };
                let fan_in = c_in * kernel_vol;
                stages_v.push(ConvStage {
                    w: params.register(
                        &format!("{prefix}.conv{i}.w"),
                        &wshape,
                        Init::HeNormal { fan_in },
                        rng,
                    ),
                    b: params.register(&format!("{prefix}.conv{i}.b"), &[c_out], Init::Zeros, rng),
                    gamma: params.register(
                        &format!("{prefix}.bn{i}.gamma"),
                        &[c_out],
                        Init::Constant(1.0),
                        rng,
                    ),
                    beta: params.register(&format!("{prefix}.bn{i}.beta"), &[c_out], Init::Zeros, rng),
                    run_mu: buffers.register(
                        &format!("{prefix}.bn{i}.running_mu"),
                        &[c_out],
                        Init::Zeros,
                        rng,
                    ),
                    run_var: buffers.register(
                        &format!("{prefix}.bn{i}.running_var"),
                        &[c_out],
                        Init::Constant(1.0),
                        rng,
                    ),
                });
                c_in = c_out;
            }
            let flat: usize =
                c_in * in_dims.iter().map(|&e| pooled(e, stages)).product::<usize>();
            let fc_w = params.register(
                &format!("{prefix}.fc.w"),
                &[flat, config.fc_dim],
                Init::XavierUniform { fan_in: flat, fan_out: config.fc_dim },
                rng,
            );
            let fc_b = params.register(&format!("{prefix}.fc.b"), &[config.fc_dim], Init::Zeros, rng);
            Ok(Backbone { stages: stages_v, fc_w, fc_b, in_dims, flat })
        };

        let mut backbones = Vec::new();
        let mut backbone3d = None;
        let agg_in = match variant {
            StudentVariant::Orthogonal => {
                for axis in SliceAxis::ALL {
                    let [w, h] = axis.slice_dims(volume_dims);
                    let bb = build_backbone(
                        &format!("bb2d_{}", axis.name()),
                        vec![h, w],
                        false,
                        &mut params,
                        &mut buffers,
                        &mut rng,
                    )?;
                    backbones.push((axis, bb));
                }
                3 * config.fc_dim
            }
            StudentVariant::SingleSlice(axis) => {
                let [w, h] = axis.slice_dims(volume_dims);
                let bb = build_backbone(
                    &format!("bb2d_{}", axis.name()),
                    vec![h, w],
                    false,
                    &mut params,
                    &mut buffers,
                    &mut rng,
                )?;
                backbones.push((axis, bb));
                config.fc_dim
            }
            StudentVariant::Full3d => {
                let bb = build_backbone(
                    "bb3d",
                    vec![volume_dims[2], volume_dims[1], volume_dims[0]],
                    true,
                    &mut params,
                    &mut buffers,
                    &mut rng,
                )?;
                backbone3d = Some(bb);
                config.fc_dim
            }
        };

        let agg_w = params.register(
            "agg.fc.w",
            &[agg_in, config.agg_hidden],
            Init::XavierUniform { fan_in: agg_in, fan_out: config.agg_hidden },
            &mut rng,
        );
        let agg_b = params.register("agg.fc.b", &[config.agg_hidden], Init::Zeros, &mut rng);
        let agg_alpha = params.register("agg.prelu.alpha", &[1], Init::Constant(0.25), &mut rng);
        let mean_w = params.register(
            "head.mean.w",
            &[config.agg_hidden, config.latent_dim],
            Init::XavierUniform { fan_in: config.agg_hidden, fan_out: config.latent_dim },
            &mut rng,
        );
        let mean_b = params.register("head.mean.b", &[config.latent_dim], Init::Zeros, &mut rng);
        let logvar_w = params.register(
            "head.logvar.w",
            &[config.agg_hidden, config.latent_dim],
            Init::XavierUniform { fan_in: config.agg_hidden, fan_out: config.latent_dim },
            &mut rng,
        );
        let logvar_b = params.register("head.logvar.b", &[config.latent_dim], Init::Zeros, &mut rng);

        Ok((
            Self {
                variant,
                config,
                volume_dims,
                backbones,
                backbone3d,
                agg_w,
                agg_b,
                agg_alpha,
                mean_w,
                mean_b,
                logvar_w,
                logvar_b,
            },
            params,
            buffers,
        ))
    }

    fn normalized(data: &[f32]) -> Vec<f64> {
        let n = data.len() as f64;
        let mean: f64 = data.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var: f64 = data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-6);
        data.iter().map(|&v| (v as f64 - mean) / std).collect()
    }

    /// Batched slice tensor [B,1,h,w] for one axis.
    fn slice_batch(&self, g: &Graph, axis: SliceAxis, inputs: &[StudentInput]) -> Result<Tensor> {
        let [w, h] = axis.slice_dims(self.volume_dims);
        let mut data = Vec::with_capacity(inputs.len() * h * w);
        for input in inputs {
            let StudentInput::Slices(t) = input else {
                return Err(Error::invalid("this variant consumes slice triples"));
            };
            let s = axis.of(t);
            if s.dims != [w, h] {
                return Err(Error::invalid(format!(
                    "{} slice is {:?}, model expects {:?}",
                    axis.name(),
                    s.dims,
                    [w, h]
                )));
            }
            data.extend(Self::normalized(&s.pixels));
        }
        Ok(g.constant(data, &[inputs.len(), 1, h, w]))
    }

    fn volume_batch(&self, g: &Graph, inputs: &[StudentInput]) -> Result<Tensor> {
        let [nx, ny, nz] = self.volume_dims;
        let mut data = Vec::with_capacity(inputs.len() * nx * ny * nz);
        for input in inputs {
            let StudentInput::Volume(v) = input else {
                return Err(Error::invalid("the full3d variant consumes volumes"));
            };
            if v.dims != self.volume_dims {
                return Err(Error::invalid(format!(
                    "volume is {:?}, model expects {:?}",
                    v.dims, self.volume_dims
                )));
            }
            data.extend(Self::normalized(&v.voxels));
        }
        // Volume voxels are x-fastest; as [d,h,w] = [nz,ny,nx] this is the
        // same linear order.
        Ok(g.constant(data, &[inputs.len(), 1, nz, ny, nx]))
    }

    /// Runs one backbone on a [B,1,..] tensor -> [B, fc_dim].
    #[allow(clippy::too_many_arguments)]
    fn run_backbone(
        &self,
        g: &Graph,
        params: &ParamStore,
        buffers: &mut ParamStore,
        bb: &Backbone,
        x: Tensor,
        conv3d: bool,
        training: bool,
    ) -> Tensor {
        let batch = x.shape()[0];
        let mut h = x;
        for stage in &bb.stages {
            let w = g.param(params, stage.w);
            let b = g.param(params, stage.b);
            h = if conv3d { h.conv3d(&w, &b) } else { h.conv2d(&w, &b) };
            let gamma = g.param(params, stage.gamma);
            let beta = g.param(params, stage.beta);
            let (normed, stats) = if training {
                h.batch_norm(&gamma, &beta, self.config.bn_eps, None)
            } else {
                let mu = buffers.get(stage.run_mu).data.clone();
                let var = buffers.get(stage.run_var).data.clone();
                h.batch_norm(&gamma, &beta, self.config.bn_eps, Some((&mu, &var)))
            };
            if let Some((mu, var)) = stats {
                let mom = self.config.bn_momentum;
                let rmu = &mut buffers.get_mut(stage.run_mu).data;
                for (r, m) in rmu.iter_mut().zip(&mu) {
                    *r = (1.0 - mom) * *r + mom * m;
                }
                let rvar = &mut buffers.get_mut(stage.run_var).data;
                for (r, v) in rvar.iter_mut().zip(&var) {
                    *r = (1.0 - mom) * *r + mom * v;
                }
            }
            h = normed.relu();
            h = if conv3d { h.maxpool3d() } else { h.maxpool2d() };
        }
        let flat = h.reshape(&[batch, bb.flat]);
        let w = g.param(params, bb.fc_w);
        let b = g.param(params, bb.fc_b);
        linear(&flat, &w, &b)
    }

    /// Graph-side batched encoder: inputs -> (mean [B,L], logvar [B,L]).
    /// The logvar is clamped here and nowhere else.
    pub fn encode_t(
        &self,
        g: &Graph,
        params: &ParamStore,
        buffers: &mut ParamStore,
        inputs: &[StudentInput],
        training: bool,
    ) -> Result<(Tensor, Tensor)> {
        if inputs.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let feats = match self.variant {
            StudentVariant::Orthogonal => {
                let mut per_axis = Vec::new();
                for (axis, bb) in &self.backbones {
                    let x = self.slice_batch(g, *axis, inputs)?;
                    per_axis.push(self.run_backbone(g, params, buffers, bb, x, false, training));
                }
                let ab = per_axis[0].concat_cols(&per_axis[1]);
                ab.concat_cols(&per_axis[2])
            }
            StudentVariant::SingleSlice(_) => {
                let (axis, bb) = &self.backbones[0];
                let x = self.slice_batch(g, *axis, inputs)?;
                self.run_backbone(g, params, buffers, bb, x, false, training)
            }
            StudentVariant::Full3d => {
                let bb = self.backbone3d.as_ref().expect("full3d backbone");
                let x = self.volume_batch(g, inputs)?;
                self.run_backbone(g, params, buffers, bb, x, true, training)
            }
        };
        let w = g.param(params, self.agg_w);
        let b = g.param(params, self.agg_b);
        let alpha = g.param(params, self.agg_alpha);
        let hidden = linear(&feats, &w, &b).prelu(&alpha);

        let mw = g.param(params, self.mean_w);
        let mb = g.param(params, self.mean_b);
        let mean = linear(&hidden, &mw, &mb);
        let lw = g.param(params, self.logvar_w);
        let lb = g.param(params, self.logvar_b);
        let c = self.config.logvar_clamp;
        let logvar = linear(&hidden, &lw, &lb).clamp(-c, c);
        Ok((mean, logvar))
    }

    /// Latent distribution for one image, in eval mode.
    pub fn encode_image(
        &self,
        params: &ParamStore,
        buffers: &ParamStore,
        input: &StudentInput,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let g = Graph::new();
        let mut frozen = buffers.clone();
        let (mean, logvar) = self.encode_t(&g, params, &mut frozen, &[*input], false)?;
        Ok((mean.value(), logvar.value()))
    }

    /// Rough multiply count of one forward pass, for cost reporting.
    pub fn mac_estimate(&self) -> u64 {
        let k = self.config.conv_kernel as u64;
        let per_backbone = |in_dims: &[usize], conv3d: bool, flat: usize| -> u64 {
            let kernel = if conv3d { k * k * k } else { k * k };
            let mut dims: Vec<u64> = in_dims.iter().map(|&d| d as u64).collect();
            let mut c_in = 1u64;
            let mut total = 0u64;
            for &c_out in &self.config.conv_filters {
                let spatial: u64 = dims.iter().product();
                total += spatial * c_out as u64 * c_in * kernel;
                for d in &mut dims {
                    *d /= 2;
                }
                c_in = c_out as u64;
            }
            total + flat as u64 * self.config.fc_dim as u64
        };
        let mut total = 0u64;
        for (_, bb) in &self.backbones {
            total += per_backbone(&bb.in_dims, false, bb.flat);
        }
        if let Some(bb) = &self.backbone3d {
            total += per_backbone(&bb.in_dims, true, bb.flat);
        }
        let agg_in = match self.variant {
            StudentVariant::Orthogonal => 3 * self.config.fc_dim,
            _ => self.config.fc_dim,
        };
        total += (agg_in * self.config.agg_hidden) as u64;
        total += 2 * (self.config.agg_hidden * self.config.latent_dim) as u64;
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{build_mesh, render_volume, RenderOptions, ShapeParams};
    use crate::synth::{extract_orthogonal_slices, SliceIndices};

    fn tiny_config() -> StudentConfig {
        StudentConfig {
            latent_dim: 6,
            conv_filters: vec![2, 4],
            conv_kernel: 3,
            fc_dim: 8,
            agg_hidden: 8,
            ..StudentConfig::default()
        }
    }

    fn render_sample(seed: u64) -> (VolumeImage, SliceTriple) {
        let mesh = build_mesh(
            &ShapeParams {
                semi_axes: [8.0, 7.0, 6.0],
                bump_amplitude: 0.5,
                bump_frequency: 3,
                appendage_length: 1.0,
            },
            8,
        );
        let opts = RenderOptions {
            dims: [24, 20, 16],
            spacing: [1.0, 1.0, 1.2],
            noise_seed: seed,
            ..RenderOptions::default()
        };
        let v = render_volume(&mesh, &opts).unwrap();
        let t = extract_orthogonal_slices(&v, SliceIndices::Center, 1).unwrap();
        (v, t)
    }

    #[test]
    fn orthogonal_encode_has_expected_shapes_and_is_deterministic() {
        let (student, params, buffers) =
            Student::new(StudentVariant::Orthogonal, tiny_config(), [24, 20, 16], 3).unwrap();
        let (_, t) = render_sample(1);
        let input = StudentInput::Slices(&t);
        let (m1, lv1) = student.encode_image(&params, &buffers, &input).unwrap();
        let (m2, lv2) = student.encode_image(&params, &buffers, &input).unwrap();
        assert_eq!(m1.len(), 6);
        assert_eq!(lv1.len(), 6);
        assert_eq!(m1, m2);
        assert_eq!(lv1, lv2);
        assert!(lv1.iter().all(|v| v.abs() <= 10.0));
    }

    #[test]
    fn single_slice_variant_ignores_other_axes() {
        let (student, params, buffers) = Student::new(
            StudentVariant::SingleSlice(SliceAxis::Axial),
            tiny_config(),
            [24, 20, 16],
            4,
        )
        .unwrap();
        let (_, t) = render_sample(2);
        let mut altered = t.clone();
        for p in &mut altered.sagittal.pixels {
            *p += 50.0;
        }
        for p in &mut altered.coronal.pixels {
            *p = 0.0;
        }
        let (m1, _) = student
            .encode_image(&params, &buffers, &StudentInput::Slices(&t))
            .unwrap();
        let (m2, _) = student
            .encode_image(&params, &buffers, &StudentInput::Slices(&altered))
            .unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn orthogonal_variant_sees_every_axis() {
        let (student, params, buffers) =
            Student::new(StudentVariant::Orthogonal, tiny_config(), [24, 20, 16], 5).unwrap();
        let (_, t) = render_sample(3);
        let (m0, _) = student
            .encode_image(&params, &buffers, &StudentInput::Slices(&t))
            .unwrap();
        for axis in SliceAxis::ALL {
            let mut altered = t.clone();
            let s = match axis {
                SliceAxis::Axial => &mut altered.axial,
                SliceAxis::Sagittal => &mut altered.sagittal,
                SliceAxis::Coronal => &mut altered.coronal,
            };
            // Structured change that survives per-image normalization.
            for (i, p) in s.pixels.iter_mut().enumerate() {
                if i % 3 == 0 {
                    *p = *p * 0.2 + 30.0;
                }
            }
            let (m, _) = student
                .encode_image(&params, &buffers, &StudentInput::Slices(&altered))
                .unwrap();
            assert_ne!(m0, m, "latent ignored a change on the {} slice", axis.name());
        }
    }

    #[test]
    fn full3d_consumes_volumes_and_rejects_slices() {
        let (student, params, buffers) =
            Student::new(StudentVariant::Full3d, tiny_config(), [24, 20, 16], 6).unwrap();
        let (v, t) = render_sample(4);
        let (m, lv) = student
            .encode_image(&params, &buffers, &StudentInput::Volume(&v))
            .unwrap();
        assert_eq!(m.len(), 6);
        assert_eq!(lv.len(), 6);
        assert!(student
            .encode_image(&params, &buffers, &StudentInput::Slices(&t))
            .is_err());
    }

    #[test]
    fn dim_mismatches_are_rejected() {
        let (student, params, buffers) =
            Student::new(StudentVariant::Orthogonal, tiny_config(), [32, 32, 32], 7).unwrap();
        let (_, t) = render_sample(5); // built for [24,20,16]
        assert!(student
            .encode_image(&params, &buffers, &StudentInput::Slices(&t))
            .is_err());
    }

    #[test]
    fn too_small_volume_is_rejected_at_construction() {
        let cfg = StudentConfig {
            conv_filters: vec![2, 4, 8, 16, 32],
            ..tiny_config()
        };
        // 16 / 2^5 = 0: the sagittal/coronal extents collapse.
        assert!(Student::new(StudentVariant::Orthogonal, cfg, [24, 20, 16], 8).is_err());
    }

    #[test]
    fn training_mode_updates_running_stats() {
        let (student, params, mut buffers) =
            Student::new(StudentVariant::Orthogonal, tiny_config(), [24, 20, 16], 9).unwrap();
        let before = buffers.get(buffers.by_name("bb2d_axial.bn0.running_mu").unwrap().0).data.clone();
        let (_, t) = render_sample(6);
        let g = Graph::new();
        student
            .encode_t(&g, &params, &mut buffers, &[StudentInput::Slices(&t)], true)
            .unwrap();
        let after = buffers.get(buffers.by_name("bb2d_axial.bn0.running_mu").unwrap().0).data.clone();
        assert_ne!(before, after);
    }

    #[test]
    fn full3d_costs_more_macs_than_orthogonal() {
        let dims = [64, 64, 64];
        let cfg = StudentConfig {
            conv_filters: vec![2, 4, 8],
            conv_kernel: 3,
            ..tiny_config()
        };
        let (orth, _, _) = Student::new(StudentVariant::Orthogonal, cfg.clone(), dims, 1).unwrap();
        let (full, _, _) = Student::new(StudentVariant::Full3d, cfg, dims, 1).unwrap();
        assert!(full.mac_estimate() > orth.mac_estimate());
    }
}
