//! Writes a complete synthetic cohort to disk and indexes it in a manifest.
//!
//! Every per-sample random decision is keyed by `dataset seed XOR sample
//! id`, so a sample's files depend only on the dataset seed, its id, and
//! the generation options: regenerating a dataset reproduces every byte.
//! Shape and image outliers are confined to the test split.

use crate::error::{Error, Result};
use crate::image::{write_slice, write_volume};
use crate::io::write_ply;
use crate::synth::{
    build_mesh, extract_orthogonal_slices, inject_image_outlier, render_volume,
    sample_shape_params, ImageOutlierKind, ParamRanges, RenderOptions, ShapeParams, SliceIndices,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierTag {
    Inlier,
    Shape,
    Image(ImageOutlierKind),
}

impl OutlierTag {
    pub fn is_outlier(&self) -> bool {
        !matches!(self, OutlierTag::Inlier)
    }

    /// Coarse label that collapses the image-outlier kinds.
    pub fn group(&self) -> &'static str {
        match self {
            OutlierTag::Inlier => "inlier",
            OutlierTag::Shape => "shape",
            OutlierTag::Image(_) => "image",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetOptions {
    pub count: usize,
    pub seed: u64,
    pub shape_outlier_fraction: f64,
    pub image_outlier_fraction: f64,
    pub ranges: ParamRanges,
    pub mesh_resolution: usize,
    pub render: RenderOptions,
    pub slice_thickness: usize,
    /// Train/val/test fractions; must sum to 1.
    pub split_fractions: [f64; 3],
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            count: 100,
            seed: 0,
            shape_outlier_fraction: 0.0,
            image_outlier_fraction: 0.0,
            ranges: ParamRanges::default(),
            mesh_resolution: 16,
            render: RenderOptions::default(),
            slice_thickness: 1,
            split_fractions: [0.8, 0.1, 0.1],
        }
    }
}

impl DatasetOptions {
    fn validate(&self) -> Result<()> {
        if self.count < 3 {
            return Err(Error::invalid("dataset needs at least 3 samples"));
        }
        for f in [self.shape_outlier_fraction, self.image_outlier_fraction] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid("outlier fractions must lie in [0, 1]"));
            }
        }
        if self.mesh_resolution < 8 {
            return Err(Error::invalid("mesh resolution must be at least 8"));
        }
        let sum: f64 = self.split_fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.split_fractions.iter().any(|&f| f < 0.0) {
            return Err(Error::invalid("split fractions must be non-negative and sum to 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub split: Split,
    pub outlier: OutlierTag,
    pub params: ShapeParams,
    pub sample_seed: u64,
    /// Directory of this sample's files, relative to the manifest.
    pub dir: String,
}

impl ManifestEntry {
    pub fn mesh_path(&self, root: &Path) -> PathBuf {
        root.join(&self.dir).join("mesh.ply")
    }
    pub fn volume_path(&self, root: &Path) -> PathBuf {
        root.join(&self.dir).join("volume.raw")
    }
    pub fn slice_path(&self, root: &Path, axis: &str) -> PathBuf {
        root.join(&self.dir).join(format!("{axis}.raw"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub options: DatasetOptions,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0usize; 3];
        for e in &self.entries {
            match e.split {
                Split::Train => c[0] += 1,
                Split::Val => c[1] += 1,
                Split::Test => c[2] += 1,
            }
        }
        c
    }
}

/// Largest-remainder split sizes; every sample lands in exactly one split.
fn split_sizes(count: usize, fractions: [f64; 3]) -> [usize; 3] {
    let raw: Vec<f64> = fractions.iter().map(|f| f * count as f64).collect();
    let mut sizes: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut leftover = count - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if leftover == 0 {
            break;
        }
        sizes[i] += 1;
        leftover -= 1;
    }
    [sizes[0], sizes[1], sizes[2]]
}

const SPLIT_STREAM: u64 = 0x53504c49_54535452; // "SPLITSTR"
const IMAGE_OUTLIER_STREAM: u64 = 0x494d474f_55544c52; // "IMGOUTLR"

/// Assigns splits: outliers go to test, the remaining test quota is filled
/// with randomly chosen inliers, then val is drawn from the rest.
fn assign_splits(
    count: usize,
    outlier_ids: &[usize],
    fractions: [f64; 3],
    seed: u64,
) -> Result<Vec<Split>> {
    let sizes = split_sizes(count, fractions);
    if outlier_ids.len() > sizes[2] {
        return Err(Error::invalid(format!(
            "{} outliers exceed the test split quota of {}",
            outlier_ids.len(),
            sizes[2]
        )));
    }
    let mut split = vec![Split::Train; count];
    let is_outlier: Vec<bool> = {
        let mut v = vec![false; count];
        for &i in outlier_ids {
            v[i] = true;
            split[i] = Split::Test;
        }
        v
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ SPLIT_STREAM);
    let mut inliers: Vec<usize> = (0..count).filter(|&i| !is_outlier[i]).collect();
    inliers.shuffle(&mut rng);
    let mut cursor = 0usize;
    for _ in 0..sizes[2] - outlier_ids.len() {
        split[inliers[cursor]] = Split::Test;
        cursor += 1;
    }
    for _ in 0..sizes[1] {
        split[inliers[cursor]] = Split::Val;
        cursor += 1;
    }
    Ok(split)
}

const IMAGE_OUTLIER_KINDS: [ImageOutlierKind; 3] = [
    ImageOutlierKind::LowContrast { factor: 0.4 },
    ImageOutlierKind::HighNoise { std: 6.0 },
    ImageOutlierKind::BiasField { slope: 0.5 },
];

pub fn generate_dataset(out_dir: &Path, opts: &DatasetOptions) -> Result<DatasetManifest> {
    opts.validate()?;
    fs::create_dir_all(out_dir)?;

    let tagged = sample_shape_params(opts.count, opts.seed, opts.shape_outlier_fraction, &opts.ranges)?;

    // Image outliers are drawn from the shape inliers so the two cohorts
    // never overlap; kinds rotate deterministically.
    let mut image_outlier: Vec<Option<ImageOutlierKind>> = vec![None; opts.count];
    if opts.image_outlier_fraction > 0.0 {
        let want = (opts.image_outlier_fraction * opts.count as f64).round() as usize;
        let mut rng = ChaCha20Rng::seed_from_u64(opts.seed ^ IMAGE_OUTLIER_STREAM);
        let mut candidates: Vec<usize> =
            (0..opts.count).filter(|&i| !tagged[i].shape_outlier).collect();
        candidates.shuffle(&mut rng);
        if want > candidates.len() {
            return Err(Error::invalid("image outlier fraction leaves no inliers"));
        }
        for (k, &i) in candidates.iter().take(want).enumerate() {
            image_outlier[i] = Some(IMAGE_OUTLIER_KINDS[k % IMAGE_OUTLIER_KINDS.len()]);
        }
    }

    let outlier_ids: Vec<usize> = (0..opts.count)
        .filter(|&i| tagged[i].shape_outlier || image_outlier[i].is_some())
        .collect();
    let splits = assign_splits(opts.count, &outlier_ids, opts.split_fractions, opts.seed)?;

    let width = (opts.count as f64).log10().floor() as usize + 1;
    let width = width.max(4);
    let mut entries = Vec::with_capacity(opts.count);
    for (id, t) in tagged.iter().enumerate() {
        let sample_seed = opts.seed ^ id as u64;
        let dir_rel = format!("samples/{id:0width$}");
        let dir = out_dir.join(&dir_rel);
        fs::create_dir_all(&dir)?;

        let mesh = build_mesh(&t.params, opts.mesh_resolution);
        write_ply(&dir.join("mesh.ply"), &mesh)?;

        let render = RenderOptions {
            noise_seed: sample_seed,
            ..opts.render.clone()
        };
        let mut volume = render_volume(&mesh, &render)?;
        let tag = if t.shape_outlier {
            OutlierTag::Shape
        } else if let Some(kind) = image_outlier[id] {
            volume = inject_image_outlier(&volume, kind, sample_seed.wrapping_add(1))?;
            OutlierTag::Image(kind)
        } else {
            OutlierTag::Inlier
        };
        write_volume(&dir.join("volume.raw"), &volume)?;

        let triple = extract_orthogonal_slices(&volume, SliceIndices::Center, opts.slice_thickness)?;
        for axis in ["axial", "sagittal", "coronal"] {
            write_slice(&dir.join(format!("{axis}.raw")), &triple, axis)?;
        }

        entries.push(ManifestEntry {
            id,
            split: splits[id],
            outlier: tag,
            params: t.params.clone(),
            sample_seed,
            dir: dir_rel,
        });
    }

    let manifest = DatasetManifest {
        options: opts.clone(),
        entries,
    };
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

pub fn load_manifest(dataset_dir: &Path) -> Result<DatasetManifest> {
    let path = dataset_dir.join("manifest.json");
    let text = fs::read_to_string(&path)?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    if manifest.entries.is_empty() {
        return Err(Error::format(
            path.display().to_string(),
            "manifest lists no samples".to_string(),
        ));
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn small_opts() -> DatasetOptions {
        DatasetOptions {
            count: 20,
            seed: 42,
            shape_outlier_fraction: 0.05,
            image_outlier_fraction: 0.05,
            mesh_resolution: 8,
            render: RenderOptions {
                dims: [24, 24, 24],
                spacing: [1.5, 1.5, 1.5],
                ..RenderOptions::default()
            },
            ..DatasetOptions::default()
        }
    }

    fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
        let mut files = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    let rel = path.strip_prefix(root).unwrap().display().to_string();
                    files.push((rel, fs::read(&path).unwrap()));
                }
            }
        }
        files.sort();
        files
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let opts = small_opts();
        let a = tempdir().unwrap();
        let b = tempdir().unwrap();
        let ma = generate_dataset(a.path(), &opts).unwrap();
        let mb = generate_dataset(b.path(), &opts).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(tree_bytes(a.path()), tree_bytes(b.path()));
    }

    #[test]
    fn splits_honor_fractions_and_confine_outliers_to_test() {
        let opts = small_opts();
        let dir = tempdir().unwrap();
        let m = generate_dataset(dir.path(), &opts).unwrap();
        let counts = m.counts();
        assert_eq!(counts.iter().sum::<usize>(), opts.count);
        assert_eq!(counts, [16, 2, 2]);
        for e in &m.entries {
            if e.outlier.is_outlier() {
                assert_eq!(e.split, Split::Test, "outlier {} must be in test", e.id);
            }
        }
        assert!(m.entries.iter().any(|e| e.outlier.is_outlier()));
    }

    #[test]
    fn per_sample_seed_is_dataset_seed_xor_id() {
        let dir = tempdir().unwrap();
        let m = generate_dataset(dir.path(), &small_opts()).unwrap();
        for e in &m.entries {
            assert_eq!(e.sample_seed, 42u64 ^ e.id as u64);
        }
    }

    #[test]
    fn manifest_round_trips_and_files_exist() {
        let dir = tempdir().unwrap();
        let m = generate_dataset(dir.path(), &small_opts()).unwrap();
        let loaded = load_manifest(dir.path()).unwrap();
        assert_eq!(m, loaded);
        for e in &loaded.entries {
            assert!(e.mesh_path(dir.path()).exists());
            assert!(e.volume_path(dir.path()).exists());
            for axis in ["axial", "sagittal", "coronal"] {
                assert!(e.slice_path(dir.path(), axis).exists());
            }
        }
    }

    #[test]
    fn excess_outliers_are_rejected() {
        let opts = DatasetOptions {
            shape_outlier_fraction: 0.5,
            ..small_opts()
        };
        let dir = tempdir().unwrap();
        assert!(generate_dataset(dir.path(), &opts).is_err());
    }

    #[test]
    fn split_sizes_use_largest_remainder() {
        assert_eq!(split_sizes(10, [0.8, 0.1, 0.1]), [8, 1, 1]);
        assert_eq!(split_sizes(25, [0.8, 0.1, 0.1]), [20, 3, 2]);
        // With 3 samples the 0.4 train remainder beats both 0.3s.
        assert_eq!(split_sizes(3, [0.8, 0.1, 0.1]), [3, 0, 0]);
    }
}
