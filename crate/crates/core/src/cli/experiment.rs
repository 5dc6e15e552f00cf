//! Named experiment recipes: variant-comparison, thickness-ablation, and
//! outlier-study. Each trains what it needs, evaluates the test split,
//! and consolidates the results into `experiment.json` plus `table.csv`.
//!
//! Phase a never sees images, so one teacher is trained per experiment
//! and its checkpoint is copied into every run directory before the
//! student phases.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{median, EvalReport};
use crate::plot;
use crate::synth::{DatasetOptions, Split};
use crate::train::{PhaseReport, TrainConfig, VariantName};

use super::commands::{
    checkpoint_path, cmd_eval, cmd_synth, cmd_train, read_json, report_path, write_json, Phase,
    TrainRequest,
};
use super::config::guard_outputs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecipeName {
    VariantComparison,
    ThicknessAblation,
    OutlierStudy,
}

impl RecipeName {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecipeName::VariantComparison => "variant-comparison",
            RecipeName::ThicknessAblation => "thickness-ablation",
            RecipeName::OutlierStudy => "outlier-study",
        }
    }
}

/// Where the experiment's dataset comes from: an existing directory or
/// options to synthesize one under the output directory. Exactly one.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub path: Option<PathBuf>,
    pub generate: Option<DatasetOptions>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub name: RecipeName,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub train: TrainConfig,
    /// variant-comparison only; defaults to all five.
    #[serde(default)]
    pub variants: Option<Vec<VariantName>>,
    /// thickness-ablation only; defaults to 1, 3, 5.
    #[serde(default)]
    pub thicknesses: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantRow {
    pub variant: String,
    pub median_cd_l1: f64,
    pub median_cd_l2: f64,
    pub median_p2m: f64,
    pub median_s2s: f64,
    pub pooled_r: Option<f64>,
    pub mean_epoch_seconds_b: f64,
    pub mean_epoch_seconds_c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThicknessRow {
    pub thickness: usize,
    pub pooled_r: Option<f64>,
    pub mean_per_sample_r: Option<f64>,
    pub median_cd_l1: f64,
    pub median_p2m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupRow {
    pub tag: String,
    pub count: usize,
    pub mean_sigma: f64,
    pub median_sigma: f64,
    pub median_p2m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub dataset: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variants: Option<Vec<VariantRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thicknesses: Option<Vec<ThicknessRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outlier_groups: Option<Vec<GroupRow>>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x}"))
}

fn resolve_dataset(spec: &DatasetSpec, out: &Path, overwrite: bool) -> Result<PathBuf> {
    match (&spec.path, &spec.generate) {
        (Some(p), None) => fs::canonicalize(p)
            .map_err(|e| Error::Config(format!("dataset {}: {e}", p.display()))),
        (None, Some(opts)) => {
            let dir = out.join("dataset");
            cmd_synth(opts, &dir, overwrite)?;
            Ok(dir)
        }
        _ => Err(Error::Config(
            "recipe dataset must set exactly one of `path` or `generate`".to_string(),
        )),
    }
}

/// Train the shared teacher once, then run student phases b+c in a fresh
/// run directory seeded with its checkpoint. Returns the run directory.
fn student_run(
    out: &Path,
    teacher_run: &Path,
    label: &str,
    cfg: TrainConfig,
    dataset: &Path,
    overwrite: bool,
) -> Result<PathBuf> {
    let run = out.join("runs").join(label);
    let teacher_ckpt = checkpoint_path(&run, "teacher_a");
    guard_outputs(std::slice::from_ref(&teacher_ckpt), overwrite)?;
    fs::create_dir_all(teacher_ckpt.parent().unwrap())?;
    fs::copy(checkpoint_path(teacher_run, "teacher_a"), &teacher_ckpt)?;
    let a_report = report_path(&run, "phase_a");
    fs::create_dir_all(a_report.parent().unwrap())?;
    fs::copy(report_path(teacher_run, "phase_a"), &a_report)?;

    cmd_train(&TrainRequest {
        run: &run,
        dataset: Some(dataset),
        cfg,
        phase: Phase::Bc,
        overwrite,
    })?;
    Ok(run)
}

fn eval_test(run: &Path, seed: Option<u64>, overwrite: bool) -> Result<EvalReport> {
    let path = cmd_eval(run, Split::Test, None, seed, overwrite)?;
    read_json(&path)
}

/// Recipe problems surface before anything is trained or written.
fn validate_recipe(recipe: &Recipe) -> Result<()> {
    recipe.train.validate()?;
    match recipe.name {
        RecipeName::VariantComparison => {
            if recipe.variants.as_ref().is_some_and(Vec::is_empty) {
                return Err(Error::Config(
                    "variant-comparison needs at least one variant".to_string(),
                ));
            }
        }
        RecipeName::ThicknessAblation => {
            if recipe.train.variant == VariantName::Full {
                return Err(Error::Config(
                    "thickness-ablation needs a slice-based variant (orthogonal or a single slice)"
                        .to_string(),
                ));
            }
            let thicknesses = recipe.thicknesses.as_deref().unwrap_or(&[1, 3, 5]);
            if thicknesses.is_empty() {
                return Err(Error::Config(
                    "thickness-ablation needs at least one thickness".to_string(),
                ));
            }
            if let Some(t) = thicknesses.iter().find(|t| *t % 2 == 0) {
                return Err(Error::Config(format!("slice thickness must be odd, got {t}")));
            }
        }
        RecipeName::OutlierStudy => {}
    }
    Ok(())
}

pub fn cmd_experiment(
    recipe_path: &Path,
    out: &Path,
    seed_override: Option<u64>,
    overwrite: bool,
) -> Result<PathBuf> {
    let mut recipe: Recipe = read_json(recipe_path)?;
    validate_recipe(&recipe)?;
    if let Some(seed) = seed_override {
        recipe.train.seed = seed;
    }

    let report_out = out.join("experiment.json");
    let table_out = out.join("table.csv");
    guard_outputs(&[report_out.clone(), table_out.clone()], overwrite)?;

    let dataset = resolve_dataset(&recipe.dataset, out, overwrite)?;

    // Shared teacher; its phase is independent of the student input.
    let teacher_run = out.join("teacher");
    cmd_train(&TrainRequest {
        run: &teacher_run,
        dataset: Some(&dataset),
        cfg: recipe.train.clone(),
        phase: Phase::A,
        overwrite,
    })?;

    let mut report = ExperimentReport {
        name: recipe.name.as_str().to_string(),
        dataset: dataset.clone(),
        variants: None,
        thicknesses: None,
        outlier_groups: None,
    };
    let mut table = String::new();

    match recipe.name {
        RecipeName::VariantComparison => {
            let variants = recipe.variants.clone().unwrap_or_else(|| VariantName::ALL.to_vec());
            let mut rows = Vec::new();
            table.push_str(
                "variant,median_cd_l1,median_cd_l2,median_p2m,median_s2s,pooled_r,mean_epoch_seconds_b,mean_epoch_seconds_c\n",
            );
            for v in variants {
                let mut cfg = recipe.train.clone();
                cfg.variant = v;
                let run = student_run(out, &teacher_run, v.as_str(), cfg, &dataset, overwrite)?;
                let eval = eval_test(&run, seed_override, overwrite)?;
                let b: PhaseReport = read_json(&report_path(&run, "phase_b"))?;
                let c: PhaseReport = read_json(&report_path(&run, "phase_c"))?;
                let row = VariantRow {
                    variant: v.as_str().to_string(),
                    median_cd_l1: eval.median_cd_l1,
                    median_cd_l2: eval.median_cd_l2,
                    median_p2m: eval.median_p2m,
                    median_s2s: eval.median_s2s,
                    pooled_r: eval.calibration.pooled_r,
                    mean_epoch_seconds_b: b.mean_epoch_seconds(),
                    mean_epoch_seconds_c: c.mean_epoch_seconds(),
                };
                table.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    row.variant,
                    row.median_cd_l1,
                    row.median_cd_l2,
                    row.median_p2m,
                    row.median_s2s,
                    opt(row.pooled_r),
                    row.mean_epoch_seconds_b,
                    row.mean_epoch_seconds_c,
                ));
                println!(
                    "experiment[{}]: median CD {:.4}, {:.3}s/epoch (b)",
                    row.variant, row.median_cd_l1, row.mean_epoch_seconds_b
                );
                rows.push(row);
            }
            report.variants = Some(rows);
        }
        RecipeName::ThicknessAblation => {
            let thicknesses = recipe.thicknesses.clone().unwrap_or_else(|| vec![1, 3, 5]);
            let mut rows = Vec::new();
            table.push_str("thickness,pooled_r,mean_per_sample_r,median_cd_l1,median_p2m\n");
            for t in thicknesses {
                let mut cfg = recipe.train.clone();
                cfg.slice_thickness = Some(t);
                let run =
                    student_run(out, &teacher_run, &format!("t{t}"), cfg, &dataset, overwrite)?;
                let eval = eval_test(&run, seed_override, overwrite)?;
                let row = ThicknessRow {
                    thickness: t,
                    pooled_r: eval.calibration.pooled_r,
                    mean_per_sample_r: eval.calibration.mean_per_sample_r,
                    median_cd_l1: eval.median_cd_l1,
                    median_p2m: eval.median_p2m,
                };
                table.push_str(&format!(
                    "{},{},{},{},{}\n",
                    row.thickness,
                    opt(row.pooled_r),
                    opt(row.mean_per_sample_r),
                    row.median_cd_l1,
                    row.median_p2m,
                ));
                println!(
                    "experiment[t{}]: pooled r {}, median CD {:.4}",
                    row.thickness,
                    opt(row.pooled_r),
                    row.median_cd_l1
                );
                rows.push(row);
            }
            report.thicknesses = Some(rows);
        }
        RecipeName::OutlierStudy => {
            let run = student_run(
                out,
                &teacher_run,
                recipe.train.variant.as_str(),
                recipe.train.clone(),
                &dataset,
                overwrite,
            )?;
            let eval = eval_test(&run, seed_override, overwrite)?;
            let mut rows = Vec::new();
            let mut stats = Vec::new();
            table.push_str("tag,count,mean_sigma,median_sigma,median_p2m\n");
            for group in ["inlier", "shape", "image"] {
                let members: Vec<_> = eval
                    .samples
                    .iter()
                    .filter(|s| s.outlier.group() == group)
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let sigmas: Vec<f64> = members.iter().map(|s| s.mean_sigma).collect();
                let p2ms: Vec<f64> = members.iter().map(|s| s.p2m).collect();
                let row = GroupRow {
                    tag: group.to_string(),
                    count: members.len(),
                    mean_sigma: sigmas.iter().sum::<f64>() / sigmas.len() as f64,
                    median_sigma: median(&sigmas),
                    median_p2m: median(&p2ms),
                };
                table.push_str(&format!(
                    "{},{},{},{},{}\n",
                    row.tag, row.count, row.mean_sigma, row.median_sigma, row.median_p2m,
                ));
                println!(
                    "experiment[{}]: n={}, mean sigma {:.4}",
                    row.tag, row.count, row.mean_sigma
                );
                stats.push(plot::box_stats(group, &sigmas)?);
                rows.push(row);
            }
            if rows.len() < 2 {
                return Err(Error::invalid(
                    "outlier-study needs at least two outlier groups in the test split",
                ));
            }
            let svg = plot::box_plot_svg(&stats, "mean sigma", "uncertainty by outlier tag")?;
            let csv = plot::box_plot_csv(&stats)?;
            plot::write_figure(&out.join("figures"), "sigma_by_tag", &svg, &csv)?;
            report.outlier_groups = Some(rows);
        }
    }

    write_json(&report_out, &report)?;
    fs::write(&table_out, &table)?;
    let _: ExperimentReport = read_json(&report_out)?;
    println!("experiment {}: report -> {}", report.name, report_out.display());
    Ok(report_out)
}
