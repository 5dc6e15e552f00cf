//! The single-step commands: synth, train, eval, calibrate, outliers,
//! and plot. Each returns the paths it wrote so callers (and the
//! experiment recipes) can chain them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    calibration, estimate_uncertainty, evaluate_split, screen_outliers, CalibrationReport,
    CalibrationSample, EvalOptions, EvalReport, UncertaintyField,
};
use crate::nn::ParamStore;
use crate::plot;
use crate::student::Student;
use crate::synth::{generate_dataset, load_manifest, DatasetManifest, DatasetOptions, Split};
use crate::teacher::Teacher;
use crate::train::{
    input_of, load_samples, load_student, load_teacher, params_hash, run_phase_a, run_phase_b,
    run_phase_c, save_student, save_teacher, ImageNeeds, LoadedSample, PhaseReport, TrainConfig,
};

use super::config::{guard_outputs, read_lock, write_lock, RunLock, LOCK_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    A,
    B,
    C,
    /// Phases b and c back to back; used by experiment recipes that share
    /// one teacher across runs.
    Bc,
    All,
}

pub fn checkpoint_path(run: &Path, name: &str) -> PathBuf {
    run.join("checkpoints").join(format!("{name}.ckpt"))
}

pub fn report_path(run: &Path, name: &str) -> PathBuf {
    run.join("reports").join(format!("{name}.json"))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e.to_string()))
}

pub fn cmd_synth(opts: &DatasetOptions, out: &Path, overwrite: bool) -> Result<DatasetManifest> {
    guard_outputs(&[out.join("manifest.json")], overwrite)?;
    let manifest = generate_dataset(out, opts)?;

    // Validate the declared outputs: manifest reloads and every referenced
    // file exists.
    let reloaded = load_manifest(out)?;
    if reloaded != manifest {
        return Err(Error::format(
            out.join("manifest.json").display().to_string(),
            "manifest does not round-trip".to_string(),
        ));
    }
    for e in &manifest.entries {
        let mut paths = vec![e.mesh_path(out), e.volume_path(out)];
        for axis in ["axial", "sagittal", "coronal"] {
            paths.push(e.slice_path(out, axis));
        }
        for p in paths {
            if !p.exists() {
                return Err(Error::format(
                    p.display().to_string(),
                    "listed in the manifest but missing on disk".to_string(),
                ));
            }
        }
    }
    let counts = manifest.counts();
    println!(
        "synth: {} samples ({} train / {} val / {} test) -> {}",
        manifest.entries.len(),
        counts[0],
        counts[1],
        counts[2],
        out.display()
    );
    Ok(manifest)
}

pub struct TrainRequest<'a> {
    pub run: &'a Path,
    /// Phases b/c may omit this and reuse the run's config.lock.
    pub dataset: Option<&'a Path>,
    pub cfg: TrainConfig,
    pub phase: Phase,
    pub overwrite: bool,
}

pub fn cmd_train(req: &TrainRequest) -> Result<()> {
    req.cfg.validate()?;
    let run = req.run;
    let (do_a, do_b, do_c) = match req.phase {
        Phase::A => (true, false, false),
        Phase::B => (false, true, false),
        Phase::C => (false, false, true),
        Phase::Bc => (false, true, true),
        Phase::All => (true, true, true),
    };

    let mut outputs = Vec::new();
    if do_a {
        outputs.push(run.join(LOCK_FILE));
        outputs.push(checkpoint_path(run, "teacher_a"));
        outputs.push(report_path(run, "phase_a"));
    }
    if do_b {
        outputs.push(checkpoint_path(run, "student_b"));
        outputs.push(report_path(run, "phase_b"));
    }
    if do_c {
        outputs.push(checkpoint_path(run, "student_c"));
        outputs.push(checkpoint_path(run, "teacher_c"));
        outputs.push(report_path(run, "phase_c"));
    }
    guard_outputs(&outputs, req.overwrite)?;

    let dataset = match req.dataset {
        Some(d) => fs::canonicalize(d)
            .map_err(|e| Error::Config(format!("dataset {}: {e}", d.display())))?,
        None => read_lock(run)?.dataset,
    };
    let manifest = load_manifest(&dataset)?;

    // Phase ordering is an error, not a silent retrain; check before any
    // state is written so a failed call leaves the run directory intact.
    if !do_a && !checkpoint_path(run, "teacher_a").exists() {
        return Err(Error::Training(format!(
            "phase {} requires {}; run phase a first",
            if do_b { "b" } else { "c" },
            checkpoint_path(run, "teacher_a").display()
        )));
    }
    if do_c && !do_b && !checkpoint_path(run, "student_b").exists() {
        return Err(Error::Training(format!(
            "phase c requires {}; run phase b first",
            checkpoint_path(run, "student_b").display()
        )));
    }

    fs::create_dir_all(run.join("checkpoints"))?;
    write_lock(run, &RunLock { dataset: dataset.clone(), train: req.cfg.clone() })?;

    // Phase a never looks at images; the student phases load what the
    // variant needs.
    let needs = if do_b || do_c {
        ImageNeeds::for_variant(req.cfg.variant.to_variant(), req.cfg.slice_thickness)
    } else {
        ImageNeeds::None
    };
    let train_entries: Vec<_> = manifest.split(Split::Train).cloned().collect();
    let val_entries: Vec<_> = manifest.split(Split::Val).cloned().collect();
    let train_samples = load_samples(&dataset, &train_entries, needs)?;
    let val_samples = load_samples(&dataset, &val_entries, needs)?;

    let phase_line = |report: &PhaseReport| {
        println!(
            "phase {}: {} epochs, best val {:.6e} at epoch {} ({}), {:.3}s/epoch",
            report.phase,
            report.train_losses.len(),
            report.best_val,
            report.best_epoch,
            report.stop_reason,
            report.mean_epoch_seconds()
        );
    };

    let (teacher, tparams) = if do_a {
        let out = run_phase_a(&req.cfg, &train_samples, &val_samples)?;
        save_teacher(&checkpoint_path(run, "teacher_a"), &out.teacher, &out.params)?;
        write_json(&report_path(run, "phase_a"), &out.report)?;
        phase_line(&out.report);
        (out.teacher, out.params)
    } else {
        let loaded = load_teacher(&checkpoint_path(run, "teacher_a"))?;
        if loaded.0.config.latent_dim != req.cfg.l {
            return Err(Error::Training(format!(
                "teacher checkpoint has latent width {}, config says {}",
                loaded.0.config.latent_dim, req.cfg.l
            )));
        }
        loaded
    };

    if !(do_b || do_c) {
        return validate_outputs(&outputs);
    }

    let (student, sparams, sbuffers) = if do_b {
        let out = run_phase_b(&req.cfg, &train_samples, &val_samples, &teacher, &tparams)?;
        save_student(&checkpoint_path(run, "student_b"), &out.student, &out.params, &out.buffers)?;
        write_json(&report_path(run, "phase_b"), &out.report)?;
        phase_line(&out.report);
        (out.student, out.params, out.buffers)
    } else {
        load_student(&checkpoint_path(run, "student_b"))?
    };

    if do_c {
        // Frozen-teacher contract: the teacher the student was aligned to
        // in phase b must be the one refined against here.
        let recorded: PhaseReport = read_json(&report_path(run, "phase_b"))?;
        if let Some(hash) = &recorded.teacher_hash {
            if *hash != params_hash(&tparams) {
                return Err(Error::Training(
                    "teacher parameters differ from the ones phase b aligned to; \
                     rerun phase b against this teacher"
                        .to_string(),
                ));
            }
        }
        let out = run_phase_c(
            &req.cfg,
            &train_samples,
            &val_samples,
            &teacher,
            &tparams,
            &student,
            &sparams,
            &sbuffers,
        )?;
        save_student(&checkpoint_path(run, "student_c"), &student, &out.params, &out.buffers)?;
        save_teacher(&checkpoint_path(run, "teacher_c"), &teacher, &out.teacher_params)?;
        write_json(&report_path(run, "phase_c"), &out.report)?;
        phase_line(&out.report);
    }

    validate_outputs(&outputs)
}

fn validate_outputs(outputs: &[PathBuf]) -> Result<()> {
    for p in outputs {
        if !p.exists() {
            return Err(Error::Training(format!(
                "declared output {} was not written",
                p.display()
            )));
        }
        if p.extension().is_some_and(|e| e == "json") {
            let _: serde_json::Value = read_json(p)?;
        }
    }
    Ok(())
}

/// The newest trained pair: phase-c checkpoints when present, else the
/// phase-b student with the phase-a teacher.
pub fn load_best_models(
    run: &Path,
) -> Result<(Teacher, ParamStore, Student, ParamStore, ParamStore)> {
    let (s_path, t_path) = if checkpoint_path(run, "student_c").exists() {
        (checkpoint_path(run, "student_c"), checkpoint_path(run, "teacher_c"))
    } else if checkpoint_path(run, "student_b").exists() {
        (checkpoint_path(run, "student_b"), checkpoint_path(run, "teacher_a"))
    } else {
        return Err(Error::Checkpoint(format!(
            "{} has no student checkpoint; train phases b/c first",
            run.display()
        )));
    };
    if !t_path.exists() {
        return Err(Error::Checkpoint(format!("missing {}", t_path.display())));
    }
    let (teacher, tparams) = load_teacher(&t_path)?;
    let (student, sparams, sbuffers) = load_student(&s_path)?;
    Ok((teacher, tparams, student, sparams, sbuffers))
}

fn split_samples(
    dataset: &Path,
    manifest: &DatasetManifest,
    split: Split,
    needs: ImageNeeds,
) -> Result<Vec<LoadedSample>> {
    let entries: Vec<_> = manifest.split(split).cloned().collect();
    if entries.is_empty() {
        return Err(Error::invalid(format!("split {split} is empty")));
    }
    load_samples(dataset, &entries, needs)
}

pub fn cmd_eval(
    run: &Path,
    split: Split,
    out: Option<&Path>,
    seed_override: Option<u64>,
    overwrite: bool,
) -> Result<PathBuf> {
    let lock = read_lock(run)?;
    let cfg = &lock.train;
    let out_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| report_path(run, &format!("eval_{split}")));
    guard_outputs(std::slice::from_ref(&out_path), overwrite)?;

    let (teacher, tparams, student, sparams, sbuffers) = load_best_models(run)?;
    let manifest = load_manifest(&lock.dataset)?;
    let train_samples = split_samples(&lock.dataset, &manifest, Split::Train, ImageNeeds::None)?;
    let eval_samples = split_samples(
        &lock.dataset,
        &manifest,
        split,
        ImageNeeds::for_variant(student.variant, cfg.slice_thickness),
    )?;

    let opts = EvalOptions {
        uncertainty_samples: cfg.uncertainty_samples,
        uncertainty_seed: seed_override.unwrap_or(cfg.seed),
        ..EvalOptions::default()
    };
    let report = evaluate_split(
        &teacher,
        &tparams,
        &student,
        &sparams,
        &sbuffers,
        &train_samples,
        &eval_samples,
        &split.to_string(),
        &opts,
    )?;
    write_json(&out_path, &report)?;
    let _: EvalReport = read_json(&out_path)?;
    println!(
        "eval {split}: {} samples, median CD {:.4}, median P2M {:.4}, pooled r {} -> {}",
        report.samples.len(),
        report.median_cd_l1,
        report.median_p2m,
        report
            .calibration
            .pooled_r
            .map_or("undefined".to_string(), |r| format!("{r:.3}")),
        out_path.display()
    );
    Ok(out_path)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationOutput {
    pub split: String,
    pub uncertainty_samples: usize,
    pub report: CalibrationReport,
}

pub fn cmd_calibrate(
    run: &Path,
    samples: usize,
    split: Split,
    out: Option<&Path>,
    seed_override: Option<u64>,
    overwrite: bool,
) -> Result<PathBuf> {
    let lock = read_lock(run)?;
    let out_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| report_path(run, &format!("calibration_{split}")));
    guard_outputs(std::slice::from_ref(&out_path), overwrite)?;

    let (teacher, tparams, student, sparams, sbuffers) = load_best_models(run)?;
    let manifest = load_manifest(&lock.dataset)?;
    let eval_samples = split_samples(
        &lock.dataset,
        &manifest,
        split,
        ImageNeeds::for_variant(student.variant, lock.train.slice_thickness),
    )?;

    let seed = seed_override.unwrap_or(lock.train.seed);
    let mut fields: Vec<UncertaintyField> = Vec::with_capacity(eval_samples.len());
    for s in &eval_samples {
        let input = input_of(s, student.variant)?;
        fields.push(estimate_uncertainty(
            &student,
            &sparams,
            &sbuffers,
            &teacher,
            &tparams,
            &input,
            samples,
            seed ^ s.id as u64,
        )?);
    }
    let calib_inputs: Vec<CalibrationSample> = eval_samples
        .iter()
        .zip(&fields)
        .map(|(s, f)| CalibrationSample { id: s.id, truth: &s.mesh, field: f })
        .collect();
    let report = calibration(&calib_inputs)?;
    let output = CalibrationOutput {
        split: split.to_string(),
        uncertainty_samples: samples,
        report,
    };
    write_json(&out_path, &output)?;
    let _: CalibrationOutput = read_json(&out_path)?;
    println!(
        "calibrate {split}: pooled r {}, {} flagged -> {}",
        output
            .report
            .pooled_r
            .map_or("undefined".to_string(), |r| format!("{r:.3}")),
        output
            .report
            .per_sample
            .iter()
            .filter(|s| s.flagged_confident_wrong)
            .count(),
        out_path.display()
    );
    Ok(out_path)
}

pub fn cmd_outliers(
    run: Option<&Path>,
    dataset: Option<&Path>,
    pool_target: usize,
    out: Option<&Path>,
    overwrite: bool,
) -> Result<PathBuf> {
    let dataset = match (dataset, run) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(r)) => read_lock(r)?.dataset,
        (None, None) => {
            return Err(Error::Config("outliers needs --run or --dataset".to_string()))
        }
    };
    let out_path = match (out, run) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(r)) => report_path(r, "outliers"),
        (None, None) => {
            return Err(Error::Config("outliers needs --out when no --run is given".to_string()))
        }
    };
    guard_outputs(std::slice::from_ref(&out_path), overwrite)?;

    let manifest = load_manifest(&dataset)?;
    let cohort = split_samples(&dataset, &manifest, Split::Train, ImageNeeds::Volume)?;
    let mut subjects = Vec::new();
    for split in [Split::Val, Split::Test] {
        let entries: Vec<_> = manifest.split(split).cloned().collect();
        subjects.extend(load_samples(&dataset, &entries, ImageNeeds::Volume)?);
    }
    if subjects.is_empty() {
        return Err(Error::invalid("no val/test samples to screen"));
    }

    let report = screen_outliers(&cohort, &subjects, pool_target)?;
    write_json(&out_path, &report)?;
    let _: crate::eval::OutlierReport = read_json(&out_path)?;
    println!(
        "outliers: screened {} subjects against {} training samples -> {}",
        report.records.len(),
        report.cohort_size,
        out_path.display()
    );
    Ok(out_path)
}

/// Figures from an eval report: sigma-vs-error scatter, sigma-by-tag box
/// data, and the cumulative-variance curve, each as SVG plus CSV.
pub fn cmd_plot(report_path: &Path, out_dir: &Path, overwrite: bool) -> Result<Vec<PathBuf>> {
    let report: EvalReport = read_json(report_path)?;
    let stems = ["calibration_scatter", "sigma_by_tag", "compactness_curve"];
    let mut guards = Vec::new();
    for stem in stems {
        guards.push(out_dir.join(format!("{stem}.svg")));
        guards.push(out_dir.join(format!("{stem}.csv")));
    }
    guard_outputs(&guards, overwrite)?;

    let mut written = Vec::new();

    // Pairs are stored (error, sigma); the figure puts sigma on x.
    let points: Vec<(f64, f64)> = report.calibration.pairs.iter().map(|&(e, s)| (s, e)).collect();
    let svg = plot::scatter_svg(&points, "sigma", "surface error", "uncertainty calibration")?;
    let csv = plot::scatter_csv(&points, "sigma", "surface_error")?;
    let (a, b) = plot::write_figure(out_dir, "calibration_scatter", &svg, &csv)?;
    written.extend([a, b]);

    let mut stats = Vec::new();
    for group in ["inlier", "shape", "image"] {
        let sigmas: Vec<f64> = report
            .samples
            .iter()
            .filter(|s| s.outlier.group() == group)
            .map(|s| s.mean_sigma)
            .collect();
        if !sigmas.is_empty() {
            stats.push(plot::box_stats(group, &sigmas)?);
        }
    }
    let svg = plot::box_plot_svg(&stats, "mean sigma", "uncertainty by outlier tag")?;
    let csv = plot::box_plot_csv(&stats)?;
    let (a, b) = plot::write_figure(out_dir, "sigma_by_tag", &svg, &csv)?;
    written.extend([a, b]);

    if report.ssm.cumulative_variance.is_empty() {
        println!("plot: SSM block is degenerate, skipping the compactness curve");
    } else {
        let svg = plot::variance_curve_svg(&report.ssm.cumulative_variance, "SSM compactness")?;
        let csv = plot::variance_curve_csv(&report.ssm.cumulative_variance)?;
        let (a, b) = plot::write_figure(out_dir, "compactness_curve", &svg, &csv)?;
        written.extend([a, b]);
    }

    for p in &written {
        if !p.exists() {
            return Err(Error::Training(format!("figure {} was not written", p.display())));
        }
    }
    println!("plot: {} files -> {}", written.len(), out_dir.display());
    Ok(written)
}
