use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kdsr::degradation::{
    degrade, load_png_dir, procedural_textures, synthesize_dataset, DegradationSpec, NamedImage,
};
use kdsr::eval::{
    eval_aniso_grid, eval_gaussian8, idr_separability, run_ablation, standard_arms, AblationPlan,
    EvalOptions, SrModel,
};
use kdsr::imaging::Image;
use kdsr::training::{
    train_student_with, train_teacher_with, write_loss_log, Checkpoint, LossRecord, TrainOutcome,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ImageSource, Protocol, RunConfig};

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";

fn load_source(src: &ImageSource, what: &str) -> Result<Vec<NamedImage>> {
    match (&src.dir, &src.procedural) {
        (Some(dir), None) => {
            let images = load_png_dir(dir)
                .with_context(|| format!("loading {what} images from {}", dir.display()))?;
            if images.is_empty() {
                bail!("no PNG images in {}", dir.display());
            }
            Ok(images)
        }
        (None, Some(p)) => Ok(procedural_textures(p.count, p.size, p.seed)?),
        (Some(_), Some(_)) => bail!("{what} source sets both `dir` and `procedural`"),
        (None, None) => bail!("{what} source sets neither `dir` nor `procedural`"),
    }
}

fn train_images(cfg: &RunConfig) -> Result<Vec<Image>> {
    Ok(load_source(&cfg.data.train, "training")?
        .into_iter()
        .map(|n| n.image)
        .collect())
}

fn eval_images(cfg: &RunConfig) -> Result<Vec<NamedImage>> {
    load_source(&cfg.data.eval, "evaluation")?
        .into_iter()
        .map(|n| {
            Ok(NamedImage {
                image: n.image.crop_to_multiple(cfg.model.sr.scale)?,
                id: n.id,
            })
        })
        .collect()
}

fn load_checkpoint(path: Option<&PathBuf>, what: &str) -> Result<Checkpoint> {
    let path = path.with_context(|| format!("no {what} checkpoint configured"))?;
    Checkpoint::load(path).with_context(|| format!("loading {what} checkpoint {}", path.display()))
}

fn progress(label: &str, total: u64) -> impl FnMut(&LossRecord) + '_ {
    let every = (total / 10).max(1);
    move |r: &LossRecord| {
        if r.iteration.is_multiple_of(every) || r.iteration + 1 == total {
            eprintln!(
                "[{label}] iter {:>6}/{total}  l_rec {:.5}  l_kd {:.5}  total {:.5}",
                r.iteration + 1,
                r.l_rec,
                r.l_kd,
                r.total
            );
        }
    }
}

fn save_outcome(out: &Path, name: &str, outcome: &TrainOutcome) -> Result<()> {
    outcome.checkpoint.save(out.join(name))?;
    write_loss_log(out.join(format!("loss_{name}.csv")), &outcome.log)?;
    Ok(())
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let source = cfg.synth.source.as_ref().unwrap_or(&cfg.data.train);
    let hr = load_source(source, "synthesis")?;
    let records = synthesize_dataset(&hr, out, cfg.synth.mode, &cfg.synth.sampler, cfg.synth.seed)?;
    eprintln!("wrote {} HR/LR pairs to {}", records.len(), out.display());
    Ok(())
}

pub fn train_teacher(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = train_images(cfg)?;
    let outcome = train_teacher_with(
        &data,
        &cfg.model,
        &cfg.teacher,
        &mut progress("teacher", cfg.teacher.iterations),
    )?;
    save_outcome(out, "teacher", &outcome)?;
    eprintln!("teacher checkpoint: {}", out.join("teacher").display());
    Ok(())
}

pub fn train_student(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = train_images(cfg)?;
    let teacher = load_checkpoint(cfg.checkpoints.teacher.as_ref(), "teacher")?;
    let outcome = train_student_with(
        &data,
        &teacher,
        &cfg.student,
        &mut progress("student", cfg.student.iterations),
    )?;
    save_outcome(out, "student", &outcome)?;
    eprintln!("student checkpoint: {}", out.join("student").display());
    Ok(())
}

pub fn eval(cfg: &RunConfig, out: &Path) -> Result<()> {
    let path = cfg
        .eval
        .checkpoint
        .as_ref()
        .or(cfg.checkpoints.student.as_ref());
    let ckpt = load_checkpoint(path, "evaluation")?;
    let model = SrModel::from_checkpoint(&ckpt)?;
    let hr = eval_images(cfg)?;
    let opts = EvalOptions {
        checkpoint: path.map(|p| p.display().to_string()).unwrap_or_default(),
        seed: cfg.eval.seed,
        border: cfg.eval.border,
    };
    let mut text = String::new();
    for protocol in &cfg.eval.protocols {
        match protocol {
            Protocol::Gaussian8 => {
                let r = eval_gaussian8(&model, &hr, &opts)?;
                r.write_csv(out.join("eval_gaussian8.csv"))?;
                r.write_image_csv(out.join("eval_gaussian8_images.csv"))?;
                text.push_str(&r.to_table());
            }
            Protocol::AnisoGrid => {
                let r = eval_aniso_grid(&model, &hr, &cfg.eval.noise_levels, &opts)?;
                r.write_csv(out.join("eval_aniso.csv"))?;
                r.write_image_csv(out.join("eval_aniso_images.csv"))?;
                text.push_str(&r.to_table());
            }
            Protocol::Separability => {
                let r =
                    idr_separability(&model, &hr, &cfg.eval.separability_sigmas, cfg.eval.seed)?;
                fs::write(
                    out.join("separability.json"),
                    serde_json::to_string_pretty(&r)?,
                )?;
                text.push_str(&format!(
                    "separability {:?}: inter {:.6} intra {:.6} ratio {:.6}\n",
                    r.sigmas, r.inter, r.intra, r.ratio
                ));
            }
        }
        text.push('\n');
    }
    fs::write(out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

/// One row per (image, sigma): `image_id, degradation_sigma, d_*[, dprime_*]`.
pub fn export_idr(cfg: &RunConfig, out: &Path) -> Result<()> {
    let path = cfg
        .export
        .checkpoint
        .as_ref()
        .or(cfg.checkpoints.student.as_ref());
    let ckpt = load_checkpoint(path, "export")?;
    let model = SrModel::from_checkpoint(&ckpt)?;
    let hr = eval_images(cfg)?;
    if cfg.export.sigmas.is_empty() {
        bail!("export needs at least one sigma");
    }
    let c = ckpt.meta.models.ide.channels;
    let mut header = vec!["image_id".to_string(), "degradation_sigma".to_string()];
    header.extend((0..c).map(|i| format!("d_{i}")));
    if cfg.export.include_dprime {
        header.extend((0..4 * c).map(|i| format!("dprime_{i}")));
    }
    let file = out.join("idr.csv");
    let mut w = csv::Writer::from_path(&file)?;
    w.write_record(&header)?;
    for &sigma in &cfg.export.sigmas {
        let spec = DegradationSpec::isotropic(sigma, ckpt.meta.models.sr.scale, 0.0)?;
        for item in &hr {
            let lr = degrade(
                &item.image,
                &spec,
                &mut ChaCha8Rng::seed_from_u64(cfg.eval.seed),
            )?;
            let idr = model.estimate(&lr, Some(&item.image))?;
            let mut row = vec![item.id.clone(), sigma.to_string()];
            row.extend(idr.d.data().iter().map(|v| v.to_string()));
            if cfg.export.include_dprime {
                row.extend(idr.d_prime.data().iter().map(|v| v.to_string()));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    eprintln!("wrote {}", file.display());
    Ok(())
}

pub fn ablate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = train_images(cfg)?;
    let hr = eval_images(cfg)?;
    let teacher = load_checkpoint(cfg.checkpoints.teacher.as_ref(), "teacher")?;
    let opts = EvalOptions {
        checkpoint: "ablation".into(),
        seed: cfg.eval.seed,
        border: cfg.eval.border,
    };
    let runs_dir = out.join("ablate");
    let plan = AblationPlan {
        train: &data,
        eval_hr: &hr,
        teacher: &teacher,
        base: &cfg.student,
        arms: &standard_arms(cfg.ablate.lambda_kl),
        seeds: &cfg.ablate.seeds,
        eval: &opts,
    };
    let report = run_ablation(&plan, &mut |arm, seed, outcome| {
        let dir = runs_dir.join(format!("{}-s{seed}", arm.name));
        outcome.checkpoint.save(dir.join("student"))?;
        write_loss_log(dir.join("loss_student.csv"), &outcome.log)?;
        let last = outcome.log.last().map_or(f64::NAN, |r| r.total);
        eprintln!(
            "[ablate] {} seed {seed} done, final loss {last:.5}",
            arm.name
        );
        Ok(())
    })?;
    report.write_csv(
        out.join("ablation_rows.csv"),
        out.join("ablation_summary.csv"),
    )?;
    let table = report.to_table();
    fs::write(out.join("ablation.txt"), &table)?;
    print!("{table}");
    Ok(())
}
