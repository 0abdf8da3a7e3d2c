//! On-disk layouts for datasets, checkpoints, and run reports.
//!
//! A dataset directory holds `manifest.jsonl` (one JSON row per sample),
//! `vocab.txt` (token per line, line number = id, line 0 reserved for the
//! blank), and one clip snapshot per sample under `clips/`. A checkpoint
//! directory holds `network.spec` plus one snapshot per named tensor under
//! `tensors/`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use tscm_core::{
    vocabulary, Dataset, EvalReport, GlossSequence, GlyphGloss, ModelInstance, NetworkSpec, Sample,
    Split, TrainOutcome,
};

use crate::snapshot;

pub const BLANK_TOKEN: &str = "-";

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub label: Vec<usize>,
    pub frames: usize,
    pub split: String,
    pub seed: u64,
    pub spans: Vec<(usize, usize)>,
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Dev => "dev",
        Split::Test => "test",
    }
}

pub fn parse_split(name: &str) -> Result<Split> {
    match name {
        "train" => Ok(Split::Train),
        "dev" => Ok(Split::Dev),
        "test" => Ok(Split::Test),
        other => bail!("unknown split \"{other}\" (expected train, dev, or test)"),
    }
}

pub fn write_dataset(dir: &Path, data: &Dataset<f32>) -> Result<()> {
    let clips = dir.join("clips");
    fs::create_dir_all(&clips).with_context(|| format!("creating {}", clips.display()))?;

    let mut vocab = String::from(BLANK_TOKEN);
    for gloss in &data.glosses {
        vocab.push('\n');
        vocab.push_str(&gloss.name);
    }
    vocab.push('\n');
    fs::write(dir.join("vocab.txt"), vocab)?;

    let mut manifest = String::new();
    for (i, sample) in data.samples.iter().enumerate() {
        let rel = format!("clips/sample_{i:05}.{}", snapshot::EXTENSION);
        snapshot::write_tensor(&dir.join(&rel), &sample.video)?;
        let row = ManifestRow {
            path: rel,
            label: sample.label.tokens().to_vec(),
            frames: sample.video.shape()[0],
            split: split_name(sample.split).to_string(),
            seed: sample.seed,
            spans: sample.spans.clone(),
        };
        manifest.push_str(&serde_json::to_string(&row)?);
        manifest.push('\n');
    }
    fs::write(dir.join("manifest.jsonl"), manifest)?;
    Ok(())
}

pub fn load_vocabulary(dir: &Path) -> Result<Vec<GlyphGloss>> {
    let path = dir.join("vocab.txt");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.first() != Some(&BLANK_TOKEN) {
        bail!("{}: line 0 must be the blank token \"{BLANK_TOKEN}\"", path.display());
    }
    let glosses = vocabulary(lines.len() - 1).map_err(|e| anyhow!("{e}"))?;
    for (gloss, line) in glosses.iter().zip(&lines[1..]) {
        if gloss.name != *line {
            bail!(
                "{}: token {} is \"{line}\", expected \"{}\"",
                path.display(),
                gloss.id,
                gloss.name
            );
        }
    }
    Ok(glosses)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset<f32>> {
    let glosses = load_vocabulary(dir)?;
    let manifest = dir.join("manifest.jsonl");
    let text =
        fs::read_to_string(&manifest).with_context(|| format!("reading {}", manifest.display()))?;
    let mut samples = Vec::new();
    let mut resolution = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: ManifestRow = serde_json::from_str(line)
            .with_context(|| format!("{}: row {lineno}", manifest.display()))?;
        let video = snapshot::read_tensor(&dir.join(&row.path))?;
        match video.shape() {
            [t, 3, h, w] => {
                if *t != row.frames {
                    bail!("{}: frame count disagrees with the clip", row.path);
                }
                resolution = resolution.max(*h).max(*w);
            }
            other => bail!("{}: clip shape {other:?} is not [T, 3, H, W]", row.path),
        }
        samples.push(Sample {
            video,
            label: GlossSequence::new(row.label).map_err(|e| anyhow!("{}: {e}", row.path))?,
            split: parse_split(&row.split)?,
            seed: row.seed,
            spans: row.spans,
        });
    }
    if samples.is_empty() {
        bail!("{}: no samples listed", manifest.display());
    }
    Ok(Dataset { glosses, samples, resolution })
}

pub fn save_checkpoint(dir: &Path, model: &ModelInstance<f32>) -> Result<()> {
    let tensors = dir.join("tensors");
    fs::create_dir_all(&tensors)?;
    fs::write(dir.join("network.spec"), model.spec.to_text())?;
    for (name, tensor) in model.tensors() {
        let path = tensors.join(format!("{name}.{}", snapshot::EXTENSION));
        snapshot::write_tensor(&path, tensor)?;
    }
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<ModelInstance<f32>> {
    let spec_path = dir.join("network.spec");
    let text =
        fs::read_to_string(&spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let spec = NetworkSpec::parse(&text).map_err(|e| anyhow!("{}: {e}", spec_path.display()))?;
    let mut model = ModelInstance::init(spec, 0).map_err(|e| anyhow!("{e}"))?;
    let names: Vec<String> = model.tensors().map(|(n, _)| n.to_string()).collect();
    for name in names {
        let path = dir.join("tensors").join(format!("{name}.{}", snapshot::EXTENSION));
        let tensor = snapshot::read_tensor(&path)?;
        model
            .load_tensor(&name, tensor)
            .map_err(|e| anyhow!("{}: {e}", path.display()))?;
    }
    Ok(model)
}

pub fn write_metrics_csv(path: &Path, outcome: &TrainOutcome<f32>) -> Result<()> {
    let mut csv = String::from("epoch,lr,train_loss,dev_wer\n");
    for log in &outcome.logs {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            log.epoch, log.lr, log.train_loss, log.dev_wer
        ));
    }
    fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn render_tokens(tokens: &[usize], glosses: &[GlyphGloss]) -> String {
    if tokens.is_empty() {
        return String::from("(empty)");
    }
    tokens
        .iter()
        .map(|&t| {
            glosses
                .iter()
                .find(|g| g.id == t)
                .map(|g| g.name.clone())
                .unwrap_or_else(|| format!("#{t}"))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_eval_csv(path: &Path, report: &EvalReport, glosses: &[GlyphGloss]) -> Result<()> {
    let mut csv = String::from("sentence,reference,hypothesis,ins,del,sub,wer\n");
    for (i, (reference, hyp)) in report.pairs.iter().enumerate() {
        let (rate, ops) = tscm_core::wer(reference, hyp);
        csv.push_str(&format!(
            "{i},{},{},{},{},{},{:.2}\n",
            render_tokens(reference.tokens(), glosses),
            render_tokens(hyp.tokens(), glosses),
            ops.ins,
            ops.del,
            ops.sub,
            rate
        ));
    }
    fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Resolves the output directory, creating it if needed.
pub fn prepare_out_dir(out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    Ok(out_dir.to_path_buf())
}
