use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use coughscreen_core::audio_io::{decode_wav, route, routing_table, CaseId};
use coughscreen_core::features::CaseFeatures;
use coughscreen_core::models::{load_stage2, save_checkpoint_file, save_stage2, MiniCNN14};
use coughscreen_core::pipeline::{
    auc, cross_validate, fit_case_model, load_samples, pretrain_stage2, shuffle_labels, write_synthetic_corpus,
    CvOptions, DatasetManifest, Prediction, Sample,
};
use coughscreen_core::scoring::ModelSet;
use serde_json::json;

use crate::config::RunConfig;
use crate::{Cli, Command, ModelArgs};

pub fn execute(cli: Cli) -> Result<()> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Routes => {
            print!("{}", routing_table());
            Ok(())
        }
        Command::Featurize { input, out } => featurize(&input, out.as_deref()),
        Command::GenSynthetic { out, count, cases } => gen_synthetic(&out, count, &cases, cfg.seed),
        Command::Pretrain { case, out } => {
            let case = parse_case(&case)?;
            let cnn14 = pretrain(case, &cfg)?;
            fs::write(&out, save_stage2(&cnn14, case, cfg.seed)).with_context(|| format!("writing {}", out.display()))?;
            println!("{}", json!({"case_id": case.as_str(), "out": out}));
            Ok(())
        }
        Command::Train { manifest, out, stage2 } => train(&manifest, &out, &stage2, &cfg),
        Command::Cv {
            manifest,
            out,
            stage2,
            shuffle_labels,
        } => cv(&manifest, &out, &stage2, shuffle_labels, &cfg),
        Command::Predict { model, input } => {
            let set = load_models(&model)?;
            let bytes = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let response = set.score_wav(&bytes)?;
            println!("{}", serde_json::to_string(&response)?);
            Ok(())
        }
        Command::Evaluate { model, manifest, out } => evaluate(&model, &manifest, out.as_deref()),
        Command::Serve { model, port, host } => {
            let set = load_models(&model)?;
            crate::server::run_blocking(set, &host, port)
        }
    }
}

fn parse_case(s: &str) -> Result<CaseId> {
    s.parse::<CaseId>().map_err(anyhow::Error::msg)
}

pub fn load_models(args: &ModelArgs) -> Result<ModelSet> {
    let mut set = ModelSet::new(args.threshold);
    for path in &args.models {
        set.insert_file(path).with_context(|| format!("loading {}", path.display()))?;
    }
    Ok(set)
}

fn featurize(input: &Path, out: Option<&Path>) -> Result<()> {
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let clip = decode_wav(&bytes)?;
    let case = route(clip.sample_rate());
    let f = CaseFeatures::extract(&clip, &case)?;
    let summary = json!({
        "case_id": case.case_id.as_str(),
        "source_rate": clip.sample_rate(),
        "stage1": {"rate": case.stage1_rate, "mel_bins": f.stage1.mel_bins(), "frames": f.stage1.n_frames()},
        "stage2": {"rate": case.stage2_rate, "mel_bins": f.stage2.mel_bins(), "frames": f.stage2.n_frames()},
        "wavegram": case.stage2_wavegram,
    });
    if let Some(out) = out {
        let full = json!({
            "summary": summary,
            "stage1": f.stage1.values(),
            "stage2": f.stage2.values(),
        });
        fs::write(out, serde_json::to_vec(&full)?).with_context(|| format!("writing {}", out.display()))?;
    }
    println!("{summary}");
    Ok(())
}

fn gen_synthetic(out: &Path, count: usize, cases: &[String], seed: u64) -> Result<()> {
    let cases: Vec<CaseId> = if cases.is_empty() {
        CaseId::ALL.to_vec()
    } else {
        cases.iter().map(|c| parse_case(c)).collect::<Result<_>>()?
    };
    let mut rows = Vec::new();
    for case in cases {
        let dir = out.join(case.as_str().to_ascii_lowercase());
        rows.extend(write_synthetic_corpus(&dir, case, count, seed)?.rows);
    }
    let manifest = DatasetManifest::new(rows)?;
    let path = out.join("manifest.csv");
    manifest.save(&path)?;
    println!("{}", json!({"manifest": path, "rows": manifest.len()}));
    Ok(())
}

fn pretrain(case: CaseId, cfg: &RunConfig) -> Result<MiniCNN14<f32>> {
    eprintln!("pretraining stage 2 for {case} on {} proxy clips", cfg.proxy_clips);
    let (cnn14, losses) = pretrain_stage2(&case.config(), cfg.proxy_clips, cfg.seed)?;
    eprintln!("proxy loss {:.4} -> {:.4}", losses[0], losses[losses.len() - 1]);
    Ok(cnn14)
}

/// Stage-2 backbones from `--stage2` files, pretraining any case not given.
fn stage2_for(cases: &[CaseId], files: &[PathBuf], cfg: &RunConfig) -> Result<BTreeMap<CaseId, MiniCNN14<f32>>> {
    let mut out = BTreeMap::new();
    for path in files {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let (c, cnn14) = load_stage2(&bytes).with_context(|| format!("loading {}", path.display()))?;
        out.insert(c.case, cnn14);
    }
    for &case in cases {
        if !out.contains_key(&case) {
            out.insert(case, pretrain(case, cfg)?);
        }
    }
    Ok(out)
}

fn by_case(manifest: &Path) -> Result<BTreeMap<CaseId, Vec<Sample>>> {
    let manifest = DatasetManifest::load(manifest)?;
    let mut groups: BTreeMap<CaseId, Vec<Sample>> = BTreeMap::new();
    for (case, s) in load_samples(&manifest)? {
        groups.entry(case).or_default().push(s);
    }
    Ok(groups)
}

fn train(manifest: &Path, out: &Path, stage2: &[PathBuf], cfg: &RunConfig) -> Result<()> {
    let groups = by_case(manifest)?;
    let cases: Vec<CaseId> = groups.keys().copied().collect();
    let backbones = stage2_for(&cases, stage2, cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let opts = cfg.cv_options();
    for (case, samples) in &groups {
        let refs: Vec<&Sample> = samples.iter().collect();
        let (model, losses) = fit_case_model(&refs, &case.config(), &backbones[case], &opts, cfg.seed)?;
        let path = out.join(format!("{}.fcv", case.as_str().to_ascii_lowercase()));
        let crc = save_checkpoint_file(&model, &path)?;
        println!(
            "{}",
            json!({"case_id": case.as_str(), "n": samples.len(), "final_loss": losses.last(), "checkpoint": path, "crc": format!("{crc:08x}")})
        );
    }
    Ok(())
}

fn cv(manifest: &Path, out: &Path, stage2: &[PathBuf], shuffle: bool, cfg: &RunConfig) -> Result<()> {
    let groups = by_case(manifest)?;
    let cases: Vec<CaseId> = groups.keys().copied().collect();
    let backbones = stage2_for(&cases, stage2, cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let opts = CvOptions {
        out_dir: Some(out.join("folds")),
        ..cfg.cv_options()
    };
    let mut metrics = serde_json::Map::new();
    let mut pooled: Vec<Prediction> = Vec::new();
    for (case, samples) in &groups {
        let samples = if shuffle { shuffle_labels(samples, cfg.seed) } else { samples.clone() };
        let report = cross_validate(&samples, &case.config(), &backbones[case], &opts)?;
        eprintln!("{case}: mean AUC {:.4} ± {:.4}", report.mean_auc, report.std_auc);
        let mut m = report.metrics_json();
        m["checkpoint_crcs"] = json!(report.folds.iter().map(|f| format!("{:08x}", f.checkpoint_crc)).collect::<Vec<_>>());
        metrics.insert(case.as_str().to_string(), m);
        pooled.extend(report.predictions);
    }
    let pairs: Vec<(f64, u8)> = pooled.iter().map(|p| (p.probability, p.label)).collect();
    metrics.insert("pooled_auc".into(), json!(auc(&pairs).ok()));
    let text = serde_json::to_string_pretty(&metrics)?;
    fs::write(out.join("metrics.json"), &text)?;

    let mut w = csv::Writer::from_path(out.join("predictions.csv"))?;
    for p in &pooled {
        w.serialize(p)?;
    }
    w.flush()?;
    println!("{text}");
    Ok(())
}

fn evaluate(model: &ModelArgs, manifest: &Path, out: Option<&Path>) -> Result<()> {
    let set = load_models(model)?;
    let manifest = DatasetManifest::load(manifest)?;
    let mut pairs: BTreeMap<&'static str, Vec<(f64, u8)>> = BTreeMap::new();
    for row in &manifest.rows {
        let bytes = fs::read(&row.path).with_context(|| format!("reading {}", row.path.display()))?;
        let r = set.score_wav(&bytes).with_context(|| format!("scoring {}", row.uuid))?;
        let case = parse_case(&r.case_id)?.as_str();
        pairs.entry(case).or_default().push((r.probability, row.label));
    }
    if pairs.is_empty() {
        bail!("manifest is empty");
    }
    let mut report = serde_json::Map::new();
    let all: Vec<(f64, u8)> = pairs.values().flatten().copied().collect();
    report.insert("auc".into(), json!(auc(&all).ok()));
    report.insert("n".into(), json!(all.len()));
    for (case, p) in &pairs {
        report.insert(case.to_string(), json!({"auc": auc(p).ok(), "n": p.len()}));
    }
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(out) = out {
        fs::write(out, &text)?;
    }
    println!("{text}");
    Ok(())
}
