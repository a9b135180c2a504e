use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use scenario_gcn::dataset::{
    extract_scenarios, generate_per_class, read_jsonl, resample_to_4hz, split, write_jsonl,
    DatasetError, DatasetManifest, RawSequence, ScenarioClass, ScenarioSequence, SynthKnobs,
    N_CLASSES, TARGET_HZ,
};
use scenario_gcn::evaluation::{
    accuracy_csv, edd_csv, edd_decompose, edd_svg, frame_accuracy, mean_pr_auc, per_class_accuracy,
    pr_csv, pr_svg, ClassSummary, EddReport,
};
use scenario_gcn::model::{predict, ModelConfig, ModelError, ModelInput};
use scenario_gcn::scene_graph::{build_sequence, GraphOptions, SequenceBatch};
use scenario_gcn::training::{metrics_csv, TrainConfig, TrainError, Trainer};
use scenario_gcn::ModelParams;

use crate::{
    AblationArgs, Command, EddReportArgs, EvalArgs, ExtractArgs, Failure, GenerateArgs,
    PredictArgs, ResampleArgs, SplitArgs, TrainArgs,
};

type Result<T> = std::result::Result<T, Failure>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Resample(a) => resample(a),
        Command::Extract(a) => extract(a),
        Command::Split(a) => split_cmd(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict_cmd(a),
        Command::EddReport(a) => edd_report(a),
    }
}

fn dataset_failure(e: DatasetError) -> Failure {
    match e {
        DatasetError::Scene(_) => Failure::internal(e),
        _ => Failure::user(e),
    }
}

fn model_failure(e: ModelError) -> Failure {
    match e {
        ModelError::Config(_) | ModelError::Checkpoint(_) => Failure::user(e),
        _ => Failure::internal(e),
    }
}

fn train_failure(e: TrainError) -> Failure {
    match e {
        TrainError::Config(_) | TrainError::EmptyClass { .. } => Failure::user(e),
        TrainError::Model(m) => model_failure(m),
        _ => Failure::internal(e),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::user(anyhow!("{}: {e}", path.display()))
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::user(anyhow!("{}: no such file", path.display())))
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| io_failure(p, e)),
        _ => Ok(()),
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_failure(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn read_data(path: &Path) -> Result<Vec<RawSequence>> {
    require_file(path)?;
    read_jsonl(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::User)
}

fn scenario_sequences(raw: Vec<RawSequence>) -> Result<Vec<ScenarioSequence>> {
    raw.into_iter()
        .map(|r| ScenarioSequence::new(r).map_err(dataset_failure))
        .collect()
}

/// Parses `1-7`, `1,3,5`, class names, or a mix.
fn parse_classes(spec: &str) -> Result<Vec<ScenarioClass>> {
    let bad = |part: &str| Failure::user(anyhow!("invalid class {part:?} in {spec:?}"));
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let ids: Vec<usize> =
            if let Some((a, b)) = part.split_once('-').filter(|(a, _)| !a.is_empty()) {
                match (a.trim().parse::<usize>(), b.trim().parse::<usize>()) {
                    (Ok(a), Ok(b)) if a <= b => (a..=b).collect(),
                    _ => match ScenarioClass::from_name(part) {
                        Some(c) => vec![c.id()],
                        None => return Err(bad(part)),
                    },
                }
            } else if let Ok(id) = part.parse() {
                vec![id]
            } else {
                vec![ScenarioClass::from_name(part)
                    .ok_or_else(|| bad(part))?
                    .id()]
            };
        for id in ids {
            match ScenarioClass::from_id(id) {
                Some(ScenarioClass::NoScenario) | None => return Err(bad(part)),
                Some(c) if !out.contains(&c) => out.push(c),
                Some(_) => {}
            }
        }
    }
    if out.is_empty() {
        return Err(Failure::user(anyhow!("no classes selected")));
    }
    Ok(out)
}

fn generate(a: GenerateArgs) -> Result<()> {
    let classes = parse_classes(&a.classes)?;
    if !(a.noise_std >= 0.0 && a.noise_std.is_finite()) {
        return Err(Failure::user(anyhow!("noise std must be non-negative")));
    }
    ensure_parent(&a.out)?;
    let knobs = SynthKnobs {
        noise_std: a.noise_std,
        background_agents: a.background_agents,
    };
    let seqs =
        generate_per_class(&classes, a.per_class, a.seed, &knobs).map_err(Failure::internal)?;
    write_jsonl(&a.out, seqs.iter().map(|s| s.raw()))
        .map_err(|e| Failure::user(anyhow!("{}: {e}", a.out.display())))?;
    let frames: usize = seqs.iter().map(|s| s.len()).sum();
    println!(
        "wrote {} sequences ({frames} frames) to {}",
        seqs.len(),
        a.out.display()
    );
    Ok(())
}

fn resample(a: ResampleArgs) -> Result<()> {
    let raw = read_data(&a.input)?;
    let out: Vec<RawSequence> = raw
        .iter()
        .map(|s| resample_to_4hz(s).map_err(dataset_failure))
        .collect::<Result<_>>()?;
    ensure_parent(&a.out)?;
    write_jsonl(&a.out, &out).map_err(dataset_failure)?;
    println!(
        "resampled {} sequences to {TARGET_HZ} Hz into {}",
        out.len(),
        a.out.display()
    );
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let raw = read_data(&a.input)?;
    let mut out = Vec::new();
    for (i, s) in raw.iter().enumerate() {
        let seed = a.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        out.extend(extract_scenarios(s, seed).map_err(dataset_failure)?);
    }
    ensure_parent(&a.out)?;
    write_jsonl(&a.out, out.iter().map(|s| s.raw())).map_err(dataset_failure)?;
    println!(
        "extracted {} scenario sequences from {} recordings into {}",
        out.len(),
        raw.len(),
        a.out.display()
    );
    Ok(())
}

fn check_ratio(r: f64) -> Result<()> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(Failure::user(anyhow!("split ratio {r} is outside [0, 1]")))
    }
}

fn split_cmd(a: SplitArgs) -> Result<()> {
    check_ratio(a.ratio)?;
    let seqs = scenario_sequences(read_data(&a.data)?)?;
    let s = split(&seqs, a.ratio, a.seed);
    let manifest = DatasetManifest::new(&seqs, &s, a.ratio, a.seed);
    ensure_parent(&a.out)?;
    write_file(&a.out, &manifest.to_json())?;
    println!(
        "split {} sequences: {} train, {} val; manifest at {}",
        seqs.len(),
        s.train.len(),
        s.val.len(),
        a.out.display()
    );
    Ok(())
}

fn model_config(a: AblationArgs) -> Result<ModelConfig> {
    let config = ModelConfig {
        baseline: a.baseline,
        use_map: !a.no_map,
        residual: a.residual,
        temporal: !a.no_temporal,
        weighted_adjacency: a.weighted_adjacency,
    };
    config.validate().map_err(model_failure)?;
    Ok(config)
}

fn inputs(seqs: &[&ScenarioSequence], config: &ModelConfig) -> Result<Vec<ModelInput<f64>>> {
    seqs.iter()
        .map(|s| {
            let batch = s
                .to_batch(&config.graph_options())
                .map_err(dataset_failure)?;
            ModelInput::new(&batch, config).map_err(model_failure)
        })
        .collect()
}

fn train(a: TrainArgs) -> Result<()> {
    check_ratio(a.split)?;
    let config = model_config(a.ablation)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr0: a.lr,
        decay_factor: a.decay_factor,
        decay_after_epochs: a.decay_after.clone(),
        beta1: a.beta1,
        beta2: a.beta2,
        eps: a.eps,
        seed: a.seed,
    };
    cfg.validate().map_err(train_failure)?;
    let seqs = scenario_sequences(read_data(&a.data)?)?;
    ensure_dir(&a.out)?;

    let s = split(&seqs, a.split, a.seed);
    let manifest = DatasetManifest::new(&seqs, &s, a.split, a.seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| &seqs[i]).collect::<Vec<_>>();
    let train_inputs = inputs(&pick(&s.train), &config)?;
    let val_inputs = inputs(&pick(&s.val), &config)?;
    log::info!(
        "training on {} sequences, validating on {}",
        train_inputs.len(),
        val_inputs.len()
    );
    let params = ModelParams::init(a.seed, config).map_err(model_failure)?;
    let mut trainer = Trainer::new(cfg, params, train_inputs, val_inputs).map_err(train_failure)?;
    let metrics_path = a.out.join("metrics.csv");
    for _ in 0..a.epochs {
        trainer.run_epoch().map_err(train_failure)?;
        write_file(&metrics_path, &metrics_csv(trainer.log()))?;
    }
    let (params, log) = trainer.finish();
    let ckpt = a.out.join("checkpoint.json");
    params.save(&ckpt).map_err(|e| io_failure(&ckpt, e))?;
    write_file(&a.out.join("manifest.json"), &manifest.to_json())?;
    let last = log.last().expect("at least one epoch");
    println!(
        "trained {} epochs: final train loss {:.5}, val mean PR-AUC {}; wrote {}",
        log.len(),
        last.train_loss,
        last.val_mean_pr_auc
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}")),
        a.out.display()
    );
    Ok(())
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PredictionRecord {
    id: String,
    /// Ground-truth labels when the input carried them.
    gt: Option<Vec<usize>>,
    labels: Vec<usize>,
    probabilities: Vec<Vec<f64>>,
}

fn checkpoint_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("checkpoint.json")
    } else {
        p.to_path_buf()
    }
}

fn load_params(p: &Path) -> Result<ModelParams> {
    let path = checkpoint_path(p);
    require_file(&path)?;
    ModelParams::load(&path).map_err(model_failure)
}

fn batch_of(raw: &RawSequence, options: &GraphOptions) -> Result<SequenceBatch> {
    if (raw.hz - TARGET_HZ).abs() > 1e-9 {
        return Err(Failure::user(anyhow!(
            "sequence {} is sampled at {} Hz; resample to 4 Hz first",
            raw.id,
            raw.hz
        )));
    }
    let lanes = raw.lane_graph().map_err(dataset_failure)?;
    let frames: Vec<_> = raw
        .frames
        .iter()
        .map(|f| (f.ego, f.agents.clone()))
        .collect();
    let labels = raw.labels().unwrap_or_else(|| vec![0; raw.frames.len()]);
    build_sequence(&frames, &labels, &lanes, options)
        .map_err(|e| Failure::user(anyhow!("sequence {}: {e}", raw.id)))
}

fn run_model(params: &ModelParams, raw: &[RawSequence]) -> Result<Vec<PredictionRecord>> {
    let options = params.config.graph_options();
    raw.iter()
        .map(|s| {
            let batch = batch_of(s, &options)?;
            let p = predict(params, &batch).map_err(model_failure)?;
            Ok(PredictionRecord {
                id: s.id.clone(),
                gt: s.labels(),
                labels: p.labels,
                probabilities: (0..p.probabilities.rows())
                    .map(|t| p.probabilities.row(t).to_vec())
                    .collect(),
            })
        })
        .collect()
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    require_file(path)?;
    let file = fs::File::open(path).map_err(|e| io_failure(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_failure(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line)
            .map_err(|e| Failure::user(anyhow!("{} line {}: {e}", path.display(), i + 1)))?;
        let t = rec.labels.len();
        let consistent = rec.probabilities.len() == t
            && rec.probabilities.iter().all(|p| p.len() == N_CLASSES)
            && rec.labels.iter().all(|&l| l < N_CLASSES)
            && rec
                .gt
                .as_ref()
                .is_none_or(|g| g.len() == t && g.iter().all(|&l| l < N_CLASSES));
        if !consistent {
            return Err(Failure::user(anyhow!(
                "{} line {}: inconsistent record {}",
                path.display(),
                i + 1,
                rec.id
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| io_failure(path, e))?;
    }
    w.flush().map_err(|e| io_failure(path, e))
}

fn ground_truth(rec: &PredictionRecord) -> Result<&[usize]> {
    rec.gt
        .as_deref()
        .ok_or_else(|| Failure::user(anyhow!("sequence {} has no ground-truth labels", rec.id)))
}

fn merged_edd(records: &[PredictionRecord]) -> Result<EddReport> {
    let mut total = EddReport::default();
    for r in records {
        let rep = edd_decompose(ground_truth(r)?, &r.labels).map_err(Failure::internal)?;
        total.merge_with(&rep);
    }
    Ok(total)
}

fn write_edd(out: &Path, records: &[PredictionRecord]) -> Result<EddReport> {
    let report = merged_edd(records)?;
    write_file(&out.join("edd.csv"), &edd_csv(&report))?;
    write_file(&out.join("edd.svg"), &edd_svg(&report))?;
    Ok(report)
}

#[derive(Serialize)]
struct EvalSummary {
    sequences: usize,
    frames: usize,
    frame_accuracy: f64,
    mean_pr_auc: Option<f64>,
    per_class_pr_auc: Vec<Option<f64>>,
}

fn eval(a: EvalArgs) -> Result<()> {
    let records = if let Some(p) = &a.predictions {
        read_predictions(p)?
    } else {
        let ckpt = a.ckpt.as_ref().expect("clap requires ckpt");
        let data = a
            .data
            .as_ref()
            .ok_or_else(|| Failure::user(anyhow!("--data is required with --ckpt")))?;
        let params = load_params(ckpt)?;
        let mut raw = read_data(data)?;
        if let Some(m) = &a.manifest {
            require_file(m)?;
            let text = fs::read_to_string(m).map_err(|e| io_failure(m, e))?;
            let manifest: DatasetManifest = serde_json::from_str(&text)
                .map_err(|e| Failure::user(anyhow!("{}: {e}", m.display())))?;
            let val: HashSet<&str> = manifest.val.iter().map(String::as_str).collect();
            raw.retain(|s| val.contains(s.id.as_str()));
        }
        run_model(&params, &raw)?
    };
    if records.is_empty() {
        return Err(Failure::user(anyhow!("nothing to evaluate")));
    }
    ensure_dir(&a.out)?;

    let (mut gt, mut pred, mut probs) = (Vec::new(), Vec::new(), Vec::new());
    for r in &records {
        gt.extend_from_slice(ground_truth(r)?);
        pred.extend_from_slice(&r.labels);
        probs.extend(r.probabilities.iter().cloned());
    }
    let pr = mean_pr_auc(&probs, &gt, N_CLASSES).map_err(Failure::internal)?;
    let per_class = pr.per_class();
    let rows: Vec<ClassSummary> = (0..N_CLASSES)
        .map(|c| {
            Ok(ClassSummary {
                class: c,
                frames: gt.iter().filter(|&&g| g == c).count(),
                accuracy: per_class_accuracy(&gt, &pred, c).map_err(Failure::internal)?,
                pr_auc: per_class[c],
            })
        })
        .collect::<Result<_>>()?;
    let curves: Vec<_> = pr.curves.iter().flatten().cloned().collect();
    write_file(&a.out.join("accuracy.csv"), &accuracy_csv(&rows))?;
    write_file(&a.out.join("pr.csv"), &pr_csv(&curves))?;
    write_file(&a.out.join("pr.svg"), &pr_svg(&curves))?;
    let summary = EvalSummary {
        sequences: records.len(),
        frames: gt.len(),
        frame_accuracy: frame_accuracy(&gt, &pred).map_err(Failure::internal)?,
        mean_pr_auc: (!pr.mean.is_nan()).then_some(pr.mean),
        per_class_pr_auc: per_class,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&a.out.join("summary.json"), &json)?;
    println!(
        "{} sequences, {} frames: accuracy {:.4}, mean PR-AUC {}",
        summary.sequences,
        summary.frames,
        summary.frame_accuracy,
        summary
            .mean_pr_auc
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
    );
    if a.edd {
        let rep = write_edd(&a.out, &records)?;
        println!(
            "EDD: {} error frames, {} serious ({:.2}%)",
            rep.errors(),
            rep.serious(),
            100.0 * rep.serious_fraction()
        );
    }
    println!("reports in {}", a.out.display());
    Ok(())
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    let params = load_params(&a.ckpt)?;
    let raw = read_data(&a.data)?;
    let records = run_model(&params, &raw)?;
    ensure_parent(&a.out)?;
    write_predictions(&a.out, &records)?;
    let frames: usize = records.iter().map(|r| r.labels.len()).sum();
    println!(
        "predicted {} sequences ({frames} frames) into {}",
        records.len(),
        a.out.display()
    );
    Ok(())
}

fn edd_report(a: EddReportArgs) -> Result<()> {
    let records = read_predictions(&a.predictions)?;
    ensure_dir(&a.out)?;
    let rep = write_edd(&a.out, &records)?;
    println!(
        "{} frames: {} correct, {} errors, {} serious; report in {}",
        rep.total(),
        rep.correct,
        rep.errors(),
        rep.serious(),
        a.out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_specs() {
        let ids = |s: &str| parse_classes(s).map(|v| v.iter().map(|c| c.id()).collect::<Vec<_>>());
        assert_eq!(ids("1-7").ok(), Some(vec![1, 2, 3, 4, 5, 6, 7]));
        assert_eq!(ids("3, 1,3").ok(), Some(vec![3, 1]));
        assert_eq!(ids("cut-in,2").ok(), Some(vec![1, 2]));
        assert!(ids("0").is_err());
        assert!(ids("8").is_err());
        assert!(ids("5-2").is_err());
        assert!(ids("").is_err());
    }

    #[test]
    fn prediction_records_round_trip() {
        let r = PredictionRecord {
            id: "x".into(),
            gt: Some(vec![0, 1]),
            labels: vec![1, 1],
            probabilities: vec![vec![0.1 / 3.0; N_CLASSES], vec![1.0 / 7.0; N_CLASSES]],
        };
        let line = serde_json::to_string(&r).unwrap();
        let back: PredictionRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }
}
