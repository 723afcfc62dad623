//! Subcommand bodies. Each reads its inputs, calls into the library and
//! writes its artifacts with the effective config attached.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use stomaforge::coco::{
    parse_dataset, parse_predictions, serialize_dataset, serialize_predictions, validate_with, Dataset,
    Prediction, ValidateOptions,
};
use stomaforge::evaluator::{
    dataset_instances, evaluate_instances, evaluate_semantic, miou_macc, prediction_instances, MetricTable,
};
use stomaforge::pseudo::{build_pseudo_dataset, filter_predictions, merge_datasets, ClassCounts, ThresholdPolicy};
use stomaforge::stats::{class_summary, metadata_summary, split_dataset, SplitSpec};
use stomaforge::stitcher::stitch;
use stomaforge::tiler::{tile_dataset, PatchRecord};

use crate::config::PipelineConfig;
use crate::error::{input, processing, CliError, Result};
use crate::{
    Cli, Command, EvalInstanceArgs, EvalSemanticArgs, MergeArgs, PseudoFilterArgs, SplitArgs, StatsArgs,
    StitchArgs, TileArgs, ValidateArgs,
};

/// Top-level key carrying provenance in JSON-object artifacts.
pub const PROVENANCE_KEY: &str = "stomaforge";

#[derive(Serialize)]
struct Provenance<'a> {
    version: &'static str,
    command: &'a str,
    config: &'a PipelineConfig,
    #[serde(skip_serializing_if = "Value::is_null")]
    params: Value,
}

struct Ctx {
    command: &'static str,
    config: PipelineConfig,
}

impl Ctx {
    fn provenance(&self, params: Value) -> Value {
        serde_json::to_value(Provenance {
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config: &self.config,
            params,
        })
        .expect("provenance serializes")
    }

    fn stamp(&self, d: &mut Dataset, params: Value) {
        d.extra.insert(PROVENANCE_KEY.into(), self.provenance(params));
    }

    fn write_report(&self, path: &Path, params: Value, body: impl Serialize) -> Result<()> {
        let mut v = serde_json::to_value(body).map_err(processing)?;
        if let Value::Object(map) = &mut v {
            map.insert(PROVENANCE_KEY.into(), self.provenance(params));
        }
        write(path, &pretty(&v))
    }

    /// Array artifacts stay plain arrays; provenance goes beside them.
    fn write_sidecar(&self, artifact: &Path, params: Value) -> Result<()> {
        write(&sidecar_path(artifact), &pretty(&self.provenance(params)))
    }
}

pub fn sidecar_path(artifact: &Path) -> PathBuf {
    artifact.with_extension("provenance.json")
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| processing(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| processing(format!("{}: {e}", path.display())))
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset(&read(path)?).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn read_predictions(path: &Path, context: &Dataset) -> Result<Vec<Prediction>> {
    parse_predictions(&read(path)?, context).map_err(|e| input(format!("{}: {e}", path.display())))
}

pub fn run(cli: Cli) -> Result<()> {
    let config = PipelineConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Validate(a) => validate(Ctx { command: "validate", config }, a),
        Command::Split(a) => split(Ctx { command: "split", config }, a),
        Command::Tile(a) => tile(Ctx { command: "tile", config }, a),
        Command::PseudoFilter(a) => pseudo_filter(Ctx { command: "pseudo-filter", config }, a),
        Command::Merge(a) => merge(Ctx { command: "merge", config }, a),
        Command::Stitch(a) => stitch_cmd(Ctx { command: "stitch", config }, a),
        Command::EvalSemantic(a) => eval_semantic(Ctx { command: "eval-semantic", config }, a),
        Command::EvalInstance(a) => eval_instance(Ctx { command: "eval-instance", config }, a),
        Command::Stats(a) => stats(Ctx { command: "stats", config }, a),
    }
}

fn validate(mut ctx: Ctx, a: ValidateArgs) -> Result<()> {
    ctx.config.strict |= a.strict;
    let d = read_dataset(&a.input)?;
    let report = validate_with(
        &d,
        ValidateOptions {
            strict_categories: ctx.config.strict,
        },
    );
    if let Some(path) = &a.report {
        ctx.write_report(
            path,
            Value::Null,
            json!({
                "images": d.images.len(),
                "annotations": d.annotations.len(),
                "valid": report.is_valid(),
                "issues": report.issues,
            }),
        )?;
    }
    println!(
        "validate: {} images, {} annotations, {} issues",
        d.images.len(),
        d.annotations.len(),
        report.issues.len()
    );
    if report.is_valid() {
        return Ok(());
    }
    let mut by_rule: BTreeMap<String, usize> = BTreeMap::new();
    for i in &report.issues {
        *by_rule.entry(format!("{:?}", i.rule)).or_default() += 1;
    }
    Err(CliError::Input {
        message: format!("{}: {} validation issues", a.input.display(), report.issues.len()),
        details: json!({ "rules": by_rule, "first": report.issues.first() }),
    })
}

fn split(ctx: Ctx, a: SplitArgs) -> Result<()> {
    let spec = match (&a.spec, &a.ratios, a.seed) {
        (Some(path), _, _) => {
            serde_json::from_str::<SplitSpec>(&read(path)?).map_err(|e| input(format!("{}: {e}", path.display())))?
        }
        (None, Some(r), Some(seed)) => match r[..] {
            [train, val, test] => SplitSpec::Ratio {
                ratios: [train, val, test],
                seed,
            },
            _ => return Err(CliError::Usage(format!("--ratios takes 3 values, got {}", r.len()))),
        },
        _ => return Err(CliError::Usage("split needs --spec or --ratios with --seed".into())),
    };
    let d = read_dataset(&a.input)?;
    let splits = split_dataset(&d, &spec).map_err(input)?;
    let mut parts = Vec::new();
    for (name, part) in splits.iter() {
        let mut part = part.clone();
        ctx.stamp(&mut part, json!({ "split": name, "spec": spec }));
        write(&a.out.join(format!("{name}.json")), &serialize_dataset(&part))?;
        parts.push(format!("{name} {}/{}", part.images.len(), part.annotations.len()));
    }
    println!("split: {} images/annotations", parts.join(", "));
    Ok(())
}

fn tile(mut ctx: Ctx, a: TileArgs) -> Result<()> {
    if let Some(m) = a.mode {
        ctx.config.empty_patch = m;
    }
    if let Some(p) = a.patch {
        ctx.config.patch = p;
    }
    if let Some(s) = a.stride {
        ctx.config.stride = s;
    }
    let d = read_dataset(&a.input)?;
    let c = &ctx.config;
    let tiled = tile_dataset(&d, c.empty_patch, c.patch, c.stride).map_err(processing)?;
    let mut patches = tiled.dataset;
    let params = json!({
        "generated": tiled.generated,
        "retained": patches.images.len(),
        "unassigned": tiled.unassigned,
    });
    ctx.stamp(&mut patches, params.clone());
    let manifest = a.out.join("manifest.json");
    write(&a.out.join("patches.json"), &serialize_dataset(&patches))?;
    write(&manifest, &serde_json::to_string(&tiled.manifest).map_err(processing)?)?;
    ctx.write_sidecar(&manifest, params)?;
    println!(
        "tile: {} images -> {} patches generated, {} retained, {} dropped empty, {} annotations, {} unassigned",
        d.images.len(),
        tiled.generated,
        patches.images.len(),
        tiled.generated - patches.images.len(),
        patches.annotations.len(),
        tiled.unassigned.len()
    );
    Ok(())
}

fn parse_override(s: &str) -> Result<(String, f64)> {
    let (name, value) = s
        .rsplit_once('=')
        .ok_or_else(|| CliError::Usage(format!("--threshold expects NAME=VALUE, got {s:?}")))?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("--threshold value {value:?} is not a number")))?;
    Ok((name.trim().to_string(), value))
}

fn pseudo_filter(mut ctx: Ctx, a: PseudoFilterArgs) -> Result<()> {
    match a.thresholds.as_deref() {
        None => {}
        Some("default") => ctx.config.thresholds = ThresholdPolicy::default(),
        Some(path) => {
            let path = Path::new(path);
            ctx.config.thresholds =
                serde_json::from_str(&read(path)?).map_err(|e| input(format!("{}: {e}", path.display())))?;
        }
    }
    for o in &a.threshold {
        let (name, value) = parse_override(o)?;
        ctx.config.thresholds.set(name, value).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let patches = read_dataset(&a.patches)?;
    let preds = read_predictions(&a.preds, &patches)?;
    let outcome = filter_predictions(&preds, &ctx.config.thresholds, &patches.categories).map_err(input)?;
    let mut pseudo = build_pseudo_dataset(&patches, &outcome.kept).map_err(processing)?;
    let params = json!({ "counts": outcome.counts });
    ctx.stamp(&mut pseudo, params.clone());
    write(&a.out, &serialize_dataset(&pseudo))?;
    if let Some(path) = &a.dropped {
        write(path, &serialize_predictions(&outcome.dropped))?;
        ctx.write_sidecar(path, params)?;
    }
    let per_class: Vec<String> = outcome
        .counts
        .iter()
        .map(|(name, c)| format!("{name} {}/{}", c.kept, c.dropped))
        .collect();
    println!(
        "pseudo-filter: kept {}, dropped {} ({}); {} patches, {} pseudo annotations",
        outcome.kept.len(),
        outcome.dropped.len(),
        per_class.join(", "),
        pseudo.images.len(),
        pseudo.annotations.len()
    );
    Ok(())
}

/// Kept/dropped counts recorded by `pseudo-filter`, if present.
fn recorded_filter_counts(d: &Dataset) -> Option<BTreeMap<String, ClassCounts>> {
    let counts = d.extra.get(PROVENANCE_KEY)?.get("params")?.get("counts")?;
    serde_json::from_value(counts.clone()).ok()
}

fn merge(ctx: Ctx, a: MergeArgs) -> Result<()> {
    let human = read_dataset(&a.human)?;
    let pseudo = read_dataset(&a.pseudo)?;
    let (mut merged, mut report) = merge_datasets(&human, &pseudo).map_err(processing)?;
    report.filter = recorded_filter_counts(&pseudo);
    ctx.stamp(&mut merged, serde_json::to_value(&report).map_err(processing)?);
    write(&a.out, &serialize_dataset(&merged))?;
    if let Some(path) = &a.report {
        ctx.write_report(path, Value::Null, &report)?;
    }
    println!(
        "merge: {} human + {} pseudo = {} images; {} + {} annotations",
        report.human_images,
        report.pseudo_images,
        report.total_images(),
        report.human_annotations,
        report.pseudo_annotations
    );
    Ok(())
}

fn stitch_cmd(mut ctx: Ctx, a: StitchArgs) -> Result<()> {
    if let Some(t) = a.dedup_iou {
        ctx.config.dedup_iou = t;
    }
    let manifest: Vec<PatchRecord> = serde_json::from_str(&read(&a.manifest)?)
        .map_err(|e| input(format!("{}: {e}", a.manifest.display())))?;
    let preds: Vec<Prediction> =
        serde_json::from_str(&read(&a.preds)?).map_err(|e| input(format!("{}: {e}", a.preds.display())))?;
    let frames = stitch(&preds, &manifest, ctx.config.dedup_iou).map_err(processing)?;
    let out: Vec<Prediction> = frames.iter().map(|f| f.to_prediction()).collect();
    write(&a.out, &serialize_predictions(&out))?;
    ctx.write_sidecar(&a.out, json!({ "patch_predictions": preds.len() }))?;
    let mut sources: Vec<u64> = frames.iter().map(|f| f.source_image_id).collect();
    sources.dedup();
    println!(
        "stitch: {} patch predictions -> {} frame predictions on {} frames",
        preds.len(),
        out.len(),
        sources.len()
    );
    Ok(())
}

fn eval_semantic(ctx: Ctx, a: EvalSemanticArgs) -> Result<()> {
    let gt = read_dataset(&a.gt)?;
    let text = read(&a.preds)?;
    let gt_inst = dataset_instances(&gt).map_err(input)?;
    let as_dataset;
    let as_preds;
    let pred_inst = if text.trim_start().starts_with('{') {
        as_dataset = parse_dataset(&text).map_err(|e| input(format!("{}: {e}", a.preds.display())))?;
        dataset_instances(&as_dataset).map_err(input)?
    } else {
        as_preds = read_predictions(&a.preds, &gt)?;
        prediction_instances(&gt, &as_preds, a.min_score).map_err(input)?
    };
    let cm = evaluate_semantic(&gt, &gt_inst, &pred_inst).map_err(processing)?;
    let scores = miou_macc(&cm);
    let table = MetricTable::semantic(&scores);
    if let Some(path) = &a.out {
        ctx.write_report(
            path,
            json!({ "min_score": a.min_score }),
            json!({ "confusion": cm, "scores": scores, "table": table }),
        )?;
    }
    print!("{}", table.to_text());
    println!(
        "eval-semantic: {} images, mIoU {:.2}, mAcc {:.2}",
        gt.images.len(),
        scores.miou,
        scores.macc
    );
    Ok(())
}

fn eval_instance(ctx: Ctx, a: EvalInstanceArgs) -> Result<()> {
    let gt = read_dataset(&a.gt)?;
    let preds = read_predictions(&a.preds, &gt)?;
    let result = evaluate_instances(&gt, &preds).map_err(input)?;
    let table = MetricTable::instance(&result);
    if let Some(path) = &a.out {
        ctx.write_report(path, Value::Null, json!({ "result": result, "table": table }))?;
    }
    print!("{}", table.to_text());
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{:.2}", 100.0 * x));
    println!(
        "eval-instance: {} images, {} ground truth, {} predictions, AP {}, AP50 {}",
        gt.images.len(),
        gt.annotations.len(),
        preds.len(),
        fmt(result.map),
        fmt(result.map50)
    );
    Ok(())
}

fn stats(mut ctx: Ctx, a: StatsArgs) -> Result<()> {
    ctx.config.strict |= a.strict;
    let d = read_dataset(&a.input)?;
    let summary = class_summary(&d);
    let meta = metadata_summary(&d, !ctx.config.strict).map_err(input)?;
    if let Some(path) = &a.out {
        ctx.write_report(path, Value::Null, json!({ "classes": summary, "metadata": meta }))?;
    }
    if let Some(path) = &a.csv {
        write(path, &summary.to_csv())?;
    }
    let counts: Vec<String> = summary
        .classes
        .iter()
        .map(|c| format!("{} {}", c.class, c.count))
        .collect();
    println!(
        "stats: {} images, {} annotations ({}); {} file names parsed",
        d.images.len(),
        d.annotations.len(),
        counts.join(", "),
        meta.parsed
    );
    Ok(())
}
