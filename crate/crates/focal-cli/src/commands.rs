use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use focal_core::data::{load_dataset, save_dataset, ColorValue, DataKind, Dataset};
use focal_core::eval::{
    evaluate_conditions, evaluate_continuous, evaluate_probe, MetricReport, REPORT_VERSION,
};
use focal_core::{
    save_checkpoint, Checkpoint, ConditionTag, Encoder, EncoderConfig, Error, RunConfig,
    TargetSet,
};

use crate::{CommonArgs, EvalArgs, GenDataArgs, ReportArgs, TrainArgs};

pub struct UsageError(pub String);

pub enum CliError {
    Usage(UsageError),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Runtime(e.into())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(UsageError(msg.into()))
}

type CmdResult = Result<(), CliError>;

fn load_dataset_at(out: &Path) -> Result<Dataset, CliError> {
    let dir = out.join("dataset");
    if !dir.is_dir() {
        return Err(CliError::Runtime(Error::format(
            "dataset",
            format!("{} does not exist (run gen-data first)", dir.display()),
        )));
    }
    Ok(load_dataset(&dir)?)
}

fn load_checkpoint_at(out: &Path) -> Result<Checkpoint, CliError> {
    let path = out.join("checkpoint.flck");
    if !path.is_file() {
        return Err(CliError::Runtime(Error::format(
            "checkpoint",
            format!("{} does not exist (run train first)", path.display()),
        )));
    }
    Ok(focal_core::load_checkpoint(&path)?)
}

/// Defaults, overlaid by --config, overlaid by shared flags.
fn load_run_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::from_file(path).map_err(|e| usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out = out.display().to_string();
    }
    Ok(config)
}

fn set_or_usage(config: &mut RunConfig, key: &str, value: &str) -> Result<(), CliError> {
    config.set(key, value).map_err(|e| usage(e.to_string()))
}

pub fn gen_data(args: GenDataArgs) -> CmdResult {
    let mut config = load_run_config(&args.common)?;
    if let Some(n) = args.n_per_combo {
        config.n_per_combo = n;
    }
    if args.continuous {
        config.continuous = true;
    }
    if let Some(n) = args.n_images {
        config.n_images = n;
    }
    if let Some(list) = &args.conditions {
        set_or_usage(&mut config, "conditions", list)?;
    }

    let conditions = config.resolved_conditions();
    let dataset = if config.continuous {
        Dataset::continuous(config.seed, config.n_images, config.width, config.height, &conditions)?
    } else {
        Dataset::discrete(config.seed, config.n_per_combo, config.width, config.height, &conditions)?
    };
    let dir = Path::new(&config.out).join("dataset");
    save_dataset(&dir, &dataset)?;

    let tags: Vec<&str> = conditions.iter().map(|c| c.label()).collect();
    println!(
        "{} {} images ({}x{}, seed {}) -> {}",
        dataset.images.len(),
        match dataset.kind {
            DataKind::Discrete => "discrete",
            DataKind::Continuous => "continuous",
        },
        config.width,
        config.height,
        config.seed,
        dir.display(),
    );
    println!("conditions: {} ({} triplets)", tags.join(", "), dataset.triplets()?.len());
    if dataset.kind == DataKind::Discrete {
        for spec_count in cell_counts(&dataset) {
            println!("  {spec_count}");
        }
    }
    Ok(())
}

/// One line per (color, shape) cell of the discrete grid.
fn cell_counts(dataset: &Dataset) -> Vec<String> {
    use focal_core::{ColorName, ShapeKind};
    ColorName::ALL
        .iter()
        .map(|color| {
            let counts: Vec<String> = ShapeKind::ALL
                .iter()
                .map(|shape| {
                    let n = dataset
                        .records
                        .iter()
                        .filter(|r| {
                            r.spec.shape == *shape
                                && r.spec.color == ColorValue::Discrete(*color)
                        })
                        .count();
                    format!("{} {}: {}", color.label(), shape.label(), n)
                })
                .collect();
            counts.join("  ")
        })
        .collect()
}

pub fn train(args: TrainArgs) -> CmdResult {
    let mut config = load_run_config(&args.common)?;
    if let Some(variant) = &args.variant {
        set_or_usage(&mut config, "variant", variant)?;
    }
    if let Some(n) = args.batch_size {
        config.batch_size = n;
    }
    if let Some(n) = args.epochs {
        config.epochs = n;
    }
    if let Some(lr) = args.lr {
        config.lr = lr;
    }

    let out = PathBuf::from(&config.out);
    let dataset = load_dataset_at(&out)?;
    let triplets = dataset.triplets()?;
    let encoder_config = EncoderConfig::small(config.variant, dataset.vocab.len());
    let embed_dim = encoder_config.embed_dim;
    let encoder = Encoder::init(encoder_config, config.seed)?;
    let with_numeric = dataset.kind == DataKind::Continuous;
    let targets = TargetSet::new(dataset.vocab.len(), embed_dim, with_numeric)?;

    let report = focal_core::train(&encoder, &targets, &triplets, &config.train_config())?;

    let mut log = String::from("step\tepoch\tlr\tloss\n");
    for s in &report.steps {
        writeln!(log, "{}\t{}\t{}\t{}", s.step, s.step / report.batches_per_epoch, s.lr, s.loss)
            .expect("string write");
    }
    fs::write(out.join("train_log.tsv"), log)?;

    let steps = report.steps.len() as u64;
    let checkpoint =
        Checkpoint { encoder, targets, seed: config.seed, step_count: steps };
    save_checkpoint(&out.join("checkpoint.flck"), &checkpoint)?;

    println!(
        "trained {} steps ({} epochs of {} batches): epoch mean loss {:.4} -> {:.4}, temperature {:.4}",
        steps,
        config.epochs,
        report.batches_per_epoch,
        report.epoch_mean_loss.first().unwrap_or(&f64::NAN),
        report.epoch_mean_loss.last().unwrap_or(&f64::NAN),
        report.final_temperature,
    );
    println!("checkpoint: {}", out.join("checkpoint.flck").display());
    println!("loss log:   {}", out.join("train_log.tsv").display());
    Ok(())
}

pub fn eval(args: EvalArgs) -> CmdResult {
    let config = load_run_config(&args.common)?;
    // On eval, --seed means the evaluation seed (probe splits, baseline
    // shuffles); the training seed is already baked into the checkpoint.
    let eval_seed = args.common.seed.unwrap_or(config.eval_seed);
    if !args.k.is_empty() && !args.probe {
        return Err(usage("--k only makes sense with --probe"));
    }

    let out = PathBuf::from(&config.out);
    let dataset = load_dataset_at(&out)?;
    let checkpoint = load_checkpoint_at(&out)?;
    let encoder = &checkpoint.encoder;
    if encoder.config().vocab_size != dataset.vocab.len() {
        return Err(CliError::Runtime(Error::format(
            "eval",
            format!(
                "checkpoint vocabulary ({} tokens) does not match the dataset ({})",
                encoder.config().vocab_size,
                dataset.vocab.len()
            ),
        )));
    }

    let mut conditions: Option<Vec<ConditionTag>> = None;
    if let Some(list) = &args.conditions {
        let mut scratch = config.clone();
        set_or_usage(&mut scratch, "conditions", list)?;
        if scratch.conditions.contains(&ConditionTag::Continuous) {
            return Err(usage("continuous is not a retrieval condition; use --continuous"));
        }
        conditions = Some(scratch.conditions);
    }
    let mut continuous = args.continuous;
    if conditions.is_none() && !continuous && !args.probe {
        // Default protocol by dataset kind.
        match dataset.kind {
            DataKind::Discrete => {
                conditions = Some(
                    dataset
                        .conditions
                        .iter()
                        .copied()
                        .filter(|t| *t != ConditionTag::Continuous)
                        .collect(),
                )
            }
            DataKind::Continuous => continuous = true,
        }
    }

    let conditions_section = match conditions {
        Some(tags) => Some(evaluate_conditions(encoder, &dataset, &tags, eval_seed)?),
        None => None,
    };
    let continuous_section =
        if continuous { Some(evaluate_continuous(encoder, &dataset)?) } else { None };
    let probe_section = if args.probe {
        let k_shots = if args.k.is_empty() { config.k_shots.clone() } else { args.k.clone() };
        Some(evaluate_probe(encoder, &dataset, &k_shots, eval_seed)?)
    } else {
        None
    };

    let report = MetricReport {
        version: REPORT_VERSION,
        variant: encoder.config().variant,
        dataset_kind: dataset.kind,
        dataset_seed: dataset.seed,
        n_images: dataset.images.len(),
        eval_seed,
        conditions: conditions_section,
        continuous: continuous_section,
        probe: probe_section,
    };

    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::format("report", e.to_string()))?;
    let report_path = out.join("report.json");
    fs::write(&report_path, json + "\n")?;

    if let Some(section) = &report.conditions {
        let mut csv = String::from("condition,query,conditional_ap,control_ap\n");
        for result in &section.per_condition {
            let rows = result.conditional.per_query.iter().zip(&result.control.per_query);
            for (query, (conditional, control)) in rows.enumerate() {
                let cell = |ap: &Option<f64>| {
                    ap.map_or_else(|| "skipped".into(), |v| format!("{v}"))
                };
                writeln!(
                    csv,
                    "{},{},{},{}",
                    result.condition.label(),
                    query,
                    cell(conditional),
                    cell(control)
                )
                .expect("string write");
            }
        }
        fs::write(out.join("per_query.csv"), csv)?;
    }

    print_headlines(&report);
    println!("report: {}", report_path.display());
    Ok(())
}

fn print_headlines(report: &MetricReport) {
    if let Some(section) = &report.conditions {
        for c in &section.per_condition {
            println!(
                "{:<6} conditional mAP {:.4} | control {:.4} | random baseline {:.4} ({} queries, {} skipped)",
                c.condition.label(),
                c.conditional.map,
                c.control.map,
                c.random_baseline,
                c.conditional.evaluated,
                c.conditional.skipped,
            );
        }
        println!(
            "average conditional mAP {:.4} | control {:.4}",
            section.conditional_average, section.control_average
        );
    }
    if let Some(section) = &report.continuous {
        println!(
            "continuous conditional rho {:.4} | control {:.4} ({} queries, {} skipped)",
            section.conditional_rho,
            section.control_rho,
            section.evaluated,
            section.conditional_skipped,
        );
    }
    if let Some(section) = &report.probe {
        for entry in &section.entries {
            println!(
                "probe k={:<2} conditional accuracy {:.4} | control {:.4} ({} classes)",
                entry.k_shot,
                entry.conditional_accuracy,
                entry.control_accuracy,
                section.classes,
            );
        }
    }
}

pub fn report(args: ReportArgs) -> CmdResult {
    let mut reports = Vec::new();
    for path in &args.reports {
        let text = fs::read_to_string(path)?;
        let parsed: MetricReport = serde_json::from_str(&text).map_err(|e| {
            CliError::Runtime(Error::format(path.display().to_string(), e.to_string()))
        })?;
        if parsed.version != REPORT_VERSION {
            return Err(CliError::Runtime(Error::format(
                path.display().to_string(),
                format!("report version {} (this build reads {})", parsed.version, REPORT_VERSION),
            )));
        }
        reports.push(parsed);
    }

    let rows = metric_rows(&reports);
    let with_delta = reports.len() == 2;

    let label_width = rows.iter().map(|(label, _)| label.len()).max().unwrap_or(6).max(6);
    let mut header = format!("{:<label_width$}", "metric");
    for path in &args.reports {
        header.push_str(&format!("  {:>12}", short_name(path)));
    }
    if with_delta {
        header.push_str(&format!("  {:>12}", "delta"));
    }
    println!("{header}");
    for (label, values) in &rows {
        let mut line = format!("{label:<label_width$}");
        for v in values {
            match v {
                Some(v) => line.push_str(&format!("  {v:>12.4}")),
                None => line.push_str(&format!("  {:>12}", "-")),
            }
        }
        if with_delta {
            match (values[0], values[1]) {
                (Some(a), Some(b)) => line.push_str(&format!("  {:>+12.4}", a - b)),
                _ => line.push_str(&format!("  {:>12}", "-")),
            }
        }
        println!("{line}");
    }

    if let Some(csv_path) = &args.csv {
        let mut csv = String::from("metric");
        for path in &args.reports {
            csv.push(',');
            csv.push_str(&short_name(path));
        }
        if with_delta {
            csv.push_str(",delta");
        }
        csv.push('\n');
        for (label, values) in &rows {
            csv.push_str(label);
            for v in values {
                csv.push(',');
                if let Some(v) = v {
                    write!(csv, "{v}").expect("string write");
                }
            }
            if with_delta {
                csv.push(',');
                if let (Some(a), Some(b)) = (values[0], values[1]) {
                    write!(csv, "{}", a - b).expect("string write");
                }
            }
            csv.push('\n');
        }
        fs::write(csv_path, csv)?;
        println!("csv: {}", csv_path.display());
    }
    Ok(())
}

/// File stem, enough to tell two reports apart in a column header.
fn short_name(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .map(|dir| format!("{}/", dir.to_string_lossy()))
        .unwrap_or_default()
        + &path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Union of metric rows across reports; a report missing a metric shows "-".
fn metric_rows(reports: &[MetricReport]) -> Vec<(String, Vec<Option<f64>>)> {
    let mut rows: Vec<(String, Vec<Option<f64>>)> = Vec::new();
    let mut add = |label: String, values: Vec<Option<f64>>| rows.push((label, values));

    let mut tags: Vec<ConditionTag> = Vec::new();
    for report in reports {
        if let Some(section) = &report.conditions {
            for c in &section.per_condition {
                if !tags.contains(&c.condition) {
                    tags.push(c.condition);
                }
            }
        }
    }
    for &tag in &tags {
        let column = |f: fn(&focal_core::eval::ConditionResult) -> f64| -> Vec<Option<f64>> {
            reports.iter().map(|r| find_condition(r, tag).map(f)).collect()
        };
        add(format!("{} conditional mAP", tag.label()), column(|c| c.conditional.map));
        add(format!("{} control mAP", tag.label()), column(|c| c.control.map));
        add(format!("{} random baseline", tag.label()), column(|c| c.random_baseline));
    }
    if reports.iter().any(|r| r.conditions.is_some()) {
        add(
            "conditional average".into(),
            reports
                .iter()
                .map(|r| r.conditions.as_ref().map(|s| s.conditional_average))
                .collect(),
        );
        add(
            "control average".into(),
            reports.iter().map(|r| r.conditions.as_ref().map(|s| s.control_average)).collect(),
        );
    }
    if reports.iter().any(|r| r.continuous.is_some()) {
        add(
            "continuous conditional rho".into(),
            reports.iter().map(|r| r.continuous.as_ref().map(|s| s.conditional_rho)).collect(),
        );
        add(
            "continuous control rho".into(),
            reports.iter().map(|r| r.continuous.as_ref().map(|s| s.control_rho)).collect(),
        );
    }
    let mut ks: Vec<usize> = Vec::new();
    for report in reports {
        if let Some(section) = &report.probe {
            for entry in &section.entries {
                if !ks.contains(&entry.k_shot) {
                    ks.push(entry.k_shot);
                }
            }
        }
    }
    ks.sort_unstable();
    for k in ks {
        let column = |f: fn(&focal_core::eval::ProbeEntry) -> f64| -> Vec<Option<f64>> {
            reports.iter().map(|r| find_probe(r, k).map(f)).collect()
        };
        add(format!("probe k={k} conditional"), column(|e| e.conditional_accuracy));
        add(format!("probe k={k} control"), column(|e| e.control_accuracy));
    }
    rows
}

fn find_condition(
    report: &MetricReport,
    tag: ConditionTag,
) -> Option<&focal_core::eval::ConditionResult> {
    report.conditions.as_ref()?.per_condition.iter().find(|c| c.condition == tag)
}

fn find_probe(report: &MetricReport, k: usize) -> Option<&focal_core::eval::ProbeEntry> {
    report.probe.as_ref()?.entries.iter().find(|e| e.k_shot == k)
}
