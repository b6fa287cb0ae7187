//! One function per subcommand.

use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use motionhmm::dataset::read_motion_file;
use motionhmm::evaluation::{grid_search, stratified_kfold, Combination, Grid, RankMetric, Summary};
use motionhmm::rng::derive_seed;
use motionhmm::selection::backward_eliminate;
use motionhmm::synth::{generate, write_dataset, SynthSpec};
use motionhmm::systems::{cross_validate, System, SystemConfig};
use motionhmm::Dataset;
use serde_json::{json, Value};

use crate::args::{ModelKind, SystemArgs, SystemKind, TopologyArg};
use crate::output::{self, config_cells, metric, metric_cells, CONFIG_COLUMNS, METRIC_COLUMNS};
use crate::{Cli, Command, DatasetCommand, EvalCommand, UsageError};

pub fn run(cli: &Cli) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Dataset(cmd) => dataset(cmd, seed),
        Command::Train {
            system,
            dataset,
            args,
            out,
        } => train(*system, dataset, args, out, seed),
        Command::Classify { bundle, motion, json } => classify(bundle, motion, *json),
        Command::Eval(EvalCommand::Kfold {
            dataset,
            system,
            args,
            k,
            out,
        }) => kfold(dataset, *system, args, *k, out.as_deref(), seed),
        Command::SelectFeatures {
            dataset,
            features,
            model,
            k,
            min_features,
            out,
        } => {
            let data = load_shuffled(dataset, seed)?;
            let spec = features.spec()?;
            let model = model.config(seed)?;
            let trace = backward_eliminate(&data, &spec, &model, *k, seed, *min_features)?;
            output::print(&trace.to_string())?;
            if let Some(out) = out {
                let config = json!({
                    "dataset": dataset, "features": spec, "model": model, "k": k, "min_features": min_features,
                });
                let text = output::header("select-features", seed, &config) + &trace.to_csv();
                output::write_file(out, &text)?;
            }
            Ok(())
        }
        Command::GridSearch {
            grid,
            dataset,
            system,
            args,
            k,
            metric,
            out,
        } => grid_command(grid, dataset, *system, args, *k, metric, out.as_deref(), seed),
        Command::Synth { classes, out } => {
            let text = std::fs::read_to_string(classes).map_err(|e| motionhmm::Error::io(classes, e))?;
            let spec: SynthSpec =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", classes.display()))?;
            let (data, _) = generate(&spec, seed)?;
            write_dataset(&data, out)?;
            println!("wrote {} motions to {}", data.len(), out.display());
            Ok(())
        }
    }
}

fn load_shuffled(path: &Path, seed: u64) -> Result<Dataset> {
    Ok(Dataset::open(path)?.shuffle(derive_seed(seed, "shuffle", 0)))
}

fn dataset(cmd: &DatasetCommand, seed: u64) -> Result<()> {
    match cmd {
        DatasetCommand::Validate { dataset } => {
            let d = Dataset::open(dataset)?;
            println!(
                "{}: {} motions, {} labels, ok",
                dataset.display(),
                d.len(),
                d.vocabulary.len()
            );
        }
        DatasetCommand::Report { dataset, out } => {
            let report = Dataset::open(dataset)?.report();
            output::print(&report.to_string())?;
            if let Some(out) = out {
                let mut rows: Vec<Vec<String>> = report
                    .label_counts
                    .iter()
                    .map(|(l, n)| vec!["label".into(), l.clone(), n.to_string()])
                    .collect();
                rows.extend(
                    report
                        .combination_counts
                        .iter()
                        .map(|(c, n)| vec!["combination".into(), c.join(" "), n.to_string()]),
                );
                let header = output::header("dataset report", seed, &json!({ "dataset": dataset }));
                let text = output::csv_string(&header, &["kind", "labels", "samples"], &rows)?;
                output::write_file(out, &text)?;
            }
        }
        DatasetCommand::Export { dataset, out } => {
            let d = Dataset::open(dataset)?;
            output::write_file(out, &d.to_archive_string()?)?;
        }
    }
    Ok(())
}

fn train(kind: SystemKind, dataset: &Path, args: &SystemArgs, out: &Path, seed: u64) -> Result<()> {
    let config = args.config(kind, seed)?;
    let data = load_shuffled(dataset, seed)?;
    let system = config.train(&data, seed)?;
    system.save(out)?;
    println!(
        "trained {} models, bundle written to {}",
        system.model_names().len(),
        out.display()
    );
    Ok(())
}

fn classify(bundle: &Path, motion: &Path, as_json: bool) -> Result<()> {
    let system = System::load(bundle)?;
    let id = motion
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let record = read_motion_file(motion, &id)?;
    let prediction = system.classify(&record)?;
    let labels = system.vocabulary().decode(&prediction.labels);
    if as_json {
        let models: Vec<Value> = system
            .model_names()
            .into_iter()
            .zip(&prediction.likelihoods)
            .map(|(name, ll)| json!({ "model": name, "loglikelihood": ll }))
            .collect();
        let doc = json!({ "motion": id, "labels": labels, "models": models });
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        println!("{}", labels.join(","));
    }
    Ok(())
}

fn summary_tables(config: &SystemConfig, summary: &Summary, labels: &[String]) -> String {
    let mut columns = CONFIG_COLUMNS.to_vec();
    columns.extend(METRIC_COLUMNS);
    let mut row = config_cells(config);
    row.extend(metric_cells(summary));
    let mut text = output::text_table(&columns, &[row]);
    text.push('\n');
    let rows: Vec<Vec<String>> = labels
        .iter()
        .zip(&summary.per_label)
        .map(|(l, m)| {
            vec![
                l.clone(),
                metric(m.precision),
                metric(m.recall),
                metric(m.f1),
                metric(m.accuracy),
            ]
        })
        .collect();
    text += &output::text_table(&["label", "precision", "recall", "f1", "accuracy"], &rows);
    text
}

fn kfold(dataset: &Path, kind: SystemKind, args: &SystemArgs, k: usize, out: Option<&Path>, seed: u64) -> Result<()> {
    let config = args.config(kind, seed)?;
    let data = load_shuffled(dataset, seed)?;
    let cv = cross_validate(&data, &config, k, seed, None)?;
    output::print(&summary_tables(&config, &cv.summary, data.vocabulary.labels()))?;
    if let Some(out) = out {
        let header = output::header(
            "eval kfold",
            seed,
            &json!({ "dataset": dataset, "k": k, "config": config }),
        );
        let mut columns = CONFIG_COLUMNS.to_vec();
        columns.extend(METRIC_COLUMNS);
        let mut row = config_cells(&config);
        row.extend(metric_cells(&cv.summary));
        output::write_file(out, &output::csv_string(&header, &columns, &[row])?)?;
    }
    Ok(())
}

const GRID_AXES: [&str; 8] = [
    "features",
    "model",
    "states",
    "topology",
    "delta",
    "chains",
    "iterations",
    "decision",
];

fn as_usize(v: &Value, name: &str) -> Result<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| UsageError(format!("grid axis `{name}` needs non-negative integers, got {v}")).into())
}

fn as_str<'a>(v: &'a Value, name: &str) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| UsageError(format!("grid axis `{name}` needs strings, got {v}")).into())
}

/// The base arguments with one grid combination applied.
fn apply(base: &SystemArgs, params: &Combination) -> Result<SystemArgs> {
    let mut a = base.clone();
    for (name, v) in params {
        match name.as_str() {
            "features" => a.features.features = as_str(v, name)?.to_string(),
            "decision" => a.decision = as_str(v, name)?.to_string(),
            "states" => a.model.states = as_usize(v, name)?,
            "iterations" => a.model.iterations = as_usize(v, name)?,
            "delta" => a.model.delta = if v.is_null() { None } else { Some(as_usize(v, name)?) },
            "chains" => a.model.chains = if v.is_null() { None } else { Some(as_usize(v, name)?) },
            "model" => {
                a.model.model = ModelKind::from_str(as_str(v, name)?, true).map_err(UsageError)?;
            }
            "topology" => {
                let t = as_str(v, name)?.replace('_', "-");
                a.model.topology = TopologyArg::from_str(&t, true).map_err(UsageError)?;
            }
            _ => return Err(UsageError(format!("unknown grid axis `{name}`")).into()),
        }
    }
    Ok(a)
}

#[allow(clippy::too_many_arguments)]
fn grid_command(
    grid_path: &Path,
    dataset: &Path,
    kind: SystemKind,
    base: &SystemArgs,
    k: usize,
    metric_name: &str,
    out: Option<&Path>,
    seed: u64,
) -> Result<()> {
    let text = std::fs::read_to_string(grid_path).map_err(|e| motionhmm::Error::io(grid_path, e))?;
    let grid: Grid = serde_json::from_str(&text).with_context(|| format!("parsing {}", grid_path.display()))?;
    grid.validate()?;
    if let Some(bad) = grid.axes.iter().find(|a| !GRID_AXES.contains(&a.name.as_str())) {
        return Err(UsageError(format!(
            "unknown grid axis `{}`; known: {}",
            bad.name,
            GRID_AXES.join(", ")
        ))
        .into());
    }
    let metric: RankMetric = serde_json::from_value(Value::String(metric_name.to_string()))
        .map_err(|_| UsageError(format!("unknown metric `{metric_name}`")))?;
    let data = load_shuffled(dataset, seed)?;
    let folds = stratified_kfold(&data.label_matrix(), k, derive_seed(seed, "folds", 0))?;
    let rows = grid_search(&grid, metric, |params| {
        let config = apply(base, params)
            .and_then(|a| a.config(kind, seed))
            .map_err(|e| motionhmm::Error::InvalidArgument(format!("{e:#}")))?;
        Ok(cross_validate(&data, &config, k, seed, Some(&folds))?.summary)
    })?;

    let axis_names: Vec<&str> = grid.axes.iter().map(|a| a.name.as_str()).collect();
    let axis_columns: Vec<String> = axis_names.iter().map(|n| format!("param_{n}")).collect();
    let mut columns = vec!["rank", "index"];
    columns.extend(axis_columns.iter().map(String::as_str));
    columns.extend(CONFIG_COLUMNS);
    columns.extend(METRIC_COLUMNS);
    columns.push("error");
    let table: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(rank, r)| {
            let mut cells = vec![(rank + 1).to_string(), r.index.to_string()];
            cells.extend(axis_names.iter().map(|n| match &r.params[*n] {
                Value::String(s) => s.clone(),
                v => v.to_string(),
            }));
            match apply(base, &r.params).and_then(|a| a.config(kind, seed)) {
                Ok(c) => cells.extend(config_cells(&c)),
                Err(_) => cells.extend(std::iter::repeat_n(String::new(), CONFIG_COLUMNS.len())),
            }
            match &r.summary {
                Some(s) => cells.extend(metric_cells(s)),
                None => cells.extend(std::iter::repeat_n("NaN".to_string(), METRIC_COLUMNS.len())),
            }
            cells.push(r.error.clone().unwrap_or_default());
            cells
        })
        .collect();
    output::print(&output::text_table(&columns, &table))?;
    if let Some(out) = out {
        let base_config = json!({
            "dataset": dataset,
            "system": kind.to_possible_value().map(|v| v.get_name().to_string()),
            "base": {
                "features": base.features.features, "normalize": !base.features.no_normalize,
                "smooth": !base.features.no_smooth, "scale": !base.features.no_scale,
                "window": base.features.window, "model": base.model.config(seed).ok(),
                "decision": base.decision,
            },
            "grid": grid, "k": k, "metric": metric,
        });
        let header = output::header("grid-search", seed, &base_config);
        output::write_file(out, &output::csv_string(&header, &columns, &table)?)?;
    }
    Ok(())
}
