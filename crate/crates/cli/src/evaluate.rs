use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::Args;
use soilspec::lda::DEFAULT_ENERGY;
use soilspec::ml::metrics::COMPONENT_NAMES;
use soilspec::ml::smote::DEFAULT_K_NEIGHBORS;
use soilspec::pipeline::{
    make_folds, run_external_validation, run_strategies, write_aggregate, write_confusion, write_predictions,
    write_results, EvalOptions, ExternalValidation, Granularity, ModelKind, ModelSpec, ScalerScope, Strategy,
    StrategyResult, DEFAULT_KNN_K, DEFAULT_N_TREES, N_FOLDS,
};
use soilspec::table::{read_observations_file, ObservationTable};
use soilspec::{Error, Result};

use crate::config::{io_error, CvConfig, ModelConfig, RunConfig};
use crate::{create_dir, parse_granularity, parse_model, parse_scope, parse_strategy, GranularityArg};

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Training observation CSV written by `extract`.
    #[arg(long)]
    train: PathBuf,
    /// Optional validation observation CSV for the frozen-transform run.
    #[arg(long)]
    validation: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "knn,rf,dt", value_parser = parse_model)]
    models: Vec<ModelKind>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3", value_parser = parse_strategy)]
    strategies: Vec<Strategy>,
    /// block, specimen or both.
    #[arg(long, default_value = "block", value_parser = parse_granularity)]
    granularity: GranularityArg,
    /// Fit the min-max scaler per training fold or once on the whole table.
    #[arg(long, default_value = "fold", value_parser = parse_scope)]
    scaler_scope: ScalerScope,
    /// Balance texture classes across folds.
    #[arg(long)]
    stratify: bool,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_KNN_K, value_parser = positive)]
    knn_k: usize,
    #[arg(long, default_value_t = DEFAULT_N_TREES, value_parser = positive)]
    n_trees: usize,
    #[arg(long, value_parser = positive)]
    max_depth: Option<usize>,
    #[arg(long, default_value_t = 1, value_parser = positive)]
    min_leaf: usize,
    /// Skip SMOTE oversampling in the direct strategy.
    #[arg(long)]
    no_smote: bool,
    #[arg(long, default_value_t = DEFAULT_K_NEIGHBORS, value_parser = positive)]
    smote_k: usize,
    /// Fraction of discriminant energy the LDA keeps.
    #[arg(long, default_value_t = DEFAULT_ENERGY, value_parser = energy)]
    energy: f64,
}

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("expected a positive integer, got {s:?}")),
    }
}

fn energy(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(e) if e > 0.0 && e <= 1.0 => Ok(e),
        _ => Err(format!("energy must be in (0, 1], got {s:?}")),
    }
}

impl EvaluateArgs {
    fn specs(&self) -> Vec<ModelSpec> {
        let mut seen = Vec::new();
        for &kind in &self.models {
            if !seen.contains(&kind) {
                seen.push(kind);
            }
        }
        seen.into_iter()
            .map(|kind| ModelSpec {
                knn_k: self.knn_k,
                n_trees: self.n_trees,
                max_depth: self.max_depth,
                min_leaf: self.min_leaf,
                ..ModelSpec::new(kind)
            })
            .collect()
    }

    fn strategies(&self) -> Vec<Strategy> {
        Strategy::ALL.into_iter().filter(|s| self.strategies.contains(s)).collect()
    }

    fn options(&self) -> EvalOptions {
        EvalOptions {
            scaler_scope: self.scaler_scope,
            energy: self.energy,
            smote: !self.no_smote,
            smote_k: self.smote_k,
            seed: self.seed,
        }
    }

    fn run_config(&self, threads: Option<usize>, granularity: &[Granularity]) -> RunConfig {
        let mut cfg = RunConfig::new("evaluate").path("train", &self.train).path("out", &self.out);
        if let Some(v) = &self.validation {
            cfg = cfg.path("validation", v);
        }
        cfg.seed = Some(self.seed);
        cfg.threads = threads;
        cfg.cv = Some(CvConfig {
            folds: N_FOLDS,
            granularity: granularity.iter().map(|g| g.name().to_string()).collect(),
            stratify: self.stratify,
            scaler_scope: self.scaler_scope.name().to_string(),
            energy: self.energy,
            smote: !self.no_smote,
            smote_k: self.smote_k,
            strategies: self.strategies().iter().map(|s| s.id()).collect(),
        });
        cfg.models = self.specs().iter().map(ModelConfig::from).collect();
        cfg
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn strategy_label(s: Strategy) -> &'static str {
    match s {
        Strategy::Direct => "direct classification",
        Strategy::Regression => "composition regression",
        Strategy::Indirect => "indirect classification",
    }
}

fn write_granularity(dir: &Path, table: &ObservationTable, results: &[StrategyResult]) -> Result<()> {
    create_dir(dir)?;
    write_results(results, create(&dir.join("results.csv"))?)?;
    write_aggregate(results, create(&dir.join("aggregate.csv"))?)?;
    for r in results {
        if let Some(m) = r.pooled_confusion() {
            let name = format!("confusion_s{}_{}.csv", r.strategy.id(), r.model);
            write_confusion(&m, create(&dir.join(name))?)?;
        }
        if r.strategy == Strategy::Regression {
            write_predictions(table, r, create(&dir.join(format!("predictions_{}.csv", r.model)))?)?;
        }
    }
    Ok(())
}

fn validation_metrics(v: &ExternalValidation) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (i, name) in COMPONENT_NAMES.iter().enumerate() {
        out.push((format!("r2_{name}"), v.regression.r2[i]));
    }
    for (i, name) in COMPONENT_NAMES.iter().enumerate() {
        out.push((format!("rmse_{name}"), v.regression.rmse[i]));
    }
    out.push(("indirect_accuracy".into(), v.indirect.accuracy));
    out.push(("indirect_macro_f1".into(), v.indirect.macro_f1));
    out.push(("indirect_macro_recall".into(), v.indirect.macro_recall));
    out.push(("lda_components".into(), v.lda_components as f64));
    out
}

fn write_validation(
    dir: &Path,
    table: &ObservationTable,
    runs: &[(ModelSpec, ExternalValidation)],
) -> Result<()> {
    create_dir(dir)?;
    let mut w = csv::Writer::from_writer(create(&dir.join("metrics.csv"))?);
    w.write_record(["model", "metric", "value"])?;
    for (spec, v) in runs {
        for (name, value) in validation_metrics(v) {
            w.write_record([spec.name(), name.as_str(), value.to_string().as_str()])?;
        }
    }
    w.flush().map_err(|e| io_error(&dir.join("metrics.csv"), e))?;

    for (spec, v) in runs {
        let path = dir.join(format!("predictions_{}.csv", spec.name()));
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record([
            "specimen_id",
            "block_row",
            "block_col",
            "clay",
            "silt",
            "sand",
            "pred_clay",
            "pred_silt",
            "pred_sand",
        ])?;
        for (i, o) in table.rows.iter().enumerate() {
            let mut rec = vec![o.specimen_id.clone(), o.block_row.to_string(), o.block_col.to_string()];
            rec.extend(o.composition.as_array().iter().map(|x| x.to_string()));
            rec.extend(v.predictions.row(i).iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| io_error(&path, e))?;
        let path = dir.join(format!("confusion_s3_{}.csv", spec.name()));
        write_confusion(&v.indirect.normalized_confusion, create(&path)?)?;
    }
    Ok(())
}

fn summary_text(
    args: &EvaluateArgs,
    n_rows: usize,
    by_granularity: &[(Granularity, Vec<StrategyResult>)],
    validation: &[(ModelSpec, ExternalValidation)],
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "soilspec evaluation");
    let _ = writeln!(s, "training table: {} ({n_rows} observations)", args.train.display());
    let _ = writeln!(
        s,
        "{N_FOLDS}-fold cv, seed {}, scaler scope {}, {}",
        args.seed,
        args.scaler_scope.name(),
        if args.stratify { "stratified" } else { "unstratified" }
    );
    for (g, results) in by_granularity {
        let _ = writeln!(s, "\n== {} level folds ==", g.name());
        for r in results {
            let k: Vec<String> = r.folds.iter().map(|f| f.lda_components.to_string()).collect();
            let _ = writeln!(
                s,
                "\nstrategy {} ({}), model {}, lda components per fold [{}]",
                r.strategy.id(),
                strategy_label(r.strategy),
                r.model,
                k.join(", ")
            );
            for m in &r.summary {
                let _ = writeln!(s, "  {:<18} {:.4} ± {:.4}", m.name, m.mean, m.std);
            }
        }
    }
    if !validation.is_empty() {
        let _ = writeln!(s, "\n== external validation (transforms fitted on the full training table) ==");
        for (spec, v) in validation {
            let _ = writeln!(s, "\nmodel {}", spec.name());
            for (name, value) in validation_metrics(v) {
                let _ = writeln!(s, "  {name:<22} {value:.4}");
            }
        }
    }
    let _ = writeln!(
        s,
        "\n± is the population standard deviation over the {N_FOLDS} folds (divided by {N_FOLDS}, not {}).",
        N_FOLDS - 1
    );
    s
}

pub fn cmd_evaluate(args: &EvaluateArgs, threads: Option<usize>) -> Result<()> {
    let granularity = args.granularity.expand();
    let cfg = args.run_config(threads, &granularity);
    // read everything up front so a bad input fails before any fitting
    let train = read_observations_file(&args.train)?;
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let validation = args.validation.as_ref().map(read_observations_file).transpose()?;
    let specs = args.specs();
    let strategies = args.strategies();
    let opts = args.options();

    create_dir(&args.out)?;
    let mut by_granularity = Vec::new();
    for &g in &granularity {
        let plan = make_folds(&train, args.seed, g, args.stratify);
        let mut results = Vec::new();
        for spec in &specs {
            results.extend(run_strategies(&train, &plan, spec, &opts, &strategies)?);
        }
        let dir = args.out.join(g.name());
        write_granularity(&dir, &train, &results)?;
        cfg.write_into(&dir)?;
        by_granularity.push((g, results));
    }

    let mut validation_runs = Vec::new();
    if let Some(val) = &validation {
        for spec in &specs {
            validation_runs.push((*spec, run_external_validation(&train, val, spec, &opts)?));
        }
        let dir = args.out.join("validation");
        write_validation(&dir, val, &validation_runs)?;
        cfg.write_into(&dir)?;
    }

    let summary = summary_text(args, train.len(), &by_granularity, &validation_runs);
    let path = args.out.join("summary.txt");
    std::fs::write(&path, &summary).map_err(|e| io_error(&path, e))?;
    cfg.write_into(&args.out)?;
    print!("{summary}");
    Ok(())
}
