//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any of them fails.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use soilspec::lda::{scatter, select_components, total_scatter, DEFAULT_ENERGY};
use soilspec::linalg::Mat;
use soilspec::ml::knn::{KnnClassifier, KnnRegressor};
use soilspec::ml::metrics::{classification_metrics, regression_metrics};
use soilspec::pipeline::{
    leakage_audit, make_folds, run_external_validation, run_strategies, write_aggregate, write_confusion,
    write_predictions, write_results, CvPlan, EvalOptions, Granularity, ModelKind, ModelSpec, Strategy,
    StrategyResult,
};
use soilspec::preprocess::{normalize_contrast, normalize_value, roi_stats, NormalizationParams};
use soilspec::synthgen::{default_benchmark, extract_dataset, generate_dataset, EndmemberSpectra, NoiseModel, DEFAULT_ROI};
use soilspec::table::ObservationTable;
use soilspec::triangle::{endmember_compositions, matching_classes};
use soilspec::{validate_composition, TextureClass};

const SEED: u64 = 7;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_time(outcome: Outcome, elapsed: Duration, limit: Duration) -> Outcome {
    let detail = |d: String| format!("{d}; {:.1}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs());
    match outcome {
        Ok(d) if elapsed < limit => Ok(detail(d)),
        Ok(d) | Err(d) => Err(detail(d)),
    }
}

fn normalization_bounds() -> Outcome {
    let mut rng = rng(101);
    let params = NormalizationParams::default();
    let (mut outside, mut worst_fixed) = (0usize, 0.0f64);
    for _ in 0..1000 {
        let plane = random_plane(&mut rng);
        let stats = roi_stats(&plane).map_err(|e| e.to_string())?;
        outside += normalize_contrast(&plane, stats, params)
            .iter()
            .filter(|&&v| v < stats.mean - stats.std || v > stats.mean + stats.std)
            .count();
        worst_fixed = worst_fixed.max((normalize_value(stats.mean, stats, params) - stats.mean).abs());
    }
    check(
        outside == 0 && worst_fixed <= 1e-12,
        format!("1000 planes, {outside} pixels outside mean ± std, worst fixed-point error {worst_fixed:.1e}"),
    )
}

fn triangle_partition() -> Outcome {
    let mut seen = [0usize; TextureClass::COUNT];
    let mut points = 0usize;
    for i in 0..=1000u32 {
        for j in 0..=(1000 - i) {
            let (clay, silt, sand) = (f64::from(i) / 10.0, f64::from(j) / 10.0, f64::from(1000 - i - j) / 10.0);
            let c = validate_composition(clay, silt, sand).map_err(|e| e.to_string())?;
            let m = matching_classes(&c);
            if m.len() != 1 {
                return Err(format!("({clay}, {silt}, {sand}) matches {m:?}"));
            }
            seen[m[0].index()] += 1;
            points += 1;
        }
    }
    let reached = seen.iter().filter(|&&n| n > 0).count();
    let [clay, silt, sand] = endmember_compositions();
    let endmembers_ok = [(clay, [78.63, 21.37, 0.0], TextureClass::Clay), (silt, [5.75, 94.25, 0.0], TextureClass::Silt), (sand, [0.0, 0.0, 100.0], TextureClass::Sand)]
        .iter()
        .all(|(c, want, class)| c.as_array() == *want && matching_classes(c) == vec![*class]);
    check(
        reached == 12 && endmembers_ok,
        format!("{points} points, one class each, {reached}/12 classes reached, endmembers ok: {endmembers_ok}"),
    )
}

fn lda_oracle() -> Outcome {
    let mut rng = rng(102);
    let (mut angle, mut rel_residual, mut eig_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let (x, y, c) = random_lda_instance(&mut rng);
        let (pair, model) = fit_instance(&x, &y, c, DEFAULT_ENERGY);
        let r = check_lda(&pair, &model);
        angle = angle.max(r.sin_angle);
        rel_residual = rel_residual.max(r.residual / r.between_norm);
        eig_err = eig_err.max(r.eigenvalue_error);
    }
    let k = select_components(&[9.0, 0.9, 0.09, 0.009], 0.99, 3);
    check(
        angle <= 1e-6 && rel_residual <= 1e-8 && eig_err <= 1e-8 && k == 2,
        format!(
            "200 instances, max sin angle {angle:.1e}, max residual/|S_B| {rel_residual:.1e}, eigenvalue error {eig_err:.1e}, K={k}"
        ),
    )
}

fn knn_oracle() -> Outcome {
    let mut rng = rng(103);
    let mut mismatches = 0usize;
    for (d, grid) in [(13, false), (4, true)] {
        let train = knn_instance(&mut rng, 5000, d, grid);
        let queries = knn_instance(&mut rng, 1000, d, grid);
        let labels: Vec<usize> = (0..5000).map(|i| (i * 7 + i / 3) % 12).collect();
        let targets = Mat::from_vec(5000, 3, (0..15_000).map(|_| 100.0 * normal(&mut rng)).collect()).unwrap();
        let clf = KnnClassifier::fit(train.clone(), labels.clone(), 12, 5).map_err(|e| e.to_string())?;
        let reg = KnnRegressor::fit(train.clone(), targets.clone(), 5).map_err(|e| e.to_string())?;
        let classes = clf.predict(&queries).map_err(|e| e.to_string())?;
        let values = reg.predict(&queries).map_err(|e| e.to_string())?;
        for (i, q) in queries.iter_rows().enumerate() {
            let nn = brute_force_knn(&train, q, 5);
            if classes[i] != brute_force_vote(&labels, &nn, 12) || values.row(i) != &brute_force_mean(&targets, &nn)[..] {
                mismatches += 1;
            }
        }
    }
    check(
        mismatches == 0,
        format!("5000 train / 1000 queries, continuous and tied grids, {mismatches} mismatches"),
    )
}

fn metric_cases() -> Outcome {
    let r = classification_metrics(&[1, 0, 0, 0], &[1, 1, 0, 0], 12).map_err(|e| e.to_string())?;
    // class 0: precision 1, recall 2/3; class 1: precision 1/2, recall 1
    let f1_0 = 2.0 * (2.0 / 3.0) / (1.0 + 2.0 / 3.0);
    let f1_1 = 2.0 * 0.5 / 1.5;
    let y = Mat::from_rows(&[[0.0], [10.0]]).unwrap();
    let p = Mat::from_rows(&[[1.0], [9.0]]).unwrap();
    let g = regression_metrics(&y, &p).map_err(|e| e.to_string())?;
    // SSE 2, SST 50
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    check(
        close(r.accuracy, 0.75)
            && close(r.macro_recall, (2.0 / 3.0 + 1.0) / 2.0)
            && close(r.macro_f1, (f1_0 + f1_1) / 2.0)
            && close(g.r2[0], 1.0 - 2.0 / 50.0)
            && close(g.rmse[0], 1.0),
        format!(
            "accuracy {:.4}, macro recall {:.4}, macro F1 {:.4}, R² {:.4}, RMSE {:.4}",
            r.accuracy, r.macro_recall, r.macro_f1, g.r2[0], g.rmse[0]
        ),
    )
}

fn scatter_identity() -> Outcome {
    let mut rng = rng(104);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (x, y, c) = random_lda_instance(&mut rng);
        let pair = scatter(&x, &y, c).map_err(|e| e.to_string())?;
        let st = total_scatter(&x);
        let scale = st.norm().max(1.0);
        for i in 0..x.cols() {
            for j in 0..x.cols() {
                worst = worst.max((pair.within[(i, j)] + pair.between[(i, j)] - st[(i, j)]).abs() / scale);
            }
        }
    }
    check(worst <= 1e-8, format!("100 datasets, worst relative error {worst:.1e}"))
}

/// generate, extract and block-level evaluation of all three models.
struct FullRun {
    train: ObservationTable,
    validation: ObservationTable,
    plan: CvPlan,
    results: Vec<StrategyResult>,
    files: BTreeMap<String, Vec<u8>>,
    elapsed: Duration,
}

fn full_run(dir: &Path) -> Result<FullRun, String> {
    let start = Instant::now();
    let noise = NoiseModel::bench(SEED);
    generate_dataset(&default_benchmark(), &EndmemberSpectra::default(), &noise, dir).map_err(|e| e.to_string())?;
    let (train, validation) =
        extract_dataset(dir, DEFAULT_ROI, NormalizationParams::default()).map_err(|e| e.to_string())?;
    let plan = make_folds(&train, SEED, Granularity::Block, false);
    let opts = EvalOptions { seed: SEED, ..Default::default() };
    let mut results = Vec::new();
    for kind in ModelKind::ALL {
        results.extend(run_strategies(&train, &plan, &ModelSpec::new(kind), &opts, &Strategy::ALL).map_err(|e| e.to_string())?);
    }
    let elapsed = start.elapsed();

    let mut files = BTreeMap::new();
    let mut buf = Vec::new();
    write_results(&results, &mut buf).map_err(|e| e.to_string())?;
    files.insert("results.csv".to_string(), std::mem::take(&mut buf));
    write_aggregate(&results, &mut buf).map_err(|e| e.to_string())?;
    files.insert("aggregate.csv".to_string(), std::mem::take(&mut buf));
    for r in &results {
        if let Some(m) = r.pooled_confusion() {
            write_confusion(&m, &mut buf).map_err(|e| e.to_string())?;
            files.insert(format!("confusion_s{}_{}.csv", r.strategy.id(), r.model), std::mem::take(&mut buf));
        }
        if r.strategy == Strategy::Regression {
            write_predictions(&train, r, &mut buf).map_err(|e| e.to_string())?;
            files.insert(format!("predictions_{}.csv", r.model), std::mem::take(&mut buf));
        }
    }
    Ok(FullRun {
        train,
        validation,
        plan,
        results,
        files,
        elapsed,
    })
}

fn fold_values(results: &[StrategyResult], strategy: Strategy, model: &str, metric: &str) -> Vec<f64> {
    let r = results.iter().find(|r| r.strategy == strategy && r.model == model).expect("result present");
    let i = r.summary.iter().position(|m| m.name == metric).expect("metric present");
    r.folds.iter().map(|f| f.metrics[i].1).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn benchmark_targets(run: &FullRun) -> Outcome {
    let res = &run.results;
    let direct = fold_values(res, Strategy::Direct, "knn", "accuracy");
    let indirect = fold_values(res, Strategy::Indirect, "knn", "accuracy");
    let r2: Vec<f64> = ["r2_clay", "r2_silt", "r2_sand"]
        .iter()
        .map(|m| mean(&fold_values(res, Strategy::Regression, "knn", m)))
        .collect();
    let rf = fold_values(res, Strategy::Direct, "rf", "accuracy");
    let dt = fold_values(res, Strategy::Direct, "dt", "accuracy");
    let indirect_below = direct.iter().zip(&indirect).filter(|(d, i)| i <= d).count();
    let rf_wins = rf.iter().zip(&dt).filter(|(r, d)| r >= d).count();
    check(
        mean(&direct) >= 0.95
            && r2.iter().all(|&v| v >= 0.98)
            && mean(&indirect) >= 0.90
            && indirect_below >= 4
            && rf_wins >= 4,
        format!(
            "{} observations; knn direct {:.4}, R² [{:.4}, {:.4}, {:.4}], indirect {:.4} (<= direct in {indirect_below}/5 folds); rf {:.4} vs dt {:.4} (rf >= dt in {rf_wins}/5 folds)",
            run.train.len(),
            mean(&direct),
            r2[0],
            r2[1],
            r2[2],
            mean(&indirect),
            mean(&rf),
            mean(&dt)
        ),
    )
}

fn external_validation(run: &FullRun) -> Outcome {
    let opts = EvalOptions { seed: SEED, ..Default::default() };
    let v = run_external_validation(&run.train, &run.validation, &ModelSpec::new(ModelKind::Knn), &opts)
        .map_err(|e| e.to_string())?;
    let r2 = &v.regression.r2;
    check(
        r2.iter().all(|&x| x >= 0.95),
        format!(
            "{} validation observations, knn R² [{:.4}, {:.4}, {:.4}], RMSE [{:.2}, {:.2}, {:.2}], indirect accuracy {:.4}",
            run.validation.len(),
            r2[0],
            r2[1],
            r2[2],
            v.regression.rmse[0],
            v.regression.rmse[1],
            v.regression.rmse[2],
            v.indirect.accuracy
        ),
    )
}

fn leakage(run: &FullRun) -> Outcome {
    let opts = EvalOptions { seed: SEED, ..Default::default() };
    let mut checked = 0usize;
    for kind in ModelKind::ALL {
        let spec = ModelSpec::new(kind);
        for s in Strategy::ALL {
            for o in leakage_audit(&run.train, &run.plan, &spec, &opts, s, 1234).map_err(|e| e.to_string())? {
                if !o.passed() {
                    return Err(format!("{kind:?} strategy {} fold {} fingerprint changed", s.id(), o.fold + 1));
                }
                checked += 1;
            }
        }
    }
    check(true, format!("{checked} fold fits unchanged after perturbing the test fold"))
}

fn determinism(first: &FullRun, second: &FullRun) -> Outcome {
    let differing: Vec<&String> = first.files.keys().filter(|k| second.files.get(*k) != first.files.get(*k)).collect();
    check(
        differing.is_empty() && first.files.len() == second.files.len(),
        format!("{} result CSVs compared, differing: {differing:?}", first.files.len()),
    )
}

fn same_tree(a: &Path, b: &Path) -> bool {
    let mut stack = vec![a.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if std::fs::read(&p).ok() != std::fs::read(b.join(p.strip_prefix(a).unwrap())).ok() {
                return false;
            }
        }
    }
    true
}

fn report(id: u32, name: &str, outcome: &Outcome) -> bool {
    match outcome {
        Ok(d) => println!("criterion {id:>2} PASS  {name}: {d}"),
        Err(d) => println!("criterion {id:>2} FAIL  {name}: {d}"),
    }
    outcome.is_ok()
}

fn timed(limit_secs: u64, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let out = f();
    within_time(out, start.elapsed(), Duration::from_secs(limit_secs))
}

fn main() {
    // cargo passes harness flags such as --list; nothing to enumerate here
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut all = true;
    all &= report(1, "normalization bounds", &timed(10, normalization_bounds));
    all &= report(2, "texture triangle partition", &timed(30, triangle_partition));
    all &= report(3, "lda against dense eigensolver", &timed(60, lda_oracle));
    all &= report(4, "knn against linear scan", &timed(30, knn_oracle));
    all &= report(5, "metric hand cases", &metric_cases());
    all &= report(6, "scatter identity", &scatter_identity());

    let root = tempfile::tempdir().expect("temp dir");
    let first = full_run(&root.path().join("run_a"));
    match &first {
        Ok(run) => {
            let c7 = within_time(benchmark_targets(run), run.elapsed, Duration::from_secs(600));
            all &= report(7, "bench preset cross-validation", &c7);
            all &= report(8, "external validation", &external_validation(run));
            all &= report(9, "leakage audit", &leakage(run));
            let c10 = full_run(&root.path().join("run_b")).and_then(|second| {
                let cubes_equal = same_tree(&root.path().join("run_a"), &root.path().join("run_b"));
                determinism(run, &second).and_then(|d| check(cubes_equal, format!("{d}; generated files identical: {cubes_equal}")))
            });
            all &= report(10, "determinism", &c10);
        }
        Err(e) => {
            for (id, name) in [(7, "bench preset cross-validation"), (8, "external validation"), (9, "leakage audit"), (10, "determinism")] {
                all &= report(id, name, &Err(format!("benchmark run failed: {e}")));
            }
        }
    }
    if !all {
        std::process::exit(1);
    }
}
