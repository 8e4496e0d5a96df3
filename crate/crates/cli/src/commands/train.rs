use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use segqc_core::gate::{load_cases, write_cases_csv, CaseRecord};
use segqc_core::metrics::mae;
use segqc_core::regressor::{predict, train_regressor, FeatureVector, PairKind, RegressorModel, TrainConfig};

use super::score::read_features;
use super::{in_case, maps::to_json, Global};
use crate::config::{parse_enum, required, PredictFile, TrainFile};
use crate::error::{CliError, CliResult};
use crate::{Outputs, PredictArgs, TrainArgs};

/// Relative sizes of the training and validation parts of each fold's
/// non-test cases.
const TRAIN_PART: f64 = 68.0;
const VAL_PART: f64 = 16.0;

#[derive(Debug, Serialize)]
struct TrainRun {
    cases: PathBuf,
    features: PathBuf,
    folds: u32,
    pair_kind: PairKind,
    fold_assignment: &'static str,
    train: TrainConfig,
}

#[derive(Debug, Serialize)]
struct FoldResult {
    fold: u32,
    seed: u64,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    final_train_loss: f64,
    val_mae: Option<f64>,
    test_mae: Option<f64>,
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    pair_kind: PairKind,
    folds: Vec<FoldResult>,
    final_model_train_loss: f64,
}

/// Seeded shuffle of the sorted ids, dealt round-robin into `k` folds.
pub fn assign_folds(ids: &[String], k: u32, seed: u64) -> BTreeMap<String, u32> {
    let mut sorted: Vec<&String> = ids.iter().collect();
    sorted.sort();
    sorted.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), (i % k as usize) as u32))
        .collect()
}

fn features_for(
    rows: Vec<(String, FeatureVector)>,
    kind: PairKind,
) -> BTreeMap<String, FeatureVector> {
    rows.into_iter().filter(|(_, f)| f.kind == kind).collect()
}

fn mae_of(model: &RegressorModel, data: &[(FeatureVector, f64)]) -> CliResult<Option<f64>> {
    if data.is_empty() {
        return Ok(None);
    }
    let pred = data.iter().map(|(f, _)| predict(model, f)).collect::<segqc_core::Result<Vec<_>>>()?;
    let truth: Vec<f64> = data.iter().map(|(_, d)| *d).collect();
    Ok(Some(mae(&pred, &truth)?))
}

pub(crate) fn run(g: &Global, a: &TrainArgs, f: &TrainFile) -> CliResult<()> {
    let d = TrainConfig::default();
    let train = TrainConfig {
        learning_rate: f.learning_rate.unwrap_or(d.learning_rate),
        beta1: f.beta1.unwrap_or(d.beta1),
        beta2: f.beta2.unwrap_or(d.beta2),
        epsilon: f.epsilon.unwrap_or(d.epsilon),
        epochs: a.epochs.or(f.epochs).unwrap_or(d.epochs),
        batch_size: f.batch_size.unwrap_or(d.batch_size),
        delta: a.delta.or(f.delta).unwrap_or(d.delta),
        seed: g.seed,
        hidden_width: f.hidden_width.unwrap_or(d.hidden_width),
    };
    train.validate()?;
    let folds = a.folds.or(f.folds).unwrap_or(5);
    if folds < 2 {
        return Err(CliError::Config(format!("--folds must be at least 2, got {folds}")));
    }
    let pair_kind = match a.pair_kind.as_ref().or(f.pair_kind.as_ref()) {
        Some(s) => parse_enum("pair-kind", s)?,
        None => PairKind::Error,
    };
    let mut cfg = TrainRun {
        cases: required("cases", [a.cases.clone(), f.cases.clone()])?,
        features: required("features", [a.features.clone(), f.features.clone()])?,
        folds,
        pair_kind,
        fold_assignment: "",
        train,
    };

    let mut names: Vec<String> = vec!["cases.csv".into(), "model.json".into(), "train_summary.json".into()];
    names.extend((0..folds).map(|k| format!("fold_{k}.model.json")));
    names.push(crate::manifest_name("train"));
    let mut out = Outputs::claim(&g.out, g.force, &names)?;

    let mut cases = load_cases(&cfg.cases)?;
    let features = features_for(read_features(&cfg.features)?, pair_kind);
    let mut data: Vec<(FeatureVector, f64)> = Vec::with_capacity(cases.len());
    for c in &cases {
        let truth = c.true_dice.ok_or_else(|| {
            in_case(&c.id, segqc_core::Error::MissingField { id: c.id.clone(), field: "true_dice" })
        })?;
        let fv = features
            .get(&c.id)
            .ok_or_else(|| CliError::Input(format!("case {}: no {pair_kind:?} features", c.id)))?;
        data.push((fv.clone(), truth));
    }

    // reuse persisted folds so later runs evaluate the same splits
    let with_fold = cases.iter().filter(|c| c.fold.is_some()).count();
    if with_fold == cases.len() {
        if let Some(c) = cases.iter().find(|c| c.fold.unwrap() >= folds) {
            return Err(CliError::Input(format!(
                "case {}: fold {} out of range for {folds} folds",
                c.id,
                c.fold.unwrap()
            )));
        }
        cfg.fold_assignment = "from input";
    } else if with_fold == 0 {
        let ids: Vec<String> = cases.iter().map(|c| c.id.clone()).collect();
        let assigned = assign_folds(&ids, folds, g.seed);
        for c in cases.iter_mut() {
            c.fold = Some(assigned[&c.id]);
        }
        cfg.fold_assignment = "seeded shuffle";
    } else {
        return Err(CliError::Input("folds must be given for all cases or for none".into()));
    }

    let results = (0..folds)
        .into_par_iter()
        .map(|k| train_fold(&cases, &data, k, &cfg.train))
        .collect::<CliResult<Vec<_>>>()?;

    let mut fold_results = Vec::with_capacity(results.len());
    for (k, (model, res, preds)) in results.into_iter().enumerate() {
        for (i, p) in preds {
            cases[i].predicted_dice = Some(p);
        }
        let name = format!("fold_{k}.model.json");
        out.write(&name, &model.to_json()?)?;
        fold_results.push(res);
    }

    let (model, history) = train_regressor(&data, &cfg.train)?;
    out.write("model.json", &model.to_json()?)?;
    out.write("cases.csv", &write_cases_csv(&cases)?)?;
    let summary = TrainSummary {
        pair_kind,
        folds: fold_results,
        final_model_train_loss: *history.last().expect("at least one epoch"),
    };
    out.write("train_summary.json", &to_json(&summary))?;
    out.finish("train", g.seed, &cfg)
}

type FoldOutput = (RegressorModel, FoldResult, Vec<(usize, f64)>);

fn train_fold(cases: &[CaseRecord], data: &[(FeatureVector, f64)], k: u32, base: &TrainConfig) -> CliResult<FoldOutput> {
    let mut rest: Vec<usize> = Vec::new();
    let mut test: Vec<usize> = Vec::new();
    for (i, c) in cases.iter().enumerate() {
        if c.fold == Some(k) {
            test.push(i);
        } else {
            rest.push(i);
        }
    }
    let seed = base.seed.wrapping_add(u64::from(k) + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rest.shuffle(&mut rng);
    let n_val = (rest.len() as f64 * VAL_PART / (TRAIN_PART + VAL_PART)).round() as usize;
    let (val, tr) = rest.split_at(n_val);

    let pick = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    let (train_set, val_set, test_set) = (pick(tr), pick(val), pick(&test));
    let cfg = TrainConfig { seed, ..base.clone() };
    let (model, history) = train_regressor(&train_set, &cfg).map_err(|e| {
        let e: CliError = e.into();
        match e {
            CliError::Config(m) => CliError::Config(format!("fold {k}: {m}")),
            CliError::Degenerate(m) => CliError::Degenerate(format!("fold {k}: {m}")),
            other => other,
        }
    })?;
    let preds = test
        .iter()
        .map(|&i| Ok((i, predict(&model, &data[i].0)?)))
        .collect::<CliResult<Vec<_>>>()?;
    let res = FoldResult {
        fold: k,
        seed,
        n_train: train_set.len(),
        n_val: val_set.len(),
        n_test: test_set.len(),
        final_train_loss: *history.last().expect("at least one epoch"),
        val_mae: mae_of(&model, &val_set)?,
        test_mae: mae_of(&model, &test_set)?,
    };
    Ok((model, res, preds))
}

#[derive(Debug, Serialize)]
struct PredictRun {
    model: PathBuf,
    features: PathBuf,
    cases: PathBuf,
    pair_kind: PairKind,
}

pub(crate) fn run_predict(g: &Global, a: &PredictArgs, f: &PredictFile) -> CliResult<()> {
    let model_path = required("model", [a.model.clone(), f.model.clone()])?;
    let model = RegressorModel::load(&model_path)?;
    let cfg = PredictRun {
        model: model_path,
        features: required("features", [a.features.clone(), f.features.clone()])?,
        cases: required("cases", [a.cases.clone(), f.cases.clone()])?,
        pair_kind: model.kind,
    };
    let names = ["cases.csv".to_string(), crate::manifest_name("predict")];
    let mut out = Outputs::claim(&g.out, g.force, &names)?;

    let features = features_for(read_features(&cfg.features)?, model.kind);
    let mut cases: Vec<CaseRecord> = load_cases(&cfg.cases)?;
    for c in cases.iter_mut() {
        let fv = features
            .get(&c.id)
            .ok_or_else(|| CliError::Input(format!("case {}: no {:?} features", c.id, model.kind)))?;
        c.predicted_dice = Some(predict(&model, fv).map_err(|e| in_case(&c.id, e))?);
    }
    out.write("cases.csv", &write_cases_csv(&cases)?)?;
    out.finish("predict", g.seed, &cfg)
}
