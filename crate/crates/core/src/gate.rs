//! Failure gating on a per-case quality score, and the before/after
//! evaluation of a gate against true Dice.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::{self, ConfusionCounts, Positive};
use crate::{Error, Result};

/// Cases with true Dice strictly below this are failures.
pub const DICE_FAIL_THRESHOLD: f64 = 0.75;

/// One row of a cohort table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub fold: Option<u32>,
    pub true_dice: Option<f64>,
    pub uncertainty_vs: Option<f64>,
    pub error_vs: Option<f64>,
    pub predicted_dice: Option<f64>,
}

impl CaseRecord {
    pub fn new(id: impl Into<String>) -> Self {
        CaseRecord {
            id: id.into(),
            fold: None,
            true_dice: None,
            uncertainty_vs: None,
            error_vs: None,
            predicted_dice: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Parse("case id must not be empty".into()));
        }
        if self.true_dice.is_none()
            && self.uncertainty_vs.is_none()
            && self.error_vs.is_none()
            && self.predicted_dice.is_none()
        {
            return Err(Error::Parse(format!("case {}: no score present", self.id)));
        }
        for (name, v) in [("true_dice", self.true_dice), ("predicted_dice", self.predicted_dice)] {
            if let Some(d) = v {
                if !(0.0..=1.0).contains(&d) {
                    return Err(Error::Parse(format!("case {}: {name} {d} outside [0, 1]", self.id)));
                }
            }
        }
        for v in [self.uncertainty_vs, self.error_vs].into_iter().flatten() {
            if !v.is_finite() {
                return Err(Error::Parse(format!("case {}: non-finite VS", self.id)));
            }
        }
        Ok(())
    }

    pub fn score(&self, kind: ScoreKind) -> Option<f64> {
        match kind {
            ScoreKind::UncertaintyVs => self.uncertainty_vs,
            ScoreKind::ErrorVs => self.error_vs,
            ScoreKind::PredictedDice => self.predicted_dice,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    UncertaintyVs,
    ErrorVs,
    PredictedDice,
}

impl ScoreKind {
    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::UncertaintyVs => "uncertainty_vs",
            ScoreKind::ErrorVs => "error_vs",
            ScoreKind::PredictedDice => "predicted_dice",
        }
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uncertainty_vs" => Ok(ScoreKind::UncertaintyVs),
            "error_vs" => Ok(ScoreKind::ErrorVs),
            "predicted_dice" => Ok(ScoreKind::PredictedDice),
            other => Err(Error::InvalidArgument(format!("unknown score {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlagWhen {
    Below,
    Above,
}

impl std::str::FromStr for FlagWhen {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "below" => Ok(FlagWhen::Below),
            "above" => Ok(FlagWhen::Above),
            other => Err(Error::InvalidArgument(format!("unknown flag direction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub score: ScoreKind,
    pub threshold: f64,
    pub flag_when: FlagWhen,
    pub dice_fail_threshold: f64,
    pub positive: Positive,
}

impl GateParams {
    pub fn new(score: ScoreKind, threshold: f64, flag_when: FlagWhen) -> Self {
        GateParams {
            score,
            threshold,
            flag_when,
            dice_fail_threshold: DICE_FAIL_THRESHOLD,
            positive: Positive::Fail,
        }
    }

    /// Strict comparison; ties pass.
    pub fn flags(&self, score: f64) -> bool {
        match self.flag_when {
            FlagWhen::Below => score < self.threshold,
            FlagWhen::Above => score > self.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GatePartition {
    pub flagged: Vec<String>,
    pub passed: Vec<String>,
}

fn gate_flags(cases: &[CaseRecord], score: ScoreKind, threshold: f64, flag_when: FlagWhen) -> Result<Vec<bool>> {
    let params = GateParams::new(score, threshold, flag_when);
    cases
        .iter()
        .map(|c| {
            c.score(score)
                .map(|s| params.flags(s))
                .ok_or_else(|| Error::MissingField {
                    id: c.id.clone(),
                    field: score.name(),
                })
        })
        .collect()
}

/// Splits cases into flagged and passed ids, preserving input order.
pub fn apply_gate(
    cases: &[CaseRecord],
    score: ScoreKind,
    threshold: f64,
    flag_when: FlagWhen,
) -> Result<GatePartition> {
    let flags = gate_flags(cases, score, threshold, flag_when)?;
    let mut out = GatePartition::default();
    for (c, f) in cases.iter().zip(flags) {
        if f {
            out.flagged.push(c.id.clone());
        } else {
            out.passed.push(c.id.clone());
        }
    }
    Ok(out)
}

/// `Option<f64>` fields render `None` as the string "undefined".
mod undefined_token {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub const TOKEN: &str = "undefined";

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => x.serialize(s),
            None => s.serialize_str(TOKEN),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(Some(x)),
            Repr::Str(s) if s == TOKEN => Ok(None),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("expected a number or {TOKEN:?}, got {s:?}"))),
        }
    }
}

/// Statistics of one evaluated group (the whole cohort or one fold).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n_total: usize,
    pub n_flagged: usize,
    pub n_true_fail: usize,
    pub mean_dice_before: f64,
    pub median_dice_before: f64,
    #[serde(with = "undefined_token")]
    pub mean_dice_after: Option<f64>,
    #[serde(with = "undefined_token")]
    pub median_dice_after: Option<f64>,
    #[serde(with = "undefined_token")]
    pub precision: Option<f64>,
    #[serde(with = "undefined_token")]
    pub recall: Option<f64>,
    pub counts: ConfusionCounts,
    #[serde(with = "undefined_token")]
    pub pearson_r: Option<f64>,
    /// Only for predicted-Dice gates.
    pub mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldStats {
    pub fold: u32,
    #[serde(flatten)]
    pub stats: GroupStats,
}

/// Mean and median of one metric across folds, over folds where it is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(with = "undefined_token")]
    pub mean: Option<f64>,
    #[serde(with = "undefined_token")]
    pub median: Option<f64>,
    pub n_defined: usize,
}

impl Aggregate {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let defined: Vec<f64> = values.into_iter().flatten().collect();
        Aggregate {
            mean: mean(&defined),
            median: median(&defined),
            n_defined: defined.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub pearson_r: Aggregate,
    pub mean_dice_after: Aggregate,
    pub median_dice_after: Aggregate,
    pub precision: Aggregate,
    pub recall: Aggregate,
    pub n_flagged: Aggregate,
    pub mae: Aggregate,
}

pub const REPORT_SCHEMA: &str = "segqc-gate-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub schema: String,
    pub version: u32,
    pub params: GateParams,
    pub cohort: GroupStats,
    pub flagged_ids: Vec<String>,
    pub folds: Vec<FoldStats>,
    pub fold_summary: Option<FoldSummary>,
}

/// Sequential mean; `None` for an empty slice.
pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut s = 0.0;
    for &x in xs {
        s += x;
    }
    Some(s / xs.len() as f64)
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

fn group_stats(cases: &[&CaseRecord], flags: &[bool], params: &GateParams) -> Result<GroupStats> {
    let dice: Vec<f64> = cases.iter().map(|c| c.true_dice.unwrap()).collect();
    let scores: Vec<f64> = cases.iter().map(|c| c.score(params.score).unwrap()).collect();
    let true_fail: Vec<bool> = dice.iter().map(|&d| d < params.dice_fail_threshold).collect();
    let after: Vec<f64> = dice
        .iter()
        .zip(flags)
        .filter(|(_, &f)| !f)
        .map(|(&d, _)| d)
        .collect();
    let pr = metrics::precision_recall(flags, &true_fail, params.positive)?;
    let mae = match params.score {
        ScoreKind::PredictedDice => Some(metrics::mae(&scores, &dice)?),
        _ => None,
    };
    Ok(GroupStats {
        n_total: cases.len(),
        n_flagged: flags.iter().filter(|&&f| f).count(),
        n_true_fail: true_fail.iter().filter(|&&f| f).count(),
        mean_dice_before: mean(&dice).unwrap(),
        median_dice_before: median(&dice).unwrap(),
        mean_dice_after: mean(&after),
        median_dice_after: median(&after),
        precision: pr.precision,
        recall: pr.recall,
        counts: pr.counts,
        pearson_r: metrics::pearson_r(&scores, &dice).ok(),
        mae,
    })
}

/// Applies the gate and scores it against true Dice, overall and per fold.
pub fn evaluate_gate(cases: &[CaseRecord], params: &GateParams) -> Result<GateReport> {
    if cases.is_empty() {
        return Err(Error::Degenerate("cannot evaluate a gate on zero cases".into()));
    }
    for c in cases {
        if c.true_dice.is_none() {
            return Err(Error::MissingField {
                id: c.id.clone(),
                field: "true_dice",
            });
        }
    }
    let flags = gate_flags(cases, params.score, params.threshold, params.flag_when)?;
    let all: Vec<&CaseRecord> = cases.iter().collect();
    let cohort = group_stats(&all, &flags, params)?;

    let with_fold = cases.iter().filter(|c| c.fold.is_some()).count();
    if with_fold != 0 && with_fold != cases.len() {
        return Err(Error::InvalidArgument(
            "either every case or no case must carry a fold index".into(),
        ));
    }
    let mut groups: BTreeMap<u32, (Vec<&CaseRecord>, Vec<bool>)> = BTreeMap::new();
    if with_fold > 0 {
        for (c, &f) in cases.iter().zip(&flags) {
            let g = groups.entry(c.fold.unwrap()).or_default();
            g.0.push(c);
            g.1.push(f);
        }
    }
    let folds = groups
        .into_iter()
        .map(|(fold, (cs, fs))| Ok(FoldStats { fold, stats: group_stats(&cs, &fs, params)? }))
        .collect::<Result<Vec<_>>>()?;
    let fold_summary = (!folds.is_empty()).then(|| {
        let agg = |f: &dyn Fn(&GroupStats) -> Option<f64>| Aggregate::of(folds.iter().map(|x| f(&x.stats)));
        FoldSummary {
            pearson_r: agg(&|s| s.pearson_r),
            mean_dice_after: agg(&|s| s.mean_dice_after),
            median_dice_after: agg(&|s| s.median_dice_after),
            precision: agg(&|s| s.precision),
            recall: agg(&|s| s.recall),
            n_flagged: agg(&|s| Some(s.n_flagged as f64)),
            mae: agg(&|s| s.mae),
        }
    });

    Ok(GateReport {
        schema: REPORT_SCHEMA.to_string(),
        version: REPORT_VERSION,
        params: *params,
        cohort,
        flagged_ids: cases
            .iter()
            .zip(&flags)
            .filter(|(_, &f)| f)
            .map(|(c, _)| c.id.clone())
            .collect(),
        folds,
        fold_summary,
    })
}

/// Row labels of the text report, in order.
pub const TABLE_ROWS: [&str; 6] = [
    "Correlation coefficient",
    "Dice after filtering",
    "Precision",
    "Recall",
    "N failed segmentations identified",
    "MAE",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Text,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidArgument(format!("unknown report format {other:?}"))),
        }
    }
}

fn fmt_value(v: Option<f64>, missing: &str) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => missing.to_string(),
    }
}

fn row_values(s: &GroupStats) -> [(Option<f64>, &'static str); 6] {
    let na = if s.mae.is_none() { "-" } else { undefined_token::TOKEN };
    [
        (s.pearson_r, undefined_token::TOKEN),
        (s.mean_dice_after, undefined_token::TOKEN),
        (s.precision, undefined_token::TOKEN),
        (s.recall, undefined_token::TOKEN),
        (Some(s.n_flagged as f64), undefined_token::TOKEN),
        (s.mae, na),
    ]
}

fn summary_rows(s: &FoldSummary) -> [&Aggregate; 6] {
    [
        &s.pearson_r,
        &s.mean_dice_after,
        &s.precision,
        &s.recall,
        &s.n_flagged,
        &s.mae,
    ]
}

impl GateReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: GateReport = serde_json::from_str(text)?;
        if r.schema != REPORT_SCHEMA || r.version != REPORT_VERSION {
            return Err(Error::Parse(format!("unsupported report {} v{}", r.schema, r.version)));
        }
        Ok(r)
    }

    /// Aligned columns: cohort, each fold, then fold mean and median.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let c = &self.cohort;
        let direction = match p.flag_when {
            FlagWhen::Below => "below",
            FlagWhen::Above => "above",
        };
        let positive = match p.positive {
            Positive::Fail => "fail",
            Positive::Pass => "pass",
        };
        let mut out = String::new();
        let _ = writeln!(out, "# {REPORT_SCHEMA} v{REPORT_VERSION}");
        let _ = writeln!(
            out,
            "# gate: {} {} {}  (positive class: {}, failure: true Dice < {})",
            p.score.name(),
            direction,
            p.threshold,
            positive,
            p.dice_fail_threshold
        );
        let _ = writeln!(
            out,
            "# cases: {}  flagged: {}  true failures: {}",
            c.n_total, c.n_flagged, c.n_true_fail
        );
        let _ = writeln!(
            out,
            "# Dice before filtering: mean {:.4}  median {:.4}",
            c.mean_dice_before, c.median_dice_before
        );
        let _ = writeln!(
            out,
            "# Dice after filtering: mean {}  median {}",
            fmt_value(c.mean_dice_after, undefined_token::TOKEN),
            fmt_value(c.median_dice_after, undefined_token::TOKEN)
        );

        let mut header = vec!["metric".to_string(), "cohort".to_string()];
        header.extend(self.folds.iter().map(|f| format!("fold_{}", f.fold)));
        if self.fold_summary.is_some() {
            header.push("fold_mean".into());
            header.push("fold_median".into());
        }
        let mut rows: Vec<Vec<String>> = vec![header];
        let cohort_vals = row_values(c);
        let fold_vals: Vec<_> = self.folds.iter().map(|f| row_values(&f.stats)).collect();
        for (i, name) in TABLE_ROWS.iter().enumerate() {
            let mut row = vec![name.to_string(), fmt_value(cohort_vals[i].0, cohort_vals[i].1)];
            for fv in &fold_vals {
                row.push(fmt_value(fv[i].0, fv[i].1));
            }
            if let Some(s) = &self.fold_summary {
                let agg = summary_rows(s)[i];
                let missing = if i == 5 && c.mae.is_none() { "-" } else { undefined_token::TOKEN };
                row.push(fmt_value(agg.mean, missing));
                row.push(fmt_value(agg.median, missing));
            }
            rows.push(row);
        }
        let ncol = rows[0].len();
        let widths: Vec<usize> = (0..ncol)
            .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
            .collect();
        for r in rows {
            let line: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(j, cell)| {
                    if j == 0 {
                        format!("{cell:<w$}", w = widths[j])
                    } else {
                        format!("{cell:>w$}", w = widths[j])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }

    /// Long format: `metric,scope,value` with full-precision values.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "scope", "value"])?;
        let keys = [
            "correlation_coefficient",
            "dice_after_filtering",
            "precision",
            "recall",
            "n_failed_identified",
            "mae",
        ];
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| undefined_token::TOKEN.to_string());
        let mut emit = |scope: &str, s: &GroupStats| -> Result<()> {
            w.write_record(["dice_before_mean", scope, &s.mean_dice_before.to_string()])?;
            w.write_record(["dice_before_median", scope, &s.median_dice_before.to_string()])?;
            w.write_record(["dice_after_median", scope, &cell(s.median_dice_after)])?;
            for (k, (v, _)) in keys.iter().zip(row_values(s)) {
                if *k == "mae" && s.mae.is_none() {
                    continue;
                }
                w.write_record([*k, scope, &cell(v)])?;
            }
            Ok(())
        };
        emit("cohort", &self.cohort)?;
        for f in &self.folds {
            emit(&format!("fold_{}", f.fold), &f.stats)?;
        }
        if let Some(s) = &self.fold_summary {
            for (k, agg) in keys.iter().zip(summary_rows(s)) {
                if *k == "mae" && self.cohort.mae.is_none() {
                    continue;
                }
                w.write_record([*k, "fold_mean", &cell(agg.mean)])?;
                w.write_record([*k, "fold_median", &cell(agg.median)])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn render(&self, format: ReportFormat) -> Result<String> {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Text => Ok(self.to_text()),
            ReportFormat::Csv => self.to_csv(),
        }
    }
}

pub const CASE_COLUMNS: [&str; 6] = ["id", "fold", "true_dice", "uncertainty_vs", "error_vs", "predicted_dice"];

/// Serializes cases sorted by id. Empty cells mark absent values.
pub fn write_cases_csv(cases: &[CaseRecord]) -> Result<String> {
    let mut sorted: Vec<&CaseRecord> = cases.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in sorted {
        w.serialize(c)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_cases_csv(text: &str) -> Result<Vec<CaseRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(|s| s.to_string()).collect();
    if header != CASE_COLUMNS {
        return Err(Error::Parse(format!(
            "cohort header must be {}, got {}",
            CASE_COLUMNS.join(","),
            header.join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let c: CaseRecord = rec?;
        c.validate()?;
        out.push(c);
    }
    Ok(out)
}

pub fn save_cases(cases: &[CaseRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_cases_csv(cases)?).map_err(|e| Error::io(path, e))
}

pub fn load_cases(path: impl AsRef<Path>) -> Result<Vec<CaseRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_cases_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn case(id: &str, dice: f64, uvs: f64) -> CaseRecord {
        CaseRecord {
            true_dice: Some(dice),
            uncertainty_vs: Some(uvs),
            ..CaseRecord::new(id)
        }
    }

    fn hand_cohort() -> Vec<CaseRecord> {
        vec![
            case("a", 0.9, 2000.0),
            case("b", 0.5, 800.0),
            case("c", 0.8, 1500.0),
            case("d", 0.6, 900.0),
        ]
    }

    #[test]
    fn gate_threshold_examples() {
        let cases = vec![case("1", 0.8, 900.0), case("2", 0.8, 1200.0), case("3", 0.8, 1050.0)];
        let p = apply_gate(&cases, ScoreKind::UncertaintyVs, 1100.0, FlagWhen::Below).unwrap();
        assert_eq!(p.flagged, vec!["1", "3"]);
        assert_eq!(p.passed, vec!["2"]);
        let p = apply_gate(&cases, ScoreKind::UncertaintyVs, 100.0, FlagWhen::Below).unwrap();
        assert!(p.flagged.is_empty());
        // ties pass
        let p = apply_gate(&cases, ScoreKind::UncertaintyVs, 900.0, FlagWhen::Below).unwrap();
        assert!(p.flagged.is_empty());
    }

    #[test]
    fn missing_score_names_case() {
        let mut cases = hand_cohort();
        cases[2].uncertainty_vs = None;
        match apply_gate(&cases, ScoreKind::UncertaintyVs, 1.0, FlagWhen::Below) {
            Err(Error::MissingField { id, field }) => {
                assert_eq!(id, "c");
                assert_eq!(field, "uncertainty_vs");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hand_evaluated_report() {
        let params = GateParams::new(ScoreKind::UncertaintyVs, 1100.0, FlagWhen::Below);
        let r = evaluate_gate(&hand_cohort(), &params).unwrap();
        assert_eq!(r.flagged_ids, vec!["b", "d"]);
        assert!((r.cohort.mean_dice_before - 0.70).abs() < 1e-12);
        assert!((r.cohort.mean_dice_after.unwrap() - 0.85).abs() < 1e-12);
        assert_eq!(r.cohort.precision, Some(1.0));
        assert_eq!(r.cohort.recall, Some(1.0));
        assert_eq!(r.cohort.n_flagged, 2);
        assert_eq!(r.cohort.mae, None);
        assert!(r.cohort.pearson_r.unwrap() > 0.9);
        assert!(r.folds.is_empty());
        assert!(r.fold_summary.is_none());
    }

    #[test]
    fn undefined_precision_in_all_formats() {
        let params = GateParams::new(ScoreKind::UncertaintyVs, 0.0, FlagWhen::Below);
        let r = evaluate_gate(&hand_cohort(), &params).unwrap();
        assert_eq!(r.cohort.precision, None);
        assert_eq!(r.cohort.recall, Some(0.0));
        let json = r.to_json().unwrap();
        assert!(json.contains("\"precision\": \"undefined\""));
        assert_eq!(GateReport::from_json(&json).unwrap(), r);
        let text = r.to_text();
        let line = text.lines().find(|l| l.starts_with("Precision")).unwrap();
        assert!(line.ends_with("undefined"), "{line}");
        assert!(r.to_csv().unwrap().contains("precision,cohort,undefined"));
    }

    #[test]
    fn folds_are_reported() {
        let mut cases = hand_cohort();
        cases.push(case("e", 0.95, 2100.0));
        cases.push(case("f", 0.7, 1000.0));
        for (i, c) in cases.iter_mut().enumerate() {
            c.fold = Some((i % 2) as u32);
        }
        let params = GateParams::new(ScoreKind::UncertaintyVs, 1100.0, FlagWhen::Below);
        let r = evaluate_gate(&cases, &params).unwrap();
        assert_eq!(r.folds.len(), 2);
        assert_eq!(r.folds.iter().map(|f| f.stats.n_total).sum::<usize>(), 6);
        let s = r.fold_summary.as_ref().unwrap();
        assert_eq!(s.n_flagged.n_defined, 2);
        let text = r.to_text();
        assert!(text.contains("fold_0") && text.contains("fold_median"));

        cases[0].fold = None;
        assert!(evaluate_gate(&cases, &params).is_err());
    }

    #[test]
    fn evaluation_requires_true_dice() {
        let mut cases = hand_cohort();
        cases[1].true_dice = None;
        let params = GateParams::new(ScoreKind::UncertaintyVs, 1100.0, FlagWhen::Below);
        assert!(matches!(
            evaluate_gate(&cases, &params),
            Err(Error::MissingField { field: "true_dice", .. })
        ));
    }

    #[test]
    fn cases_csv_round_trip_and_sorting() {
        let mut cases = hand_cohort();
        cases.reverse();
        cases[0].fold = Some(3);
        cases[1].predicted_dice = Some(0.123456789012345);
        let text = write_cases_csv(&cases).unwrap();
        assert!(text.starts_with("id,fold,true_dice,uncertainty_vs,error_vs,predicted_dice\n"));
        let back = read_cases_csv(&text).unwrap();
        let mut expected = cases.clone();
        expected.sort_by(|a, b| a.id.cmp(&b.id));
        assert_eq!(back, expected);
    }

    #[test]
    fn cases_csv_validation() {
        assert!(read_cases_csv("id,fold,true_dice,uncertainty_vs,error_vs,predicted_dice\nx,,,,,\n").is_err());
        assert!(read_cases_csv("id,fold,true_dice,uncertainty_vs,error_vs,predicted_dice\nx,,1.5,,,\n").is_err());
        assert!(read_cases_csv("id,true_dice\nx,0.5\n").is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    proptest! {
        #[test]
        fn flag_below_is_monotone(scores in prop::collection::vec(-10.0f64..10.0, 1..30), t1 in -12.0f64..12.0, t2 in -12.0f64..12.0) {
            let cases: Vec<_> = scores.iter().enumerate().map(|(i, &s)| case(&i.to_string(), 0.5, s)).collect();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = apply_gate(&cases, ScoreKind::UncertaintyVs, lo, FlagWhen::Below).unwrap();
            let b = apply_gate(&cases, ScoreKind::UncertaintyVs, hi, FlagWhen::Below).unwrap();
            prop_assert!(a.flagged.iter().all(|id| b.flagged.contains(id)));
            prop_assert_eq!(b.flagged.len() + b.passed.len(), cases.len());
        }

        #[test]
        fn report_json_round_trip(dice in prop::collection::vec(0.0f64..=1.0, 1..25), t in 0.0f64..1.0) {
            let cases: Vec<_> = dice.iter().enumerate().map(|(i, &d)| CaseRecord {
                fold: Some((i % 3) as u32),
                predicted_dice: Some(d),
                ..case(&format!("c{i:02}"), d, 0.0)
            }).collect();
            let params = GateParams::new(ScoreKind::PredictedDice, t, FlagWhen::Below);
            let r = evaluate_gate(&cases, &params).unwrap();
            prop_assert_eq!(GateReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        }
    }
}
