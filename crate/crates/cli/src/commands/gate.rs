use std::path::PathBuf;

use serde::Serialize;

use segqc_core::gate::{evaluate_gate, load_cases, FlagWhen, GateParams, ReportFormat, ScoreKind, DICE_FAIL_THRESHOLD};
use segqc_core::metrics::Positive;

use super::Global;
use crate::config::{parse_enum, required, GateFile};
use crate::error::CliResult;
use crate::{write_report, GateArgs, Outputs};

#[derive(Debug, Serialize)]
struct GateRun {
    cases: PathBuf,
    params: GateParams,
    format: ReportFormat,
}

pub(crate) fn report_name(format: ReportFormat) -> &'static str {
    match format {
        ReportFormat::Json => "report.json",
        ReportFormat::Text => "report.txt",
        ReportFormat::Csv => "report.csv",
    }
}

pub(crate) fn run(g: &Global, a: &GateArgs, f: &GateFile) -> CliResult<()> {
    let score: ScoreKind = parse_enum("score", &required("score", [a.score.clone(), f.score.clone()])?)?;
    let flag_when: FlagWhen = match a.flag.as_ref().or(f.flag.as_ref()) {
        Some(s) => parse_enum("flag", s)?,
        None => FlagWhen::Below,
    };
    let positive: Positive = match a.positive.as_ref().or(f.positive.as_ref()) {
        Some(s) => parse_enum("positive", s)?,
        None => Positive::Fail,
    };
    let format: ReportFormat = match a.format.as_ref().or(f.format.as_ref()) {
        Some(s) => parse_enum("format", s)?,
        None => ReportFormat::Json,
    };
    let threshold = required("threshold", [a.threshold, f.threshold])?;
    let params = GateParams {
        threshold,
        positive,
        dice_fail_threshold: a.dice_fail.or(f.dice_fail).unwrap_or(DICE_FAIL_THRESHOLD),
        ..GateParams::new(score, threshold, flag_when)
    };
    let cfg = GateRun {
        cases: required("cases", [a.cases.clone(), f.cases.clone()])?,
        params,
        format,
    };
    let name = report_name(format);
    let mut out = Outputs::claim(&g.out, g.force, &[name.to_string(), crate::manifest_name("gate")])?;

    let cases = load_cases(&cfg.cases)?;
    let report = evaluate_gate(&cases, &cfg.params)?;
    write_report(&report, format, &out.path(name))?;
    out.record(name);
    println!("{}", report.to_text());
    out.finish("gate", g.seed, &cfg)
}
