//! Scalar re-derivation of a gate report from raw case records.

#![allow(dead_code)]

use segqc_core::gate::{
    Aggregate, CaseRecord, FlagWhen, FoldStats, FoldSummary, GateParams, GateReport, GroupStats, ScoreKind,
};
use segqc_core::metrics::{ConfusionCounts, Positive};

fn score_of(c: &CaseRecord, kind: ScoreKind) -> f64 {
    match kind {
        ScoreKind::UncertaintyVs => c.uncertainty_vs.unwrap(),
        ScoreKind::ErrorVs => c.error_vs.unwrap(),
        ScoreKind::PredictedDice => c.predicted_dice.unwrap(),
    }
}

fn avg(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for x in v {
        total += *x;
    }
    Some(total / v.len() as f64)
}

fn mid(v: &[f64]) -> Option<f64> {
    let n = v.len();
    if n == 0 {
        return None;
    }
    let mut s = v.to_vec();
    // insertion sort keeps this path free of library helpers
    for i in 1..n {
        let mut j = i;
        while j > 0 && s[j - 1] > s[j] {
            s.swap(j - 1, j);
            j -= 1;
        }
    }
    Some(if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 })
}

fn correlation(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 3 {
        return None;
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for i in 0..n {
        sx += x[i];
        sy += y[i];
    }
    let (mx, my) = (sx / n as f64, sy / n as f64);
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for i in 0..n {
        a += (x[i] - mx) * (x[i] - mx);
        b += (y[i] - my) * (y[i] - my);
        c += (x[i] - mx) * (y[i] - my);
    }
    if a == 0.0 || b == 0.0 {
        return None;
    }
    Some((c / (a.sqrt() * b.sqrt())).clamp(-1.0, 1.0))
}

fn group(cases: &[&CaseRecord], p: &GateParams) -> GroupStats {
    let mut dice = Vec::new();
    let mut scores = Vec::new();
    let mut after = Vec::new();
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    let (mut n_flagged, mut n_fail) = (0, 0);
    for c in cases {
        let d = c.true_dice.unwrap();
        let s = score_of(c, p.score);
        let flagged = match p.flag_when {
            FlagWhen::Below => s < p.threshold,
            FlagWhen::Above => s > p.threshold,
        };
        let failed = d < p.dice_fail_threshold;
        dice.push(d);
        scores.push(s);
        if flagged {
            n_flagged += 1;
        } else {
            after.push(d);
        }
        if failed {
            n_fail += 1;
        }
        let (pp, tt) = match p.positive {
            Positive::Fail => (flagged, failed),
            Positive::Pass => (!flagged, !failed),
        };
        match (pp, tt) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let mae = (p.score == ScoreKind::PredictedDice).then(|| {
        let mut t = 0.0;
        for i in 0..dice.len() {
            t += (scores[i] - dice[i]).abs();
        }
        t / dice.len() as f64
    });
    GroupStats {
        n_total: cases.len(),
        n_flagged,
        n_true_fail: n_fail,
        mean_dice_before: avg(&dice).unwrap(),
        median_dice_before: mid(&dice).unwrap(),
        mean_dice_after: avg(&after),
        median_dice_after: mid(&after),
        precision: (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64),
        recall: (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64),
        counts: ConfusionCounts { tp, fp, fn_, tn },
        pearson_r: correlation(&scores, &dice),
        mae,
    }
}

fn aggregate(values: Vec<Option<f64>>) -> Aggregate {
    let defined: Vec<f64> = values.into_iter().flatten().collect();
    Aggregate {
        mean: avg(&defined),
        median: mid(&defined),
        n_defined: defined.len(),
    }
}

/// Every report field, computed with plain loops.
pub fn oracle_report(cases: &[CaseRecord], p: &GateParams) -> GateReport {
    let all: Vec<&CaseRecord> = cases.iter().collect();
    let mut fold_ids: Vec<u32> = cases.iter().filter_map(|c| c.fold).collect();
    fold_ids.sort();
    fold_ids.dedup();
    let folds: Vec<FoldStats> = fold_ids
        .iter()
        .map(|&f| {
            let members: Vec<&CaseRecord> = cases.iter().filter(|c| c.fold == Some(f)).collect();
            FoldStats {
                fold: f,
                stats: group(&members, p),
            }
        })
        .collect();
    let fold_summary = (!folds.is_empty()).then(|| {
        let col = |g: fn(&GroupStats) -> Option<f64>| aggregate(folds.iter().map(|f| g(&f.stats)).collect());
        FoldSummary {
            pearson_r: col(|s| s.pearson_r),
            mean_dice_after: col(|s| s.mean_dice_after),
            median_dice_after: col(|s| s.median_dice_after),
            precision: col(|s| s.precision),
            recall: col(|s| s.recall),
            n_flagged: col(|s| Some(s.n_flagged as f64)),
            mae: col(|s| s.mae),
        }
    });
    let flagged_ids = cases
        .iter()
        .filter(|c| {
            let s = score_of(c, p.score);
            match p.flag_when {
                FlagWhen::Below => s < p.threshold,
                FlagWhen::Above => s > p.threshold,
            }
        })
        .map(|c| c.id.clone())
        .collect();
    GateReport {
        schema: "segqc-gate-report".into(),
        version: 1,
        params: *p,
        cohort: group(&all, p),
        flagged_ids,
        folds,
        fold_summary,
    }
}

/// Random cohort with folds; scores drawn for every kind.
pub fn random_cohort(rng: &mut impl rand::Rng, n: usize, folds: u32) -> Vec<CaseRecord> {
    (0..n)
        .map(|i| {
            let d: f64 = rng.gen_range(0.0..1.0);
            let mut c = CaseRecord::new(format!("c{i:03}"));
            c.fold = (folds > 0).then(|| i as u32 % folds);
            c.true_dice = Some(d);
            c.uncertainty_vs = Some(d * 2000.0 + rng.gen_range(-400.0..400.0));
            c.error_vs = Some(rng.gen_range(-2e5..0.0));
            c.predicted_dice = Some((d + rng.gen_range(-0.1..0.1)).clamp(0.0, 1.0));
            c
        })
        .collect()
}
