//! Acceptance gate: nine criteria, each with its tolerance and time budget.
//! Prints one PASS/FAIL line per criterion and fails if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segqc_core::gate::{evaluate_gate, load_cases, CaseRecord, FlagWhen, GateParams, GateReport, ScoreKind, TABLE_ROWS};
use segqc_core::maps::{binary_entropy, error_map, voxelwise_sum};
use segqc_core::metrics::{dice_coefficient, mae, ssim_components, Positive, SsimVariant};
use segqc_core::regressor::{predict, train_regressor, FeatureVector, Network, PairKind, TrainConfig};
use segqc_core::synth::CohortManifest;
use segqc_core::volume::{
    read_nifti, write_nifti, BinaryMask, DataType, Encoding, Endian, GridShape, ScalarVolume, NIFTI_VOX_OFFSET,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn entropy() -> Outcome {
    check(binary_entropy(0.5) == 1.0, || format!("H(0.5) = {}", binary_entropy(0.5)))?;
    check(binary_entropy(0.0) == 0.0 && binary_entropy(1.0) == 0.0, || "H at the ends is not 0".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let p: f64 = rng.gen();
        worst = worst.max((binary_entropy(p) - binary_entropy(1.0 - p)).abs());
    }
    check(worst <= 1e-12, || format!("asymmetry {worst:e}"))?;
    Ok(format!("max |H(p) - H(1-p)| = {worst:e} over 10^4 draws"))
}

fn dice_exhaustive() -> Outcome {
    let shape = GridShape::cube(2).unwrap();
    let masks: Vec<BinaryMask> = (0..=255u8)
        .map(|b| BinaryMask::new(shape, (0..8).map(|i| b & (1 << i) != 0).collect()).unwrap())
        .collect();
    for a in 0..256usize {
        for b in 0..256usize {
            let (x, y) = (a as u8, b as u8);
            let total = x.count_ones() + y.count_ones();
            let expected = if total == 0 { 1.0 } else { 2.0 * (x & y).count_ones() as f64 / total as f64 };
            let got = dice_coefficient(&masks[a], &masks[b]).unwrap();
            check(got == expected, || format!("{x:08b} vs {y:08b}: {got} != {expected}"))?;
        }
    }
    Ok("65536 pairs agree; dice(empty, empty) = 1".into())
}

fn ssim() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let data = (0..216).map(|_| rng.gen_range(0.0..1.0)).collect();
        let x = ScalarVolume::new(GridShape::cube(6).unwrap(), data).unwrap();
        worst = worst.max(ssim_components(&x, &x, 1.0, SsimVariant::Literal).unwrap().ssim_loss);
    }
    check(worst <= 1e-9, || format!("self loss {worst:e}"))?;
    let s = GridShape::new(2, 1, 1).unwrap();
    let x = ScalarVolume::new(s, vec![0.0, 1.0]).unwrap();
    let y = ScalarVolume::new(s, vec![1.0, 0.0]).unwrap();
    let loss = ssim_components(&x, &y, 1.0, SsimVariant::Literal).unwrap().ssim_loss;
    check((loss - 0.21359).abs() <= 1e-5, || format!("two-voxel loss {loss}"))?;
    Ok(format!("max self loss {worst:e}; two-voxel loss {loss:.6}"))
}

fn gradient_rel_error(net: &Network, xs: &[Vec<f64>], ys: &[f64], delta: f64) -> f64 {
    let rows: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
    let (_, g) = net.objective_and_gradient(&rows, ys, delta);
    let p0 = net.params();
    let mut probe = net.clone();
    let (mut num2, mut diff2, mut ana2) = (0.0, 0.0, 0.0);
    for i in 0..p0.len() {
        let mut p = p0.clone();
        p[i] += 1e-5;
        probe.set_params(&p);
        let up = probe.objective_and_gradient(&rows, ys, delta).0;
        p[i] = p0[i] - 1e-5;
        probe.set_params(&p);
        let down = probe.objective_and_gradient(&rows, ys, delta).0;
        let fd = (up - down) / 2e-5;
        num2 += fd * fd;
        ana2 += g[i] * g[i];
        diff2 += (fd - g[i]) * (fd - g[i]);
    }
    diff2.sqrt() / num2.sqrt().max(ana2.sqrt())
}

fn linear_data(rng: &mut ChaCha8Rng, n: usize) -> Vec<(FeatureVector, f64)> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
            let d = (0.2 + 0.6 * v[0]).clamp(0.0, 1.0);
            (FeatureVector::new(PairKind::Uncertainty, v).unwrap(), d)
        })
        .collect()
}

fn huber_adam() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for branch in ["quadratic", "linear"] {
        for _ in 0..10 {
            let net = Network::init(5, 6, 0.3, &mut rng);
            let xs: Vec<Vec<f64>> = (0..12).map(|_| (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
            let (ys, delta): (Vec<f64>, f64) = if branch == "quadratic" {
                ((0..12).map(|_| rng.gen_range(0.0..1.0)).collect(), 100.0)
            } else {
                let ys = xs
                    .iter()
                    .map(|x| net.forward(x) + if rng.gen_bool(0.5) { 4.0 } else { -4.0 })
                    .collect();
                (ys, 0.05)
            };
            let e = gradient_rel_error(&net, &xs, &ys, delta);
            check(e < 1e-4, || format!("{branch} branch relative error {e:e}"))?;
            worst = worst.max(e);
        }
    }
    let train = linear_data(&mut rng, 200);
    let test = linear_data(&mut rng, 100);
    let cfg = TrainConfig::default();
    let (a, ha) = train_regressor(&train, &cfg).unwrap();
    let (b, hb) = train_regressor(&train, &cfg).unwrap();
    let bits = |h: &[f64]| h.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    check(a == b && bits(&ha) == bits(&hb), || "training is not bit-deterministic".into())?;
    let pred: Vec<f64> = test.iter().map(|(f, _)| predict(&a, f).unwrap()).collect();
    let truth: Vec<f64> = test.iter().map(|(_, d)| *d).collect();
    let m = mae(&pred, &truth).unwrap();
    check(m <= 0.05, || format!("held-out MAE {m}"))?;
    Ok(format!("max gradient error {worst:.2e}; deterministic; held-out MAE {m:.4} after {} epochs", cfg.epochs))
}

fn voxelwise_sums() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let shape = GridShape::cube(32).unwrap();
    let mut worst = 0.0f64;
    for scale in [1.0, 1e3, 1e6] {
        let v = ScalarVolume::new(shape, (0..32768).map(|_| rng.gen_range(0.0..scale)).collect()).unwrap();
        let mut seq = 0.0;
        for x in v.data() {
            seq += x;
        }
        let rel = (voxelwise_sum(&v) - seq).abs() / seq.abs();
        check(rel <= 1e-9, || format!("relative deviation {rel:e}"))?;
        worst = worst.max(rel);
    }
    let a = ScalarVolume::new(shape, (0..32768).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let b = ScalarVolume::new(shape, (0..32768).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let ab = error_map(&a, &b).unwrap();
    let ba = error_map(&b, &a).unwrap();
    let exact = ab.as_volume().data().iter().zip(ba.as_volume().data()).all(|(x, y)| *x == -*y);
    check(exact, || "error map is not antisymmetric".into())?;
    Ok(format!("max relative deviation {worst:.2e}; antisymmetry exact"))
}

fn oracle_gate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params = GateParams::new(ScoreKind::PredictedDice, 0.75, FlagWhen::Below);
    let mut proper = 0;
    for k in 0..1000 {
        let cases: Vec<CaseRecord> = (0..21)
            .map(|i| {
                let d: f64 = rng.gen_range(0.0..1.0);
                let mut c = CaseRecord::new(format!("c{i:02}"));
                c.true_dice = Some(d);
                c.predicted_dice = Some(d);
                c
            })
            .collect();
        let s = evaluate_gate(&cases, &params).unwrap().cohort;
        check(s.precision == Some(1.0) && s.recall == Some(1.0), || {
            format!("cohort {k}: precision {:?} recall {:?}", s.precision, s.recall)
        })?;
        if s.n_flagged > 0 && s.n_flagged < s.n_total {
            proper += 1;
            let after = s.mean_dice_after.unwrap();
            check(after >= s.mean_dice_before, || format!("cohort {k}: mean fell to {after}"))?;
        }
    }
    Ok(format!("1000 cohorts of 21; {proper} with a proper nonempty flagged set"))
}

fn segqc(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_segqc"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("segqc {}: {}", args[0], String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Midpoint threshold between sorted scores that best separates true
/// failures (flag below), by F1.
fn scatter_threshold(cases: &[CaseRecord]) -> f64 {
    let mut pts: Vec<(f64, bool)> = cases
        .iter()
        .map(|c| (c.uncertainty_vs.unwrap(), c.true_dice.unwrap() < 0.75))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let fails = pts.iter().filter(|p| p.1).count();
    let mut best = (f64::MIN, pts[0].0);
    let mut tp = 0;
    for i in 0..pts.len() - 1 {
        if pts[i].1 {
            tp += 1;
        }
        let flagged = i + 1;
        let f1 = 2.0 * tp as f64 / (flagged + fails) as f64;
        if f1 > best.0 && pts[i].0 < pts[i + 1].0 {
            best = (f1, (pts[i].0 + pts[i + 1].0) / 2.0);
        }
    }
    best.1
}

fn end_to_end() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let base = root.path().join(format!("seed{seed}"));
        let (cohort, scores, gated) = (base.join("cohort"), base.join("scores"), base.join("gate"));
        let seed_s = seed.to_string();
        segqc(&["synth", "--cases", "40", "--levels", "5", "--grid", "32", "--samples", "20", "--seed", &seed_s, "--out", &s(&cohort)])?;
        segqc(&["score", "--manifest", &s(&cohort.join("manifest.csv")), "--out", &s(&scores)])?;
        let cases = load_cases(scores.join("cases.csv")).map_err(|e| e.to_string())?;
        let t = scatter_threshold(&cases);
        segqc(&[
            "gate", "--cases", &s(&scores.join("cases.csv")), "--score", "uncertainty_vs", "--threshold", &t.to_string(),
            "--flag", "below", "--out", &s(&gated),
        ])?;
        let report = GateReport::from_json(&std::fs::read_to_string(gated.join("report.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let r = report.cohort.pearson_r.ok_or("correlation undefined")?;
        // the generator ties high uncertainty to intact lesion borders: r > 0
        check(r >= 0.5, || format!("seed {seed}: r = {r:.3}"))?;

        let manifest = CohortManifest::read(cohort.join("manifest.csv")).map_err(|e| e.to_string())?;
        let planted: BTreeSet<&str> = manifest.rows.iter().filter(|m| m.q == 1.0).map(|m| m.id.as_str()).collect();
        let flagged: BTreeSet<&str> = report.flagged_ids.iter().map(String::as_str).collect();
        let recall = planted.intersection(&flagged).count() as f64 / planted.len() as f64;
        check(recall >= 0.8, || format!("seed {seed}: planted-failure recall {recall:.3} at threshold {t:.1}"))?;
        lines.push(format!("seed {seed}: r={r:.3} t={t:.0} recall={recall:.2}"));
    }
    Ok(lines.join("; "))
}

fn nifti() -> Outcome {
    let mut b = vec![0u8; 352];
    b[0..4].copy_from_slice(&348i32.to_le_bytes());
    for (i, d) in [3i16, 2, 2, 2, 1, 1, 1, 1].iter().enumerate() {
        b[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
    }
    b[70..72].copy_from_slice(&16i16.to_le_bytes());
    b[72..74].copy_from_slice(&32i16.to_le_bytes());
    for i in 0..4 {
        b[76 + 4 * i..80 + 4 * i].copy_from_slice(&1f32.to_le_bytes());
    }
    b[108..112].copy_from_slice(&352f32.to_le_bytes());
    b[344..348].copy_from_slice(b"n+1\0");
    for v in 0..8 {
        b.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let fixture = read_nifti(&b).map_err(|e| e.to_string())?;
    check(fixture.data() == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], || format!("fixture {:?}", fixture.data()))?;

    let shape = GridShape::new(5, 4, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for dt in [DataType::U8, DataType::I16, DataType::F32, DataType::F64] {
        let values: Vec<f64> = (0..60)
            .map(|_| match dt {
                DataType::U8 => rng.gen_range(0..=255u8) as f64,
                DataType::I16 => rng.gen::<i16>() as f64,
                DataType::F32 => f64::from(rng.gen::<f32>() * 100.0),
                DataType::F64 => rng.gen_range(-1e6..1e6),
            })
            .collect();
        let vol = ScalarVolume::new(shape, values).unwrap();
        for endian in [Endian::Little, Endian::Big] {
            let enc = Encoding::with_endian(dt, endian);
            let bytes = write_nifti(&vol, enc).map_err(|e| e.to_string())?;
            let back = read_nifti(&bytes).map_err(|e| e.to_string())?;
            let again = write_nifti(&back, enc).map_err(|e| e.to_string())?;
            let bits_equal = back.data().iter().zip(vol.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            check(bits_equal && again[NIFTI_VOX_OFFSET..] == bytes[NIFTI_VOX_OFFSET..], || {
                format!("{dt:?} {endian:?} payload differs")
            })?;
        }
    }
    Ok("fixture parses; 4 datatypes x 2 byte orders round-trip bit-exactly".into())
}

fn report_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut n = 0;
    for trial in 0..300 {
        let folds = [0u32, 5][trial % 2];
        let size = rng.gen_range(3..42);
        let cases = common::random_cohort(&mut rng, size, folds);
        let score = [ScoreKind::UncertaintyVs, ScoreKind::ErrorVs, ScoreKind::PredictedDice][trial % 3];
        let threshold = match score {
            ScoreKind::UncertaintyVs => rng.gen_range(0.0..2000.0),
            ScoreKind::ErrorVs => rng.gen_range(-2e5..0.0),
            ScoreKind::PredictedDice => rng.gen_range(0.0..1.0),
        };
        let params = GateParams {
            positive: if trial % 4 == 0 { Positive::Pass } else { Positive::Fail },
            ..GateParams::new(score, threshold, if trial % 5 == 0 { FlagWhen::Above } else { FlagWhen::Below })
        };
        let report = evaluate_gate(&cases, &params).map_err(|e| e.to_string())?;
        check(report == common::oracle_report(&cases, &params), || format!("trial {trial}: report differs"))?;
        let text = report.to_text();
        let labels: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .skip(1)
            .map(|l| l[..l.find("  ").unwrap_or(l.len())].trim())
            .collect();
        check(labels == TABLE_ROWS, || format!("trial {trial}: text rows {labels:?}"))?;
        n += 1;
    }
    Ok(format!("{n} reports match the scalar recomputation field by field"))
}

type Criterion = (u32, &'static str, fn() -> Outcome, Duration);

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        (1, "binary entropy", entropy, Duration::from_secs(1)),
        (2, "Dice exhaustive", dice_exhaustive, Duration::from_secs(5)),
        (3, "SSIM", ssim, Duration::MAX),
        (4, "Huber gradient and Adam training", huber_adam, Duration::from_secs(120)),
        (5, "voxel-wise sum", voxelwise_sums, Duration::MAX),
        (6, "oracle gate", oracle_gate, Duration::from_secs(10)),
        (7, "end-to-end synthetic protocol", end_to_end, Duration::from_secs(60)),
        (8, "NIfTI-1 subset", nifti, Duration::MAX),
        (9, "report fidelity", report_fidelity, Duration::MAX),
    ];
    let mut failed = Vec::new();
    for (id, name, f, budget) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(_) if took > budget => Err(format!("took {took:.2?}, budget {budget:.0?}")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("[PASS] {id}. {name} ({took:.2?}): {detail}"),
            Err(why) => {
                println!("[FAIL] {id}. {name} ({took:.2?}): {why}");
                failed.push(id);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
