//! Scalar quality metrics.

use serde::{Deserialize, Serialize};

use crate::volume::{BinaryMask, ScalarVolume};
use crate::{Error, Result};

/// 2|a ∩ b| / (|a| + |b|); two empty masks score 1.
pub fn dice_coefficient(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    crate::volume::ensure_shape(a.shape(), b.shape())?;
    let mut inter = 0usize;
    let mut na = 0usize;
    let mut nb = 0usize;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        na += x as usize;
        nb += y as usize;
        inter += (x && y) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

pub fn dice_loss(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    Ok(1.0 - dice_coefficient(a, b)?)
}

/// Which SSIM formula to evaluate.
///
/// `Literal` uses c1 = 0.01 L, c2 = 0.03 L and a contrast numerator of
/// 2 cov(x, y) + c2. `Standard` is the usual Wang et al. form with squared
/// constants and a 2 sigma_x sigma_y contrast numerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SsimVariant {
    #[default]
    Literal,
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimComponents {
    pub luminance: f64,
    pub contrast: f64,
    pub structure: f64,
    pub ssim: f64,
    pub ssim_loss: f64,
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    mean_x: f64,
    mean_y: f64,
    var_x: f64,
    var_y: f64,
    cov: f64,
}

/// Population moments over all voxels (two-pass).
fn moments(x: &[f64], y: &[f64]) -> Moments {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    Moments {
        mean_x,
        mean_y,
        var_x: sxx / n,
        var_y: syy / n,
        cov: sxy / n,
    }
}

/// Global (unwindowed) SSIM between two volumes with dynamic range `range`.
pub fn ssim_components(
    x: &ScalarVolume,
    y: &ScalarVolume,
    range: f64,
    variant: SsimVariant,
) -> Result<SsimComponents> {
    x.ensure_same_shape(y.shape())?;
    if !(range > 0.0) {
        return Err(Error::InvalidArgument(format!("dynamic range must be > 0, got {range}")));
    }
    let m = moments(x.data(), y.data());
    let (c1, c2) = match variant {
        SsimVariant::Literal => (0.01 * range, 0.03 * range),
        SsimVariant::Standard => ((0.01 * range).powi(2), (0.03 * range).powi(2)),
    };
    let c3 = c2 / 2.0;
    let (sx, sy) = (m.var_x.sqrt(), m.var_y.sqrt());

    let luminance = (2.0 * m.mean_x * m.mean_y + c1) / (m.mean_x * m.mean_x + m.mean_y * m.mean_y + c1);
    let contrast_num = match variant {
        SsimVariant::Literal => 2.0 * m.cov + c2,
        SsimVariant::Standard => 2.0 * sx * sy + c2,
    };
    let contrast = contrast_num / (m.var_x + m.var_y + c2);
    let structure = (m.cov + c3) / (sx * sy + c3);
    let ssim = luminance * contrast * structure;
    Ok(SsimComponents {
        luminance,
        contrast,
        structure,
        ssim,
        ssim_loss: 1.0 - ssim,
    })
}

/// Product-moment correlation. Needs at least 3 pairs and nonzero variance on both sides.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::Degenerate(format!(
            "correlation needs at least 3 pairs, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance in correlation input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Mean absolute error.
pub fn mae(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.is_empty() {
        return Err(Error::Degenerate("MAE of an empty sequence".into()));
    }
    let total: f64 = xs.iter().zip(ys).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / xs.len() as f64)
}

/// Which label counts as a positive for precision/recall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Positive {
    #[default]
    Fail,
    Pass,
}

impl std::str::FromStr for Positive {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fail" => Ok(Positive::Fail),
            "pass" => Ok(Positive::Pass),
            other => Err(Error::InvalidArgument(format!("unknown positive class {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// TP / (TP + FP); `None` when nothing was predicted positive.
    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// TP / (TP + FN); `None` when there are no actual positives.
    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub counts: ConfusionCounts,
}

/// Precision and recall of failure predictions against true failure labels.
pub fn precision_recall(
    predicted_fail: &[bool],
    true_fail: &[bool],
    positive: Positive,
) -> Result<PrecisionRecall> {
    if predicted_fail.len() != true_fail.len() {
        return Err(Error::LengthMismatch {
            expected: true_fail.len(),
            found: predicted_fail.len(),
        });
    }
    if true_fail.is_empty() {
        return Err(Error::Degenerate("precision/recall of zero cases".into()));
    }
    let mut counts = ConfusionCounts::default();
    for (&p, &t) in predicted_fail.iter().zip(true_fail) {
        let (p, t) = match positive {
            Positive::Fail => (p, t),
            Positive::Pass => (!p, !t),
        };
        match (p, t) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, true) => counts.fn_ += 1,
            (false, false) => counts.tn += 1,
        }
    }
    Ok(PrecisionRecall {
        precision: counts.precision(),
        recall: counts.recall(),
        counts,
    })
}
