use super::GnnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    BceWithLogits,
    L1,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a logit, and its derivative in the logit.
pub fn bce_with_logits(logit: f64, y: f64) -> (f64, f64) {
    let value = logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p();
    (value, sigmoid(logit) - y)
}

/// Absolute error and its subgradient (0 at the kink).
pub fn l1(pred: f64, y: f64) -> (f64, f64) {
    let d = pred - y;
    (d.abs(), if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 })
}

/// Loss value and derivative with respect to the prediction.
pub fn loss(kind: LossKind, pred: f64, y: f64) -> Result<(f64, f64), GnnError> {
    if !pred.is_finite() || !y.is_finite() {
        return Err(GnnError::NonFinite(format!("loss input pred={pred} label={y}")));
    }
    Ok(match kind {
        LossKind::BceWithLogits => bce_with_logits(pred, y),
        LossKind::L1 => l1(pred, y),
    })
}
