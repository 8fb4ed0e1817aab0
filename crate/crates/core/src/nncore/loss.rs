/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a clamped probability.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// `bce(sigmoid(z), y)` and its derivative with respect to the logit `z`.
///
/// Inside the clamp band the derivative is the familiar `p - y`; once the
/// probability saturates the clamped loss is flat and the derivative is 0.
pub fn bce_with_logit(z: f64, y: f64) -> (f64, f64) {
    let p = sigmoid(z);
    let grad = if p <= PROB_EPS || p >= 1.0 - PROB_EPS { 0.0 } else { p - y };
    (bce(p, y), grad)
}
