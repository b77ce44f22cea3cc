use super::{NnError, Real};

/// Mean binary cross-entropy on logits, in the overflow-free form
/// `max(z, 0) − z·y + ln(1 + e^(−|z|))`. Returns the loss and `dL/dz`.
pub fn bce_with_logits<T: Real>(logits: &[T], targets: &[T]) -> Result<(T, Vec<T>), NnError> {
    if logits.len() != targets.len() || logits.is_empty() {
        return Err(NnError::ShapeMismatch(format!(
            "{} logits for {} targets",
            logits.len(),
            targets.len()
        )));
    }
    if targets.iter().any(|&y| y != T::zero() && y != T::one()) {
        return Err(NnError::InvalidArgument("targets must be 0 or 1".into()));
    }
    let inv_n = T::one() / T::c(logits.len() as f64);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(targets) {
        loss += z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p();
        grad.push((sigmoid(z) - y) * inv_n);
    }
    Ok((loss * inv_n, grad))
}

/// Logistic function, evaluated on the side that cannot overflow.
pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}
