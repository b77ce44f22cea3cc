use super::PipelineError;

/// Area under the ROC curve from `(score, label)` pairs, via the
/// average-rank form of the Mann–Whitney statistic. Ties between a positive
/// and a negative count one half.
pub fn auc(predictions: &[(f64, u8)]) -> Result<f64, PipelineError> {
    if predictions.iter().any(|(s, _)| !s.is_finite()) {
        return Err(PipelineError::NonFiniteScore);
    }
    let n_pos = predictions.iter().filter(|(_, y)| *y == 1).count();
    let n_neg = predictions.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(PipelineError::SingleClass);
    }
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| predictions[a].0.total_cmp(&predictions[b].0));
    // Ranks are 1-based; a tie group spanning positions i..j gets (i+j+1)/2.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && predictions[order[j]].0 == predictions[order[i]].0 {
            j += 1;
        }
        let avg_rank = (i + j + 1) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| predictions[k].1 == 1).count();
        rank_sum_pos += avg_rank * pos_in_group as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mean and sample standard deviation (n − 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
