//! Quadratic-time AUC: the fraction of positive/negative pairs ordered
//! correctly, ties counting one half.

pub fn auc_pairwise(pairs: &[(f64, u8)]) -> f64 {
    let pos: Vec<f64> = pairs.iter().filter(|p| p.1 == 1).map(|p| p.0).collect();
    let neg: Vec<f64> = pairs.iter().filter(|p| p.1 == 0).map(|p| p.0).collect();
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}
