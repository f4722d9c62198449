//! AUROC via the Mann-Whitney statistic: `P(s_id > s_ood) + 0.5 P(=)`,
//! computed by rank summation with average ranks over ties. ID is the
//! positive class and is expected to score higher under every score kind.

use crate::error::{Error, Result};

pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    if id_scores.is_empty() || ood_scores.is_empty() {
        return Err(Error::input("auroc needs non-empty score sets".to_string()));
    }
    let n_id = id_scores.len();
    let mut all: Vec<(f64, bool)> = Vec::with_capacity(n_id + ood_scores.len());
    all.extend(id_scores.iter().map(|&s| (s, true)));
    all.extend(ood_scores.iter().map(|&s| (s, false)));
    if all.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::input("auroc scores contain NaN".to_string()));
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("NaN filtered above"));

    // Average rank per tie group, 1-indexed.
    let mut rank_sum_id = 0.0f64;
    let n = all.len();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && all[j].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + j + 1) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                rank_sum_id += avg_rank;
            }
        }
        i = j;
    }

    let n_id = n_id as f64;
    let n_ood = ood_scores.len() as f64;
    let u = rank_sum_id - n_id * (n_id + 1.0) / 2.0;
    Ok(u / (n_id * n_ood))
}
