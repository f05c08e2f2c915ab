use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K x K` table of (gold, predicted) counts, row-major by gold class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    k: usize,
    table: Vec<u64>,
}

impl ConfusionCounts {
    pub fn new(k: usize) -> Self {
        ConfusionCounts {
            k,
            table: vec![0; k * k],
        }
    }

    /// Builds a table from a row-major `k x k` slice.
    pub fn from_table(k: usize, table: Vec<u64>) -> Result<Self> {
        if table.len() != k * k {
            return Err(Error::Shape(format!("{} entries for a {k}x{k} table", table.len())));
        }
        Ok(ConfusionCounts { k, table })
    }

    pub fn from_predictions(gold: &[usize], pred: &[usize], k: usize) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::Shape(format!("{} gold labels, {} predictions", gold.len(), pred.len())));
        }
        let mut c = ConfusionCounts::new(k);
        for (&g, &p) in gold.iter().zip(pred) {
            if g >= k || p >= k {
                return Err(Error::Validation(format!("label ({g}, {p}) outside {k} classes")));
            }
            c.add(g, p);
        }
        Ok(c)
    }

    pub fn add(&mut self, gold: usize, pred: usize) {
        self.table[gold * self.k + pred] += 1;
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.table[gold * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.table.iter().sum()
    }
}

/// Multiclass Matthews correlation (the R_K covariance form):
///
/// `(c*s - sum_k p_k t_k) / sqrt((s^2 - sum_k p_k^2) (s^2 - sum_k t_k^2))`
///
/// with `c` the trace, `s` the total, `p_k` predicted and `t_k` gold
/// marginals. Zero when either marginal is concentrated on a single class.
pub fn mcc(counts: &ConfusionCounts) -> Result<f64> {
    let k = counts.k;
    let s = counts.total();
    if k == 0 || s == 0 {
        return Err(Error::Validation("MCC of an empty confusion table".into()));
    }
    let mut c = 0u64;
    let mut t = vec![0u64; k];
    let mut p = vec![0u64; k];
    for g in 0..k {
        for q in 0..k {
            let n = counts.get(g, q);
            t[g] += n;
            p[q] += n;
            if g == q {
                c += n;
            }
        }
    }
    let s = s as f64;
    let pt: f64 = p.iter().zip(&t).map(|(&a, &b)| a as f64 * b as f64).sum();
    let pp: f64 = p.iter().map(|&a| a as f64 * a as f64).sum();
    let tt: f64 = t.iter().map(|&a| a as f64 * a as f64).sum();
    let den_p = s * s - pp;
    let den_t = s * s - tt;
    if den_p <= 0.0 || den_t <= 0.0 {
        return Ok(0.0);
    }
    // Equal marginal terms (always the case on the diagonal) divide exactly.
    let den = if den_p == den_t { den_p } else { (den_p * den_t).sqrt() };
    Ok((c as f64 * s - pt) / den)
}

/// MCC of predictions against gold labels over `k` classes.
pub fn mcc_of(gold: &[usize], pred: &[usize], k: usize) -> Result<f64> {
    mcc(&ConfusionCounts::from_predictions(gold, pred, k)?)
}
