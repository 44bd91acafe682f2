use serde::Serialize;

use super::EvalError;
use crate::watermark::{Mark, MARK_BITS};

/// Fraction of differing mark bits.
pub fn ebr(original: &Mark, decoded: &Mark) -> f64 {
    crate::bits::hamming(original.bits(), decoded.bits()) as f64 / MARK_BITS as f64
}

/// Genuine and impostor normalised distances.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
}

/// Equal error rate of a distance-based verifier.
///
/// Thresholds sweep the sorted unique scores, preceded by a virtual threshold
/// below every score (FAR 0, FRR 1). With `FAR(t)` the share of impostors
/// `<= t` and `FRR(t)` the share of genuine scores `> t`, the EER is read at
/// the first sweep point where `FAR >= FRR`, interpolating linearly from the
/// previous point when the two are not equal there.
pub fn compute_eer(scores: &ScoreSet) -> Result<EerResult, EvalError> {
    if scores.genuine.is_empty() || scores.impostor.is_empty() {
        return Err(EvalError::EmptyScores);
    }
    let mut genuine = scores.genuine.clone();
    let mut impostor = scores.impostor.clone();
    genuine.sort_by(f64::total_cmp);
    impostor.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = genuine.iter().chain(&impostor).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let (ng, ni) = (genuine.len() as f64, impostor.len() as f64);
    let (mut gi, mut ii) = (0usize, 0usize);
    let mut prev = (thresholds[0], 0.0, 1.0);
    for &t in &thresholds {
        while gi < genuine.len() && genuine[gi] <= t {
            gi += 1;
        }
        while ii < impostor.len() && impostor[ii] <= t {
            ii += 1;
        }
        let far = ii as f64 / ni;
        let frr = (genuine.len() - gi) as f64 / ng;
        if far >= frr {
            return Ok(interpolate(prev, (t, far, frr)));
        }
        prev = (t, far, frr);
    }
    unreachable!("FAR reaches 1 and FRR reaches 0 at the largest score")
}

/// Crossing of FAR and FRR between two sweep points `(t, far, frr)`.
pub(crate) fn interpolate(prev: (f64, f64, f64), cur: (f64, f64, f64)) -> EerResult {
    let (t0, far0, frr0) = prev;
    let (t1, far1, frr1) = cur;
    if far1 == frr1 {
        return EerResult {
            eer: far1,
            threshold: t1,
        };
    }
    let d0 = far0 - frr0;
    let d1 = far1 - frr1;
    let lambda = -d0 / (d1 - d0);
    EerResult {
        eer: far0 + lambda * (far1 - far0),
        threshold: t0 + lambda * (t1 - t0),
    }
}
