//! Message periods from an untimed log, using one id with a known period
//! as a clock.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use super::LogRecord;

/// Periods an estimate may snap to.
pub const SNAP_PERIODS_MS: [f64; 6] = [10.0, 100.0, 200.0, 1000.0, 4000.0, 5000.0];

/// Relative distance within which an estimate snaps.
pub const SNAP_TOLERANCE: f64 = 0.25;

/// Relative band used for the confidence figure.
const CONFIDENCE_BAND: f64 = 0.20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InferError {
    #[error("reference id 0x{0:03X} does not occur in the log")]
    NoReference(u32),
    #[error("reference id 0x{0:03X} occurs only once")]
    SingleReference(u32),
    #[error("reference period must be positive")]
    BadReference,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodEstimate {
    #[serde(with = "crate::hex::id")]
    pub id: u32,
    /// `None` for an id seen once.
    pub period_ms: Option<f64>,
    /// Median of the synthetic deltas, before snapping.
    pub raw_ms: Option<f64>,
    pub snapped: bool,
    pub samples: usize,
    /// Fraction of deltas within 20% of `period_ms`.
    pub confidence: f64,
}

impl PeriodEstimate {
    pub fn is_one_shot(&self) -> bool {
        self.period_ms.is_none()
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn snap(raw: f64) -> Option<f64> {
    SNAP_PERIODS_MS
        .iter()
        .copied()
        .filter(|p| (raw - p).abs() <= SNAP_TOLERANCE * p)
        .min_by(|a, b| ((raw - a).abs() / a).total_cmp(&((raw - b).abs() / b)))
}

/// Assigns synthetic times (the k-th `ref_id` frame at k × `ref_period_ms`,
/// frames between two anchors spread evenly) and estimates each id's period
/// as the median of its successive deltas. Frames before the first or after
/// the last anchor count as samples but get no time. Timestamps in the
/// input are ignored.
pub fn infer_periods(records: &[LogRecord], ref_id: u32, ref_period_ms: f64) -> Result<Vec<PeriodEstimate>, InferError> {
    if !(ref_period_ms.is_finite() && ref_period_ms > 0.0) {
        return Err(InferError::BadReference);
    }
    let anchors: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.frame.id() == ref_id)
        .map(|(i, _)| i)
        .collect();
    match anchors.len() {
        0 => return Err(InferError::NoReference(ref_id)),
        1 => return Err(InferError::SingleReference(ref_id)),
        _ => {}
    }

    let mut times: Vec<Option<f64>> = vec![None; records.len()];
    for (k, pair) in anchors.windows(2).enumerate() {
        let (a, b) = (pair[0], pair[1]);
        let step = ref_period_ms / (b - a) as f64;
        for (j, slot) in times[a..b].iter_mut().enumerate() {
            *slot = Some(k as f64 * ref_period_ms + j as f64 * step);
        }
    }
    let last = *anchors.last().unwrap();
    times[last] = Some((anchors.len() - 1) as f64 * ref_period_ms);

    let mut per_id: BTreeMap<u32, (usize, Vec<f64>)> = BTreeMap::new();
    for (r, t) in records.iter().zip(&times) {
        let entry = per_id.entry(r.frame.id()).or_default();
        entry.0 += 1;
        if let Some(t) = t {
            entry.1.push(*t);
        }
    }

    Ok(per_id
        .into_iter()
        .map(|(id, (samples, stamps))| {
            let mut deltas: Vec<f64> = stamps.windows(2).map(|w| w[1] - w[0]).collect();
            if samples < 2 || deltas.is_empty() {
                return PeriodEstimate {
                    id,
                    period_ms: None,
                    raw_ms: None,
                    snapped: false,
                    samples,
                    confidence: 0.0,
                };
            }
            let raw = median(&mut deltas);
            let snapped = snap(raw);
            let period = snapped.unwrap_or(raw);
            let close = deltas
                .iter()
                .filter(|d| (*d - period).abs() <= CONFIDENCE_BAND * period)
                .count();
            PeriodEstimate {
                id,
                period_ms: Some(period),
                raw_ms: Some(raw),
                snapped: snapped.is_some(),
                samples,
                confidence: close as f64 / deltas.len() as f64,
            }
        })
        .collect())
}
