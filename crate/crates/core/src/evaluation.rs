//! Event-based macro F-score with onset/offset collars.
//!
//! An estimated event matches a reference of the same class when its onset is
//! within 200 ms of the reference onset and its offset within
//! max(200 ms, 20% of the reference length) of the reference offset. Matching
//! is one-to-one and greedy in onset order; counts pool over the whole
//! dataset before per-class F-scores and the macro average.

use crate::error::{Result, SedError};
use crate::postprocess::{Event, EventList};
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy)]
pub struct MatchConfig {
    pub onset_collar: f64,
    pub offset_collar_abs: f64,
    pub offset_collar_ratio: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            onset_collar: 0.200,
            offset_collar_abs: 0.200,
            offset_collar_ratio: 0.20,
        }
    }
}

/// Per-class contingency counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ClassCounts {
    pub fn merge(&mut self, other: &ClassCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Collar test for a same-class event pair. Collar bounds are closed.
pub fn events_match(reference: &Event, estimate: &Event, cfg: &MatchConfig) -> bool {
    debug_assert_eq!(reference.class, estimate.class);
    let onset_ok = (estimate.onset - reference.onset).abs() <= cfg.onset_collar;
    let length = reference.offset - reference.onset;
    let offset_collar = cfg
        .offset_collar_abs
        .max(cfg.offset_collar_ratio * length);
    let offset_ok = (estimate.offset - reference.offset).abs() <= offset_collar;
    onset_ok && offset_ok
}

fn validate_events(events: &EventList) -> Result<()> {
    for e in events {
        if !(e.onset < e.offset) || !e.onset.is_finite() || !e.offset.is_finite() {
            return Err(SedError::InvalidInput(format!(
                "malformed event: class {} onset {} offset {}",
                e.class, e.onset, e.offset
            )));
        }
    }
    Ok(())
}

/// One-to-one greedy matching per class for a single clip: references in
/// onset order each take the earliest-onset unmatched estimate that passes
/// the collar test.
pub fn match_events(
    reference: &EventList,
    estimate: &EventList,
    cfg: &MatchConfig,
) -> Result<BTreeMap<usize, ClassCounts>> {
    validate_events(reference)?;
    validate_events(estimate)?;
    let mut counts: BTreeMap<usize, ClassCounts> = BTreeMap::new();
    let mut classes: Vec<usize> = reference
        .iter()
        .chain(estimate.iter())
        .map(|e| e.class)
        .collect();
    classes.sort_unstable();
    classes.dedup();

    for class in classes {
        let mut refs: Vec<&Event> = reference.iter().filter(|e| e.class == class).collect();
        let mut ests: Vec<&Event> = estimate.iter().filter(|e| e.class == class).collect();
        refs.sort_by(|a, b| a.onset.partial_cmp(&b.onset).expect("finite onsets"));
        ests.sort_by(|a, b| a.onset.partial_cmp(&b.onset).expect("finite onsets"));
        let mut est_used = vec![false; ests.len()];
        let mut tp = 0usize;
        for r in &refs {
            for (j, e) in ests.iter().enumerate() {
                if !est_used[j] && events_match(r, e, cfg) {
                    est_used[j] = true;
                    tp += 1;
                    break;
                }
            }
        }
        counts.insert(
            class,
            ClassCounts {
                tp,
                fp: ests.len() - tp,
                fn_: refs.len() - tp,
            },
        );
    }
    Ok(counts)
}

/// F = 2tp / (2tp + fp + fn); zero when the denominator is zero.
pub fn f_score(c: &ClassCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * c.tp as f64 / denom as f64
    }
}

pub fn precision(c: &ClassCounts) -> f64 {
    if c.tp + c.fp == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fp) as f64
    }
}

pub fn recall(c: &ClassCounts) -> f64 {
    if c.tp + c.fn_ == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fn_) as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassReport {
    pub class: usize,
    pub counts: ClassCounts,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub per_class: Vec<ClassReport>,
    pub macro_f: f64,
}

/// Pool counts over all clips, then macro-average per-class F over the
/// classes that appear in references or estimates.
pub fn macro_f_score(
    pairs: &[(EventList, EventList)],
    cfg: &MatchConfig,
) -> Result<EvaluationReport> {
    let mut pooled: BTreeMap<usize, ClassCounts> = BTreeMap::new();
    for (reference, estimate) in pairs {
        for (class, counts) in match_events(reference, estimate, cfg)? {
            pooled.entry(class).or_default().merge(&counts);
        }
    }
    let per_class: Vec<ClassReport> = pooled
        .iter()
        .filter(|(_, c)| c.tp + c.fp + c.fn_ > 0)
        .map(|(&class, c)| ClassReport {
            class,
            counts: *c,
            precision: precision(c),
            recall: recall(c),
            f_score: f_score(c),
        })
        .collect();
    let macro_f = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().map(|r| r.f_score).sum::<f64>() / per_class.len() as f64
    };
    Ok(EvaluationReport {
        per_class,
        macro_f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(class: usize, onset: f64, offset: f64) -> Event {
        Event {
            class,
            onset,
            offset,
        }
    }

    #[test]
    fn onset_collar_boundaries() {
        let cfg = MatchConfig::default();
        let r = ev(0, 1.0, 3.0);
        assert!(events_match(&r, &ev(0, 1.19, 3.0), &cfg));
        assert!(events_match(&r, &ev(0, 1.20, 3.0), &cfg));
        assert!(!events_match(&r, &ev(0, 1.25, 3.0), &cfg));
    }

    #[test]
    fn offset_collar_scales_with_length() {
        let cfg = MatchConfig::default();
        // 2 s reference: collar max(0.2, 0.4) = 0.4.
        let r = ev(1, 0.0, 2.0);
        assert!(events_match(&r, &ev(1, 0.0, 2.35), &cfg));
        assert!(events_match(&r, &ev(1, 0.0, 2.40), &cfg));
        assert!(!events_match(&r, &ev(1, 0.0, 2.45), &cfg));
        // Short reference: absolute collar dominates.
        let s = ev(1, 0.0, 0.5);
        assert!(events_match(&s, &ev(1, 0.0, 0.69), &cfg));
        assert!(!events_match(&s, &ev(1, 0.0, 0.75), &cfg));
    }

    #[test]
    fn identical_lists_are_all_true_positives() {
        let cfg = MatchConfig::default();
        let list = vec![ev(0, 0.5, 1.5), ev(0, 3.0, 4.0), ev(2, 2.0, 6.0)];
        let counts = match_events(&list, &list.clone(), &cfg).unwrap();
        assert_eq!(counts[&0], ClassCounts { tp: 2, fp: 0, fn_: 0 });
        assert_eq!(counts[&2], ClassCounts { tp: 1, fp: 0, fn_: 0 });
    }

    #[test]
    fn empty_estimate_counts_misses() {
        let cfg = MatchConfig::default();
        let reference = vec![ev(1, 0.5, 1.5), ev(1, 3.0, 4.0)];
        let counts = match_events(&reference, &vec![], &cfg).unwrap();
        assert_eq!(counts[&1], ClassCounts { tp: 0, fp: 0, fn_: 2 });
    }

    #[test]
    fn malformed_event_rejected() {
        let cfg = MatchConfig::default();
        let bad = vec![ev(0, 3.0, 2.0)];
        assert!(match_events(&bad, &vec![], &cfg).is_err());
    }

    #[test]
    fn f_score_arithmetic() {
        assert_eq!(f_score(&ClassCounts { tp: 5, fp: 0, fn_: 0 }), 1.0);
        assert_eq!(f_score(&ClassCounts { tp: 0, fp: 3, fn_: 2 }), 0.0);
        let f = f_score(&ClassCounts { tp: 3, fp: 1, fn_: 2 });
        assert!((f - 6.0 / 9.0).abs() < 1e-12);
        assert_eq!(f_score(&ClassCounts::default()), 0.0);
    }

    #[test]
    fn macro_fixture() {
        let cfg = MatchConfig::default();
        // Class 0: one hit, one miss (F = 2/3). Class 1: two exact hits (F = 1).
        let pairs = vec![
            (
                vec![ev(0, 1.0, 2.0), ev(0, 5.0, 6.0), ev(1, 3.0, 4.0)],
                vec![ev(0, 1.05, 2.05), ev(1, 3.0, 4.0)],
            ),
            (vec![ev(1, 0.0, 2.0)], vec![ev(1, 0.1, 2.1)]),
        ];
        let report = macro_f_score(&pairs, &cfg).unwrap();
        assert!((report.macro_f - (2.0 / 3.0 + 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let cfg = MatchConfig::default();
        let pairs: Vec<(EventList, EventList)> = (0..5)
            .map(|i| {
                let list = vec![ev(i % 3, 0.5 + i as f64, 1.5 + i as f64)];
                (list.clone(), list)
            })
            .collect();
        assert_eq!(macro_f_score(&pairs, &cfg).unwrap().macro_f, 1.0);
    }

    #[test]
    fn no_predictions_score_zero() {
        let cfg = MatchConfig::default();
        let pairs = vec![(vec![ev(0, 1.0, 2.0)], vec![]), (vec![ev(4, 0.0, 3.0)], vec![])];
        assert_eq!(macro_f_score(&pairs, &cfg).unwrap().macro_f, 0.0);
    }

    #[test]
    fn shuffling_clips_and_events_does_not_change_score() {
        let cfg = MatchConfig::default();
        let mut pairs = vec![
            (
                vec![ev(0, 1.0, 2.0), ev(1, 4.0, 5.0)],
                vec![ev(1, 4.1, 5.1), ev(0, 0.9, 1.9), ev(0, 7.0, 8.0)],
            ),
            (vec![ev(2, 0.0, 9.0)], vec![ev(2, 0.1, 8.9)]),
        ];
        let a = macro_f_score(&pairs, &cfg).unwrap();
        pairs.reverse();
        for (r, e) in pairs.iter_mut() {
            r.reverse();
            e.reverse();
        }
        let b = macro_f_score(&pairs, &cfg).unwrap();
        assert_eq!(a.macro_f, b.macro_f);
    }

    #[test]
    fn adding_a_matchable_estimate_never_hurts() {
        let cfg = MatchConfig::default();
        let reference = vec![ev(0, 1.0, 2.0), ev(0, 5.0, 6.0)];
        let estimate = vec![ev(0, 1.02, 2.02)];
        let before = match_events(&reference, &estimate, &cfg).unwrap()[&0];
        let mut more = estimate.clone();
        more.push(ev(0, 5.01, 6.01));
        let after = match_events(&reference, &more, &cfg).unwrap()[&0];
        assert!(f_score(&after) >= f_score(&before));
        assert_eq!(after.tp, 2);
    }
}
