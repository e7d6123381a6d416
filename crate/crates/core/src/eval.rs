//! Scoring extracted signatures against ground truth.
//!
//! Truth events are grouped into classes by their transition label; each
//! extracted cycle slot is matched to the nearest truth class of the same
//! direction by mean active power, and signed percent errors are reported
//! per electric attribute. The authentic (anchor) cluster is additionally
//! scored by event-level precision and recall against the logged events of
//! its matched class inside the appliance's search domain.

use serde::{Deserialize, Serialize};

use crate::association::AssociationType;
use crate::meterdata::Direction;
use crate::pipeline::{ApplianceExtraction, SignatureDatabase};
use crate::synthhome::{GroundTruthLog, TruthEvent};

/// A ground-truth event class: all logged events sharing one transition
/// label of one appliance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthClass {
    pub appliance: String,
    pub state: String,
    pub direction: Direction,
    pub mean_p_w: f64,
    pub mean_q_var: f64,
    pub mean_thd_pct: f64,
    pub times: Vec<u64>,
}

/// Builds truth classes for one appliance.
pub fn truth_classes(log: &GroundTruthLog, appliance: &str) -> Vec<TruthClass> {
    let mut classes: Vec<TruthClass> = Vec::new();
    let mut groups: std::collections::BTreeMap<&str, Vec<&TruthEvent>> =
        std::collections::BTreeMap::new();
    for e in log.events.iter().filter(|e| e.appliance == appliance) {
        groups.entry(e.state.as_str()).or_default().push(e);
    }
    for (state, events) in groups {
        let n = events.len() as f64;
        classes.push(TruthClass {
            appliance: appliance.to_string(),
            state: state.to_string(),
            direction: events[0].direction,
            mean_p_w: events.iter().map(|e| e.dp_w).sum::<f64>() / n,
            mean_q_var: events.iter().map(|e| e.dq_var).sum::<f64>() / n,
            mean_thd_pct: events.iter().map(|e| e.thd * 100.0).sum::<f64>() / n,
            times: events.iter().map(|e| e.t).collect(),
        });
    }
    classes
}

/// Signed percent error, `None` when the reference value is zero.
fn percent_error(extracted: f64, truth: f64) -> Option<f64> {
    if truth == 0.0 {
        None
    } else {
        Some(100.0 * (extracted - truth) / truth)
    }
}

/// One extracted class scored against its matched truth class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    pub appliance: String,
    /// Matched truth transition label, or "unmatched".
    pub class_label: String,
    pub direction: Direction,
    pub association: AssociationType,
    pub matched: bool,
    pub truth_p_w: f64,
    pub extracted_p_w: f64,
    pub p_error_pct: Option<f64>,
    pub q_error_pct: Option<f64>,
    pub thd_error_pct: Option<f64>,
    pub truth_q_var: f64,
    pub truth_thd_pct: f64,
}

/// Event-level score of one appliance's authentic cluster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApplianceScore {
    pub appliance: String,
    pub found: bool,
    pub precision: f64,
    pub recall: f64,
    pub authentic_events: usize,
    pub truth_events_in_domain: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub scores: Vec<ApplianceScore>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn rows_for(&self, appliance: &str) -> impl Iterator<Item = &EvalRow> + '_ {
        let name = appliance.to_string();
        self.rows.iter().filter(move |r| r.appliance == name)
    }

    pub fn score_for(&self, appliance: &str) -> Option<&ApplianceScore> {
        self.scores.iter().find(|s| s.appliance == appliance)
    }
}

/// Match tolerance between an extracted event time and a logged event time.
const EVENT_TIME_TOLERANCE_S: u64 = 2;

/// Scores a signature database against a ground-truth log. Classes are
/// matched greedily by ascending |mean-P| distance with direction
/// agreement; an extracted class with no truth candidate left reports as
/// unmatched rather than aborting.
pub fn evaluate(db: &SignatureDatabase, truth: &GroundTruthLog) -> EvalReport {
    let mut rows = Vec::new();
    let mut scores = Vec::new();
    for extraction in &db.appliances {
        if !extraction.found {
            scores.push(ApplianceScore {
                appliance: extraction.appliance.clone(),
                found: false,
                precision: 0.0,
                recall: 0.0,
                authentic_events: 0,
                truth_events_in_domain: 0,
            });
            continue;
        }
        let classes = truth_classes(truth, &extraction.appliance);
        evaluate_appliance(extraction, &classes, &mut rows, &mut scores);
    }
    EvalReport { rows, scores }
}

fn evaluate_appliance(
    extraction: &ApplianceExtraction,
    truth: &[TruthClass],
    rows: &mut Vec<EvalRow>,
    scores: &mut Vec<ApplianceScore>,
) {
    let signature = extraction.signature.as_ref().expect("found => signature");
    // Greedy nearest-P matching, each truth class claimed at most once.
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for (si, slot) in signature.ordered_pattern.iter().enumerate() {
        for (ti, tc) in truth.iter().enumerate() {
            if tc.direction == slot.direction {
                candidates.push((si, ti, (slot.mean_p_w - tc.mean_p_w).abs()));
            }
        }
    }
    candidates.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap());
    let mut slot_match: Vec<Option<usize>> = vec![None; signature.ordered_pattern.len()];
    let mut truth_used = vec![false; truth.len()];
    for (si, ti, _) in candidates {
        if slot_match[si].is_none() && !truth_used[ti] {
            slot_match[si] = Some(ti);
            truth_used[ti] = true;
        }
    }

    for (si, slot) in signature.ordered_pattern.iter().enumerate() {
        match slot_match[si] {
            Some(ti) => {
                let tc = &truth[ti];
                rows.push(EvalRow {
                    appliance: extraction.appliance.clone(),
                    class_label: tc.state.clone(),
                    direction: slot.direction,
                    association: slot.association,
                    matched: true,
                    truth_p_w: tc.mean_p_w,
                    extracted_p_w: slot.mean_p_w,
                    p_error_pct: percent_error(slot.mean_p_w, tc.mean_p_w),
                    q_error_pct: percent_error(slot.mean_q_var, tc.mean_q_var),
                    thd_error_pct: percent_error(slot.mean_thd_pct, tc.mean_thd_pct),
                    truth_q_var: tc.mean_q_var,
                    truth_thd_pct: tc.mean_thd_pct,
                });
            }
            None => rows.push(EvalRow {
                appliance: extraction.appliance.clone(),
                class_label: "unmatched".into(),
                direction: slot.direction,
                association: slot.association,
                matched: false,
                truth_p_w: 0.0,
                extracted_p_w: slot.mean_p_w,
                p_error_pct: None,
                q_error_pct: None,
                thd_error_pct: None,
                truth_q_var: 0.0,
                truth_thd_pct: 0.0,
            }),
        }
    }

    // Precision/recall of the authentic cluster against the anchor slot's
    // matched truth class, restricted to the search domain.
    let anchor_slot = signature
        .ordered_pattern
        .iter()
        .position(|s| s.is_anchor)
        .unwrap_or(0);
    let anchor_truth = slot_match.get(anchor_slot).copied().flatten().map(|ti| &truth[ti]);
    let (precision, recall, in_domain) = match anchor_truth {
        Some(tc) => {
            let in_domain: Vec<u64> = tc
                .times
                .iter()
                .copied()
                .filter(|t| {
                    extraction
                        .search_pieces
                        .iter()
                        .any(|&(s, e)| *t >= s && *t < e)
                })
                .collect();
            let mut truth_hit = vec![false; in_domain.len()];
            let mut matches = 0usize;
            for ev in &extraction.authentic_events {
                if let Some(pos) = in_domain.iter().enumerate().position(|(i, &t)| {
                    !truth_hit[i] && t.abs_diff(ev.t) <= EVENT_TIME_TOLERANCE_S
                }) {
                    truth_hit[pos] = true;
                    matches += 1;
                }
            }
            let precision = if extraction.authentic_events.is_empty() {
                0.0
            } else {
                matches as f64 / extraction.authentic_events.len() as f64
            };
            let recall = if in_domain.is_empty() {
                0.0
            } else {
                matches as f64 / in_domain.len() as f64
            };
            (precision, recall, in_domain.len())
        }
        None => (0.0, 0.0, 0),
    };
    scores.push(ApplianceScore {
        appliance: extraction.appliance.clone(),
        found: true,
        precision,
        recall,
        authentic_events: extraction.authentic_events.len(),
        truth_events_in_domain: in_domain,
    });
}
