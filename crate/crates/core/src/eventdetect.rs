//! Edge detection over per-phase power series.
//!
//! An edge is noticed when one second's power level jumps by at least the
//! minimum edge size. Its delta-signature is the difference of steady-state
//! means taken before the edge and after a short transient-skip, so inrush
//! transients and appliance noise do not leak into the reported dP/dQ. The
//! skip also anchors spike detection: an ON event whose transient peak rises
//! well above the settled step is flagged as carrying an inrush spike.
//!
//! Boundaries that move opposite to a just-detected edge within its settling
//! window are treated as transient relaxation and do not spawn events;
//! same-direction jumps do, so near-simultaneous switch-ons of two
//! appliances stay visible (and are flagged corrupted downstream).

use crate::error::EventDetectError;
use crate::meterdata::{Direction, LoadEvent, MeterRecording, PhaseSeries, PhaseTag, PowerSample};

/// How an event's THD is derived from the aggregate series.
///
/// `Differential` subtracts the pre-edge harmonic content from the post-edge
/// content (both scaled by fundamental volt-amperes), yielding the switched
/// load's own distortion. `PostEvent` reports the post-edge aggregate THD
/// as-is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EventThdMode {
    Differential,
    PostEvent,
}

/// Tunables of the edge detector. None of these are dictated by theory;
/// they are surfaced here so synthetic ground truth can pin behavior.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EdgeDetectParams {
    /// Minimum |dP| for an event, in watts.
    pub min_edge_w: f64,
    /// Samples averaged before the edge.
    pub pre_window_s: u64,
    /// Samples averaged after the transient skip.
    pub settle_window_s: u64,
    /// Seconds skipped after the edge before the settle window starts.
    pub transient_skip_s: u64,
    /// Spike iff (transient peak - pre level) >= spike_ratio * |dP|.
    pub spike_ratio: f64,
    /// Max timestamp distance for merging an A/B pair into one AB event.
    pub phase_pair_tolerance_s: u64,
    pub thd_mode: EventThdMode,
}

impl Default for EdgeDetectParams {
    fn default() -> Self {
        Self {
            min_edge_w: 50.0,
            pre_window_s: 3,
            settle_window_s: 3,
            transient_skip_s: 3,
            spike_ratio: 1.5,
            phase_pair_tolerance_s: 1,
            thd_mode: EventThdMode::Differential,
        }
    }
}

impl EdgeDetectParams {
    pub fn validate(&self) -> Result<(), EventDetectError> {
        if !(self.min_edge_w > 0.0) {
            return Err(EventDetectError::InvalidParams(format!(
                "min_edge_w {} must be positive",
                self.min_edge_w
            )));
        }
        if self.settle_window_s < 1 || self.pre_window_s < 1 {
            return Err(EventDetectError::InvalidParams(
                "pre and settle windows must be at least 1 s".into(),
            ));
        }
        if !(self.spike_ratio > 1.0) {
            return Err(EventDetectError::InvalidParams(format!(
                "spike_ratio {} must exceed 1",
                self.spike_ratio
            )));
        }
        Ok(())
    }

    /// Minimum recording span that can host one measurable event.
    pub fn required_span_s(&self) -> u64 {
        self.pre_window_s + self.transient_skip_s + self.settle_window_s + 1
    }
}

/// Detects events on both phases of a recording. Events are returned sorted
/// by (timestamp, phase) with single-phase tags; run [`pair_double_phase`]
/// afterwards to merge simultaneous A/B pairs.
pub fn detect_events(
    rec: &MeterRecording,
    params: &EdgeDetectParams,
) -> Result<Vec<LoadEvent>, EventDetectError> {
    params.validate()?;
    if rec.span_s() < params.required_span_s() {
        return Err(EventDetectError::RecordingTooShort {
            span: rec.span_s(),
            need: params.required_span_s(),
        });
    }
    let mut events = detect_phase(&rec.phase_a, PhaseTag::A, params);
    events.extend(detect_phase(&rec.phase_b, PhaseTag::B, params));
    events.sort_by_key(|e| (e.timestamp, e.phase_tag == PhaseTag::B));
    Ok(events)
}

/// Splits a combined single-phase event list back into per-phase lists.
pub fn split_by_phase(events: &[LoadEvent]) -> (Vec<LoadEvent>, Vec<LoadEvent>) {
    let a = events
        .iter()
        .filter(|e| e.phase_tag == PhaseTag::A)
        .cloned()
        .collect();
    let b = events
        .iter()
        .filter(|e| e.phase_tag == PhaseTag::B)
        .cloned()
        .collect();
    (a, b)
}

fn detect_phase(series: &PhaseSeries, tag: PhaseTag, params: &EdgeDetectParams) -> Vec<LoadEvent> {
    let mut events = Vec::new();
    for run in contiguous_runs(&series.samples) {
        detect_run(run, tag, params, &mut events);
    }
    events
}

/// Maximal slices of consecutive-timestamp samples (events never straddle
/// gaps).
fn contiguous_runs(samples: &[PowerSample]) -> Vec<&[PowerSample]> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..samples.len() {
        if samples[i].timestamp != samples[i - 1].timestamp + 1 {
            runs.push(&samples[start..i]);
            start = i;
        }
    }
    if start < samples.len() {
        runs.push(&samples[start..]);
    }
    runs
}

fn mean_p(w: &[PowerSample]) -> f64 {
    w.iter().map(|s| s.p_w).sum::<f64>() / w.len() as f64
}

fn mean_q(w: &[PowerSample]) -> f64 {
    w.iter().map(|s| s.q_var).sum::<f64>() / w.len() as f64
}

/// Mean aggregate harmonic RMS of a window in volt-ampere units
/// (`THD * sqrt(P^2 + Q^2)` per sample), or `None` when any sample's THD
/// is unknown.
fn mean_harmonic_va(w: &[PowerSample]) -> Option<f64> {
    let mut sum = 0.0;
    for s in w {
        let thd = s.thd?;
        sum += thd * (s.p_w * s.p_w + s.q_var * s.q_var).sqrt();
    }
    Some(sum / w.len() as f64)
}

fn mean_thd(w: &[PowerSample]) -> Option<f64> {
    let mut sum = 0.0;
    for s in w {
        sum += s.thd?;
    }
    Some(sum / w.len() as f64)
}

fn detect_run(
    run: &[PowerSample],
    tag: PhaseTag,
    params: &EdgeDetectParams,
    events: &mut Vec<LoadEvent>,
) {
    let pre = params.pre_window_s as usize;
    let skip = params.transient_skip_s as usize;
    let settle = params.settle_window_s as usize;
    if run.len() < pre + skip + settle + 1 {
        return;
    }
    // (end index, sign, magnitude) of the most recent edge's settling region.
    let mut last_edge: Option<(usize, f64, f64)> = None;
    let first = pre;
    let last = run.len() - skip - settle;
    for j in first..=last {
        let raw = run[j].p_w - run[j - 1].p_w;
        if raw.abs() < params.min_edge_w {
            continue;
        }
        if let Some((settle_end, sign, prev_mag)) = last_edge {
            // Opposite-direction movement inside the previous edge's settling
            // region is its transient relaxing, not a new appliance edge.
            // A relaxation step can never exceed the jump that started it,
            // so a larger opposite jump is a genuine new edge.
            if j <= settle_end && raw.signum() != sign && raw.abs() < prev_mag {
                continue;
            }
        }
        let before = &run[j - pre..j];
        let after = &run[j + skip..j + skip + settle];
        let dp = mean_p(after) - mean_p(before);
        last_edge = Some((j + skip + settle, raw.signum(), raw.abs()));
        if dp.abs() < params.min_edge_w {
            continue;
        }
        let dq = mean_q(after) - mean_q(before);
        let direction = if dp > 0.0 { Direction::On } else { Direction::Off };

        let thd = match params.thd_mode {
            EventThdMode::Differential => {
                // The switched load's harmonic content is the change in
                // aggregate harmonic VA; its fundamental VA is |dS|. Off
                // events remove content, so the magnitude carries the load's
                // distortion either way.
                match (mean_harmonic_va(before), mean_harmonic_va(after)) {
                    (Some(hb), Some(ha)) => {
                        let denom = (dp * dp + dq * dq).sqrt();
                        Some((ha - hb).abs() / denom)
                    }
                    _ => None,
                }
            }
            EventThdMode::PostEvent => mean_thd(after),
        };

        let spike = if direction == Direction::On {
            let peak = run[j..j + skip + settle]
                .iter()
                .map(|s| s.p_w)
                .fold(f64::NEG_INFINITY, f64::max);
            peak - mean_p(before) >= params.spike_ratio * dp.abs()
        } else {
            false
        };

        events.push(LoadEvent {
            timestamp: run[j].timestamp,
            phase_tag: tag,
            direction,
            dp_w: dp,
            dq_var: dq,
            thd,
            spike,
            corrupted_hint: false,
        });
    }
}

/// Merges same-direction events observed on both hot phases within the pair
/// tolerance into one double-phase (AB) event with summed deltas. Unpaired
/// events pass through unchanged. Total dP is conserved.
pub fn pair_double_phase(
    events_a: &[LoadEvent],
    events_b: &[LoadEvent],
    params: &EdgeDetectParams,
) -> Vec<LoadEvent> {
    let tol = params.phase_pair_tolerance_s;
    let mut used_b = vec![false; events_b.len()];
    let mut merged = Vec::with_capacity(events_a.len() + events_b.len());
    for a in events_a {
        let mut best: Option<(usize, u64)> = None;
        for (bi, b) in events_b.iter().enumerate() {
            if used_b[bi] || b.direction != a.direction {
                continue;
            }
            if b.timestamp + tol < a.timestamp {
                continue;
            }
            if b.timestamp > a.timestamp + tol {
                break;
            }
            let dist = a.timestamp.abs_diff(b.timestamp);
            if best.map(|(_, d)| dist < d).unwrap_or(true) {
                best = Some((bi, dist));
            }
        }
        match best {
            Some((bi, _)) => {
                used_b[bi] = true;
                merged.push(merge_pair(a, &events_b[bi]));
            }
            None => merged.push(a.clone()),
        }
    }
    for (bi, b) in events_b.iter().enumerate() {
        if !used_b[bi] {
            merged.push(b.clone());
        }
    }
    merged.sort_by_key(|e| e.timestamp);
    merged
}

fn merge_pair(a: &LoadEvent, b: &LoadEvent) -> LoadEvent {
    let sa = (a.dp_w * a.dp_w + a.dq_var * a.dq_var).sqrt();
    let sb = (b.dp_w * b.dp_w + b.dq_var * b.dq_var).sqrt();
    let thd = match (a.thd, b.thd) {
        (Some(ta), Some(tb)) if sa + sb > 0.0 => Some((ta * sa + tb * sb) / (sa + sb)),
        _ => None,
    };
    LoadEvent {
        timestamp: a.timestamp.min(b.timestamp),
        phase_tag: PhaseTag::AB,
        direction: a.direction,
        dp_w: a.dp_w + b.dp_w,
        dq_var: a.dq_var + b.dq_var,
        thd,
        spike: a.spike || b.spike,
        corrupted_hint: a.corrupted_hint || b.corrupted_hint,
    }
}

/// Flags events whose settling windows overlapped another edge on a shared
/// phase. Informational: filtration still sees flagged events.
pub fn mark_corrupted(events: &[LoadEvent], collision_window_s: u64) -> Vec<LoadEvent> {
    let mut out = events.to_vec();
    for i in 0..out.len() {
        for j in (i + 1)..out.len() {
            if out[j].timestamp - out[i].timestamp > collision_window_s {
                break;
            }
            if out[i].phase_tag.overlaps(out[j].phase_tag) {
                out[i].corrupted_hint = true;
                out[j].corrupted_hint = true;
            }
        }
    }
    out
}

/// Full detection path used by the pipeline: per-phase detection, pairing,
/// collision marking.
pub fn detect_and_pair(
    rec: &MeterRecording,
    params: &EdgeDetectParams,
) -> Result<Vec<LoadEvent>, EventDetectError> {
    let events = detect_events(rec, params)?;
    let (a, b) = split_by_phase(&events);
    let paired = pair_double_phase(&a, &b, params);
    Ok(mark_corrupted(
        &paired,
        params.transient_skip_s + params.settle_window_s,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meterdata::Epoch;

    fn recording_from_p(p_a: &[f64], p_b: &[f64]) -> MeterRecording {
        let series = |p: &[f64]| PhaseSeries {
            samples: p
                .iter()
                .enumerate()
                .map(|(t, &p_w)| PowerSample {
                    timestamp: t as u64,
                    p_w,
                    q_var: 0.0,
                    thd: Some(0.0),
                })
                .collect(),
            gaps: Vec::new(),
        };
        MeterRecording {
            epoch: Epoch::default(),
            phase_a: series(p_a),
            phase_b: series(p_b),
        }
    }

    fn step_series(levels: &[(usize, f64)]) -> Vec<f64> {
        let mut out = Vec::new();
        for &(len, level) in levels {
            out.extend(std::iter::repeat_n(level, len));
        }
        out
    }

    #[test]
    fn clean_step_yields_single_on_event() {
        let p = step_series(&[(10, 0.0), (10, 1500.0)]);
        let rec = recording_from_p(&p, &vec![0.0; p.len()]);
        let events = detect_events(&rec, &EdgeDetectParams::default()).unwrap();
        assert_eq!(events.len(), 1);
        let e = &events[0];
        assert_eq!(e.direction, Direction::On);
        assert_eq!(e.timestamp, 10);
        assert!((e.dp_w - 1500.0).abs() < 1e-9);
        assert!(!e.spike);
    }

    #[test]
    fn staircase_up_down() {
        let p = step_series(&[(10, 0.0), (10, 100.0), (10, 0.0)]);
        let rec = recording_from_p(&p, &vec![0.0; p.len()]);
        let events = detect_events(&rec, &EdgeDetectParams::default()).unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].direction, Direction::On);
        assert!((events[0].dp_w - 100.0).abs() < 1e-9);
        assert_eq!(events[1].direction, Direction::Off);
        assert!((events[1].dp_w + 100.0).abs() < 1e-9);
    }

    #[test]
    fn sub_threshold_step_ignored() {
        let p = step_series(&[(10, 0.0), (10, 40.0)]);
        let rec = recording_from_p(&p, &vec![0.0; p.len()]);
        let events = detect_events(&rec, &EdgeDetectParams::default()).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn inrush_spike_flagged_and_decay_suppressed() {
        // 600 W inrush settling to 150 W within 2 s.
        let mut p = vec![0.0; 10];
        p.extend([600.0, 250.0, 160.0]);
        p.extend(vec![150.0; 10]);
        let rec = recording_from_p(&p, &vec![0.0; p.len()]);
        let events = detect_events(&rec, &EdgeDetectParams::default()).unwrap();
        assert_eq!(events.len(), 1, "decay must not spawn OFF events");
        let e = &events[0];
        assert_eq!(e.direction, Direction::On);
        assert!((e.dp_w - 150.0).abs() < 1e-9);
        assert!(e.spike, "600 W peak on a 150 W step is a spike");
    }

    #[test]
    fn same_direction_edges_one_second_apart_both_emitted() {
        let mut p = vec![0.0; 10];
        p.push(100.0);
        p.extend(vec![250.0; 12]);
        let rec = recording_from_p(&p, &vec![0.0; p.len()]);
        let events = detect_events(&rec, &EdgeDetectParams::default()).unwrap();
        assert_eq!(events.len(), 2);
        let marked = mark_corrupted(&events, 6);
        assert!(marked.iter().all(|e| e.corrupted_hint));
    }

    #[test]
    fn isolated_event_not_corrupted() {
        let p = step_series(&[(10, 0.0), (10, 100.0)]);
        let rec = recording_from_p(&p, &vec![0.0; p.len()]);
        let events = detect_events(&rec, &EdgeDetectParams::default()).unwrap();
        let marked = mark_corrupted(&events, 6);
        assert_eq!(marked.len(), 1);
        assert!(!marked[0].corrupted_hint);
    }

    #[test]
    fn no_events_inside_gaps() {
        // Two runs separated by a gap; the level difference across the gap
        // must not produce an event.
        let samples: Vec<PowerSample> = (0..10u64)
            .map(|t| PowerSample {
                timestamp: t,
                p_w: 0.0,
                q_var: 0.0,
                thd: Some(0.0),
            })
            .chain((100..110u64).map(|t| PowerSample {
                timestamp: t,
                p_w: 2000.0,
                q_var: 0.0,
                thd: Some(0.0),
            }))
            .collect();
        let rec = MeterRecording {
            epoch: Epoch::default(),
            phase_a: PhaseSeries {
                samples,
                gaps: vec![(10, 100)],
            },
            phase_b: PhaseSeries::default(),
        };
        let events = detect_events(&rec, &EdgeDetectParams::default()).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn recording_too_short_is_error() {
        let p = vec![0.0; 5];
        let rec = recording_from_p(&p, &p);
        assert!(matches!(
            detect_events(&rec, &EdgeDetectParams::default()),
            Err(EventDetectError::RecordingTooShort { .. })
        ));
    }

    #[test]
    fn time_shift_equivariance() {
        let p = step_series(&[(10, 0.0), (10, 700.0), (10, 100.0)]);
        let rec = recording_from_p(&p, &vec![0.0; p.len()]);
        let base = detect_events(&rec, &EdgeDetectParams::default()).unwrap();

        let shift = 12345u64;
        let mut shifted = rec.clone();
        for s in &mut shifted.phase_a.samples {
            s.timestamp += shift;
        }
        for s in &mut shifted.phase_b.samples {
            s.timestamp += shift;
        }
        let moved = detect_events(&shifted, &EdgeDetectParams::default()).unwrap();
        assert_eq!(base.len(), moved.len());
        for (b, m) in base.iter().zip(&moved) {
            assert_eq!(b.timestamp + shift, m.timestamp);
            assert_eq!(b.dp_w, m.dp_w);
            assert_eq!(b.dq_var, m.dq_var);
            assert_eq!(b.direction, m.direction);
            assert_eq!(b.spike, m.spike);
        }
    }

    #[test]
    fn pairing_merges_simultaneous_same_direction() {
        let mk = |t, tag, dp: f64| LoadEvent {
            timestamp: t,
            phase_tag: tag,
            direction: if dp > 0.0 { Direction::On } else { Direction::Off },
            dp_w: dp,
            dq_var: dp / 10.0,
            thd: Some(0.02),
            spike: false,
            corrupted_hint: false,
        };
        let a = vec![mk(100, PhaseTag::A, 1500.0)];
        let b = vec![mk(100, PhaseTag::B, 1500.0)];
        let merged = pair_double_phase(&a, &b, &EdgeDetectParams::default());
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].phase_tag, PhaseTag::AB);
        assert!((merged[0].dp_w - 3000.0).abs() < 1e-9);
        assert!((merged[0].dq_var - 300.0).abs() < 1e-9);
    }

    #[test]
    fn unpaired_event_passes_through() {
        let a = vec![LoadEvent {
            timestamp: 100,
            phase_tag: PhaseTag::A,
            direction: Direction::On,
            dp_w: 200.0,
            dq_var: 10.0,
            thd: None,
            spike: true,
            corrupted_hint: false,
        }];
        let merged = pair_double_phase(&a, &[], &EdgeDetectParams::default());
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].phase_tag, PhaseTag::A);
        assert_eq!(merged[0].dp_w, 200.0);
    }

    #[test]
    fn pairing_respects_direction_and_tolerance() {
        let mk = |t, tag, dp: f64| LoadEvent {
            timestamp: t,
            phase_tag: tag,
            direction: if dp > 0.0 { Direction::On } else { Direction::Off },
            dp_w: dp,
            dq_var: 0.0,
            thd: None,
            spike: false,
            corrupted_hint: false,
        };
        // Opposite directions never merge.
        let merged = pair_double_phase(
            &[mk(100, PhaseTag::A, 500.0)],
            &[mk(100, PhaseTag::B, -500.0)],
            &EdgeDetectParams::default(),
        );
        assert_eq!(merged.len(), 2);
        // Beyond the tolerance they stay separate.
        let merged = pair_double_phase(
            &[mk(100, PhaseTag::A, 500.0)],
            &[mk(103, PhaseTag::B, 500.0)],
            &EdgeDetectParams::default(),
        );
        assert_eq!(merged.len(), 2);
        // dP mass is conserved either way.
        let total: f64 = merged.iter().map(|e| e.dp_w).sum();
        assert!((total - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn differential_thd_recovers_switched_load() {
        // Background: 100 W, THD 0.10 -> harmonic VA = 10.
        // Switched load: 900 W, THD 0.30 -> harmonic VA = 270.
        // Aggregate after: S = 1000, h = 280, THD = 0.28.
        let mut samples = Vec::new();
        for t in 0..10u64 {
            samples.push(PowerSample {
                timestamp: t,
                p_w: 100.0,
                q_var: 0.0,
                thd: Some(0.10),
            });
        }
        for t in 10..20u64 {
            samples.push(PowerSample {
                timestamp: t,
                p_w: 1000.0,
                q_var: 0.0,
                thd: Some(0.28),
            });
        }
        let rec = MeterRecording {
            epoch: Epoch::default(),
            phase_a: PhaseSeries {
                samples,
                gaps: Vec::new(),
            },
            phase_b: PhaseSeries::default(),
        };
        let events = detect_events(&rec, &EdgeDetectParams::default()).unwrap();
        assert_eq!(events.len(), 1);
        let thd = events[0].thd.unwrap();
        assert!((thd - 0.30).abs() < 1e-9, "differential THD {thd}");
    }
}
