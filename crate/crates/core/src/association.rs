//! Event association: from authentic ON events to full operation cycles.
//!
//! Each authentic ON event anchors a data segment 1.5x the appliance's
//! average operation duration. All detected events inside all segments are
//! pooled (overlapping segments double-count shared events, matching the
//! per-segment bookkeeping), clustered, and every cluster is typed by how
//! often it appears across the M segments:
//!
//! * single     — appears in (almost) every segment, once per segment
//! * repetitive — appears in (almost) every segment, more than once in some
//! * occasional — appears in a meaningful minority of segments
//! * unrelated  — too rare to belong to the appliance
//!
//! The confidence factors `b < c` trade off missed middle events against
//! interference. Unrelated clusters are dropped; the remaining classes are
//! ordered by their median offset from the anchor to form the appliance's
//! representative operation cycle.

use serde::{Deserialize, Serialize};

use crate::clustering::{self, ClusterParams, EventCluster};
use crate::error::ClusteringError;
use crate::filtration::ConditionRow;
use crate::meterdata::{Direction, LoadEvent};

/// Association thresholds. `segment_factor` is fixed at 1.5 by the segment
/// definition; `prefilter_power_band` drops events whose |dP| exceeds the
/// band times the authentic mean before clustering (high side only, so
/// small ancillary events survive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationParams {
    pub b: f64,
    pub c: f64,
    pub segment_factor: f64,
    pub prefilter_power_band: f64,
}

impl Default for AssociationParams {
    fn default() -> Self {
        Self {
            b: 0.3,
            c: 0.8,
            segment_factor: 1.5,
            prefilter_power_band: 3.0,
        }
    }
}

impl AssociationParams {
    pub fn validate(&self) -> Result<(), ClusteringError> {
        if !(0.0 < self.b && self.b < self.c && self.c <= 1.0) {
            return Err(ClusteringError::InvalidParams(format!(
                "need 0 < b < c <= 1, got b = {}, c = {}",
                self.b, self.c
            )));
        }
        Ok(())
    }
}

/// One data segment: the events (any direction) within
/// `[anchor.t, anchor.t + segment_length)` on phases the anchor touches.
#[derive(Debug, Clone)]
pub struct DataSegment {
    pub anchor: LoadEvent,
    pub span: (u64, u64),
    pub events: Vec<LoadEvent>,
}

/// Association type of an event cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationType {
    Single,
    Repetitive,
    Occasional,
    Unrelated,
}

impl std::fmt::Display for AssociationType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            AssociationType::Single => "single",
            AssociationType::Repetitive => "repetitive",
            AssociationType::Occasional => "occasional",
            AssociationType::Unrelated => "unrelated",
        };
        write!(f, "{name}")
    }
}

/// A typed cluster of associated events with its occurrence statistics.
#[derive(Debug, Clone)]
pub struct AssociatedEventClass {
    pub cluster: EventCluster,
    pub assoc_type: AssociationType,
    /// Total occurrences across all segments (double-counting overlaps).
    pub n_total: usize,
    /// Max occurrences within any one segment.
    pub n_max: usize,
    /// Median event offset from the segment anchor, seconds.
    pub median_offset_s: f64,
    pub direction: Direction,
    /// True for the cluster holding the anchor events themselves.
    pub is_anchor: bool,
}

/// One slot of a reconstructed operation cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSlot {
    pub direction: Direction,
    pub association: AssociationType,
    /// True for the authentic ON class the segments were anchored on.
    #[serde(default)]
    pub is_anchor: bool,
    pub mean_p_w: f64,
    pub mean_q_var: f64,
    pub mean_thd_pct: f64,
    pub median_offset_s: f64,
    pub n_total: usize,
    pub n_max: usize,
}

/// The representative operation cycle of one appliance: its event classes
/// in median temporal order (occasional classes are rendered bracketed),
/// with per-class mean signatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSignature {
    pub appliance: String,
    pub ordered_pattern: Vec<CycleSlot>,
    pub segments_used: usize,
    /// No OFF-direction single or repetitive class was found.
    pub open_cycle: bool,
    /// The cycle shape is unusual (not exactly one OFF single event).
    pub anomalous: bool,
}

/// Builds one segment per authentic ON event. Segments may overlap; events
/// with |dP| beyond `prefilter_power_band` times the authentic mean are
/// excluded up front (high side only, so small ancillary events survive).
/// Only events with the anchor's own phase tag are collected: a
/// double-phase appliance cannot produce single-phase events, and vice
/// versa.
pub fn build_segments(
    authentic: &EventCluster,
    all_events: &[LoadEvent],
    row: &ConditionRow,
    params: &AssociationParams,
) -> Vec<DataSegment> {
    let segment_len =
        (params.segment_factor * row.avg_duration_min * 60.0).round().max(1.0) as u64;
    let power_cap = params.prefilter_power_band * authentic.mean_p.abs();
    let mut anchors: Vec<&LoadEvent> = authentic.members.iter().collect();
    anchors.sort_by_key(|e| e.timestamp);
    anchors
        .into_iter()
        .map(|anchor| {
            let span = (anchor.timestamp, anchor.timestamp + segment_len);
            let events = all_events
                .iter()
                .filter(|e| {
                    e.timestamp >= span.0
                        && e.timestamp < span.1
                        && e.phase_tag == anchor.phase_tag
                        && e.dp_w.abs() <= power_cap
                })
                .cloned()
                .collect();
            DataSegment {
                anchor: anchor.clone(),
                span,
                events,
            }
        })
        .collect()
}

/// The association-type rule over occurrence counts: with M segments,
/// `N >= c*M` makes a cluster single (once per segment) or repetitive
/// (at least twice in some segment); `b*M <= N < c*M` occasional; below
/// `b*M` unrelated.
pub fn classify_type(n: usize, n_max: usize, m: usize, params: &AssociationParams) -> AssociationType {
    let n = n as f64;
    let cm = params.c * m as f64;
    let bm = params.b * m as f64;
    if n >= cm {
        if n_max >= 2 {
            AssociationType::Repetitive
        } else {
            AssociationType::Single
        }
    } else if n >= bm {
        AssociationType::Occasional
    } else {
        AssociationType::Unrelated
    }
}

/// Pools segment events, clusters them with the appliance's weights, counts
/// per-segment occurrences and classifies every cluster.
pub fn classify_association(
    segments: &[DataSegment],
    weights: (f64, f64, f64),
    cluster_params: &ClusterParams,
    params: &AssociationParams,
) -> Result<Vec<AssociatedEventClass>, ClusteringError> {
    params.validate()?;
    let m = segments.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    // Pool (segment, event) instances, keeping duplicates from overlaps.
    let mut instances: Vec<(usize, &LoadEvent)> = Vec::new();
    for (si, seg) in segments.iter().enumerate() {
        for e in &seg.events {
            instances.push((si, e));
        }
    }
    instances.sort_by_key(|(si, e)| (e.timestamp, *si));
    let pooled: Vec<LoadEvent> = instances.iter().map(|(_, e)| (*e).clone()).collect();

    let partition = match cluster_params.method {
        clustering::ClusterMethod::MeanShift => {
            let (features, _) = clustering::normalize_features_to(
                &pooled,
                cluster_params.norm_lo,
                cluster_params.norm_hi,
            );
            clustering::mean_shift_partition(&features, cluster_params)?
        }
        clustering::ClusterMethod::WeightBased => {
            let features: Vec<[f64; 3]> =
                pooled.iter().map(clustering::event_features).collect();
            clustering::weight_based_partition(&features, weights, cluster_params)?
        }
    };

    let mut classes = Vec::with_capacity(partition.len());
    for group in &partition {
        let cluster = EventCluster::from_member_indices(&pooled, group);
        let mut per_segment = vec![0usize; m];
        let mut offsets: Vec<f64> = Vec::with_capacity(group.len());
        let mut anchor_hits = 0usize;
        for &gi in group {
            let (si, e) = instances[gi];
            per_segment[si] += 1;
            offsets.push((e.timestamp - segments[si].anchor.timestamp) as f64);
            if e.timestamp == segments[si].anchor.timestamp
                && e.phase_tag == segments[si].anchor.phase_tag
            {
                anchor_hits += 1;
            }
        }
        let n_total = group.len();
        let n_max = per_segment.iter().copied().max().unwrap_or(0);
        offsets.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median_offset_s = median_of_sorted(&offsets);
        let direction = cluster.members[0].direction;
        classes.push(AssociatedEventClass {
            assoc_type: classify_type(n_total, n_max, m, params),
            n_total,
            n_max,
            median_offset_s,
            direction,
            is_anchor: anchor_hits * 2 > m,
            cluster,
        });
    }
    classes.sort_by(|a, b| a.median_offset_s.partial_cmp(&b.median_offset_s).unwrap());
    Ok(classes)
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Assembles the representative operation cycle from typed classes:
/// single and repetitive classes in median temporal order, occasional
/// classes kept at their median position (rendered bracketed), unrelated
/// classes dropped.
pub fn assemble_cycle(
    appliance: &str,
    classes: &[AssociatedEventClass],
    segments_used: usize,
) -> CycleSignature {
    let mut kept: Vec<&AssociatedEventClass> = classes
        .iter()
        .filter(|c| c.assoc_type != AssociationType::Unrelated)
        .collect();
    // The authentic ON class leads the pattern even when overlapping
    // segments pull its median instance offset above another class's.
    kept.sort_by(|a, b| {
        b.is_anchor
            .cmp(&a.is_anchor)
            .then_with(|| a.median_offset_s.partial_cmp(&b.median_offset_s).unwrap())
    });
    let ordered_pattern: Vec<CycleSlot> = kept
        .iter()
        .map(|c| CycleSlot {
            direction: c.direction,
            association: c.assoc_type,
            is_anchor: c.is_anchor,
            mean_p_w: c.cluster.mean_p,
            mean_q_var: c.cluster.mean_q,
            mean_thd_pct: c.cluster.mean_thd * 100.0,
            median_offset_s: c.median_offset_s,
            n_total: c.n_total,
            n_max: c.n_max,
        })
        .collect();
    let off_firm = |slot: &CycleSlot| {
        slot.direction == Direction::Off
            && matches!(
                slot.association,
                AssociationType::Single | AssociationType::Repetitive
            )
    };
    let open_cycle = !ordered_pattern.iter().any(off_firm);
    let off_singles = ordered_pattern
        .iter()
        .filter(|s| s.direction == Direction::Off && s.association == AssociationType::Single)
        .count();
    CycleSignature {
        appliance: appliance.to_string(),
        ordered_pattern,
        segments_used,
        open_cycle,
        anomalous: off_singles != 1,
    }
}

/// Renders a cycle pattern like `ON(+1500W) -> rep(+520W) -> (occ +95W) -> OFF(-1120W)`.
pub fn render_pattern(sig: &CycleSignature) -> String {
    let slots: Vec<String> = sig
        .ordered_pattern
        .iter()
        .map(|s| {
            let body = format!("{}{:+.0}W", if s.association == AssociationType::Repetitive { "~" } else { "" }, s.mean_p_w);
            if s.association == AssociationType::Occasional {
                format!("({body})")
            } else {
                body
            }
        })
        .collect();
    slots.join(" -> ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtration::default_condition_table;
    use crate::meterdata::PhaseTag;

    fn event(t: u64, dp: f64, dq: f64, thd: f64, tag: PhaseTag) -> LoadEvent {
        LoadEvent {
            timestamp: t,
            phase_tag: tag,
            direction: if dp >= 0.0 { Direction::On } else { Direction::Off },
            dp_w: dp,
            dq_var: dq,
            thd: Some(thd),
            spike: false,
            corrupted_hint: false,
        }
    }

    fn row(name: &str) -> ConditionRow {
        default_condition_table()
            .into_iter()
            .find(|r| r.appliance == name)
            .unwrap()
    }

    #[test]
    fn segment_lengths_follow_condition_rows() {
        let anchor = event(1000, 160.0, 95.0, 0.08, PhaseTag::A);
        let authentic = EventCluster::from_member_indices(std::slice::from_ref(&anchor), &[0]);
        let params = AssociationParams::default();
        for (name, expect_s) in [
            ("Fridge", 1350),
            ("Microwave", 360),
            ("Clothes dryer", 4500),
        ] {
            let segments = build_segments(&authentic, std::slice::from_ref(&anchor), &row(name), &params);
            assert_eq!(segments[0].span, (1000, 1000 + expect_s), "{name}");
        }
    }

    #[test]
    fn one_segment_per_authentic_event() {
        let anchors: Vec<LoadEvent> = (0..12)
            .map(|i| event(i * 5400, 1500.0, 35.0, 0.01, PhaseTag::A))
            .collect();
        let authentic =
            EventCluster::from_member_indices(&anchors, &(0..12).collect::<Vec<_>>());
        let segments = build_segments(&authentic, &anchors, &row("Fridge"), &AssociationParams::default());
        assert_eq!(segments.len(), 12);
    }

    #[test]
    fn prefilter_drops_only_the_high_side() {
        let anchor = event(0, 160.0, 95.0, 0.08, PhaseTag::A);
        let small = event(60, 60.0, 0.0, 0.0, PhaseTag::A); // survives
        let huge = event(120, 5000.0, 160.0, 0.02, PhaseTag::A); // dropped
        let other_phase = event(180, 160.0, 95.0, 0.08, PhaseTag::B); // dropped
        let authentic = EventCluster::from_member_indices(std::slice::from_ref(&anchor), &[0]);
        let segments = build_segments(
            &authentic,
            &[anchor.clone(), small.clone(), huge, other_phase],
            &row("Fridge"),
            &AssociationParams::default(),
        );
        assert_eq!(segments[0].events, vec![anchor, small]);
    }

    #[test]
    fn classification_matches_heater_bench_counts() {
        let p = AssociationParams::default();
        let m = 12;
        assert_eq!(classify_type(12, 1, m, &p), AssociationType::Single);
        assert_eq!(classify_type(21, 2, m, &p), AssociationType::Repetitive);
        assert_eq!(classify_type(21, 3, m, &p), AssociationType::Repetitive);
        assert_eq!(classify_type(4, 1, m, &p), AssociationType::Occasional);
        assert_eq!(classify_type(3, 1, m, &p), AssociationType::Unrelated);
        assert_eq!(classify_type(2, 1, m, &p), AssociationType::Unrelated);
    }

    #[test]
    fn classification_is_exhaustive_and_monotone() {
        let mut rng = crate::rng::stream(101, "classify-exhaustive");
        use rand::Rng;
        for _ in 0..2000 {
            let m = rng.gen_range(1..=50usize);
            let n = rng.gen_range(0..=3 * m);
            let n_max = rng.gen_range(1..=n.max(1));
            let b = rng.gen_range(0.05..0.7);
            let c = rng.gen_range((b + 0.01)..1.0);
            let p = AssociationParams {
                b,
                c,
                ..AssociationParams::default()
            };
            let t = classify_type(n, n_max, m, &p);
            // Raising b can only push occasional clusters to unrelated.
            let p_hi_b = AssociationParams {
                b: (b + 0.1).min(c - 0.001),
                ..p.clone()
            };
            let t_hi_b = classify_type(n, n_max, m, &p_hi_b);
            match (t, t_hi_b) {
                (AssociationType::Occasional, AssociationType::Unrelated) => {}
                (a, b2) => assert_eq!(a, b2, "b-raise moved {a:?} -> {b2:?}"),
            }
            // Lowering c can only promote occasional toward single/repetitive.
            let p_lo_c = AssociationParams {
                c: (c - 0.1).max(b + 0.001),
                ..p.clone()
            };
            let t_lo_c = classify_type(n, n_max, m, &p_lo_c);
            match (t, t_lo_c) {
                (AssociationType::Occasional, AssociationType::Single)
                | (AssociationType::Occasional, AssociationType::Repetitive) => {}
                (a, b2) => assert_eq!(a, b2, "c-lower moved {a:?} -> {b2:?}"),
            }
        }
    }

    fn fridge_like_segments() -> Vec<DataSegment> {
        // 10 cycles: ON at t0, OFF at t0+840 inside 1350 s segments.
        let mut all = Vec::new();
        for i in 0..10u64 {
            let t0 = i * 3600;
            all.push(event(t0, 160.0, 95.0, 0.08, PhaseTag::A));
            all.push(event(t0 + 840, -160.0, -95.0, 0.08, PhaseTag::A));
        }
        let anchors: Vec<usize> = (0..20).step_by(2).collect();
        let authentic = EventCluster::from_member_indices(&all, &anchors);
        build_segments(&authentic, &all, &row("Fridge"), &AssociationParams::default())
    }

    #[test]
    fn fridge_cycle_is_on_then_off() {
        let segments = fridge_like_segments();
        let classes = classify_association(
            &segments,
            (0.45, 0.45, 0.10),
            &ClusterParams::default(),
            &AssociationParams::default(),
        )
        .unwrap();
        assert_eq!(classes.len(), 2);
        let sig = assemble_cycle("Fridge", &classes, segments.len());
        assert_eq!(sig.ordered_pattern.len(), 2);
        assert_eq!(sig.ordered_pattern[0].direction, Direction::On);
        assert_eq!(sig.ordered_pattern[0].association, AssociationType::Single);
        assert_eq!(sig.ordered_pattern[1].direction, Direction::Off);
        assert_eq!(sig.ordered_pattern[1].association, AssociationType::Single);
        assert!(!sig.open_cycle);
        assert!(!sig.anomalous);
        assert!((sig.ordered_pattern[1].median_offset_s - 840.0).abs() < 1e-9);
    }

    #[test]
    fn anchor_class_is_always_firmly_associated() {
        let segments = fridge_like_segments();
        let classes = classify_association(
            &segments,
            (0.45, 0.45, 0.10),
            &ClusterParams::default(),
            &AssociationParams::default(),
        )
        .unwrap();
        let anchor_class = classes.iter().find(|c| c.is_anchor).unwrap();
        assert!(matches!(
            anchor_class.assoc_type,
            AssociationType::Single | AssociationType::Repetitive
        ));
        assert!(anchor_class.n_total >= segments.len());
    }

    #[test]
    fn unrelated_classes_never_reach_the_signature() {
        let mut segments = fridge_like_segments();
        // Inject a rare foreign event into two segments.
        for seg in segments.iter_mut().take(2) {
            seg.events.push(event(seg.anchor.timestamp + 300, 300.0, 10.0, 0.01, PhaseTag::A));
        }
        let classes = classify_association(
            &segments,
            (0.45, 0.45, 0.10),
            &ClusterParams::default(),
            &AssociationParams::default(),
        )
        .unwrap();
        let unrelated: Vec<_> = classes
            .iter()
            .filter(|c| c.assoc_type == AssociationType::Unrelated)
            .collect();
        assert_eq!(unrelated.len(), 1);
        assert_eq!(unrelated[0].n_total, 2);
        let sig = assemble_cycle("Fridge", &classes, segments.len());
        assert!(sig
            .ordered_pattern
            .iter()
            .all(|s| s.association != AssociationType::Unrelated));
        assert_eq!(sig.ordered_pattern.len(), 2);
    }

    #[test]
    fn lone_anchor_yields_open_cycle() {
        let anchor = event(0, 1500.0, 35.0, 0.01, PhaseTag::A);
        let authentic = EventCluster::from_member_indices(std::slice::from_ref(&anchor), &[0]);
        let segments = build_segments(&authentic, &[anchor], &row("Fridge"), &AssociationParams::default());
        let classes = classify_association(
            &segments,
            (0.45, 0.45, 0.10),
            &ClusterParams::default(),
            &AssociationParams::default(),
        )
        .unwrap();
        let sig = assemble_cycle("Heater", &classes, segments.len());
        assert_eq!(sig.ordered_pattern.len(), 1);
        assert!(sig.open_cycle);
        assert!(sig.anomalous);
    }

    #[test]
    fn occasional_class_sits_bracketed_in_pattern_order() {
        let mut segments = fridge_like_segments();
        // Door-light pair in 4 of 10 segments (b*M = 3 <= 4 < c*M = 8).
        for seg in segments.iter_mut().take(4) {
            let t0 = seg.anchor.timestamp;
            seg.events.push(event(t0 + 200, 90.0, 5.0, 0.0, PhaseTag::A));
            seg.events.push(event(t0 + 260, -90.0, -5.0, 0.0, PhaseTag::A));
        }
        let classes = classify_association(
            &segments,
            (0.45, 0.45, 0.10),
            &ClusterParams::default(),
            &AssociationParams::default(),
        )
        .unwrap();
        let sig = assemble_cycle("Fridge", &classes, segments.len());
        assert_eq!(sig.ordered_pattern.len(), 4);
        let kinds: Vec<AssociationType> =
            sig.ordered_pattern.iter().map(|s| s.association).collect();
        assert_eq!(
            kinds,
            vec![
                AssociationType::Single,
                AssociationType::Occasional,
                AssociationType::Occasional,
                AssociationType::Single
            ]
        );
        let rendered = render_pattern(&sig);
        assert!(rendered.contains("(+90W)"), "{rendered}");
    }
}
