//! Per-appliance suspect selection: condition rows, daily search windows,
//! multi-day data-piece splicing and the five-condition filter.
//!
//! Each appliance gets a condition row limiting active power, reactive
//! power, current THD, inrush spike presence and phase placement of its ON
//! events, together with daily search windows in which the appliance is
//! expected (and competing loads are not). The windows of every day in a
//! multi-day recording are spliced into one chronological search domain;
//! ON events inside the domain that satisfy all five conditions become the
//! appliance's suspects. Suspect sets are intentionally loose: clustering
//! discards the foreign members later.
//!
//! The built-in defaults ship as `data/default_conditions.json` and cover
//! ten common major appliances; THD bounds are expressed in percent there
//! and everywhere in serialized form.

use serde::{Deserialize, Serialize};

use crate::error::FiltrationError;
use crate::meterdata::{
    Direction, Gap, LoadEvent, MeterRecording, SECONDS_PER_DAY,
};

const DEFAULT_TABLE_JSON: &str = include_str!("../data/default_conditions.json");

/// Whether an appliance's ON events must carry an inrush spike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeRequirement {
    Yes,
    No,
    Either,
}

impl SpikeRequirement {
    pub fn matches(&self, spike: bool) -> bool {
        match self {
            SpikeRequirement::Yes => spike,
            SpikeRequirement::No => !spike,
            SpikeRequirement::Either => true,
        }
    }
}

/// Single-phase (120 V) or double-phase (240 V) connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseCondition {
    Single,
    Double,
}

impl PhaseCondition {
    pub fn matches(&self, tag: crate::meterdata::PhaseTag) -> bool {
        match self {
            PhaseCondition::Single => !tag.is_double(),
            PhaseCondition::Double => tag.is_double(),
        }
    }
}

/// Load taxonomy by linearity and reactivity; drives the default feature
/// weights used by weight-based clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadCategory {
    LinearActive,
    LinearReactive,
    NonlinearActive,
    NonlinearReactive,
}

impl LoadCategory {
    /// Default (w_p, w_q, w_h) for the category. Reactive loads split the
    /// emphasis between P and Q; active loads keep the Q weight small since
    /// their reactive readings are mostly metering noise; nonlinear loads
    /// promote the harmonic weight.
    pub fn default_weights(&self) -> (f64, f64, f64) {
        match self {
            LoadCategory::LinearReactive => (0.45, 0.45, 0.10),
            LoadCategory::LinearActive => (0.60, 0.10, 0.30),
            LoadCategory::NonlinearActive => (0.45, 0.10, 0.45),
            LoadCategory::NonlinearReactive => (0.40, 0.30, 0.30),
        }
    }
}

/// Day-of-week restriction of a search window (Monday = 0).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayFilter {
    All,
    Weekend,
    Weekdays,
    Days(Vec<u8>),
}

impl DayFilter {
    pub fn matches(&self, weekday: u8) -> bool {
        match self {
            DayFilter::All => true,
            DayFilter::Weekend => weekday >= 5,
            DayFilter::Weekdays => weekday < 5,
            DayFilter::Days(days) => days.contains(&weekday),
        }
    }

    fn intersects(&self, other: &DayFilter) -> bool {
        (0..7u8).any(|d| self.matches(d) && other.matches(d))
    }
}

/// A daily local-time window `[start, end)`, optionally day-restricted.
/// Serialized with "HH:MM" endpoints ("24:00" closes the day).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchWindow {
    #[serde(with = "hh_mm")]
    pub start: u32,
    #[serde(with = "hh_mm")]
    pub end: u32,
    #[serde(default = "day_filter_all")]
    pub days: DayFilter,
}

fn day_filter_all() -> DayFilter {
    DayFilter::All
}

mod hh_mm {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seconds: &u32, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:02}:{:02}", seconds / 3600, (seconds % 3600) / 60))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u32, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).map_err(serde::de::Error::custom)
    }

    pub fn parse(text: &str) -> Result<u32, String> {
        let (h, m) = text
            .split_once(':')
            .ok_or_else(|| format!("expected HH:MM, found {text:?}"))?;
        let h: u32 = h.parse().map_err(|e| format!("bad hour in {text:?}: {e}"))?;
        let m: u32 = m.parse().map_err(|e| format!("bad minute in {text:?}: {e}"))?;
        if h > 24 || m > 59 || (h == 24 && m != 0) {
            return Err(format!("out-of-range time {text:?}"));
        }
        Ok(h * 3600 + m * 60)
    }
}

/// One appliance's filtration conditions, clustering weights and expected
/// cycle duration. `thd_range_pct` bounds are percent; event THD fractions
/// are converted on comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub appliance: String,
    pub p_range_w: (f64, f64),
    pub q_range_var: (f64, f64),
    pub thd_range_pct: (f64, f64),
    pub spike_required: SpikeRequirement,
    pub phase_condition: PhaseCondition,
    pub search_windows: Vec<SearchWindow>,
    pub avg_duration_min: f64,
    pub category: LoadCategory,
    /// (w_p, w_q, w_h); defaults to the category weights when omitted.
    #[serde(default)]
    pub weights: Option<(f64, f64, f64)>,
}

impl ConditionRow {
    pub fn effective_weights(&self) -> (f64, f64, f64) {
        self.weights.unwrap_or_else(|| self.category.default_weights())
    }

    pub fn validate(&self) -> Result<(), FiltrationError> {
        let check_range = |name: &str, (lo, hi): (f64, f64)| -> Result<(), FiltrationError> {
            if lo < 0.0 || hi < lo {
                return Err(FiltrationError::InvalidRow {
                    appliance: self.appliance.clone(),
                    reason: format!("{name} range [{lo}, {hi}] is invalid"),
                });
            }
            Ok(())
        };
        check_range("P", self.p_range_w)?;
        check_range("Q", self.q_range_var)?;
        check_range("THD", self.thd_range_pct)?;
        if !(self.avg_duration_min > 0.0) {
            return Err(FiltrationError::InvalidRow {
                appliance: self.appliance.clone(),
                reason: format!("avg_duration_min {} must be positive", self.avg_duration_min),
            });
        }
        let (wp, wq, wh) = self.effective_weights();
        if wp < 0.0 || wq < 0.0 || wh < 0.0 || ((wp + wq + wh) - 1.0).abs() > 1e-9 {
            return Err(FiltrationError::InvalidRow {
                appliance: self.appliance.clone(),
                reason: format!("weights ({wp}, {wq}, {wh}) must be non-negative and sum to 1"),
            });
        }
        if self.search_windows.is_empty() {
            return Err(FiltrationError::InvalidRow {
                appliance: self.appliance.clone(),
                reason: "no search windows".into(),
            });
        }
        for w in &self.search_windows {
            if w.end <= w.start || w.end > SECONDS_PER_DAY as u32 {
                return Err(FiltrationError::InvalidRow {
                    appliance: self.appliance.clone(),
                    reason: format!("window {}..{} is invalid", w.start, w.end),
                });
            }
        }
        for (i, a) in self.search_windows.iter().enumerate() {
            for b in &self.search_windows[i + 1..] {
                if a.days.intersects(&b.days) && a.start < b.end && b.start < a.end {
                    return Err(FiltrationError::InvalidRow {
                        appliance: self.appliance.clone(),
                        reason: "overlapping search windows".into(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Checks the five filtration conditions (not the search window) against
    /// an ON event.
    pub fn matches_event(&self, e: &LoadEvent) -> bool {
        if e.direction != Direction::On {
            return false;
        }
        if !(self.p_range_w.0 <= e.dp_w && e.dp_w <= self.p_range_w.1) {
            return false;
        }
        if !(self.q_range_var.0 <= e.dq_var && e.dq_var <= self.q_range_var.1) {
            return false;
        }
        let thd_ok = match e.thd {
            Some(thd) => {
                let pct = thd * 100.0;
                self.thd_range_pct.0 <= pct && pct <= self.thd_range_pct.1
            }
            // Unknown THD only passes rows whose range reaches down to zero.
            None => self.thd_range_pct.0 == 0.0,
        };
        if !thd_ok {
            return false;
        }
        if !self.spike_required.matches(e.spike) {
            return false;
        }
        self.phase_condition.matches(e.phase_tag)
    }

    /// Data-segment length used by event association: 1.5x the average
    /// operation duration, in seconds.
    pub fn segment_length_s(&self) -> f64 {
        1.5 * self.avg_duration_min * 60.0
    }
}

/// Parses a condition-table JSON document and validates every row.
pub fn parse_condition_table(json: &str) -> Result<Vec<ConditionRow>, FiltrationError> {
    let rows: Vec<ConditionRow> =
        serde_json::from_str(json).map_err(|e| FiltrationError::TableParse(e.to_string()))?;
    for row in &rows {
        row.validate()?;
    }
    Ok(rows)
}

/// The built-in ten-appliance condition table, parsed from the bundled
/// data file.
pub fn default_condition_table() -> Vec<ConditionRow> {
    parse_condition_table(DEFAULT_TABLE_JSON)
        .expect("bundled default condition table must be valid")
}

pub fn load_condition_table(path: impl AsRef<std::path::Path>) -> Result<Vec<ConditionRow>, FiltrationError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FiltrationError::TableParse(e.to_string()))?;
    parse_condition_table(&text)
}

/// The spliced multi-day search domain of one appliance: chronologically
/// ordered, gap-free, half-open intervals in recording seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplicedDomain {
    pub pieces: Vec<(u64, u64)>,
}

impl SplicedDomain {
    pub fn contains(&self, t: u64) -> bool {
        match self.pieces.binary_search_by(|&(s, _)| s.cmp(&t)) {
            Ok(_) => true,
            Err(0) => false,
            Err(i) => t < self.pieces[i - 1].1,
        }
    }

    pub fn total_seconds(&self) -> u64 {
        self.pieces.iter().map(|(s, e)| e - s).sum()
    }
}

/// Cuts the appliance's daily search windows out of every day of the
/// recording and re-joins them into one chronological domain, skipping
/// gaps. Errors when the windows never intersect the recording.
pub fn splice_data_pieces(
    rec: &MeterRecording,
    row: &ConditionRow,
) -> Result<SplicedDomain, FiltrationError> {
    let start = rec.start_t();
    let end = rec.end_t();
    let offset = rec.epoch.midnight_offset_s;
    let gaps = rec.merged_gaps();

    let mut pieces: Vec<(u64, u64)> = Vec::new();
    // Local day indices covering the recording span.
    let first_day = (offset + start) / SECONDS_PER_DAY;
    let last_day = (offset + end.saturating_sub(1)) / SECONDS_PER_DAY;
    for day in first_day..=last_day {
        let weekday = ((rec.epoch.weekday0 as u64 + day) % 7) as u8;
        for w in &row.search_windows {
            if !w.days.matches(weekday) {
                continue;
            }
            let local_start = day * SECONDS_PER_DAY + w.start as u64;
            let local_end = day * SECONDS_PER_DAY + w.end as u64;
            // Convert local seconds back to recording seconds.
            let piece_start = local_start.saturating_sub(offset).max(start);
            let piece_end = local_end.saturating_sub(offset).min(end);
            if piece_start >= piece_end {
                continue;
            }
            subtract_gaps(piece_start, piece_end, &gaps, &mut pieces);
        }
    }
    pieces.sort_unstable();
    if pieces.is_empty() {
        return Err(FiltrationError::EmptySearchDomain(row.appliance.clone()));
    }
    Ok(SplicedDomain { pieces })
}

fn subtract_gaps(start: u64, end: u64, gaps: &[Gap], out: &mut Vec<(u64, u64)>) {
    let mut cursor = start;
    for &(gs, ge) in gaps {
        if ge <= cursor {
            continue;
        }
        if gs >= end {
            break;
        }
        if gs > cursor {
            out.push((cursor, gs.min(end)));
        }
        cursor = cursor.max(ge);
        if cursor >= end {
            return;
        }
    }
    if cursor < end {
        out.push((cursor, end));
    }
}

/// The suspect events of one appliance: ON events inside the spliced domain
/// that satisfy all five filtration conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct SuspectSet {
    pub appliance: String,
    pub events: Vec<LoadEvent>,
    pub source_pieces: Vec<(u64, u64)>,
}

/// Applies the condition row to ON events inside the domain. An empty
/// result is valid; downstream stages decide sufficiency.
pub fn filter_suspects(
    events: &[LoadEvent],
    row: &ConditionRow,
    domain: &SplicedDomain,
) -> SuspectSet {
    let selected = events
        .iter()
        .filter(|e| domain.contains(e.timestamp) && row.matches_event(e))
        .cloned()
        .collect();
    SuspectSet {
        appliance: row.appliance.clone(),
        events: selected,
        source_pieces: domain.pieces.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meterdata::{Epoch, PhaseSeries, PhaseTag, PowerSample};

    fn flat_recording(days: u64, epoch: Epoch) -> MeterRecording {
        let n = days * SECONDS_PER_DAY;
        let series = || PhaseSeries {
            samples: (0..n)
                .map(|t| PowerSample {
                    timestamp: t,
                    p_w: 100.0,
                    q_var: 0.0,
                    thd: Some(0.0),
                })
                .collect(),
            gaps: Vec::new(),
        };
        MeterRecording {
            epoch,
            phase_a: series(),
            phase_b: series(),
        }
    }

    fn row(appliance: &str) -> ConditionRow {
        default_condition_table()
            .into_iter()
            .find(|r| r.appliance == appliance)
            .unwrap_or_else(|| panic!("no default row {appliance}"))
    }

    fn on_event(t: u64, dp: f64, dq: f64, thd_pct: f64, spike: bool, tag: PhaseTag) -> LoadEvent {
        LoadEvent {
            timestamp: t,
            phase_tag: tag,
            direction: Direction::On,
            dp_w: dp,
            dq_var: dq,
            thd: Some(thd_pct / 100.0),
            spike,
            corrupted_hint: false,
        }
    }

    #[test]
    fn default_table_has_ten_valid_rows() {
        let table = default_condition_table();
        assert_eq!(table.len(), 10);
        for row in &table {
            row.validate().unwrap();
        }
    }

    #[test]
    fn dryer_row_matches_published_conditions() {
        let r = row("Clothes dryer");
        assert_eq!(r.p_range_w, (3000.0, 6000.0));
        assert_eq!(r.q_range_var, (60.0, 250.0));
        assert_eq!(r.thd_range_pct, (0.0, 5.0));
        assert_eq!(r.spike_required, SpikeRequirement::Yes);
        assert_eq!(r.phase_condition, PhaseCondition::Double);
        assert_eq!(r.avg_duration_min, 50.0);
    }

    #[test]
    fn microwave_row_matches_published_conditions() {
        let r = row("Microwave");
        assert_eq!(r.p_range_w, (800.0, 2500.0));
        assert_eq!(r.thd_range_pct, (20.0, 50.0));
        assert_eq!(r.spike_required, SpikeRequirement::No);
        assert_eq!(r.phase_condition, PhaseCondition::Single);
    }

    #[test]
    fn top_load_washer_q_range() {
        let r = row("Washer (top-load)");
        assert_eq!(r.q_range_var, (300.0, 1200.0));
    }

    #[test]
    fn segment_lengths_are_one_point_five_times_duration() {
        for (name, minutes) in [
            ("Fridge", 22.5),
            ("Furnace", 30.0),
            ("Microwave", 6.0),
            ("Stove (big element)", 37.5),
            ("Kettle", 6.0),
            ("Oven", 15.0),
            ("Washer (top-load)", 67.5),
            ("Clothes dryer", 75.0),
        ] {
            assert_eq!(row(name).segment_length_s(), minutes * 60.0, "{name}");
        }
    }

    #[test]
    fn seven_day_fridge_window_splices_to_21_hours() {
        let rec = flat_recording(7, Epoch::default());
        let domain = splice_data_pieces(&rec, &row("Fridge")).unwrap();
        assert_eq!(domain.pieces.len(), 7);
        for (s, e) in &domain.pieces {
            assert_eq!(e - s, 3 * 3600);
        }
        assert_eq!(domain.total_seconds(), 21 * 3600);
    }

    #[test]
    fn full_day_window_covers_recording_minus_gaps() {
        let mut rec = flat_recording(2, Epoch::default());
        // Punch a gap into both phases.
        for series in [&mut rec.phase_a, &mut rec.phase_b] {
            series.samples.retain(|s| !(1000..2000).contains(&s.timestamp));
            series.gaps.push((1000, 2000));
        }
        let mut r = row("Fridge");
        r.search_windows = vec![SearchWindow {
            start: 0,
            end: SECONDS_PER_DAY as u32,
            days: DayFilter::All,
        }];
        let domain = splice_data_pieces(&rec, &r).unwrap();
        assert_eq!(domain.total_seconds(), 2 * SECONDS_PER_DAY - 1000);
        assert!(!domain.contains(1500));
        assert!(domain.contains(999));
        assert!(domain.contains(2000));
    }

    #[test]
    fn weekend_window_on_monday_start_gives_two_pieces() {
        // Epoch weekday 0 = Monday; days 5 and 6 are Saturday and Sunday.
        let rec = flat_recording(7, Epoch::default());
        let domain = splice_data_pieces(&rec, &row("Clothes dryer")).unwrap();
        assert_eq!(domain.pieces.len(), 2);
        let sat_start = 5 * SECONDS_PER_DAY + 8 * 3600;
        assert_eq!(domain.pieces[0].0, sat_start);
    }

    #[test]
    fn empty_domain_is_error() {
        // One-day recording starting Monday; weekend-only row never matches.
        let rec = flat_recording(1, Epoch::default());
        assert!(matches!(
            splice_data_pieces(&rec, &row("Clothes dryer")),
            Err(FiltrationError::EmptySearchDomain(_))
        ));
    }

    #[test]
    fn fridge_event_accepted_in_window_rejected_outside() {
        let rec = flat_recording(1, Epoch::default());
        let fridge = row("Fridge");
        let domain = splice_data_pieces(&rec, &fridge).unwrap();
        let at_3am = on_event(3 * 3600, 150.0, 80.0, 10.0, true, PhaseTag::A);
        let at_1pm = on_event(13 * 3600, 150.0, 80.0, 10.0, true, PhaseTag::A);
        let suspects = filter_suspects(&[at_3am.clone(), at_1pm], &fridge, &domain);
        assert_eq!(suspects.events, vec![at_3am]);
    }

    #[test]
    fn kettle_event_accepted() {
        let rec = flat_recording(1, Epoch::default());
        let kettle = row("Kettle");
        let domain = splice_data_pieces(&rec, &kettle).unwrap();
        let e = on_event(7 * 3600 + 1800, 2000.0, 10.0, 2.0, false, PhaseTag::A);
        let suspects = filter_suspects(&[e], &kettle, &domain);
        assert_eq!(suspects.events.len(), 1);
    }

    #[test]
    fn off_events_never_pass() {
        let rec = flat_recording(1, Epoch::default());
        let fridge = row("Fridge");
        let domain = splice_data_pieces(&rec, &fridge).unwrap();
        let mut e = on_event(3 * 3600, -150.0, -80.0, 10.0, false, PhaseTag::A);
        e.direction = Direction::Off;
        assert!(filter_suspects(&[e], &fridge, &domain).events.is_empty());
    }

    #[test]
    fn unknown_thd_passes_only_zero_reaching_ranges() {
        let rec = flat_recording(1, Epoch::default());
        let fridge = row("Fridge"); // THD range starts at 0
        let micro = row("Microwave"); // THD range starts at 20
        let fridge_domain = splice_data_pieces(&rec, &fridge).unwrap();
        let micro_domain = splice_data_pieces(&rec, &micro).unwrap();

        let mut fridge_like = on_event(3 * 3600, 150.0, 80.0, 0.0, true, PhaseTag::A);
        fridge_like.thd = None;
        assert_eq!(filter_suspects(&[fridge_like], &fridge, &fridge_domain).events.len(), 1);

        let mut micro_like = on_event(7 * 3600, 1200.0, 200.0, 0.0, false, PhaseTag::A);
        micro_like.thd = None;
        assert!(filter_suspects(&[micro_like], &micro, &micro_domain).events.is_empty());
    }

    #[test]
    fn phase_and_spike_conditions_enforced() {
        let rec = flat_recording(7, Epoch::default());
        let dryer = row("Clothes dryer");
        let domain = splice_data_pieces(&rec, &dryer).unwrap();
        let sat_noon = 5 * SECONDS_PER_DAY + 12 * 3600;
        let good = on_event(sat_noon, 5000.0, 160.0, 2.0, true, PhaseTag::AB);
        let single_phase = on_event(sat_noon, 5000.0, 160.0, 2.0, true, PhaseTag::A);
        let no_spike = on_event(sat_noon, 5000.0, 160.0, 2.0, false, PhaseTag::AB);
        let suspects = filter_suspects(&[good.clone(), single_phase, no_spike], &dryer, &domain);
        assert_eq!(suspects.events, vec![good]);
    }

    #[test]
    fn suspects_all_pass_direct_recheck() {
        let rec = flat_recording(7, Epoch::default());
        let table = default_condition_table();
        let events: Vec<LoadEvent> = (0..500)
            .map(|i| {
                on_event(
                    (i * 997) % (7 * SECONDS_PER_DAY),
                    (i as f64 * 37.0) % 6000.0,
                    (i as f64 * 13.0) % 1300.0,
                    (i as f64 * 7.0) % 100.0,
                    i % 2 == 0,
                    match i % 3 {
                        0 => PhaseTag::A,
                        1 => PhaseTag::B,
                        _ => PhaseTag::AB,
                    },
                )
            })
            .collect();
        for row in &table {
            let domain = match splice_data_pieces(&rec, row) {
                Ok(d) => d,
                Err(_) => continue,
            };
            let suspects = filter_suspects(&events, row, &domain);
            for e in &suspects.events {
                assert!(row.matches_event(e), "{}: {:?}", row.appliance, e);
                assert!(domain.contains(e.timestamp));
            }
        }
    }

    #[test]
    fn condition_table_roundtrips_through_json() {
        let table = default_condition_table();
        let json = serde_json::to_string_pretty(&table).unwrap();
        let back = parse_condition_table(&json).unwrap();
        assert_eq!(table, back);
    }
}
