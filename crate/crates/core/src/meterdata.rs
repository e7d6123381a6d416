//! Canonical per-second power series, event records and file ingestion.
//!
//! Two input formats feed the pipeline:
//!
//! * Samples CSV (header required): `t_s,phase,P_W,Q_var,THD_pct` with one
//!   row per second per phase. `THD_pct` may be empty (no-load / unknown).
//! * Waveform container (binary, little-endian): header `LSWF`, `u16`
//!   version (currently 1), `u16` reserved, `f64` nominal frequency; then
//!   one record per frame: `u64` timestamp, `u8` phase (0 = A, 1 = B),
//!   `u16` n_cycles, `u16` points_per_cycle, followed by
//!   `n_cycles * points_per_cycle` interleaved (voltage, current) `f64`
//!   pairs in cycle-major order. Frames are converted to samples through
//!   the fundamental-power path at load time.
//!
//! The sampling cadence is a hard 1 Hz contract. Missing stretches are
//! recorded as gaps; a file whose rows sit on a uniform multi-second grid
//! is rejected as re-sampled data rather than resampled silently.

use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Read, Write};
use std::path::Path;

use crate::error::MeterDataError;
use crate::powercalc::{self, Phase, WaveformFrame};

/// Phase tag of a detected event: one hot phase or both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum PhaseTag {
    A,
    B,
    AB,
}

impl PhaseTag {
    /// Physical phases the tag touches.
    pub fn touches(&self, phase: Phase) -> bool {
        match self {
            PhaseTag::A => phase == Phase::A,
            PhaseTag::B => phase == Phase::B,
            PhaseTag::AB => true,
        }
    }

    pub fn overlaps(&self, other: PhaseTag) -> bool {
        self.touches(Phase::A) && other.touches(Phase::A)
            || self.touches(Phase::B) && other.touches(Phase::B)
    }

    pub fn is_double(&self) -> bool {
        matches!(self, PhaseTag::AB)
    }
}

impl std::fmt::Display for PhaseTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PhaseTag::A => write!(f, "A"),
            PhaseTag::B => write!(f, "B"),
            PhaseTag::AB => write!(f, "AB"),
        }
    }
}

impl std::str::FromStr for PhaseTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(PhaseTag::A),
            "B" | "b" => Ok(PhaseTag::B),
            "AB" | "ab" => Ok(PhaseTag::AB),
            other => Err(format!("unknown phase tag {other:?}")),
        }
    }
}

/// Direction of a power-change event. ON means the step raised power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Direction {
    On,
    Off,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::On => write!(f, "ON"),
            Direction::Off => write!(f, "OFF"),
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "ON" | "on" | "On" => Ok(Direction::On),
            "OFF" | "off" | "Off" => Ok(Direction::Off),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

/// One second of one phase: fundamental P/Q plus current THD.
/// `thd` is a fraction; `None` means no-load or unknown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSample {
    pub timestamp: u64,
    pub p_w: f64,
    pub q_var: f64,
    pub thd: Option<f64>,
}

/// Half-open missing interval `[start, end)` in recording seconds.
pub type Gap = (u64, u64);

/// Ordered samples and gaps of one phase. Samples and gaps together
/// partition the recording span.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseSeries {
    pub samples: Vec<PowerSample>,
    pub gaps: Vec<Gap>,
}

impl PhaseSeries {
    pub fn sample_at(&self, t: u64) -> Option<&PowerSample> {
        self.samples
            .binary_search_by_key(&t, |s| s.timestamp)
            .ok()
            .map(|i| &self.samples[i])
    }

    fn first_t(&self) -> Option<u64> {
        self.samples.first().map(|s| s.timestamp)
    }

    fn last_t(&self) -> Option<u64> {
        self.samples.last().map(|s| s.timestamp)
    }
}

/// Wall-clock anchor of sample 0: weekday (0 = Monday) plus seconds past
/// local midnight. The samples CSV carries no calendar metadata, so loads
/// default to Monday midnight unless told otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[derive(Default)]
pub struct Epoch {
    pub weekday0: u8,
    pub midnight_offset_s: u64,
}


pub const SECONDS_PER_DAY: u64 = 86_400;

impl Epoch {
    /// Local seconds-into-day of recording second `t`.
    pub fn time_of_day(&self, t: u64) -> u64 {
        (self.midnight_offset_s + t) % SECONDS_PER_DAY
    }

    /// Weekday (0 = Monday .. 6 = Sunday) of recording second `t`.
    pub fn weekday(&self, t: u64) -> u8 {
        ((self.weekday0 as u64 + (self.midnight_offset_s + t) / SECONDS_PER_DAY) % 7) as u8
    }
}

/// A validated two-phase recording. Immutable after load; every pipeline
/// stage reads it concurrently without copying.
#[derive(Debug, Clone, PartialEq)]
pub struct MeterRecording {
    pub epoch: Epoch,
    pub phase_a: PhaseSeries,
    pub phase_b: PhaseSeries,
}

impl MeterRecording {
    pub fn phase(&self, phase: Phase) -> &PhaseSeries {
        match phase {
            Phase::A => &self.phase_a,
            Phase::B => &self.phase_b,
        }
    }

    /// First covered second across both phases.
    pub fn start_t(&self) -> u64 {
        match (self.phase_a.first_t(), self.phase_b.first_t()) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => 0,
        }
    }

    /// One past the last covered second across both phases.
    pub fn end_t(&self) -> u64 {
        match (self.phase_a.last_t(), self.phase_b.last_t()) {
            (Some(a), Some(b)) => a.max(b) + 1,
            (Some(a), None) => a + 1,
            (None, Some(b)) => b + 1,
            (None, None) => 0,
        }
    }

    pub fn span_s(&self) -> u64 {
        self.end_t().saturating_sub(self.start_t())
    }

    /// Union of both phases' gaps, merged into disjoint intervals.
    pub fn merged_gaps(&self) -> Vec<Gap> {
        let mut all: Vec<Gap> = self
            .phase_a
            .gaps
            .iter()
            .chain(self.phase_b.gaps.iter())
            .copied()
            .collect();
        all.sort_unstable();
        let mut merged: Vec<Gap> = Vec::new();
        for g in all {
            match merged.last_mut() {
                Some(last) if g.0 <= last.1 => last.1 = last.1.max(g.1),
                _ => merged.push(g),
            }
        }
        merged
    }
}

/// A detected power-change event with its delta-signature.
///
/// `dp_w`/`dq_var` are signed steady-state differences across the edge;
/// `thd` is the switched load's own harmonic fraction (not the aggregate's).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LoadEvent {
    pub timestamp: u64,
    pub phase_tag: PhaseTag,
    pub direction: Direction,
    pub dp_w: f64,
    pub dq_var: f64,
    pub thd: Option<f64>,
    pub spike: bool,
    pub corrupted_hint: bool,
}

impl LoadEvent {
    /// THD in percent for rendering, or `None` when unknown.
    pub fn thd_pct(&self) -> Option<f64> {
        self.thd.map(|t| t * 100.0)
    }
}

// ---------------------------------------------------------------------------
// Samples CSV
// ---------------------------------------------------------------------------

pub const SAMPLES_CSV_HEADER: &str = "t_s,phase,P_W,Q_var,THD_pct";

struct RawRow {
    line: usize,
    t: u64,
    phase: Phase,
    p: f64,
    q: f64,
    thd: Option<f64>,
}

fn parse_samples_csv<R: BufRead>(reader: R) -> Result<Vec<RawRow>, MeterDataError> {
    let mut rows = Vec::new();
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(MeterDataError::Empty),
    };
    if header.trim() != SAMPLES_CSV_HEADER {
        return Err(MeterDataError::MalformedRow {
            line: 1,
            reason: format!("expected header {SAMPLES_CSV_HEADER:?}, found {header:?}"),
        });
    }
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 5 {
            return Err(MeterDataError::MalformedRow {
                line: line_no,
                reason: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let t: u64 = fields[0].trim().parse().map_err(|e| MeterDataError::MalformedRow {
            line: line_no,
            reason: format!("bad t_s {:?}: {e}", fields[0]),
        })?;
        let phase: Phase = fields[1].parse().map_err(|e| MeterDataError::MalformedRow {
            line: line_no,
            reason: e,
        })?;
        let p: f64 = fields[2].trim().parse().map_err(|e| MeterDataError::MalformedRow {
            line: line_no,
            reason: format!("bad P_W {:?}: {e}", fields[2]),
        })?;
        let q: f64 = fields[3].trim().parse().map_err(|e| MeterDataError::MalformedRow {
            line: line_no,
            reason: format!("bad Q_var {:?}: {e}", fields[3]),
        })?;
        let thd_field = fields[4].trim();
        let thd = if thd_field.is_empty() {
            None
        } else {
            let pct: f64 = thd_field.parse().map_err(|e| MeterDataError::MalformedRow {
                line: line_no,
                reason: format!("bad THD_pct {thd_field:?}: {e}"),
            })?;
            Some(pct / 100.0)
        };
        if p < 0.0 {
            return Err(MeterDataError::NegativePower {
                line: line_no,
                value: p,
            });
        }
        rows.push(RawRow {
            line: line_no,
            t,
            phase,
            p,
            q,
            thd,
        });
    }
    Ok(rows)
}

/// Builds one phase series from parsed rows, validating order, duplicates
/// and cadence, and deriving the gap list from timestamp jumps.
fn build_series(rows: &[RawRow], phase: Phase) -> Result<PhaseSeries, MeterDataError> {
    let mut samples = Vec::new();
    let mut gaps = Vec::new();
    let mut deltas: BTreeMap<u64, usize> = BTreeMap::new();
    let mut last: Option<(u64, usize)> = None;
    for row in rows.iter().filter(|r| r.phase == phase) {
        if let Some((prev_t, _prev_line)) = last {
            if row.t == prev_t {
                return Err(MeterDataError::DuplicateTimestamp {
                    line: row.line,
                    t: row.t,
                    phase: phase.to_string(),
                });
            }
            if row.t < prev_t {
                return Err(MeterDataError::OutOfOrder {
                    line: row.line,
                    t: row.t,
                    phase: phase.to_string(),
                });
            }
            let delta = row.t - prev_t;
            *deltas.entry(delta).or_insert(0) += 1;
            if delta > 1 {
                gaps.push((prev_t + 1, row.t));
            }
        }
        samples.push(PowerSample {
            timestamp: row.t,
            p_w: row.p,
            q_var: row.q,
            thd: row.thd,
        });
        last = Some((row.t, row.line));
    }
    // Uniform spacing d > 1 across several rows is a different sampling
    // cadence, not gaps in a 1 Hz stream.
    if deltas.len() == 1 {
        let (&delta, &count) = deltas.iter().next().unwrap();
        if delta > 1 && count >= 3 {
            let line = rows
                .iter()
                .filter(|r| r.phase == phase)
                .nth(1)
                .map(|r| r.line)
                .unwrap_or(0);
            return Err(MeterDataError::NonUnitCadence { line, delta });
        }
    }
    Ok(PhaseSeries { samples, gaps })
}

fn pad_to_common_span(rec: &mut MeterRecording) {
    // Both phases cover the same wall-clock span; a phase that starts late
    // or ends early carries the difference as a gap.
    let start = rec.start_t();
    let end = rec.end_t();
    for series in [&mut rec.phase_a, &mut rec.phase_b] {
        match (series.first_t(), series.last_t()) {
            (Some(first), Some(last)) => {
                if first > start {
                    series.gaps.insert(0, (start, first));
                }
                if last + 1 < end {
                    series.gaps.push((last + 1, end));
                }
            }
            _ => {
                if end > start {
                    series.gaps.push((start, end));
                }
            }
        }
    }
}

/// Loads a samples CSV with the default (Monday-midnight) epoch.
pub fn load_samples_csv(path: impl AsRef<Path>) -> Result<MeterRecording, MeterDataError> {
    load_samples_csv_with_epoch(path, Epoch::default())
}

pub fn load_samples_csv_with_epoch(
    path: impl AsRef<Path>,
    epoch: Epoch,
) -> Result<MeterRecording, MeterDataError> {
    let file = std::fs::File::open(path)?;
    let rows = parse_samples_csv(std::io::BufReader::new(file))?;
    recording_from_rows(rows, epoch)
}

/// Parses samples-CSV text already in memory.
pub fn parse_samples_str(
    text: &str,
    epoch: Epoch,
) -> Result<MeterRecording, MeterDataError> {
    let rows = parse_samples_csv(std::io::BufReader::new(text.as_bytes()))?;
    recording_from_rows(rows, epoch)
}

fn recording_from_rows(rows: Vec<RawRow>, epoch: Epoch) -> Result<MeterRecording, MeterDataError> {
    if rows.is_empty() {
        return Err(MeterDataError::Empty);
    }
    let mut rec = MeterRecording {
        epoch,
        phase_a: build_series(&rows, Phase::A)?,
        phase_b: build_series(&rows, Phase::B)?,
    };
    pad_to_common_span(&mut rec);
    Ok(rec)
}

/// Serializes a recording in canonical order: ascending timestamp, phase A
/// before phase B at equal timestamps. Floats use the shortest round-trip
/// representation, so save -> load -> save is stable.
pub fn write_samples_csv<W: Write>(rec: &MeterRecording, out: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{SAMPLES_CSV_HEADER}")?;
    let mut ia = 0;
    let mut ib = 0;
    let a = &rec.phase_a.samples;
    let b = &rec.phase_b.samples;
    while ia < a.len() || ib < b.len() {
        let take_a = match (a.get(ia), b.get(ib)) {
            (Some(sa), Some(sb)) => sa.timestamp <= sb.timestamp,
            (Some(_), None) => true,
            _ => false,
        };
        let (sample, phase) = if take_a {
            ia += 1;
            (&a[ia - 1], Phase::A)
        } else {
            ib += 1;
            (&b[ib - 1], Phase::B)
        };
        let thd = sample
            .thd
            .map(|t| (t * 100.0).to_string())
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            sample.timestamp, phase, sample.p_w, sample.q_var, thd
        )?;
    }
    w.flush()
}

pub fn save_samples_csv(rec: &MeterRecording, path: impl AsRef<Path>) -> std::io::Result<()> {
    write_samples_csv(rec, std::fs::File::create(path)?)
}

pub fn samples_csv_string(rec: &MeterRecording) -> String {
    let mut buf = Vec::new();
    write_samples_csv(rec, &mut buf).expect("in-memory write cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

// ---------------------------------------------------------------------------
// Waveform container
// ---------------------------------------------------------------------------

pub const WAVEFORM_MAGIC: [u8; 4] = *b"LSWF";
pub const WAVEFORM_VERSION: u16 = 1;

/// Writes frames to the binary waveform container (see module docs for the
/// layout). All frames must share `nominal_freq`.
pub fn write_waveform_frames<W: Write>(
    frames: &[WaveformFrame],
    out: W,
) -> Result<(), MeterDataError> {
    let mut w = BufWriter::new(out);
    let nominal = frames.first().map(|f| f.nominal_freq).unwrap_or(60.0);
    w.write_all(&WAVEFORM_MAGIC)?;
    w.write_all(&WAVEFORM_VERSION.to_le_bytes())?;
    w.write_all(&0u16.to_le_bytes())?;
    w.write_all(&nominal.to_le_bytes())?;
    for frame in frames {
        if frame.nominal_freq != nominal {
            return Err(MeterDataError::BadContainer(format!(
                "mixed nominal frequencies ({} vs {})",
                frame.nominal_freq, nominal
            )));
        }
        w.write_all(&frame.timestamp.to_le_bytes())?;
        w.write_all(&[match frame.phase {
            Phase::A => 0u8,
            Phase::B => 1u8,
        }])?;
        w.write_all(&(frame.n_cycles() as u16).to_le_bytes())?;
        w.write_all(&(frame.points_per_cycle as u16).to_le_bytes())?;
        for (vc, ic) in frame.voltage_cycles.iter().zip(&frame.current_cycles) {
            for (v, i) in vc.iter().zip(ic) {
                w.write_all(&v.to_le_bytes())?;
                w.write_all(&i.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_waveform_frames(
    frames: &[WaveformFrame],
    path: impl AsRef<Path>,
) -> Result<(), MeterDataError> {
    write_waveform_frames(frames, std::fs::File::create(path)?)
}

fn read_exact_opt<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool, MeterDataError> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(false);
            }
            return Err(MeterDataError::BadContainer(
                "truncated frame record".into(),
            ));
        }
        filled += n;
    }
    Ok(true)
}

/// Reads all frames from a waveform container.
pub fn read_waveform_frames<R: Read>(mut r: R) -> Result<Vec<WaveformFrame>, MeterDataError> {
    let mut magic = [0u8; 4];
    if !read_exact_opt(&mut r, &mut magic)? {
        return Err(MeterDataError::BadContainer("empty file".into()));
    }
    if magic != WAVEFORM_MAGIC {
        return Err(MeterDataError::BadContainer(format!(
            "bad magic {magic:?}"
        )));
    }
    let mut u16buf = [0u8; 2];
    read_exact_opt(&mut r, &mut u16buf)?;
    let version = u16::from_le_bytes(u16buf);
    if version != WAVEFORM_VERSION {
        return Err(MeterDataError::BadContainer(format!(
            "unsupported version {version}"
        )));
    }
    read_exact_opt(&mut r, &mut u16buf)?; // reserved
    let mut f64buf = [0u8; 8];
    read_exact_opt(&mut r, &mut f64buf)?;
    let nominal = f64::from_le_bytes(f64buf);

    let mut frames = Vec::new();
    loop {
        let mut tbuf = [0u8; 8];
        if !read_exact_opt(&mut r, &mut tbuf)? {
            break;
        }
        let timestamp = u64::from_le_bytes(tbuf);
        let mut pbuf = [0u8; 1];
        read_exact_opt(&mut r, &mut pbuf)?;
        let phase = match pbuf[0] {
            0 => Phase::A,
            1 => Phase::B,
            other => {
                return Err(MeterDataError::BadContainer(format!(
                    "bad phase byte {other}"
                )))
            }
        };
        read_exact_opt(&mut r, &mut u16buf)?;
        let n_cycles = u16::from_le_bytes(u16buf) as usize;
        read_exact_opt(&mut r, &mut u16buf)?;
        let ppc = u16::from_le_bytes(u16buf) as usize;
        if n_cycles == 0 || ppc < 32 {
            return Err(MeterDataError::BadContainer(format!(
                "bad frame geometry ({n_cycles} cycles, {ppc} points)"
            )));
        }
        let mut voltage_cycles = Vec::with_capacity(n_cycles);
        let mut current_cycles = Vec::with_capacity(n_cycles);
        for _ in 0..n_cycles {
            let mut v = Vec::with_capacity(ppc);
            let mut c = Vec::with_capacity(ppc);
            for _ in 0..ppc {
                read_exact_opt(&mut r, &mut f64buf)?;
                v.push(f64::from_le_bytes(f64buf));
                read_exact_opt(&mut r, &mut f64buf)?;
                c.push(f64::from_le_bytes(f64buf));
            }
            voltage_cycles.push(v);
            current_cycles.push(c);
        }
        frames.push(
            WaveformFrame::new(timestamp, phase, voltage_cycles, current_cycles, ppc, nominal)
                .map_err(|e| MeterDataError::BadContainer(e.to_string()))?,
        );
    }
    Ok(frames)
}

/// Loads a waveform container and converts each frame to one power sample
/// via the fundamental-power path. A frame with no measurable current gets
/// `THD = None` (no-load).
pub fn load_waveform_frames(path: impl AsRef<Path>) -> Result<MeterRecording, MeterDataError> {
    load_waveform_frames_with_epoch(path, Epoch::default())
}

pub fn load_waveform_frames_with_epoch(
    path: impl AsRef<Path>,
    epoch: Epoch,
) -> Result<MeterRecording, MeterDataError> {
    let file = std::fs::File::open(path)?;
    let frames = read_waveform_frames(std::io::BufReader::new(file))?;
    recording_from_frames(&frames, epoch)
}

pub fn recording_from_frames(
    frames: &[WaveformFrame],
    epoch: Epoch,
) -> Result<MeterRecording, MeterDataError> {
    if frames.is_empty() {
        return Err(MeterDataError::Empty);
    }
    let mut rows = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let (p, q) = powercalc::compute_pq(frame)?;
        let harmonics = powercalc::extract_harmonics(frame);
        let thd = if harmonics.degenerate {
            None
        } else {
            powercalc::compute_thd(&harmonics).ok()
        };
        rows.push(RawRow {
            line: i + 2,
            t: frame.timestamp,
            phase: frame.phase,
            p,
            q,
            thd,
        });
    }
    rows.sort_by_key(|r| (r.t, r.phase == Phase::B));
    recording_from_rows(rows, epoch)
}

/// Sniffs whether a file is a waveform container by its magic bytes.
pub fn is_waveform_file(path: impl AsRef<Path>) -> Result<bool, MeterDataError> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 4];
    match file.read(&mut magic) {
        Ok(4) => Ok(magic == WAVEFORM_MAGIC),
        _ => Ok(false),
    }
}

// ---------------------------------------------------------------------------
// Events dump CSV (debugging aid)
// ---------------------------------------------------------------------------

pub const EVENTS_CSV_HEADER: &str = "t_s,phase_tag,direction,dP_W,dQ_var,THD_pct,spike,corrupted";

pub fn write_events_csv<W: Write>(events: &[LoadEvent], out: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{EVENTS_CSV_HEADER}")?;
    for e in events {
        let thd = e.thd_pct().map(|t| t.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            e.timestamp, e.phase_tag, e.direction, e.dp_w, e.dq_var, thd, e.spike, e.corrupted_hint
        )?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powercalc::HarmonicVector;

    fn csv(rows: &str) -> String {
        format!("{SAMPLES_CSV_HEADER}\n{rows}")
    }

    #[test]
    fn two_row_file_loads_without_gaps() {
        let rec = parse_samples_str(&csv("0,A,100,5,1.0\n1,A,101,5,1.0\n"), Epoch::default())
            .unwrap();
        assert_eq!(rec.phase_a.samples.len(), 2);
        assert!(rec.phase_a.gaps.is_empty());
        assert_eq!(rec.span_s(), 2);
    }

    #[test]
    fn jump_becomes_gap() {
        let rec = parse_samples_str(&csv("0,A,100,5,1.0\n10,A,101,5,1.0\n"), Epoch::default())
            .unwrap();
        assert_eq!(rec.phase_a.gaps, vec![(1, 10)]);
    }

    #[test]
    fn uniform_two_second_grid_is_cadence_error() {
        let err = parse_samples_str(
            &csv("0,A,1,0,\n2,A,1,0,\n4,A,1,0,\n6,A,1,0,\n"),
            Epoch::default(),
        )
        .unwrap_err();
        assert!(matches!(err, MeterDataError::NonUnitCadence { delta: 2, .. }));
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        let err = parse_samples_str(&csv("0,A,1,0,\n0,A,2,0,\n"), Epoch::default()).unwrap_err();
        assert!(matches!(err, MeterDataError::DuplicateTimestamp { t: 0, .. }));
    }

    #[test]
    fn out_of_order_rejected() {
        let err = parse_samples_str(&csv("5,A,1,0,\n3,A,1,0,\n"), Epoch::default()).unwrap_err();
        assert!(matches!(err, MeterDataError::OutOfOrder { t: 3, .. }));
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let err =
            parse_samples_str(&csv("0,A,1,0,\nnot-a-number,A,1,0,\n"), Epoch::default())
                .unwrap_err();
        match err {
            MeterDataError::MalformedRow { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn negative_power_rejected() {
        let err = parse_samples_str(&csv("0,A,-5,0,\n"), Epoch::default()).unwrap_err();
        assert!(matches!(err, MeterDataError::NegativePower { .. }));
    }

    #[test]
    fn empty_thd_field_is_unknown() {
        let rec = parse_samples_str(&csv("0,A,1,0,\n1,A,1,0,12.5\n"), Epoch::default()).unwrap();
        assert_eq!(rec.phase_a.samples[0].thd, None);
        assert!((rec.phase_a.samples[1].thd.unwrap() - 0.125).abs() < 1e-12);
    }

    #[test]
    fn phases_padded_to_common_span() {
        let rec = parse_samples_str(
            &csv("0,A,1,0,\n1,A,1,0,\n2,A,1,0,\n1,B,1,0,\n"),
            Epoch::default(),
        )
        .unwrap();
        assert_eq!(rec.span_s(), 3);
        assert_eq!(rec.phase_b.gaps, vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn gaps_and_samples_partition_span() {
        let rec = parse_samples_str(
            &csv("0,A,1,0,\n1,A,1,0,\n5,A,1,0,\n0,B,1,0,\n5,B,1,0,\n"),
            Epoch::default(),
        )
        .unwrap();
        for series in [&rec.phase_a, &rec.phase_b] {
            let mut covered: Vec<u64> = series.samples.iter().map(|s| s.timestamp).collect();
            for &(s, e) in &series.gaps {
                covered.extend(s..e);
            }
            covered.sort_unstable();
            let expected: Vec<u64> = (rec.start_t()..rec.end_t()).collect();
            assert_eq!(covered, expected);
        }
    }

    #[test]
    fn save_load_save_is_byte_stable() {
        let text = csv("0,A,100.5,5.25,1.5\n0,B,80,2,\n1,A,101.75,5,2\n1,B,80,2,10\n");
        let rec = parse_samples_str(&text, Epoch::default()).unwrap();
        let s1 = samples_csv_string(&rec);
        let rec2 = parse_samples_str(&s1, Epoch::default()).unwrap();
        let s2 = samples_csv_string(&rec2);
        assert_eq!(s1, s2);
        assert_eq!(rec, rec2);
    }

    #[test]
    fn epoch_time_arithmetic() {
        let epoch = Epoch {
            weekday0: 4, // Friday
            midnight_offset_s: 3600,
        };
        assert_eq!(epoch.time_of_day(0), 3600);
        assert_eq!(epoch.weekday(0), 4);
        assert_eq!(epoch.weekday(SECONDS_PER_DAY), 5);
        assert_eq!(epoch.time_of_day(SECONDS_PER_DAY - 3600), 0);
    }

    #[test]
    fn waveform_roundtrip_single_frame() {
        let h = HarmonicVector::from_magnitudes([10.0, 0.0, 0.0, 0.0, 0.0]);
        let frame =
            crate::powercalc::synthesize_frame(7, Phase::A, 120.0, &h, 6, 64, 60.0).unwrap();
        let mut buf = Vec::new();
        write_waveform_frames(std::slice::from_ref(&frame), &mut buf).unwrap();
        let back = read_waveform_frames(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].timestamp, 7);
        assert_eq!(back[0].voltage_cycles, frame.voltage_cycles);
        assert_eq!(back[0].current_cycles, frame.current_cycles);
    }

    #[test]
    fn frames_convert_to_samples() {
        // 120 V, 10 A in phase -> 1200 W, 0 var, THD 0.
        let clean = HarmonicVector::from_magnitudes([10.0, 0.0, 0.0, 0.0, 0.0]);
        // Add a 0.3 p.u. third harmonic -> THD 0.3, same P/Q.
        let distorted = HarmonicVector::from_magnitudes([10.0, 3.0, 0.0, 0.0, 0.0]);
        let frames = vec![
            crate::powercalc::synthesize_frame(0, Phase::A, 120.0, &clean, 6, 64, 60.0).unwrap(),
            crate::powercalc::synthesize_frame(1, Phase::A, 120.0, &distorted, 6, 64, 60.0)
                .unwrap(),
        ];
        let rec = recording_from_frames(&frames, Epoch::default()).unwrap();
        let s0 = &rec.phase_a.samples[0];
        assert!((s0.p_w - 1200.0).abs() < 1e-6);
        assert!(s0.q_var.abs() < 1e-6);
        assert!(s0.thd.unwrap().abs() < 1e-9);
        let s1 = &rec.phase_a.samples[1];
        assert!((s1.p_w - 1200.0).abs() < 1e-6);
        assert!((s1.thd.unwrap() - 0.3).abs() < 1e-9);
    }

    #[test]
    fn bad_magic_rejected() {
        let err = read_waveform_frames(&b"NOPE"[..]).unwrap_err();
        assert!(matches!(err, MeterDataError::BadContainer(_)));
    }
}
