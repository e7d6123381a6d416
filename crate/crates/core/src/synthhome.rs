//! Deterministic synthetic-household generator.
//!
//! Builds labeled multi-day two-phase power series from configurable
//! appliance models: each appliance walks an ordered state machine on a
//! schedule, optionally with an inrush transient on cycle start and
//! occasional ancillary sub-loads. The per-second aggregate is the exact
//! superposition of the appliance contributions plus a base load and
//! Gaussian meter noise, and every state transition is logged with its true
//! delta-signature — the reference that extraction results are scored
//! against.
//!
//! Everything is driven by one `u64` seed. Per-appliance streams are keyed
//! by appliance name, so a given appliance produces the same activity
//! regardless of which other appliances share the scenario.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::filtration::{DayFilter, SearchWindow};
use crate::meterdata::{
    Direction, Epoch, MeterRecording, PhaseSeries, PhaseTag, PowerSample, SECONDS_PER_DAY,
};
use crate::rng;

/// Uniform integer draw in `[min_s, max_s]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationDist {
    pub min_s: u64,
    pub max_s: u64,
}

impl DurationDist {
    pub fn fixed(s: u64) -> Self {
        Self { min_s: s, max_s: s }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> u64 {
        if self.max_s <= self.min_s {
            self.min_s
        } else {
            rng.gen_range(self.min_s..=self.max_s)
        }
    }
}

/// One state of an appliance's operation cycle. `thd` is a fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceState {
    pub label: String,
    pub p_w: f64,
    pub q_var: f64,
    pub thd: f64,
    pub duration: DurationDist,
}

/// Inrush transient applied to the first state of every cycle: the first
/// second peaks at `peak_multiplier` times the steady level and the excess
/// decays as `exp(-3k / decay_s)`, cut off after `2 * decay_s` seconds so
/// the settled level is numerically exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InrushSpec {
    pub peak_multiplier: f64,
    pub decay_s: f64,
}

impl InrushSpec {
    fn excess(&self, steady_w: f64, k: u64) -> f64 {
        if (k as f64) < (2.0 * self.decay_s).ceil() {
            (self.peak_multiplier - 1.0) * steady_w * (-3.0 * k as f64 / self.decay_s).exp()
        } else {
            0.0
        }
    }
}

/// An ancillary sub-load that fires during some cycles (a door light, a
/// hood fan): a rectangular pulse somewhere inside the cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccasionalElement {
    pub label: String,
    pub p_w: f64,
    pub q_var: f64,
    pub thd: f64,
    pub duration: DurationDist,
    /// Probability of firing per cycle.
    pub probability: f64,
    /// Earliest start offset within the cycle, seconds.
    pub min_offset_s: u64,
}

/// When an appliance runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Schedule {
    /// Thermostat-style: cycles repeat separated by a drawn gap, optionally
    /// confined to daily windows (empty = all day).
    Periodic {
        gap: DurationDist,
        #[serde(default)]
        windows: Vec<SearchWindow>,
    },
    /// Usage-style: a drawn number of cycles per day placed uniformly in
    /// the matching windows, kept at least two minutes apart.
    Windowed {
        windows: Vec<SearchWindow>,
        cycles_per_day: (u64, u64),
    },
}

/// A synthetic appliance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceModel {
    pub name: String,
    pub phase: PhaseTag,
    pub states: Vec<ApplianceState>,
    #[serde(default)]
    pub inrush: Option<InrushSpec>,
    #[serde(default)]
    pub occasional: Vec<OccasionalElement>,
    pub schedule: Schedule,
    /// Extra per-second wobble on the appliance's own contribution, watts.
    #[serde(default)]
    pub noise_sigma_w: f64,
}

/// A household scenario: appliances, base load and meter noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub days: u64,
    /// Meter noise sigma per phase, watts (Q noise is half, harmonic noise
    /// a fifth).
    pub noise_sigma_w: f64,
    /// Always-on standby load per phase.
    pub base_p_w: f64,
    pub base_q_var: f64,
    /// Fraction of the base load's VA carried as harmonics.
    pub base_thd: f64,
    pub appliances: Vec<ApplianceModel>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let err = |path: &str, reason: String| {
            Err(ScenarioError::Config {
                path: path.to_string(),
                reason,
            })
        };
        if self.days == 0 {
            return err("days", "must be at least 1".into());
        }
        if self.noise_sigma_w < 0.0 || self.base_p_w < 0.0 {
            return err("noise/base", "negative noise or base load".into());
        }
        for (ai, a) in self.appliances.iter().enumerate() {
            let path = format!("appliances[{ai}] ({})", a.name);
            if a.states.is_empty() {
                return err(&path, "no states".into());
            }
            for s in &a.states {
                if s.duration.min_s == 0 || s.duration.max_s < s.duration.min_s {
                    return err(&path, format!("state {} has bad duration", s.label));
                }
                if s.p_w < 0.0 || s.thd < 0.0 {
                    return err(&path, format!("state {} has negative P or THD", s.label));
                }
            }
            for o in &a.occasional {
                if !(0.0..=1.0).contains(&o.probability) {
                    return err(&path, format!("occasional {} probability", o.label));
                }
            }
            let windows = match &a.schedule {
                Schedule::Periodic { windows, .. } => windows,
                Schedule::Windowed { windows, .. } => windows,
            };
            for w in windows {
                if w.end <= w.start || w.end > SECONDS_PER_DAY as u32 {
                    return err(&path, "schedule window outside a day".into());
                }
            }
            if let Schedule::Windowed { windows, .. } = &a.schedule {
                if windows.is_empty() {
                    return err(&path, "windowed schedule without windows".into());
                }
            }
        }
        Ok(())
    }
}

pub fn load_scenario(path: impl AsRef<std::path::Path>) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    parse_scenario(&text)
}

pub fn parse_scenario(json: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario =
        serde_json::from_str(json).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

/// One labeled ground-truth event. `state` is the transition label
/// (`from>to` for state-machine moves, `<element>_on`/`_off` for occasional
/// sub-loads). `thd` is the switched chunk's own harmonic fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub t: u64,
    pub appliance: String,
    pub direction: Direction,
    pub dp_w: f64,
    pub dq_var: f64,
    pub thd: f64,
    pub state: String,
}

/// Ground truth for a generated recording.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthLog {
    pub events: Vec<TruthEvent>,
    /// Cycles actually placed per appliance (the generator's own count).
    pub cycles_placed: Vec<(String, usize)>,
}

impl GroundTruthLog {
    pub fn events_for<'a>(&'a self, appliance: &'a str) -> impl Iterator<Item = &'a TruthEvent> + 'a {
        self.events.iter().filter(move |e| e.appliance == appliance)
    }
}

pub const TRUTH_CSV_HEADER: &str = "t_s,appliance,direction,dP_W,dQ_var,THD_pct,state";

pub fn write_truth_csv<W: std::io::Write>(
    log: &GroundTruthLog,
    out: W,
) -> std::io::Result<()> {
    use std::io::Write as _;
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "{TRUTH_CSV_HEADER}")?;
    for e in &log.events {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            e.t,
            e.appliance,
            e.direction,
            e.dp_w,
            e.dq_var,
            e.thd * 100.0,
            e.state
        )?;
    }
    w.flush()
}

pub fn truth_csv_string(log: &GroundTruthLog) -> String {
    let mut buf = Vec::new();
    write_truth_csv(log, &mut buf).expect("in-memory write cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

pub fn save_truth_csv(log: &GroundTruthLog, path: impl AsRef<std::path::Path>) -> std::io::Result<()> {
    write_truth_csv(log, std::fs::File::create(path)?)
}

pub fn parse_truth_csv(text: &str) -> Result<GroundTruthLog, ScenarioError> {
    let mut events = Vec::new();
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == TRUTH_CSV_HEADER => {}
        other => {
            return Err(ScenarioError::Parse(format!(
                "expected truth header, found {other:?}"
            )))
        }
    }
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(ScenarioError::Parse(format!(
                "truth line {}: expected 7 fields, found {}",
                i + 2,
                f.len()
            )));
        }
        let parse_err = |what: &str| ScenarioError::Parse(format!("truth line {}: bad {what}", i + 2));
        events.push(TruthEvent {
            t: f[0].trim().parse().map_err(|_| parse_err("t_s"))?,
            appliance: f[1].trim().to_string(),
            direction: f[2].parse().map_err(|_| parse_err("direction"))?,
            dp_w: f[3].trim().parse().map_err(|_| parse_err("dP_W"))?,
            dq_var: f[4].trim().parse().map_err(|_| parse_err("dQ_var"))?,
            thd: f[5].trim().parse::<f64>().map_err(|_| parse_err("THD_pct"))? / 100.0,
            state: f[6].trim().to_string(),
        });
    }
    Ok(GroundTruthLog {
        events,
        cycles_placed: Vec::new(),
    })
}

pub fn load_truth_csv(path: impl AsRef<std::path::Path>) -> Result<GroundTruthLog, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    parse_truth_csv(&text)
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Per-phase accumulators: active power, reactive power and harmonic VA.
struct Accumulator {
    p: Vec<f64>,
    q: Vec<f64>,
    h: Vec<f64>,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Self {
            p: vec![0.0; n],
            q: vec![0.0; n],
            h: vec![0.0; n],
        }
    }

    fn add(&mut self, t: u64, p: f64, q: f64, h: f64) {
        let i = t as usize;
        if i < self.p.len() {
            self.p[i] += p;
            self.q[i] += q;
            self.h[i] += h;
        }
    }
}

struct CyclePlan {
    start: u64,
    state_durs: Vec<u64>,
    /// (element index, on offset, duration)
    occasionals: Vec<(usize, u64, u64)>,
}

impl CyclePlan {
    fn total(&self) -> u64 {
        self.state_durs.iter().sum()
    }
}

fn window_matches(w: &SearchWindow, epoch: &Epoch, t: u64) -> bool {
    let tod = epoch.time_of_day(t) as u32;
    w.days.matches(epoch.weekday(t)) && w.start <= tod && tod < w.end
}

/// Smallest t' >= t whose time-of-day falls inside some window.
fn advance_to_window(windows: &[SearchWindow], epoch: &Epoch, t: u64, horizon: u64) -> Option<u64> {
    if windows.is_empty() {
        return Some(t);
    }
    let mut cursor = t;
    while cursor < horizon {
        if windows.iter().any(|w| window_matches(w, epoch, cursor)) {
            return Some(cursor);
        }
        // Jump to the next window boundary of today or to midnight.
        let tod = epoch.time_of_day(cursor) as u32;
        let day_start = cursor - tod as u64;
        let next: u64 = windows
            .iter()
            .filter(|w| w.start as u64 > tod as u64 && w.days.matches(epoch.weekday(cursor)))
            .map(|w| day_start + w.start as u64)
            .min()
            .unwrap_or(day_start + SECONDS_PER_DAY);
        cursor = next;
    }
    None
}

fn plan_cycles<R: Rng>(
    appliance: &ApplianceModel,
    epoch: &Epoch,
    total_s: u64,
    rng: &mut R,
) -> Vec<CyclePlan> {
    let draw_durs = |rng: &mut R| -> Vec<u64> {
        appliance.states.iter().map(|s| s.duration.draw(rng)).collect()
    };
    let draw_occasionals = |rng: &mut R, cycle_len: u64| -> Vec<(usize, u64, u64)> {
        let mut out = Vec::new();
        for (ei, el) in appliance.occasional.iter().enumerate() {
            let fires = rng.gen::<f64>() < el.probability;
            let dur = el.duration.draw(rng);
            if !fires {
                continue;
            }
            let latest = cycle_len.saturating_sub(dur + 60);
            if latest <= el.min_offset_s {
                continue;
            }
            let on = rng.gen_range(el.min_offset_s..=latest);
            out.push((ei, on, dur));
        }
        out
    };

    let mut plans: Vec<CyclePlan> = Vec::new();
    match &appliance.schedule {
        Schedule::Periodic { gap, windows } => {
            let mut t = gap.draw(rng);
            loop {
                let Some(start) = advance_to_window(windows, epoch, t, total_s) else {
                    break;
                };
                let state_durs = draw_durs(rng);
                let total: u64 = state_durs.iter().sum();
                if start + total >= total_s {
                    break;
                }
                let occasionals = draw_occasionals(rng, total);
                plans.push(CyclePlan {
                    start,
                    state_durs,
                    occasionals,
                });
                t = start + total + gap.draw(rng);
            }
        }
        Schedule::Windowed {
            windows,
            cycles_per_day,
        } => {
            for day in 0..(total_s / SECONDS_PER_DAY) {
                let weekday = epoch.weekday(day * SECONDS_PER_DAY);
                let todays: Vec<&SearchWindow> =
                    windows.iter().filter(|w| w.days.matches(weekday)).collect();
                let count = if cycles_per_day.1 <= cycles_per_day.0 {
                    cycles_per_day.0
                } else {
                    rng.gen_range(cycles_per_day.0..=cycles_per_day.1)
                };
                if todays.is_empty() || count == 0 {
                    continue;
                }
                let mut draws: Vec<CyclePlan> = Vec::new();
                for _ in 0..count {
                    let w = todays[rng.gen_range(0..todays.len())];
                    let start =
                        day * SECONDS_PER_DAY + rng.gen_range(w.start..w.end) as u64;
                    let state_durs = draw_durs(rng);
                    let total: u64 = state_durs.iter().sum();
                    let occasionals = draw_occasionals(rng, total);
                    draws.push(CyclePlan {
                        start,
                        state_durs,
                        occasionals,
                    });
                }
                draws.sort_by_key(|p| p.start);
                // Keep cycles at least two minutes apart: colliding draws
                // are shifted forward rather than lost, and dropped only
                // when pushed past the end of the recording.
                let mut last_end = plans.last().map(|p: &CyclePlan| p.start + p.total()).unwrap_or(0);
                for mut plan in draws {
                    plan.start = plan.start.max(last_end + 120);
                    if plan.start + plan.total() < total_s {
                        last_end = plan.start + plan.total();
                        plans.push(plan);
                    }
                }
            }
        }
    }
    plans
}

fn chunk_thd(p_hi: f64, q_hi: f64, h_hi: f64, p_lo: f64, q_lo: f64, h_lo: f64) -> f64 {
    let dp = p_hi - p_lo;
    let dq = q_hi - q_lo;
    let denom = (dp * dp + dq * dq).sqrt();
    if denom < 1e-12 {
        0.0
    } else {
        (h_hi - h_lo).abs() / denom
    }
}

fn harmonic_va(p: f64, q: f64, thd: f64) -> f64 {
    thd * (p * p + q * q).sqrt()
}

fn run_appliance(
    appliance: &ApplianceModel,
    plans: &[CyclePlan],
    acc_a: &mut Accumulator,
    acc_b: &mut Accumulator,
    truth: &mut Vec<TruthEvent>,
    wobble_rng: &mut impl Rng,
) {
    let (fa, fb) = match appliance.phase {
        PhaseTag::A => (1.0, 0.0),
        PhaseTag::B => (0.0, 1.0),
        PhaseTag::AB => (0.5, 0.5),
    };
    let add = |acc_a: &mut Accumulator, acc_b: &mut Accumulator, t: u64, p: f64, q: f64, h: f64| {
        if fa > 0.0 {
            acc_a.add(t, p * fa, q * fa, h * fa);
        }
        if fb > 0.0 {
            acc_b.add(t, p * fb, q * fb, h * fb);
        }
    };

    for plan in plans {
        let mut cursor = plan.start;
        let mut prev: Option<&ApplianceState> = None;
        for (si, state) in appliance.states.iter().enumerate() {
            let dur = plan.state_durs[si];
            for k in 0..dur {
                let mut p_inst = state.p_w;
                if si == 0 {
                    if let Some(inrush) = &appliance.inrush {
                        p_inst += inrush.excess(state.p_w, k);
                    }
                }
                if appliance.noise_sigma_w > 0.0 {
                    p_inst = (p_inst + appliance.noise_sigma_w * rng::gaussian(wobble_rng)).max(0.0);
                }
                let h = harmonic_va(p_inst, state.q_var, state.thd);
                add(acc_a, acc_b, cursor + k, p_inst, state.q_var, h);
            }
            let (p0, q0, h0, from) = match prev {
                Some(p) => (p.p_w, p.q_var, harmonic_va(p.p_w, p.q_var, p.thd), p.label.as_str()),
                None => (0.0, 0.0, 0.0, "off"),
            };
            let h1 = harmonic_va(state.p_w, state.q_var, state.thd);
            let dp = state.p_w - p0;
            let dq = state.q_var - q0;
            if dp != 0.0 || dq != 0.0 {
                truth.push(TruthEvent {
                    t: cursor,
                    appliance: appliance.name.clone(),
                    direction: if dp > 0.0 { Direction::On } else { Direction::Off },
                    dp_w: dp,
                    dq_var: dq,
                    thd: chunk_thd(state.p_w, state.q_var, h1, p0, q0, h0),
                    state: format!("{from}>{}", state.label),
                });
            }
            prev = Some(state);
            cursor += dur;
        }
        if let Some(last) = prev {
            truth.push(TruthEvent {
                t: cursor,
                appliance: appliance.name.clone(),
                direction: Direction::Off,
                dp_w: -last.p_w,
                dq_var: -last.q_var,
                thd: last.thd,
                state: format!("{}>off", last.label),
            });
        }

        for &(ei, on, dur) in &plan.occasionals {
            let el = &appliance.occasional[ei];
            let h = harmonic_va(el.p_w, el.q_var, el.thd);
            for k in 0..dur {
                add(acc_a, acc_b, plan.start + on + k, el.p_w, el.q_var, h);
            }
            truth.push(TruthEvent {
                t: plan.start + on,
                appliance: appliance.name.clone(),
                direction: Direction::On,
                dp_w: el.p_w,
                dq_var: el.q_var,
                thd: el.thd,
                state: format!("{}_on", el.label),
            });
            truth.push(TruthEvent {
                t: plan.start + on + dur,
                appliance: appliance.name.clone(),
                direction: Direction::Off,
                dp_w: -el.p_w,
                dq_var: -el.q_var,
                thd: el.thd,
                state: format!("{}_off", el.label),
            });
        }
    }
}

fn finalize(
    scenario: &Scenario,
    seed: u64,
    total_s: u64,
    mut acc_a: Accumulator,
    mut acc_b: Accumulator,
    mut truth: Vec<TruthEvent>,
    cycles_placed: Vec<(String, usize)>,
) -> (MeterRecording, GroundTruthLog) {
    for (acc, label) in [(&mut acc_a, "noise:A"), (&mut acc_b, "noise:B")] {
        for i in 0..total_s as usize {
            acc.p[i] += scenario.base_p_w;
            acc.q[i] += scenario.base_q_var;
            acc.h[i] += harmonic_va(scenario.base_p_w, scenario.base_q_var, scenario.base_thd);
        }
        if scenario.noise_sigma_w > 0.0 {
            let mut nrng = rng::stream(seed, label);
            for i in 0..total_s as usize {
                acc.p[i] = (acc.p[i] + scenario.noise_sigma_w * rng::gaussian(&mut nrng)).max(0.0);
                acc.q[i] += 0.5 * scenario.noise_sigma_w * rng::gaussian(&mut nrng);
                acc.h[i] =
                    (acc.h[i] + 0.2 * scenario.noise_sigma_w * rng::gaussian(&mut nrng)).max(0.0);
            }
        }
    }

    let to_series = |acc: &Accumulator| PhaseSeries {
        samples: (0..total_s)
            .map(|t| {
                let i = t as usize;
                let s = (acc.p[i] * acc.p[i] + acc.q[i] * acc.q[i]).sqrt();
                PowerSample {
                    timestamp: t,
                    p_w: acc.p[i],
                    q_var: acc.q[i],
                    thd: if s > 1e-9 { Some(acc.h[i] / s) } else { None },
                }
            })
            .collect(),
        gaps: Vec::new(),
    };

    truth.sort_by(|a, b| (a.t, &a.appliance, &a.state).cmp(&(b.t, &b.appliance, &b.state)));
    (
        MeterRecording {
            epoch: Epoch::default(),
            phase_a: to_series(&acc_a),
            phase_b: to_series(&acc_b),
        },
        GroundTruthLog {
            events: truth,
            cycles_placed,
        },
    )
}

/// Generates a labeled recording: deterministic for a fixed
/// (scenario, seed, days).
pub fn generate(
    scenario: &Scenario,
    seed: u64,
    days: u64,
) -> Result<(MeterRecording, GroundTruthLog), ScenarioError> {
    scenario.validate()?;
    if days == 0 {
        return Err(ScenarioError::Config {
            path: "days".into(),
            reason: "must be at least 1".into(),
        });
    }
    let total_s = days * SECONDS_PER_DAY;
    let epoch = Epoch::default();
    let mut acc_a = Accumulator::new(total_s as usize);
    let mut acc_b = Accumulator::new(total_s as usize);
    let mut truth = Vec::new();
    let mut cycles_placed = Vec::new();

    for appliance in &scenario.appliances {
        let mut arng = rng::stream(seed, &format!("appliance:{}", appliance.name));
        let plans = plan_cycles(appliance, &epoch, total_s, &mut arng);
        cycles_placed.push((appliance.name.clone(), plans.len()));
        let mut wobble = rng::stream(seed, &format!("wobble:{}", appliance.name));
        run_appliance(appliance, &plans, &mut acc_a, &mut acc_b, &mut truth, &mut wobble);
    }

    Ok(finalize(scenario, seed, total_s, acc_a, acc_b, truth, cycles_placed))
}

// ---------------------------------------------------------------------------
// Built-in scenarios
// ---------------------------------------------------------------------------

fn window(start_h: u32, start_m: u32, end_h: u32, end_m: u32, days: DayFilter) -> SearchWindow {
    SearchWindow {
        start: start_h * 3600 + start_m * 60,
        end: end_h * 3600 + end_m * 60,
        days,
    }
}

fn state(label: &str, p: f64, q: f64, thd: f64, min_s: u64, max_s: u64) -> ApplianceState {
    ApplianceState {
        label: label.into(),
        p_w: p,
        q_var: q,
        thd,
        duration: DurationDist { min_s, max_s },
    }
}

/// The default eight-appliance household. Every appliance's ON signature
/// sits strictly inside its condition-row ranges, and schedules are chosen
/// so each appliance dominates its own search domain.
pub fn default_house_scenario() -> Scenario {
    Scenario {
        name: "default-house".into(),
        days: 7,
        noise_sigma_w: 5.0,
        base_p_w: 80.0,
        base_q_var: 25.0,
        base_thd: 0.024,
        appliances: vec![
            ApplianceModel {
                name: "Fridge".into(),
                phase: PhaseTag::A,
                states: vec![state("compressor", 160.0, 95.0, 0.08, 780, 900)],
                inrush: Some(InrushSpec {
                    peak_multiplier: 4.0,
                    decay_s: 1.0,
                }),
                occasional: vec![OccasionalElement {
                    label: "door_light".into(),
                    p_w: 90.0,
                    q_var: 5.0,
                    thd: 0.0,
                    duration: DurationDist { min_s: 30, max_s: 60 },
                    probability: 0.45,
                    min_offset_s: 90,
                }],
                schedule: Schedule::Periodic {
                    gap: DurationDist {
                        min_s: 1200,
                        max_s: 1500,
                    },
                    windows: Vec::new(),
                },
                noise_sigma_w: 0.0,
            },
            ApplianceModel {
                name: "Furnace".into(),
                phase: PhaseTag::B,
                states: vec![
                    state("blower", 490.0, 460.0, 0.04, 170, 190),
                    state("heat_high", 770.0, 630.0, 0.04, 220, 260),
                    state("blower", 490.0, 460.0, 0.04, 170, 190),
                    state("heat_high", 770.0, 630.0, 0.04, 220, 260),
                    state("blower", 490.0, 460.0, 0.04, 150, 170),
                ],
                inrush: Some(InrushSpec {
                    peak_multiplier: 3.0,
                    decay_s: 1.0,
                }),
                occasional: Vec::new(),
                schedule: Schedule::Periodic {
                    gap: DurationDist {
                        min_s: 3600,
                        max_s: 5400,
                    },
                    windows: vec![
                        window(0, 0, 8, 0, DayFilter::All),
                        window(19, 30, 24, 0, DayFilter::All),
                    ],
                },
                noise_sigma_w: 0.0,
            },
            ApplianceModel {
                name: "Microwave".into(),
                phase: PhaseTag::B,
                states: vec![state("magnetron", 1400.0, 260.0, 0.32, 150, 280)],
                inrush: None,
                occasional: Vec::new(),
                schedule: Schedule::Windowed {
                    windows: vec![
                        window(6, 30, 8, 30, DayFilter::All),
                        window(11, 30, 13, 30, DayFilter::All),
                    ],
                    cycles_per_day: (3, 4),
                },
                noise_sigma_w: 0.0,
            },
            ApplianceModel {
                name: "Stove (big element)".into(),
                phase: PhaseTag::AB,
                states: vec![state("element", 2400.0, 14.0, 0.02, 100, 160)],
                inrush: None,
                occasional: Vec::new(),
                schedule: Schedule::Windowed {
                    windows: vec![window(17, 30, 19, 30, DayFilter::All)],
                    cycles_per_day: (6, 8),
                },
                noise_sigma_w: 0.0,
            },
            ApplianceModel {
                name: "Oven".into(),
                phase: PhaseTag::AB,
                states: vec![state("bake", 3400.0, 16.0, 0.02, 520, 560)],
                inrush: None,
                occasional: Vec::new(),
                schedule: Schedule::Windowed {
                    windows: vec![window(9, 0, 11, 30, DayFilter::All)],
                    cycles_per_day: (3, 3),
                },
                noise_sigma_w: 0.0,
            },
            ApplianceModel {
                name: "Kettle".into(),
                phase: PhaseTag::A,
                states: vec![state("boil", 1800.0, 10.0, 0.005, 200, 250)],
                inrush: None,
                occasional: Vec::new(),
                schedule: Schedule::Windowed {
                    windows: vec![
                        window(6, 30, 8, 30, DayFilter::All),
                        window(12, 0, 13, 30, DayFilter::All),
                    ],
                    cycles_per_day: (3, 3),
                },
                noise_sigma_w: 0.0,
            },
            ApplianceModel {
                name: "Clothes dryer".into(),
                phase: PhaseTag::AB,
                states: vec![
                    state("full_heat", 5300.0, 170.0, 0.02, 400, 440),
                    state("half_heat", 2400.0, 120.0, 0.025, 280, 320),
                    state("full_heat", 5300.0, 170.0, 0.02, 400, 440),
                    state("half_heat", 2400.0, 120.0, 0.025, 280, 320),
                    state("full_heat", 5300.0, 170.0, 0.02, 340, 380),
                ],
                inrush: Some(InrushSpec {
                    peak_multiplier: 2.5,
                    decay_s: 1.5,
                }),
                occasional: Vec::new(),
                schedule: Schedule::Windowed {
                    windows: vec![window(11, 45, 16, 0, DayFilter::Weekend)],
                    cycles_per_day: (3, 3),
                },
                noise_sigma_w: 0.0,
            },
            ApplianceModel {
                name: "Washer (top-load)".into(),
                phase: PhaseTag::B,
                states: vec![state("agitate", 700.0, 600.0, 0.10, 280, 320)],
                inrush: Some(InrushSpec {
                    peak_multiplier: 3.0,
                    decay_s: 1.0,
                }),
                occasional: Vec::new(),
                schedule: Schedule::Windowed {
                    windows: vec![window(8, 0, 10, 0, DayFilter::Weekend)],
                    cycles_per_day: (12, 12),
                },
                noise_sigma_w: 0.0,
            },
        ],
    }
}

/// A tiny two-appliance scenario used in examples and quick tests.
pub fn demo_scenario() -> Scenario {
    let mut scenario = default_house_scenario();
    scenario.name = "demo".into();
    scenario.days = 1;
    scenario.appliances.retain(|a| a.name == "Fridge" || a.name == "Kettle");
    scenario
}

// ---------------------------------------------------------------------------
// Heater laboratory bench
// ---------------------------------------------------------------------------

/// Identity of one scripted heater-bench event class.
#[derive(Debug, Clone, Copy)]
pub struct BenchIdentity {
    pub id: usize,
    pub dp_w: f64,
    pub dq_var: f64,
    pub thd: f64,
    /// Expected occurrence count across the 12 runs.
    pub expected_n: usize,
    /// True when at least one run holds two occurrences.
    pub expected_repeat: bool,
}

/// The eleven scripted event identities of the heater bench: the heater's
/// own five (ON, element pair, fan-down, OFF), the sway pair, and the
/// microwave/lamp interference.
pub fn bench_identities() -> Vec<BenchIdentity> {
    let mk = |id, dp_w, dq_var, thd, expected_n, expected_repeat| BenchIdentity {
        id,
        dp_w,
        dq_var,
        thd,
        expected_n,
        expected_repeat,
    };
    vec![
        mk(1, 1500.0, 35.0, 0.010, 12, false),
        mk(2, -520.0, -8.0, 0.004, 21, true),
        mk(3, 520.0, 8.0, 0.004, 21, true),
        mk(4, -380.0, -27.0, 0.020, 12, false),
        mk(5, -1120.0, -8.0, 0.0066, 12, false),
        mk(6, 95.0, 28.0, 0.030, 4, false),
        mk(7, -95.0, -28.0, 0.030, 4, false),
        mk(8, 1280.0, 300.0, 0.300, 3, false),
        mk(9, -1280.0, -300.0, 0.300, 3, false),
        mk(10, 260.0, 0.0, 0.0, 2, false),
        mk(11, -260.0, 0.0, 0.0, 3, false),
    ]
}

/// Condition row used to pick the heater's authentic ON events out of the
/// bench recording.
pub fn heater_condition_row() -> crate::filtration::ConditionRow {
    crate::filtration::ConditionRow {
        appliance: "Space heater".into(),
        p_range_w: (1200.0, 1800.0),
        q_range_var: (0.0, 100.0),
        thd_range_pct: (0.0, 5.0),
        spike_required: crate::filtration::SpikeRequirement::Either,
        phase_condition: crate::filtration::PhaseCondition::Single,
        search_windows: vec![SearchWindow {
            start: 0,
            end: SECONDS_PER_DAY as u32,
            days: DayFilter::All,
        }],
        avg_duration_min: 30.0,
        category: crate::filtration::LoadCategory::LinearActive,
        weights: None,
    }
}

/// Generates the heater laboratory recording: twelve 30-minute runs on one
/// day — five heating-only, four with the sway function, one with microwave
/// interference and two with lamp plus microwave interference. Event
/// identities 1..11 are recorded in the ground truth.
pub fn heater_lab_scenarios(seed: u64) -> (MeterRecording, GroundTruthLog) {
    let total_s = SECONDS_PER_DAY;
    let mut acc_a = Accumulator::new(total_s as usize);
    let acc_b = Accumulator::new(total_s as usize);
    let mut truth: Vec<TruthEvent> = Vec::new();

    // Additive rectangular contribution on phase A.
    let pulse = |acc: &mut Accumulator, from: u64, to: u64, p: f64, q: f64, thd: f64| {
        let h = harmonic_va(p, q, thd);
        for t in from..to {
            acc.add(t, p, q, h);
        }
    };
    let log = |truth: &mut Vec<TruthEvent>, t: u64, id: usize, dp: f64, dq: f64, thd: f64| {
        truth.push(TruthEvent {
            t,
            appliance: "Space heater bench".into(),
            direction: if dp > 0.0 { Direction::On } else { Direction::Off },
            dp_w: dp,
            dq_var: dq,
            thd,
            state: format!("e{id:02}"),
        });
    };

    let run_len = 1800u64;
    for run in 0..12u64 {
        let t0 = 3600 + run * 5400;
        let pairs: &[u64] = if run < 9 { &[300, 800] } else { &[300] };
        let sway = (5..9).contains(&run);
        let microwave = run >= 9;
        let lamp_pre_on = run == 9;
        let lamp_mid = run >= 10;

        // Heater level walk: full 1500/35, element dips to 980/27, fan-down
        // leaves 1120/8 before the OFF. THD 1% while the element is on.
        let h_full = harmonic_va(1500.0, 35.0, 0.010);
        let h_dip = h_full - harmonic_va(520.0, 8.0, 0.004);
        let h_low = h_full - harmonic_va(380.0, 27.0, 0.020);
        let mut segments: Vec<(u64, u64, f64, f64, f64)> = Vec::new();
        let mut cursor = 0u64;
        for &pair_at in pairs {
            segments.push((cursor, pair_at, 1500.0, 35.0, h_full));
            segments.push((pair_at, pair_at + 120, 980.0, 27.0, h_dip));
            cursor = pair_at + 120;
        }
        segments.push((cursor, 1740, 1500.0, 35.0, h_full));
        segments.push((1740, run_len, 1120.0, 8.0, h_low));
        for (from, to, p, q, h) in segments {
            for t in t0 + from..t0 + to {
                acc_a.add(t, p, q, h);
            }
        }
        log(&mut truth, t0, 1, 1500.0, 35.0, 0.010);
        for &pair_at in pairs {
            log(&mut truth, t0 + pair_at, 2, -520.0, -8.0, 0.004);
            log(&mut truth, t0 + pair_at + 120, 3, 520.0, 8.0, 0.004);
        }
        log(&mut truth, t0 + 1740, 4, -380.0, -27.0, 0.020);
        log(
            &mut truth,
            t0 + run_len,
            5,
            -1120.0,
            -8.0,
            h_low / (1120.0f64 * 1120.0 + 8.0 * 8.0).sqrt(),
        );

        if sway {
            pulse(&mut acc_a, t0 + 1100, t0 + 1650, 95.0, 28.0, 0.030);
            log(&mut truth, t0 + 1100, 6, 95.0, 28.0, 0.030);
            log(&mut truth, t0 + 1650, 7, -95.0, -28.0, 0.030);
        }
        if microwave {
            let (m_on, m_off) = if lamp_pre_on { (700, 880) } else { (900, 1080) };
            pulse(&mut acc_a, t0 + m_on, t0 + m_off, 1280.0, 300.0, 0.300);
            log(&mut truth, t0 + m_on, 8, 1280.0, 300.0, 0.300);
            log(&mut truth, t0 + m_off, 9, -1280.0, -300.0, 0.300);
        }
        if lamp_pre_on {
            // Lamp already burning before the heater starts; switched off
            // mid-run. Only the OFF lands inside the segment.
            pulse(&mut acc_a, t0 - 600, t0 + 1300, 260.0, 0.0, 0.0);
            log(&mut truth, t0 + 1300, 11, -260.0, 0.0, 0.0);
        }
        if lamp_mid {
            // Switched on mid-run, off only after the heater stopped (still
            // inside the 45-minute data segment).
            pulse(&mut acc_a, t0 + 500, t0 + 2000, 260.0, 0.0, 0.0);
            log(&mut truth, t0 + 500, 10, 260.0, 0.0, 0.0);
            log(&mut truth, t0 + 2000, 11, -260.0, 0.0, 0.0);
        }
    }

    let scenario = Scenario {
        name: "heater-lab".into(),
        days: 1,
        noise_sigma_w: 1.0,
        base_p_w: 40.0,
        base_q_var: 10.0,
        base_thd: 0.012,
        appliances: Vec::new(),
    };
    let cycles = vec![("Space heater bench".to_string(), 12usize)];
    finalize(&scenario, seed, total_s, acc_a, acc_b, truth, cycles)
}

/// Renders a slice of a recording as raw waveform frames (both phases),
/// synthesizing band-limited voltage/current from each sample's P, Q and
/// THD. Harmonic VA is split over orders 3/5/7/9 carrying 70/20/8/2
/// percent of the squared content, so the frame's THD reproduces the
/// sample's exactly.
pub fn export_waveform_frames(
    rec: &MeterRecording,
    from_t: u64,
    seconds: u64,
    points_per_cycle: usize,
    n_cycles: usize,
    nominal_freq: f64,
) -> Vec<crate::powercalc::WaveformFrame> {
    use crate::powercalc::{synthesize_frame, HarmonicVector, Phase};
    let mut frames = Vec::new();
    let spectrum = [0.70f64, 0.20, 0.08, 0.02];
    let voltage_rms = 120.0;
    for (series, phase) in [(&rec.phase_a, Phase::A), (&rec.phase_b, Phase::B)] {
        for t in from_t..from_t + seconds {
            let Some(sample) = series.sample_at(t) else {
                continue;
            };
            let s_va = (sample.p_w * sample.p_w + sample.q_var * sample.q_var).sqrt();
            let i1 = s_va / voltage_rms;
            let h_total = sample.thd.unwrap_or(0.0) * i1;
            let mut mags = [0.0f64; 5];
            mags[0] = i1;
            for (slot, share) in spectrum.iter().enumerate() {
                mags[slot + 1] = h_total * share.sqrt();
            }
            let mut hv = HarmonicVector::from_magnitudes(mags);
            hv.fundamental_phase = if s_va > 1e-12 {
                (sample.q_var / s_va).asin()
            } else {
                0.0
            };
            frames.push(
                synthesize_frame(t, phase, voltage_rms, &hv, n_cycles, points_per_cycle, nominal_freq)
                    .expect("generated frame geometry is valid"),
            );
        }
    }
    frames.sort_by_key(|f| (f.timestamp, f.phase == Phase::B));
    frames
}
