//! Fundamental power and current-harmonic computations on raw waveform frames.
//!
//! A meter frame holds a handful of consecutive voltage/current cycles
//! sampled at a fixed number of points per cycle. Because each cycle spans
//! exactly one fundamental period, harmonic order `k` falls on DFT bin `k`
//! of a single-cycle window, so no spectral search or windowing is needed.
//! Active and reactive power are computed from the fundamental phasors only,
//! which keeps them insensitive to harmonic content; the current THD is the
//! RMS ratio of the odd harmonics (orders 3..9) to the fundamental.

use crate::error::PowerCalcError;

/// Odd harmonic orders carried by a [`HarmonicVector`], fundamental first.
pub const HARMONIC_ORDERS: [usize; 5] = [1, 3, 5, 7, 9];

/// Meter phase of a 120 V split-phase service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Phase {
    A,
    B,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Phase::A => write!(f, "A"),
            Phase::B => write!(f, "B"),
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Phase::A),
            "B" | "b" => Ok(Phase::B),
            other => Err(format!("unknown phase {other:?}")),
        }
    }
}

/// One second of raw per-cycle samples for a single phase.
///
/// `voltage_cycles` and `current_cycles` are `n_cycles x points_per_cycle`
/// matrices in volts and amperes.
#[derive(Debug, Clone)]
pub struct WaveformFrame {
    /// Seconds since stream start.
    pub timestamp: u64,
    pub phase: Phase,
    pub voltage_cycles: Vec<Vec<f64>>,
    pub current_cycles: Vec<Vec<f64>>,
    pub points_per_cycle: usize,
    pub nominal_freq: f64,
}

impl WaveformFrame {
    /// Validates the frame invariants: matching matrix shapes, at least one
    /// cycle, and at least 32 points per cycle (enough to resolve harmonic
    /// order 9 with margin).
    pub fn new(
        timestamp: u64,
        phase: Phase,
        voltage_cycles: Vec<Vec<f64>>,
        current_cycles: Vec<Vec<f64>>,
        points_per_cycle: usize,
        nominal_freq: f64,
    ) -> Result<Self, PowerCalcError> {
        if points_per_cycle < 32 {
            return Err(PowerCalcError::InvalidFrame(format!(
                "points_per_cycle {points_per_cycle} < 32"
            )));
        }
        if voltage_cycles.is_empty() {
            return Err(PowerCalcError::InvalidFrame("n_cycles = 0".into()));
        }
        if voltage_cycles.len() != current_cycles.len() {
            return Err(PowerCalcError::InvalidFrame(format!(
                "voltage has {} cycles, current has {}",
                voltage_cycles.len(),
                current_cycles.len()
            )));
        }
        for (i, (v, c)) in voltage_cycles.iter().zip(&current_cycles).enumerate() {
            if v.len() != points_per_cycle || c.len() != points_per_cycle {
                return Err(PowerCalcError::InvalidFrame(format!(
                    "cycle {i} length mismatch (v={}, i={}, expected {points_per_cycle})",
                    v.len(),
                    c.len()
                )));
            }
        }
        if !(nominal_freq > 0.0) {
            return Err(PowerCalcError::InvalidFrame(format!(
                "nominal_freq {nominal_freq} must be positive"
            )));
        }
        Ok(Self {
            timestamp,
            phase,
            voltage_cycles,
            current_cycles,
            points_per_cycle,
            nominal_freq,
        })
    }

    pub fn n_cycles(&self) -> usize {
        self.voltage_cycles.len()
    }
}

/// RMS magnitudes of the odd current harmonics of one frame.
///
/// `fundamental_phase` is the angle of the current fundamental relative to
/// the voltage fundamental, in radians; positive means the current lags.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicVector {
    /// RMS amperes at orders 1, 3, 5, 7, 9 (same order as [`HARMONIC_ORDERS`]).
    pub magnitudes: [f64; 5],
    pub fundamental_phase: f64,
    /// True when the frame carried no measurable current.
    pub degenerate: bool,
}

impl HarmonicVector {
    pub fn from_magnitudes(magnitudes: [f64; 5]) -> Self {
        Self {
            magnitudes,
            fundamental_phase: 0.0,
            degenerate: magnitudes.iter().all(|m| *m == 0.0),
        }
    }

    /// RMS magnitude at `order`, or `None` for orders not tracked.
    pub fn magnitude(&self, order: usize) -> Option<f64> {
        HARMONIC_ORDERS
            .iter()
            .position(|&k| k == order)
            .map(|i| self.magnitudes[i])
    }

    pub fn fundamental(&self) -> f64 {
        self.magnitudes[0]
    }
}

/// Complex DFT bin `k` of one cycle, returned as (re, im).
fn dft_bin(cycle: &[f64], k: usize) -> (f64, f64) {
    let n = cycle.len() as f64;
    let mut re = 0.0;
    let mut im = 0.0;
    for (idx, &x) in cycle.iter().enumerate() {
        let ang = -2.0 * std::f64::consts::PI * (k as f64) * (idx as f64) / n;
        re += x * ang.cos();
        im += x * ang.sin();
    }
    (re, im)
}

/// RMS magnitude of bin `k`: for `x = A*sin(2*pi*k*t/N)` the bin magnitude
/// is `A*N/2`, so RMS = |X_k| * sqrt(2) / N.
fn bin_rms(cycle: &[f64], k: usize) -> f64 {
    let (re, im) = dft_bin(cycle, k);
    (re * re + im * im).sqrt() * std::f64::consts::SQRT_2 / cycle.len() as f64
}

const DEGENERATE_EPS: f64 = 1e-12;

/// Extracts the odd current harmonics (orders 1..9) of a frame.
///
/// Magnitudes are the per-cycle DFT RMS values averaged over the frame's
/// cycles. The fundamental phase is taken from cycle-averaged phasors of
/// current and voltage so that it is relative to the voltage fundamental.
/// An all-zero current yields an all-zero vector flagged degenerate.
pub fn extract_harmonics(frame: &WaveformFrame) -> HarmonicVector {
    let mut magnitudes = [0.0f64; 5];
    for (slot, &order) in HARMONIC_ORDERS.iter().enumerate() {
        let sum: f64 = frame.current_cycles.iter().map(|c| bin_rms(c, order)).sum();
        magnitudes[slot] = sum / frame.n_cycles() as f64;
    }

    if magnitudes.iter().all(|m| *m < DEGENERATE_EPS) {
        return HarmonicVector {
            magnitudes: [0.0; 5],
            fundamental_phase: 0.0,
            degenerate: true,
        };
    }

    let (iv, ii) = fundamental_phasors(frame);
    let phase = if iv.0 == 0.0 && iv.1 == 0.0 {
        0.0
    } else {
        // Angle of voltage minus angle of current: positive for lagging current.
        iv.1.atan2(iv.0) - ii.1.atan2(ii.0)
    };
    HarmonicVector {
        magnitudes,
        fundamental_phase: wrap_angle(phase),
        degenerate: false,
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a;
    while a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    }
    while a < -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}

/// Cycle-averaged fundamental phasors of (voltage, current).
fn fundamental_phasors(frame: &WaveformFrame) -> ((f64, f64), (f64, f64)) {
    let n = frame.n_cycles() as f64;
    let mut v = (0.0, 0.0);
    let mut i = (0.0, 0.0);
    for (vc, ic) in frame.voltage_cycles.iter().zip(&frame.current_cycles) {
        let (vr, vi) = dft_bin(vc, 1);
        let (ir, ii) = dft_bin(ic, 1);
        v.0 += vr / n;
        v.1 += vi / n;
        i.0 += ir / n;
        i.1 += ii / n;
    }
    (v, i)
}

/// Fundamental active and reactive power of a frame, in (W, var).
///
/// Both are defined on the fundamental phasors only, so added harmonic
/// current does not move them. Reactive power is positive for an inductive
/// (current-lagging) load. A frame without measurable voltage cannot anchor
/// the phase reference and is an error.
pub fn compute_pq(frame: &WaveformFrame) -> Result<(f64, f64), PowerCalcError> {
    let ((vr, vi), (ir, ii)) = fundamental_phasors(frame);
    let points = frame.points_per_cycle as f64;
    let v_rms = (vr * vr + vi * vi).sqrt() * std::f64::consts::SQRT_2 / points;
    if v_rms < 1e-9 {
        return Err(PowerCalcError::NoReferenceVoltage);
    }
    let i_rms = (ir * ir + ii * ii).sqrt() * std::f64::consts::SQRT_2 / points;
    let phi = wrap_angle(vi.atan2(vr) - ii.atan2(ir));
    if i_rms < DEGENERATE_EPS {
        return Ok((0.0, 0.0));
    }
    Ok((v_rms * i_rms * phi.cos(), v_rms * i_rms * phi.sin()))
}

/// Current THD per the odd-harmonic definition:
/// `sqrt(i3^2 + i5^2 + i7^2 + i9^2) / i1`, as a dimensionless fraction.
pub fn compute_thd(h: &HarmonicVector) -> Result<f64, PowerCalcError> {
    let i1 = h.fundamental();
    if i1 <= 0.0 {
        return Err(PowerCalcError::UndefinedThd);
    }
    let sum_sq: f64 = h.magnitudes[1..].iter().map(|m| m * m).sum();
    Ok(sum_sq.sqrt() / i1)
}

/// Synthesizes a frame with a pure-sine voltage and a current built from the
/// given harmonic vector. The inverse of [`extract_harmonics`] on band-limited
/// signals; also used by the scenario generator's waveform export.
///
/// `voltage_rms` is in volts; harmonic components are emitted in phase with
/// each other, with the fundamental lagging the voltage by
/// `h.fundamental_phase`.
pub fn synthesize_frame(
    timestamp: u64,
    phase: Phase,
    voltage_rms: f64,
    h: &HarmonicVector,
    n_cycles: usize,
    points_per_cycle: usize,
    nominal_freq: f64,
) -> Result<WaveformFrame, PowerCalcError> {
    let mut voltage_cycles = Vec::with_capacity(n_cycles);
    let mut current_cycles = Vec::with_capacity(n_cycles);
    for _ in 0..n_cycles {
        let mut v = Vec::with_capacity(points_per_cycle);
        let mut c = Vec::with_capacity(points_per_cycle);
        for idx in 0..points_per_cycle {
            let theta = 2.0 * std::f64::consts::PI * idx as f64 / points_per_cycle as f64;
            v.push(voltage_rms * std::f64::consts::SQRT_2 * theta.sin());
            let mut i = 0.0;
            for (slot, &order) in HARMONIC_ORDERS.iter().enumerate() {
                let rms = h.magnitudes[slot];
                if rms == 0.0 {
                    continue;
                }
                let ph = if order == 1 { -h.fundamental_phase } else { 0.0 };
                i += rms * std::f64::consts::SQRT_2 * (order as f64 * theta + ph).sin();
            }
            c.push(i);
        }
        voltage_cycles.push(v);
        current_cycles.push(c);
    }
    WaveformFrame::new(
        timestamp,
        phase,
        voltage_cycles,
        current_cycles,
        points_per_cycle,
        nominal_freq,
    )
}
