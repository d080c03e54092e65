//! Plane-wave propagation along a duct of varying cross-section.

use crate::geometry::AreaFunction;

use super::{AcousticsError, AirProperties, Complex, DrumImpedance, FrequencyGrid, ImpedanceCurve};

/// Default number of cylindrical segments between two planes.
pub const DEFAULT_SEGMENTS: usize = 100;

/// Two-port relating pressure and volume velocity at the entrance-side
/// plane to those at the drum-side plane:
///
/// ```text
/// [p₁]   [a  b] [p₂]
/// [U₁] = [c  d] [U₂]
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix {
    pub a: Complex,
    pub b: Complex,
    pub c: Complex,
    pub d: Complex,
}

impl TransferMatrix {
    pub fn identity() -> Self {
        let (one, zero) = (Complex::new(1.0, 0.0), Complex::new(0.0, 0.0));
        Self {
            a: one,
            b: zero,
            c: zero,
            d: one,
        }
    }

    /// Lossless cylinder of signed `length` and characteristic impedance `zc`.
    /// A negative length gives the inverse of the positive one.
    pub fn segment(wavenumber: f64, length: f64, zc: f64) -> Self {
        let (s, c) = (wavenumber * length).sin_cos();
        let i = Complex::i();
        Self {
            a: Complex::new(c, 0.0),
            b: i * (zc * s),
            c: i * (s / zc),
            d: Complex::new(c, 0.0),
        }
    }

    /// `self · other`.
    pub fn chain(&self, o: &TransferMatrix) -> TransferMatrix {
        TransferMatrix {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }

    pub fn determinant(&self) -> Complex {
        self.a * self.d - self.b * self.c
    }

    /// Input impedance for load impedance `z`.
    pub fn load_impedance(&self, z: Complex) -> Complex {
        (self.a * z + self.b) / (self.c * z + self.d)
    }

    /// Input impedance for load admittance `y`; finite for a rigid load.
    pub fn load_admittance(&self, y: Complex) -> Complex {
        (self.a + self.b * y) / (self.c + self.d * y)
    }
}

/// Product of segment matrices carrying the state at `from` to `to`.
fn horn_matrix(area_fn: &AreaFunction, from: f64, to: f64, wavenumber: f64, segments: usize, air: &AirProperties) -> TransferMatrix {
    let n = segments.max(1);
    let plane = |j: usize| to + (from - to) * j as f64 / n as f64;
    (1..=n).fold(TransferMatrix::identity(), |m, j| {
        let (s0, s1) = (plane(j - 1), plane(j));
        let zc = air.characteristic_impedance(area_fn.area_at(0.5 * (s0 + s1)));
        m.chain(&TransferMatrix::segment(wavenumber, s1 - s0, zc))
    })
}

fn check_position(area_fn: &AreaFunction, s: f64) -> Result<(), AcousticsError> {
    let len = area_fn.total_length();
    let tol = 1e-12 * len;
    if s < -tol || s > len + tol || !s.is_finite() {
        return Err(AcousticsError::OutOfRange {
            position: s,
            min: 0.0,
            max: len,
        });
    }
    Ok(())
}

/// Impedance seen at arc length `to_s` given the impedance at `from_s`,
/// both looking toward the drum.
pub fn horn_propagate(
    curve: &ImpedanceCurve,
    area_fn: &AreaFunction,
    from_s: f64,
    to_s: f64,
    air: &AirProperties,
) -> Result<ImpedanceCurve, AcousticsError> {
    horn_propagate_with(curve, area_fn, from_s, to_s, air, DEFAULT_SEGMENTS)
}

pub fn horn_propagate_with(
    curve: &ImpedanceCurve,
    area_fn: &AreaFunction,
    from_s: f64,
    to_s: f64,
    air: &AirProperties,
    segments: usize,
) -> Result<ImpedanceCurve, AcousticsError> {
    check_position(area_fn, from_s)?;
    check_position(area_fn, to_s)?;
    propagate_unchecked(curve, area_fn, from_s, to_s, air, segments)
}

fn propagate_unchecked(
    curve: &ImpedanceCurve,
    area_fn: &AreaFunction,
    from_s: f64,
    to_s: f64,
    air: &AirProperties,
    segments: usize,
) -> Result<ImpedanceCurve, AcousticsError> {
    if from_s == to_s {
        return Ok(curve.clone());
    }
    let values = curve
        .grid
        .frequencies
        .iter()
        .zip(&curve.values)
        .map(|(&f, &z)| horn_matrix(area_fn, from_s, to_s, air.wavenumber(f), segments, air).load_impedance(z))
        .collect();
    ImpedanceCurve::new(curve.grid.clone(), values)
}

/// Entrance impedance of the duct described by `area_fn` closed by `drum`.
pub fn horn_input_impedance(
    drum: &DrumImpedance,
    area_fn: &AreaFunction,
    air: &AirProperties,
    grid: &FrequencyGrid,
    segments: usize,
) -> Result<ImpedanceCurve, AcousticsError> {
    let len = area_fn.total_length();
    let drum_area = area_fn.area_at(len);
    let values = grid
        .frequencies
        .iter()
        .map(|&f| {
            let y = drum
                .specific_admittance(f, air)
                .ok_or_else(|| AcousticsError::InvalidRange(format!("zero drum impedance at {f} Hz")))?
                * drum_area;
            Ok(horn_matrix(area_fn, len, 0.0, air.wavenumber(f), segments, air).load_admittance(y))
        })
        .collect::<Result<Vec<_>, AcousticsError>>()?;
    ImpedanceCurve::new(grid.clone(), values)
}

/// Largest local maximum of |Z| with its sample inside `window` (Hz),
/// refined by a parabola through `|Z|⁻²` in log-frequency.
pub fn find_half_wave_resonance(curve: &ImpedanceCurve, window: (f64, f64)) -> Result<f64, AcousticsError> {
    let (lo, hi) = window;
    if !(lo < hi) || !curve.grid.contains(lo) || !curve.grid.contains(hi) {
        return Err(AcousticsError::InvalidRange(format!(
            "window {lo}–{hi} Hz is not inside the curve's grid"
        )));
    }
    let f = &curve.grid.frequencies;
    let db: Vec<f64> = curve.values.iter().map(|z| 20.0 * z.norm().log10()).collect();
    let mut best: Option<usize> = None;
    for i in 1..f.len().saturating_sub(1) {
        if f[i] < lo || f[i] > hi {
            continue;
        }
        if db[i] > db[i - 1] && db[i] >= db[i + 1] && best.is_none_or(|b| db[i] > db[b]) {
            best = Some(i);
        }
    }
    let i = best.ok_or(AcousticsError::NoResonance { lo, hi })?;
    // Near a pole |Z|⁻² is close to quadratic, lossy or not.
    let q = |k: usize| curve.values[k].norm_sqr().recip();
    let (ym, y0, yp) = (q(i - 1), q(i), q(i + 1));
    let curvature = ym - 2.0 * y0 + yp;
    let offset = if curvature > 0.0 { 0.5 * (ym - yp) / curvature } else { 0.0 };
    let log_step = (f[i + 1] / f[i - 1]).ln() / 2.0;
    Ok(f[i] * (offset.clamp(-0.5, 0.5) * log_step).exp())
}

/// Moves the measurement plane so that the half-wave resonance falls on
/// `target` Hz. Planes outside the duct use the end cross-section.
pub fn align_to_reference_plane(
    curve: &ImpedanceCurve,
    area_fn: &AreaFunction,
    target: f64,
    air: &AirProperties,
) -> Result<ImpedanceCurve, AcousticsError> {
    let grid = &curve.grid;
    if !grid.contains(target) {
        return Err(AcousticsError::InvalidRange(format!(
            "target {target} Hz lies outside {}–{} Hz",
            grid.min(),
            grid.max()
        )));
    }
    let window = ((target / 1.6).max(grid.min()), (target * 1.6).min(grid.max()));
    let resonance = find_half_wave_resonance(curve, window)?;
    let shift = air.sound_speed / (2.0 * resonance) - air.sound_speed / (2.0 * target);
    let len = area_fn.total_length();
    if shift.abs() > len {
        return Err(AcousticsError::OutOfRange {
            position: shift,
            min: -len,
            max: len,
        });
    }
    log::debug!("stage=align resonance_hz={resonance:.3} shift_m={shift:.6e}");
    propagate_unchecked(curve, area_fn, 0.0, shift, air, DEFAULT_SEGMENTS)
}

/// Per-frequency median and mean of a population of curves. The median is
/// taken separately on the dB magnitude and on the unwrapped phase.
pub fn population_average(curves: &[ImpedanceCurve]) -> Result<(ImpedanceCurve, ImpedanceCurve), AcousticsError> {
    let first = curves
        .first()
        .ok_or_else(|| AcousticsError::InvalidRange("no curves to average".into()))?;
    if curves.iter().any(|c| !c.grid.matches(&first.grid)) {
        return Err(AcousticsError::GridMismatch);
    }
    let n = curves.len();
    let phases: Vec<Vec<f64>> = curves.iter().map(|c| unwrapped_phase(&c.values)).collect();
    let mut median = Vec::with_capacity(first.grid.len());
    let mut mean = Vec::with_capacity(first.grid.len());
    for k in 0..first.grid.len() {
        let db = middle(curves.iter().map(|c| 20.0 * c.values[k].norm().log10()).collect());
        let phase = middle(phases.iter().map(|p| p[k]).collect());
        median.push(Complex::from_polar(10f64.powf(db / 20.0), phase));
        mean.push(curves.iter().map(|c| c.values[k]).sum::<Complex>() / n as f64);
    }
    Ok((
        ImpedanceCurve::new(first.grid.clone(), median)?,
        ImpedanceCurve::new(first.grid.clone(), mean)?,
    ))
}

fn middle(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn unwrapped_phase(values: &[Complex]) -> Vec<f64> {
    let tau = std::f64::consts::TAU;
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for z in values {
        let mut p = z.arg();
        if let Some(&prev) = out.last() {
            p += tau * ((prev - p) / tau).round();
        }
        out.push(p);
    }
    out
}
