use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_triples, AcousticsError, Complex};

/// Geometric frequency grid with `fraction` points per octave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub frequencies: Vec<f64>,
    pub fraction: u32,
}

/// `f_k = f_min·2^(k/fraction)` for every `f_k ≤ f_max`.
pub fn freq_grid(f_min: f64, f_max: f64, fraction: u32) -> Result<FrequencyGrid, AcousticsError> {
    if !(f_min > 0.0 && f_max > f_min && f_max.is_finite()) {
        return Err(AcousticsError::InvalidRange(format!(
            "need 0 < f_min < f_max, got {f_min} and {f_max}"
        )));
    }
    if fraction == 0 {
        return Err(AcousticsError::InvalidRange("fraction must be at least 1".into()));
    }
    let octaves = (f_max / f_min).log2();
    let count = (fraction as f64 * octaves + 1e-9).floor() as usize + 1;
    let frequencies = (0..count)
        .map(|k| f_min * 2f64.powf(k as f64 / fraction as f64))
        .collect();
    Ok(FrequencyGrid { frequencies, fraction })
}

impl FrequencyGrid {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Frequency ratio between neighbouring points.
    pub fn band_ratio(&self) -> f64 {
        2f64.powf(1.0 / self.fraction as f64)
    }

    pub fn min(&self) -> f64 {
        self.frequencies[0]
    }

    pub fn max(&self) -> f64 {
        *self.frequencies.last().expect("non-empty grid")
    }

    pub fn contains(&self, f: f64) -> bool {
        !self.is_empty() && f >= self.min() * (1.0 - 1e-12) && f <= self.max() * (1.0 + 1e-12)
    }

    /// Same frequencies to within rounding.
    pub fn matches(&self, other: &FrequencyGrid) -> bool {
        self.len() == other.len()
            && self
                .frequencies
                .iter()
                .zip(&other.frequencies)
                .all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs())
    }

    fn from_frequencies(frequencies: Vec<f64>) -> Result<Self, AcousticsError> {
        if frequencies.is_empty() {
            return Err(AcousticsError::InvalidRange("no frequencies".into()));
        }
        if frequencies.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(AcousticsError::InvalidRange("frequencies must be positive".into()));
        }
        if frequencies.len() == 1 {
            return Ok(Self { frequencies, fraction: 1 });
        }
        let ratio = frequencies[1] / frequencies[0];
        if !(ratio > 1.0) {
            return Err(AcousticsError::InvalidRange("frequencies must ascend".into()));
        }
        let fraction = (1.0 / ratio.log2()).round().max(1.0) as u32;
        let expected = 2f64.powf(1.0 / fraction as f64);
        if frequencies.windows(2).any(|w| ((w[1] / w[0]) / expected - 1.0).abs() > 1e-9) {
            return Err(AcousticsError::InvalidRange(
                "frequencies are not a fractional-octave grid".into(),
            ));
        }
        Ok(Self { frequencies, fraction })
    }
}

/// Complex acoustic impedance p/U (Pa·s/m³) per grid frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceCurve {
    pub grid: FrequencyGrid,
    pub values: Vec<Complex>,
}

impl ImpedanceCurve {
    pub fn new(grid: FrequencyGrid, values: Vec<Complex>) -> Result<Self, AcousticsError> {
        if grid.len() != values.len() {
            return Err(AcousticsError::InvalidRange(format!(
                "{} values for {} frequencies",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(AcousticsError::InvalidRange("non-finite impedance".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "freq_hz,re_z,im_z")?;
        for (f, z) in self.grid.frequencies.iter().zip(&self.values) {
            writeln!(w, "{f:e},{:e},{:e}", z.re, z.im)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, AcousticsError> {
        let rows = read_triples(path.as_ref())?;
        let grid = FrequencyGrid::from_frequencies(rows.iter().map(|r| r[0]).collect())?;
        Self::new(grid, rows.iter().map(|r| Complex::new(r[1], r[2])).collect())
    }
}
