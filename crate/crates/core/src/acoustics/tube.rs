use std::path::Path;

use super::{read_triples, AcousticsError, AirProperties, Complex, FrequencyGrid, ImpedanceCurve};

/// Termination of the canal at the drum, as a specific impedance (Pa·s/m).
#[derive(Debug, Clone, PartialEq)]
pub enum DrumImpedance {
    /// Sound-hard: zero normal velocity.
    Rigid,
    /// Reflection-free: ρc.
    Matched,
    /// Tabulated values, interpolated linearly in log-frequency and held
    /// constant beyond either end.
    Table { frequencies: Vec<f64>, values: Vec<Complex> },
}

impl DrumImpedance {
    pub fn table(frequencies: Vec<f64>, values: Vec<Complex>) -> Result<Self, AcousticsError> {
        if frequencies.is_empty() || frequencies.len() != values.len() {
            return Err(AcousticsError::InvalidRange("drum table needs matching, non-empty columns".into()));
        }
        if frequencies.iter().any(|f| !(*f > 0.0)) || frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AcousticsError::InvalidRange("drum table frequencies must be positive and ascending".into()));
        }
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(AcousticsError::InvalidRange("non-finite drum impedance".into()));
        }
        Ok(Self::Table { frequencies, values })
    }

    /// Reads `freq_hz,re_zs,im_zs`.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, AcousticsError> {
        let rows = read_triples(path.as_ref())?;
        Self::table(
            rows.iter().map(|r| r[0]).collect(),
            rows.iter().map(|r| Complex::new(r[1], r[2])).collect(),
        )
    }

    pub fn to_csv_string(&self, grid: &FrequencyGrid, air: &AirProperties) -> String {
        let mut s = String::from("freq_hz,re_zs,im_zs\n");
        for &f in &grid.frequencies {
            let z = self.specific_admittance(f, air).map_or(Complex::new(f64::INFINITY, 0.0), |y| 1.0 / y);
            s.push_str(&format!("{f:e},{:e},{:e}\n", z.re, z.im));
        }
        s
    }

    /// `1/Z_s` at `frequency`; zero for a rigid drum.
    pub fn specific_admittance(&self, frequency: f64, air: &AirProperties) -> Option<Complex> {
        match self {
            Self::Rigid => Some(Complex::new(0.0, 0.0)),
            Self::Matched => Some(Complex::new(1.0 / air.specific_impedance(), 0.0)),
            Self::Table { frequencies, values } => {
                let z = interpolate_log(frequencies, values, frequency);
                if z.norm() == 0.0 {
                    None
                } else {
                    Some(1.0 / z)
                }
            }
        }
    }
}

fn interpolate_log(xs: &[f64], ys: &[Complex], x: f64) -> Complex {
    if x <= xs[0] {
        return ys[0];
    }
    let n = xs.len();
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|&v| v <= x) - 1;
    let t = (x.ln() - xs[k].ln()) / (xs[k + 1].ln() - xs[k].ln());
    ys[k] * (1.0 - t) + ys[k + 1] * t
}

/// Lossless uniform line of `length` (m) and `area` (m²) ended by `termination`.
pub fn analytic_tube_impedance(
    length: f64,
    area: f64,
    air: &AirProperties,
    termination: &DrumImpedance,
    grid: &FrequencyGrid,
) -> Result<ImpedanceCurve, AcousticsError> {
    if !(length > 0.0 && area > 0.0) {
        return Err(AcousticsError::InvalidRange("length and area must be positive".into()));
    }
    let zc = air.characteristic_impedance(area);
    let i = Complex::i();
    let values = grid
        .frequencies
        .iter()
        .map(|&f| {
            let kl = air.wavenumber(f) * length;
            // Admittance form stays finite for a rigid end.
            let yt = termination
                .specific_admittance(f, air)
                .ok_or_else(|| AcousticsError::InvalidRange(format!("zero drum impedance at {f} Hz")))?
                * area;
            let (s, c) = kl.sin_cos();
            let num = c + i * zc * yt * s;
            let mut den = zc * yt * c + i * s;
            if den.norm() == 0.0 {
                den = Complex::new(f64::MIN_POSITIVE, 0.0);
            }
            Ok(zc * num / den)
        })
        .collect::<Result<Vec<_>, AcousticsError>>()?;
    ImpedanceCurve::new(grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustics::freq_grid;

    #[test]
    fn table_interpolates_in_log_frequency() {
        let d = DrumImpedance::table(vec![100.0, 400.0], vec![Complex::new(1.0, 0.0), Complex::new(3.0, 2.0)]).unwrap();
        let air = AirProperties::default();
        let z = 1.0 / d.specific_admittance(200.0, &air).unwrap();
        assert!((z - Complex::new(2.0, 1.0)).norm() < 1e-12);
        let below = 1.0 / d.specific_admittance(10.0, &air).unwrap();
        assert!((below - Complex::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn unsorted_table_rejected() {
        assert!(DrumImpedance::table(vec![2.0, 1.0], vec![Complex::new(1.0, 0.0); 2]).is_err());
    }

    #[test]
    fn rigid_line_is_reactive() {
        let air = AirProperties::default();
        let g = freq_grid(35.0, 25000.0, 24).unwrap();
        let area = std::f64::consts::PI * 0.004f64.powi(2);
        let c = analytic_tube_impedance(0.01825, area, &air, &DrumImpedance::Rigid, &g).unwrap();
        let zc = air.characteristic_impedance(area);
        assert!(c.values.iter().all(|z| z.re.abs() <= 1e-9 * zc));
    }
}
