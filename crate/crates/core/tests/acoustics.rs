use std::f64::consts::PI;

use earcanal::acoustics::*;
use earcanal::geometry::{AreaFunction, CanalSpec};
use proptest::prelude::*;

fn air() -> AirProperties {
    AirProperties::default()
}

fn full_grid() -> FrequencyGrid {
    freq_grid(35.0, 25000.0, 24).unwrap()
}

fn rigid_tube(length: f64, radius: f64, grid: &FrequencyGrid) -> ImpedanceCurve {
    analytic_tube_impedance(length, PI * radius * radius, &air(), &DrumImpedance::Rigid, grid).unwrap()
}

fn c(re: f64, im: f64) -> Complex {
    Complex::new(re, im)
}

#[test]
fn measurement_grid() {
    let g = full_grid();
    assert_eq!(g.len(), 228);
    for (k, want) in [35.00, 36.03, 37.08].iter().enumerate() {
        assert!((g.frequencies[k] - want).abs() < 0.005, "{}", g.frequencies[k]);
        assert!((g.frequencies[k] - 35.0 * 2f64.powf(k as f64 / 24.0)).abs() < 1e-9);
    }
    let last = *g.frequencies.last().unwrap();
    assert!(last <= 25000.0 && (last - 24620.0).abs() < 2.0, "{last}");
    for w in g.frequencies.windows(2) {
        assert!((w[1] / w[0] - 2f64.powf(1.0 / 24.0)).abs() < 1e-12);
    }
    assert_eq!(freq_grid(100.0, 200.0, 1).unwrap().frequencies, vec![100.0, 200.0]);
}

#[test]
fn characteristic_impedance_of_reference_tube() {
    let zc = air().characteristic_impedance(PI * 4e-3 * 4e-3);
    assert!((zc / 8.26e6 - 1.0).abs() < 0.005, "{zc}");
}

#[test]
fn quarter_wave_rigid_tube_has_zero_impedance() {
    let a = air();
    let length = 0.02;
    let f = a.sound_speed / (4.0 * length);
    let grid = freq_grid(f, 2.0 * f, 1).unwrap();
    let z = analytic_tube_impedance(length, 1e-5, &a, &DrumImpedance::Rigid, &grid).unwrap();
    assert!(z.values[0].norm() < 1e-9 * a.characteristic_impedance(1e-5));
}

#[test]
fn matched_line_is_reflection_free() {
    let a = air();
    let area = 3e-5;
    let zc = a.characteristic_impedance(area);
    let z = analytic_tube_impedance(0.023, area, &a, &DrumImpedance::Matched, &full_grid()).unwrap();
    for v in &z.values {
        assert!((v - zc).norm() < 1e-12 * zc, "{v}");
    }
}

#[test]
fn rigid_line_is_lossless() {
    let a = air();
    let area = PI * 16e-6;
    let z = rigid_tube(0.01825, 4e-3, &full_grid());
    for v in &z.values {
        assert!(v.re.abs() < 1e-9 * a.characteristic_impedance(area));
    }
}

#[test]
fn reference_tube_peaks_at_half_wave() {
    let g = full_grid();
    let z = rigid_tube(0.01825, 4e-3, &g);
    let mags = z.magnitudes();
    let window: Vec<usize> = (0..g.len()).filter(|&i| g.frequencies[i] > 5000.0 && g.frequencies[i] < 15000.0).collect();
    let peak = *window.iter().max_by(|&&a, &&b| mags[a].total_cmp(&mags[b])).unwrap();
    let nearest = (0..g.len())
        .min_by(|&a, &b| (g.frequencies[a] - 9397.0).abs().total_cmp(&(g.frequencies[b] - 9397.0).abs()))
        .unwrap();
    assert_eq!(peak, nearest);
}

#[test]
fn half_wave_resonance_detection() {
    let g = full_grid();
    let band = g.band_ratio();
    for (length, expected) in [(0.01825, 9397.0), (0.020, 8575.0)] {
        let f = find_half_wave_resonance(&rigid_tube(length, 4e-3, &g), (5000.0, 15000.0)).unwrap();
        assert!(f / expected < band && expected / f < band, "{f} vs {expected}");
    }
    let flat = analytic_tube_impedance(0.02, 5e-5, &air(), &DrumImpedance::Matched, &g).unwrap();
    assert!(matches!(
        find_half_wave_resonance(&flat, (5000.0, 15000.0)),
        Err(AcousticsError::NoResonance { .. })
    ));
}

fn cone() -> AreaFunction {
    let s: Vec<f64> = (0..=40).map(|i| i as f64 * 0.025 / 40.0).collect();
    let a = s.iter().map(|x| 5e-5 * (1.0 - 12.0 * x) + 2e-5 * (300.0 * x).sin().powi(2)).collect();
    AreaFunction::new(s, a).unwrap()
}

#[test]
fn propagating_zero_distance_is_identity() {
    let g = full_grid();
    let z = rigid_tube(0.02, 4e-3, &g);
    let out = horn_propagate(&z, &cone(), 0.01, 0.01, &air()).unwrap();
    for (a, b) in out.values.iter().zip(&z.values) {
        assert!((a - b).norm() <= 1e-15 * b.norm());
    }
}

#[test]
fn propagation_round_trip() {
    let g = full_grid();
    let af = cone();
    let len = af.total_length();
    let z0 = horn_input_impedance(&DrumImpedance::Matched, &af, &air(), &g, DEFAULT_SEGMENTS).unwrap();
    let at_drum = horn_propagate(&z0, &af, 0.0, len, &air()).unwrap();
    let back = horn_propagate(&at_drum, &af, len, 0.0, &air()).unwrap();
    for (a, b) in back.values.iter().zip(&z0.values) {
        assert!((a - b).norm() <= 1e-9 * b.norm(), "{a} vs {b}");
    }
}

#[test]
fn matched_load_propagates_unchanged_along_uniform_tube() {
    let g = full_grid();
    let a = air();
    let area = 4e-5;
    let af = AreaFunction::uniform(0.02, area).unwrap();
    let zc = a.characteristic_impedance(area);
    let z = ImpedanceCurve::new(g.clone(), vec![c(zc, 0.0); g.len()]).unwrap();
    let out = horn_propagate(&z, &af, 0.02, 0.0, &a).unwrap();
    for v in &out.values {
        assert!((v - zc).norm() < 1e-9 * zc);
    }
}

#[test]
fn uniform_horn_matches_analytic_line() {
    let g = full_grid();
    let (length, radius) = (0.01825, 4e-3);
    let af = AreaFunction::uniform(length, PI * radius * radius).unwrap();
    let horn = horn_input_impedance(&DrumImpedance::Rigid, &af, &air(), &g, DEFAULT_SEGMENTS).unwrap();
    let exact = rigid_tube(length, radius, &g);
    let fr = air().sound_speed / (2.0 * length);
    for (i, f) in g.frequencies.iter().enumerate() {
        let near_peak = ((f / fr).round() - f / fr).abs() < 0.05 && (f / fr).round() >= 1.0;
        if near_peak {
            continue;
        }
        let e = (horn.values[i].norm() / exact.values[i].norm() - 1.0).abs();
        assert!(e < 0.005, "{f} Hz: {e}");
    }
}

#[test]
fn transfer_matrices_are_lossless_and_reciprocal() {
    let g = full_grid();
    let a = air();
    let af = cone();
    for &f in g.frequencies.iter().step_by(11) {
        let k = a.wavenumber(f);
        let n = 100;
        let ds = af.total_length() / n as f64;
        let mut forward = TransferMatrix::identity();
        let mut backward = TransferMatrix::identity();
        for j in 0..n {
            let zc = a.characteristic_impedance(af.area_at((j as f64 + 0.5) * ds));
            let seg = TransferMatrix::segment(k, ds, zc);
            assert!((seg.determinant() - 1.0).norm() < 1e-12);
            forward = forward.chain(&seg);
            let zb = a.characteristic_impedance(af.area_at((n - 1 - j) as f64 * ds + 0.5 * ds));
            backward = backward.chain(&TransferMatrix::segment(k, -ds, zb));
        }
        let id = forward.chain(&backward);
        let scale = forward.b.norm().max(1.0) * forward.c.norm().max(1.0);
        assert!((id.a - 1.0).norm() < 1e-10 * scale && (id.d - 1.0).norm() < 1e-10 * scale);
        assert!(id.b.norm() < 1e-10 * scale * forward.b.norm().max(1.0));
        assert!(id.c.norm() < 1e-10 * scale * forward.c.norm().max(1.0));
    }
}

#[test]
fn alignment_moves_resonance_to_target() {
    let g = full_grid();
    let a = air();
    let band = g.band_ratio();
    for length in [0.016, 0.01825, 0.020] {
        let af = AreaFunction::uniform(length, PI * 16e-6).unwrap();
        let z = rigid_tube(length, 4e-3, &g);
        let aligned = align_to_reference_plane(&z, &af, 9400.0, &a).unwrap();
        let f = find_half_wave_resonance(&aligned, (5000.0, 15000.0)).unwrap();
        assert!(f / 9397.0 < band && 9397.0 / f < band, "L={length}: {f}");
    }
}

#[test]
fn alignment_at_target_is_nearly_identity() {
    let g = full_grid();
    let a = air();
    let length = a.sound_speed / (2.0 * 9397.0);
    let af = AreaFunction::uniform(length, PI * 16e-6).unwrap();
    let z = rigid_tube(length, 4e-3, &g);
    let fr = find_half_wave_resonance(&z, (5000.0, 15000.0)).unwrap();
    let shift = a.sound_speed / (2.0 * fr) - a.sound_speed / (2.0 * 9397.0);
    assert!(shift.abs() < 5e-5, "{shift}");
    let aligned = align_to_reference_plane(&z, &af, 9397.0, &a).unwrap();
    for (i, f) in g.frequencies.iter().enumerate() {
        if *f < 3000.0 {
            let e = (aligned.values[i].norm() / z.values[i].norm() - 1.0).abs();
            assert!(e < 0.05, "{f}: {e}");
        }
    }
}

#[test]
fn alignment_rejects_target_outside_grid() {
    let g = full_grid();
    let af = AreaFunction::uniform(0.02, 5e-5).unwrap();
    assert!(align_to_reference_plane(&rigid_tube(0.02, 4e-3, &g), &af, 30000.0, &air()).is_err());
}

#[test]
fn averaging_identical_curves() {
    let g = full_grid();
    let z = rigid_tube(0.02, 4e-3, &g);
    let (median, mean) = population_average(&[z.clone(), z.clone(), z.clone()]).unwrap();
    for i in 0..g.len() {
        assert!((median.values[i] - z.values[i]).norm() <= 1e-12 * z.values[i].norm());
        assert!((mean.values[i] - z.values[i]).norm() <= 1e-12 * z.values[i].norm());
    }
}

#[test]
fn median_and_mean_hand_cases() {
    let g = freq_grid(1000.0, 2000.0, 1).unwrap();
    let curve = |m: f64| ImpedanceCurve::new(g.clone(), vec![c(m, 0.0), c(0.0, m)]).unwrap();
    let (median, mean) = population_average(&[curve(1e6), curve(10e6), curve(2e6)]).unwrap();
    assert!((median.values[0].norm() - 2e6).abs() < 1e-6);
    assert!((median.values[1] - c(0.0, 2e6)).norm() < 1e-6);
    assert!((mean.values[0] - c(13e6 / 3.0, 0.0)).norm() < 1e-6);

    let (median, _) = population_average(&[curve(1e6), curve(4e6)]).unwrap();
    assert!((median.values[0].norm() - 2e6).abs() < 1e-6);

    let other = ImpedanceCurve::new(freq_grid(1000.0, 4000.0, 1).unwrap(), vec![c(1.0, 0.0); 3]).unwrap();
    assert!(matches!(
        population_average(&[curve(1.0), other]),
        Err(AcousticsError::GridMismatch)
    ));
}

#[test]
fn element_size_rule() {
    let h = air().max_element_edge(20000.0);
    assert!((h - 2.858e-3).abs() < 1e-5 && h <= 3e-3, "{h}");
}

#[test]
fn swept_cylinder_mesh() {
    let (r, l) = (4e-3, 28e-3);
    let mesh = sweep_tet_mesh(&CanalSpec::cylinder(28.0, 4.0), 3e-3).unwrap();
    assert!(mesh.max_edge_length() <= 3e-3);
    assert!((0..mesh.tets.len()).all(|i| mesh.tet_volume(i) > 0.0));
    let cap = PI * r * r;
    assert!((mesh.volume() / (cap * l) - 1.0).abs() < 0.03, "{}", mesh.volume() / (cap * l));
    for tag in [BoundaryTag::Entrance, BoundaryTag::Drum] {
        assert!((mesh.tagged_area(tag) / cap - 1.0).abs() < 0.03);
    }
    let wall = mesh.tagged_area(BoundaryTag::Wall);
    assert!((wall / (2.0 * PI * r * l) - 1.0).abs() < 0.03);
    mesh.validate().unwrap();
}

#[test]
fn canal_mesh_size_is_practical() {
    let mesh = sweep_tet_mesh(&CanalSpec::default(), 3e-3).unwrap();
    assert!((1_000..=100_000).contains(&mesh.tets.len()), "{}", mesh.tets.len());
    assert!(mesh.max_edge_length() <= 3e-3);
}

#[test]
fn tet_mesh_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("canal.mesh");
    let mesh = sweep_tet_mesh(&CanalSpec::default(), 4e-3).unwrap();
    mesh.write_ascii(std::fs::File::create(&path).unwrap()).unwrap();
    assert_eq!(TetMesh::load_ascii(&path).unwrap(), mesh);
    assert!(matches!(
        TetMesh::load_ascii(dir.path().join("missing.mesh")),
        Err(AcousticsError::FileNotFound(_))
    ));
}

#[test]
fn coarse_fem_tracks_line_at_low_frequency() {
    let a = air();
    let mesh = sweep_tet_mesh(&CanalSpec::cylinder(18.25, 4.0), 3e-3).unwrap();
    let grid = freq_grid(100.0, 3200.0, 3).unwrap();
    let sol = solve_input_impedance_fem(&mesh, &grid, &a, &DrumImpedance::Rigid).unwrap();
    assert!(sol.warnings.is_empty());
    let exact = rigid_tube(0.01825, 4e-3, &grid);
    for (z, e) in sol.impedance.values.iter().zip(&exact.values) {
        assert!((z.norm() / e.norm() - 1.0).abs() < 0.05, "{z} vs {e}");
    }
}

#[test]
fn coarse_mesh_warns_at_high_frequency() {
    let mesh = sweep_tet_mesh(&CanalSpec::cylinder(10.0, 3.0), 4e-3).unwrap();
    let grid = freq_grid(10000.0, 20000.0, 1).unwrap();
    let sol = solve_input_impedance_fem(&mesh, &grid, &air(), &DrumImpedance::Matched).unwrap();
    assert_eq!(sol.warnings.len(), 1);
    assert!(sol.warnings[0].max_edge > sol.warnings[0].required);
}

#[test]
fn drum_table_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("drum.csv");
    let g = freq_grid(100.0, 10000.0, 3).unwrap();
    let table = DrumImpedance::table(g.frequencies.clone(), g.frequencies.iter().map(|f| c(1e3 + f, -f)).collect()).unwrap();
    std::fs::write(&path, table.to_csv_string(&g, &air())).unwrap();
    let back = DrumImpedance::load_csv(&path).unwrap();
    for &f in &g.frequencies {
        let (x, y) = (table.specific_admittance(f, &air()).unwrap(), back.specific_admittance(f, &air()).unwrap());
        assert!((x - y).norm() <= 1e-15 * x.norm());
    }
    assert!(matches!(
        DrumImpedance::load_csv(dir.path().join("nope.csv")),
        Err(AcousticsError::FileNotFound(_))
    ));
}

proptest! {
    #[test]
    fn segment_determinant_is_one(k in 0.1f64..500.0, l in -0.03f64..0.03, zc in 1e5f64..1e8) {
        let d = TransferMatrix::segment(k, l, zc).determinant();
        prop_assert!((d - 1.0).norm() < 1e-12);
    }

    #[test]
    fn log_interpolation_stays_between_samples(f in 100.0f64..10000.0) {
        let table = DrumImpedance::table(vec![100.0, 10000.0], vec![c(2e3, 0.0), c(8e3, 0.0)]).unwrap();
        let z = 1.0 / table.specific_admittance(f, &air()).unwrap().re;
        prop_assert!((2e3 - 1e-9..=8e3 + 1e-9).contains(&z));
        let t = (f / 100.0).ln() / 100f64.ln();
        prop_assert!((z - (2e3 + 6e3 * t)).abs() < 1e-8);
    }
}
