//! Finite-element input impedance of a cylinder against the analytic line.

use earcanal::acoustics::{
    analytic_tube_impedance, fem_half_wave_resonance, freq_grid, sweep_tet_mesh, AirProperties, DrumImpedance,
    FemSystem,
};
use earcanal::geometry::CanalSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let air = AirProperties::default();
    let (length, radius) = (0.01825, 0.004);
    let mesh = sweep_tet_mesh(&CanalSpec::cylinder(length * 1e3, radius * 1e3), 0.003)?;
    let system = FemSystem::assemble(&mesh)?;
    println!(
        "{} tetrahedra, {} unknowns, bandwidth {}",
        mesh.tets.len(),
        system.dof_count(),
        system.bandwidth()
    );

    let grid = freq_grid(250.0, 8000.0, 3)?;
    let fem = system.solve(&grid, &air, &DrumImpedance::Rigid)?;
    let line = analytic_tube_impedance(length, std::f64::consts::PI * radius * radius, &air, &DrumImpedance::Rigid, &grid)?;
    for ((f, a), b) in grid.frequencies.iter().zip(&fem.impedance.values).zip(&line.values) {
        println!("{f:7.1} Hz  fem |Z| {:.4e}  line |Z| {:.4e}", a.norm(), b.norm());
    }
    let res = fem_half_wave_resonance(&system, &air, &DrumImpedance::Rigid, (5000.0, 15000.0), 24)?;
    println!("half-wave resonance {res:.1} Hz, analytic {:.1} Hz", air.sound_speed / (2.0 * length));
    Ok(())
}
