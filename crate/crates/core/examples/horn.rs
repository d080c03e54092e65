//! Horn-equation input impedance of a canal area function, aligned to a
//! common reference plane.

use earcanal::acoustics::{
    align_to_reference_plane, find_half_wave_resonance, freq_grid, horn_input_impedance, AirProperties,
    DrumImpedance, DEFAULT_SEGMENTS,
};
use earcanal::geometry::{centerline_and_area, synth_canal, CanalSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let air = AirProperties::default();
    let grid = freq_grid(35.0, 25000.0, 24)?;
    let af = centerline_and_area(&synth_canal(&CanalSpec::default(), 0)?)?;
    let z = horn_input_impedance(&DrumImpedance::Rigid, &af, &air, &grid, DEFAULT_SEGMENTS)?;
    let f = find_half_wave_resonance(&z, (4000.0, 16000.0))?;
    println!("canal length {:.2} mm, half-wave resonance {f:.0} Hz", af.total_length() * 1e3);

    let aligned = align_to_reference_plane(&z, &af, 9400.0, &air)?;
    let g = find_half_wave_resonance(&aligned, (4000.0, 16000.0))?;
    println!("after alignment: {g:.0} Hz");
    for (f, v) in grid.frequencies.iter().zip(&aligned.values).step_by(24) {
        println!("{f:8.1} Hz  |Z| = {:.3e} Pa s/m^3", v.norm());
    }
    Ok(())
}
