//! Centerline and cross-sectional area function of a synthetic canal.

use earcanal::geometry::{extract_centerline, synth_canal, CanalSpec, CenterlineOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = CanalSpec::default();
    let mesh = synth_canal(&spec, 0)?;
    let line = extract_centerline(&mesh, &CenterlineOptions::default())?;
    println!(
        "centerline length {:.2} mm (nominal {:.2}), max deviation from chord {:.2} mm",
        line.length(),
        spec.length,
        line.max_chord_deviation()
    );
    let area = line.area_function(11)?;
    for (s, a) in area.arc_length().iter().zip(area.area()) {
        println!("s = {:6.2} mm  A = {:6.2} mm^2", s * 1e3, a * 1e6);
    }
    Ok(())
}
