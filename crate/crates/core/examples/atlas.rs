//! Unbiased template from a small jittered population.

use earcanal::geometry::{synth_canal, synth_population_specs, CanalJitter, CanalSpec};
use earcanal::registration::{build_atlas, AtlasConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let specs = synth_population_specs(&CanalSpec::default(), 4, 1, &CanalJitter::default())?;
    let surfaces = specs
        .iter()
        .map(|(spec, seed)| synth_canal(spec, *seed))
        .collect::<Result<Vec<_>, _>>()?;
    let atlas = build_atlas(&surfaces, &AtlasConfig::default())?;
    println!(
        "template: {} vertices, {} faces",
        atlas.template_mesh.vertices().len(),
        atlas.template_mesh.faces().len()
    );
    for (i, step) in atlas.convergence_history.iter().enumerate() {
        println!("iteration {i}: mean template update {step:.3} mm");
    }
    Ok(())
}
