//! Point distribution model from an atlas and mode synthesis.

use earcanal::geometry::{synth_canal, synth_population_specs, CanalJitter, CanalSpec};
use earcanal::registration::{build_atlas, AtlasConfig};
use earcanal::ssm::{build_pdm, explained_variance, nearest_to_mean, project_correspondences, synthesize};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let specs = synth_population_specs(&CanalSpec::default(), 5, 2, &CanalJitter::default())?;
    let surfaces = specs
        .iter()
        .map(|(spec, seed)| synth_canal(spec, *seed))
        .collect::<Result<Vec<_>, _>>()?;
    let atlas = build_atlas(&surfaces, &AtlasConfig::default())?;
    let corr = project_correspondences(&atlas, &surfaces)?;
    let model = build_pdm(&corr)?;
    for k in 1..=model.mode_count() {
        println!(
            "mode {k}: variance {:.2} mm^2, cumulative share {:.1}%",
            model.eigenvalues[k - 1],
            100.0 * explained_variance(&model, k)
        );
    }
    println!("subject closest to the mean: {}", nearest_to_mean(&model, &corr));
    let mean = model.mean_mesh()?;
    let plus = synthesize(&model, &[3.0])?;
    println!("surface area: mean {:.1} mm^2, +3 sd along mode 1 {:.1} mm^2", mean.area(), plus.area());
    Ok(())
}
