//! Affine then free-form registration of a canal to a rotated, bent copy.

use earcanal::geometry::{synth_canal, CanalSpec};
use earcanal::registration::{
    register_affine, register_ffd_detailed, surface_sdf, AffineTransform, AtlasConfig, ComposedTransform,
    SpatialTransform,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = AtlasConfig::default();
    let subject = synth_canal(&CanalSpec::default(), 0)?;
    let bent = CanalSpec {
        bend_angles: [0.5, -0.4],
        ..CanalSpec::default()
    };
    let moved = AffineTransform::rotation_about(&nalgebra::Vector3::z(), 0.1, &subject.centroid());
    let reference = synth_canal(&bent, 0)?.map_vertices(|v| moved.apply(v));

    let s = surface_sdf(&subject, &cfg)?;
    let r = surface_sdf(&reference, &cfg)?;
    let affine = register_affine(&s, &r, &cfg.registration)?;
    println!(
        "affine: det {:.4}, translation {:.2} mm",
        affine.matrix.determinant(),
        affine.translation.norm()
    );

    let out = register_ffd_detailed(&s, &r, &affine, &cfg.registration)?;
    println!(
        "ffd lattice {:?}, similarity {:.4} -> {:.4} mm",
        out.ffd.lattice_dims, out.initial_similarity, out.final_similarity
    );
    let phi = ComposedTransform::new(&affine, Some(&out.ffd));
    let worst = subject
        .vertices()
        .iter()
        .map(|v| (phi.apply(v) - affine.apply(v)).norm())
        .fold(0.0, f64::max);
    println!("largest free-form correction on the subject surface {worst:.2} mm");
    Ok(())
}
