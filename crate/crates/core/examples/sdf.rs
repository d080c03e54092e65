//! Signed distance field of a synthetic canal and its zero isosurface.

use earcanal::geometry::{
    cap_open_boundaries, extract_isosurface, signed_distance_field, synth_canal, CanalSpec, GridSpec,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mesh = cap_open_boundaries(&synth_canal(&CanalSpec::default(), 0)?)?;
    let (lo, hi) = mesh.bounding_box().ok_or("empty mesh")?;
    let grid = GridSpec::covering(lo, hi, 0.5, 6.0)?;
    let field = signed_distance_field(&mesh, &grid)?;
    let inside = field.values().iter().filter(|v| **v < 0.0).count();
    println!("grid {:?}, {} voxels inside", grid.dims, inside);

    let surface = extract_isosurface(&field, 0.0)?;
    println!(
        "input {} triangles, area {:.1} mm^2; isosurface {} triangles, area {:.1} mm^2",
        mesh.faces().len(),
        mesh.area(),
        surface.faces().len(),
        surface.area()
    );
    Ok(())
}
