use rayon::prelude::*;
use serde::Serialize;

use crate::acoustics::{
    align_to_reference_plane, find_half_wave_resonance, freq_grid, horn_input_impedance, population_average,
    solve_input_impedance_fem, sweep_tet_mesh, sweep_tube_tet_mesh, DrumImpedance, FrequencyGrid, ImpedanceCurve,
    TetMesh,
};
use crate::geometry::{
    centerline_and_area, extract_centerline, synth_canal, synth_population_specs, AreaFunction, CanalSpec,
    CenterlineOptions, CenterlineTube, TriMesh,
};
use crate::registration::{build_atlas, register_affine, register_ffd, surface_sdf, AtlasResult};
use crate::ssm::{build_pdm_with, explained_variance, nearest_to_mean, project_correspondences, synthesize, PdmOptions, ShapeModel, SsmError};

use super::manifest::Artifacts;
use super::{Manifest, PipelineConfig, PipelineError, Subcommand};

pub(super) fn run(command: Subcommand, cfg: &PipelineConfig, config_sha256: String) -> Result<Manifest, PipelineError> {
    log::info!("stage=start subcommand={} output_dir={}", command.name(), cfg.output_dir.display());
    let mut out = Artifacts::new(cfg.output_dir.clone(), command.name(), config_sha256);
    // Acoustic inputs are checked before any expensive work.
    let drum = match command {
        Subcommand::ImpedanceFem | Subcommand::ImpedanceHorn | Subcommand::Average | Subcommand::Full => {
            Some(cfg.acoustics.drum.load()?)
        }
        _ => None,
    };
    let drum = drum.as_ref();
    match command {
        Subcommand::Synth => {
            population(cfg, Some(&mut out))?;
        }
        Subcommand::Register => {
            let surfaces = population(cfg, None)?;
            register_to_first(cfg, &surfaces, &mut out)?;
        }
        Subcommand::Atlas => {
            let surfaces = population(cfg, None)?;
            atlas(cfg, &surfaces, &mut out)?;
        }
        Subcommand::Ssm => {
            let surfaces = population(cfg, None)?;
            let a = atlas(cfg, &surfaces, &mut out)?;
            shape_model(cfg, &a, &surfaces, &mut out)?;
        }
        Subcommand::ImpedanceHorn => {
            let surfaces = population(cfg, None)?;
            horn(cfg, &surfaces, drum.expect("loaded"), &mut out)?;
        }
        Subcommand::Average => {
            let measured = match (&cfg.acoustics.curves, &cfg.acoustics.area_functions) {
                (Some(c), Some(a)) => load_curves(c, a)?,
                _ => {
                    let surfaces = population(cfg, None)?;
                    horn(cfg, &surfaces, drum.expect("loaded"), &mut out)?
                }
            };
            average(cfg, &measured, &mut out)?;
        }
        Subcommand::ImpedanceFem => {
            let mesh = fem_mesh(cfg)?;
            fem(cfg, &mesh, drum.expect("loaded"), &mut out)?;
        }
        Subcommand::Full => {
            let surfaces = population(cfg, Some(&mut out))?;
            let a = atlas(cfg, &surfaces, &mut out)?;
            shape_model(cfg, &a, &surfaces, &mut out)?;
            let drum = drum.expect("loaded");
            let measured = horn(cfg, &surfaces, drum, &mut out)?;
            average(cfg, &measured, &mut out)?;
            let line = extract_centerline(&a.template_mesh, &CenterlineOptions::default())?;
            let mesh = sweep_tube_tet_mesh(&CenterlineTube::new(line)?, cfg.acoustics.max_edge)?;
            fem(cfg, &mesh, drum, &mut out)?;
        }
    }
    out.finish()
}

fn subject_name(i: usize) -> String {
    format!("subject_{i:02}")
}

fn population(cfg: &PipelineConfig, out: Option<&mut Artifacts>) -> Result<Vec<TriMesh>, PipelineError> {
    if let Some(paths) = &cfg.mesh_paths {
        return paths
            .iter()
            .map(|p| TriMesh::load_obj(p).map_err(|e| PipelineError::input(p, e)))
            .collect();
    }
    let s = cfg.synthetic.as_ref().expect("validated");
    let specs = synth_population_specs(&s.spec, s.count, s.seed, &s.jitter)?;
    let meshes: Vec<TriMesh> = specs
        .par_iter()
        .map(|(spec, seed)| synth_canal(spec, *seed))
        .collect::<Result<_, _>>()?;
    log::info!("stage=synth subjects={} seed={}", meshes.len(), s.seed);
    if let Some(out) = out {
        #[derive(Serialize)]
        struct Subject<'a> {
            name: String,
            spec: &'a CanalSpec,
            noise_seed: u64,
        }
        let listing: Vec<Subject> = specs
            .iter()
            .enumerate()
            .map(|(i, (spec, seed))| Subject {
                name: subject_name(i),
                spec,
                noise_seed: *seed,
            })
            .collect();
        out.write_json("subjects/specs.json", &listing)?;
        for (i, m) in meshes.iter().enumerate() {
            out.write(&format!("subjects/{}.obj", subject_name(i)), m.to_obj_string().as_bytes())?;
        }
    }
    Ok(meshes)
}

fn register_to_first(cfg: &PipelineConfig, surfaces: &[TriMesh], out: &mut Artifacts) -> Result<(), PipelineError> {
    if surfaces.len() < 2 {
        return Err(PipelineError::Config("register needs at least two subjects".into()));
    }
    let fields = surfaces
        .par_iter()
        .map(|m| surface_sdf(m, &cfg.atlas))
        .collect::<Result<Vec<_>, _>>()?;
    let reg = &cfg.atlas.registration;
    let results = (1..fields.len())
        .into_par_iter()
        .map(|i| {
            let a = register_affine(&fields[0], &fields[i], reg)?;
            let u = register_ffd(&fields[0], &fields[i], &a, reg)?;
            log::info!("stage=register subject={i} reference=0");
            Ok((a, u))
        })
        .collect::<Result<Vec<_>, crate::registration::RegistrationError>>()?;
    for (k, (a, u)) in results.iter().enumerate() {
        let name = subject_name(k + 1);
        out.write_json(&format!("register/{name}_affine.json"), a)?;
        out.write_json(&format!("register/{name}_ffd.json"), u)?;
    }
    Ok(())
}

fn atlas(cfg: &PipelineConfig, surfaces: &[TriMesh], out: &mut Artifacts) -> Result<AtlasResult, PipelineError> {
    let a = build_atlas(surfaces, &cfg.atlas)?;
    out.write("atlas/template.obj", a.template_mesh.to_obj_string().as_bytes())?;
    let mut csv = Vec::new();
    a.write_history_csv(&mut csv).expect("in-memory write");
    out.write("atlas/convergence.csv", &csv)?;
    for i in 0..surfaces.len() {
        let name = subject_name(i);
        out.write_json(&format!("atlas/{name}_affine.json"), &a.per_subject_affine[i])?;
        out.write_json(&format!("atlas/{name}_ffd.json"), &a.per_subject_ffd[i])?;
    }
    Ok(a)
}

fn shape_model(
    cfg: &PipelineConfig,
    atlas: &AtlasResult,
    surfaces: &[TriMesh],
    out: &mut Artifacts,
) -> Result<ShapeModel, PipelineError> {
    let corr = project_correspondences(atlas, surfaces)?;
    let options = PdmOptions {
        procrustes: cfg.ssm.procrustes,
    };
    let model = match build_pdm_with(&corr, &options) {
        Ok(m) => m,
        Err(SsmError::DegeneratePopulation { mean_only }) => {
            log::warn!("stage=ssm warning=degenerate_population modes=0");
            *mean_only
        }
        Err(e) => return Err(e.into()),
    };
    out.write("ssm/model.json", model.to_json()?.as_bytes())?;
    out.write("ssm/mean.obj", model.mean_mesh()?.to_obj_string().as_bytes())?;
    let exported = cfg.ssm.exported_modes.min(model.mode_count());
    for k in 0..exported {
        for (sign, label) in [(1.0, "plus"), (-1.0, "minus")] {
            let mut c = vec![0.0; k + 1];
            c[k] = sign;
            let mesh = synthesize(&model, &c)?;
            out.write(&format!("ssm/mode_{}_{label}.obj", k + 1), mesh.to_obj_string().as_bytes())?;
        }
    }
    #[derive(Serialize)]
    struct Summary {
        mode_count: usize,
        eigenvalues: Vec<f64>,
        cumulative_explained_variance: Vec<f64>,
        nearest_to_mean: usize,
    }
    let summary = Summary {
        mode_count: model.mode_count(),
        eigenvalues: model.eigenvalues.clone(),
        cumulative_explained_variance: (1..=model.mode_count()).map(|k| explained_variance(&model, k)).collect(),
        nearest_to_mean: nearest_to_mean(&model, &corr),
    };
    log::info!(
        "stage=ssm modes={} nearest_to_mean={} explained_first={:.6}",
        summary.mode_count,
        summary.nearest_to_mean,
        summary.cumulative_explained_variance.first().copied().unwrap_or(0.0)
    );
    out.write_json("ssm/summary.json", &summary)?;
    Ok(model)
}

fn grid(cfg: &PipelineConfig) -> Result<FrequencyGrid, PipelineError> {
    let a = &cfg.acoustics;
    freq_grid(a.f_min, a.f_max, a.bands_per_octave).map_err(|e| PipelineError::Config(e.to_string()))
}

fn horn(
    cfg: &PipelineConfig,
    surfaces: &[TriMesh],
    drum: &DrumImpedance,
    out: &mut Artifacts,
) -> Result<Vec<(ImpedanceCurve, AreaFunction)>, PipelineError> {
    let grid = grid(cfg)?;
    let a = &cfg.acoustics;
    let results = surfaces
        .par_iter()
        .map(|m| -> Result<_, PipelineError> {
            let area = centerline_and_area(m)?;
            let curve = horn_input_impedance(drum, &area, &a.air, &grid, a.horn_segments)?;
            Ok((curve, area))
        })
        .collect::<Result<Vec<_>, _>>()?;
    for (i, (curve, area)) in results.iter().enumerate() {
        let name = subject_name(i);
        out.write(&format!("horn/{name}.csv"), curve.to_csv_string().as_bytes())?;
        let mut csv = Vec::new();
        area.write_csv(&mut csv).expect("in-memory write");
        out.write(&format!("horn/{name}_area.csv"), &csv)?;
    }
    log::info!("stage=horn subjects={}", results.len());
    Ok(results)
}

fn load_curves(
    curves: &[std::path::PathBuf],
    areas: &[std::path::PathBuf],
) -> Result<Vec<(ImpedanceCurve, AreaFunction)>, PipelineError> {
    curves
        .iter()
        .zip(areas)
        .map(|(c, a)| {
            let curve = ImpedanceCurve::load_csv(c).map_err(|e| PipelineError::input(c, e))?;
            let area = AreaFunction::load_csv(a).map_err(|e| PipelineError::input(a, e))?;
            Ok((curve, area))
        })
        .collect()
}

fn average(
    cfg: &PipelineConfig,
    measured: &[(ImpedanceCurve, AreaFunction)],
    out: &mut Artifacts,
) -> Result<(), PipelineError> {
    let a = &cfg.acoustics;
    let aligned = measured
        .iter()
        .map(|(curve, area)| align_to_reference_plane(curve, area, a.reference_frequency, &a.air))
        .collect::<Result<Vec<_>, _>>()?;
    for (i, c) in aligned.iter().enumerate() {
        out.write(&format!("average/{}_aligned.csv", subject_name(i)), c.to_csv_string().as_bytes())?;
    }
    let (median, mean) = population_average(&aligned)?;
    out.write("average/median.csv", median.to_csv_string().as_bytes())?;
    out.write("average/mean.csv", mean.to_csv_string().as_bytes())?;
    log::info!("stage=average curves={}", aligned.len());
    Ok(())
}

fn fem_mesh(cfg: &PipelineConfig) -> Result<TetMesh, PipelineError> {
    let a = &cfg.acoustics;
    if let Some(p) = &a.tet_mesh {
        return TetMesh::load_ascii(p).map_err(|e| PipelineError::input(p, e));
    }
    if let Some(s) = &cfg.synthetic {
        return Ok(sweep_tet_mesh(&s.spec, a.max_edge)?);
    }
    let paths = cfg.mesh_paths.as_ref().expect("validated");
    let surface = TriMesh::load_obj(&paths[0]).map_err(|e| PipelineError::input(&paths[0], e))?;
    let line = extract_centerline(&surface, &CenterlineOptions::default())?;
    Ok(sweep_tube_tet_mesh(&CenterlineTube::new(line)?, a.max_edge)?)
}

fn fem(cfg: &PipelineConfig, mesh: &TetMesh, drum: &DrumImpedance, out: &mut Artifacts) -> Result<(), PipelineError> {
    let a = &cfg.acoustics;
    let grid = grid(cfg)?;
    log::info!(
        "stage=fem vertices={} tets={} max_edge_m={:.4e} frequencies={}",
        mesh.vertices.len(),
        mesh.tets.len(),
        mesh.max_edge_length(),
        grid.len()
    );
    let solution = solve_input_impedance_fem(mesh, &grid, &a.air, drum)?;
    out.write("fem/mesh.tet", mesh.to_ascii_string().as_bytes())?;
    out.write("fem/impedance.csv", solution.impedance.to_csv_string().as_bytes())?;
    let window = (
        (a.reference_frequency / 1.6).max(grid.min()),
        (a.reference_frequency * 1.6).min(grid.max()),
    );
    #[derive(Serialize)]
    struct Summary {
        vertices: usize,
        tetrahedra: usize,
        max_edge_m: f64,
        half_wave_resonance_hz: Option<f64>,
        warnings: Vec<String>,
    }
    let summary = Summary {
        vertices: mesh.vertices.len(),
        tetrahedra: mesh.tets.len(),
        max_edge_m: mesh.max_edge_length(),
        half_wave_resonance_hz: find_half_wave_resonance(&solution.impedance, window).ok(),
        warnings: solution.warnings.iter().map(|w| w.to_string()).collect(),
    };
    out.write_json("fem/summary.json", &summary)?;
    Ok(())
}
