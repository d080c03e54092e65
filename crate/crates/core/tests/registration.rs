use earcanal::geometry::{GridSpec, ScalarField, TriMesh, Vec3};
use earcanal::registration::*;
use nalgebra::Matrix3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sphere(center: Vec3, radius: f64, spacing: f64) -> ScalarField {
    let g = GridSpec::covering(Vec3::repeat(-radius), Vec3::repeat(radius), spacing, 6.0).unwrap();
    ScalarField::from_fn(g, |p| (p - center).norm() - radius).unwrap()
}

const HALF: [f64; 3] = [7.0, 3.5, 2.0];
const ROUNDING: f64 = 1.0;

/// Exact SDF of a rounded box centred at the origin.
fn rounded_box(p: Vec3) -> f64 {
    let q = Vec3::new(p.x.abs() - HALF[0], p.y.abs() - HALF[1], p.z.abs() - HALF[2]);
    q.sup(&Vec3::zeros()).norm() + q.max().min(0.0) - ROUNDING
}

fn box_grid() -> GridSpec {
    let ext = Vec3::new(HALF[0], HALF[1], HALF[2]) + Vec3::repeat(ROUNDING);
    GridSpec::covering(-ext, ext, 0.5, 7.0).unwrap()
}

fn box_field(transform: &AffineTransform) -> ScalarField {
    let inv = transform.inverse();
    ScalarField::from_fn(box_grid(), |p| rounded_box(inv.apply(&p))).unwrap()
}

fn config() -> RegistrationConfig {
    RegistrationConfig::default()
}

#[test]
fn identity_resampling_is_exact() {
    let f = sphere(Vec3::zeros(), 5.0, 0.5);
    let out = resample_through_transform(&f, &AffineTransform::identity());
    assert_eq!(out.values(), f.values());
}

#[test]
fn translated_sphere_resampling() {
    let spacing = 0.5;
    let f = sphere(Vec3::zeros(), 5.0, spacing);
    let t = Vec3::new(1.0, 0.0, 0.0);
    let out = resample_through_transform(&f, &AffineTransform::translation(-t));
    let g = f.grid();
    for i in 0..g.len() {
        let p = g.point_at(i);
        if (p - t).norm() < 9.0 {
            let exact = (p - t).norm() - 5.0;
            assert!((out.values()[i] - exact).abs() <= 0.2 * spacing, "{p:?}");
        }
    }
}

#[test]
fn zero_ffd_composes_to_the_affine() {
    let f = sphere(Vec3::new(0.3, 0.0, 0.0), 5.0, 0.5);
    let a = AffineTransform::rotation_about(&Vec3::new(0.0, 0.0, 1.0), 0.2, &Vec3::new(1.0, 2.0, 0.0));
    let ffd = FfdTransform::covering(Vec3::repeat(-8.0), Vec3::repeat(8.0), 4.0).unwrap();
    let a_only = resample_through_transform(&f, &a);
    let both = resample_through_transform(&f, &ComposedTransform::new(&a, Some(&ffd)));
    assert_eq!(a_only.values(), both.values());
}

#[test]
fn similarity_is_zero_on_itself_and_grows_with_offset() {
    let s = sphere(Vec3::zeros(), 5.0, 0.5);
    let cfg = config();
    assert_eq!(similarity_l1(&s, &s, &AffineTransform::identity(), &cfg).unwrap(), 0.0);
    let mut last = 0.0;
    for t in [0.5, 1.0, 2.0] {
        let r = sphere(Vec3::new(t, 0.0, 0.0), 5.0, 0.5);
        let m = similarity_l1(&s, &r, &AffineTransform::identity(), &cfg).unwrap();
        assert!(m > last, "t={t}: {m} <= {last}");
        last = m;
    }
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm
}

fn small_term() -> SimilarityTerm {
    let s = box_field(&AffineTransform::identity());
    let r = box_field(&AffineTransform::rotation_about(&Vec3::new(1.0, 0.3, 0.0), 0.15, &Vec3::new(0.5, 0.0, 0.0)));
    SimilarityTerm::new(&s, &r, &config()).unwrap()
}

fn random_lattice(seed: u64, scale: f64) -> FfdTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = FfdTransform::zeros(Vec3::new(-12.0, -9.0, -8.0), Vec3::new(4.8, 3.6, 3.2), [6, 6, 6]);
    for v in f.displacements.iter_mut() {
        *v = rng.gen_range(-scale..scale);
    }
    f
}

#[test]
fn ffd_similarity_gradient_matches_finite_differences() {
    let term = small_term();
    let a = AffineTransform::translation(Vec3::new(0.2, -0.1, 0.05));
    let ffd = random_lattice(3, 0.3);
    let (_, g) = term.ffd_gradient(&a, &ffd);
    let h = 1e-6;
    let fd: Vec<f64> = (0..ffd.displacements.len())
        .map(|i| {
            let mut p = ffd.clone();
            let mut m = ffd.clone();
            p.displacements[i] += h;
            m.displacements[i] -= h;
            (term.value(&ComposedTransform::new(&a, Some(&p))) - term.value(&ComposedTransform::new(&a, Some(&m))))
                / (2.0 * h)
        })
        .collect();
    let e = relative_error(&g, &fd);
    assert!(e < 1e-4, "{e}");
}

#[test]
fn affine_similarity_gradient_matches_finite_differences() {
    let term = small_term();
    let par = AffineParameterization::for_points(term.band_points());
    let p0 = [0.1, -0.2, 0.05, 0.0, 0.3, -0.1, 0.2, 0.0, 0.1, 0.4, -0.3, 0.2];
    let (_, g) = term.affine_gradient(&par, &p0);
    let h = 1e-6;
    let fd: Vec<f64> = (0..12)
        .map(|i| {
            let (mut p, mut m) = (p0, p0);
            p[i] += h;
            m[i] -= h;
            (term.value(&par.transform(&p)) - term.value(&par.transform(&m))) / (2.0 * h)
        })
        .collect();
    let e = relative_error(&g, &fd);
    assert!(e < 1e-4, "{e}");
}

#[test]
fn bending_gradient_matches_finite_differences() {
    let ffd = random_lattice(9, 1.0);
    let (e0, g) = bending_energy_gradient(&ffd);
    assert!((e0 - bending_energy(&ffd)).abs() < 1e-12 * e0);
    let h = 1e-5;
    let fd: Vec<f64> = (0..ffd.displacements.len())
        .map(|i| {
            let mut p = ffd.clone();
            let mut m = ffd.clone();
            p.displacements[i] += h;
            m.displacements[i] -= h;
            (bending_energy(&p) - bending_energy(&m)) / (2.0 * h)
        })
        .collect();
    assert!(relative_error(&g, &fd) < 1e-4);
}

#[test]
fn affine_of_identical_fields_is_identity() {
    let s = box_field(&AffineTransform::identity());
    let a = register_affine(&s, &s, &config()).unwrap();
    assert!(a.translation.norm() < 1e-3);
    assert!((a.matrix - Matrix3::identity()).amax() < 1e-4);
}

#[test]
fn affine_recovers_translation() {
    let t = Vec3::new(2.0, 1.0, 0.0);
    let s = box_field(&AffineTransform::identity());
    let r = box_field(&AffineTransform::translation(t));
    let a = register_affine(&s, &r, &config()).unwrap();
    assert!((a.apply(&Vec3::zeros()) - t).norm() < 0.1, "{:?}", a);
}

#[test]
fn affine_recovers_rotation_about_long_axis() {
    let truth = AffineTransform::rotation_about(&Vec3::x(), 10f64.to_radians(), &Vec3::zeros());
    let s = box_field(&AffineTransform::identity());
    let r = box_field(&truth);
    let a = register_affine(&s, &r, &config()).unwrap();
    let err = a.rotation_angle_to(&truth.matrix).to_degrees();
    assert!(err < 0.5, "{err}");
}

#[test]
fn affine_is_translation_equivariant() {
    let truth = AffineTransform::rotation_about(&Vec3::new(0.2, 1.0, 0.0), 0.1, &Vec3::new(1.0, 0.0, 0.0));
    let s = box_field(&AffineTransform::identity());
    let r = box_field(&truth);
    let a = register_affine(&s, &r, &config()).unwrap();
    let o = Vec3::new(3.25, -1.5, 2.0);
    let b = register_affine(&s.translated(o), &r.translated(o), &config()).unwrap();
    for p in [Vec3::zeros(), Vec3::new(6.0, 2.0, 1.0), Vec3::new(-6.0, -3.0, 2.0)] {
        let expected = a.apply(&p) + o;
        assert!((b.apply(&(p + o)) - expected).norm() < 0.05);
    }
}

#[test]
fn ffd_of_identical_fields_stays_at_rest() {
    let s = box_field(&AffineTransform::identity());
    let out = register_ffd_detailed(&s, &s, &AffineTransform::identity(), &config()).unwrap();
    let n = out.ffd.node_count();
    let rms = (out.ffd.displacements.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    assert!(rms < 0.05, "{rms}");
    assert!(out.final_similarity < 1e-3);
}

#[test]
fn ffd_objective_never_increases_and_recovers_a_bend() {
    let s0 = box_field(&AffineTransform::identity());
    // Subject is the reference pulled through a smooth bend.
    let mut warp = FfdTransform::covering(Vec3::new(-9.0, -5.5, -4.0), Vec3::new(9.0, 5.5, 4.0), 4.0).unwrap();
    for n in 0..warp.node_count() {
        let p = warp.node_position(n % warp.lattice_dims[0], (n / warp.lattice_dims[0]) % warp.lattice_dims[1], n / (warp.lattice_dims[0] * warp.lattice_dims[1]));
        let bend = 1.2 * (std::f64::consts::PI * p.x / 18.0).cos();
        warp.set_node(n, Vec3::new(0.0, bend, 0.0));
    }
    let id = AffineTransform::identity();
    let s = resample_through_transform(&s0, &ComposedTransform::new(&id, Some(&warp)));
    let cfg = config();
    let a = register_affine(&s, &s0, &cfg).unwrap();
    let out = register_ffd_detailed(&s, &s0, &a, &cfg).unwrap();
    for level in &out.objective_history {
        assert!(level.windows(2).all(|w| w[1] <= w[0]));
    }
    assert!(out.final_similarity <= 0.2 * out.initial_similarity);
    let term = SimilarityTerm::new(&s, &s0, &cfg).unwrap();
    let mut sq = 0.0;
    for p in term.band_points() {
        let got = ComposedTransform::new(&a, Some(&out.ffd)).apply(p);
        sq += (got - warp.apply(p)).norm_squared();
    }
    let rms = (sq / term.band_size() as f64).sqrt();
    assert!(rms < cfg.lattice_spacing / 4.0, "{rms}");
}

#[test]
fn atlas_of_identical_shapes_converges_immediately() {
    let shape = TriMesh::icosphere(Vec3::zeros(), 1.0, 3).map_vertices(|v| Vec3::new(6.0 * v.x, 3.5 * v.y, 2.5 * v.z));
    let surfaces = vec![shape.clone(), shape.clone(), shape.clone()];
    let atlas = build_atlas(&surfaces, &AtlasConfig::default()).unwrap();
    assert_eq!(atlas.convergence_history.len(), 1);
    let worst = atlas
        .template_mesh
        .vertices()
        .iter()
        .zip(shape.vertices())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(worst < 0.1, "{worst}");
    assert_eq!(atlas.per_subject_affine.len(), 3);
    let mut csv = Vec::new();
    atlas.write_history_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("iteration,mean_update_mm\n1,"));
}

#[test]
fn atlas_needs_two_subjects() {
    let shape = TriMesh::icosphere(Vec3::zeros(), 4.0, 2);
    assert!(matches!(
        build_atlas(&[shape], &AtlasConfig::default()),
        Err(RegistrationError::TooFewSubjects(1))
    ));
}

#[test]
fn invalid_config_is_rejected() {
    let s = sphere(Vec3::zeros(), 4.0, 1.0);
    let cfg = RegistrationConfig {
        narrowband_width: 0.0,
        ..config()
    };
    assert!(matches!(register_affine(&s, &s, &cfg), Err(RegistrationError::InvalidConfig(_))));
}

#[test]
fn ffd_json_round_trip() {
    let f = random_lattice(1, 2.0);
    let back: FfdTransform = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
    assert_eq!(back, f);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bending_ignores_affine_fields(seed in 0u64..1000, m in prop::array::uniform9(-1.0f64..1.0), t in prop::array::uniform3(-5.0f64..5.0)) {
        let base = random_lattice(seed, 1.0);
        let lin = Matrix3::from_row_slice(&m);
        let mut moved = base.clone();
        for n in 0..base.node_count() {
            let d = base.lattice_dims;
            let p = base.node_position(n % d[0], (n / d[0]) % d[1], n / (d[0] * d[1]));
            moved.set_node(n, base.node(n) + lin * p + Vec3::from(t));
        }
        let (e0, e1) = (bending_energy(&base), bending_energy(&moved));
        prop_assert!(e1 >= 0.0);
        prop_assert!((e0 - e1).abs() <= 1e-9 * e0.max(1.0));
    }

    #[test]
    fn unbiasedness_correction_averages_to_identity(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut affines = Vec::new();
        let mut ffds = Vec::new();
        for i in 0..4 {
            let axis = Vec3::new(rng.gen(), rng.gen(), rng.gen::<f64>() + 0.1);
            let a = AffineTransform::rotation_about(&axis, rng.gen_range(-0.2..0.2), &Vec3::zeros())
                .then(&AffineTransform::translation(Vec3::new(rng.gen_range(-2.0..2.0), 0.5, -0.3)));
            affines.push(a);
            ffds.push(random_lattice(seed * 10 + i, 1.0));
        }
        let (ca, cf) = remove_mean_displacement(&affines, &ffds).unwrap();
        for _ in 0..20 {
            let p = Vec3::new(rng.gen_range(-10.0..10.0), rng.gen_range(-8.0..8.0), rng.gen_range(-6.0..6.0));
            let mean = ca.iter().zip(&cf).map(|(a, f)| ComposedTransform::new(a, Some(f)).apply(&p)).sum::<Vec3>() / 4.0;
            prop_assert!((mean - p).norm() < 1e-9);
        }
    }
}
