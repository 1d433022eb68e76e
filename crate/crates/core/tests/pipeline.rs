use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use planesdf::change2d::CellState;
use planesdf::evaluation::score;
use planesdf::plane_detection::{detect_planes, DetectionParams};
use planesdf::planesdf::{PlaneSdf, SdfVolume};
use planesdf::pipeline::{build_scene, detect_direction, run, Direction};
use planesdf::scene_io::{generate_scene_pair, ObjectAnnotation, ScenarioKind, Shape, SyntheticScenario};
use planesdf::validate3d::{build_feature, FeatureParams};
use planesdf::{PipelineConfig, PointCloud};

fn least_squares_normal(pts: &[Point3<f64>]) -> Vector3<f64> {
    let c = pts.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / pts.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = p.coords - c;
        cov += d * d.transpose();
    }
    let e = SymmetricEigen::new(cov);
    e.eigenvectors.column(e.eigenvalues.imin()).into_owned()
}

#[test]
fn orthogonal_planes_match_least_squares_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let floor: Vec<Point3<f64>> = (0..8000)
        .map(|_| Point3::new(rng.random_range(-1.0..0.9), rng.random_range(-1.0..1.0), 0.0))
        .collect();
    let wall: Vec<Point3<f64>> = (0..6000)
        .map(|_| Point3::new(1.0, rng.random_range(-1.0..1.0), rng.random_range(0.05..1.0)))
        .collect();
    let mut pts = floor.clone();
    pts.extend(&wall);
    let planes = detect_planes(&PointCloud::new(pts), &DetectionParams::default());
    assert_eq!(planes.len(), 2);
    for (truth, members) in [(Vector3::z(), &floor), (Vector3::x(), &wall)] {
        let oracle = least_squares_normal(members);
        assert!(oracle.dot(&truth).abs() > (0.01f64).to_radians().cos());
        let best = planes
            .iter()
            .map(|p| p.pose.normal.dot(&oracle).abs().clamp(0.0, 1.0).acos().to_degrees())
            .fold(f64::INFINITY, f64::min);
        assert!(best <= 0.5, "normal off by {best} degrees");
    }
}

// Reference feature: two-pass Sobel Hessian, library eigen-decomposition and
// plain binning.

fn sobel_pass(f: &dyn Fn(isize, isize, isize) -> f64, axis: usize) -> impl Fn(isize, isize, isize) -> f64 + '_ {
    move |x, y, z| {
        let d = [-0.5, 0.0, 0.5];
        let s = [0.25, 0.5, 0.25];
        let mut acc = 0.0;
        for c in 0..3usize {
            for b in 0..3usize {
                for a in 0..3usize {
                    let o = [a, b, c];
                    let w: f64 = (0..3).map(|ax| if ax == axis { d[o[ax]] } else { s[o[ax]] }).product();
                    acc += w * f(x + a as isize - 1, y + b as isize - 1, z + c as isize - 1);
                }
            }
        }
        acc
    }
}

fn reference_feature(phi: &dyn Fn(isize, isize, isize) -> f64, v0: [isize; 3], vs: f64, p: &FeatureParams) -> Vec<f64> {
    let first: Vec<Box<dyn Fn(isize, isize, isize) -> f64 + '_>> =
        (0..3).map(|ax| Box::new(sobel_pass(phi, ax)) as Box<dyn Fn(isize, isize, isize) -> f64>).collect();
    let mut pairs = Vec::new();
    let mut scalar = (0.0, 0.0);
    for dz in -1..=1isize {
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let (x, y, z) = (v0[0] + dx, v0[1] + dy, v0[2] + dz);
                let mut h = Matrix3::zeros();
                for i in 0..3 {
                    for j in 0..3 {
                        h[(i, j)] = sobel_pass(&*first[j], i)(x, y, z) / (vs * vs);
                    }
                }
                let e = SymmetricEigen::new(h);
                let mut idx = [0usize, 1, 2];
                idx.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
                let norm: f64 = e.eigenvalues.iter().map(|l| l.abs()).sum::<f64>() + 1e-12;
                let per_voxel: Vec<(f64, f64, f64)> = idx
                    .iter()
                    .map(|&k| {
                        let mut v: Vector3<f64> = e.eigenvectors.column(k).into_owned();
                        if v.y < 0.0 || (v.y == 0.0 && (v.x < 0.0 || (v.x == 0.0 && v.z < 0.0))) {
                            v = -v;
                        }
                        let mut theta = v.y.atan2(v.x).to_degrees();
                        if theta < 0.0 {
                            theta += 180.0;
                        }
                        if theta >= 180.0 {
                            theta -= 180.0;
                        }
                        let phi = (v.z / v.norm()).asin().to_degrees();
                        (e.eigenvalues[k] / norm, theta, phi)
                    })
                    .collect();
                pairs.push(per_voxel);
                let w = (-((dx * dx + dy * dy + dz * dz) as f64) / (2.0 * p.sigma * p.sigma)).exp();
                scalar.0 += w * phi(x, y, z);
                scalar.1 += w;
            }
        }
    }
    let sub = p.n_theta * p.n_phi * p.n_lambda;
    let mut out = vec![0.0; 3 * sub + 1];
    let bin = |x: f64, lo: f64, hi: f64, n: usize| -> usize {
        if hi <= lo {
            0
        } else {
            (((x - lo) / (hi - lo) * n as f64).floor().max(0.0) as usize).min(n - 1)
        }
    };
    for i in 0..3 {
        let lo = pairs.iter().map(|v| v[i].0).fold(f64::INFINITY, f64::min);
        let hi = pairs.iter().map(|v| v[i].0).fold(f64::NEG_INFINITY, f64::max);
        for v in &pairs {
            let (l, t, f) = v[i];
            let cell = (bin(t, 0.0, 180.0, p.n_theta) * p.n_phi + bin(f, -90.0, 90.0, p.n_phi)) * p.n_lambda
                + bin(l, lo, hi, p.n_lambda);
            out[i * sub + cell] += 1.0;
        }
    }
    out[3 * sub] = scalar.0 / scalar.1;
    out
}

#[test]
fn sphere_feature_matches_reference() {
    let vs = 0.007;
    let n = 32;
    let trunc = 4.0 * vs;
    let centre = Vector3::new(0.1103, 0.1087, 0.1121);
    let radius = 0.06;
    let phi = |i: isize, j: isize, k: isize| {
        let p = Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * vs;
        ((p - centre).norm() - radius).clamp(-trunc, trunc)
    };
    let vol = SdfVolume::from_fn([0.0; 3], vs, [n, n, n], trunc, |i, j, k| phi(i as isize, j as isize, k as isize));
    let params = FeatureParams::default();
    let mut compared = 0;
    // Voxels along a ray through the shell.
    for s in 0..8 {
        let r = radius - 2.0 * vs + s as f64 * 0.6 * vs;
        let dir = Vector3::new(0.3, 0.5, 0.81).normalize();
        let p = centre + dir * r;
        let v0 = [(p.x / vs) as isize, (p.y / vs) as isize, (p.z / vs) as isize];
        let (ours, _) = build_feature(&vol, v0, None, &params).expect("inside the volume");
        let reference = reference_feature(&phi, v0, vs, &params);
        assert_eq!(ours.values.len(), reference.len());
        for (a, b) in ours.values[..450].iter().zip(&reference[..450]) {
            assert_eq!(a, b, "histogram bins differ at {v0:?}");
        }
        assert!((ours.values[450] - reference[450]).abs() < 1e-12);
        compared += 1;
    }
    assert_eq!(compared, 8);
}

/// Analytic count of voxels whose centers lie within `reach` of the side
/// or top faces of `shape`, above `clearance`, for an object standing at
/// `centre` on the plane of `sdf`.
fn analytic_surface_voxels(sdf: &PlaneSdf, shape: &Shape, centre: [f64; 2], reach: f64, clearance: f64) -> usize {
    let vol = &sdf.volume;
    let [nx, ny, nz] = vol.dims();
    let h = shape.height();
    let mut count = 0;
    for k in 0..nz {
        let z = vol.layer_height(k);
        if z <= clearance || z > h + reach {
            continue;
        }
        for j in 0..ny {
            for i in 0..nx {
                let q = vol.voxel_center([i as isize, j as isize, k as isize]);
                let w = sdf.frame.to_world(&q);
                let (dx, dy) = (w.x - centre[0], w.y - centre[1]);
                let (side, inside) = match *shape {
                    Shape::Box { size, .. } => {
                        let ox = dx.abs() - size[0] / 2.0;
                        let oy = dy.abs() - size[1] / 2.0;
                        let outside = Vector3::new(ox.max(0.0), oy.max(0.0), 0.0).norm();
                        (if ox <= 0.0 && oy <= 0.0 { -ox.max(oy) } else { outside }, ox <= 0.0 && oy <= 0.0)
                    }
                    Shape::Cylinder { radius, .. } => {
                        let r = (dx * dx + dy * dy).sqrt();
                        ((r - radius).abs(), r <= radius)
                    }
                };
                let d_side = if z <= h {
                    side
                } else {
                    Vector3::new(if inside { 0.0 } else { side }, z - h, 0.0).norm()
                };
                let d_top = if inside {
                    (z - h).abs()
                } else {
                    Vector3::new(side, z - h, 0.0).norm()
                };
                if d_side.min(d_top) <= reach {
                    count += 1;
                }
            }
        }
    }
    count
}

fn removal_pair() -> (planesdf::scene_io::ScenePair, ObjectAnnotation) {
    // The first seed whose removed object fits inside the fusing band.
    for seed in 0..50 {
        let scenario = SyntheticScenario::random(ScenarioKind::Remove, seed);
        let pair = generate_scene_pair(&scenario, seed).unwrap();
        let removed = pair.ground_truth.objects.iter().find(|o| o.changed).unwrap().clone();
        if removed.shape.height() + 0.02 < PipelineConfig::default().fusing_band {
            return (pair, removed);
        }
    }
    panic!("no short removed object in 50 seeds");
}

#[test]
fn removed_object_is_confirmed_and_extracted() {
    let config = PipelineConfig::default();
    let (pair, removed) = removal_pair();
    let det = run(&pair.source.cloud, &pair.target.cloud, &config, Direction::Forward).unwrap();
    let fwd = det.forward.as_ref().unwrap();

    let changed_blobs: Vec<_> = fwd.pairs.iter().flat_map(|p| &p.verdicts).filter(|v| v.blob.is_some()).collect();
    assert!(!changed_blobs.is_empty());
    for v in &changed_blobs {
        assert!(v.changed);
        let h = v.h_avg.expect("key voxels exist");
        assert!(h < 0.5, "H_avg {h}");
    }

    // Changed voxels cover the removed object and nothing else.
    let gt = pair.gt_forward();
    let report = score(&fwd.changed_points, &gt, config.match_radius, 2.0 * config.voxel_size);
    assert_eq!(report.precision, 1.0);
    assert!(report.recall >= 0.9, "recall {}", report.recall);
    assert_eq!(report.wrong_clusters, 0);

    let table = det
        .source_planes
        .iter()
        .max_by(|a, b| a.pose.offset.total_cmp(&b.pose.offset))
        .unwrap();
    let expected = analytic_surface_voxels(
        table,
        &removed.shape,
        removed.source.unwrap(),
        table.volume.occupancy_threshold(),
        table.volume.plane_clearance(),
    ) as f64;
    let got = fwd.changed_points.len() as f64;
    assert!((got - expected).abs() <= 0.1 * expected, "{got} voxels vs {expected} expected");
}

#[test]
fn viewpoint_change_with_same_visible_faces_reverts_height_false_positive() {
    let config = PipelineConfig::default();
    // A layout of boxes below the fusing band: a 20° turn keeps the same
    // faces in view, so the unchanged boxes are observed identically.
    let seed = 0;
    let centre = [0.0, 0.0];
    let at = |azimuth_deg: f64| {
        let a = azimuth_deg.to_radians();
        [centre[0] + 2.5 * a.cos(), centre[1] + 2.5 * a.sin(), 1.8]
    };
    let scenario = SyntheticScenario::random(ScenarioKind::Unchanged, seed).with_viewpoints(at(-140.0), at(-120.0));
    assert!(scenario
        .objects
        .iter()
        .all(|o| matches!(o.shape, Shape::Box { .. }) && o.shape.height() < config.fusing_band));
    let pair = generate_scene_pair(&scenario, seed).unwrap();
    assert!(pair.source.cloud.points == pair.target.cloud.points);

    let mut src = build_scene(&pair.source.cloud, &config).unwrap();
    let tgt = build_scene(&pair.target.cloud, &config).unwrap();
    let table = (0..src.len()).max_by(|&a, &b| src[a].pose.offset.total_cmp(&src[b].pose.offset)).unwrap();
    assert!(!src[table].object_map.is_empty());
    // Bias every object on the table so the height stage flags it.
    for c in src[table].height_map.cells_mut().as_mut_slice() {
        if *c > 0.0 {
            *c += 0.03;
        }
    }
    let d = detect_direction(&src, &tgt, &config, Direction::Forward).unwrap();
    let pair_out = d.pairs.iter().find(|p| p.pairing.source_id == src[table].id).unwrap();
    let blob_verdicts: Vec<_> = pair_out.verdicts.iter().filter(|v| v.blob.is_some()).collect();
    assert_eq!(blob_verdicts.len(), src[table].object_map.len());
    for v in blob_verdicts {
        let h = v.h_avg.expect("key voxels exist");
        assert!(!v.changed && h >= config.delta_blob, "blob {:?}: H_avg {h}", v.blob);
    }
    assert!(pair_out.preliminary.count(CellState::Changed) > 0);
    assert_eq!(pair_out.refined.count(CellState::Changed), 0);
}
