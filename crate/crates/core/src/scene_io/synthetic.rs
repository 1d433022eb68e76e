//! Synthetic tabletop scene pairs with known object-level changes.
//!
//! A scene is a floor rectangle at `z = 0`, a floating table top and a handful
//! of axis-aligned boxes and cylinders standing on it. Surface samples are a
//! deterministic function of `(seed, surface)`, so geometry that did not change
//! between the two scenes is sampled at the same positions; sensor noise is
//! drawn independently per scene.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{LabeledPointCloud, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    Add,
    Remove,
    Move,
    Swap,
    Unchanged,
}

impl ScenarioKind {
    pub const CHANGING: [ScenarioKind; 4] = [
        ScenarioKind::Add,
        ScenarioKind::Remove,
        ScenarioKind::Move,
        ScenarioKind::Swap,
    ];
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::Add => "add",
            ScenarioKind::Remove => "remove",
            ScenarioKind::Move => "move",
            ScenarioKind::Swap => "swap",
            ScenarioKind::Unchanged => "unchanged",
        })
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" => Ok(ScenarioKind::Add),
            "remove" => Ok(ScenarioKind::Remove),
            "move" => Ok(ScenarioKind::Move),
            "swap" => Ok(ScenarioKind::Swap),
            "unchanged" => Ok(ScenarioKind::Unchanged),
            other => Err(Error::Validation(format!("unknown scenario kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Axis-aligned box with footprint `size` (x, y) in meters.
    Box { size: [f64; 2], height: f64 },
    Cylinder { radius: f64, height: f64 },
}

impl Shape {
    pub fn height(&self) -> f64 {
        match *self {
            Shape::Box { height, .. } | Shape::Cylinder { height, .. } => height,
        }
    }

    /// Half extent of the axis-aligned footprint rectangle.
    pub fn half_extent(&self) -> [f64; 2] {
        match *self {
            Shape::Box { size, .. } => [size[0] / 2.0, size[1] / 2.0],
            Shape::Cylinder { radius, .. } => [radius, radius],
        }
    }

    fn footprint_contains(&self, dx: f64, dy: f64) -> bool {
        match *self {
            Shape::Box { size, .. } => dx.abs() < size[0] / 2.0 && dy.abs() < size[1] / 2.0,
            Shape::Cylinder { radius, .. } => dx * dx + dy * dy < radius * radius,
        }
    }

    fn is_degenerate(&self) -> bool {
        let bad = |v: f64| !(v > 0.0) || !v.is_finite();
        match *self {
            Shape::Box { size, height } => bad(size[0]) || bad(size[1]) || bad(height),
            Shape::Cylinder { radius, height } => bad(radius) || bad(height),
        }
    }
}

/// An object and its footprint center (world xy) in each scene; `None` means
/// absent from that scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectSpec {
    pub id: u32,
    pub shape: Shape,
    pub source: Option<[f64; 2]>,
    pub target: Option<[f64; 2]>,
}

impl ObjectSpec {
    pub fn is_changed(&self) -> bool {
        self.source != self.target
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableSpec {
    pub center: [f64; 2],
    pub extent: [f64; 2],
    pub height: f64,
}

impl Default for TableSpec {
    fn default() -> Self {
        Self {
            center: [0.0, 0.0],
            extent: [1.2, 0.8],
            height: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenario {
    pub kind: ScenarioKind,
    pub table: TableSpec,
    pub objects: Vec<ObjectSpec>,
    /// Standard deviation of the isotropic Gaussian noise, truncated at 3σ.
    pub noise_sigma: f64,
    /// Surface samples per square meter.
    pub density: f64,
    /// Floor rectangle extends this far beyond the table on every side.
    pub floor_margin: f64,
    /// Ids of the objects whose presence or pose differs between the scenes.
    pub changed: Vec<u32>,
    /// Camera positions for the two scenes. With a camera, surface samples
    /// facing away from it are dropped; samples stay tied to their surface,
    /// so a face seen from both cameras is observed identically.
    pub viewpoints: [Option<[f64; 3]>; 2],
}

const EDGE_MARGIN: f64 = 0.03;
const MIN_GAP: f64 = 0.08;
const SWAP_MIN_HEIGHT_DIFF: f64 = 0.05;
/// Object centers are snapped to this lattice (the default voxel size) so the
/// same object voxelizes identically wherever it is placed.
pub const PLACEMENT_STEP: f64 = 0.007;

impl SyntheticScenario {
    /// Random tabletop layout with 3–4 objects and the requested change.
    /// Noise-free at the default density of 40 000 points/m².
    pub fn random(kind: ScenarioKind, seed: u64) -> Self {
        let mut rng = stream(seed, 0x5ce9e);
        let table = TableSpec::default();
        loop {
            if let Some(objects) = try_layout(kind, &table, &mut rng) {
                let mut s = Self {
                    kind,
                    table,
                    objects,
                    noise_sigma: 0.0,
                    density: 40_000.0,
                    floor_margin: 0.5,
                    changed: Vec::new(),
                    viewpoints: [None, None],
                };
                s.changed = s.computed_changes();
                debug_assert!(s.validate().is_ok());
                return s;
            }
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    /// Observes the source scene from `source` and the target from `target`.
    pub fn with_viewpoints(mut self, source: [f64; 3], target: [f64; 3]) -> Self {
        self.viewpoints = [Some(source), Some(target)];
        self
    }

    fn computed_changes(&self) -> Vec<u32> {
        self.objects
            .iter()
            .filter(|o| o.is_changed())
            .map(|o| o.id)
            .collect()
    }

    pub fn object(&self, id: u32) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let v = |m: String| Err(Error::Validation(m));
        let t = &self.table;
        if !(t.extent[0] > 0.0 && t.extent[1] > 0.0 && t.height > 0.0) {
            return v("table extent and height must be positive".into());
        }
        if !(self.noise_sigma >= 0.0) || !(self.density > 0.0) || !(self.floor_margin >= 0.0) {
            return v("noise must be >= 0, density > 0, floor margin >= 0".into());
        }
        for o in &self.objects {
            if o.id == 0 {
                return v("object id 0 is reserved for background".into());
            }
            if o.shape.is_degenerate() {
                return v(format!("object {} has a zero or invalid dimension", o.id));
            }
            let he = o.shape.half_extent();
            for c in [o.source, o.target].into_iter().flatten() {
                for a in 0..2 {
                    let lo = t.center[a] - t.extent[a] / 2.0;
                    let hi = t.center[a] + t.extent[a] / 2.0;
                    if c[a] - he[a] < lo || c[a] + he[a] > hi {
                        return v(format!("object {} footprint leaves the table", o.id));
                    }
                }
            }
        }
        let mut ids: Vec<u32> = self.objects.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return v("duplicate object id".into());
        }

        let mut listed = self.changed.clone();
        listed.sort_unstable();
        let mut actual = self.computed_changes();
        actual.sort_unstable();
        if listed != actual {
            return v(format!(
                "ground-truth list {listed:?} disagrees with object poses {actual:?}"
            ));
        }
        let changed: Vec<&ObjectSpec> = self.objects.iter().filter(|o| o.is_changed()).collect();
        let consistent = match self.kind {
            ScenarioKind::Unchanged => changed.is_empty(),
            ScenarioKind::Add => {
                !changed.is_empty()
                    && changed.iter().all(|o| o.source.is_none() && o.target.is_some())
            }
            ScenarioKind::Remove => {
                !changed.is_empty()
                    && changed.iter().all(|o| o.source.is_some() && o.target.is_none())
            }
            ScenarioKind::Move => {
                !changed.is_empty()
                    && changed.iter().all(|o| o.source.is_some() && o.target.is_some())
            }
            ScenarioKind::Swap => {
                changed.len() == 2
                    && changed[0].source.is_some()
                    && changed[0].source == changed[1].target
                    && changed[1].source == changed[0].target
            }
        };
        if !consistent {
            return v(format!("object changes do not describe a `{}` scenario", self.kind));
        }
        Ok(())
    }
}

fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

fn random_shape(rng: &mut ChaCha8Rng) -> Shape {
    let height = rng.random_range(0.05..=0.35);
    if rng.random_bool(0.5) {
        Shape::Box {
            size: [rng.random_range(0.06..=0.18), rng.random_range(0.06..=0.18)],
            height,
        }
    } else {
        Shape::Cylinder {
            radius: rng.random_range(0.03..=0.08),
            height,
        }
    }
}

fn snap(v: f64) -> f64 {
    (v / PLACEMENT_STEP).round() * PLACEMENT_STEP
}

/// Axis-aligned gap between two footprint rectangles (negative if they overlap).
fn footprint_gap(a: &Shape, ca: [f64; 2], b: &Shape, cb: [f64; 2]) -> f64 {
    let (ha, hb) = (a.half_extent(), b.half_extent());
    let gx = (ca[0] - cb[0]).abs() - ha[0] - hb[0];
    let gy = (ca[1] - cb[1]).abs() - ha[1] - hb[1];
    gx.max(gy)
}

fn fits_on_table(shape: &Shape, c: [f64; 2], table: &TableSpec) -> bool {
    let he = shape.half_extent();
    (0..2).all(|a| {
        let lo = table.center[a] - table.extent[a] / 2.0 + EDGE_MARGIN;
        let hi = table.center[a] + table.extent[a] / 2.0 - EDGE_MARGIN;
        c[a] - he[a] >= lo && c[a] + he[a] <= hi
    })
}

fn clear_of(shape: &Shape, c: [f64; 2], others: &[(Shape, [f64; 2])]) -> bool {
    others
        .iter()
        .all(|(s, o)| footprint_gap(shape, c, s, *o) >= MIN_GAP)
}

fn random_free_position(
    shape: &Shape,
    table: &TableSpec,
    occupied: &[(Shape, [f64; 2])],
    rng: &mut ChaCha8Rng,
) -> Option<[f64; 2]> {
    let he = shape.half_extent();
    for _ in 0..500 {
        let c = [0, 1].map(|a| {
            let lo = table.center[a] - table.extent[a] / 2.0 + EDGE_MARGIN + he[a];
            let hi = table.center[a] + table.extent[a] / 2.0 - EDGE_MARGIN - he[a];
            snap(rng.random_range(lo..=hi))
        });
        if fits_on_table(shape, c, table) && clear_of(shape, c, occupied) {
            return Some(c);
        }
    }
    None
}

fn try_layout(kind: ScenarioKind, table: &TableSpec, rng: &mut ChaCha8Rng) -> Option<Vec<ObjectSpec>> {
    let count = rng.random_range(3..=4u32);
    let mut placed: Vec<(Shape, [f64; 2])> = Vec::new();
    for _ in 0..count {
        let shape = random_shape(rng);
        let c = random_free_position(&shape, table, &placed, rng)?;
        placed.push((shape, c));
    }
    let mut objects: Vec<ObjectSpec> = placed
        .iter()
        .enumerate()
        .map(|(i, &(shape, c))| ObjectSpec {
            id: i as u32 + 1,
            shape,
            source: Some(c),
            target: Some(c),
        })
        .collect();

    let k = rng.random_range(0..objects.len());
    match kind {
        ScenarioKind::Unchanged => {}
        ScenarioKind::Add => objects[k].source = None,
        ScenarioKind::Remove => objects[k].target = None,
        ScenarioKind::Move => {
            // Clear of every other object and of its own old footprint.
            let occupied: Vec<(Shape, [f64; 2])> = placed.clone();
            let c = random_free_position(&objects[k].shape, table, &occupied, rng)?;
            objects[k].target = Some(c);
        }
        ScenarioKind::Swap => {
            let n = objects.len();
            let pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                .filter(|&(a, b)| {
                    (objects[a].shape.height() - objects[b].shape.height()).abs()
                        >= SWAP_MIN_HEIGHT_DIFF
                })
                .collect();
            let &(a, b) = pairs.get(rng.random_range(0..pairs.len().max(1)))?;
            let (ca, cb) = (objects[a].source?, objects[b].source?);
            let others: Vec<(Shape, [f64; 2])> = objects
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != a && i != b)
                .map(|(_, o)| (o.shape, o.source.unwrap()))
                .collect();
            let (sa, sb) = (objects[a].shape, objects[b].shape);
            if !(fits_on_table(&sa, cb, table)
                && fits_on_table(&sb, ca, table)
                && clear_of(&sa, cb, &others)
                && clear_of(&sb, ca, &others)
                && footprint_gap(&sa, cb, &sb, ca) >= MIN_GAP)
            {
                return None;
            }
            objects[a].target = Some(cb);
            objects[b].target = Some(ca);
        }
    }
    Some(objects)
}

/// Per-object presence and pose in both scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectAnnotation {
    pub id: u32,
    pub shape: Shape,
    pub source: Option<[f64; 2]>,
    pub target: Option<[f64; 2]>,
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub objects: Vec<ObjectAnnotation>,
}

impl GroundTruth {
    pub fn changed_ids(&self) -> Vec<u32> {
        self.objects.iter().filter(|o| o.changed).map(|o| o.id).collect()
    }

    /// Changed objects that exist in the source scene.
    pub fn changed_in_source(&self) -> Vec<u32> {
        self.objects
            .iter()
            .filter(|o| o.changed && o.source.is_some())
            .map(|o| o.id)
            .collect()
    }

    /// Changed objects that exist in the target scene.
    pub fn changed_in_target(&self) -> Vec<u32> {
        self.objects
            .iter()
            .filter(|o| o.changed && o.target.is_some())
            .map(|o| o.id)
            .collect()
    }

    /// CSV: `id,shape,dim_x,dim_y,height,source_x,source_y,target_x,target_y,changed`
    /// (`dim_y` repeats the radius for cylinders; absent poses are empty).
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("id,shape,dim_x,dim_y,height,source_x,source_y,target_x,target_y,changed\n");
        let pose = |p: Option<[f64; 2]>| match p {
            Some([x, y]) => format!("{x:.6},{y:.6}"),
            None => ",".to_string(),
        };
        for o in &self.objects {
            let (kind, dx, dy) = match o.shape {
                Shape::Box { size, .. } => ("box", size[0], size[1]),
                Shape::Cylinder { radius, .. } => ("cylinder", radius, radius),
            };
            out.push_str(&format!(
                "{},{kind},{dx:.6},{dy:.6},{:.6},{},{},{}\n",
                o.id,
                o.shape.height(),
                pose(o.source),
                pose(o.target),
                u8::from(o.changed)
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ScenePair {
    pub source: LabeledPointCloud,
    pub target: LabeledPointCloud,
    pub ground_truth: GroundTruth,
}

impl ScenePair {
    /// Source points of objects that changed with respect to the target.
    pub fn gt_forward(&self) -> LabeledPointCloud {
        let ids = self.ground_truth.changed_in_source();
        self.source.filter_labels(|l| ids.contains(&l))
    }

    /// Target points of objects that changed with respect to the source.
    pub fn gt_backward(&self) -> LabeledPointCloud {
        let ids = self.ground_truth.changed_in_target();
        self.target.filter_labels(|l| ids.contains(&l))
    }
}

#[derive(Clone, Copy)]
enum Scene {
    Source,
    Target,
}

/// Samples both scenes of `scenario`. Deterministic in `(scenario, seed)`.
pub fn generate_scene_pair(scenario: &SyntheticScenario, seed: u64) -> Result<ScenePair> {
    scenario.validate()?;
    let source = sample_scene(scenario, seed, Scene::Source)?;
    let target = sample_scene(scenario, seed, Scene::Target)?;
    let ground_truth = GroundTruth {
        objects: scenario
            .objects
            .iter()
            .map(|o| ObjectAnnotation {
                id: o.id,
                shape: o.shape,
                source: o.source,
                target: o.target,
                changed: o.is_changed(),
            })
            .collect(),
    };
    Ok(ScenePair {
        source,
        target,
        ground_truth,
    })
}

fn sample_count(density: f64, area: f64) -> usize {
    (density * area).round() as usize
}

fn sample_scene(s: &SyntheticScenario, seed: u64, scene: Scene) -> Result<LabeledPointCloud> {
    let table = &s.table;
    let placed: Vec<(&ObjectSpec, [f64; 2])> = s
        .objects
        .iter()
        .filter_map(|o| {
            match scene {
                Scene::Source => o.source,
                Scene::Target => o.target,
            }
            .map(|c| (o, c))
        })
        .collect();

    let camera = s.viewpoints[match scene {
        Scene::Source => 0,
        Scene::Target => 1,
    }]
    .map(|c| Point3::new(c[0], c[1], c[2]));
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut emit = |p: Point3<f64>, normal: Vector3<f64>, label: u32| {
        if camera.is_none_or(|c| normal.dot(&(c - p)) > 0.0) {
            points.push(p);
            labels.push(label);
        }
    };

    // Floor.
    let fx = table.extent[0] + 2.0 * s.floor_margin;
    let fy = table.extent[1] + 2.0 * s.floor_margin;
    let mut rng = stream(seed, 1);
    for _ in 0..sample_count(s.density, fx * fy) {
        let x = table.center[0] + rng.random_range(-0.5..0.5) * fx;
        let y = table.center[1] + rng.random_range(-0.5..0.5) * fy;
        emit(Point3::new(x, y, 0.0), Vector3::z(), 0);
    }

    // Table top, minus whatever stands on it in this scene.
    let mut rng = stream(seed, 2);
    for _ in 0..sample_count(s.density, table.extent[0] * table.extent[1]) {
        let x = table.center[0] + rng.random_range(-0.5..0.5) * table.extent[0];
        let y = table.center[1] + rng.random_range(-0.5..0.5) * table.extent[1];
        let covered = placed
            .iter()
            .any(|(o, c)| o.shape.footprint_contains(x - c[0], y - c[1]));
        if !covered {
            emit(Point3::new(x, y, table.height), Vector3::z(), 0);
        }
    }

    for (o, c) in &placed {
        let base = Vector3::new(c[0], c[1], table.height);
        for (p, n) in sample_object(&o.shape, s.density, &mut stream(seed, 1000 + o.id as u64)) {
            emit(p + base, n, o.id);
        }
    }

    if s.noise_sigma > 0.0 {
        let tag = match scene {
            Scene::Source => 10,
            Scene::Target => 11,
        };
        let mut rng = stream(seed, tag);
        let normal = Normal::new(0.0, s.noise_sigma)
            .map_err(|e| Error::Validation(format!("noise sigma: {e}")))?;
        let limit = 3.0 * s.noise_sigma;
        let mut draw = || loop {
            let v: f64 = normal.sample(&mut rng);
            if v.abs() <= limit {
                return v;
            }
        };
        for p in &mut points {
            *p += Vector3::new(draw(), draw(), draw());
        }
    }

    Ok(LabeledPointCloud {
        cloud: PointCloud::new(points),
        labels,
    })
}

/// Top and side surface samples with outward normals, in object-local
/// coordinates (base center at origin).
fn sample_object(shape: &Shape, density: f64, rng: &mut ChaCha8Rng) -> Vec<(Point3<f64>, Vector3<f64>)> {
    let mut out = Vec::new();
    match *shape {
        Shape::Box { size: [sx, sy], height: h } => {
            for _ in 0..sample_count(density, sx * sy) {
                let p = Point3::new(rng.random_range(-0.5..0.5) * sx, rng.random_range(-0.5..0.5) * sy, h);
                out.push((p, Vector3::z()));
            }
            // (length, runs along x, face on the positive side)
            let faces = [(sx, true, true), (sx, true, false), (sy, false, true), (sy, false, false)];
            for (len, along_x, positive) in faces {
                let sign = if positive { 0.5 } else { -0.5 };
                for _ in 0..sample_count(density, len * h) {
                    let t = rng.random_range(-0.5..0.5) * len;
                    let z = rng.random_range(0.0..h);
                    out.push(if along_x {
                        (Point3::new(t, sign * sy, z), Vector3::y() * sign.signum())
                    } else {
                        (Point3::new(sign * sx, t, z), Vector3::x() * sign.signum())
                    });
                }
            }
        }
        Shape::Cylinder { radius: r, height: h } => {
            for _ in 0..sample_count(density, std::f64::consts::PI * r * r) {
                let rho = r * rng.random::<f64>().sqrt();
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                out.push((Point3::new(rho * a.cos(), rho * a.sin(), h), Vector3::z()));
            }
            for _ in 0..sample_count(density, std::f64::consts::TAU * r * h) {
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                let z = rng.random_range(0.0..h);
                out.push((Point3::new(r * a.cos(), r * a.sin(), z), Vector3::new(a.cos(), a.sin(), 0.0)));
            }
        }
    }
    out
}
