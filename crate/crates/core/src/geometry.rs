//! Point-cloud data model, synthetic labeled shapes, normalization and
//! text-format I/O.
//!
//! Clouds are `n x 3` coordinate sets inside the unit ball. The synthetic
//! dataset replaces a mesh corpus with eight parametric surfaces sampled
//! deterministically from a seed, which keeps classifier training and attack
//! evaluation runnable in CI.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::real::{real, Real};

/// Minimum point count: a KNN graph with k >= 1 plus meaningful statistics
/// need at least this many points.
pub const MIN_POINTS: usize = 4;

/// Number of synthetic shape classes.
pub const CLASS_COUNT: usize = 8;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point cloud needs at least {MIN_POINTS} points, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("all points identical: unit-ball scale undefined")]
    ZeroScale,
    #[error("unknown shape class {0} (valid: 0..{CLASS_COUNT})")]
    UnknownClass(usize),
    #[error("jitter must be finite and >= 0, got {0}")]
    BadJitter(f64),
    #[error("shape sampling needs n >= 16, got {0}")]
    ShapeTooSmall(usize),
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("dataset clouds must share one point count (saw {0} and {1})")]
    MixedPointCounts(usize, usize),
    #[error("cloud {0} is missing a label")]
    MissingLabel(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> GeometryError {
    GeometryError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// An unordered set of 3D points with an optional class label.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T> {
    points: Vec<[T; 3]>,
    label: Option<usize>,
}

impl<T: Real> PointCloud<T> {
    /// Validates point count and finiteness.
    pub fn new(points: Vec<[T; 3]>, label: Option<usize>) -> Result<Self, GeometryError> {
        if points.len() < MIN_POINTS {
            return Err(GeometryError::TooFewPoints(points.len()));
        }
        for (i, p) in points.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite() && p[2].is_finite()) {
                return Err(GeometryError::NonFinite(i));
            }
        }
        Ok(Self { points, label })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[[T; 3]] {
        &self.points
    }

    #[inline]
    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    /// Replaces the coordinates, keeping the label. The new points must
    /// already satisfy the cloud invariants.
    pub fn with_points(&self, points: Vec<[T; 3]>) -> Result<Self, GeometryError> {
        Self::new(points, self.label)
    }

    /// Largest Euclidean norm over the points.
    pub fn max_norm(&self) -> T {
        self.points
            .iter()
            .fold(T::zero(), |acc, p| acc.max(norm3(*p)))
    }

    /// Coordinate-wise mean, summed in storage order.
    pub fn centroid(&self) -> [T; 3] {
        let mut sum = [T::zero(); 3];
        for p in &self.points {
            sum[0] = sum[0] + p[0];
            sum[1] = sum[1] + p[1];
            sum[2] = sum[2] + p[2];
        }
        let n = real::<T>(self.points.len() as f64);
        [sum[0] / n, sum[1] / n, sum[2] / n]
    }
}

#[inline]
pub(crate) fn norm3<T: Real>(p: [T; 3]) -> T {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

#[inline]
pub(crate) fn sub3<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn dist2<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    let d = sub3(a, b);
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// Train/test split tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// A set of labeled clouds with a shared point count.
#[derive(Debug, Clone)]
pub struct LabeledDataset<T> {
    pub clouds: Vec<PointCloud<T>>,
    pub class_count: usize,
    pub split: Split,
}

impl<T: Real> LabeledDataset<T> {
    pub fn new(
        clouds: Vec<PointCloud<T>>,
        class_count: usize,
        split: Split,
    ) -> Result<Self, GeometryError> {
        let mut n_points = None;
        for (i, c) in clouds.iter().enumerate() {
            let label = c.label().ok_or(GeometryError::MissingLabel(i))?;
            if label >= class_count {
                return Err(GeometryError::BadLabel {
                    label,
                    classes: class_count,
                });
            }
            match n_points {
                None => n_points = Some(c.len()),
                Some(n) if n != c.len() => {
                    return Err(GeometryError::MixedPointCounts(n, c.len()))
                }
                _ => {}
            }
        }
        Ok(Self {
            clouds,
            class_count,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }
}

/// The eight synthetic shape classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    Sphere = 0,
    Cube = 1,
    Cylinder = 2,
    Cone = 3,
    Torus = 4,
    Pyramid = 5,
    Disk = 6,
    Helix = 7,
}

impl ShapeClass {
    pub fn from_index(i: usize) -> Result<Self, GeometryError> {
        Ok(match i {
            0 => ShapeClass::Sphere,
            1 => ShapeClass::Cube,
            2 => ShapeClass::Cylinder,
            3 => ShapeClass::Cone,
            4 => ShapeClass::Torus,
            5 => ShapeClass::Pyramid,
            6 => ShapeClass::Disk,
            7 => ShapeClass::Helix,
            _ => return Err(GeometryError::UnknownClass(i)),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Sphere => "sphere",
            ShapeClass::Cube => "cube",
            ShapeClass::Cylinder => "cylinder",
            ShapeClass::Cone => "cone",
            ShapeClass::Torus => "torus",
            ShapeClass::Pyramid => "pyramid",
            ShapeClass::Disk => "disk",
            ShapeClass::Helix => "helix",
        }
    }
}

/// Standard normal draw via Box-Muller; deterministic given the RNG state.
fn sample_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.random();
        if u1 > 1e-300 {
            let u2: f64 = rng.random();
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

fn min_dist2(pts: &[[f64; 3]], q: [f64; 3]) -> f64 {
    pts.iter()
        .map(|p| {
            let d = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
            d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
        })
        .fold(f64::INFINITY, f64::min)
}

/// One point on the canonical (origin-centered parameters) surface of
/// `class`. Mirrored pairs of these samples give an exactly centered cloud.
fn sample_surface(class: ShapeClass, rng: &mut ChaCha8Rng) -> [f64; 3] {
    use std::f64::consts::{PI, TAU};
    match class {
        ShapeClass::Sphere => loop {
            let v = [
                sample_normal(rng),
                sample_normal(rng),
                sample_normal(rng),
            ];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 1e-6 {
                return [v[0] / n, v[1] / n, v[2] / n];
            }
        },
        ShapeClass::Cube => {
            let face = rng.random_range(0..6u8);
            let u = rng.random_range(-1.0..1.0);
            let v = rng.random_range(-1.0..1.0);
            match face {
                0 => [1.0, u, v],
                1 => [-1.0, u, v],
                2 => [u, 1.0, v],
                3 => [u, -1.0, v],
                4 => [u, v, 1.0],
                _ => [u, v, -1.0],
            }
        }
        ShapeClass::Cylinder => {
            let r = 0.6;
            let h = 0.85;
            // Lateral area 2*pi*r*2h vs two caps 2*pi*r^2.
            let p_lateral = (2.0 * h) / (2.0 * h + r);
            if rng.random::<f64>() < p_lateral {
                let phi = rng.random_range(0.0..TAU);
                let z = rng.random_range(-h..h);
                [r * phi.cos(), r * phi.sin(), z]
            } else {
                let z = if rng.random::<f64>() < 0.5 { h } else { -h };
                let rr = r * rng.random::<f64>().sqrt();
                let phi = rng.random_range(0.0..TAU);
                [rr * phi.cos(), rr * phi.sin(), z]
            }
        }
        ShapeClass::Cone => {
            let r = 0.8f64;
            let apex_z = 0.9f64;
            let base_z = -0.45f64;
            let height = apex_z - base_z;
            let slant = (r * r + height * height).sqrt();
            // Lateral area pi*r*slant vs base pi*r^2.
            if rng.random::<f64>() < slant / (slant + r) {
                let t = rng.random::<f64>().sqrt(); // radius grows linearly from apex
                let phi = rng.random_range(0.0..TAU);
                let rr = r * t;
                [rr * phi.cos(), rr * phi.sin(), apex_z - height * t]
            } else {
                let rr = r * rng.random::<f64>().sqrt();
                let phi = rng.random_range(0.0..TAU);
                [rr * phi.cos(), rr * phi.sin(), base_z]
            }
        }
        ShapeClass::Torus => {
            let big = 0.65;
            let small = 0.25;
            loop {
                let theta = rng.random_range(0.0..TAU);
                let phi = rng.random_range(0.0..TAU);
                // Rejection keeps sampling uniform in surface area.
                if rng.random::<f64>() * (big + small) <= big + small * phi.cos() {
                    let w = big + small * phi.cos();
                    return [w * theta.cos(), w * theta.sin(), small * phi.sin()];
                }
            }
        }
        ShapeClass::Pyramid => {
            let half = 0.7f64;
            let apex = [0.0f64, 0.0, 0.9];
            let base_z = -0.45f64;
            let corners = [
                [half, half, base_z],
                [-half, half, base_z],
                [-half, -half, base_z],
                [half, -half, base_z],
            ];
            let base_area = (2.0 * half) * (2.0 * half);
            let slant_h = ((apex[2] - base_z) * (apex[2] - base_z) + half * half).sqrt();
            let tri_area = 0.5 * (2.0 * half) * slant_h;
            let total = base_area + 4.0 * tri_area;
            let pick = rng.random::<f64>() * total;
            if pick < base_area {
                let u = rng.random_range(-half..half);
                let v = rng.random_range(-half..half);
                [u, v, base_z]
            } else {
                let face = ((pick - base_area) / tri_area) as usize;
                let face = face.min(3);
                let a = corners[face];
                let b = corners[(face + 1) % 4];
                // Uniform barycentric sample of the triangle (a, b, apex).
                let mut u = rng.random::<f64>();
                let mut v = rng.random::<f64>();
                if u + v > 1.0 {
                    u = 1.0 - u;
                    v = 1.0 - v;
                }
                let w = 1.0 - u - v;
                [
                    w * a[0] + u * b[0] + v * apex[0],
                    w * a[1] + u * b[1] + v * apex[1],
                    w * a[2] + u * b[2] + v * apex[2],
                ]
            }
        }
        ShapeClass::Disk => {
            let rr = rng.random::<f64>().sqrt();
            let phi = rng.random_range(0.0..TAU);
            [rr * phi.cos(), rr * phi.sin(), 0.0]
        }
        ShapeClass::Helix => {
            let turns = 2.0;
            let rho = 0.7;
            let t = rng.random_range(-1.0..1.0);
            let phi = turns * PI * t;
            [rho * phi.cos(), rho * phi.sin(), 0.85 * t]
        }
    }
}

/// Deterministic surface sample of one shape class, jittered and scaled into
/// the unit ball.
///
/// Sampling is best-candidate (Mitchell): each added point is the one of
/// several surface draws farthest from the points placed so far, which
/// evens out the density the way resampled scan data is even. Points are
/// emitted as interleaved antipodal pairs, which makes the raw sample
/// exactly centered (sequential centroid accumulation cancels pair by
/// pair), so with `jitter = 0` the final scale step leaves surface
/// structure such as unit sphere norms or cube faces intact.
pub fn generate_shape<T: Real>(
    class_id: usize,
    n: usize,
    seed: u64,
    jitter: f64,
) -> Result<PointCloud<T>, GeometryError> {
    let class = ShapeClass::from_index(class_id)?;
    if n < 16 {
        return Err(GeometryError::ShapeTooSmall(n));
    }
    if !jitter.is_finite() || jitter < 0.0 {
        return Err(GeometryError::BadJitter(jitter));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed ^ (class_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
    );
    const CANDIDATES: usize = 8;
    let mut pts: Vec<[f64; 3]> = Vec::with_capacity(n + 1);
    while pts.len() < n {
        let mut best = sample_surface(class, &mut rng);
        if !pts.is_empty() {
            let mut best_dist = min_dist2(&pts, best);
            for _ in 1..CANDIDATES {
                let cand = sample_surface(class, &mut rng);
                let d = min_dist2(&pts, cand);
                if d > best_dist {
                    best = cand;
                    best_dist = d;
                }
            }
        }
        pts.push(best);
        pts.push([-best[0], -best[1], -best[2]]);
    }
    pts.truncate(n);
    if jitter > 0.0 {
        for p in &mut pts {
            for c in p.iter_mut() {
                *c += jitter * sample_normal(&mut rng);
            }
        }
    }
    let cloud = PointCloud::new(
        pts.iter()
            .map(|p| [real::<T>(p[0]), real::<T>(p[1]), real::<T>(p[2])])
            .collect(),
        Some(class_id),
    )?;
    normalize_unit_ball(&cloud)
}

/// Centers the cloud on its centroid and scales the farthest point to norm 1.
pub fn normalize_unit_ball<T: Real>(cloud: &PointCloud<T>) -> Result<PointCloud<T>, GeometryError> {
    let c = cloud.centroid();
    let centered: Vec<[T; 3]> = cloud.points().iter().map(|p| sub3(*p, c)).collect();
    let max_norm = centered
        .iter()
        .fold(T::zero(), |acc, p| acc.max(norm3(*p)));
    if max_norm < real(1e-300) {
        return Err(GeometryError::ZeroScale);
    }
    let s = T::one() / max_norm;
    let scaled = centered
        .iter()
        .map(|p| [p[0] * s, p[1] * s, p[2] * s])
        .collect();
    cloud.with_points(scaled)
}

/// Default desk-scale dataset parameters.
#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub points_per_cloud: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            points_per_cloud: 128,
            train_per_class: 200,
            test_per_class: 50,
            jitter: 0.02,
            seed: 7,
        }
    }
}

/// Generates one split. Train and test draw from disjoint seed ranges, so
/// the splits never share a cloud.
pub fn generate_dataset<T: Real>(
    cfg: &DatasetConfig,
    split: Split,
) -> Result<LabeledDataset<T>, GeometryError> {
    let (per_class, seed_base) = match split {
        Split::Train => (cfg.train_per_class, cfg.seed),
        Split::Test => (cfg.test_per_class, cfg.seed + 5_000_000),
    };
    let mut clouds = Vec::with_capacity(per_class * CLASS_COUNT);
    for class_id in 0..CLASS_COUNT {
        for i in 0..per_class {
            let seed = seed_base + (class_id as u64) * 100_000 + i as u64;
            clouds.push(generate_shape(
                class_id,
                cfg.points_per_cloud,
                seed,
                cfg.jitter,
            )?);
        }
    }
    LabeledDataset::new(clouds, CLASS_COUNT, split)
}

/// Writes the text cloud format: `"<n> 3"` header then one `x y z` row per
/// point at 17 significant digits (lossless for f64).
pub fn save_cloud<T: Real>(cloud: &PointCloud<T>, path: &Path) -> Result<(), GeometryError> {
    let mut text = String::with_capacity(cloud.len() * 72 + 16);
    let _ = writeln!(text, "{} 3", cloud.len());
    for p in cloud.points() {
        let _ = writeln!(text, "{:.16e} {:.16e} {:.16e}", p[0], p[1], p[2]);
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Reads the text cloud format; the loaded cloud carries no label.
pub fn load_cloud<T: Real>(path: &Path) -> Result<PointCloud<T>, GeometryError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| GeometryError::Parse {
            line: 1,
            message: "empty file".into(),
        })?
        .map_err(|e| io_err(path, e))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 2 || head[1] != "3" {
        return Err(GeometryError::Parse {
            line: 1,
            message: format!("malformed header {header:?}, expected \"<n> 3\""),
        });
    }
    let n: usize = head[0].parse().map_err(|_| GeometryError::Parse {
        line: 1,
        message: format!("bad point count {:?}", head[0]),
    })?;
    let mut pts = Vec::with_capacity(n);
    for row in 0..n {
        let line_no = row + 2;
        let line = lines
            .next()
            .ok_or_else(|| GeometryError::Parse {
                line: line_no,
                message: format!("expected {n} point rows, file ended early"),
            })?
            .map_err(|e| io_err(path, e))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(GeometryError::Parse {
                line: line_no,
                message: format!("expected 3 columns, got {}", toks.len()),
            });
        }
        let mut p = [T::zero(); 3];
        for (c, tok) in toks.iter().enumerate() {
            let v: f64 = tok.parse().map_err(|_| GeometryError::Parse {
                line: line_no,
                message: format!("bad float token {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(GeometryError::Parse {
                    line: line_no,
                    message: format!("non-finite token {tok:?}"),
                });
            }
            p[c] = real(v);
        }
        pts.push(p);
    }
    PointCloud::new(pts, None)
}

/// One manifest row: cloud file path relative to the manifest, plus label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub relative_path: String,
    pub label: usize,
}

/// Writes `"<relative-path>,<label>"` lines, UTF-8, LF endings.
pub fn save_manifest(entries: &[ManifestEntry], path: &Path) -> Result<(), GeometryError> {
    let mut text = String::new();
    for e in entries {
        let _ = writeln!(text, "{},{}", e.relative_path, e.label);
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>, GeometryError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (rel, label) = line.rsplit_once(',').ok_or_else(|| GeometryError::Parse {
            line: i + 1,
            message: "expected \"<relative-path>,<label>\"".into(),
        })?;
        let label: usize = label.trim().parse().map_err(|_| GeometryError::Parse {
            line: i + 1,
            message: format!("bad label {label:?}"),
        })?;
        entries.push(ManifestEntry {
            relative_path: rel.to_string(),
            label,
        });
    }
    Ok(entries)
}

/// Saves a dataset as one cloud file per entry plus a manifest named
/// `<split>_manifest.txt` in `dir`.
pub fn save_dataset<T: Real>(ds: &LabeledDataset<T>, dir: &Path) -> Result<PathBuf, GeometryError> {
    let split_dir = dir.join(ds.split.name());
    std::fs::create_dir_all(&split_dir).map_err(|e| io_err(&split_dir, e))?;
    let mut entries = Vec::with_capacity(ds.len());
    for (i, cloud) in ds.clouds.iter().enumerate() {
        let label = cloud.label().ok_or(GeometryError::MissingLabel(i))?;
        let name = format!("{}/{:05}.xyz", ds.split.name(), i);
        save_cloud(cloud, &dir.join(&name))?;
        entries.push(ManifestEntry {
            relative_path: name,
            label,
        });
    }
    let manifest = dir.join(format!("{}_manifest.txt", ds.split.name()));
    save_manifest(&entries, &manifest)?;
    Ok(manifest)
}

/// Loads a dataset from a manifest; paths resolve relative to the manifest.
pub fn load_dataset<T: Real>(
    manifest: &Path,
    class_count: usize,
    split: Split,
) -> Result<LabeledDataset<T>, GeometryError> {
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let entries = load_manifest(manifest)?;
    let mut clouds = Vec::with_capacity(entries.len());
    for e in &entries {
        let cloud = load_cloud::<T>(&base.join(&e.relative_path))?;
        clouds.push(cloud.with_label(Some(e.label)));
    }
    LabeledDataset::new(clouds, class_count, split)
}
