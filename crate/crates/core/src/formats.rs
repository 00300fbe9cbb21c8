//! Text formats: ground-truth camera files (Middlebury `.par`, Strecha
//! `.camera`), estimated pose files with a manifest, intrinsics, feature
//! directories and PLY export.

use crate::geom::{orthonormalize, CameraIntrinsics, CameraPose};
use crate::matching::{load_features, write_features, FeatureSet, MatchingError};
use crate::pipeline::Reconstruction;
use crate::synth::SyntheticScene;
use nalgebra::{Matrix3, Vector3};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

/// Loose orthonormality bound for rotations read from dataset files, which
/// are often printed with few digits.
const DATASET_ROTATION_TOLERANCE: f64 = 1e-4;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const INTRINSICS_FILE: &str = "intrinsics.txt";
pub const PAR_FILE: &str = "cameras.par";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Features { path: PathBuf, source: MatchingError },
}

impl FormatError {
    fn parse(path: &Path, message: impl Into<String>) -> Self {
        Self::Parse { path: path.to_path_buf(), message: message.into() }
    }

    pub fn is_parse(&self) -> bool {
        matches!(self, Self::Parse { .. } | Self::Features { source: MatchingError::Parse(_) | MatchingError::DimensionMismatch { .. }, .. })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.to_path_buf(), source }
}

fn read(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write(path: &Path, text: &str) -> Result<(), FormatError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty())
}

fn parse_values<T: FromStr>(path: &Path, line_no: usize, tokens: &[&str]) -> Result<Vec<T>, FormatError> {
    tokens
        .iter()
        .map(|t| t.parse::<T>().map_err(|_| FormatError::parse(path, format!("line {line_no}: bad number `{t}`"))))
        .collect()
}

fn parse_floats(path: &Path, line_no: usize, tokens: &[&str], expected: usize) -> Result<Vec<f64>, FormatError> {
    if tokens.len() != expected {
        return Err(FormatError::parse(path, format!("line {line_no}: expected {expected} values, found {}", tokens.len())));
    }
    let values: Vec<f64> = parse_values(path, line_no, tokens)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(FormatError::parse(path, format!("line {line_no}: non-finite value")));
    }
    Ok(values)
}

fn dataset_rotation(path: &Path, r: Matrix3<f64>) -> Result<Matrix3<f64>, FormatError> {
    let orthonormality = (r.transpose() * r - Matrix3::identity()).norm();
    let det = r.determinant();
    if orthonormality > DATASET_ROTATION_TOLERANCE || (det - 1.0).abs() > DATASET_ROTATION_TOLERANCE {
        return Err(FormatError::parse(path, format!("not a rotation (orthonormality {orthonormality:e}, det {det})")));
    }
    Ok(orthonormalize(&r))
}

fn calibration(path: &Path, k: Matrix3<f64>) -> Result<Matrix3<f64>, FormatError> {
    CameraIntrinsics::from_matrix(&k).map_err(|e| FormatError::parse(path, format!("invalid calibration matrix: {e}")))?;
    Ok(k)
}

fn row_major(values: &[f64]) -> Matrix3<f64> {
    Matrix3::from_row_slice(values)
}

fn rows_text(m: &Matrix3<f64>) -> String {
    (0..3).map(|i| format!("{} {} {}\n", m[(i, 0)], m[(i, 1)], m[(i, 2)])).collect()
}

fn flat_text(m: &Matrix3<f64>) -> String {
    (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| m[(i, j)].to_string()).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundTruthFormat {
    Middlebury,
    Strecha,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthCamera {
    pub name: String,
    pub k: Matrix3<f64>,
    pub pose: CameraPose,
    /// Distortion values exactly as stored in the source file.
    pub distortion: Vec<f64>,
    pub resolution: Option<(u32, u32)>,
    pub format: GroundTruthFormat,
}

/// Middlebury `.par`: a count line, then `name k(9) r(9) t(3)` per camera
/// with projection K[R|t].
pub fn load_middlebury_par(path: &Path) -> Result<Vec<GroundTruthCamera>, FormatError> {
    let text = read(path)?;
    let mut lines = content_lines(&text);
    let (line_no, header) = lines.next().ok_or_else(|| FormatError::parse(path, "empty file"))?;
    let count: usize = header
        .parse()
        .map_err(|_| FormatError::parse(path, format!("line {line_no}: expected camera count")))?;
    let mut cameras = Vec::with_capacity(count);
    for (line_no, line) in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let v = parse_floats(path, line_no, tokens.get(1..).unwrap_or_default(), 21)?;
        let k = calibration(path, row_major(&v[0..9]))?;
        let r = dataset_rotation(path, row_major(&v[9..18]))?;
        let t = Vector3::new(v[18], v[19], v[20]);
        cameras.push(GroundTruthCamera {
            name: tokens[0].to_string(),
            k,
            pose: CameraPose::from_rotation_translation(r, t),
            distortion: Vec::new(),
            resolution: None,
            format: GroundTruthFormat::Middlebury,
        });
    }
    if cameras.len() != count {
        return Err(FormatError::parse(path, format!("header announces {count} cameras, found {}", cameras.len())));
    }
    Ok(cameras)
}

pub fn format_middlebury_par(cameras: &[GroundTruthCamera]) -> String {
    let mut out = format!("{}\n", cameras.len());
    for c in cameras {
        let t = c.pose.translation();
        let _ = writeln!(out, "{} {} {} {} {} {}", c.name, flat_text(&c.k), flat_text(&c.pose.rotation), t.x, t.y, t.z);
    }
    out
}

pub fn write_middlebury_par(path: &Path, cameras: &[GroundTruthCamera]) -> Result<(), FormatError> {
    write(path, &format_middlebury_par(cameras))
}

/// Strecha `.camera`: K (3 lines), distortion (3 values), camera-to-world
/// rotation (3 lines), center, then `width height`.
pub fn load_strecha_camera(path: &Path) -> Result<GroundTruthCamera, FormatError> {
    let text = read(path)?;
    let lines: Vec<(usize, &str)> = content_lines(&text).collect();
    if lines.len() != 9 {
        return Err(FormatError::parse(path, format!("expected 9 non-empty lines, found {}", lines.len())));
    }
    let row = |i: usize, n: usize| {
        let (line_no, line) = lines[i];
        parse_floats(path, line_no, &line.split_whitespace().collect::<Vec<_>>(), n)
    };
    let mut k = Vec::new();
    let mut r = Vec::new();
    for i in 0..3 {
        k.extend(row(i, 3)?);
        r.extend(row(4 + i, 3)?);
    }
    let distortion = row(3, 3)?;
    let c = row(7, 3)?;
    let (line_no, res_line) = lines[8];
    let res_tokens: Vec<&str> = res_line.split_whitespace().collect();
    if res_tokens.len() != 2 {
        return Err(FormatError::parse(path, format!("line {line_no}: resolution needs `width height`")));
    }
    let res: Vec<u32> = parse_values(path, line_no, &res_tokens)?;
    if res.contains(&0) {
        return Err(FormatError::parse(path, format!("line {line_no}: zero resolution")));
    }
    let camera_to_world = dataset_rotation(path, row_major(&r))?;
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.trim_end_matches(".camera").to_string())
        .unwrap_or_default();
    Ok(GroundTruthCamera {
        name,
        k: calibration(path, row_major(&k))?,
        pose: CameraPose::new_unchecked(camera_to_world.transpose(), Vector3::new(c[0], c[1], c[2])),
        distortion,
        resolution: Some((res[0], res[1])),
        format: GroundTruthFormat::Strecha,
    })
}

pub fn format_strecha_camera(camera: &GroundTruthCamera) -> String {
    let mut d = camera.distortion.clone();
    d.resize(3, 0.0);
    let (w, h) = camera.resolution.unwrap_or((0, 0));
    let c = camera.pose.center;
    format!(
        "{}{} {} {}\n{}{} {} {}\n{} {}\n",
        rows_text(&camera.k),
        d[0],
        d[1],
        d[2],
        rows_text(&camera.pose.rotation.transpose()),
        c.x,
        c.y,
        c.z,
        w,
        h
    )
}

pub fn write_strecha_camera(path: &Path, camera: &GroundTruthCamera) -> Result<(), FormatError> {
    write(path, &format_strecha_camera(camera))
}

/// Ground truth from a directory: the first `.par` file, or every `.camera`
/// file sorted by name.
pub fn load_ground_truth(dir: &Path, format: GroundTruthFormat) -> Result<Vec<GroundTruthCamera>, FormatError> {
    match format {
        GroundTruthFormat::Middlebury => {
            let par = files_with_suffix(dir, &[".par"])?
                .into_iter()
                .next()
                .ok_or_else(|| FormatError::parse(dir, "no .par file"))?;
            load_middlebury_par(&par)
        }
        GroundTruthFormat::Strecha => files_with_suffix(dir, &[".camera"])?.iter().map(|p| load_strecha_camera(p)).collect(),
    }
}

fn files_with_suffix(dir: &Path, suffixes: &[&str]) -> Result<Vec<PathBuf>, FormatError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if path.is_file() && suffixes.iter().any(|s| name.ends_with(s)) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Keypoint files (`.key` or `.key.gz`) sorted by name; image ids follow that order.
pub fn feature_files(dir: &Path) -> Result<Vec<PathBuf>, FormatError> {
    files_with_suffix(dir, &[".key", ".key.gz"])
}

/// Image name of a feature or camera file: the file name up to its first dot.
pub fn image_name(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.split('.').next().unwrap_or(name).to_string()
}

pub fn load_feature_dir(dir: &Path, intr: &CameraIntrinsics) -> Result<(Vec<String>, Vec<FeatureSet>), FormatError> {
    let files = feature_files(dir)?;
    if files.is_empty() {
        return Err(FormatError::parse(dir, "no .key or .key.gz files"));
    }
    let mut names = Vec::new();
    let mut sets = Vec::new();
    for (id, path) in files.iter().enumerate() {
        names.push(image_name(path));
        sets.push(load_features(path, id, intr).map_err(|source| FormatError::Features { path: path.clone(), source })?);
    }
    Ok((names, sets))
}

/// Intrinsics file: K as three rows, optionally followed by `k1 k2 p1 p2`.
pub fn load_intrinsics(path: &Path) -> Result<CameraIntrinsics, FormatError> {
    let text = read(path)?;
    let lines: Vec<(usize, &str)> = content_lines(&text).collect();
    if lines.len() != 3 && lines.len() != 4 {
        return Err(FormatError::parse(path, format!("expected 3 or 4 non-empty lines, found {}", lines.len())));
    }
    let row = |i: usize, n: usize| {
        let (line_no, line) = lines[i];
        parse_floats(path, line_no, &line.split_whitespace().collect::<Vec<_>>(), n)
    };
    let mut k = Vec::new();
    for i in 0..3 {
        k.extend(row(i, 3)?);
    }
    let intr = CameraIntrinsics::from_matrix(&row_major(&k)).map_err(|e| FormatError::parse(path, e.to_string()))?;
    if lines.len() == 4 {
        let d = row(3, 4)?;
        return Ok(intr.with_distortion(d[0], d[1], d[2], d[3]));
    }
    Ok(intr)
}

pub fn format_intrinsics(intr: &CameraIntrinsics) -> String {
    let mut out = rows_text(&intr.matrix());
    if intr.has_distortion() {
        let _ = writeln!(out, "{} {} {} {}", intr.k1, intr.k2, intr.p1, intr.p2);
    }
    out
}

pub fn write_intrinsics(path: &Path, intr: &CameraIntrinsics) -> Result<(), FormatError> {
    write(path, &format_intrinsics(intr))
}

/// Pose file: the three rows of R, then the center T.
pub fn format_pose(pose: &CameraPose) -> String {
    let c = pose.center;
    format!("{}{} {} {}\n", rows_text(&pose.rotation), c.x, c.y, c.z)
}

pub fn parse_pose(path: &Path, text: &str) -> Result<CameraPose, FormatError> {
    let lines: Vec<(usize, &str)> = content_lines(text).collect();
    if lines.len() != 4 {
        return Err(FormatError::parse(path, format!("expected 4 non-empty lines, found {}", lines.len())));
    }
    let mut v = Vec::new();
    for (line_no, line) in &lines {
        v.extend(parse_floats(path, *line_no, &line.split_whitespace().collect::<Vec<_>>(), 3)?);
    }
    let r = row_major(&v[0..9]);
    dataset_rotation(path, r)?;
    Ok(CameraPose::new_unchecked(r, Vector3::new(v[9], v[10], v[11])))
}

pub fn pose_file_name(name: &str) -> String {
    format!("{name}.pose")
}

/// Writes one pose file per registered image plus a manifest of
/// `image_id name file` lines in registration order.
pub fn write_estimates(dir: &Path, poses: &[(usize, CameraPose)], names: &[String]) -> Result<(), FormatError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = String::new();
    for (id, pose) in poses {
        let name = names.get(*id).cloned().unwrap_or_else(|| format!("image_{id}"));
        let file = pose_file_name(&name);
        write(&dir.join(&file), &format_pose(pose))?;
        let _ = writeln!(manifest, "{id} {name} {file}");
    }
    write(&dir.join(MANIFEST_FILE), &manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedPose {
    pub image_id: usize,
    pub name: String,
    pub pose: CameraPose,
}

pub fn read_estimates(dir: &Path) -> Result<Vec<EstimatedPose>, FormatError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = read(&manifest_path)?;
    content_lines(&text)
        .map(|(line_no, line)| {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != 3 {
                return Err(FormatError::parse(&manifest_path, format!("line {line_no}: expected `image_id name file`")));
            }
            let image_id = parse_values::<usize>(&manifest_path, line_no, &tokens[..1])?[0];
            let path = dir.join(tokens[2]);
            let pose = parse_pose(&path, &read(&path)?)?;
            Ok(EstimatedPose { image_id, name: tokens[1].to_string(), pose })
        })
        .collect()
}

pub const POINT_COLOR: [u8; 3] = [160, 160, 160];
pub const CAMERA_COLOR: [u8; 3] = [255, 0, 0];

/// ASCII PLY: model points first, then camera centers in their own color.
pub fn format_ply(rec: &Reconstruction) -> String {
    let cameras = rec.registered_poses();
    let mut out = format!(
        "ply\nformat ascii 1.0\ncomment model points then camera centers\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        rec.points.len() + cameras.len()
    );
    let mut vertex = |p: &Vector3<f64>, c: [u8; 3]| {
        let _ = writeln!(out, "{} {} {} {} {} {}", p.x, p.y, p.z, c[0], c[1], c[2]);
    };
    for p in &rec.points {
        vertex(&p.position.coords, POINT_COLOR);
    }
    for (_, pose) in &cameras {
        vertex(&pose.center, CAMERA_COLOR);
    }
    out
}

pub fn export_ply(rec: &Reconstruction, path: &Path) -> Result<(), FormatError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(format_ply(rec).as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Paths of a dataset written by [`write_dataset`].
#[derive(Debug, Clone)]
pub struct DatasetLayout {
    pub features: PathBuf,
    pub intrinsics: PathBuf,
    pub ground_truth: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: &Path) -> Self {
        Self {
            features: root.join("features"),
            intrinsics: root.join(INTRINSICS_FILE),
            ground_truth: root.join("gt"),
        }
    }
}

pub fn synthetic_name(image_id: usize) -> String {
    format!("img_{image_id:04}")
}

/// Writes feature files, intrinsics and ground truth in both camera formats.
pub fn write_dataset(root: &Path, scene: &SyntheticScene) -> Result<DatasetLayout, FormatError> {
    let layout = DatasetLayout::new(root);
    fs::create_dir_all(&layout.features).map_err(io_err(&layout.features))?;
    fs::create_dir_all(&layout.ground_truth).map_err(io_err(&layout.ground_truth))?;
    write_intrinsics(&layout.intrinsics, &scene.intrinsics)?;
    let (w, h) = (2.0 * scene.intrinsics.cx, 2.0 * scene.intrinsics.cy);
    let mut cameras = Vec::new();
    for (fs_, pose) in scene.features.iter().zip(&scene.gt_poses) {
        let name = synthetic_name(fs_.image_id);
        let path = layout.features.join(format!("{name}.key"));
        write_features(&path, fs_).map_err(|source| FormatError::Features { path: path.clone(), source })?;
        let camera = GroundTruthCamera {
            name: name.clone(),
            k: scene.intrinsics.matrix(),
            pose: *pose,
            distortion: vec![0.0; 3],
            resolution: Some((w as u32, h as u32)),
            format: GroundTruthFormat::Strecha,
        };
        write_strecha_camera(&layout.ground_truth.join(format!("{name}.camera")), &camera)?;
        cameras.push(camera);
    }
    write_middlebury_par(&layout.ground_truth.join(PAR_FILE), &cameras)?;
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::exp_so3;
    use crate::synth::generate_ring;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    fn random_camera(rng: &mut ChaCha8Rng, i: usize) -> GroundTruthCamera {
        let w = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let c = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let k = Matrix3::new(
            rng.random_range(500.0..3000.0), 0.0, rng.random_range(300.0..1500.0),
            0.0, rng.random_range(500.0..3000.0), rng.random_range(200.0..1000.0),
            0.0, 0.0, 1.0,
        );
        GroundTruthCamera {
            name: format!("view{i:03}"),
            k,
            pose: CameraPose::new_unchecked(exp_so3(&w), c),
            distortion: vec![rng.random_range(-0.1..0.1), 0.0, rng.random_range(-0.01..0.01)],
            resolution: Some((3072, 2048)),
            format: GroundTruthFormat::Strecha,
        }
    }

    fn close(a: &CameraPose, b: &CameraPose, tol: f64) -> bool {
        (a.rotation - b.rotation).amax() < tol && (a.center - b.center).amax() < tol
    }

    #[test]
    fn middlebury_examples() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.par");
        fs::write(&path, "2\nidentity 1 0 0 0 1 0 0 0 1 1 0 0 0 1 0 0 0 1 0 0 0\nback 1 0 0 0 1 0 0 0 1 1 0 0 0 1 0 0 0 1 0 0 -5\n").unwrap();
        let cams = load_middlebury_par(&path).unwrap();
        assert_eq!(cams[0].pose, CameraPose::identity());
        assert_eq!(cams[1].pose.center, Vector3::new(0.0, 0.0, 5.0));
    }

    #[test]
    fn middlebury_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cams: Vec<_> = (0..8)
            .map(|i| GroundTruthCamera { distortion: Vec::new(), resolution: None, format: GroundTruthFormat::Middlebury, ..random_camera(&mut rng, i) })
            .collect();
        let dir = tempdir().unwrap();
        let path = dir.path().join("cams.par");
        write_middlebury_par(&path, &cams).unwrap();
        let loaded = load_middlebury_par(&path).unwrap();
        for (a, b) in cams.iter().zip(&loaded) {
            assert_eq!(a.name, b.name);
            assert!((a.k - b.k).amax() < 1e-9);
            assert!(close(&a.pose, &b.pose, 1e-9));
        }
    }

    #[test]
    fn strecha_examples_and_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("0000.png.camera");
        fs::write(&path, "1 0 0\n0 1 0\n0 0 1\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 0 0\n640 480\n").unwrap();
        let cam = load_strecha_camera(&path).unwrap();
        assert_eq!(cam.pose, CameraPose::identity());
        assert_eq!(cam.resolution, Some((640, 480)));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let original = random_camera(&mut rng, 0);
        let path = dir.path().join("view000.camera");
        write_strecha_camera(&path, &original).unwrap();
        let loaded = load_strecha_camera(&path).unwrap();
        assert!(close(&original.pose, &loaded.pose, 1e-9));
        assert_eq!(original.distortion, loaded.distortion);
        assert_eq!(loaded.name, "view000");
    }

    #[test]
    fn malformed_files_are_parse_errors() {
        let dir = tempdir().unwrap();
        let cases = [
            ("bad_res.camera", "1 0 0\n0 1 0\n0 0 1\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 0 0\n640\n"),
            ("words.camera", "1 0 0\n0 1 0\n0 0 1\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 0 zero\n640 480\n"),
            ("short.camera", "1 0 0\n0 1 0\n0 0 1\n"),
            ("skewed.camera", "1 0 0\n0 1 0\n0 0 1\n0 0 0\n1 1 0\n0 1 0\n0 0 1\n0 0 0\n640 480\n"),
        ];
        for (name, text) in cases {
            let path = dir.path().join(name);
            fs::write(&path, text).unwrap();
            assert!(load_strecha_camera(&path).unwrap_err().is_parse(), "{name}");
        }
        let pars = [
            "3\nonly 1 0 0 0 1 0 0 0 1 1 0 0 0 1 0 0 0 1 0 0 0\n",
            "1\nshort 1 0 0 0 1 0 0 0 1 1 0 0\n",
            "x\n",
            "",
            "1\nnan 1 0 0 0 1 0 0 0 1 1 0 0 0 1 0 0 0 1 0 0 NaN\n",
        ];
        for (i, text) in pars.iter().enumerate() {
            let path = dir.path().join(format!("bad{i}.par"));
            fs::write(&path, text).unwrap();
            assert!(load_middlebury_par(&path).unwrap_err().is_parse(), "case {i}");
        }
    }

    #[test]
    fn pose_files_round_trip_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let poses: Vec<_> = (0..5).map(|i| (i * 2, random_camera(&mut rng, i).pose)).collect();
        let names: Vec<String> = (0..10).map(synthetic_name).collect();
        let dir = tempdir().unwrap();
        write_estimates(dir.path(), &poses, &names).unwrap();
        let loaded = read_estimates(dir.path()).unwrap();
        assert_eq!(loaded.len(), 5);
        for ((id, pose), est) in poses.iter().zip(&loaded) {
            assert_eq!(*id, est.image_id);
            assert_eq!(*pose, est.pose);
        }
    }

    #[test]
    fn intrinsics_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join(INTRINSICS_FILE);
        let intr = CameraIntrinsics::new(700.0, 710.5, 320.25, 240.0).unwrap().with_distortion(-0.1, 0.01, 1e-4, -2e-4);
        write_intrinsics(&path, &intr).unwrap();
        assert_eq!(load_intrinsics(&path).unwrap(), intr);
    }

    #[test]
    fn dataset_export_loads_back() {
        let scene = generate_ring(3, 7.5, 40, 0.0, 0.1, 4);
        let dir = tempdir().unwrap();
        let layout = write_dataset(dir.path(), &scene).unwrap();
        let intr = load_intrinsics(&layout.intrinsics).unwrap();
        let (names, sets) = load_feature_dir(&layout.features, &intr).unwrap();
        assert_eq!(names, vec!["img_0000", "img_0001", "img_0002"]);
        assert_eq!(sets, scene.features);
        for format in [GroundTruthFormat::Middlebury, GroundTruthFormat::Strecha] {
            let gt = load_ground_truth(&layout.ground_truth, format).unwrap();
            assert_eq!(gt.len(), 3);
            for (cam, pose) in gt.iter().zip(&scene.gt_poses) {
                assert!(close(&cam.pose, pose, 1e-9));
            }
        }
    }
}
