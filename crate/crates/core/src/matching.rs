//! Feature sets, the keypoint file format, and the three matching regimes:
//! ratio-test 2D–2D matching, 2D–3D matching against model points, and
//! geometry-guided matching against posed images.

use crate::geom::{undistort_normalize, CameraIntrinsics, CameraPose, GeomError, NormalizedPoint, PixelPoint};
use crate::p3p::Correspondence2D3D;
use crate::triangulate::{position_compatible, triangulate_two_view, visually_compatible, ModelPoint, Observation};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const DESCRIPTOR_LEN: usize = 128;

/// Default nearest-neighbour ratio threshold.
pub const DEFAULT_RATIO: f64 = 1.25;

#[derive(Debug, Error)]
pub enum MatchingError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("descriptor length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{keypoints} keypoints but {descriptors} descriptors")]
    LengthMismatch { keypoints: usize, descriptors: usize },
    #[error("keypoint {index}: {source}")]
    Normalization { index: usize, source: GeomError },
}

/// 128-dimensional SIFT-style descriptor with byte components.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Descriptor(pub [u8; DESCRIPTOR_LEN]);

impl fmt::Debug for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Descriptor({:?}..)", &self.0[..8])
    }
}

impl Descriptor {
    pub fn zeros() -> Self {
        Descriptor([0; DESCRIPTOR_LEN])
    }

    /// Exact squared Euclidean distance.
    pub fn distance_squared(&self, other: &Descriptor) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(&a, &b)| {
                let d = a as i32 - b as i32;
                (d * d) as u32
            })
            .sum()
    }

    pub fn distance(&self, other: &Descriptor) -> f64 {
        (self.distance_squared(other) as f64).sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.distance(&Descriptor::zeros())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub pixel: PixelPoint,
    pub normalized: NormalizedPoint,
    pub scale: f64,
    pub orientation: f64,
}

/// Keypoints and descriptors of one image. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub image_id: usize,
    keypoints: Vec<Keypoint>,
    descriptors: Vec<Descriptor>,
}

impl FeatureSet {
    pub fn new(
        image_id: usize,
        keypoints: Vec<Keypoint>,
        descriptors: Vec<Descriptor>,
    ) -> Result<Self, MatchingError> {
        if keypoints.len() != descriptors.len() {
            return Err(MatchingError::LengthMismatch {
                keypoints: keypoints.len(),
                descriptors: descriptors.len(),
            });
        }
        Ok(Self {
            image_id,
            keypoints,
            descriptors,
        })
    }

    /// Normalizes raw pixel keypoints `(pixel, scale, orientation)` with `intr`.
    pub fn from_pixels(
        image_id: usize,
        raw: &[(PixelPoint, f64, f64)],
        descriptors: Vec<Descriptor>,
        intr: &CameraIntrinsics,
    ) -> Result<Self, MatchingError> {
        let keypoints = raw
            .iter()
            .enumerate()
            .map(|(index, &(pixel, scale, orientation))| {
                undistort_normalize(&pixel, intr)
                    .map(|normalized| Keypoint {
                        pixel,
                        normalized,
                        scale,
                        orientation,
                    })
                    .map_err(|source| MatchingError::Normalization { index, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(image_id, keypoints, descriptors)
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn keypoints(&self) -> &[Keypoint] {
        &self.keypoints
    }

    pub fn descriptors(&self) -> &[Descriptor] {
        &self.descriptors
    }

    pub fn observation(&self, feature_id: usize) -> Observation {
        Observation {
            image_id: self.image_id,
            feature_id,
            x: self.keypoints[feature_id].normalized,
            descriptor: self.descriptors[feature_id],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PutativeMatch {
    pub feature_a: usize,
    pub feature_b: usize,
    pub distance: f64,
}

/// A feature of the query image matched to a model point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match2D3D {
    pub feature: usize,
    pub point: usize,
    pub distance: f64,
    pub correspondence: Correspondence2D3D,
}

/// Ratio rule: keep iff `second ≥ theta · nearest`. Equal distances only pass for `theta ≤ 1`.
fn passes_ratio(nearest: f64, second: f64, theta: f64) -> bool {
    if second == nearest {
        theta <= 1.0
    } else {
        second >= theta * nearest
    }
}

/// Nearest and second-nearest squared distances with the index of the nearest.
fn two_nearest<I: Iterator<Item = u32>>(distances: I) -> Option<(usize, u32, Option<u32>)> {
    let mut best: Option<(usize, u32)> = None;
    let mut second: Option<u32> = None;
    for (i, d) in distances.enumerate() {
        match best {
            None => best = Some((i, d)),
            Some((_, bd)) if d < bd => {
                second = Some(bd);
                best = Some((i, d));
            }
            Some(_) => {
                if second.is_none_or(|s| d < s) {
                    second = Some(d);
                }
            }
        }
    }
    best.map(|(i, d)| (i, d, second))
}

/// For each feature of `fa`, its nearest descriptor in `fb` if the ratio test passes.
pub fn match_ratio_test(fa: &FeatureSet, fb: &FeatureSet, theta: f64) -> Vec<PutativeMatch> {
    fa.descriptors
        .iter()
        .enumerate()
        .filter_map(|(i, da)| {
            let (j, d1, d2) = two_nearest(fb.descriptors.iter().map(|db| da.distance_squared(db)))?;
            let nearest = (d1 as f64).sqrt();
            let second = d2.map_or(f64::INFINITY, |d| (d as f64).sqrt());
            passes_ratio(nearest, second, theta).then_some(PutativeMatch {
                feature_a: i,
                feature_b: j,
                distance: nearest,
            })
        })
        .collect()
}

/// Matches features to model points. A point's distance to a feature is the
/// best distance over its support descriptors; the ratio test runs over
/// those per-point distances.
pub fn match_2d3d(features: &FeatureSet, model: &[ModelPoint], theta: f64) -> Vec<Match2D3D> {
    if model.is_empty() {
        return Vec::new();
    }
    features
        .descriptors
        .iter()
        .enumerate()
        .filter_map(|(i, d)| {
            let per_point = model.iter().map(|p| {
                p.support()
                    .iter()
                    .map(|o| d.distance_squared(&o.descriptor))
                    .min()
                    .unwrap_or(u32::MAX)
            });
            let (j, d1, d2) = two_nearest(per_point)?;
            if d1 == u32::MAX {
                return None;
            }
            let nearest = (d1 as f64).sqrt();
            let second = d2.filter(|&d| d != u32::MAX).map_or(f64::INFINITY, |d| (d as f64).sqrt());
            passes_ratio(nearest, second, theta).then(|| Match2D3D {
                feature: i,
                point: j,
                distance: nearest,
                correspondence: Correspondence2D3D::new(features.keypoints[i].normalized, model[j].position),
            })
        })
        .collect()
}

/// A registered image available for guided matching.
#[derive(Debug, Clone, Copy)]
pub struct PosedFeatures<'a> {
    pub features: &'a FeatureSet,
    pub pose: CameraPose,
}

/// Up to `k` nearest-descriptor features per candidate image that are
/// visually compatible with `query` and whose two-view triangulation with it
/// reprojects below `tau_reproj` in both views.
pub fn guided_match(
    query: &Observation,
    candidate_images: &[PosedFeatures<'_>],
    current_pose: &CameraPose,
    k: usize,
    tau_desc: f64,
    tau_reproj: f64,
) -> Vec<Observation> {
    if k == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for cand in candidate_images {
        let mut ranked: Vec<(u32, usize)> = cand
            .features
            .descriptors
            .iter()
            .enumerate()
            .map(|(j, d)| (query.descriptor.distance_squared(d), j))
            .collect();
        if ranked.len() > k {
            ranked.select_nth_unstable(k - 1);
            ranked.truncate(k);
        }
        ranked.sort_unstable();
        for (_, j) in ranked {
            let obs = cand.features.observation(j);
            if !visually_compatible(&query.descriptor, &obs.descriptor, tau_desc) {
                continue;
            }
            let Ok(x) = triangulate_two_view(current_pose, &cand.pose, &query.x, &obs.x) else {
                continue;
            };
            if position_compatible(&x, current_pose, &query.x, tau_reproj)
                && position_compatible(&x, &cand.pose, &obs.x, tau_reproj)
            {
                out.push(obs);
            }
        }
    }
    out
}

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

fn read_text(path: &Path) -> Result<String, std::io::Error> {
    let mut text = String::new();
    if is_gzip(path) {
        GzDecoder::new(File::open(path)?).read_to_string(&mut text)?;
    } else {
        File::open(path)?.read_to_string(&mut text)?;
    }
    Ok(text)
}

/// Parses the keypoint text format: a header `N 128`, then per keypoint
/// `x y scale orientation` followed by 128 integer descriptor components.
/// Whitespace, including line breaks, separates tokens.
pub fn parse_features(text: &str, image_id: usize, intr: &CameraIntrinsics) -> Result<FeatureSet, MatchingError> {
    let mut tokens = text.split_whitespace();
    let mut next = |what: &str| tokens.next().ok_or_else(|| MatchingError::Parse(format!("unexpected end of input reading {what}")));
    let count: usize = next("keypoint count")?
        .parse()
        .map_err(|e| MatchingError::Parse(format!("keypoint count: {e}")))?;
    let dim: usize = next("descriptor length")?
        .parse()
        .map_err(|e| MatchingError::Parse(format!("descriptor length: {e}")))?;
    if dim != DESCRIPTOR_LEN {
        return Err(MatchingError::DimensionMismatch {
            expected: DESCRIPTOR_LEN,
            found: dim,
        });
    }
    let mut raw = Vec::with_capacity(count);
    let mut descriptors = Vec::with_capacity(count);
    for k in 0..count {
        let mut geometry = [0.0f64; 4];
        for g in geometry.iter_mut() {
            let tok = next("keypoint geometry")?;
            *g = tok
                .parse()
                .map_err(|e| MatchingError::Parse(format!("keypoint {k}: bad number {tok:?}: {e}")))?;
            if !g.is_finite() {
                return Err(MatchingError::Parse(format!("keypoint {k}: non-finite value")));
            }
        }
        let mut d = [0u8; DESCRIPTOR_LEN];
        for v in d.iter_mut() {
            let tok = next("descriptor")?;
            *v = tok
                .parse()
                .map_err(|e| MatchingError::Parse(format!("keypoint {k}: bad descriptor value {tok:?}: {e}")))?;
        }
        raw.push((PixelPoint::new(geometry[0], geometry[1]), geometry[2], geometry[3]));
        descriptors.push(Descriptor(d));
    }
    if let Some(extra) = tokens.next() {
        return Err(MatchingError::Parse(format!("trailing data after {count} keypoints: {extra:?}")));
    }
    FeatureSet::from_pixels(image_id, &raw, descriptors, intr)
}

/// Loads a keypoint file (gzip-compressed when the name ends in `.gz`) and
/// normalizes its keypoints.
pub fn load_features(path: &Path, image_id: usize, intr: &CameraIntrinsics) -> Result<FeatureSet, MatchingError> {
    parse_features(&read_text(path)?, image_id, intr)
}

pub fn format_features(features: &FeatureSet) -> String {
    let mut out = format!("{} {}\n", features.len(), DESCRIPTOR_LEN);
    for (kp, d) in features.keypoints.iter().zip(&features.descriptors) {
        out.push_str(&format!("{} {} {} {}\n", kp.pixel.x, kp.pixel.y, kp.scale, kp.orientation));
        for chunk in d.0.chunks(20) {
            let line: Vec<String> = chunk.iter().map(|v| v.to_string()).collect();
            out.push(' ');
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out
}

/// Writes the keypoint format; gzip-compressed when the name ends in `.gz`.
pub fn write_features(path: &Path, features: &FeatureSet) -> Result<(), MatchingError> {
    let text = format_features(features);
    let file = BufWriter::new(File::create(path)?);
    if is_gzip(path) {
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(text.as_bytes())?;
        enc.finish()?.flush()?;
    } else {
        let mut file = file;
        file.write_all(text.as_bytes())?;
        file.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{project, WorldPoint};
    use nalgebra::{Point2, Point3, Vector3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(700.0, 700.0, 320.0, 240.0).unwrap()
    }

    fn descriptor_with(v: u8, pos: usize) -> Descriptor {
        let mut d = Descriptor::zeros();
        d.0[pos] = v;
        d
    }

    fn set(image_id: usize, descriptors: Vec<Descriptor>) -> FeatureSet {
        let raw: Vec<_> = (0..descriptors.len()).map(|i| (Point2::new(i as f64, 0.0), 1.0, 0.0)).collect();
        FeatureSet::from_pixels(image_id, &raw, descriptors, &intr()).unwrap()
    }

    fn random_set(rng: &mut ChaCha8Rng, image_id: usize, n: usize) -> FeatureSet {
        let ds = (0..n)
            .map(|_| Descriptor(std::array::from_fn(|_| rng.random_range(0..8u8))))
            .collect();
        set(image_id, ds)
    }

    /// Sorts all distances and applies the rule directly.
    fn brute_force_ratio(fa: &FeatureSet, fb: &FeatureSet, theta: f64) -> Vec<PutativeMatch> {
        let mut out = Vec::new();
        for (i, da) in fa.descriptors().iter().enumerate() {
            let mut all: Vec<(f64, usize)> = fb.descriptors().iter().enumerate().map(|(j, db)| {
                let s: f64 = da.0.iter().zip(db.0.iter()).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
                (s.sqrt(), j)
            }).collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (d1, j) = all[0];
            let d2 = all.get(1).map_or(f64::INFINITY, |x| x.0);
            let keep = if d1 == d2 { theta <= 1.0 } else { d2 >= theta * d1 };
            if keep {
                out.push(PutativeMatch { feature_a: i, feature_b: j, distance: d1 });
            }
        }
        out
    }

    #[test]
    fn exact_duplicate_is_matched() {
        let fa = set(0, vec![descriptor_with(200, 0)]);
        let fb = set(1, vec![descriptor_with(100, 5), descriptor_with(200, 0), descriptor_with(250, 9)]);
        let m = match_ratio_test(&fa, &fb, 1.25);
        assert_eq!(m, vec![PutativeMatch { feature_a: 0, feature_b: 1, distance: 0.0 }]);
    }

    #[test]
    fn equidistant_neighbours_rejected() {
        let fa = set(0, vec![descriptor_with(100, 0)]);
        let fb = set(1, vec![descriptor_with(100, 1), descriptor_with(100, 2)]);
        assert!(match_ratio_test(&fa, &fb, 1.25).is_empty());
        assert_eq!(match_ratio_test(&fa, &fb, 1.0).len(), 1);
    }

    #[test]
    fn ratio_test_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let fa = random_set(&mut rng, 0, 40);
            let fb = random_set(&mut rng, 1, 50);
            for theta in [1.0, 1.05, 1.25] {
                assert_eq!(match_ratio_test(&fa, &fb, theta), brute_force_ratio(&fa, &fb, theta));
            }
        }
    }

    fn model_point(descs: &[Descriptor], position: WorldPoint) -> ModelPoint {
        let support = descs.iter().enumerate().map(|(i, d)| Observation {
            image_id: i,
            feature_id: 0,
            x: Point2::origin(),
            descriptor: *d,
        }).collect();
        ModelPoint::new(position, support).unwrap()
    }

    #[test]
    fn match_2d3d_picks_supporting_point() {
        let model = vec![
            model_point(&[descriptor_with(50, 0), descriptor_with(60, 0)], Point3::new(0.0, 0.0, 5.0)),
            model_point(&[descriptor_with(200, 3), descriptor_with(210, 3)], Point3::new(1.0, 0.0, 5.0)),
            model_point(&[descriptor_with(200, 7)], Point3::new(2.0, 0.0, 5.0)),
        ];
        let fs = set(5, vec![descriptor_with(210, 3)]);
        let m = match_2d3d(&fs, &model, 1.25);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].feature, m[0].point), (0, 1));
        assert_eq!(m[0].correspondence.world, Point3::new(1.0, 0.0, 5.0));
        assert!(match_2d3d(&set(5, vec![]), &model, 1.25).is_empty());
    }

    #[test]
    fn match_2d3d_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let model: Vec<ModelPoint> = (0..30).map(|_| {
                let n = rng.random_range(1..4);
                let ds: Vec<_> = (0..n).map(|_| Descriptor(std::array::from_fn(|_| rng.random_range(0..8u8)))).collect();
                model_point(&ds, Point3::new(0.0, 0.0, 1.0))
            }).collect();
            let fs = random_set(&mut rng, 9, 40);
            let got: Vec<(usize, usize)> = match_2d3d(&fs, &model, 1.1).iter().map(|m| (m.feature, m.point)).collect();
            let mut expected = Vec::new();
            for (i, d) in fs.descriptors().iter().enumerate() {
                // Every (feature, point, support descriptor) triple.
                let mut best = vec![f64::INFINITY; model.len()];
                for (j, p) in model.iter().enumerate() {
                    for o in p.support() {
                        let s: f64 = d.0.iter().zip(o.descriptor.0.iter()).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
                        best[j] = best[j].min(s.sqrt());
                    }
                }
                let mut order: Vec<usize> = (0..model.len()).collect();
                order.sort_by(|&a, &b| best[a].partial_cmp(&best[b]).unwrap().then(a.cmp(&b)));
                let (d1, d2) = (best[order[0]], best[order[1]]);
                let keep = if d1 == d2 { false } else { d2 >= 1.1 * d1 };
                if keep {
                    expected.push((i, order[0]));
                }
            }
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn guided_matching_uses_geometry() {
        let current = CameraPose::identity();
        let other = CameraPose::new_unchecked(nalgebra::Matrix3::identity(), Vector3::new(1.0, 0.0, 0.0));
        let truth = Point3::new(0.3, 0.1, 5.0);
        let elsewhere = Point3::new(-0.8, 0.5, 4.0);
        let d = descriptor_with(120, 4);
        let query = Observation { image_id: 2, feature_id: 0, x: project(&current, &truth).unwrap(), descriptor: d };
        let keypoints = vec![
            Keypoint { pixel: Point2::origin(), normalized: project(&other, &truth).unwrap(), scale: 1.0, orientation: 0.0 },
            Keypoint { pixel: Point2::origin(), normalized: project(&other, &elsewhere).unwrap(), scale: 1.0, orientation: 0.0 },
        ];
        let fs = FeatureSet::new(0, keypoints, vec![d, d]).unwrap();
        let cands = [PosedFeatures { features: &fs, pose: other }];
        let found = guided_match(&query, &cands, &current, 20, 10.0, 2e-3);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].feature_id, 0);
        assert!(guided_match(&query, &cands, &current, 0, 10.0, 2e-3).is_empty());
    }

    #[test]
    fn parse_two_keypoints_and_reject_bad_dimension() {
        let d: Vec<String> = (0..128).map(|i| (i % 256).to_string()).collect();
        let text = format!("2 128\n320 240 1.5 0.1\n{}\n1020 240 2 -0.3\n{}\n", d.join(" "), d.join(" "));
        let fs = parse_features(&text, 0, &intr()).unwrap();
        assert_eq!(fs.len(), 2);
        assert_eq!(fs.keypoints()[1].normalized, Point2::new(1.0, 0.0));
        let bad = "1 64\n0 0 1 0\n".to_string() + &vec!["0"; 64].join(" ");
        assert!(matches!(parse_features(&bad, 0, &intr()), Err(MatchingError::DimensionMismatch { found: 64, .. })));
        assert!(matches!(parse_features("2 128\n1 2 3", 0, &intr()), Err(MatchingError::Parse(_))));
        let overflow = format!("1 128\n0 0 1 0\n{} 256", vec!["0"; 127].join(" "));
        assert!(matches!(parse_features(&overflow, 0, &intr()), Err(MatchingError::Parse(_))));
    }

    #[test]
    fn file_round_trip_plain_and_gzip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let raw: Vec<_> = (0..25)
            .map(|_| (Point2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)), rng.random_range(1.0..5.0), rng.random_range(-3.0..3.0)))
            .collect();
        let ds = (0..25).map(|_| Descriptor(std::array::from_fn(|_| rng.random()))).collect();
        let intr = intr().with_distortion(-0.05, 0.01, 0.0, 0.0);
        let fs = FeatureSet::from_pixels(3, &raw, ds, &intr).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.key", "a.key.gz"] {
            let path = dir.path().join(name);
            write_features(&path, &fs).unwrap();
            assert_eq!(load_features(&path, 3, &intr).unwrap(), fs);
        }
    }

    proptest! {
        #[test]
        fn raising_theta_never_adds_matches(seed in 0u64..1000, t1 in 1.0..2.0f64, dt in 0.0..1.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fa = random_set(&mut rng, 0, 20);
            let fb = random_set(&mut rng, 1, 20);
            let lo = match_ratio_test(&fa, &fb, t1);
            let hi = match_ratio_test(&fa, &fb, t1 + dt);
            prop_assert!(hi.len() <= lo.len());
            prop_assert!(hi.iter().all(|m| lo.contains(m)));
            let mut seen = std::collections::HashSet::new();
            prop_assert!(lo.iter().all(|m| seen.insert(m.feature_a)));
        }
    }
}
