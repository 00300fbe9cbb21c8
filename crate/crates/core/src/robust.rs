//! Seeded RANSAC for relative pose (five-point) and absolute pose (P3P).

use crate::five_point::{decompose_essential, sampson_error, solve_essential_5pt, Correspondence2D2D, FivePointError, RelativePose};
use crate::geom::{project, CameraPose, EssentialMatrix};
use crate::p3p::{solve_p3p_finsterwalder, Correspondence2D3D};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RansacError {
    #[error("need at least {needed} matches, got {got}")]
    NotEnoughMatches { needed: usize, got: usize },
    #[error("best consensus has {best} inliers, {required} required")]
    NoConsensus { best: usize, required: usize },
    #[error("invalid RANSAC parameters: {0}")]
    InvalidParams(&'static str),
    #[error("pose recovery from the essential matrix failed: {0}")]
    Decomposition(#[from] FivePointError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub max_iterations: usize,
    /// Normalized-coordinate units. The relative-pose test compares Sampson
    /// error against its square.
    pub inlier_threshold: f64,
    pub confidence: f64,
    pub min_inliers: usize,
    pub rng_seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            inlier_threshold: 1e-3,
            confidence: 0.999,
            min_inliers: 10,
            rng_seed: 0,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<(), RansacError> {
        if self.max_iterations < 1 {
            return Err(RansacError::InvalidParams("max_iterations must be at least 1"));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(RansacError::InvalidParams("inlier_threshold must be positive"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(RansacError::InvalidParams("confidence must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusResult<M> {
    pub model: M,
    /// Sorted indices into the input list.
    pub inlier_indices: Vec<usize>,
    pub iterations_run: usize,
}

/// Essential matrix with its recovered pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeModel {
    pub essential: EssentialMatrix,
    pub pose: RelativePose,
}

/// Iterations needed to draw one all-inlier sample with probability `confidence`.
pub fn required_iterations(inlier_ratio: f64, sample_size: usize, confidence: f64) -> f64 {
    let all_inlier = inlier_ratio.powi(sample_size as i32);
    if all_inlier >= 1.0 {
        return 1.0;
    }
    if all_inlier <= 0.0 {
        return f64::INFINITY;
    }
    ((1.0 - confidence).ln() / (1.0 - all_inlier).ln()).ceil().max(1.0)
}

struct Best<M> {
    model: M,
    inliers: Vec<usize>,
    error: f64,
}

/// Shared loop: `solve` maps a sample to candidate models, `residual` scores
/// one datum under a model (`None` when it cannot be evaluated). A datum is an
/// inlier when its residual is below `limit`.
fn consensus<M: Clone>(
    n: usize,
    sample_size: usize,
    params: &RansacParams,
    limit: f64,
    mut solve: impl FnMut(&[usize]) -> Vec<M>,
    residual: impl Fn(&M, usize) -> Option<f64>,
) -> (Option<Best<M>>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut best: Option<Best<M>> = None;
    let mut bound = params.max_iterations as f64;
    let mut iterations = 0;
    while (iterations as f64) < bound && iterations < params.max_iterations {
        iterations += 1;
        let sample = index::sample(&mut rng, n, sample_size).into_vec();
        for model in solve(&sample) {
            let mut inliers = Vec::new();
            let mut error = 0.0;
            for i in 0..n {
                if let Some(r) = residual(&model, i) {
                    if r < limit {
                        inliers.push(i);
                        error += r;
                    }
                }
            }
            let improves = match &best {
                None => !inliers.is_empty(),
                Some(b) => inliers.len() > b.inliers.len() || (inliers.len() == b.inliers.len() && error < b.error),
            };
            if improves {
                let ratio = inliers.len() as f64 / n as f64;
                bound = bound.min(required_iterations(ratio, sample_size, params.confidence));
                best = Some(Best { model, inliers, error });
            }
        }
    }
    (best, iterations)
}

/// RANSAC over five-point samples. Inliers have Sampson error below the
/// squared threshold; the pose is recovered from the winning consensus set.
pub fn ransac_relative_pose(
    matches: &[Correspondence2D2D],
    params: &RansacParams,
) -> Result<ConsensusResult<RelativeModel>, RansacError> {
    params.validate()?;
    if matches.len() < 5 {
        return Err(RansacError::NotEnoughMatches { needed: 5, got: matches.len() });
    }
    let limit = params.inlier_threshold * params.inlier_threshold;
    let (best, iterations) = consensus(
        matches.len(),
        5,
        params,
        limit,
        |s| {
            let sample = [matches[s[0]], matches[s[1]], matches[s[2]], matches[s[3]], matches[s[4]]];
            solve_essential_5pt(&sample).unwrap_or_default()
        },
        |e, i| Some(sampson_error(e, &matches[i])),
    );
    let best = best.ok_or(RansacError::NoConsensus { best: 0, required: params.min_inliers })?;
    if best.inliers.len() < params.min_inliers.max(1) {
        return Err(RansacError::NoConsensus { best: best.inliers.len(), required: params.min_inliers });
    }
    let inlier_matches: Vec<_> = best.inliers.iter().map(|&i| matches[i]).collect();
    let pose = decompose_essential(&best.model, &inlier_matches)?;
    Ok(ConsensusResult {
        model: RelativeModel { essential: best.model, pose },
        inlier_indices: best.inliers,
        iterations_run: iterations,
    })
}

/// RANSAC over P3P samples; every candidate pose of a sample is scored by
/// reprojection error against all correspondences.
pub fn ransac_absolute_pose(
    corrs: &[Correspondence2D3D],
    params: &RansacParams,
) -> Result<ConsensusResult<CameraPose>, RansacError> {
    params.validate()?;
    if corrs.len() < 3 {
        return Err(RansacError::NotEnoughMatches { needed: 3, got: corrs.len() });
    }
    let (best, iterations) = consensus(
        corrs.len(),
        3,
        params,
        params.inlier_threshold,
        |s| solve_p3p_finsterwalder(&[corrs[s[0]], corrs[s[1]], corrs[s[2]]]).unwrap_or_default(),
        |pose, i| project(pose, &corrs[i].world).ok().map(|x| (x - corrs[i].image).norm()),
    );
    let best = best.ok_or(RansacError::NoConsensus { best: 0, required: params.min_inliers })?;
    if best.inliers.len() < params.min_inliers.max(1) {
        return Err(RansacError::NoConsensus { best: best.inliers.len(), required: params.min_inliers });
    }
    Ok(ConsensusResult {
        model: best.model,
        inlier_indices: best.inliers,
        iterations_run: iterations,
    })
}
