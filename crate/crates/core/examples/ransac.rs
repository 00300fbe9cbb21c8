//! Robust relative pose between two noisy views with 30% outlier features.

use extcal::eval::rotation_error;
use extcal::five_point::Correspondence2D2D;
use extcal::matching::match_ratio_test;
use extcal::robust::{ransac_relative_pose, RansacParams};
use extcal::synth::generate_ring;

fn main() {
    let scene = generate_ring(2, 10.0, 400, 0.5, 0.3, 21);
    let (fa, fb) = (&scene.features[0], &scene.features[1]);
    let matches = match_ratio_test(fa, fb, 1.25);
    let corrs: Vec<_> = matches
        .iter()
        .map(|m| Correspondence2D2D::new(fa.keypoints()[m.feature_a].normalized, fb.keypoints()[m.feature_b].normalized))
        .collect();
    let correct = matches
        .iter()
        .filter(|m| scene.sources[0][m.feature_a].is_some() && scene.sources[0][m.feature_a] == scene.sources[1][m.feature_b])
        .count();
    println!("{} putative matches, {} correct", matches.len(), correct);

    // The winning model comes from one noisy minimal sample, so a loose
    // threshold stops early on a rough pose. The pipeline polishes it with
    // bundle adjustment afterwards.
    let truth = scene.gt_poses[1].rotation * scene.gt_poses[0].rotation.transpose();
    for threshold in [3e-3, 1.5e-3, 7e-4] {
        let params = RansacParams { inlier_threshold: threshold, rng_seed: 5, ..RansacParams::default() };
        let result = ransac_relative_pose(&corrs, &params).expect("enough support");
        println!(
            "threshold {threshold:.1e}: {} inliers after {} iterations, rotation error {:.3}°",
            result.inlier_indices.len(),
            result.iterations_run,
            rotation_error(&truth, &result.model.pose.rotation)
        );
    }
}
