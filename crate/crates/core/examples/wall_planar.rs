//! Two-view initialization on a perfectly flat scene.

use extcal::eval::{rotation_error, translation_angle_error};
use extcal::pipeline::{init_pair, PipelineConfig};
use extcal::synth::{generate_wall, WallConfig};

fn main() {
    for seed in 0..5 {
        let scene = generate_wall(&WallConfig { seed, ..WallConfig::default() });
        let rec = init_pair(&scene.features[0], &scene.features[1], &PipelineConfig::default().with_seed(seed))
            .expect("planar pair initializes");
        let (a, b) = (scene.gt_poses[0], scene.gt_poses[1]);
        let r_true = b.rotation * a.rotation.transpose();
        let dir_true = a.rotation * (b.center - a.center);
        let est = rec.poses[&1];
        println!(
            "seed {seed}: {} points, R_err {:.1e}°, direction error {:.1e}°",
            rec.points.len(),
            rotation_error(&r_true, &est.rotation),
            translation_angle_error(&dir_true, &est.center).unwrap()
        );
    }
}
