//! Two-view and n-view triangulation of one point seen by a ring of cameras.

use extcal::geom::project;
use extcal::synth::look_at;
use extcal::triangulate::{reprojection_error, triangulate_nview, triangulate_two_view};
use nalgebra::{Point3, Vector2, Vector3};

fn main() {
    let target = Point3::new(0.2, -0.1, 0.3);
    let poses: Vec<_> = (0..6)
        .map(|i| {
            let a = (i as f64 * 8.0).to_radians();
            look_at(Vector3::new(5.0 * a.sin(), -0.5, -5.0 * a.cos()), Vector3::zeros())
        })
        .collect();
    // Small deterministic perturbation standing in for detector noise.
    let xs: Vec<_> = poses
        .iter()
        .enumerate()
        .map(|(i, p)| project(p, &target).unwrap() + Vector2::new(1e-4 * (i as f64 - 2.5), -5e-5))
        .collect();

    let two = triangulate_two_view(&poses[0], &poses[1], &xs[0], &xs[1]).unwrap();
    let many = triangulate_nview(&poses, &xs).unwrap();
    println!("two-view error {:.2e}", (two - target).norm());
    println!("six-view error {:.2e}", (many - target).norm());
    let worst = poses.iter().zip(&xs).map(|(p, x)| reprojection_error(p, &many, x).unwrap()).fold(0.0, f64::max);
    println!("worst reprojection after refinement {worst:.2e}");
}
