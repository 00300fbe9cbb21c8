//! Absolute pose from three 2D-3D correspondences, disambiguated by a fourth.

use extcal::geom::project;
use extcal::p3p::{disambiguate_pose, solve_p3p_finsterwalder, Correspondence2D3D, SAMPLE_REPROJECTION_TOLERANCE};
use extcal::selftest::random_absolute_instance;
use nalgebra::Point3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (truth, sample) = random_absolute_instance(&mut rng);
    let candidates = solve_p3p_finsterwalder(&sample).expect("non-degenerate triangle");
    println!("{} candidate poses", candidates.len());
    for p in &candidates {
        println!("  center {:?}", p.center.as_slice());
    }

    let local = Point3::new(0.4, -0.3, 6.0);
    let world = Point3::from(truth.rotation.transpose() * local.coords + truth.center);
    let extra = [Correspondence2D3D::new(project(&truth, &world).unwrap(), world)];
    let pose = disambiguate_pose(&candidates, &extra, SAMPLE_REPROJECTION_TOLERANCE);
    println!("chosen center {:?}", pose.center.as_slice());
    println!("true center   {:?}", truth.center.as_slice());
}
