//! Solve a random five-point problem and recover the pose from E.

use extcal::five_point::{decompose_essential, solve_essential_5pt};
use extcal::geom::EssentialMatrix;
use extcal::selftest::random_relative_instance;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (truth, sample) = random_relative_instance(&mut rng);
    let e_true = EssentialMatrix::from_relative_pose(&truth);

    let solutions = solve_essential_5pt(&sample).expect("generic sample");
    println!("{} candidate essential matrices", solutions.len());
    for (k, e) in solutions.iter().enumerate() {
        println!(
            "  #{k}: |det| {:.1e}, trace residual {:.1e}, distance to truth {:.2e}",
            e.determinant().abs(),
            e.trace_constraint_residual(),
            e.distance_up_to_sign(&e_true)
        );
    }

    let best = solutions
        .iter()
        .min_by(|a, b| a.distance_up_to_sign(&e_true).total_cmp(&b.distance_up_to_sign(&e_true)))
        .unwrap();
    let rel = decompose_essential(best, &sample).unwrap();
    println!("recovered direction {:?}", rel.direction.as_slice());
    println!("true direction      {:?}", truth.center.normalize().as_slice());
}
