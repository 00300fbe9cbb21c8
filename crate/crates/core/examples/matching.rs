//! Ratio-test matching and its precision against the generator's labels.

use extcal::matching::{match_ratio_test, DEFAULT_RATIO};
use extcal::synth::generate_ring;

fn main() {
    let scene = generate_ring(2, 7.5, 300, 0.0, 0.2, 9);
    let (fa, fb) = (&scene.features[0], &scene.features[1]);
    for theta in [1.0, DEFAULT_RATIO, 1.5, 2.0] {
        let matches = match_ratio_test(fa, fb, theta);
        let correct = matches
            .iter()
            .filter(|m| {
                let a = scene.sources[0][m.feature_a];
                a.is_some() && a == scene.sources[1][m.feature_b]
            })
            .count();
        println!("theta {theta:.2}: {:4} matches, precision {:.3}", matches.len(), correct as f64 / matches.len().max(1) as f64);
    }
}
