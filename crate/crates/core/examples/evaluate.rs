//! Pose metrics on a hand-built estimate: a scaled, rotated copy of the truth
//! with one camera slightly off.

use extcal::eval::evaluate;
use extcal::geom::{exp_so3, CameraPose};
use nalgebra::Vector3;

fn main() {
    let gt: Vec<CameraPose> = (0..4)
        .map(|i| CameraPose::new_unchecked(exp_so3(&Vector3::new(0.0, 0.1 * i as f64, 0.0)), Vector3::new(i as f64, 0.0, 0.0)))
        .collect();
    // Any similarity applied to every camera leaves the errors at zero.
    let q = exp_so3(&Vector3::new(0.3, -0.2, 0.5));
    let est: Vec<(usize, CameraPose)> = gt
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut center = 0.5 * (q * p.center) + Vector3::new(1.0, 2.0, 3.0);
            if i == 3 {
                center += Vector3::new(0.0, 0.02, 0.0);
            }
            (i, CameraPose::new_unchecked(p.rotation * q.transpose(), center))
        })
        .collect();
    let report = evaluate(&est, &gt).unwrap();
    print!("{}", report.to_csv());
}
