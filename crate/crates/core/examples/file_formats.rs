//! Write a synthetic dataset, calibrate from the files on disk and export
//! poses plus a PLY model.

use extcal::formats::{
    export_ply, load_feature_dir, load_ground_truth, load_intrinsics, read_estimates, write_dataset, write_estimates,
    GroundTruthFormat,
};
use extcal::pipeline::{run_sequence, PipelineConfig};
use extcal::synth::generate_ring;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join(format!("extcal-example-{}", std::process::id()));
    let layout = write_dataset(&root, &generate_ring(4, 7.5, 200, 0.0, 0.0, 11))?;

    let intr = load_intrinsics(&layout.intrinsics)?;
    let (names, features) = load_feature_dir(&layout.features, &intr)?;
    println!("loaded {} feature files: {names:?}", features.len());
    for format in [GroundTruthFormat::Middlebury, GroundTruthFormat::Strecha] {
        println!("{format:?}: {} ground-truth cameras", load_ground_truth(&layout.ground_truth, format)?.len());
    }

    let rec = run_sequence(&features, &PipelineConfig::default())?;
    let out = root.join("out");
    write_estimates(&out, &rec.registered_poses(), &names)?;
    export_ply(&rec, &out.join("model.ply"))?;
    for e in read_estimates(&out)? {
        println!("{} {} center {:?}", e.image_id, e.name, e.pose.center.as_slice());
    }
    println!("output in {}", out.display());
    std::fs::remove_dir_all(&root)?;
    Ok(())
}
