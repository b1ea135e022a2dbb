//! Runs every stage on the bundled synthetic world and prints the report.
//!
//! `cargo run --release -p qrw-core --example synthetic_run -- [out_dir]`

use qrw_core::{Pipeline, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "runs/synthetic".into());
    let pipeline = Pipeline::new(PipelineConfig::synthetic_demo(), &out)?;
    pipeline.run_all()?;
    print!("{}", std::fs::read_to_string(pipeline.path("report.txt"))?);
    Ok(())
}
