//! Runs every stage of a benchmark configuration (cached stages are reused)
//! and prints the report table, the rankings and where the artifacts went.
//!
//! ```text
//! cargo run --release --example full_pipeline -- [CONFIG] [OUT_DIR]
//! ```

use std::path::{Path, PathBuf};

use actbench::harness::{run_pipeline, MetricKind, RunConfig};

fn main() -> actbench::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let config_path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml"));
    let mut config = RunConfig::load(&config_path)?;
    if let Some(out) = args.next() {
        config.output_dir = out.into();
    }
    let outcome = run_pipeline(&config.resolved()?)?;
    print!("{}", outcome.report.to_text());
    if let Some(r) = &outcome.report.rankings {
        for (a, b) in [
            (MetricKind::Psnr, MetricKind::R2),
            (MetricKind::Ssim, MetricKind::R2),
        ] {
            if let Some(rho) = r.rho(a, b) {
                println!("Spearman rho({a}, {b}) = {rho:+.3}");
            }
        }
    }
    let ran = outcome.stages.iter().filter(|s| !s.cache_hit).count();
    println!(
        "{} stages ({ran} ran, {} cached)",
        outcome.stages.len(),
        outcome.stages.len() - ran
    );
    println!("report in {}", outcome.report_dir.display());
    Ok(())
}
