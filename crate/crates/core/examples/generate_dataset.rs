//! Simulates a small pushing dataset, writes it in the on-disk format and
//! reads one episode back.
//!
//! ```text
//! cargo run --example generate_dataset -- [OUT_DIR]
//! ```

use std::path::PathBuf;

use actbench::dataset::{
    content_hash, generate_dataset, load_episode, read_manifest, Split, SplitSizes,
};
use actbench::sim::WorldConfig;

fn main() -> actbench::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("actbench-example-dataset"));
    let world = WorldConfig::default();
    let sizes = SplitSizes {
        train: 16,
        val: 4,
        test: 8,
    };
    generate_dataset(&world, sizes, &root)?;
    let manifest = read_manifest(&root)?;
    println!("dataset at {}", root.display());
    println!("content hash {}", content_hash(&root)?);
    for t in &manifest.tensors {
        println!("  tensor {:<17} shape {:?}", t.name, t.shape);
    }

    let id = manifest.splits.get(Split::Test)[0];
    let episode = load_episode(&root, &manifest, id)?;
    println!("test episode {id}: {} frames", episode.video.frames);
    println!("  step  gripper (x, y)     action (dx, dy)");
    for t in 0..6 {
        let g = episode.gripper_positions[t];
        let a = episode.actions[t];
        let kind = if t % 2 == 0 { "fresh" } else { "repeat" };
        println!(
            "  {t:>4}  ({:6.2}, {:6.2})  ({:+5.2}, {:+5.2})  {kind}",
            g[0], g[1], a[0], a[1]
        );
    }
    Ok(())
}
