//! Regenerates the bundled stand-in datasets under `data/`.
//!
//! `cargo run --example make_standin_data [-- <out-dir> <seed>]`

use std::path::PathBuf;

use fedhybrid::data::standin;

const MUSHROOM_ROWS: usize = 8124;

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(
        args.next()
            .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data").into()),
    );
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("seed must be an integer"));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("housing.csv"), standin::housing_csv(seed))?;
    std::fs::write(dir.join("mushroom.csv"), standin::mushroom_csv(MUSHROOM_ROWS, seed))?;
    println!("wrote housing.csv and mushroom.csv to {}", dir.display());
    Ok(())
}
