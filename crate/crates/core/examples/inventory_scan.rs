//! Inventory a tree of recordings and write inventory.csv.
//!
//!     cargo run --example inventory_scan [target_dir]

use std::collections::BTreeSet;

use pamflow::inventory::{parse_filename, read_inventory, scan, write_inventory};
use pamflow::synth::{write_tone_corpus, CorpusSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let target = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let spec = CorpusSpec {
                n_files: 6,
                ..CorpusSpec::default()
            };
            write_tone_corpus(dir.path(), &spec)?;
            std::fs::write(dir.path().join("notes.txt"), "not audio")?;
            std::fs::write(dir.path().join("CLE/broken.wav"), "RIFF")?;
            dir.path().to_path_buf()
        }
    };

    println!("{:?}", parse_filename("HJA-02_20230516_013000.wav"));

    let inv = scan(&target, &BTreeSet::from(["wav".to_string()]))?;
    for r in &inv.records {
        println!(
            "{:<40} {:>6} {:>3} {:<20} {:>7.3}s {}",
            r.path,
            r.site.as_deref().unwrap_or("-"),
            r.station.as_deref().unwrap_or("-"),
            r.start_time.map(|t| t.to_string()).unwrap_or_default(),
            r.duration,
            r.status
        );
    }
    println!("{} files, {:.1} s total", inv.len(), inv.total_duration());

    let out = dir.path().join("inventory.csv");
    write_inventory(&inv, &out)?;
    assert_eq!(read_inventory(&out)?, inv);
    println!("wrote {}", out.display());
    Ok(())
}
