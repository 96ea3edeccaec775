//! Run the whole pipeline on a synthetic corpus, as `pamflow process` would.
//!
//!     cargo run --release --example full_pipeline [workers]

use pamflow::cli::{run, Layout, Mode, RunConfig};
use pamflow::synth::{write_tone_class_list, write_tone_corpus, CorpusSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let spec = CorpusSpec::default();
    let truth = write_tone_corpus(dir.path(), &spec)?;
    let classes = dir.path().join("classes.csv");
    write_tone_class_list(&classes, &spec.tone_hz, 0.5)?;

    let mut cfg = RunConfig::new(Mode::Process, dir.path());
    cfg.class_list = Some(classes.clone());
    if let Some(w) = std::env::args().nth(1) {
        cfg.workers = w.parse()?;
    }
    let report = run(&cfg)?;
    println!(
        "{} files, {} clips, {} detections ({} tones injected), {} warnings",
        report.files_seen,
        report.clips_generated,
        report.detections,
        truth.len(),
        report.warnings.len()
    );

    // Review mode re-reads scores.csv and extracts audio for the top 2 per class.
    cfg.mode = Mode::Review;
    cfg.per_class_cap = Some(2);
    cfg.quiet = true;
    run(&cfg)?;

    let layout = Layout::new(&cfg.output_dir);
    print!("{}", std::fs::read_to_string(layout.summary())?);
    print!("{}", std::fs::read_to_string(layout.review_manifest())?);
    Ok(())
}
