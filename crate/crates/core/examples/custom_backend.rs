//! Plug a custom classifier into the pipeline by implementing `Backend`.
//!
//!     cargo run --example custom_backend

use pamflow::classify::{
    predict_batch, Backend, BackendDescriptor, BackendKind, ClassifyError, Concurrency, DetectionClass,
};
use pamflow::spectro::{Clip, SpectroConfig, Spectrogram, Tile};
use pamflow::synth::tone;

/// Scores each class by the peak intensity inside its band.
struct PeakBackend {
    descriptor: BackendDescriptor,
}

impl Backend for PeakBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn score(&self, tiles: &[Tile], classes: &[DetectionClass]) -> Result<Vec<Vec<f64>>, ClassifyError> {
        Ok(tiles
            .iter()
            .map(|t| {
                classes
                    .iter()
                    .map(|c| {
                        (0..t.height)
                            .filter(|&r| (c.band_low..=c.band_high).contains(&(r as f64 * t.bin_hz)))
                            .flat_map(|r| t.row(r).iter().copied())
                            .fold(0.0f32, f32::max)
                            .into()
                    })
                    .collect()
            })
            .collect())
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let classes: Vec<DetectionClass> = [("LOW", 300.0, 700.0), ("HIGH", 5000.0, 6000.0)]
        .iter()
        .map(|&(code, lo, hi)| DetectionClass {
            code: code.into(),
            label: String::new(),
            threshold: 0.9,
            band_low: lo,
            band_high: hi,
        })
        .collect();
    let backend = PeakBackend {
        descriptor: BackendDescriptor {
            kind: BackendKind::External,
            source: None,
            class_count: classes.len(),
            concurrency: Concurrency::Concurrent,
        },
    };

    let cfg = SpectroConfig::default();
    let tile = Spectrogram::new(&cfg).render_clip(
        &tone(500.0, cfg.working_rate, cfg.clip_samples(), 0.3),
        &Clip {
            source: "x/DEMO_20240101_000000.wav".into(),
            index: 0,
            start: 0.0,
            length: cfg.clip_length,
            pad: 0.0,
        },
    );
    for row in predict_batch(&backend, &[tile], &classes)? {
        println!("{} {:?}", row.clip_id, row.scores);
    }
    Ok(())
}
