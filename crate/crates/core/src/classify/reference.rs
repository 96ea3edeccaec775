use super::{Backend, BackendDescriptor, BackendKind, ClassifyError, Concurrency, DetectionClass};
use crate::spectro::Tile;

const EPSILON: f64 = 1e-12;

/// Fraction of a tile's squared intensity that falls in rows whose centre
/// frequency lies inside the class band (inclusive on both ends).
pub fn reference_score(tile: &Tile, cls: &DetectionClass) -> f64 {
    let mut in_band = 0.0;
    let mut total = 0.0;
    for row in 0..tile.height {
        let energy: f64 = tile.row(row).iter().map(|&v| f64::from(v) * f64::from(v)).sum();
        total += energy;
        let hz = row as f64 * tile.bin_hz;
        if hz >= cls.band_low && hz <= cls.band_high {
            in_band += energy;
        }
    }
    (in_band / (total + EPSILON)).clamp(0.0, 1.0)
}

/// Deterministic band-energy classifier standing in for a trained model.
#[derive(Debug, Clone)]
pub struct ReferenceBackend {
    descriptor: BackendDescriptor,
}

impl ReferenceBackend {
    pub fn new(class_count: usize) -> Self {
        Self {
            descriptor: BackendDescriptor {
                kind: BackendKind::Reference,
                source: None,
                class_count,
                concurrency: Concurrency::Concurrent,
            },
        }
    }
}

impl Backend for ReferenceBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn score(&self, tiles: &[Tile], classes: &[DetectionClass]) -> Result<Vec<Vec<f64>>, ClassifyError> {
        Ok(tiles
            .iter()
            .map(|t| classes.iter().map(|c| reference_score(t, c)).collect())
            .collect())
    }
}
