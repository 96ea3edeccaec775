//! Backend manifests and the external-process backend.
//!
//! Manifest format, one `key=value` per line (`#` comments allowed):
//!
//! ```text
//! kind=external
//! source=models/run_model.sh
//! classes=classes.csv
//! ```
//!
//! Relative paths resolve against the manifest's directory.
//!
//! An external backend is an executable that reads one batch from stdin:
//! a header line `PAMFLOW-TILES/1 count=<n> height=<h> width=<w> classes=<k>`
//! followed by `n*h*w` little-endian `f32` intensities (tile-major, row 0 =
//! lowest frequency), and answers on stdout with `n` lines of `k`
//! comma-separated scores.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use super::{Backend, BackendDescriptor, BackendKind, ClassifyError, Concurrency, DetectionClass};
use crate::spectro::Tile;

pub const TILE_STREAM_MAGIC: &str = "PAMFLOW-TILES/1";

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub kind: BackendKind,
    pub source: Option<PathBuf>,
    pub classes: Option<PathBuf>,
}

impl Manifest {
    /// Instantiates the backend this manifest names.
    pub fn backend(&self, class_count: usize) -> Box<dyn Backend> {
        match (self.kind, &self.source) {
            (BackendKind::External, Some(src)) => Box::new(ExternalBackend::new(src, class_count)),
            _ => Box::new(super::ReferenceBackend::new(class_count)),
        }
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest, ClassifyError> {
    let bad = |reason: String| ClassifyError::Manifest {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|source| ClassifyError::IoFailure {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |v: &str| -> Option<PathBuf> { (!v.is_empty()).then(|| base.join(v)) };

    let mut kind = None;
    let mut source = None;
    let mut classes = None;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected key=value", n + 1)))?;
        let value = value.trim();
        match key.trim() {
            "kind" => {
                kind = Some(match value {
                    "reference" => BackendKind::Reference,
                    "external" => BackendKind::External,
                    other => return Err(bad(format!("unknown kind `{other}`"))),
                })
            }
            "source" => source = resolve(value),
            "classes" => classes = resolve(value),
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
    }
    let kind = kind.ok_or_else(|| bad("missing `kind`".into()))?;
    if kind == BackendKind::External && source.is_none() {
        return Err(bad("external backend needs `source`".into()));
    }
    Ok(Manifest {
        kind,
        source,
        classes,
    })
}

/// Runs an executable once per batch using the tile stream protocol.
/// Declared single-stream, so the pipeline never overlaps calls.
#[derive(Debug, Clone)]
pub struct ExternalBackend {
    program: PathBuf,
    descriptor: BackendDescriptor,
}

impl ExternalBackend {
    pub fn new(program: impl Into<PathBuf>, class_count: usize) -> Self {
        let program = program.into();
        Self {
            descriptor: BackendDescriptor {
                kind: BackendKind::External,
                source: Some(program.clone()),
                class_count,
                concurrency: Concurrency::SingleStream,
            },
            program,
        }
    }
}

fn encode_batch(tiles: &[Tile], n_classes: usize) -> Vec<u8> {
    let (h, w) = tiles.first().map_or((0, 0), Tile::shape);
    let mut buf = format!(
        "{TILE_STREAM_MAGIC} count={} height={h} width={w} classes={n_classes}\n",
        tiles.len()
    )
    .into_bytes();
    buf.reserve(tiles.len() * h * w * 4);
    for t in tiles {
        for v in &t.intensities {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

impl Backend for ExternalBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn score(&self, tiles: &[Tile], classes: &[DetectionClass]) -> Result<Vec<Vec<f64>>, ClassifyError> {
        let fail = |m: String| ClassifyError::BackendFailure(format!("{}: {m}", self.program.display()));
        let mut child = Command::new(&self.program)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| fail(format!("spawn failed: {e}")))?;

        let payload = encode_batch(tiles, classes.len());
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || stdin.write_all(&payload));

        let mut stdout = String::new();
        child
            .stdout
            .take()
            .expect("piped stdout")
            .read_to_string(&mut stdout)
            .map_err(|e| fail(format!("reading output: {e}")))?;
        let mut stderr = String::new();
        if let Some(mut err) = child.stderr.take() {
            let _ = err.read_to_string(&mut stderr);
        }
        let status = child.wait().map_err(|e| fail(e.to_string()))?;
        let write_result = writer.join().map_err(|_| fail("writer thread panicked".into()))?;
        if !status.success() {
            return Err(fail(format!("exited with {status}: {}", stderr.trim())));
        }
        write_result.map_err(|e| fail(format!("writing tiles: {e}")))?;

        stdout
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, line)| {
                line.split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| fail(format!("output line {}: bad score `{v}`", i + 1)))
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::predict_batch;
    use crate::classify::tests::tile;
    use tempfile::tempdir;

    #[test]
    fn manifest_parsing() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("model.txt");
        std::fs::write(
            &p,
            "# model\nkind=external\nsource=bin/run.sh\nclasses = classes.csv\n",
        )
        .unwrap();
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.kind, BackendKind::External);
        assert_eq!(m.source, Some(dir.path().join("bin/run.sh")));
        assert_eq!(m.classes, Some(dir.path().join("classes.csv")));
    }

    #[test]
    fn manifest_errors() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("m.txt");
        for body in ["kind=magic\n", "source=x\n", "kind=external\n", "kind=reference\nweights=x\n", "garbage\n"] {
            std::fs::write(&p, body).unwrap();
            assert!(matches!(load_manifest(&p), Err(ClassifyError::Manifest { .. })), "{body}");
        }
        std::fs::write(&p, "kind=reference\n").unwrap();
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.backend(3).descriptor().kind, BackendKind::Reference);
    }

    #[test]
    fn stream_header() {
        let tiles = vec![tile(0, 2, 3, 0.5), tile(1, 2, 3, 0.25)];
        let bytes = encode_batch(&tiles, 4);
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(
            std::str::from_utf8(&bytes[..nl]).unwrap(),
            "PAMFLOW-TILES/1 count=2 height=2 width=3 classes=4"
        );
        assert_eq!(bytes.len() - nl - 1, 2 * 6 * 4);
        assert_eq!(&bytes[nl + 1..nl + 5], &0.5f32.to_le_bytes());
    }

    #[cfg(unix)]
    fn script(dir: &Path, body: &str) -> PathBuf {
        use std::os::unix::fs::PermissionsExt;
        let p = dir.join("model.sh");
        std::fs::write(&p, body).unwrap();
        std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
        p
    }

    #[cfg(unix)]
    #[test]
    fn external_process_round_trip() {
        let dir = tempdir().unwrap();
        // Consumes the batch, then emits a fixed score per class.
        let prog = script(
            dir.path(),
            "#!/bin/sh\nread header\ncount=$(echo \"$header\" | sed 's/.*count=\\([0-9]*\\).*/\\1/')\ncat > /dev/null\ni=0\nwhile [ $i -lt $count ]; do echo 0.25,0.75; i=$((i+1)); done\n",
        );
        let backend = ExternalBackend::new(&prog, 2);
        let classes: Vec<DetectionClass> = ["A", "B"]
            .iter()
            .map(|c| DetectionClass {
                code: c.to_string(),
                label: String::new(),
                threshold: 0.5,
                band_low: 0.0,
                band_high: 10.0,
            })
            .collect();
        let tiles: Vec<Tile> = (0..3).map(|i| tile(i, 16, 16, 0.5)).collect();
        let rows = predict_batch(&backend, &tiles, &classes).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.scores == vec![0.25, 0.75]));
    }

    #[cfg(unix)]
    #[test]
    fn external_failure_is_reported() {
        let dir = tempdir().unwrap();
        let prog = script(dir.path(), "#!/bin/sh\ncat > /dev/null\necho boom >&2\nexit 3\n");
        let backend = ExternalBackend::new(&prog, 1);
        let err = backend.score(&[tile(0, 2, 2, 0.0)], &[]).unwrap_err();
        assert!(err.to_string().contains("boom"), "{err}");
        let missing = ExternalBackend::new(dir.path().join("absent"), 1);
        assert!(matches!(
            missing.score(&[tile(0, 2, 2, 0.0)], &[]),
            Err(ClassifyError::BackendFailure(_))
        ));
    }
}
