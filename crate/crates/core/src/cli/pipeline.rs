//! Mode dispatch and the worker pool.
//!
//! Files are handed to the pool a chunk at a time; results come back in
//! inventory order and are merged by a single collator, so every artifact
//! is independent of the worker count.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::{Mode, Progress, RunConfig, RunError, RunReport};
use crate::classify::{
    self, load_class_list, load_manifest, predict_batch, validate_bands, Backend, Concurrency,
    DetectionClass, ReferenceBackend, ScoreRow, ScoreTable,
};
use crate::detect::{self, apply_thresholds, ClipLocator};
use crate::inventory::{self, FileRecord, Inventory};
use crate::media_io::{self, resample};
use crate::review::{self, build_review_set, review_clip_path};
use crate::spectro::{
    clip_id, parse_clip_id, read_tile_png, segment_frames, write_tile_png, Clip, SpectroConfig,
    Spectrogram, Tile,
};

/// Files per worker handed out per round; bounds how many tiles are held at once.
const FILES_PER_WORKER: usize = 4;

/// Paths of every artifact under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn inventory(&self) -> PathBuf {
        self.root.join("inventory.csv")
    }
    pub fn tiles_dir(&self) -> PathBuf {
        self.root.join("tiles")
    }
    pub fn tile_path(&self, stem: &str, clip_id: &str) -> PathBuf {
        self.tiles_dir().join(stem).join(format!("{clip_id}.png"))
    }
    pub fn parts_dir(&self) -> PathBuf {
        self.root.join("parts")
    }
    pub fn scores(&self) -> PathBuf {
        self.root.join("scores.csv")
    }
    pub fn detections(&self) -> PathBuf {
        self.root.join("detections.csv")
    }
    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.csv")
    }
    pub fn review_manifest(&self) -> PathBuf {
        self.root.join("review_manifest.csv")
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    layout: Layout,
    progress: Progress,
    report: RunReport,
}

impl Ctx<'_> {
    fn warn(&mut self, message: String) {
        self.progress.warn(&message);
        self.report.warnings.push(message);
    }
}

/// Runs one mode to completion and prints the `DONE` line.
pub fn run(cfg: &RunConfig) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let mut ctx = Ctx {
        cfg,
        layout: Layout::new(&cfg.output_dir),
        progress: Progress::new(cfg.quiet),
        report: RunReport::new(cfg.mode),
    };
    pool.install(|| dispatch(&mut ctx))?;
    ctx.report.elapsed = started.elapsed().as_secs_f64();
    ctx.progress.done(&ctx.report);
    Ok(ctx.report)
}

fn dispatch(ctx: &mut Ctx) -> Result<(), RunError> {
    if ctx.cfg.mode != Mode::Cleanup {
        create_dir(&ctx.layout.root)?;
    }
    match ctx.cfg.mode {
        Mode::Inventory => {
            inventory_stage(ctx, false)?;
        }
        Mode::Spectro => {
            let inv = inventory_stage(ctx, true)?;
            let files = work_list(ctx, &inv)?;
            render_stage(ctx, &inv, &files, None, true, false)?;
        }
        Mode::Predict => {
            let (classes, backend) = load_classes(ctx.cfg)?;
            let inv = inventory_stage(ctx, true)?;
            let files = work_list(ctx, &inv)?;
            let from_disk = ctx.layout.tiles_dir().is_dir();
            let rows = render_stage(ctx, &inv, &files, Some((backend.as_ref(), &classes)), false, from_disk)?;
            score_table(ctx, &classes, rows)?;
        }
        Mode::Process => {
            let (classes, backend) = load_classes(ctx.cfg)?;
            let inv = inventory_stage(ctx, false)?;
            let files = work_list(ctx, &inv)?;
            let keep = ctx.cfg.keep_spectrograms;
            let rows = render_stage(ctx, &inv, &files, Some((backend.as_ref(), &classes)), keep, false)?;
            let table = score_table(ctx, &classes, rows)?;
            detect_stage(ctx, &inv, &classes, &table, false)?;
        }
        Mode::Combine => combine_stage(ctx)?,
        Mode::Review => {
            let (classes, _) = load_classes(ctx.cfg)?;
            let inv = inventory_stage(ctx, true)?;
            let path = ctx.layout.scores();
            if !path.is_file() {
                return Err(RunError::MissingInput(path));
            }
            let table = classify::read_scores(&path)?;
            detect_stage(ctx, &inv, &classes, &table, true)?;
        }
        Mode::Cleanup => cleanup_stage(ctx)?,
    }
    Ok(())
}

fn create_dir(path: &Path) -> Result<(), RunError> {
    fs::create_dir_all(path).map_err(|source| RunError::IoFailure {
        path: path.to_path_buf(),
        source,
    })
}

/// Class list plus backend, from `-c` and/or the backend manifest.
fn load_classes(cfg: &RunConfig) -> Result<(Vec<DetectionClass>, Box<dyn Backend>), RunError> {
    let manifest = cfg.backend_manifest.as_deref().map(load_manifest).transpose()?;
    let list = cfg
        .class_list
        .clone()
        .or_else(|| manifest.as_ref().and_then(|m| m.classes.clone()))
        .ok_or(RunError::NoClassList)?;
    let classes = load_class_list(&list)?;
    validate_bands(&classes, cfg.spectro.working_rate)?;
    let backend = match manifest {
        Some(m) => m.backend(classes.len()),
        None => Box::new(ReferenceBackend::new(classes.len())),
    };
    Ok((classes, backend))
}

/// Scans the target tree, or with `reuse` reads an existing inventory.csv.
fn inventory_stage(ctx: &mut Ctx, reuse: bool) -> Result<Inventory, RunError> {
    let path = ctx.layout.inventory();
    let inv = if reuse && path.is_file() {
        let mut inv = inventory::read_inventory(&path)?;
        inv.target_dir = ctx.cfg.target_dir.clone();
        inv
    } else {
        let inv = inventory::scan_excluding(
            &ctx.cfg.target_dir,
            &ctx.cfg.extensions,
            std::slice::from_ref(&ctx.cfg.output_dir),
        )?;
        inventory::write_inventory(&inv, &path)?;
        inv
    };
    ctx.report.files_seen = inv.len();
    for r in inv.records.iter().filter(|r| !r.is_readable()) {
        ctx.warn(format!("{}: unreadable, skipped", r.path));
    }
    Ok(inv)
}

/// Readable records, dropping any whose stem repeats an earlier one
/// (their clip ids would collide).
fn work_list<'a>(ctx: &mut Ctx, inv: &'a Inventory) -> Result<Vec<&'a FileRecord>, RunError> {
    let mut stems = HashSet::new();
    let mut files = Vec::new();
    for r in inv.records.iter().filter(|r| r.is_readable()) {
        if stems.insert(r.stem()) {
            files.push(r);
        } else {
            ctx.warn(format!("{}: file name stem already used by another recording, skipped", r.path));
        }
    }
    if files.is_empty() {
        return Err(RunError::NothingToProcess(ctx.cfg.target_dir.clone()));
    }
    Ok(files)
}

/// Decodes, resamples and tiles one recording.
fn render_file(inv: &Inventory, rec: &FileRecord, spectro: &Spectrogram) -> Result<Vec<Tile>, RunError> {
    let buf = media_io::decode(inv.absolute_path(rec))?;
    let clips = segment_frames(&rec.path, buf.len() as u64, buf.sample_rate, spectro.config());
    let buf = resample(buf, spectro.config().working_rate);
    Ok(clips.iter().map(|c| spectro.render_clip(&buf.samples, c)).collect())
}

/// Reads a recording's tiles back from `tiles/<stem>/`, in clip order.
fn load_tiles(dir: &Path, rec: &FileRecord, cfg: &SpectroConfig) -> Result<Vec<Tile>, RunError> {
    let entries = fs::read_dir(dir).map_err(|source| RunError::IoFailure {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut indices: Vec<usize> = entries
        .filter_map(Result::ok)
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let id = name.strip_suffix(".png")?;
            parse_clip_id(id)
                .filter(|(stem, _)| *stem == rec.stem())
                .map(|(_, index)| index)
        })
        .collect();
    indices.sort_unstable();
    indices
        .into_iter()
        .map(|index| {
            let clip = Clip {
                source: rec.path.clone(),
                index,
                start: index as f64 * cfg.clip_length,
                length: cfg.clip_length,
                pad: 0.0,
            };
            let path = dir.join(format!("{}.png", clip_id(rec.stem(), index)));
            Ok(read_tile_png(&path, clip, cfg.bin_hz())?)
        })
        .collect()
}

struct FileOutput {
    clips: usize,
    tiles: Vec<Tile>,
    rows: Option<Vec<ScoreRow>>,
}

/// Tiles every file (from disk when `from_disk` and present), optionally
/// writing PNGs and scoring. Failed files are warned about and skipped.
fn render_stage(
    ctx: &mut Ctx,
    inv: &Inventory,
    files: &[&FileRecord],
    scoring: Option<(&dyn Backend, &[DetectionClass])>,
    write_tiles: bool,
    from_disk: bool,
) -> Result<Vec<ScoreRow>, RunError> {
    let cfg = &ctx.cfg.spectro;
    let spectro = Spectrogram::new(cfg);
    let layout = ctx.layout.clone();
    let concurrent = scoring.is_some_and(|(b, _)| b.descriptor().concurrency == Concurrency::Concurrent);

    let process_one = |rec: &FileRecord| -> Result<FileOutput, RunError> {
        let disk_dir = layout.tiles_dir().join(rec.stem());
        let tiles = if from_disk && disk_dir.is_dir() {
            load_tiles(&disk_dir, rec, cfg)?
        } else {
            render_file(inv, rec, &spectro)?
        };
        if write_tiles {
            create_dir(&disk_dir)?;
            for t in &tiles {
                write_tile_png(t, &layout.tile_path(rec.stem(), &t.clip.clip_id()))?;
            }
        }
        let rows = match scoring {
            Some((backend, classes)) if concurrent => Some(predict_batch(backend, &tiles, classes)?),
            _ => None,
        };
        Ok(FileOutput {
            clips: tiles.len(),
            tiles: if rows.is_some() { Vec::new() } else { tiles },
            rows,
        })
    };

    let total = files.len();
    let mut done = 0;
    let mut processed = 0;
    let mut rows = Vec::new();
    let chunk = ctx.cfg.workers.max(1) * FILES_PER_WORKER;
    for batch in files.chunks(chunk) {
        let results: Vec<Result<FileOutput, RunError>> = batch.par_iter().map(|r| process_one(r)).collect();
        for (rec, result) in batch.iter().zip(results) {
            done += 1;
            // Single-stream backends are called here, one file at a time.
            let result = result.and_then(|mut out| {
                if let (None, Some((backend, classes))) = (&out.rows, scoring) {
                    out.rows = Some(predict_batch(backend, &out.tiles, classes)?);
                }
                Ok(out)
            });
            match result {
                Ok(out) => {
                    processed += 1;
                    ctx.report.clips_generated += out.clips;
                    rows.extend(out.rows.unwrap_or_default());
                    ctx.progress.file_done(done, total, &rec.path, out.clips);
                }
                Err(e) => ctx.warn(format!("{}: {e}, skipped", rec.path)),
            }
        }
    }
    if processed == 0 {
        return Err(RunError::NothingToProcess(ctx.cfg.target_dir.clone()));
    }
    Ok(rows)
}

/// Sorts, rounds and writes scores.csv.
fn score_table(ctx: &mut Ctx, classes: &[DetectionClass], rows: Vec<ScoreRow>) -> Result<ScoreTable, RunError> {
    ctx.report.rows_scored = rows.len();
    let mut table = ScoreTable::from_classes(classes, rows);
    table.sort();
    table.quantize();
    classify::write_score_table(&table, &ctx.layout.scores())?;
    Ok(table)
}

/// Thresholds, summary and review manifest; with `extract`, review audio too.
fn detect_stage(
    ctx: &mut Ctx,
    inv: &Inventory,
    classes: &[DetectionClass],
    table: &ScoreTable,
    extract: bool,
) -> Result<(), RunError> {
    let codes: Vec<String> = classes.iter().map(|c| c.code.clone()).collect();
    if table.codes != codes {
        return Err(RunError::ClassMismatch {
            expected: codes,
            found: table.codes.clone(),
        });
    }
    let clip_length = ctx.cfg.spectro.clip_length;
    let locator = ClipLocator::from_inventory(inv, clip_length);
    let overrides = ctx.cfg.thresholds.resolve(codes);
    let dets = apply_thresholds(&table.rows, classes, &overrides, &locator)?;
    detect::write_detections(&dets, &ctx.layout.detections())?;
    ctx.report.detections = dets.len();

    let mut clip_counts: BTreeMap<String, usize> = BTreeMap::new();
    for row in &table.rows {
        *clip_counts.entry(locator.locate(&row.clip_id)?.0).or_default() += 1;
    }
    let summary = detect::summarize(&dets, inv, &clip_counts, clip_length)?;
    detect::write_summary(&summary, &ctx.layout.summary())?;

    let mut items = build_review_set(&dets, ctx.cfg.per_class_cap);
    if extract {
        let mut by_source: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, it) in items.iter().enumerate() {
            by_source.entry(&it.source).or_default().push(i);
        }
        let root = &ctx.layout.root;
        let snapshot = &items;
        let results: Vec<(Vec<usize>, Result<(), RunError>)> = by_source
            .into_par_iter()
            .map(|(source, idx)| {
                let run = || -> Result<(), RunError> {
                    let rec = inv
                        .get(source)
                        .ok_or_else(|| detect::DetectError::SourceNotInInventory(source.to_string()))?;
                    let buf = media_io::decode(inv.absolute_path(rec))?;
                    for &i in &idx {
                        let it = &snapshot[i];
                        let index = parse_clip_id(&it.clip_id).map_or(0, |(_, n)| n);
                        let clip = Clip {
                            source: source.to_string(),
                            index,
                            start: it.start,
                            length: clip_length,
                            pad: 0.0,
                        };
                        review::extract_from_buffer(&buf, &clip, &root.join(review_clip_path(it)))?;
                    }
                    Ok(())
                };
                let result = run();
                (idx, result)
            })
            .collect();
        for (idx, result) in results {
            match result {
                Ok(()) => {
                    for i in idx {
                        items[i].clip_audio_path = review_clip_path(&items[i]);
                    }
                }
                Err(e) => {
                    let source = items[idx[0]].source.clone();
                    ctx.warn(format!("{source}: review audio not extracted: {e}"));
                }
            }
        }
    }
    review::write_review_manifest(&items, &ctx.layout.review_manifest())?;
    Ok(())
}

/// Merges `parts/*.csv` (in file-name order) into scores.csv.
fn combine_stage(ctx: &mut Ctx) -> Result<(), RunError> {
    let dir = ctx.layout.parts_dir();
    let mut parts: Vec<PathBuf> = match fs::read_dir(&dir) {
        Ok(entries) => entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect(),
        Err(_) => Vec::new(),
    };
    if parts.is_empty() {
        return Err(RunError::MissingInput(dir));
    }
    parts.sort();
    let table = detect::combine_parts(&parts)?;
    ctx.report.rows_scored = table.rows.len();
    classify::write_score_table(&table, &ctx.layout.scores())?;
    Ok(())
}

fn is_audio(path: &Path, extensions: &std::collections::BTreeSet<String>) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| extensions.contains(&e.to_lowercase()))
}

/// Deletes every non-audio file under `dir`, then any directories left empty.
fn remove_sparing_audio(ctx: &mut Ctx, dir: &Path) -> Result<(), RunError> {
    if !dir.is_dir() {
        return Ok(());
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::IoFailure { path, source }
    };
    let mut spared = 0;
    for entry in walkdir::WalkDir::new(dir).contents_first(true) {
        let entry = entry.map_err(|e| RunError::IoFailure {
            path: dir.to_path_buf(),
            source: e.into(),
        })?;
        let path = entry.path();
        if entry.file_type().is_dir() {
            // Fails harmlessly when spared audio keeps it non-empty.
            let _ = fs::remove_dir(path);
        } else if is_audio(path, &ctx.cfg.extensions) {
            spared += 1;
        } else {
            fs::remove_file(path).map_err(io(path))?;
        }
    }
    if spared > 0 {
        ctx.warn(format!("{}: left {spared} audio file(s) in place", dir.display()));
    }
    Ok(())
}

fn cleanup_stage(ctx: &mut Ctx) -> Result<(), RunError> {
    let tiles = ctx.layout.tiles_dir();
    let parts = ctx.layout.parts_dir();
    remove_sparing_audio(ctx, &tiles)?;
    remove_sparing_audio(ctx, &parts)?;
    Ok(())
}
