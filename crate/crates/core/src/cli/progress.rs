use super::RunReport;

/// Status output: per-file lines and warnings on stderr, the final summary on stdout.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    quiet: bool,
}

impl Progress {
    pub fn new(quiet: bool) -> Self {
        Self { quiet }
    }

    pub fn file_done(&self, done: usize, total: usize, path: &str, clips: usize) {
        if !self.quiet {
            eprintln!("[{done}/{total}] {path}: {clips} clips");
        }
    }

    /// Warnings are printed even when quiet.
    pub fn warn(&self, message: &str) {
        eprintln!("warning: {message}");
    }

    pub fn done(&self, report: &RunReport) {
        println!("{}", done_line(report));
    }
}

/// `DONE files=<n> clips=<n> detections=<n> elapsed_s=<t>`
pub fn done_line(report: &RunReport) -> String {
    format!(
        "DONE files={} clips={} detections={} elapsed_s={:.3}",
        report.files_seen,
        report.clips_generated,
        report.detections,
        report.elapsed.max(0.0)
    )
}
