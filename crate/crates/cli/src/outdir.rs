//! Run directories: every command writes its artifacts under one directory,
//! either named explicitly with `--out` or created fresh as
//! `<label>-<timestamp>` under the output root.

use std::path::{Path, PathBuf};

use tripatch_core::{Error, Result, TrainConfig};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "TRIPATCH_OUT_ROOT";

/// Resolves the directory a run writes into. An explicit `--out` is used as
/// given (created if missing). Otherwise a fresh timestamped directory is
/// created under `--out-root`, falling back to `$TRIPATCH_OUT_ROOT`, then
/// `./runs`.
pub fn run_dir(out: Option<&Path>, out_root: Option<&Path>, label: &str) -> Result<PathBuf> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::ingest(dir, format!("cannot create output dir: {e}")))?;
        return Ok(dir.to_path_buf());
    }
    let root = out_root
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    std::fs::create_dir_all(&root)
        .map_err(|e| Error::ingest(&root, format!("cannot create output root: {e}")))?;
    let stamp = timestamp();
    for k in 0..1000 {
        let name = if k == 0 {
            format!("{label}-{stamp}")
        } else {
            format!("{label}-{stamp}-{k}")
        };
        let dir = root.join(&name);
        // create_dir (not _all) is the existence check: a name in use fails
        // and the next suffix is tried, so concurrent runs never collide.
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::ingest(&dir, format!("cannot create run dir: {e}"))),
        }
    }
    Err(Error::ingest(&root, "no free run directory name after 1000 tries".to_string()))
}

/// Writes the fully resolved configuration next to the run's artifacts, so
/// any output directory is self-describing and reproducible.
pub fn snapshot_config(dir: &Path, cfg: &TrainConfig) -> Result<()> {
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml())
        .map_err(|e| Error::ingest(&path, format!("cannot write config snapshot: {e}")))
}

/// `YYYYMMDD-HHMMSS` in UTC for the current moment.
pub fn timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format_utc(secs)
}

fn format_utc(secs: u64) -> String {
    let days = (secs / 86_400) as i64;
    let rem = secs % 86_400;
    let (y, m, d) = civil_from_days(days);
    format!("{y:04}{m:02}{d:02}-{:02}{:02}{:02}", rem / 3600, (rem / 60) % 60, rem % 60)
}

/// Proleptic Gregorian date for a day count since 1970-01-01 (days-to-civil,
/// era decomposition over 400-year cycles).
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = (z - era * 146_097) as u64;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe as i64 + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_formats_as_nineteen_seventy() {
        assert_eq!(format_utc(0), "19700101-000000");
    }

    #[test]
    fn known_second_formats_correctly() {
        // 1_000_000_000 seconds after the epoch.
        assert_eq!(format_utc(1_000_000_000), "20010909-014640");
    }

    #[test]
    fn leap_day_is_handled() {
        // 2000-02-29 00:00:00 UTC.
        assert_eq!(format_utc(951_782_400), "20000229-000000");
    }

    #[test]
    fn explicit_out_is_used_verbatim() {
        let tmp = tempfile::tempdir().unwrap();
        let want = tmp.path().join("exact");
        let got = run_dir(Some(&want), None, "pretrain").unwrap();
        assert_eq!(got, want);
        assert!(want.is_dir());
    }

    #[test]
    fn timestamped_dirs_never_collide() {
        let tmp = tempfile::tempdir().unwrap();
        let a = run_dir(None, Some(tmp.path()), "x").unwrap();
        let b = run_dir(None, Some(tmp.path()), "x").unwrap();
        assert_ne!(a, b);
        assert!(a.is_dir() && b.is_dir());
        assert!(a.file_name().unwrap().to_string_lossy().starts_with("x-"));
    }

    #[test]
    fn snapshot_round_trips() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = TrainConfig::default();
        snapshot_config(tmp.path(), &cfg).unwrap();
        let text = std::fs::read_to_string(tmp.path().join("config.toml")).unwrap();
        let back: TrainConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
