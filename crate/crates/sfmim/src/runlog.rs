//! Run directories, the metrics stream and checkpoint emission.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sfmim_core::model::ModelState;
use sfmim_core::trainer::{Observer, StepRecord};

use crate::checkpoint::save_checkpoint;
use crate::config::RunConfig;
use crate::{Error, Result};

pub const CONFIG_FILE: &str = "config.cfg";
pub const METRICS_FILE: &str = "metrics.tsv";

/// `step<TAB>lr<TAB>loss_total<TAB>loss_spa<TAB>loss_freq`
pub fn format_record(r: &StepRecord) -> String {
    format!("{}\t{}\t{}\t{}\t{}", r.step, r.lr, r.loss.total, r.loss.spatial, r.loss.frequency)
}

/// Parses one metrics line back into `(step, [lr, total, spatial, frequency])`.
pub fn parse_record(line: &str) -> Option<(usize, [f64; 4])> {
    let mut it = line.split('\t');
    let step = it.next()?.parse().ok()?;
    let mut vals = [0.0; 4];
    for v in &mut vals {
        *v = it.next()?.parse().ok()?;
    }
    it.next().is_none().then_some((step, vals))
}

/// Creates `<out>/run-<unix seconds>-seed<seed>`, suffixed `-2`, `-3`, ...
/// when the name is taken, and writes the resolved config into it.
pub fn create_run_dir(out: &Path, cfg: &RunConfig) -> Result<PathBuf> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let base = format!("run-{secs}-seed{}", cfg.seed);
    let mut dir = out.join(&base);
    let mut n = 1;
    loop {
        match fs::create_dir(&dir) {
            Ok(()) => break,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                n += 1;
                dir = out.join(format!("{base}-{n}"));
            }
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    let cfg_path = dir.join(CONFIG_FILE);
    fs::write(&cfg_path, cfg.snapshot()).map_err(|e| Error::io(&cfg_path, e))?;
    Ok(dir)
}

pub fn checkpoint_name(step: usize) -> String {
    format!("step-{step:06}.ckpt")
}

/// Streams step records to the metrics file and saves every checkpoint the
/// trainer hands over as `step-NNNNNN.ckpt`.
pub struct RunLog {
    dir: PathBuf,
    metrics: BufWriter<File>,
}

impl RunLog {
    pub fn create(dir: &Path) -> Result<Self> {
        let path = dir.join(METRICS_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            metrics: BufWriter::new(file),
        })
    }

    pub fn flush(&mut self) -> Result<()> {
        let path = self.dir.join(METRICS_FILE);
        self.metrics.flush().map_err(|e| Error::io(path, e))
    }
}

fn core_err(e: Error) -> sfmim_core::Error {
    sfmim_core::Error::Source(e.to_string())
}

impl Observer for RunLog {
    fn on_step(&mut self, record: &StepRecord) -> sfmim_core::Result<()> {
        writeln!(self.metrics, "{}", format_record(record))
            .map_err(|e| core_err(Error::io(self.dir.join(METRICS_FILE), e)))
    }

    fn on_checkpoint(&mut self, completed: usize, state: &ModelState) -> sfmim_core::Result<()> {
        save_checkpoint(&self.dir.join(checkpoint_name(completed)), state, completed).map_err(core_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sfmim_core::losses::LossValue;

    #[test]
    fn record_round_trip() {
        let r = StepRecord {
            step: 3,
            lr: 1e-3 / 3.0,
            loss: LossValue {
                total: 12.5,
                spatial: 0.1,
                frequency: 31.0,
                lambda: 0.4,
            },
        };
        let line = format_record(&r);
        assert_eq!(line.split('\t').count(), 5);
        let (step, v) = parse_record(&line).unwrap();
        assert_eq!(step, 3);
        assert_eq!(v, [r.lr, 12.5, 0.1, 31.0]);
        assert!(parse_record("1\t2").is_none());
    }

    #[test]
    fn run_dirs_are_unique_and_hold_config() {
        let out = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let a = create_run_dir(out.path(), &cfg).unwrap();
        let b = create_run_dir(out.path(), &cfg).unwrap();
        assert_ne!(a, b);
        let name = a.file_name().unwrap().to_str().unwrap().to_string();
        assert!(name.starts_with("run-") && name.contains("-seed0"), "{name}");
        let text = fs::read_to_string(a.join(CONFIG_FILE)).unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
