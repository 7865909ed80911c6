//! Per-epoch metrics records and their CSV form.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub run_id: String,
    pub epoch: u64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub quality_metric: f64,
    pub variability: f64,
    pub n_levels: u32,
    pub wall_seconds: f64,
}

/// Append-only record set with at most one record per (run, epoch).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    records: Vec<MetricsRecord>,
}

impl MetricsLog {
    pub fn push(&mut self, r: MetricsRecord) -> Result<()> {
        if self.records.iter().any(|o| o.run_id == r.run_id && o.epoch == r.epoch) {
            return Err(Error::Config(format!(
                "duplicate metrics record for run {} epoch {}",
                r.run_id, r.epoch
            )));
        }
        self.records.push(r);
        Ok(())
    }

    pub fn extend(&mut self, rs: impl IntoIterator<Item = MetricsRecord>) -> Result<()> {
        rs.into_iter().try_for_each(|r| self.push(r))
    }

    pub fn records(&self) -> &[MetricsRecord] {
        &self.records
    }

    /// CSV text. Wall-clock time is a column only when `wall_clock` is set,
    /// since it differs between otherwise identical runs.
    pub fn to_csv(&self, wall_clock: bool) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![
            "run_id",
            "epoch",
            "d_loss",
            "g_loss",
            "quality_metric",
            "variability",
            "n_levels",
        ];
        if wall_clock {
            header.push("wall_seconds");
        }
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.run_id.clone(),
                r.epoch.to_string(),
                r.d_loss.to_string(),
                r.g_loss.to_string(),
                r.quality_metric.to_string(),
                r.variability.to_string(),
                r.n_levels.to_string(),
            ];
            if wall_clock {
                row.push(r.wall_seconds.to_string());
            }
            w.write_record(&row)?;
        }
        w.into_inner().map_err(|e| Error::Config(format!("CSV buffer: {e}")))
    }

    pub fn write_csv(&self, path: &Path, wall_clock: bool) -> Result<()> {
        let bytes = self.to_csv(wall_clock)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Writes a CSV with one header row.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(run: &str, epoch: u64) -> MetricsRecord {
        MetricsRecord {
            run_id: run.into(),
            epoch,
            d_loss: 1.5,
            g_loss: 0.25,
            quality_metric: 123.0,
            variability: 0.3,
            n_levels: 128,
            wall_seconds: 9.75,
        }
    }

    #[test]
    fn one_record_per_run_epoch() {
        let mut log = MetricsLog::default();
        log.push(rec("a", 1)).unwrap();
        log.push(rec("a", 2)).unwrap();
        log.push(rec("b", 1)).unwrap();
        assert!(log.push(rec("a", 1)).is_err());
        assert_eq!(log.records().len(), 3);
    }

    #[test]
    fn csv_columns() {
        let mut log = MetricsLog::default();
        log.push(rec("a", 1)).unwrap();
        let text = String::from_utf8(log.to_csv(false).unwrap()).unwrap();
        assert_eq!(
            text,
            "run_id,epoch,d_loss,g_loss,quality_metric,variability,n_levels\na,1,1.5,0.25,123,0.3,128\n"
        );
        let text = String::from_utf8(log.to_csv(true).unwrap()).unwrap();
        assert!(text.lines().next().unwrap().ends_with(",wall_seconds"));
        assert!(text.ends_with(",9.75\n"));
    }
}
