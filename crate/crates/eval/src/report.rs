//! Metric tables: one row per task, one column per modality plus `Avg`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use mmsense_data::ModalityKind;
use serde::{Deserialize, Serialize};

use crate::error::{MetricError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Recognition,
    Qa,
    Caption,
    Silhouette,
    AlignmentGap,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::Recognition,
        Task::Qa,
        Task::Caption,
        Task::Silhouette,
        Task::AlignmentGap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Recognition => "recognition",
            Task::Qa => "qa",
            Task::Caption => "caption",
            Task::Silhouette => "silhouette",
            Task::AlignmentGap => "alignment_gap",
        }
    }

    pub fn is_diagnostic(self) -> bool {
        matches!(self, Task::Silhouette | Task::AlignmentGap)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "recognition" | "har" => Ok(Task::Recognition),
            "qa" => Ok(Task::Qa),
            "caption" | "captions" => Ok(Task::Caption),
            "silhouette" | "cluster" => Ok(Task::Silhouette),
            "alignment_gap" | "alignment" => Ok(Task::AlignmentGap),
            other => Err(MetricError::Invalid(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub modality: ModalityKind,
    pub score: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub task: Task,
    pub cells: Vec<Cell>,
    /// Arithmetic mean of `cells[..].score`.
    pub avg: f64,
}

impl MetricRow {
    pub fn new(task: Task, cells: Vec<Cell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(MetricError::Empty);
        }
        let avg = cells.iter().map(|c| c.score).sum::<f64>() / cells.len() as f64;
        Ok(Self { task, cells, avg })
    }

    pub fn score(&self, modality: ModalityKind) -> Option<f64> {
        self.cells.iter().find(|c| c.modality == modality).map(|c| c.score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: String,
    pub setting: String,
    pub config_hash: String,
    pub modalities: Vec<ModalityKind>,
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn new(dataset: &str, setting: &str, config_hash: &str, modalities: &[ModalityKind]) -> Self {
        Self {
            dataset: dataset.into(),
            setting: setting.into(),
            config_hash: config_hash.into(),
            modalities: modalities.to_vec(),
            rows: Vec::new(),
        }
    }

    /// Adds a row; `cells` must cover exactly the report's modalities, in order.
    pub fn push(&mut self, task: Task, cells: Vec<Cell>) -> Result<()> {
        let order: Vec<ModalityKind> = cells.iter().map(|c| c.modality).collect();
        if order != self.modalities {
            return Err(MetricError::Invalid(format!(
                "{task} row covers {order:?}, report expects {:?}",
                self.modalities
            )));
        }
        if self.row(task).is_some() {
            return Err(MetricError::Invalid(format!("duplicate {task} row")));
        }
        self.rows.push(MetricRow::new(task, cells)?);
        Ok(())
    }

    pub fn row(&self, task: Task) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.task == task)
    }

    /// Keeps only rows whose task is in `tasks`.
    pub fn restrict(&mut self, tasks: &[Task]) {
        self.rows.retain(|r| tasks.contains(&r.task));
    }

    /// Header: `task, <modality short names>..., Avg, n_<modality>...`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["task".to_string()];
        header.extend(self.modalities.iter().map(|m| m.short().to_string()));
        header.push("Avg".into());
        header.extend(self.modalities.iter().map(|m| format!("n_{}", m.short())));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.task.name().to_string()];
            rec.extend(r.cells.iter().map(|c| c.score.to_string()));
            rec.push(r.avg.to_string());
            rec.extend(r.cells.iter().map(|c| c.count.to_string()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| MetricError::Invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        r.check()?;
        Ok(r)
    }

    /// Verifies every stored `avg` against its row within 1e-12.
    pub fn check(&self) -> Result<()> {
        for r in &self.rows {
            let fresh = MetricRow::new(r.task, r.cells.clone())?;
            if (fresh.avg - r.avg).abs() > 1e-12 {
                return Err(MetricError::Invalid(format!(
                    "{} Avg {} disagrees with row mean {}",
                    r.task, r.avg, fresh.avg
                )));
            }
        }
        Ok(())
    }

    /// Writes `<stem>.csv` and `<stem>.json` under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv()?)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json()?)?;
        Ok(())
    }
}

/// Labelled rows against named columns, e.g. an ablation comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, label: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.columns.len() {
            return Err(MetricError::Length(values.len(), self.columns.len()));
        }
        self.rows.push((label.into(), values));
        Ok(())
    }

    pub fn get(&self, label: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.iter().find(|(l, _)| l == label).map(|(_, v)| v[c])
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["row".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (label, values) in &self.rows {
            let mut rec = vec![label.clone()];
            rec.extend(values.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| MetricError::Invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv()?)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(scores: &[f64]) -> Vec<Cell> {
        [ModalityKind::Video, ModalityKind::MmWave, ModalityKind::WifiCsi]
            .iter()
            .zip(scores)
            .map(|(&modality, &score)| Cell {
                modality,
                score,
                count: 10,
            })
            .collect()
    }

    fn report() -> MetricReport {
        let mods = [ModalityKind::Video, ModalityKind::MmWave, ModalityKind::WifiCsi];
        let mut r = MetricReport::new("desk", "cross-env", "abc", &mods);
        r.push(Task::Recognition, cells(&[0.9, 0.6, 0.3])).unwrap();
        r.push(Task::Qa, cells(&[0.5, 0.25, 0.0])).unwrap();
        r
    }

    #[test]
    fn avg_and_layout() {
        let r = report();
        assert!((r.row(Task::Recognition).unwrap().avg - 0.6).abs() < 1e-12);
        let csv = r.to_csv().unwrap();
        assert!(csv.starts_with("task,V,M,W,Avg,n_V,n_M,n_W\n"), "{csv}");
        assert_eq!(MetricReport::from_json(&r.to_json().unwrap()).unwrap(), r);
    }

    #[test]
    fn push_rejects_mismatched_rows() {
        let mut r = report();
        assert!(r.push(Task::Qa, cells(&[0.0, 0.0, 0.0])).is_err());
        assert!(r.push(Task::Caption, cells(&[0.0, 0.0])).is_err());
        let mut bad = r.clone();
        bad.rows[0].avg += 1e-9;
        assert!(MetricReport::from_json(&bad.to_json().unwrap()).is_err());
    }

    #[test]
    fn restrict_keeps_selected() {
        let mut r = report();
        r.restrict(&["qa".parse().unwrap()]);
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].task, Task::Qa);
    }

    #[test]
    fn table_export() {
        let mut t = Table::new(vec!["V".into(), "Avg".into()]);
        t.push("Baseline", vec![0.5, 0.5]).unwrap();
        assert!(t.push("x", vec![1.0]).is_err());
        assert_eq!(t.get("Baseline", "Avg"), Some(0.5));
        assert_eq!(t.to_csv().unwrap(), "row,V,Avg\nBaseline,0.5,0.5\n");
    }
}
