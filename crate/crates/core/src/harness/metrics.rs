use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 10] = [
    "epoch",
    "env_steps",
    "success_rate",
    "mean_final_distance",
    "expected_distance",
    "critic_loss",
    "actor_q_term",
    "sl_loss",
    "model_loss",
    "mean_relabel_goal_distance",
];

/// One evaluation row. Loss columns are means over the epoch's updates and
/// are zero for components the algorithm does not train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub env_steps: u64,
    pub success_rate: f64,
    pub mean_final_distance: f64,
    pub expected_distance: f64,
    pub critic_loss: f64,
    pub actor_q_term: f64,
    pub sl_loss: f64,
    pub model_loss: f64,
    /// Mean `‖g′ − g‖` over rows relabeled this epoch; zero when none were.
    pub mean_relabel_goal_distance: f64,
}

pub fn write_metrics(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    if rows.is_empty() {
        writer.write_record(METRICS_HEADER)?;
    }
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_HEADER {
        return Err(Error::InvalidArgument(format!(
            "{} does not carry the metrics header",
            path.display()
        )));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// A relabeled goal recorded for the goal-distribution dump.
#[derive(Debug, Clone, PartialEq)]
pub struct RelabelRecord {
    pub epoch: usize,
    pub original_goal: Vec<f64>,
    pub goal: Vec<f64>,
    pub distance: f64,
    /// Rollout depth picked by model-based relabeling.
    pub candidate: Option<usize>,
}

pub fn relabel_header(goal_dim: usize) -> Vec<String> {
    let mut header = vec!["epoch".to_string()];
    header.extend((0..goal_dim).map(|i| format!("original_goal_{i}")));
    header.extend((0..goal_dim).map(|i| format!("relabel_goal_{i}")));
    header.push("distance".into());
    header.push("candidate".into());
    header
}

/// Appends relabel records to an open CSV writer.
pub struct RelabelDump {
    writer: csv::Writer<File>,
}

impl RelabelDump {
    pub fn create(path: impl AsRef<Path>, goal_dim: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(relabel_header(goal_dim))?;
        Ok(Self { writer })
    }

    pub fn append(&mut self, records: &[RelabelRecord]) -> Result<()> {
        for r in records {
            let mut fields = vec![r.epoch.to_string()];
            fields.extend(r.original_goal.iter().map(f64::to_string));
            fields.extend(r.goal.iter().map(f64::to_string));
            fields.push(r.distance.to_string());
            fields.push(r.candidate.map(|c| c.to_string()).unwrap_or_default());
            self.writer.write_record(&fields)?;
        }
        self.writer.flush().map_err(|e| Error::io("relabel dump", e))
    }
}

pub fn read_relabel_dump(path: impl AsRef<Path>) -> Result<(usize, Vec<RelabelRecord>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let width = reader.headers()?.len();
    if width < 4 || (width - 3) % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "{} has {width} columns, not a relabel dump",
            path.display()
        )));
    }
    let goal_dim = (width - 3) / 2;
    if reader.headers()?.iter().collect::<Vec<_>>() != relabel_header(goal_dim) {
        return Err(Error::InvalidArgument(format!(
            "{} does not carry the relabel dump header",
            path.display()
        )));
    }
    let parse = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::InvalidArgument(format!("bad number `{s}` in {}", path.display())))
    };
    let mut records = Vec::new();
    for record in reader.records() {
        let record = record?;
        let epoch = record[0]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad epoch `{}`", &record[0])))?;
        let values: Vec<f64> = (1..=2 * goal_dim + 1)
            .map(|i| parse(&record[i]))
            .collect::<Result<_>>()?;
        let candidate = match &record[width - 1] {
            "" => None,
            s => Some(s.parse().map_err(|_| Error::InvalidArgument(format!("bad candidate `{s}`")))?),
        };
        records.push(RelabelRecord {
            epoch,
            original_goal: values[..goal_dim].to_vec(),
            goal: values[goal_dim..2 * goal_dim].to_vec(),
            distance: values[2 * goal_dim],
            candidate,
        });
    }
    Ok((goal_dim, records))
}
