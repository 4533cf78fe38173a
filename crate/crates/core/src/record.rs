//! Photon emission records and their CSV form.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Channel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub time: f64,
    pub channel: Channel,
}

/// Time-ordered emissions of one trajectory observed over `[0, t_max]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmissionRecord {
    pub t_max: f64,
    pub events: Vec<Emission>,
}

impl EmissionRecord {
    pub fn new(t_max: f64) -> Self {
        EmissionRecord {
            t_max,
            events: Vec::new(),
        }
    }

    pub fn push(&mut self, time: f64, channel: Channel) {
        self.events.push(Emission { time, channel });
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn count(&self, channel: Channel) -> usize {
        self.events.iter().filter(|e| e.channel == channel).count()
    }

    pub fn times(&self, channel: Channel) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.channel == channel)
            .map(|e| e.time)
            .collect()
    }

    /// Times nondecreasing and within `[0, t_max]`.
    pub fn is_valid(&self) -> bool {
        self.events.windows(2).all(|w| w[0].time <= w[1].time)
            && self
                .events
                .iter()
                .all(|e| e.time.is_finite() && e.time >= 0.0 && e.time <= self.t_max)
    }
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
}

#[derive(Serialize, Deserialize)]
struct Row {
    trajectory_id: u64,
    time: String,
    channel: String,
}

/// Writes `trajectory_id,time,channel` rows in trajectory order. Times use
/// the shortest decimal that reads back to the same value.
pub fn write_emissions_csv<W: Write>(out: W, ensemble: &[EmissionRecord]) -> Result<(), RecordError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trajectory_id", "time", "channel"])?;
    for (id, record) in ensemble.iter().enumerate() {
        for e in &record.events {
            w.write_record([id.to_string(), format!("{}", e.time), e.channel.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads rows back, grouped by trajectory id. Trajectories without
/// emissions do not appear.
pub fn read_emissions_csv<R: Read>(input: R) -> Result<BTreeMap<u64, Vec<Emission>>, RecordError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out: BTreeMap<u64, Vec<Emission>> = BTreeMap::new();
    for (i, row) in r.deserialize::<Row>().enumerate() {
        let row = row?;
        let time: f64 = row.time.parse().map_err(|_| RecordError::Row {
            row: i + 1,
            reason: format!("bad time `{}`", row.time),
        })?;
        let channel: Channel = row.channel.parse().map_err(|reason| RecordError::Row { row: i + 1, reason })?;
        out.entry(row.trajectory_id).or_default().push(Emission { time, channel });
    }
    Ok(out)
}

/// Rebuilds `n` records from grouped rows.
pub fn assemble_records(
    rows: BTreeMap<u64, Vec<Emission>>,
    n: usize,
    t_max: f64,
) -> Vec<EmissionRecord> {
    let mut out: Vec<EmissionRecord> = (0..n).map(|_| EmissionRecord::new(t_max)).collect();
    for (id, events) in rows {
        let id = id as usize;
        if id >= out.len() {
            out.resize_with(id + 1, || EmissionRecord::new(t_max));
        }
        out[id].events = events;
    }
    out
}
