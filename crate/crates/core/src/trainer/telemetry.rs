//! Loss and update-count telemetry.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Which network an update touched.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Net {
    D0,
    G0,
    Dc,
    Gc,
}

impl Net {
    pub const ALL: [Net; 4] = [Net::D0, Net::G0, Net::Dc, Net::Gc];

    pub fn name(self) -> &'static str {
        match self {
            Net::D0 => "d0",
            Net::G0 => "g0",
            Net::Dc => "dc",
            Net::Gc => "gc",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    fn counter_name(self) -> &'static str {
        match self {
            Net::D0 => "updates_d0",
            Net::G0 => "updates_g0",
            Net::Dc => "updates_dc",
            Net::Gc => "updates_gc",
        }
    }
}

/// Optimizer updates per network within one stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UpdateCounts([u64; 4]);

impl UpdateCounts {
    pub fn get(&self, net: Net) -> u64 {
        self.0[net.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    /// Generator-step index, counted across stages.
    pub step: u64,
    pub stage: u8,
    pub name: &'static str,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Telemetry {
    records: Vec<Record>,
    counts: [UpdateCounts; 3],
    step: u64,
}

impl Telemetry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, stage: u8, name: &'static str, value: f64) {
        self.records.push(Record {
            step: self.step,
            stage,
            name,
            value,
        });
    }

    pub fn count_update(&mut self, stage: u8, net: Net) {
        self.counts[stage as usize - 1].0[net.index()] += 1;
    }

    /// Advances the generator-step index.
    pub fn next_step(&mut self) {
        self.step += 1;
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Writes the running update counters for `stage` as records.
    pub fn checkpoint_counts(&mut self, stage: u8) {
        let counts = self.counts[stage as usize - 1];
        for net in Net::ALL {
            self.record(stage, net.counter_name(), counts.get(net) as f64);
        }
    }

    pub fn counts(&self, stage: u8) -> UpdateCounts {
        self.counts[stage as usize - 1]
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    /// Values of `name` in stage `stage`, in order.
    pub fn series(&self, stage: u8, name: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.stage == stage && r.name == name)
            .map(|r| r.value)
            .collect()
    }

    /// `step,stage,loss,value` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,stage,loss,value\n");
        for r in &self.records {
            writeln!(out, "{},{},{},{:?}", r.step, r.stage, r.name, r.value).unwrap();
        }
        out
    }
}

/// Final update counters per stage, read back from telemetry CSV text.
/// Stages without counter rows are absent.
pub fn counts_from_csv(text: &str) -> Result<Vec<(u8, UpdateCounts)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut per_stage: [Option<UpdateCounts>; 3] = [None; 3];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Format(format!("telemetry csv: {e}")))?;
        if rec.len() != 4 {
            return Err(Error::Format("telemetry rows need 4 fields".into()));
        }
        let stage: u8 = rec[1].parse().map_err(|_| Error::Format(format!("bad stage {:?}", &rec[1])))?;
        if !(1..=3).contains(&stage) {
            return Err(Error::Format(format!("bad stage {stage}")));
        }
        let Some(net) = Net::ALL.into_iter().find(|n| n.counter_name() == &rec[2]) else {
            continue;
        };
        let value: f64 = rec[3].parse().map_err(|_| Error::Format(format!("bad value {:?}", &rec[3])))?;
        let slot = per_stage[stage as usize - 1].get_or_insert_with(UpdateCounts::default);
        slot.0[net.index()] = value as u64;
    }
    Ok(per_stage
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|c| (i as u8 + 1, c)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counters_round_trip_through_csv() {
        let mut t = Telemetry::new();
        for _ in 0..5 {
            t.count_update(1, Net::D0);
        }
        t.count_update(1, Net::G0);
        t.record(1, "g0_loss", -0.25);
        t.next_step();
        t.checkpoint_counts(1);
        t.count_update(3, Net::Gc);
        t.checkpoint_counts(3);
        let csv = t.to_csv();
        assert!(csv.starts_with("step,stage,loss,value\n0,1,g0_loss,-0.25\n1,1,updates_d0,5.0\n"), "{csv}");
        let counts = counts_from_csv(&csv).unwrap();
        assert_eq!(counts.len(), 2);
        assert_eq!(counts[0].0, 1);
        assert_eq!(counts[0].1.get(Net::D0), 5);
        assert_eq!(counts[0].1.get(Net::G0), 1);
        assert_eq!(counts[1].1.get(Net::Gc), 1);
        assert_eq!(t.series(1, "g0_loss"), vec![-0.25]);
    }

    #[test]
    fn malformed_csv_rejected() {
        assert!(counts_from_csv("step,stage,loss,value\n0,9,updates_d0,1\n").is_err());
        assert!(counts_from_csv("step,stage,loss,value\n0,1,updates_d0,x\n").is_err());
    }
}
