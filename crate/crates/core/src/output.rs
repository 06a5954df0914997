//! CSV writers for simulation results.
//!
//! `completion_times.csv` is the long-format table consumed by the plotting
//! scripts: one row per (run, iteration, scheme).

use std::io::Write;
use std::path::Path;

use crate::engine::{IterationRecord, SchemeSummary};
use crate::error::{invalid, Result};
use crate::straggler::StragglerState;

pub const RECORD_HEADER: [&str; 6] =
    ["run", "iteration", "scheme", "completion_time", "max_cluster_stragglers", "conflicts"];

pub fn write_records<W: Write>(records: &[IterationRecord], out: W) -> Result<()> {
    if records.is_empty() {
        return Err(invalid("no records to write"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record([
            r.run.to_string(),
            r.iteration.to_string(),
            r.scheme.to_string(),
            format!("{:.17e}", r.completion_time),
            r.max_cluster_stragglers().to_string(),
            r.conflicts.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(records: &[IterationRecord], path: &Path) -> Result<()> {
    write_records(records, std::fs::File::create(path)?)
}

pub fn write_summary<W: Write>(summaries: &[SchemeSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", "mean", "std", "improvement_vs_gcsc"])?;
    for s in summaries {
        w.write_record([
            s.scheme.to_string(),
            s.mean.to_string(),
            s.std.to_string(),
            s.improvement_vs_gcsc.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Straggler trace, one row per (iteration, worker). Iteration 0 is the
/// initial state.
pub fn write_trace<W: Write>(trace: &[StragglerState], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "worker", "straggling", "rate"])?;
    for (t, state) in trace.iter().enumerate() {
        for (k, (&s, &rate)) in state.straggling.iter().zip(&state.rates).enumerate() {
            w.write_record([t.to_string(), k.to_string(), u8::from(s).to_string(), rate.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-iteration cluster membership and straggler count of every
/// clustered scheme whose placement was recorded.
pub fn write_placements<W: Write>(records: &[IterationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "iteration", "scheme", "cluster", "workers", "stragglers"])?;
    for r in records {
        let Some(placement) = &r.placement else { continue };
        for (p, members) in placement.iter().enumerate() {
            let workers = members.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" ");
            let stragglers = r.cluster_stragglers.get(p).copied().unwrap_or(0);
            w.write_record([
                r.run.to_string(),
                r.iteration.to_string(),
                r.scheme.to_string(),
                p.to_string(),
                workers,
                stragglers.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Histogram of the per-iteration maximum stragglers in any one cluster.
pub fn write_straggler_histogram<W: Write>(records: &[IterationRecord], out: W) -> Result<()> {
    use std::collections::BTreeMap;
    let mut counts: BTreeMap<(String, usize), usize> = BTreeMap::new();
    for r in records {
        *counts.entry((r.scheme.to_string(), r.max_cluster_stragglers())).or_default() += 1;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", "max_cluster_stragglers", "count"])?;
    for ((scheme, m), c) in counts {
        w.write_record([scheme, m.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Write the full set of result files into `dir`.
pub fn write_all(dir: &Path, records: &[IterationRecord], summaries: &[SchemeSummary]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(records, &dir.join("completion_times.csv"))?;
    write_summary(summaries, std::fs::File::create(dir.join("summary.csv"))?)?;
    write_straggler_histogram(records, std::fs::File::create(dir.join("straggler_histogram.csv"))?)?;
    if records.iter().any(|r| r.placement.is_some()) {
        write_placements(records, std::fs::File::create(dir.join("placements.csv"))?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Scheme;

    fn rec(run: usize, t: usize, scheme: Scheme, time: f64) -> IterationRecord {
        IterationRecord {
            run,
            iteration: t,
            scheme,
            completion_time: time,
            cluster_stragglers: vec![0, 2, 1],
            conflicts: 1,
            fallback: false,
            recovery_error: None,
            placement: None,
        }
    }

    #[test]
    fn empty_records_are_rejected() {
        assert!(write_records(&[], Vec::new()).is_err());
    }

    #[test]
    fn csv_round_trips_exactly() {
        let records = vec![rec(0, 1, Scheme::GcDc, 0.1 + 0.2), rec(1, 2, Scheme::Lb, 1.0 / 3.0)];
        let mut buf = Vec::new();
        write_records(&records, &mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        assert_eq!(rdr.headers().unwrap(), RECORD_HEADER.as_slice());
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        for (row, r) in rows.iter().zip(&records) {
            assert_eq!(row[0].parse::<usize>().unwrap(), r.run);
            assert_eq!(&row[2], r.scheme.name());
            assert_eq!(row[3].parse::<f64>().unwrap(), r.completion_time);
            assert_eq!(row[4].parse::<usize>().unwrap(), 2);
        }
    }
}
