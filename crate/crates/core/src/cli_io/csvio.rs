//! Results and aggregate tables.
//!
//! Reals are written with the shortest representation that parses back to the
//! same `f64`; excluded values are written as an empty field.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::harness::{AggregateRecord, RunRecord, Status};

pub const RESULTS_HEADER: [&str; 9] = [
    "experiment",
    "run_index",
    "bias_level",
    "model_variant",
    "split",
    "group",
    "metric",
    "value",
    "status",
];

pub const AGGREGATES_HEADER: [&str; 10] = [
    "experiment",
    "bias_level",
    "model_variant",
    "split",
    "group",
    "metric",
    "mean",
    "std",
    "count",
    "excluded",
];

fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn parse_real(s: &str, line: u64, column: &str) -> Result<f64> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse().with_context(|| format!("line {line}: bad {column} `{s}`"))
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// Writes `records` in canonical row order.
pub fn write_results<W: Write>(records: &[RunRecord], w: W) -> Result<()> {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.sort_key_cmp(b));
    let mut out = writer(w);
    out.write_record(RESULTS_HEADER)?;
    for r in sorted {
        out.write_record([
            r.experiment.as_str(),
            &r.run_index.to_string(),
            &fmt_real(r.bias_level),
            r.model_variant.as_str(),
            r.split.as_str(),
            r.group.as_str(),
            r.metric.as_str(),
            &fmt_real(r.value),
            r.status.as_str(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn emit_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut buf = BufWriter::new(f);
    write_results(records, &mut buf)?;
    buf.flush()?;
    Ok(())
}

fn reader<R: Read>(r: R, expected: &[&str]) -> Result<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != expected {
        bail!("unexpected header `{}`, expected `{}`", header.join(","), expected.join(","));
    }
    Ok(rdr)
}

pub fn parse_results<R: Read>(r: R) -> Result<Vec<RunRecord>> {
    let mut rdr = reader(r, &RESULTS_HEADER)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != RESULTS_HEADER.len() {
            bail!("line {line}: expected {} fields, got {}", RESULTS_HEADER.len(), row.len());
        }
        let field = |i: usize| &row[i];
        let status: Status = field(8).parse()?;
        out.push(RunRecord {
            experiment: field(0).to_string(),
            run_index: field(1)
                .parse()
                .with_context(|| format!("line {line}: bad run_index `{}`", field(1)))?,
            bias_level: parse_real(field(2), line, "bias_level")?,
            model_variant: field(3).parse()?,
            split: field(4).parse()?,
            group: field(5).parse()?,
            metric: field(6).parse()?,
            value: parse_real(field(7), line, "value")?,
            status,
        });
    }
    Ok(out)
}

pub fn read_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_results(f).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_aggregates<W: Write>(aggs: &[AggregateRecord], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(AGGREGATES_HEADER)?;
    for a in aggs {
        out.write_record([
            a.experiment.as_str(),
            &fmt_real(a.bias_level),
            a.model_variant.as_str(),
            a.split.as_str(),
            a.group.as_str(),
            a.metric.as_str(),
            &fmt_real(a.mean),
            &fmt_real(a.std),
            &a.count.to_string(),
            &a.excluded.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn emit_aggregates(aggs: &[AggregateRecord], path: &Path) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut buf = BufWriter::new(f);
    write_aggregates(aggs, &mut buf)?;
    buf.flush()?;
    Ok(())
}

pub fn parse_aggregates<R: Read>(r: R) -> Result<Vec<AggregateRecord>> {
    let mut rdr = reader(r, &AGGREGATES_HEADER)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != AGGREGATES_HEADER.len() {
            bail!("line {line}: expected {} fields, got {}", AGGREGATES_HEADER.len(), row.len());
        }
        out.push(AggregateRecord {
            experiment: row[0].to_string(),
            bias_level: parse_real(&row[1], line, "bias_level")?,
            model_variant: row[2].parse()?,
            split: row[3].parse()?,
            group: row[4].parse()?,
            metric: row[5].parse()?,
            mean: parse_real(&row[6], line, "mean")?,
            std: parse_real(&row[7], line, "std")?,
            count: row[8].parse().with_context(|| format!("line {line}: bad count"))?,
            excluded: row[9].parse().with_context(|| format!("line {line}: bad excluded"))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{GroupKey, Metric, ModelVariant, Split};

    fn rec(run: usize, level: f64, value: f64) -> RunRecord {
        RunRecord {
            experiment: "t".into(),
            run_index: run,
            bias_level: level,
            model_variant: ModelVariant::Biased,
            split: Split::Test,
            group: GroupKey::All,
            metric: Metric::Accuracy,
            value,
            status: if value.is_nan() { Status::ExcludedNotApplicable } else { Status::Ok },
        }
    }

    fn emit(records: &[RunRecord]) -> String {
        let mut buf = Vec::new();
        write_results(records, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_is_header_only() {
        assert_eq!(emit(&[]), format!("{}\n", RESULTS_HEADER.join(",")));
    }

    #[test]
    fn one_record_is_two_lines() {
        let s = emit(&[rec(0, 0.05, 0.1 + 0.2)]);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "t,0,0.05,biased,test,all,accuracy,0.30000000000000004,ok");
        assert!(!s.contains('\r'));
    }

    #[test]
    fn rows_are_sorted_on_output() {
        let s = emit(&[rec(1, 0.5, 0.2), rec(0, 0.5, 0.1), rec(3, 0.0, 0.3)]);
        let runs: Vec<&str> = s.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
        assert_eq!(runs, ["3", "0", "1"]);
    }

    #[test]
    fn excluded_value_is_blank_and_round_trips() {
        let s = emit(&[rec(0, 0.0, f64::NAN)]);
        assert!(s.ends_with(",accuracy,,excluded_not_applicable\n"));
        let back = parse_results(s.as_bytes()).unwrap();
        assert!(back[0].value.is_nan());
        assert_eq!(back[0].status, Status::ExcludedNotApplicable);
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(parse_results("a,b\n".as_bytes()).is_err());
    }
}
