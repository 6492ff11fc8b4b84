//! Trace CSV and summary JSON. The column layout is documented in
//! `docs/trace_schema.md`; bump [`TRACE_SCHEMA`] whenever it changes.

use std::io::{BufRead, Write};

use crate::controller::{ControllerKind, RateAction};
use crate::error::{Error, Result};
use crate::rate::Rate;
use crate::sim::{MetricsFrame, Summary, Trace};
use crate::video::NodeQuality;

pub const TRACE_SCHEMA: &str = "mudra-trace/1";

pub const TRACE_COLUMNS: [&str; 21] = [
    "interval",
    "time_s",
    "rate_mbps",
    "action",
    "window",
    "est_abnormal",
    "est_mid",
    "true_abnormal",
    "true_mid",
    "active",
    "a_max",
    "target_condition",
    "oracle_rate_mbps",
    "oracle_feasible",
    "interference",
    "fb_nodes",
    "report_threshold",
    "offered_bits",
    "delivered_bits",
    "control_bits",
    "node_pdr",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        source_name: "trace".to_string(),
        message: e.to_string(),
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io {
        path: "<stream>".to_string(),
        message: e.to_string(),
    }
}

pub fn write_trace<W: Write>(trace: &Trace, mut out: W) -> Result<()> {
    writeln!(
        out,
        "# schema={TRACE_SCHEMA} scenario={} controller={} seed={} interval_s={} nodes={} fec={}",
        trace.scenario,
        trace.controller.as_str(),
        trace.seed,
        trace.interval_s,
        trace.nodes,
        trace.fec
    )
    .map_err(io_err)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS).map_err(csv_err)?;
    for f in &trace.frames {
        let pdrs = f
            .node_pdr
            .iter()
            .map(|p| p.map(|v| format!("{v:.6}")).unwrap_or_default())
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            f.interval.to_string(),
            format!("{:.3}", f.time_s),
            f.rate.mbps().to_string(),
            f.action.as_str().to_string(),
            opt(f.window),
            opt(f.est_abnormal),
            opt(f.est_mid),
            f.true_abnormal.to_string(),
            f.true_mid.to_string(),
            f.active.to_string(),
            f.a_max.to_string(),
            u8::from(f.target_condition).to_string(),
            f.oracle_rate.mbps().to_string(),
            u8::from(f.oracle_feasible).to_string(),
            u8::from(f.interference).to_string(),
            f.fb_nodes.to_string(),
            opt(f.report_threshold.map(|r| format!("{r:.6}"))),
            f.offered_bits.to_string(),
            f.delivered_bits.to_string(),
            f.control_bits.to_string(),
            pdrs,
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn trace_to_string(trace: &Trace) -> Result<String> {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf)?;
    Ok(String::from_utf8(buf).expect("trace output is ASCII"))
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Parse {
        source_name: "trace".to_string(),
        message: msg.into(),
    }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| bad(format!("missing column {}", TRACE_COLUMNS[i])))?;
    raw.parse()
        .map_err(|_| bad(format!("column {}: cannot parse `{raw}`", TRACE_COLUMNS[i])))
}

fn opt_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<Option<T>> {
    match rec.get(i) {
        Some("") | None => Ok(None),
        Some(_) => field(rec, i).map(Some),
    }
}

fn flag(rec: &csv::StringRecord, i: usize) -> Result<bool> {
    Ok(field::<u8>(rec, i)? != 0)
}

fn rate_field(rec: &csv::StringRecord, i: usize) -> Result<Rate> {
    Rate::from_mbps(field(rec, i)?)
}

fn action_field(rec: &csv::StringRecord, i: usize) -> Result<RateAction> {
    match rec.get(i) {
        Some("hold") => Ok(RateAction::Hold),
        Some("increase") => Ok(RateAction::Increase),
        Some("decrease") => Ok(RateAction::Decrease),
        other => Err(bad(format!("unknown action {other:?}"))),
    }
}

/// Reads a trace written by [`write_trace`].
pub fn read_trace<R: BufRead>(mut input: R) -> Result<Trace> {
    let mut header = String::new();
    input.read_line(&mut header).map_err(io_err)?;
    let header = header
        .trim()
        .strip_prefix("# ")
        .ok_or_else(|| bad("missing schema header line"))?;
    let mut meta = std::collections::HashMap::new();
    for kv in header.split_whitespace() {
        if let Some((k, v)) = kv.split_once('=') {
            meta.insert(k, v);
        }
    }
    if meta.get("schema") != Some(&TRACE_SCHEMA) {
        return Err(bad(format!("unsupported schema {:?}", meta.get("schema"))));
    }
    let get = |k: &str| meta.get(k).copied().ok_or_else(|| bad(format!("header lacks `{k}`")));
    let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| bad(format!("bad header `{k}`"))) };
    let controller: ControllerKind = get("controller")?.parse()?;
    let nodes = num("nodes")? as usize;

    let mut r = csv::Reader::from_reader(input);
    let mut frames = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let node_pdr = rec
            .get(20)
            .unwrap_or_default()
            .split(';')
            .map(|p| {
                if p.is_empty() {
                    Ok(None)
                } else {
                    p.parse().map(Some).map_err(|_| bad(format!("bad node_pdr entry `{p}`")))
                }
            })
            .collect::<Result<Vec<Option<f64>>>>()?;
        frames.push(MetricsFrame {
            interval: field(&rec, 0)?,
            time_s: field(&rec, 1)?,
            rate: rate_field(&rec, 2)?,
            action: action_field(&rec, 3)?,
            window: opt_field(&rec, 4)?,
            est_abnormal: opt_field(&rec, 5)?,
            est_mid: opt_field(&rec, 6)?,
            true_abnormal: field(&rec, 7)?,
            true_mid: field(&rec, 8)?,
            active: field(&rec, 9)?,
            a_max: field(&rec, 10)?,
            target_condition: flag(&rec, 11)?,
            oracle_rate: rate_field(&rec, 12)?,
            oracle_feasible: flag(&rec, 13)?,
            interference: flag(&rec, 14)?,
            fb_nodes: field(&rec, 15)?,
            report_threshold: opt_field(&rec, 16)?,
            offered_bits: field(&rec, 17)?,
            delivered_bits: field(&rec, 18)?,
            control_bits: field(&rec, 19)?,
            node_pdr,
        });
    }
    Ok(Trace {
        scenario: get("scenario")?.to_string(),
        controller,
        seed: num("seed")? as u64,
        interval_s: num("interval_s")?,
        nodes,
        fec: num("fec")?,
        frames,
    })
}

pub fn summary_to_json(summary: &Summary) -> String {
    serde_json::to_string_pretty(summary).expect("summary serialises")
}

/// Per-receiver video quality as CSV.
pub fn write_grades<W: Write>(nodes: &[NodeQuality], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node", "segments", "psnr_db", "grade"]).map_err(csv_err)?;
    for q in nodes {
        w.write_record([
            q.node.to_string(),
            q.segments.to_string(),
            format!("{:.3}", q.psnr),
            q.grade.as_str().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;
    use crate::sim::run;

    #[test]
    fn trace_round_trips() {
        let s = Scenario {
            nodes: 12,
            duration_s: 10.0,
            ..Scenario::default()
        };
        for kind in ControllerKind::ALL {
            let trace = run(&s, kind, 7).unwrap();
            let text = trace_to_string(&trace).unwrap();
            assert!(text.starts_with("# schema=mudra-trace/1 "));
            let back = read_trace(text.as_bytes()).unwrap();
            assert_eq!(back.frames.len(), trace.frames.len());
            assert_eq!(back.controller, kind);
            assert_eq!(trace_to_string(&back).unwrap(), text);
        }
    }

    #[test]
    fn rejects_foreign_schema() {
        let err = read_trace("# schema=other/9\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("unsupported schema"));
        assert!(read_trace("interval,time_s\n".as_bytes()).is_err());
    }
}
