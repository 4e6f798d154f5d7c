//! CSV and JSON formats of the command-line tool.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::coinc::{CoincidenceResult, G2Histogram};
use crate::error::{ensure, Error, Result};
use crate::fitmodel::FitPoint;
use crate::phasematch::TuningCurvePoint;
use crate::tables::TableRow;
use crate::twinstream::{Channel, TimestampStream, PS_PER_S};

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

pub fn write_json<W: Write, T: Serialize + ?Sized>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| Error::io("<output>", e))?;
    w.flush().map_err(|e| Error::io("<output>", e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| Error::parse(path.display().to_string(), e))
}

/// `gate,channel,time_ps`; channel 1 is the idler, 2 the signal.
pub fn write_timestamps<W, I>(w: W, gates: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (TimestampStream, TimestampStream)>,
{
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["gate", "channel", "time_ps"])?;
    for (idler, signal) in gates {
        for s in [&idler, &signal] {
            let (g, c) = (s.gate_index.to_string(), s.channel.number().to_string());
            for t in &s.times_ps {
                out.write_record([g.as_str(), c.as_str(), &t.to_string()])?;
            }
        }
    }
    out.flush().map_err(|e| Error::io("<output>", e))
}

#[derive(Deserialize)]
struct TimestampRow {
    gate: u64,
    channel: u8,
    time_ps: i64,
}

/// Groups rows by gate, keeping the file order within a channel so that
/// unsorted input is reported by the counter.
pub fn read_timestamps<R: Read>(r: R, gate_s: f64) -> Result<Vec<(TimestampStream, TimestampStream)>> {
    ensure(gate_s > 0.0 && gate_s.is_finite(), || format!("gate {gate_s} s must be positive"))?;
    let gate_ps = (gate_s * PS_PER_S).round() as i64;
    let mut gates: BTreeMap<u64, [Vec<i64>; 2]> = BTreeMap::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let row: TimestampRow = row?;
        let ch = Channel::from_number(row.channel).ok_or_else(|| {
            Error::parse("timestamps", format!("channel {} is neither 1 nor 2", row.channel))
        })?;
        ensure(row.time_ps >= 0 && row.time_ps < gate_ps, || {
            format!("time {} ps lies outside the {gate_s} s gate {}", row.time_ps, row.gate)
        })?;
        gates.entry(row.gate).or_default()[ch.number() as usize - 1].push(row.time_ps);
    }
    Ok(gates
        .into_iter()
        .map(|(gate_index, [i, s])| {
            let stream = |channel, times_ps| TimestampStream {
                channel,
                gate_index,
                gate_ps,
                times_ps,
            };
            (stream(Channel::Idler, i), stream(Channel::Signal, s))
        })
        .collect())
}

/// `gate,N1,N2,Ncc` per gate, then a `mean` row.
pub fn write_counts<W: Write>(w: W, gates: &[CoincidenceResult]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["gate", "N1", "N2", "Ncc"])?;
    for g in gates {
        out.write_record([g.gate_index, g.n1, g.n2, g.ncc].map(|v| v.to_string()))?;
    }
    if !gates.is_empty() {
        let n = gates.len() as f64;
        let mean = |f: fn(&CoincidenceResult) -> u64| gates.iter().map(|g| f(g) as f64).sum::<f64>() / n;
        out.write_record([
            "mean".to_string(),
            mean(|g| g.n1).to_string(),
            mean(|g| g.n2).to_string(),
            mean(|g| g.ncc).to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<output>", e))
}

#[derive(Deserialize)]
struct CountsRow {
    gate: String,
    #[serde(rename = "N1")]
    n1: String,
    #[serde(rename = "N2")]
    n2: String,
    #[serde(rename = "Ncc")]
    ncc: String,
}

/// Reads per-gate counts, skipping the summary row.
pub fn read_counts<R: Read>(r: R, gate_s: f64, tau_cc_ns: f64) -> Result<Vec<CoincidenceResult>> {
    ensure(gate_s > 0.0 && gate_s.is_finite(), || format!("gate {gate_s} s must be positive"))?;
    let mut gates = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let row: CountsRow = row?;
        if row.gate == "mean" {
            continue;
        }
        let int = |field: &str, v: &str| -> Result<u64> {
            v.trim()
                .parse()
                .map_err(|_| Error::parse("counts", format!("{field} `{v}` is not a count")))
        };
        gates.push(CoincidenceResult {
            gate_index: int("gate", &row.gate)?,
            n1: int("N1", &row.n1)?,
            n2: int("N2", &row.n2)?,
            ncc: int("Ncc", &row.ncc)?,
            gate_s,
            tau_cc_ns,
        });
    }
    Ok(gates)
}

/// `tau_ns,g2` at bin centres.
pub fn write_g2<W: Write>(w: W, h: &G2Histogram) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["tau_ns", "g2"])?;
    for (lo, g) in h.offsets_ns.iter().zip(&h.g2) {
        out.write_record([(lo + 0.5 * h.bin_width_ns).to_string(), g.to_string()])?;
    }
    out.flush().map_err(|e| Error::io("<output>", e))
}

/// `lambda_s_nm,lambda_i_nm,theta_s_deg,theta_i_deg,residual`; unsolved points leave the
/// angle and residual fields empty.
pub fn write_tuning_curve<W: Write>(w: W, points: &[TuningCurvePoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["lambda_s_nm", "lambda_i_nm", "theta_s_deg", "theta_i_deg", "residual"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for p in points {
        out.write_record([
            p.lambda_signal_nm.to_string(),
            p.lambda_idler_nm.to_string(),
            opt(p.theta_signal_deg),
            opt(p.theta_idler_deg),
            opt(p.residual),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<output>", e))
}

#[derive(Deserialize)]
struct FitRow {
    concentration_ng_ul: f64,
    transmittance_pct: f64,
    #[serde(rename = "dT_pct")]
    dt_pct: Option<f64>,
}

/// `concentration_ng_ul,transmittance_pct,dT_pct`; the spread column may be empty.
pub fn read_fit_points<R: Read>(r: R) -> Result<Vec<FitPoint>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r)
        .deserialize()
        .map(|row| {
            let row: FitRow = row?;
            Ok(FitPoint::new(row.concentration_ng_ul, row.transmittance_pct, row.dt_pct))
        })
        .collect()
}

/// Recomputed and printed values side by side.
pub fn write_table_rows<W: Write>(w: W, rows: &[TableRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "row", "label", "concentration_ng_ul", "tcc_pct", "tcc_printed", "tcc_delta", "tcc_err_pct",
        "tcc_err_printed", "tsc_pct", "tsc_printed", "tsc_delta", "tsc_err_pct", "tsc_err_printed",
        "g_t", "g_t_printed", "g_n", "g_n_printed", "snr_cc_db", "snr_sc_db",
        "sensitivity_cc_db", "sensitivity_sc_db",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for r in rows {
        let p = &r.printed;
        out.write_record([
            r.row.to_string(),
            r.label.clone(),
            r.concentration_ng_ul.map(|c| c.to_string()).unwrap_or_default(),
            opt(r.t_cc.map(|t| t.mean)),
            opt(p.tcc_pct),
            opt(r.delta.tcc),
            opt(r.t_cc.map(|t| t.uncertainty)),
            opt(p.tcc_err_pct),
            opt(r.t_sc.map(|t| t.mean)),
            opt(p.tsc_pct),
            opt(r.delta.tsc),
            opt(r.t_sc.map(|t| t.uncertainty)),
            opt(p.tsc_err_pct),
            opt(r.figures.g_t),
            opt(p.g_t),
            opt(Some(r.figures.g_n)),
            opt(p.g_n),
            opt(Some(r.figures.snr_cc_db)),
            opt(Some(r.figures.snr_sc_db)),
            opt(Some(r.figures.sensitivity_cc_db)),
            opt(Some(r.figures.sensitivity_sc_db)),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<output>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coinc::count_coincidences;

    fn stream(channel: Channel, gate_index: u64, times_ps: Vec<i64>) -> TimestampStream {
        TimestampStream::new(channel, gate_index, 1_000_000, times_ps).unwrap()
    }

    #[test]
    fn timestamps_round_trip() {
        let gates = vec![
            (stream(Channel::Idler, 0, vec![5, 90]), stream(Channel::Signal, 0, vec![7])),
            (stream(Channel::Idler, 1, vec![]), stream(Channel::Signal, 1, vec![1, 2, 3])),
        ];
        let mut buf = Vec::new();
        write_timestamps(&mut buf, gates.clone()).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("gate,channel,time_ps\n0,1,5\n"));
        // a gate with an empty idler stream only shows up through its signal rows
        let back = read_timestamps(buf.as_slice(), 1e-6).unwrap();
        assert_eq!(back, gates);
    }

    #[test]
    fn unsorted_file_reaches_the_counter() {
        let text = "gate,channel,time_ps\n0,1,50\n0,1,10\n0,2,12\n";
        let gates = read_timestamps(text.as_bytes(), 1e-6).unwrap();
        let (i, s) = &gates[0];
        assert!(matches!(count_coincidences(i, s, 1.0), Err(Error::Unsorted("idler"))));
        assert!(read_timestamps("gate,channel,time_ps\n0,3,1\n".as_bytes(), 1e-6).is_err());
        assert!(read_timestamps("gate,channel,time_ps\n0,1,2000000\n".as_bytes(), 1e-6).is_err());
    }

    #[test]
    fn counts_round_trip_skips_summary() {
        let g = |k: u64| CoincidenceResult {
            gate_index: k,
            n1: 100 + k,
            n2: 50,
            ncc: 7 * k,
            gate_s: 0.3,
            tau_cc_ns: 7.1,
        };
        let gates = vec![g(0), g(1), g(2)];
        let mut buf = Vec::new();
        write_counts(&mut buf, &gates).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.ends_with("mean,101,50,7\n"), "{text}");
        assert_eq!(read_counts(text.as_bytes(), 0.3, 7.1).unwrap(), gates);
        assert!(read_counts("gate,N1,N2,Ncc\n0,1.5,2,3\n".as_bytes(), 0.3, 7.1).is_err());
    }

    #[test]
    fn fit_points_with_optional_spread() {
        let text = "concentration_ng_ul,transmittance_pct,dT_pct\n0.1,88.0,0.07\n1, 87.0,\n";
        let pts = read_fit_points(text.as_bytes()).unwrap();
        assert_eq!(pts[0], FitPoint::new(0.1, 88.0, Some(0.07)));
        assert_eq!(pts[1].uncertainty, None);
    }

    #[test]
    fn g2_rows_at_bin_centres() {
        let h = G2Histogram {
            bin_width_ns: 2.0,
            offsets_ns: vec![-3.0, -1.0, 1.0],
            g2: vec![1.0, 4.0, 1.0],
            counts: vec![1, 4, 1],
        };
        let mut buf = Vec::new();
        write_g2(&mut buf, &h).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "tau_ns,g2\n-2,1\n0,4\n2,1\n");
    }
}
