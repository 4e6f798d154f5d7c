use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::{Deserialize, Serialize};
use twinmeter::coinc::{coincidence_counters, count_with, G2Accumulator};
use twinmeter::estimate::{ChannelCounts, CorrectionOptions, Measured};
use twinmeter::fitmodel::{self, ConcentrationModel, FitResult};
use twinmeter::phasematch::{root_finders, tuning_curve, AngleSolver, CrystalConfig, UniaxialDispersion};
use twinmeter::pipeline::{estimate_from_gates, run_pipeline, RunConfig};
use twinmeter::tables::{self, TableRow};
use twinmeter::twinstream::{apply_dead_time, generate_gate, SampleModel, SourceConfig};
use twinmeter::{io, Error};

use crate::{
    ConcentrationArgs, CountArgs, EstimateArgs, FitArgs, G2Args, PmCurveArgs, RunArgs, SimulateArgs, SourceArgs,
    TableArgs, TableFormat,
};

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn pm_curve(a: PmCurveArgs) -> Result<()> {
    let dispersion = match &a.coefficients {
        Some(p) => UniaxialDispersion::from_file(p)?,
        None => UniaxialDispersion::bbo(),
    };
    let crystal = CrystalConfig::new(dispersion, a.cut_angle_deg, a.length_mm, a.pump_nm)?
        .with_pump_angle(a.pump_angle);
    let solver = AngleSolver::with_finder(root_finders().get(&a.root_finder)?);
    let points = tuning_curve(a.lambda_min_nm, a.lambda_max_nm, a.steps, &crystal, &solver)?;
    io::write_tuning_curve(sink(a.output.as_deref())?, &points)?;
    let unsolved = points.iter().filter(|p| !p.is_solved()).count();
    if unsolved == points.len() {
        return Err(Error::NoPhaseMatch {
            lambda_nm: a.lambda_min_nm,
            lo_deg: 0.0,
            hi_deg: solver.max_angle_deg,
        }
        .into());
    }
    if unsolved > 0 {
        eprintln!("{unsolved} of {} wavelengths have no phase-matched angle", points.len());
    }
    Ok(())
}

fn load_source(a: &SourceArgs) -> Result<(SourceConfig, Option<SampleModel>)> {
    let (mut source, sample) = match &a.config {
        Some(p) => {
            let cfg = RunConfig::from_file(p)?;
            (cfg.source, Some(cfg.sample))
        }
        None => (SourceConfig::table_scale(), None),
    };
    if let Some(seed) = a.seed {
        source.seed = seed;
    }
    if let Some(n) = a.n_gates {
        source.n_gates = n;
    }
    if let Some(g) = a.gate_s {
        source.gate_s = g;
    }
    source.validate()?;
    Ok((source, sample))
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let (source, configured) = load_source(&a.source)?;
    let sample = match a.transmittance_pct {
        Some(t) => SampleModel::new(t / 100.0)?,
        None => configured.unwrap_or_else(SampleModel::transparent),
    };
    let gates = (a.first_gate..a.first_gate + source.n_gates as u64).map(|g| {
        let (i, s) = generate_gate(&source, &sample, g);
        (
            apply_dead_time(&i, source.dead_time_ns),
            apply_dead_time(&s, source.dead_time_ns),
        )
    });
    io::write_timestamps(io::create(&a.output)?, gates)?;
    eprintln!(
        "wrote gates {}..{} (seed {}) to {}",
        a.first_gate,
        a.first_gate + source.n_gates as u64,
        source.seed,
        a.output.display()
    );
    Ok(())
}

pub fn count(a: CountArgs) -> Result<()> {
    let counter = coincidence_counters().get(&a.counter)?;
    let gates = io::read_timestamps(io::open(&a.input)?, a.gate_s)?;
    let results = gates
        .iter()
        .map(|(i, s)| count_with(counter.as_ref(), i, s, a.tau_cc_ns))
        .collect::<twinmeter::Result<Vec<_>>>()?;
    io::write_counts(sink(a.output.as_deref())?, &results)?;
    Ok(())
}

pub fn g2(a: G2Args) -> Result<()> {
    let gates = io::read_timestamps(io::open(&a.input)?, a.gate_s)?;
    let mut acc = G2Accumulator::new(a.bin_ns, a.range_ns)?;
    for (i, s) in &gates {
        acc.add_gate(i, s)?;
    }
    io::write_g2(sink(a.output.as_deref())?, &acc.finish()?)?;
    Ok(())
}

fn read_counts_file(path: &PathBuf, gate_s: f64, tau_cc_ns: f64) -> Result<Vec<twinmeter::coinc::CoincidenceResult>> {
    io::read_counts(io::open(path)?, gate_s, tau_cc_ns).map_err(|e| match e {
        Error::Csv(e) => Error::parse(path.display().to_string(), e).into(),
        other => other.into(),
    })
}

pub fn estimate(a: EstimateArgs) -> Result<()> {
    if let Some(id) = a.paper_table {
        let rows = tables::reproduce_table(id, a.data_dir.as_deref(), a.reference_label.as_deref())?;
        io::write_json(sink(a.output.as_deref())?, &rows)?;
        return Ok(());
    }
    let c = &a.corrections;
    let (Some(sample), Some(reference)) = (&a.sample, &a.reference) else {
        unreachable!("clap requires both count files without --paper-table");
    };
    let reference_gates = read_counts_file(reference, c.gate_s, c.tau_cc_ns)?;
    let sample_gates = read_counts_file(sample, c.gate_s, c.tau_cc_ns)?;
    let mut template = ChannelCounts::bare("run", Measured::default(), Measured::default(), Measured::default());
    template.dark1 = c.dark1_cps;
    template.dark2 = c.dark2_cps;
    template.tau_dead_ns = c.tau_dead_ns;
    template.tau_cc_ns = c.tau_cc_ns;
    template.gate_s = c.gate_s;
    let options = CorrectionOptions {
        dead_time: c.dead_time,
        coincidence_live_time: !c.no_coincidence_live_time,
    };
    let report = estimate_from_gates(&reference_gates, &sample_gates, &template, options, c.spread)?;
    io::write_json(sink(a.output.as_deref())?, &report)?;
    Ok(())
}

pub fn fit(a: FitArgs) -> Result<()> {
    let points = io::read_fit_points(io::open(&a.input)?)?;
    let result = fitmodel::fit(&points)?;
    if !result.converged {
        eprintln!(
            "warning: fit stopped after {} iterations without converging",
            result.iterations
        );
    }
    if !result.model.is_physical(1e-6) {
        eprintln!("warning: fitted T0 + Tinf exceeds 100 %");
    }
    io::write_json(sink(a.output.as_deref())?, &result)?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ModelFile {
    Fit(FitResult),
    Bare(ConcentrationModel),
}

#[derive(Serialize)]
struct ConcentrationReading {
    concentration_ng_ul: f64,
    uncertainty_ng_ul: f64,
}

pub fn concentration(a: ConcentrationArgs) -> Result<()> {
    let model = match io::read_json::<ModelFile>(&a.model)? {
        ModelFile::Fit(f) => f.model,
        ModelFile::Bare(m) => m,
    };
    model.validate()?;
    let c = fitmodel::invert(&model, a.t_pct)?;
    let dc = fitmodel::concentration_uncertainty(&model, a.t_pct, a.dt_pct)?;
    println!("{c:.6e} ± {dc:.3e} ng/µl");
    let reading = ConcentrationReading {
        concentration_ng_ul: c,
        uncertainty_ng_ul: dc,
    };
    eprintln!("{}", serde_json::to_string(&reading)?);
    Ok(())
}

fn text_table(rows: &[TableRow], mut w: impl Write) -> std::io::Result<()> {
    let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
    writeln!(
        w,
        "{:>3}  {:<28} {:>8} {:>8} {:>7}  {:>8} {:>8} {:>7}  {:>6} {:>6}",
        "row", "label", "Tcc", "printed", "delta", "Tsc", "printed", "delta", "G_T", "G_N"
    )?;
    for r in rows {
        writeln!(
            w,
            "{:>3}  {:<28} {:>8} {:>8} {:>7}  {:>8} {:>8} {:>7}  {:>6} {:>6}",
            r.row,
            r.label,
            f(r.t_cc.map(|t| t.mean)),
            f(r.printed.tcc_pct),
            f(r.delta.tcc),
            f(r.t_sc.map(|t| t.mean)),
            f(r.printed.tsc_pct),
            f(r.delta.tsc),
            f(r.figures.g_t),
            f(Some(r.figures.g_n)),
        )?;
    }
    Ok(())
}

pub fn reproduce_table(a: TableArgs) -> Result<()> {
    let rows = tables::reproduce_table(a.table, a.data_dir.as_deref(), a.reference_label.as_deref())?;
    let out = sink(a.output.as_deref())?;
    match a.format {
        TableFormat::Text => text_table(&rows, out).map_err(|e| Error::io("<output>", e))?,
        TableFormat::Csv => io::write_table_rows(out, &rows)?,
        TableFormat::Json => io::write_json(out, &rows)?,
    }
    Ok(())
}

pub fn run(a: RunArgs) -> Result<()> {
    let mut cfg = RunConfig::from_file(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.source.seed = seed;
    }
    if let Some(report) = a.report {
        cfg.output.report = Some(report);
    }
    let out = run_pipeline(&cfg)?;
    io::write_json(sink(cfg.output.report.as_deref())?, &out.report)?;
    for (path, gates) in [
        (&cfg.output.reference_counts, &out.reference_gates),
        (&cfg.output.sample_counts, &out.sample_gates),
    ] {
        if let Some(p) = path {
            io::write_counts(io::create(p)?, gates)?;
        }
    }
    Ok(())
}
