//! Acceptance criteria, run without the libtest harness so that every
//! PASS/FAIL line is printed; exits non-zero if any criterion fails.

use std::time::Instant;

use twinmeter::coinc::{count_coincidences, G2Accumulator};
use twinmeter::estimate::{fresnel_index, live_fraction, snr_db, SpreadMode};
use twinmeter::fitmodel::{fit, invert, ConcentrationModel, FitPoint};
use twinmeter::phasematch::{solve_signal_angle, tuning_curve, AngleSolver, CrystalConfig};
use twinmeter::pipeline::{estimate_from_gates, run_with_reference, simulate_reference, RunConfig};
use twinmeter::tables::{reproduce_table, TableRow};
use twinmeter::twinstream::{apply_dead_time, generate_gate, SampleModel, SourceConfig};
use twinmeter_validation::{par_map, verdict, workers};

fn table(id: u8) -> Vec<TableRow> {
    reproduce_table(id, None, None).expect("bundled table")
}

fn criterion_1_table_reproduction() -> bool {
    let start = Instant::now();
    let tables: Vec<(u8, Vec<TableRow>)> = (1..=3).map(|id| (id, table(id))).collect();
    let elapsed = start.elapsed().as_secs_f64();

    let mut violations = Vec::new();
    let mut checked = 0;
    for (id, rows) in &tables {
        for r in rows.iter().filter(|r| !r.is_reference) {
            checked += 1;
            let (dcc, dsc) = (r.delta.tcc.unwrap(), r.delta.tsc.unwrap());
            if dcc.abs() > 0.02 + 1e-9 || dsc.abs() > 0.03 + 1e-9 {
                violations.push(format!(
                    "table {id} row {} ({}): Tcc {:.3} vs {:.2}, Tsc {:.3} vs {:.2}",
                    r.row,
                    r.label,
                    r.t_cc.unwrap().mean,
                    r.printed.tcc_pct.unwrap(),
                    r.t_sc.unwrap().mean,
                    r.printed.tsc_pct.unwrap()
                ));
            }
        }
    }
    for v in &violations {
        println!("    outside tolerance: {v}");
    }
    let pass = violations.is_empty() && elapsed < 1.0;
    verdict(
        "1",
        pass,
        &format!(
            "table reproduction, {} of {checked} rows within ±0.02/±0.03 points, {elapsed:.3} s",
            checked - violations.len()
        ),
    );
    pass
}

fn criterion_2_uncertainty_reproduction() -> bool {
    let rows = table(1);
    let mut worst: f64 = 0.0;
    for r in rows.iter().filter(|r| !r.is_reference) {
        let (dcc, dsc) = (r.delta.tcc_err.unwrap(), r.delta.tsc_err.unwrap());
        println!(
            "    row {}: ΔTcc {:.3} (printed {:.2}, Δ {:+.3}), ΔTsc {:.3} (printed {:.2}, Δ {:+.3})",
            r.row,
            r.t_cc.unwrap().uncertainty,
            r.printed.tcc_err_pct.unwrap(),
            dcc,
            r.t_sc.unwrap().uncertainty,
            r.printed.tsc_err_pct.unwrap(),
            dsc
        );
        worst = worst.max(dcc.abs()).max(dsc.abs());
    }
    let row = |n: u32| rows.iter().find(|r| r.row == n).unwrap();
    let row2_cc = row(2).t_cc.unwrap().uncertainty;
    let row3_sc = row(3).t_sc.unwrap().uncertainty;
    let pass = (row2_cc - 0.09).abs() <= 0.02 && (row3_sc - 0.16).abs() <= 0.02;
    verdict(
        "2",
        pass,
        &format!(
            "uncertainty propagation, row 2 CC {row2_cc:.3} (0.09), row 3 SC {row3_sc:.3} (0.16), largest row delta {worst:.3}"
        ),
    );
    pass
}

fn criterion_3_snr_aggregate() -> bool {
    let rows: Vec<TableRow> = table(1).into_iter().filter(|r| (2..=7).contains(&r.row)).collect();
    let mean = |f: &dyn Fn(&TableRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    let cc = mean(&|r| snr_db(r.ncc.mean, r.ncc.spread).unwrap());
    let sc = mean(&|r| snr_db(r.n2.mean, r.n2.spread).unwrap());
    let pass = (35.0..=37.5).contains(&cc) && (29.5..=31.0).contains(&sc) && cc - sc >= 5.0;
    verdict(
        "3",
        pass,
        &format!("mean SNR CC {cc:.2} dB, SC {sc:.2} dB, difference {:.2} dB", cc - sc),
    );
    pass
}

fn criterion_4_fresnel_inversion() -> bool {
    let a = fresnel_index(0.9361).unwrap();
    let b = fresnel_index(0.9561).unwrap();
    let pass = (a - 1.677).abs() <= 0.003 && (b - 1.530).abs() <= 0.004;
    verdict("4", pass, &format!("n(0.9361) = {a:.4}, n(0.9561) = {b:.4}"));
    pass
}

fn criterion_5_phase_matching() -> bool {
    let crystal = CrystalConfig::bbo_default();
    let theta = solve_signal_angle(810.0, &crystal).unwrap();
    let curve = tuning_curve(780.0, 840.0, 121, &crystal, &AngleSolver::default()).unwrap();
    let solved = curve.iter().filter(|p| p.is_solved()).count();
    let worst_residual = curve
        .iter()
        .filter_map(|p| p.residual)
        .fold(0.0f64, |m, r| m.max(r.abs()));
    let worst_energy = curve
        .iter()
        .map(|p| {
            let mismatch = 1.0 / crystal.pump_nm - 1.0 / p.lambda_signal_nm - 1.0 / p.lambda_idler_nm;
            (mismatch * crystal.pump_nm).abs()
        })
        .fold(0.0f64, f64::max);
    let pass = (theta - 3.0).abs() <= 0.5
        && solved == curve.len()
        && worst_residual < 1e-10
        && worst_energy < 1e-12;
    verdict(
        "5",
        pass,
        &format!(
            "810 nm at {theta:.3}°, {solved}/{} points solved, max |residual| {worst_residual:.1e}, max energy mismatch {worst_energy:.1e}",
            curve.len()
        ),
    );
    pass
}

const ROUND_TRIP_SEEDS: u64 = 50;
const TRUE_T: [f64; 3] = [0.55, 0.85, 0.95];
const PREFIXES: [usize; 2] = [25, 50];

struct SeedOutcome {
    /// (estimate, uncertainty) per entry of `TRUE_T`, percent.
    estimates: Vec<(f64, f64)>,
    /// Uncertainty of the T = 0.85 run using only the first n gates, per entry of `PREFIXES`.
    prefix_uncertainty: Vec<f64>,
}

fn round_trip(seed: u64) -> SeedOutcome {
    let mut source = SourceConfig::table_scale();
    source.seed = seed;
    let mut cfg = RunConfig::new(source, 1.0).unwrap();
    cfg.analysis.spread = SpreadMode::StandardError;
    let reference = simulate_reference(&cfg).unwrap();
    let mut estimates = Vec::new();
    let mut prefix_uncertainty = Vec::new();
    for t in TRUE_T {
        cfg.sample = SampleModel::new(t).unwrap();
        let out = run_with_reference(&cfg, reference.clone()).unwrap();
        estimates.push((out.report.t_cc.mean, out.report.t_cc.uncertainty));
        if t == 0.85 {
            let template = cfg.correction_template("run");
            for n in PREFIXES {
                let e = estimate_from_gates(
                    &out.reference_gates[..n],
                    &out.sample_gates[..n],
                    &template,
                    cfg.corrections.options(),
                    SpreadMode::StandardError,
                )
                .unwrap();
                prefix_uncertainty.push(e.t_cc.uncertainty);
            }
        }
    }
    SeedOutcome {
        estimates,
        prefix_uncertainty,
    }
}

fn criterion_6_simulator_round_trip() -> bool {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..ROUND_TRIP_SEEDS).collect();
    let outcomes = par_map(&seeds, |&s| round_trip(s));
    let elapsed = start.elapsed().as_secs_f64();

    let mut coverage_ok = true;
    for (k, t) in TRUE_T.iter().enumerate() {
        let z: Vec<f64> = outcomes
            .iter()
            .map(|o| (o.estimates[k].0 - 100.0 * t) / o.estimates[k].1)
            .collect();
        let covered = z.iter().filter(|z| z.abs() <= 3.0).count();
        let mean_z = z.iter().sum::<f64>() / z.len() as f64;
        let mean_u = outcomes.iter().map(|o| o.estimates[k].1).sum::<f64>() / outcomes.len() as f64;
        println!(
            "    T = {t}: {covered}/{} within 3 spreads, mean z {mean_z:+.2}, mean spread {mean_u:.3} points",
            z.len()
        );
        coverage_ok &= covered as f64 >= 0.95 * z.len() as f64;
    }

    let k85 = TRUE_T.iter().position(|&t| t == 0.85).unwrap();
    let mean_u = |f: &dyn Fn(&SeedOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / outcomes.len() as f64;
    let full = mean_u(&|o| o.estimates[k85].1) * 100f64.sqrt();
    let mut scaling_ok = true;
    for (j, n) in PREFIXES.iter().enumerate() {
        let ratio = mean_u(&|o| o.prefix_uncertainty[j]) * (*n as f64).sqrt() / full;
        println!("    spread·√n at n = {n} over n = 100: {ratio:.3}");
        scaling_ok &= (ratio - 1.0).abs() <= 0.2;
    }

    let fast = elapsed < 120.0;
    verdict(
        "6",
        coverage_ok && scaling_ok,
        &format!(
            "round trip over {ROUND_TRIP_SEEDS} seeds: coverage {}, 1/√n scaling {}",
            if coverage_ok { "met" } else { "missed" },
            if scaling_ok { "met" } else { "missed" }
        ),
    );
    verdict(
        "6 (runtime)",
        fast,
        &format!("{elapsed:.1} s on {} worker thread(s), target 120 s", workers()),
    );
    coverage_ok && scaling_ok && fast
}

fn criterion_7_coincidence_statistics() -> bool {
    // independent streams: no pairs, only uncorrelated background
    let mut indep = SourceConfig::table_scale();
    indep.pair_rate = 0.0;
    indep.dark1 = 1.0e5;
    indep.dark2 = 1.0e5;
    indep.seed = 71;
    let tau_cc = 7.1;
    let transparent = SampleModel::transparent();
    let mut ncc = 0u64;
    let mut expected = 0.0;
    let mut g2 = G2Accumulator::new(2.0, 42.0).unwrap();
    for gate in 0..200 {
        let (i, s) = generate_gate(&indep, &transparent, gate);
        let c = count_coincidences(&i, &s, tau_cc).unwrap();
        ncc += c.ncc;
        expected += c.n1 as f64 * c.n2 as f64 * tau_cc * 1e-9 / c.gate_s;
        g2.add_gate(&i, &s).unwrap();
    }
    let z_cc = (ncc as f64 - expected) / expected.sqrt();
    let h = g2.finish().unwrap();
    let flat = h.g2.iter().zip(&h.counts).all(|(g, &c)| {
        let sigma = g / (c as f64).sqrt();
        (g - 1.0).abs() <= 3.0 * sigma
    });
    let g2_range = h.g2.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &g| (lo.min(g), hi.max(g)));

    // twin streams: central 10 ns bin against 1 + 1/(R·τ_w)
    let mut twin = SourceConfig::table_scale();
    twin.seed = 72;
    let bin_ns = 10.0;
    let mut acc = G2Accumulator::new(bin_ns, 3.0 * bin_ns).unwrap();
    for gate in 0..5 {
        let (i, s) = generate_gate(&twin, &transparent, gate);
        acc.add_gate(&i, &s).unwrap();
    }
    let central = acc.finish().unwrap().g2[1];
    let analytic = 1.0 + 1.0 / (twin.pair_rate * bin_ns * 1e-9);
    let rel = (central / analytic - 1.0).abs();

    let pass = z_cc.abs() <= 4.0 && flat && rel <= 0.10;
    verdict(
        "7",
        pass,
        &format!(
            "independent Ncc {ncc} vs {expected:.0} (z {z_cc:+.2}), g2 in [{:.3}, {:.3}] {}, twin g2(0) {central:.2} vs {analytic:.2} ({:.1} %)",
            g2_range.0,
            g2_range.1,
            if flat { "flat within 3σ" } else { "not flat" },
            100.0 * rel
        ),
    );
    pass
}

fn criterion_8_dead_time() -> bool {
    let rate = 1.24e6;
    let tau_ns = 50.0;
    let mut src = SourceConfig::table_scale();
    src.pair_rate = 0.0;
    src.dark1 = rate;
    src.dark2 = 0.0;
    src.seed = 81;
    let gates = 10;
    let mut kept = 0usize;
    for gate in 0..gates {
        let (i, _) = generate_gate(&src, &SampleModel::transparent(), gate);
        kept += apply_dead_time(&i, tau_ns).len();
    }
    let span = src.gate_s * gates as f64;
    let expected = rate / (1.0 + rate * tau_ns * 1e-9) * span;
    let z = (kept as f64 - expected) / expected.sqrt();
    let gamma = live_fraction(1.24e6, tau_ns);
    let pass = z.abs() <= 3.0 && (gamma - 0.938).abs() < 5e-4;
    verdict(
        "8",
        pass,
        &format!("retained {kept} vs {expected:.0} (z {z:+.2}), γ(1.24 Mcps, 50 ns) = {gamma:.4}"),
    );
    pass
}

fn criterion_9_fit() -> bool {
    let truth = ConcentrationModel::new(12.0, 0.8, 75.0, 900.0).unwrap();
    let grid: Vec<f64> = (0..8).map(|k| 0.01 * 10f64.powf(k as f64 * 5.0 / 7.0)).collect();
    let pts: Vec<FitPoint> = grid.iter().map(|&c| FitPoint::new(c, truth.eval(c), None)).collect();
    let r = fit(&pts).unwrap();
    let recovered = [
        (r.model.t0, truth.t0),
        (r.model.c0, truth.c0),
        (r.model.t_inf, truth.t_inf),
        (r.model.c_inf, truth.c_inf),
    ]
    .iter()
    .all(|(g, w)| (g / w - 1.0).abs() < 0.01);

    let mut worst_inverse: f64 = 0.0;
    for (t0, c0, ti, ci) in [(5.0, 50.0, 84.0, 5e4), (30.0, 0.1, 60.0, 20.0), (1.0, 3.0, 90.0, 3e3)] {
        let m = ConcentrationModel::new(t0, c0, ti, ci).unwrap();
        for k in 0..50 {
            let c = 1e-3 * 10f64.powf(k as f64 * 0.1);
            let back = invert(&m, m.eval(c)).unwrap();
            worst_inverse = worst_inverse.max((back / c - 1.0).abs());
        }
    }

    let human: Vec<FitPoint> = table(1)
        .into_iter()
        .filter(|r| r.label == "H")
        .map(|r| FitPoint::new(r.concentration_ng_ul.unwrap(), r.printed.tcc_pct.unwrap(), r.printed.tcc_err_pct))
        .collect();
    let dna = fit(&human).unwrap();
    let monotone = (0..1000).all(|k| {
        let c = |k: i32| 10f64.powf(-2.0 + 4.0 * k as f64 / 1000.0);
        dna.model.eval(c(k + 1)) <= dna.model.eval(c(k))
    });

    let pass = recovered && worst_inverse < 1e-8 && monotone;
    verdict(
        "9",
        pass,
        &format!(
            "synthetic recovery {}, max invert∘eval error {worst_inverse:.1e}, DNA fit {} on [0.01, 100] ng/µl",
            if recovered { "within 1 %" } else { "outside 1 %" },
            if monotone { "monotone" } else { "not monotone" }
        ),
    );
    pass
}

fn main() {
    let criteria: [(&str, fn() -> bool); 9] = [
        ("1", criterion_1_table_reproduction),
        ("2", criterion_2_uncertainty_reproduction),
        ("3", criterion_3_snr_aggregate),
        ("4", criterion_4_fresnel_inversion),
        ("5", criterion_5_phase_matching),
        ("6", criterion_6_simulator_round_trip),
        ("7", criterion_7_coincidence_statistics),
        ("8", criterion_8_dead_time),
        ("9", criterion_9_fit),
    ];
    let failed: Vec<&str> = criteria
        .iter()
        .filter(|(id, run)| {
            let pass = std::panic::catch_unwind(*run).unwrap_or_else(|_| verdict(id, false, "panicked"));
            !pass
        })
        .map(|(id, _)| *id)
        .collect();
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed.len(),
        criteria.len()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
