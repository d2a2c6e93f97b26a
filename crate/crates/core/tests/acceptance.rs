//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and
//! fails if any check fails. Takes several minutes.

mod common;

use std::fs;

use ortdrift::calibrate::write_calibration_csv;
use ortdrift::eval::{
    ic_increments, normality_diagnostic, run_pipeline, write_report_csv, write_summary_header, write_summary_row,
    PipelineConfig, PipelineOutcome,
};
use ortdrift::monitor::estimate_theta_sq;
use ortdrift::ort::{best_split, FitConfig};
use ortdrift::preprocess::save_sequence;
use ortdrift::simgen::{Regime, Scenario, ScenarioSpec};

use common::*;

const SEED: u64 = 0;

struct Report {
    failed: Vec<String>,
}

impl Report {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(name.to_string());
        }
    }
}

fn desk_spec(scenario: Scenario) -> ScenarioSpec {
    ScenarioSpec {
        n: 64,
        horizon: 60,
        seed: SEED,
        ..ScenarioSpec::new(scenario, Regime::InControl)
    }
}

fn pipeline(scenario: Scenario, kappa: f64) -> PipelineOutcome {
    let mut cfg = PipelineConfig::new(desk_spec(scenario), 20, kappa);
    cfg.calibration.arl0 = 20.0;
    cfg.calibration.n_replications = 50;
    cfg.calibration.seed = SEED;
    cfg.eval_reps = 50;
    let out = run_pipeline(&cfg).unwrap();
    println!(
        "  {scenario}: kappa {kappa}, theta_sq {:.6}, q0 {:.4}{}, calibrated ARL {:.2} (sd {:.2}), \
         IC ARL {:.2} (sd {:.2}, {} censored), OC ARL {:.2} (sd {:.2}), OC delay {:?}, OC false alarms {}",
        out.theta_sq,
        out.calibration.q0,
        if out.bracket_floor { " (bracket floor)" } else { "" },
        out.calibration.achieved.arl,
        out.calibration.achieved.sd,
        out.ic.arl,
        out.ic.sd,
        out.ic.censored,
        out.oc.arl,
        out.oc.sd,
        out.oc.mean_delay(),
        out.oc.false_alarms,
    );
    out
}

fn s1_delay_and_arl(report: &mut Report) {
    let out = pipeline(Scenario::S1, 0.9);
    let cal = &out.calibration.achieved;
    let calibrated = (cal.arl - 20.0).abs() <= 2.0;
    let delay = out.oc.mean_delay();
    let fa = out.oc.false_alarm_fraction();
    report.record(
        "S1 OC delay",
        calibrated && delay.is_some_and(|d| d <= 1.5) && fa <= 0.1,
        format!("calibrated ARL {:.2}, mean delay {delay:?} (<= 1.5), false alarms {fa:.2} (<= 0.1)", cal.arl),
    );
    let (arl, sd) = (out.ic.arl, out.ic.sd);
    report.record(
        "S1 IC ARL",
        (15.0..=27.0).contains(&arl) && (10.0..=35.0).contains(&sd),
        format!("IC ARL {arl:.2} in [15, 27], SD {sd:.2} in [10, 35]"),
    );
}

fn s5_non_detection(report: &mut Report) {
    let out = pipeline(Scenario::S5, Scenario::S5.default_kappa());
    let ratio = (out.oc.arl - out.ic.arl).abs() / out.ic.arl;
    report.record(
        "S5 non-detection",
        ratio <= 0.4,
        format!("IC ARL {:.2}, OC ARL {:.2}, relative gap {ratio:.3} (<= 0.4)", out.ic.arl, out.oc.arl),
    );
}

fn s4_step_shift(report: &mut Report) {
    let out = pipeline(Scenario::S4, 2.0);
    let delay = out.oc.mean_delay();
    report.record(
        "S4 step shift",
        delay.is_some_and(|d| d <= 2.0),
        format!("mean delay {delay:?} (<= 2)"),
    );
}

fn null_diagnostic(report: &mut Report) {
    let m0 = 20;
    let spec = ScenarioSpec {
        n: 128,
        horizon: 70,
        seed: SEED,
        ..ScenarioSpec::new(Scenario::S1, Regime::InControl)
    };
    let fit = FitConfig::default();
    let phase_one = ScenarioSpec {
        horizon: 100,
        seed: ortdrift::rng::derive_seed(SEED, 1),
        ..spec.clone()
    };
    let theta_sq = estimate_theta_sq(&phase_one.generate().unwrap(), m0, &fit).unwrap();
    let values = ic_increments(&spec, m0, theta_sq, 12, &fit).unwrap();
    let d = normality_diagnostic(&values).unwrap();
    report.record(
        "null diagnostic",
        values.len() >= 500 && d.mean.abs() <= 0.3 && (0.6..=1.6).contains(&d.variance),
        format!(
            "{} increments, mean {:.3} in [-0.3, 0.3], variance {:.3} in [0.6, 1.6], KS {:.3}",
            values.len(),
            d.mean,
            d.variance,
            d.ks_distance
        ),
    );
}

fn split_oracle(report: &mut Report) {
    let mut mismatches = 0;
    for seed in 0..200u64 {
        let node = random_node(seed, 2 + (seed as usize * 13) % 63);
        let cfg = FitConfig {
            min_leaf: 1,
            ..FitConfig::axis_aligned()
        };
        let got = best_split(&node, &cfg).unwrap().map(|(r, g)| (r.alpha(), r.threshold(), g));
        let want = brute_force_split(&node, 1).map(|(axis, c, g)| (axes()[axis], c, g));
        let same = match (got, want) {
            (None, None) => true,
            (Some((a, c, g)), Some((wa, wc, wg))) => a == wa && c == wc && (g - wg).abs() <= 1e-12 * wg.max(1.0),
            _ => false,
        };
        mismatches += usize::from(!same);
    }
    report.record("split oracle", mismatches == 0, format!("{mismatches} mismatches in 200 nodes"));
}

fn jump_preservation(report: &mut Report) {
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [32, 64] {
        let c = jump_check(n, 1, 20);
        pass &= c.sse < 1e-18 && c.leaves == 2 && c.edge_error <= 1;
        parts.push(format!("n {n}: sse {:.1e}, {} leaves, edge off by {}", c.sse, c.leaves, c.edge_error));
    }
    report.record("jump preservation", pass, parts.join("; "));
}

fn imputation(report: &mut Report) {
    let worst = (0..20).map(imputation_error).fold(0.0, f64::max);
    report.record("imputation", worst < 1e-12, format!("max error {worst:.2e} (< 1e-12)"));
}

/// Bytes of every CSV the simulate, calibrate and eval stages write.
fn pipeline_bytes(threads: usize) -> Vec<(String, Vec<u8>)> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let spec = ScenarioSpec {
            n: 32,
            horizon: 36,
            seed: SEED,
            ..ScenarioSpec::new(Scenario::S1, Regime::OutOfControl)
        };
        let dir = tempfile::tempdir().unwrap();
        let manifest = save_sequence(&spec.generate().unwrap(), dir.path(), 16).unwrap();
        let mut files = vec![("manifest.csv".to_string(), fs::read(manifest).unwrap())];
        files.push(("frame_00030.pgm".to_string(), fs::read(dir.path().join("frame_00030.pgm")).unwrap()));

        let mut cfg = PipelineConfig::new(spec, 16, 0.9);
        cfg.calibration.arl0 = 8.0;
        cfg.calibration.n_replications = 12;
        cfg.eval_reps = 12;
        let out = run_pipeline(&cfg).unwrap();
        let mut cal = Vec::new();
        write_calibration_csv(&mut cal, &out.calibration.steps).unwrap();
        files.push(("calibration.csv".to_string(), cal));
        let mut summary = Vec::new();
        write_summary_header(&mut summary).unwrap();
        for report in [&out.ic, &out.oc] {
            let mut csv = Vec::new();
            write_report_csv(&mut csv, report).unwrap();
            files.push((format!("report_{}.csv", report.regime), csv));
            write_summary_row(&mut summary, "s1", report).unwrap();
        }
        files.push(("summary.csv".to_string(), summary));
        files
    })
}

fn determinism(report: &mut Report) {
    let a = pipeline_bytes(1);
    let b = pipeline_bytes(2);
    let c = pipeline_bytes(2);
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .zip(&c)
        .filter(|((x, y), z)| x.1 != y.1 || y.1 != z.1)
        .map(|((x, _), _)| x.0.as_str())
        .collect();
    report.record(
        "determinism",
        differing.is_empty() && a.iter().all(|f| !f.1.is_empty()),
        format!("{} files compared over 1, 2, 2 threads; differing: {differing:?}", a.len()),
    );
}

fn shape_detection(report: &mut Report) {
    for scenario in [Scenario::S2, Scenario::S3] {
        let out = pipeline(scenario, scenario.default_kappa());
        let delay = out.oc.mean_delay();
        report.record(
            &format!("{scenario} detection"),
            delay.is_some_and(|d| 3.0 * d <= out.ic.arl),
            format!("mean delay {delay:?}, IC ARL {:.2} (delay <= ARL / 3)", out.ic.arl),
        );
    }
}

#[test]
fn acceptance() {
    let mut report = Report { failed: Vec::new() };
    split_oracle(&mut report);
    jump_preservation(&mut report);
    imputation(&mut report);
    determinism(&mut report);
    null_diagnostic(&mut report);
    s1_delay_and_arl(&mut report);
    s5_non_detection(&mut report);
    s4_step_shift(&mut report);
    shape_detection(&mut report);
    assert!(report.failed.is_empty(), "failed: {:?}", report.failed);
}
