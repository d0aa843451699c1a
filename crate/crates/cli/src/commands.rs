//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use admon_core::catalog::Catalog;
use admon_core::evaluation::ComparisonReport;
use admon_core::generator::{generate_year, ProfileSchedule};
use admon_core::matrices::MatrixSet;
use admon_core::monitor::{
    self, continuous_detections, write_assessments, write_detections, MonitorConfig,
};
use admon_core::resources::{continuous_baseline, monthly_totals_from_csv, SensorParams};
use admon_core::scenario::{
    atomic_write, read_ground_truth, read_scenario, write_ground_truth, write_scenario,
    GroundTruthEntry,
};
use admon_core::evaluation;

use crate::config::RunConfig;

pub struct Inputs {
    pub catalog: Catalog,
    pub matrices: MatrixSet,
    pub sensors: SensorParams,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let catalog = match &cfg.catalog {
        Some(path) => Catalog::from_file(path)
            .with_context(|| format!("cannot load catalog {}", path.display()))?,
        None => Catalog::default_catalog(),
    };
    let matrices = match &cfg.matrices {
        Some(path) => MatrixSet::from_file(path)
            .with_context(|| format!("cannot load matrices {}", path.display()))?,
        None => MatrixSet::synthetic_default(&catalog),
    };
    let sensors = match &cfg.sensors {
        Some(path) => SensorParams::from_file(path)
            .with_context(|| format!("cannot load sensor parameters {}", path.display()))?,
        None => SensorParams::default_params(),
    };
    Ok(Inputs { catalog, matrices, sensors })
}

pub fn cmd_generate(cfg: &RunConfig, quiet: bool) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let schedule = ProfileSchedule::new(cfg.schedule.clone())?;
    let policy = cfg.anomalies.to_policy()?;
    let (events, ground_truth) =
        generate_year(&inputs.matrices, &inputs.catalog, &schedule, cfg.seed, &policy)?;

    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("cannot create output dir {}", cfg.out_dir.display()))?;
    let scenario_path = cfg.out_dir.join("scenario.csv");
    let gt_path = cfg.out_dir.join("ground_truth.csv");
    write_scenario(&events, &scenario_path)?;
    write_ground_truth(&ground_truth, &gt_path)?;
    if !quiet {
        println!(
            "wrote {} ({} events) and {} ({} anomalies)",
            scenario_path.display(),
            events.len(),
            gt_path.display(),
            ground_truth.len()
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Adaptive,
    Continuous,
    Both,
}

pub fn cmd_run(
    cfg: &RunConfig,
    mode: Mode,
    scenario_override: Option<&Path>,
    quiet: bool,
) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let scenario_path = scenario_override
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.out_dir.join("scenario.csv"));
    let events = read_scenario(&scenario_path)
        .with_context(|| format!("cannot read scenario {}", scenario_path.display()))?;
    let gt_path = cfg.out_dir.join("ground_truth.csv");
    let ground_truth: Vec<GroundTruthEntry> = if gt_path.exists() {
        read_ground_truth(&gt_path)?
    } else {
        Vec::new()
    };

    let monitor_config = MonitorConfig {
        horizon_s: cfg.horizon_s,
        history_flags: cfg.history_flags.clone(),
    };
    std::fs::create_dir_all(&cfg.out_dir)?;

    let run_adaptive = || -> Result<admon_core::RunOutput> {
        Ok(monitor::run(&inputs.catalog, &inputs.sensors, &monitor_config, &events)?)
    };
    let run_continuous = || -> Result<(admon_core::ResourceLedger, Vec<admon_core::Detection>)> {
        let ledger = continuous_baseline(&inputs.catalog, &inputs.sensors, &events, cfg.horizon_s)?;
        let detections = continuous_detections(&inputs.catalog, &events, cfg.horizon_s)?;
        Ok((ledger, detections))
    };

    match mode {
        Mode::Adaptive => {
            let out = run_adaptive()?;
            write_detections(&out.detections, cfg.out_dir.join("detections.csv"))?;
            write_assessments(&out.assessments, cfg.out_dir.join("assessments.csv"))?;
            atomic_write(
                cfg.out_dir.join("ledger_adaptive.csv"),
                out.ledger.to_csv().as_bytes(),
            )?;
            if !quiet {
                println!(
                    "adaptive run: {} detections, {} assessments",
                    out.detections.len(),
                    out.assessments.len()
                );
            }
        }
        Mode::Continuous => {
            let (ledger, detections) = run_continuous()?;
            write_detections(&detections, cfg.out_dir.join("detections_continuous.csv"))?;
            atomic_write(
                cfg.out_dir.join("ledger_continuous.csv"),
                ledger.to_csv().as_bytes(),
            )?;
            if !quiet {
                println!("continuous run: {} detections", detections.len());
            }
        }
        Mode::Both => {
            // The two runs share nothing mutable; execute them concurrently.
            let (adaptive, continuous) = std::thread::scope(|scope| {
                let a = scope.spawn(run_adaptive);
                let c = scope.spawn(run_continuous);
                (a.join().expect("adaptive run"), c.join().expect("continuous run"))
            });
            let adaptive = adaptive?;
            let (cont_ledger, cont_detections) = continuous?;

            write_detections(&adaptive.detections, cfg.out_dir.join("detections.csv"))?;
            write_assessments(&adaptive.assessments, cfg.out_dir.join("assessments.csv"))?;
            atomic_write(
                cfg.out_dir.join("ledger_adaptive.csv"),
                adaptive.ledger.to_csv().as_bytes(),
            )?;
            write_detections(&cont_detections, cfg.out_dir.join("detections_continuous.csv"))?;
            atomic_write(
                cfg.out_dir.join("ledger_continuous.csv"),
                cont_ledger.to_csv().as_bytes(),
            )?;

            let report = ComparisonReport::build(
                &adaptive.ledger,
                &cont_ledger,
                &adaptive.detections,
                &cont_detections,
                &ground_truth,
            )?;
            atomic_write(
                cfg.out_dir.join("comparison.csv"),
                report.comparison_csv().as_bytes(),
            )?;
            atomic_write(
                cfg.out_dir.join("summary.json"),
                report.summary_json().as_bytes(),
            )?;
            if !quiet {
                let total = report.total_row();
                println!(
                    "savings: sensing {} / energy {} / traffic {}",
                    fmt_opt(total.sensing_pct),
                    fmt_opt(total.energy_pct),
                    fmt_opt(total.traffic_pct)
                );
            }
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|p| format!("{p:.2}%")).unwrap_or_else(|| "N/A".into())
}

pub fn cmd_report(run_dir: &Path, out_dir: Option<&Path>, quiet: bool) -> Result<()> {
    let out_dir = out_dir.unwrap_or(run_dir);
    let read = |name: &str| -> Result<String> {
        let path = run_dir.join(name);
        std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))
    };

    let adaptive_monthly = monthly_totals_from_csv(&read("ledger_adaptive.csv")?)?;
    let continuous_monthly = monthly_totals_from_csv(&read("ledger_continuous.csv")?)?;
    let adaptive_detections = monitor::read_detections(run_dir.join("detections.csv"))
        .with_context(|| "cannot read detections.csv".to_string())?;
    let continuous_detections =
        monitor::read_detections(run_dir.join("detections_continuous.csv"))
            .with_context(|| "cannot read detections_continuous.csv".to_string())?;
    let gt_path = run_dir.join("ground_truth.csv");
    let ground_truth = if gt_path.exists() {
        read_ground_truth(&gt_path)?
    } else {
        Vec::new()
    };

    let cumulative = |monthly: &[admon_core::resources::ActivityCost]| {
        let mut acc = admon_core::resources::ActivityCost::default();
        monthly
            .iter()
            .map(|m| {
                acc.energy_mas += m.energy_mas;
                acc.traffic_bytes += m.traffic_bytes;
                acc.monitored += m.monitored;
                acc
            })
            .collect::<Vec<_>>()
    };
    let adaptive_cumulative = cumulative(&adaptive_monthly);
    let continuous_cumulative = cumulative(&continuous_monthly);

    let total = |cum: &[admon_core::resources::ActivityCost]| *cum.last().expect("12 months");
    let a_total = total(&adaptive_cumulative);
    let c_total = total(&continuous_cumulative);
    let pct = |a: f64, c: f64| if c > 0.0 { Some(100.0 * (1.0 - a / c)) } else { None };

    let report = ComparisonReport {
        rows: vec![evaluation::SavingsRow {
            activity: None,
            sensing_pct: pct(a_total.monitored as f64, c_total.monitored as f64),
            energy_pct: pct(a_total.energy_mas, c_total.energy_mas),
            traffic_pct: pct(a_total.traffic_bytes, c_total.traffic_bytes),
        }],
        false_alarms_adaptive: evaluation::false_alarms(&adaptive_detections, &ground_truth),
        false_alarms_continuous: evaluation::false_alarms(&continuous_detections, &ground_truth),
        detections_adaptive: bins(&adaptive_detections),
        detections_continuous: bins(&continuous_detections),
        accuracy_adaptive_pct: evaluation::accuracy(&adaptive_detections, &ground_truth),
        accuracy_continuous_pct: evaluation::accuracy(&continuous_detections, &ground_truth),
        adaptive_cumulative,
        continuous_cumulative,
    };

    let written = report.emit_series(out_dir)?;
    atomic_write(out_dir.join("summary.json"), report.summary_json().as_bytes())?;
    if !quiet {
        for path in &written {
            println!("wrote {}", path.display());
        }
        println!("wrote {}", out_dir.join("summary.json").display());
    }
    Ok(())
}

fn bins(detections: &[admon_core::Detection]) -> Vec<u32> {
    let mut bins = vec![0u32; admon_core::resources::MONTHS];
    for d in detections {
        bins[admon_core::resources::month_of(d.t_s)] += 1;
    }
    bins
}

/// Dumps the built-in catalog, matrices, sensor parameters and a default
/// config file for editing.
pub fn cmd_defaults(out_dir: &Path, quiet: bool) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let catalog_src = include_str!("../../core/data/catalog.json");
    let sensors_src = include_str!("../../core/data/sensors.json");
    let catalog = Catalog::default_catalog();
    let matrices = MatrixSet::synthetic_default(&catalog);

    let files = [
        ("catalog.json", catalog_src.to_owned()),
        ("sensors.json", sensors_src.to_owned()),
        ("matrices.json", matrices.to_json()),
        ("config.json", RunConfig::default().to_json()),
    ];
    for (name, content) in files {
        let path = out_dir.join(name);
        atomic_write(&path, content.as_bytes())?;
        if !quiet {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
