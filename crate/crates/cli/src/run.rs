//! Task execution. Independent checks run on a rayon pool; results are
//! collected in configuration order so reports do not depend on scheduling.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use polytension::calculus::{Pullback, Section};
use polytension::grid::io::{content_hash, field_hash, write_field};
use polytension::grid::{DerivativeScheme, DomainMetric};
use polytension::random;
use polytension::stress::{conservation_residual, stress4_hat, trace_checks, HatForm, Law};
use polytension::tension::{energy_report, tau4, tau4_es};
use polytension::verify::convergence::fit_order;
use polytension::verify::cutoff::CutoffProfile;
use polytension::verify::pohozaev::{pohozaev_with_ledger, worst_step};
use polytension::verify::variation::{
    map_variation_check, metric_variation_check, tension_metric_variation_check, EnergyKind,
};
use polytension::{Grid, Map, Metric, Target};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{serde_name, CheckName, ConvergenceParams, ExperimentConfig, Quantity, Task, Tolerances};
use crate::report::{num, CheckResult, Decision, RunReport, Summary, Table, Timing};

/// Command-line overrides of the configuration.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub dump_fields: bool,
}

/// Seed offset separating metric perturbations from map directions.
const METRIC_SEED_OFFSET: u64 = 1000;

/// Applies the overrides, runs the task and writes every output.
pub fn run(config: &ExperimentConfig, opts: &RunOptions) -> anyhow::Result<RunReport> {
    let mut config = config.clone();
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    config.validate()?;
    // Output location is not part of the experiment: the overrides stay out
    // of the echoed config so that they cannot change report bytes.
    let dir = opts.out.clone().unwrap_or_else(|| config.outputs.dir.clone());
    let dump = (opts.dump_fields || config.outputs.dump_fields).then(|| dir.join("fields"));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .context("building the thread pool")?;
    let report = pool.install(|| execute_with(&config, dump.as_deref()))?;
    report.write(&dir, config.outputs.tables)?;
    Ok(report)
}

/// Runs the convergence study of `config` whatever its `task` says.
pub fn run_convergence(config: &ExperimentConfig, opts: &RunOptions) -> anyhow::Result<RunReport> {
    let mut config = config.clone();
    config.task = Task::Convergence;
    run(&config, opts)
}

/// Computes the report without touching the filesystem.
pub fn execute(config: &ExperimentConfig) -> anyhow::Result<RunReport> {
    execute_with(config, None)
}

/// As [`execute`], also dumping fields into `dump_dir` when given.
pub fn execute_with(config: &ExperimentConfig, dump_dir: Option<&Path>) -> anyhow::Result<RunReport> {
    let start = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let mut tables = Vec::new();
    let mut fields = BTreeMap::new();
    let target = config.target.build().context("target")?;
    let (checks, map_sha256) = match config.grid.build_at(None) {
        Err(e) => (vec![CheckResult::failed("setup", e)], None),
        Ok(grid) => match config.map.build(&grid, &target) {
            Err(e) => (vec![CheckResult::failed("setup", format!("map: {e}"))], None),
            Ok(map) => {
                let hash = field_hash(map.values());
                if let Some(dir) = dump_dir {
                    fields = dump_fields(dir, &grid, &map)?;
                }
                let checks = match config.task {
                    Task::Report => vec![report_task(config, &map, &mut tables)],
                    Task::Verify => verify_task(config, &map, &mut tables),
                    Task::Pohozaev => pohozaev_task(config, &map, &mut tables),
                    Task::Convergence => {
                        let params = config.convergence.as_ref().expect("validated");
                        vec![convergence_task(config, &target, params, &mut tables)]
                    }
                };
                (checks, Some(hash))
            }
        },
    };
    Ok(RunReport {
        tool: "polytension".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: content_hash(config.canonical_json().as_bytes()),
        config: config.clone(),
        map_sha256,
        fields,
        summary: Summary::of(&checks),
        checks,
        tables,
        timing: Timing {
            started_unix,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

fn dump_fields(dir: &Path, grid: &Grid, map: &Map<'_>) -> anyhow::Result<BTreeMap<String, polytension::grid::io::FieldHeader>> {
    let metric = DomainMetric::flat(grid);
    let pb = Pullback::new(map, &metric)?;
    let mut out = BTreeMap::new();
    let res = grid.resolutions();
    let len = grid.lengths();
    for (name, field) in [
        ("phi", map.values().clone()),
        ("tau", pb.tension().values().clone()),
        ("tau4", tau4(&pb).values().clone()),
        ("tau4_es", tau4_es(&pb).values().clone()),
    ] {
        let header = write_field(dir, name, &field, res, len).with_context(|| format!("dumping {name}"))?;
        out.insert(name.to_string(), header);
    }
    Ok(out)
}

fn report_task(config: &ExperimentConfig, map: &Map<'_>, tables: &mut Vec<Table>) -> CheckResult {
    let params = config.report.clone().unwrap_or_default();
    let metric = DomainMetric::flat(map.grid());
    let energies = match Pullback::new(map, &metric).and_then(|pb| energy_report(&pb, &params.energies)) {
        Ok(r) => r,
        Err(e) => return CheckResult::failed("energies", e),
    };
    let values = match serde_json::to_value(&energies) {
        Ok(serde_json::Value::Object(m)) => m,
        _ => return CheckResult::failed("energies", "energy report did not serialize to an object"),
    };
    let mut table = Table::new("energies", &["quantity", "value"]);
    let mut decisions = Vec::new();
    let mut non_finite = 0.0;
    for (k, v) in &values {
        let v = v.as_f64().unwrap_or(f64::NAN);
        if !v.is_finite() {
            non_finite += 1.0;
        }
        table.push(vec![k.clone(), num(v)]);
    }
    decisions.push(Decision::at_most("non_finite_energies", non_finite, 0.0));
    for (key, expected) in &params.expected {
        let measured = values.get(key).and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
        let error = if *expected == 0.0 {
            measured.abs()
        } else {
            (measured - expected).abs() / expected.abs()
        };
        decisions.push(Decision::at_most(format!("{key}_error"), error, config.tolerances.energy));
    }
    tables.push(table);
    CheckResult::new("energies", decisions, serde_json::Value::Object(values))
}

/// A job that yields one check result.
type Job<'a> = Box<dyn Fn() -> CheckResult + Send + Sync + 'a>;

fn run_jobs(jobs: Vec<Job<'_>>) -> Vec<CheckResult> {
    jobs.par_iter().map(|job| job()).collect()
}

fn verify_task(config: &ExperimentConfig, map: &Map<'_>, tables: &mut Vec<Table>) -> Vec<CheckResult> {
    let params = config.verify.as_ref().expect("validated");
    let grid = map.grid();
    let metric = DomainMetric::flat(grid);
    let tol = &config.tolerances;
    let max_mode = params.max_mode.unwrap_or_else(|| random::default_max_mode(grid));
    let mut jobs: Vec<Job<'_>> = Vec::new();
    for &check in &params.checks {
        let metric = &metric;
        match check {
            CheckName::MapVariation => {
                for &kind in &params.map_energies {
                    jobs.push(Box::new(move || {
                        map_variation(config, map, metric, kind, max_mode)
                            .unwrap_or_else(|e| CheckResult::failed(format!("map_variation_{kind}"), e))
                    }));
                }
            }
            CheckName::MetricVariation => {
                for &kind in &params.metric_energies {
                    jobs.push(Box::new(move || {
                        metric_variation(config, map, metric, Some(kind), max_mode)
                            .unwrap_or_else(|e| CheckResult::failed(format!("metric_variation_{kind}"), e))
                    }));
                }
            }
            CheckName::TensionMetricVariation => jobs.push(Box::new(move || {
                metric_variation(config, map, metric, None, max_mode)
                    .unwrap_or_else(|e| CheckResult::failed(check.name(), e))
            })),
            _ => jobs.push(Box::new(move || {
                single_check(check, map, metric, tol).unwrap_or_else(|e| CheckResult::failed(check.name(), e))
            })),
        }
    }
    let results = run_jobs(jobs);
    let mut table = Table::new("checks", &["check", "quantity", "measured", "rule", "tolerance", "passed"]);
    for r in &results {
        for d in &r.decisions {
            table.push(vec![
                r.name.clone(),
                d.quantity.clone(),
                num(d.measured),
                serde_name(&d.rule),
                num(d.tolerance),
                d.passed.to_string(),
            ]);
        }
        if let Some(e) = &r.error {
            table.push(vec![
                r.name.clone(),
                "error".into(),
                e.clone(),
                String::new(),
                String::new(),
                "false".into(),
            ]);
        }
    }
    tables.push(table);
    results
}

fn single_check(check: CheckName, map: &Map<'_>, metric: &Metric, tol: &Tolerances) -> polytension::Result<CheckResult> {
    let pb = Pullback::new(map, metric)?;
    Ok(match check {
        CheckName::ConservationS4 | CheckName::ConservationS4ES => {
            let (law, tolerance) = if check == CheckName::ConservationS4 {
                (Law::S4, tol.conservation_s4)
            } else {
                (Law::S4ES, tol.conservation_s4es)
            };
            let r = conservation_residual(&pb, law)?.report;
            CheckResult::new(
                check.name(),
                vec![Decision::at_most("relative", r.relative, tolerance)],
                json!(r),
            )
        }
        CheckName::Trace => {
            let r = trace_checks(&pb)?;
            CheckResult::new(
                check.name(),
                vec![
                    Decision::at_most("pointwise_relative", r.pointwise_relative, tol.trace),
                    Decision::at_most("integral_relative", r.integral_relative, tol.trace),
                ],
                json!(r),
            )
        }
        CheckName::HatForms => {
            let curvature = stress4_hat(&pb, HatForm::Curvature);
            let omega = stress4_hat(&pb, HatForm::Omega);
            let scale = curvature.max_abs();
            let diff = curvature.axpy(-1.0, &omega).max_abs();
            let relative = if scale > 0.0 { diff / scale } else { diff };
            CheckResult::new(
                check.name(),
                vec![Decision::at_most("relative", relative, tol.hat_forms)],
                json!({ "max_difference": diff, "scale": scale }),
            )
        }
        CheckName::MapVariation | CheckName::MetricVariation | CheckName::TensionMetricVariation => {
            unreachable!("variation checks are scheduled separately")
        }
    })
}

fn map_variation(
    config: &ExperimentConfig,
    map: &Map<'_>,
    metric: &Metric,
    kind: EnergyKind,
    max_mode: usize,
) -> polytension::Result<CheckResult> {
    let params = config.verify.as_ref().expect("validated");
    let grid = map.grid();
    let (m, n) = (grid.dim(), map.target().dim());
    let mut reports = Vec::new();
    let mut worst = 0.0f64;
    for s in 0..params.samples {
        let seed = config.seed + s;
        let values = if grid.is_periodic() {
            random::band_limited(grid, n, seed, max_mode, params.amplitude)?
        } else {
            random::compact_section(grid, n, seed, params.amplitude)?
        };
        let v = Section::from_node_field(0, m, n, values)?;
        let r = map_variation_check(map, metric, &v, kind, &params.steps)?;
        worst = worst.max(r.mismatch);
        reports.push(r);
    }
    Ok(CheckResult::new(
        format!("map_variation_{kind}"),
        vec![Decision::at_most("worst_mismatch", worst, config.tolerances.variation)],
        json!(reports),
    ))
}

/// Metric variation of `kind`, or of `τ` itself when `kind` is `None`.
fn metric_variation(
    config: &ExperimentConfig,
    map: &Map<'_>,
    metric: &Metric,
    kind: Option<EnergyKind>,
    max_mode: usize,
) -> polytension::Result<CheckResult> {
    let params = config.verify.as_ref().expect("validated");
    let grid = map.grid();
    let mut details = Vec::new();
    let mut worst = 0.0f64;
    for s in 0..params.samples {
        let omega = random::symmetric_tensor(grid, config.seed + METRIC_SEED_OFFSET + s, max_mode, params.amplitude)?;
        let (mismatch, detail) = match kind {
            Some(kind) => {
                let r = metric_variation_check(map, metric, &omega, kind, &params.steps)?;
                (r.mismatch, json!(r))
            }
            None => {
                let r = tension_metric_variation_check(map, metric, &omega, &params.steps)?;
                (r.mismatch, json!(r))
            }
        };
        worst = worst.max(mismatch);
        details.push(detail);
    }
    let name = match kind {
        Some(kind) => format!("metric_variation_{kind}"),
        None => CheckName::TensionMetricVariation.name().into(),
    };
    Ok(CheckResult::new(
        name,
        vec![Decision::at_most("worst_mismatch", worst, config.tolerances.variation)],
        json!(details),
    ))
}

fn pohozaev_task(config: &ExperimentConfig, map: &Map<'_>, tables: &mut Vec<Table>) -> Vec<CheckResult> {
    let params = config.pohozaev.as_ref().expect("validated");
    let tol = config.tolerances.pohozaev;
    let cases: Vec<_> = params
        .radii
        .iter()
        .flat_map(|&r| params.modes.iter().map(move |&mode| (r, mode)))
        .collect();
    let outcomes: Vec<_> = cases
        .par_iter()
        .map(|&(radius, mode)| {
            CutoffProfile::new(radius, params.family).and_then(|p| pohozaev_with_ledger(map, &p, mode))
        })
        .collect();
    let mut summary = Table::new(
        "pohozaev",
        &["radius", "mode", "lhs", "rhs", "correction", "residual", "max_term", "relative"],
    );
    let mut ledger_table = Table::new("pohozaev_ledger", &["radius", "mode", "step", "lhs", "rhs", "residual", "relative"]);
    let mut results = Vec::new();
    for ((radius, mode), outcome) in cases.into_iter().zip(outcomes) {
        let name = format!("pohozaev_{}_R{radius}", serde_name(&mode));
        let (report, ledger) = match outcome {
            Ok(v) => v,
            Err(e) => {
                results.push(CheckResult::failed(name, e));
                continue;
            }
        };
        let mode_name = serde_name(&mode);
        summary.push(vec![
            num(radius),
            mode_name.clone(),
            num(report.lhs),
            num(report.rhs),
            num(report.correction),
            num(report.residual),
            num(report.max_term),
            num(report.relative),
        ]);
        for s in &ledger {
            ledger_table.push(vec![
                num(radius),
                mode_name.clone(),
                s.step.clone(),
                num(s.lhs),
                num(s.rhs.iter().map(|t| t.value).sum()),
                num(s.residual),
                num(s.relative),
            ]);
        }
        let mut decisions = vec![Decision::at_most("relative", report.relative, tol)];
        if let Some(w) = worst_step(&ledger) {
            decisions.push(Decision::at_most(format!("ledger_{}", w.step), w.relative, tol));
        }
        results.push(CheckResult::new(name, decisions, json!({ "report": report, "ledger": ledger })));
    }
    tables.push(summary);
    tables.push(ledger_table);
    results
}

/// The studied residual at one refinement level.
fn level_residual(config: &ExperimentConfig, target: &Target, quantity: &Quantity, n: usize) -> anyhow::Result<f64> {
    let grid = config.grid.build_at(Some(n))?;
    let map = config.map.build(&grid, target)?;
    let metric = DomainMetric::flat(&grid);
    Ok(match *quantity {
        Quantity::ConservationS4 => conservation_residual(&Pullback::new(&map, &metric)?, Law::S4)?.report.relative,
        Quantity::ConservationS4ES => {
            conservation_residual(&Pullback::new(&map, &metric)?, Law::S4ES)?.report.relative
        }
        Quantity::Pohozaev { radius, mode, family } => {
            pohozaev_with_ledger(&map, &CutoffProfile::new(radius, family)?, mode)?.0.relative
        }
    })
}

fn convergence_task(
    config: &ExperimentConfig,
    target: &Target,
    params: &ConvergenceParams,
    tables: &mut Vec<Table>,
) -> CheckResult {
    let name = format!("convergence_{}", params.quantity.name());
    let residuals: anyhow::Result<Vec<f64>> = params
        .levels
        .par_iter()
        .map(|&n| level_residual(config, target, &params.quantity, n).with_context(|| format!("level N={n}")))
        .collect();
    let residuals = match residuals {
        Ok(r) => r,
        Err(e) => return CheckResult::failed(name, format!("{e:#}")),
    };
    let fit = match fit_order(&params.levels, &residuals, config.tolerances.saturation_floor) {
        Ok(f) => f,
        Err(e) => return CheckResult::failed(name, e),
    };
    let mut table = Table::new("convergence", &["n", "residual", "saturated", "local_order"]);
    let mut local = fit.local_orders.iter();
    let mut live_seen = 0;
    for level in &fit.levels {
        let order = if level.saturated {
            String::new()
        } else {
            live_seen += 1;
            if live_seen > 1 {
                local.next().map(|p| num(*p)).unwrap_or_default()
            } else {
                String::new()
            }
        };
        table.push(vec![
            level.n.to_string(),
            num(level.residual),
            level.saturated.to_string(),
            order,
        ]);
    }
    tables.push(table);

    let mut decisions = Vec::new();
    match (config.grid.scheme(), fit.order) {
        // Spectral schemes have no algebraic order; they pass once the finest
        // level meets the quantity's own tolerance.
        (DerivativeScheme::Spectral, _) | (_, None) => {
            let finest = *residuals.last().expect("at least three levels");
            let tolerance = match params.quantity {
                Quantity::ConservationS4 => config.tolerances.conservation_s4,
                Quantity::ConservationS4ES => config.tolerances.conservation_s4es,
                Quantity::Pohozaev { .. } => config.tolerances.pohozaev,
            };
            decisions.push(Decision::at_most("finest_residual", finest, tolerance));
        }
        (DerivativeScheme::FiniteDifference { order }, Some(p)) => {
            let min_order = params.min_order.unwrap_or(order as f64 - 1.0);
            decisions.push(Decision::at_least("fitted_order", p, min_order));
        }
    }
    CheckResult::new(name, decisions, json!(fit))
}
