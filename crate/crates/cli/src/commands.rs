use std::path::{Path, PathBuf};

use lindblad_riemann::experiments::{
    self, convergence_study, embedding_study, error_curve, metric_comparison, rank_study,
    trotter_rank_sweep,
};
use lindblad_riemann::optimizer::StopReason;
use lindblad_riemann::{exact_propagator, layer_schedule, LindbladModel, MetricParams, ModelKind, Objective};
use serde::Serialize;

use crate::archive::{self, ArchiveHeader};
use crate::config::{directions_label, RunConfig};
use crate::error::CliError;
use crate::output::{num, write_json, Table};

pub const ARCHIVE_STEM: &str = "isometries";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizeSummary {
    pub schema: String,
    pub model: String,
    pub gamma: f64,
    pub tau: f64,
    pub n_tau: usize,
    pub sites: usize,
    pub rank: usize,
    pub iters: usize,
    pub alpha0: f64,
    pub alpha1: f64,
    pub directions: String,
    pub seed: u64,
    pub dof: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub trotter_error: f64,
    pub iterations: usize,
    pub accepted_steps: usize,
    pub stop: String,
}

fn stop_label(s: StopReason) -> &'static str {
    match s {
        StopReason::MaxIterations => "max-iterations",
        StopReason::SmallGradient => "small-gradient",
        StopReason::SmallCost => "small-cost",
    }
}

/// Cost history, isometry archive and summary for one optimization.
pub fn optimize(cfg: &RunConfig) -> Result<(OptimizeSummary, Vec<PathBuf>), CliError> {
    let model = cfg.lindblad_model()?;
    let run = experiments::optimize(&model, cfg.tau, cfg.n_tau, cfg.rank, cfg.iters, &cfg.study_options())?;
    let rec = &run.record;

    let mut history = Table::new("cost_history", 1, &["iter", "cost", "rho", "delta", "accepted"]);
    for i in 0..rec.cost_history.len() {
        history.push(vec![
            i.to_string(),
            num(rec.cost_history[i]),
            num(rec.rho_history[i]),
            num(rec.radius_history.get(i).copied().unwrap_or(f64::NAN)),
            rec.accepted[i].to_string(),
        ]);
    }
    let history_path = cfg.out_dir.join("cost_history.csv");
    history.write(&history_path)?;

    let header = ArchiveHeader {
        version: archive::VERSION,
        model: cfg.model.to_string(),
        gamma: cfg.gamma,
        tau: cfg.tau,
        n_tau: cfg.n_tau,
        sites: cfg.sites,
        local_dim: model.local_dim(),
        rank: cfg.rank,
        m: rec.final_point.m(),
        n: rec.final_point.n(),
        p: rec.final_point.p(),
        alpha0: cfg.metric.alpha0(),
        alpha1: cfg.metric.alpha1(),
    };
    let (bin, sidecar) = archive::save(&cfg.out_dir, ARCHIVE_STEM, &header, &rec.final_point)?;

    let summary = OptimizeSummary {
        schema: "lindblad-riemann/summary/v1".into(),
        model: cfg.model.to_string(),
        gamma: cfg.gamma,
        tau: cfg.tau,
        n_tau: cfg.n_tau,
        sites: cfg.sites,
        rank: cfg.rank,
        iters: cfg.iters,
        alpha0: cfg.metric.alpha0(),
        alpha1: cfg.metric.alpha1(),
        directions: directions_label(cfg.directions).into(),
        seed: cfg.seed,
        dof: run.dof,
        initial_cost: rec.initial_cost(),
        final_cost: rec.final_cost(),
        trotter_error: run.trotter_error,
        iterations: rec.iterations(),
        accepted_steps: rec.accepted.iter().skip(1).filter(|&&a| a).count(),
        stop: stop_label(rec.stop).into(),
    };
    let summary_path = cfg.out_dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    Ok((summary, vec![history_path, bin, sidecar, summary_path]))
}

/// Cost of an archived run, recomputed from scratch.
pub fn archived_cost(sidecar: &Path) -> Result<f64, CliError> {
    let (h, xs) = archive::load(sidecar)?;
    let kind: ModelKind = h.model.parse()?;
    let model = LindbladModel::new(kind, h.gamma)?;
    let exact = exact_propagator(&model, h.tau, h.sites)?;
    let metric = MetricParams::new(h.alpha0, h.alpha1)?;
    let objective = Objective::new(&exact, layer_schedule(h.n_tau)?, h.rank, metric)?;
    Ok(objective.cost(&xs)?)
}

pub fn benchmark(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.lindblad_model()?;
    let curve = error_curve(
        &model,
        cfg.tau,
        cfg.rank,
        &cfg.n_taus,
        cfg.iters,
        cfg.samples,
        cfg.seed,
        &cfg.study_options(),
    )?;
    let mut t = Table::new("error_curve", 1, &["n_tau", "scheme", "avg_error", "n_samples", "seed"]);
    for row in &curve.rows {
        for (scheme, err) in [("trotter", row.trotter), ("riemannian", row.riemannian)] {
            t.push(vec![
                row.n_tau.to_string(),
                scheme.into(),
                num(err),
                curve.n_samples.to_string(),
                curve.seed.to_string(),
            ]);
        }
    }
    let path = cfg.out_dir.join("error_curve.csv");
    t.write(&path)?;
    Ok(vec![path])
}

pub fn ranks(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.lindblad_model()?;
    let opts = cfg.study_options();
    let study = rank_study(&model, cfg.tau, cfg.n_tau, &cfg.ranks, cfg.iters, &opts)?;
    let mut t = Table::new(
        "ranks",
        1,
        &["rank", "r_n", "r_n_opt", "exact_r_n", "initial_cost", "final_cost"],
    );
    for row in &study.rows {
        t.push(vec![
            row.rank.to_string(),
            row.rank_before.to_string(),
            row.rank_after.to_string(),
            study.exact_rank.to_string(),
            num(row.initial_cost),
            num(row.final_cost),
        ]);
    }
    let ranks_path = cfg.out_dir.join("ranks.csv");
    t.write(&ranks_path)?;

    let sweep = trotter_rank_sweep(&model, cfg.tau, &cfg.n_taus, &opts)?;
    let mut t = Table::new("trotter_ranks", 1, &["n_tau", "r_n"]);
    for (n, r) in cfg.n_taus.iter().zip(sweep) {
        t.push(vec![n.to_string(), r.to_string()]);
    }
    let sweep_path = cfg.out_dir.join("trotter_ranks.csv");
    t.write(&sweep_path)?;
    Ok(vec![ranks_path, sweep_path])
}

pub fn embed(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.lindblad_model()?;
    let rows = embedding_study(
        &model,
        cfg.tau,
        cfg.rank,
        &cfg.n_taus,
        cfg.iters,
        &cfg.target_sites,
        &cfg.study_options(),
    )?;
    let mut t = Table::new("embedding", 1, &["n_tau", "sites", "trotter_error", "riemannian_error"]);
    for r in &rows {
        t.push(vec![r.n_tau.to_string(), r.sites.to_string(), num(r.trotter), num(r.riemannian)]);
    }
    let path = cfg.out_dir.join("embedding.csv");
    t.write(&path)?;
    Ok(vec![path])
}

pub fn metrics(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.lindblad_model()?;
    let runs = metric_comparison(&model, cfg.tau, cfg.n_tau, cfg.rank, cfg.iters, &cfg.study_options())?;
    let mut t = Table::new("metrics", 1, &["iter", "variant", "cost"]);
    for run in &runs {
        for (i, c) in run.costs.iter().enumerate() {
            t.push(vec![i.to_string(), run.key.label().into(), num(*c)]);
        }
    }
    let path = cfg.out_dir.join("metrics.csv");
    t.write(&path)?;
    Ok(vec![path])
}

pub fn converge(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.lindblad_model()?;
    let runs = convergence_study(&model, cfg.tau, cfg.rank, &cfg.n_taus, cfg.iters, &cfg.study_options())?;
    let mut t = Table::new("convergence", 1, &["n_tau", "iter", "normalized_cost"]);
    for run in &runs {
        for (i, c) in run.costs.iter().enumerate() {
            t.push(vec![run.key.to_string(), i.to_string(), num(*c)]);
        }
    }
    let path = cfg.out_dir.join("convergence.csv");
    t.write(&path)?;
    Ok(vec![path])
}
