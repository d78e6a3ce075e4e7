//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Runs without the libtest harness so the report is always visible.

use std::cell::Cell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use lindblad_riemann::chanrep::{isometry_defect, superop_to_choi};
use lindblad_riemann::experiments::{
    embed_against, initial_point, metric_comparison, optimize, rank_study, MetricVariant,
    RunOutcome, StudyOptions,
};
use lindblad_riemann::linalg::polar_factor;
use lindblad_riemann::optimizer::{LocalModel, TrustRegionProblem};
use lindblad_riemann::stiefel::tangency_defect;
use lindblad_riemann::*;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = std::result::Result<String, String>;

fn require(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn model(kind: ModelKind) -> LindbladModel {
    LindbladModel::new(kind, 1.0).unwrap()
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Runs shared between criteria.
#[derive(Default)]
struct Runs {
    pspl_r10: Option<RunOutcome>,
    histories: Vec<Vec<f64>>,
    points: Vec<IsometryVector>,
    rank_bounds: Vec<(String, usize, u128)>,
}

impl Runs {
    fn add(&mut self, run: &RunOutcome) {
        self.histories.push(run.record.cost_history.clone());
        self.points.push(run.initial.clone());
        self.points.push(run.record.final_point.clone());
    }
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0f64;
    for kind in [ModelKind::Kitaev, ModelKind::Pspl] {
        let dhat = model(kind).dissipator();
        for tau in [0.1, 0.5, 1.0] {
            let e = expm(&(dhat.matrix() * tau)).unwrap();
            let s = Superoperator::new(e.clone(), 2, 2).unwrap();
            let choi = superop_to_choi(&s).unwrap();
            let r = choi.natural_rank(1e-10);
            let x = StiefelPoint::new(kraus_to_stiefel(&choi_to_kraus(&choi, r).unwrap())).unwrap();
            let back = stiefel_to_superop(&x).unwrap();
            worst = worst.max((back.matrix() - &e).norm());
        }
    }
    require(worst < 1e-10, format!("max roundtrip error {worst:.2e} (< 1e-10)"))
}

fn criterion_2() -> Outcome {
    let mut ranks = Vec::new();
    for (kind, want) in [(ModelKind::Pspl, 10), (ModelKind::Kitaev, 2)] {
        let dhat = model(kind).dissipator();
        for tau in [0.1, 0.5, 1.0] {
            let s = Superoperator::new(expm(&(dhat.matrix() * tau)).unwrap(), 2, 2).unwrap();
            let r = superop_to_choi(&s).unwrap().natural_rank(1e-10);
            ranks.push((kind, tau, r, want));
        }
    }
    let ok = ranks.iter().all(|&(_, _, r, w)| r == w);
    let detail = ranks
        .iter()
        .map(|(k, t, r, _)| format!("{k} tau={t}: {r}"))
        .collect::<Vec<_>>()
        .join(", ");
    require(ok, detail)
}

fn criterion_3(runs: &mut Runs) -> Outcome {
    let opts = StudyOptions::default();
    let pspl = rank_study(&model(ModelKind::Pspl), 1.0, 1, &[2], 0, &opts).unwrap();
    let kit_ranks = [2, 3, 4, 5, 8, 10, 16];
    let kit = rank_study(&model(ModelKind::Kitaev), 0.5, 4, &kit_ranks, 0, &opts).unwrap();
    let sweep = experiments::trotter_rank_sweep(&model(ModelKind::Kitaev), 1.0, &[1, 2], &opts).unwrap();
    for row in &pspl.rows {
        runs.rank_bounds.push(("pspl tau=1 n_tau=1".into(), row.rank_before, pspl.rank_bound(row.rank)));
    }
    for row in &kit.rows {
        runs.rank_bounds.push(("kitaev tau=0.5 n_tau=4".into(), row.rank_before, kit.rank_bound(row.rank)));
    }
    let kit_before: Vec<usize> = kit.rows.iter().map(|r| r.rank_before).collect();
    let ok = pspl.exact_rank == 256
        && pspl.rows[0].rank_before == 53
        && kit.exact_rank == 45
        && kit_before.iter().all(|&r| r == 45)
        && sweep == vec![36, 45];
    require(
        ok,
        format!(
            "pspl exact {} R=2 {}; kitaev exact {} ansatz {:?}; kitaev trotter {:?}",
            pspl.exact_rank, pspl.rows[0].rank_before, kit.exact_rank, kit_before, sweep
        ),
    )
}

fn criterion_4() -> Outcome {
    let exact = exact_propagator(&model(ModelKind::Pspl), 1.0, 4).unwrap();
    let m3 = Objective::new(&exact, layer_schedule(1).unwrap(), 10, MetricParams::canonical()).unwrap();
    let m9 = Objective::new(&exact, layer_schedule(4).unwrap(), 10, MetricParams::canonical()).unwrap();
    require(
        m3.dof() == 450 && m9.dof() == 1350,
        format!("(3,2,10) -> {}, (9,2,10) -> {}", m3.dof(), m9.dof()),
    )
}

fn criterion_5() -> Outcome {
    let kit = model(ModelKind::Kitaev);
    let pts: Vec<(f64, f64)> = [4usize, 8, 16, 32]
        .iter()
        .map(|&n| ((n as f64).ln(), trotter_error(&kit, 1.0, n, 4).unwrap().ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    require((-slope - 2.0).abs() <= 0.3, format!("log-log slope {slope:.3} (order {:.3})", -slope))
}

fn criterion_6(runs: &mut Runs) -> Outcome {
    let opts = StudyOptions::default();
    let pspl = model(ModelKind::Pspl);
    let r10 = optimize(&pspl, 1.0, 1, 10, 100, &opts).unwrap();
    let r5 = optimize(&pspl, 1.0, 1, 5, 50, &opts).unwrap();
    let kit = optimize(&model(ModelKind::Kitaev), 0.5, 4, 2, 60, &opts).unwrap();

    let ratio10 = r10.record.final_cost() / r10.trotter_error;
    let below5 = r5.record.cost_history.iter().position(|&c| c < r5.trotter_error);
    let ratio_kit = kit.record.final_cost() / kit.record.initial_cost();
    let ok = ratio10 <= 0.2
        && below5.is_some_and(|i| i <= 50)
        && ratio_kit > 0.25
        && ratio_kit < 0.85;
    let detail = format!(
        "pspl R=10 final/trotter {ratio10:.4} (<= 0.2); pspl R=5 below trotter at iter {below5:?} (<= 50); \
         kitaev R=2 final/initial {ratio_kit:.3} (in (0.25, 0.85))"
    );
    runs.add(&r10);
    runs.add(&r5);
    runs.add(&kit);
    runs.pspl_r10 = Some(r10);
    require(ok, detail)
}

/// Objective wrapper recording the worst isometry defect of every retraction.
struct Audited<'a> {
    inner: &'a Objective,
    worst: Cell<f64>,
    retractions: Cell<usize>,
}

impl TrustRegionProblem for Audited<'_> {
    type Point = IsometryVector;
    type Frame = Vec<TangentBasis>;

    fn cost(&self, x: &IsometryVector) -> Result<f64> {
        self.inner.cost(x)
    }

    fn local_model(&self, x: &IsometryVector) -> Result<(LocalModel, Vec<TangentBasis>)> {
        self.inner.local_model_of(x)
    }

    fn retract(&self, x: &IsometryVector, f: &Vec<TangentBasis>, step: &DVector<f64>) -> Result<IsometryVector> {
        let y = TrustRegionProblem::retract(self.inner, x, f, step)?;
        for l in y.layers() {
            self.worst.set(self.worst.get().max(isometry_defect(l.matrix())));
        }
        self.retractions.set(self.retractions.get() + 1);
        Ok(y)
    }
}

fn criterion_7(runs: &mut Runs) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = Vec::new();
    let mut notes = Vec::new();

    // Tangent projection.
    let mut proj = 0.0f64;
    for (n, p) in [(8, 4), (40, 4), (12, 3)] {
        for _ in 0..10 {
            let x = polar_factor(&gaussian(n, p, &mut rng)).unwrap();
            let y = gaussian(n, p, &mut rng);
            let t = project_tangent(&y, &x);
            let nrm = project_normal(&y, &x);
            proj = proj
                .max((project_tangent(&t, &x) - &t).norm())
                .max(tangency_defect(&t, &x))
                .max(t.dot(&nrm).abs() / (1.0 + y.norm_squared()));
        }
    }
    notes.push(format!("projection {proj:.1e}"));
    if proj >= 1e-12 {
        failures.push("projection");
    }

    // Retractions inside real optimizer runs.
    let mut worst_iso = 0.0f64;
    let mut retractions = 0;
    let mut monotone = true;
    for (kind, tau, r, iters) in [(ModelKind::Kitaev, 0.5, 2, 20), (ModelKind::Pspl, 1.0, 3, 10)] {
        let m = model(kind);
        let exact = exact_propagator(&m, tau, 4).unwrap();
        let obj = Objective::new(&exact, layer_schedule(1).unwrap(), r, MetricParams::canonical()).unwrap();
        let audited = Audited {
            inner: &obj,
            worst: Cell::new(0.0),
            retractions: Cell::new(0),
        };
        let cfg = TrustRegionConfig {
            max_outer: iters,
            ..Default::default()
        };
        let rec = trust_region_run(&audited, initial_point(&m, tau, 1, r).unwrap(), &cfg).unwrap();
        worst_iso = worst_iso.max(audited.worst.get());
        retractions += audited.retractions.get();
        monotone &= rec.cost_history.windows(2).all(|w| w[1] <= w[0]);
    }
    for h in &runs.histories {
        monotone &= h.windows(2).all(|w| w[1] <= w[0]);
    }
    notes.push(format!("isometry {worst_iso:.1e} over {retractions} retractions"));
    if worst_iso >= 1e-12 {
        failures.push("isometry");
    }
    if !monotone {
        failures.push("monotone costs");
    }

    // Gradient against central differences along retraction curves.
    let pspl = model(ModelKind::Pspl);
    let exact = exact_propagator(&pspl, 1.0, 4).unwrap();
    let metric = MetricParams::canonical();
    let obj = Objective::new(&exact, layer_schedule(1).unwrap(), 10, metric).unwrap();
    let xs = initial_point(&pspl, 1.0, 1, 10).unwrap();
    let grads = obj.ambient_gradient(&xs).unwrap();
    let mut grad_err = 0.0f64;
    for _ in 0..10 {
        let zs: Vec<Mat> = xs
            .matrices()
            .iter()
            .map(|x| project_tangent(&gaussian(x.nrows(), x.ncols(), &mut rng), x))
            .collect();
        let norm = zs.iter().map(|z| z.norm_squared()).sum::<f64>().sqrt();
        let zs: Vec<Mat> = zs.iter().map(|z| z / norm).collect();
        let at = |t: f64| {
            let layers = xs
                .layers()
                .iter()
                .zip(&zs)
                .map(|(pt, z)| retract_polar(pt, &(z * t)).unwrap())
                .collect();
            obj.cost(&IsometryVector::new(layers, xs.schedule().clone()).unwrap()).unwrap()
        };
        let t = 1e-5;
        let fd = (at(t) - at(-t)) / (2.0 * t);
        let an: f64 = grads.iter().zip(&zs).map(|(g, z)| g.dot(z)).sum();
        grad_err = grad_err.max((fd - an).abs() / an.abs());
    }
    notes.push(format!("gradient rel {grad_err:.1e}"));
    if grad_err >= 1e-5 {
        failures.push("gradient");
    }

    // Hessian symmetry.
    let kit = model(ModelKind::Kitaev);
    let kexact = exact_propagator(&kit, 0.5, 4).unwrap();
    let kobj = Objective::new(&kexact, layer_schedule(1).unwrap(), 2, metric).unwrap();
    let kxs = initial_point(&kit, 0.5, 1, 2).unwrap();
    let h = kobj.build_hessian_unsymmetrized(&kxs).unwrap();
    let asym = (&h - h.transpose()).norm() / h.norm();
    notes.push(format!("hessian asym {asym:.1e}"));
    if asym >= 1e-4 {
        failures.push("hessian symmetry");
    }

    // Quadratic model remainder, Euclidean metric.
    let eobj = Objective::new(&kexact, layer_schedule(1).unwrap(), 2, MetricParams::euclidean()).unwrap();
    let (lm, bases) = eobj.local_model_of(&kxs).unwrap();
    let dir = DVector::from_fn(lm.gradient.len(), |_, _| StandardNormal.sample(&mut rng));
    // The unsquared norm is smooth only over steps short compared with
    // sqrt(f / curvature), which is about 1e-5 near a good Trotter point.
    let curv = dir.dot(&(&lm.hessian * &dir)).abs();
    let scale = (lm.cost / curv).sqrt();
    let remainder = |t: f64| {
        let step = &dir * t;
        let y = TrustRegionProblem::retract(&eobj, &kxs, &bases, &step).unwrap();
        let model = lm.cost + lm.gradient.dot(&step) + 0.5 * step.dot(&(&lm.hessian * &step));
        (eobj.cost(&y).unwrap() - model).abs()
    };
    let ratios: Vec<f64> = [5, 6, 7].map(|k| scale * 0.5f64.powi(k)).windows(2).map(|w| remainder(w[0]) / remainder(w[1])).collect();
    notes.push(format!("taylor ratios {:.2}/{:.2}", ratios[0], ratios[1]));
    if ratios.iter().any(|r| !(6.0..=10.0).contains(r)) {
        failures.push("taylor remainder");
    }

    // Trace preservation and rank bound.
    let mut trace = 0.0f64;
    for xs in &runs.points {
        trace = trace.max(compose_global(xs, 4).unwrap().trace_defect());
    }
    notes.push(format!("trace {trace:.1e}"));
    if trace >= 1e-10 {
        failures.push("trace");
    }
    let bound_ok = runs.rank_bounds.iter().all(|(_, rn, b)| (*rn as u128) <= *b);
    if !bound_ok || runs.rank_bounds.is_empty() {
        failures.push("rank bound");
    }
    notes.push(format!("rank bound on {} rows", runs.rank_bounds.len()));

    let detail = notes.join("; ");
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; failed: {}", failures.join(", ")))
    }
}

fn criterion_8(runs: &mut Runs) -> Outcome {
    let opts = StudyOptions::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for (kind, rank) in [(ModelKind::Kitaev, 2), (ModelKind::Pspl, 10)] {
        let m = model(kind);
        let mut optimized = Vec::new();
        for n_tau in [1, 2] {
            let run = match (kind, n_tau, &runs.pspl_r10) {
                (ModelKind::Pspl, 1, Some(r)) => r.clone(),
                // The m = 5, R = 10 problem has 750 DOF; 40 iterations keep
                // the run within desk-scale time.
                (ModelKind::Pspl, _, _) => optimize(&m, 1.0, n_tau, rank, 40, &opts).unwrap(),
                _ => optimize(&m, 1.0, n_tau, rank, 100, &opts).unwrap(),
            };
            if !(kind == ModelKind::Pspl && n_tau == 1) {
                runs.add(&run);
            }
            optimized.push((n_tau, run));
        }
        let exact6 = exact_propagator(&m, 1.0, 6).unwrap();
        for (n_tau, run) in &optimized {
            let (t6, r6) = embed_against(&run.record.final_point, &m, 1.0, &exact6).unwrap();
            let r4 = run.record.final_cost();
            let below = r6 < t6;
            let log_ratio = (r6 / r4).log10();
            let follows = kind != ModelKind::Kitaev || log_ratio.abs() < 0.5;
            ok &= below && follows;
            // Frobenius norms of local errors pick up sqrt(4096 / 256) = 4 from
            // the two extra sites alone; the normalized ratio is shown for reference.
            lines.push(format!(
                "{kind} n_tau={n_tau}: N4 riem {r4:.3e} trot {:.3e}, N6 riem {r6:.3e} trot {t6:.3e}, \
                 log10 ratio {log_ratio:.2} (per-dimension {:.2})",
                run.trotter_error,
                log_ratio - 4f64.log10()
            ));
        }
    }
    require(ok, lines.join("; "))
}

fn criterion_9(runs: &mut Runs) -> Outcome {
    let runs9 = metric_comparison(&model(ModelKind::Kitaev), 0.5, 4, 2, 20, &StudyOptions::default()).unwrap();
    let final_of = |v: MetricVariant| *runs9.iter().find(|t| t.key == v).unwrap().costs.last().unwrap();
    let canon = final_of(MetricVariant::CanonicalCanonical);
    let eucl = final_of(MetricVariant::EuclideanCanonical);
    let unit = final_of(MetricVariant::EuclideanProjectedUnit);
    for t in &runs9 {
        runs.histories.push(t.costs.clone());
    }
    require(
        canon <= eucl && unit > canon && unit > eucl,
        format!("canonical {canon:.4e} <= euclidean {eucl:.4e}; projected-unit {unit:.4e} highest"),
    )
}

fn criterion_10() -> Outcome {
    use lindblad_riemann_cli::commands;
    use lindblad_riemann_cli::{RunConfig, Settings};
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let files = ["cost_history.csv", "error_curve.csv", "convergence.csv", "metrics.csv"];
    for d in &dirs {
        let cfg = RunConfig::from_settings(Settings {
            model: Some("kitaev".into()),
            tau: Some(0.5),
            rank: Some(2),
            iters: Some(5),
            n_taus: Some(vec![1, 2]),
            samples: Some(50),
            seed: Some(7),
            out_dir: Some(d.path().to_path_buf()),
            ..Default::default()
        })
        .unwrap();
        commands::optimize(&cfg).unwrap();
        commands::benchmark(&cfg).unwrap();
        commands::converge(&cfg).unwrap();
        commands::metrics(&cfg).unwrap();
    }
    let same: Vec<bool> = files
        .iter()
        .map(|f| std::fs::read(dirs[0].path().join(f)).unwrap() == std::fs::read(dirs[1].path().join(f)).unwrap())
        .collect();
    require(same.iter().all(|&s| s), format!("{} CSV files compared, identical: {same:?}", files.len()))
}

fn main() {
    let mut runs = Runs::default();
    let mut results = Vec::new();
    let mut record = |n: usize, name: &str, f: &mut dyn FnMut(&mut Runs) -> Outcome, runs: &mut Runs| {
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(|| f(runs))).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (tag, detail) = match &out {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        let line = format!("criterion {n:>2} {tag} [{name}] {detail} ({:.0?})", start.elapsed());
        println!("{line}");
        results.push((n, out.is_ok(), line));
    };
    record(1, "channel roundtrip", &mut |_| criterion_1(), &mut runs);
    record(2, "natural Choi ranks", &mut |_| criterion_2(), &mut runs);
    record(3, "rank tables", &mut criterion_3, &mut runs);
    record(4, "DOF accounting", &mut |_| criterion_4(), &mut runs);
    record(5, "Trotter order", &mut |_| criterion_5(), &mut runs);
    record(6, "optimizer efficacy", &mut criterion_6, &mut runs);
    record(9, "metric study", &mut criterion_9, &mut runs);
    record(8, "embedding", &mut criterion_8, &mut runs);
    record(7, "property suite", &mut criterion_7, &mut runs);
    record(10, "determinism", &mut |_| criterion_10(), &mut runs);

    results.sort_by_key(|r| r.0);
    println!("\nacceptance summary");
    for (_, _, line) in &results {
        println!("{line}");
    }
    let failed = results.iter().filter(|r| !r.1).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
