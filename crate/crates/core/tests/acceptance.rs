//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion
//! followed by the individual checks behind it.

use std::time::{Duration, Instant};

use decoupled_gzsl::data::{load_dataset, make_synthetic, save_dataset, ClassId, GzslDataset, SyntheticSpec};
use decoupled_gzsl::evalcls::{evaluate_gzsl, harmonic_mean, metrics_csv, summary_line, EvalConfig, FixedRows};
use decoupled_gzsl::gradcheck::{run_gradcheck, suite};
use decoupled_gzsl::losses::{gradient_penalty, interpolate};
use decoupled_gzsl::model::{generate_unconditional, regressor_network, structured_prior, DecGan, Network};
use decoupled_gzsl::numcore::{Matrix, Rng, Tape};
use decoupled_gzsl::trainer::{
    counts_from_csv, init_state, pretrain_regressor, regressor_objective, run_ablations, run_pipeline, run_stage,
    summarize, train, Ablation, AblationSummary, Net, StageEpochs, TrainConfig,
};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const GRADCHECK_BUDGET: Duration = Duration::from_secs(30);
const PIPELINE_BUDGET: Duration = Duration::from_secs(300);
const FULL_H_MIN: f64 = 0.85;
const ORACLE_H_MIN: f64 = 0.99;
const ABLATION_MARGIN: f64 = 0.02;
const STG3_RATIO: f64 = 0.2;
const TABLE_TOL: f64 = 0.1;

struct Criterion {
    id: u8,
    title: &'static str,
    checks: Vec<(String, bool)>,
}

impl Criterion {
    fn new(id: u8, title: &'static str) -> Self {
        Criterion {
            id,
            title,
            checks: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, detail: impl Into<String>) {
        self.checks.push((detail.into(), ok));
    }

    fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.1)
    }

    fn print(&self) {
        println!("{} [{}] {}", if self.passed() { "PASS" } else { "FAIL" }, self.id, self.title);
        for (detail, ok) in &self.checks {
            println!("       {} {detail}", if *ok { "ok  " } else { "FAIL" });
        }
    }
}

fn gradient_oracle() -> Criterion {
    let mut c = Criterion::new(1, "finite-difference gradient oracle, first and second order");
    let start = Instant::now();
    let report = run_gradcheck(0).expect("gradcheck runs");
    let elapsed = start.elapsed();
    for r in &report.ops {
        c.check(
            r.passed() && r.points == 10,
            format!(
                "{:<28} order {} max rel err {:.2e} (tol {:.0e})",
                r.op, r.order, r.max_rel_err, r.tolerance
            ),
        );
    }
    let tols_ok = report
        .ops
        .iter()
        .all(|r| r.tolerance == if r.order == 1 { 1e-5 } else { 1e-4 });
    c.check(tols_ok, "tolerances 1e-5 first order, 1e-4 second order");
    c.check(report.ops.len() == suite().len(), format!("{} cases reported", report.ops.len()));
    c.check(elapsed < GRADCHECK_BUDGET, format!("runtime {elapsed:.2?} < {GRADCHECK_BUDGET:?}"));
    c
}

fn penalty_closed_form() -> Criterion {
    let mut c = Criterion::new(2, "linear-critic gradient penalty closed form");
    let mut rng = Rng::new(2);
    let mut worst: f64 = 0.0;
    let mut positive_off_sphere = true;
    for trial in 0..20 {
        let d = 1 + trial % 7;
        let mut w = rng.normal_matrix(d, 1, 1.5);
        if trial % 4 == 0 {
            // unit norm
            let n = w.norm_sq().sqrt();
            w = w.scale(1.0 / n);
        }
        let critic = regressor_network(w.clone(), rng.normal_matrix(1, 1, 1.0)).unwrap();
        let real = rng.normal_matrix(6, d, 3.0);
        let fake = rng.normal_matrix(6, d, 3.0);
        let x_hat = interpolate(&real, &fake, &mut rng).unwrap();
        let mut tape = Tape::new();
        let bound = critic.bind(&mut tape);
        let node = gradient_penalty(&mut tape, &bound, &x_hat).unwrap();
        let p = tape.scalar(node);
        let expected = (w.norm_sq().sqrt() - 1.0).powi(2);
        worst = worst.max((p - expected).abs());
        let unit = (w.norm_sq().sqrt() - 1.0).abs() < 1e-12;
        if unit {
            c.check(p.abs() < 1e-10, format!("unit-norm w (d={d}): penalty {p:.1e}"));
        } else if p <= 0.0 {
            positive_off_sphere = false;
        }
    }
    c.check(worst < 1e-10, format!("max |penalty - (|w|-1)^2| = {worst:.1e} over 20 critics"));
    c.check(positive_off_sphere, "penalty > 0 whenever |w| != 1");
    c
}

fn metric_arithmetic() -> Criterion {
    let mut c = Criterion::new(3, "harmonic mean reproduces the reference H values within 0.1");
    // (row, dataset, a_u, a_s, reference H), percentages.
    let rows: [(&str, &str, f64, f64, f64); 9] = [
        ("full", "FLO", 73.0, 92.2, 81.5),
        ("full", "SUN", 57.2, 44.3, 49.9),
        ("full", "CUB", 59.1, 68.4, 63.4),
        ("Stg1", "FLO", 58.1, 79.8, 67.2),
        ("Stg1", "SUN", 45.0, 34.5, 39.1),
        ("Stg1", "CUB", 44.1, 56.7, 49.8),
        ("Stg3", "FLO", 4.7, 82.2, 8.9),
        ("Stg3", "SUN", 1.2, 30.1, 2.3),
        ("Stg3", "CUB", 2.0, 35.3, 3.8),
    ];
    for (row, ds, a_u, a_s, expected) in rows {
        let h = 100.0 * harmonic_mean(a_s / 100.0, a_u / 100.0).unwrap();
        let gap = (h - expected).abs();
        c.check(
            gap <= TABLE_TOL + 1e-9,
            format!("{row:<4} {ds}: H({a_u}, {a_s}) = {h:.2} vs {expected} (gap {gap:.2})"),
        );
    }
    c
}

fn oracle_generator(spec: &SyntheticSpec) -> FixedRows {
    let means = spec.class_means().unwrap();
    FixedRows(
        (spec.n_seen_classes..spec.n_classes())
            .map(|y| (y as ClassId, means.row(y).to_vec()))
            .collect(),
    )
}

fn summary<'a>(rows: &'a [AblationSummary], a: Ablation) -> &'a AblationSummary {
    rows.iter().find(|r| r.ablation == a).expect("ablation ran")
}

fn describe(s: &AblationSummary) -> String {
    format!(
        "{:<8} mean a_u {:.4} a_s {:.4} H {:.4} ({} runs, {} failed)",
        s.ablation.name(),
        s.a_u,
        s.a_s,
        s.h,
        s.runs,
        s.failures
    )
}

fn synthetic_end_to_end(dataset: &GzslDataset, spec: &SyntheticSpec, full: &AblationSummary, elapsed: Duration) -> Criterion {
    let mut c = Criterion::new(4, "synthetic benchmark end to end");
    c.check(
        spec.n_seen_classes == 10
            && spec.n_unseen_classes == 5
            && spec.feature_dim == 64
            && spec.embed_dim == 16
            && spec.cluster_std == 0.1,
        "default benchmark: 10 seen / 5 unseen, 64-d features, 16-d embeddings, std 0.1",
    );
    c.check(
        full.runs == SEEDS.len() && full.h >= FULL_H_MIN,
        format!("{} >= {FULL_H_MIN}", describe(full)),
    );
    c.check(elapsed < PIPELINE_BUDGET, format!("5 full runs took {elapsed:.1?} < {PIPELINE_BUDGET:?}"));
    let oracle = evaluate_gzsl(&oracle_generator(spec), dataset, &EvalConfig::default(), &mut Rng::new(0)).unwrap();
    c.check(
        oracle.metrics.h >= ORACLE_H_MIN,
        format!("oracle generator {} >= {ORACLE_H_MIN}", summary_line(&oracle.metrics)),
    );
    c
}

fn ablation_ordering(rows: &[AblationSummary]) -> Criterion {
    let mut c = Criterion::new(5, "ablation ordering on the synthetic benchmark");
    let full = summary(rows, Ablation::Full);
    for &a in &[Ablation::Full, Ablation::Stg1, Ablation::Stg3, Ablation::NoStg3, Ablation::Baseline] {
        let s = summary(rows, a);
        c.check(s.runs == SEEDS.len(), describe(s));
    }
    let stg1 = summary(rows, Ablation::Stg1).h;
    let no3 = summary(rows, Ablation::NoStg3).h;
    let stg3 = summary(rows, Ablation::Stg3).h;
    let base = summary(rows, Ablation::Baseline).h;
    c.check(
        full.h - stg1 >= ABLATION_MARGIN,
        format!("H(full) {:.4} > H(Stg1) {stg1:.4} by >= {ABLATION_MARGIN}", full.h),
    );
    c.check(
        full.h - no3 >= ABLATION_MARGIN,
        format!("H(full) {:.4} > H(-Stg3) {no3:.4} by >= {ABLATION_MARGIN}", full.h),
    );
    c.check(
        STG3_RATIO * full.h - stg3 >= ABLATION_MARGIN,
        format!(
            "H(Stg3) {stg3:.4} < {STG3_RATIO} * H(full) = {:.4} by >= {ABLATION_MARGIN}",
            STG3_RATIO * full.h
        ),
    );
    c.check(full.h >= base, format!("H(full) {:.4} >= H(baseline) {base:.4}", full.h));
    c
}

fn smoke_config() -> TrainConfig {
    TrainConfig {
        epochs: StageEpochs { e1: 2, e2: 2, e3: 2 },
        ..TrainConfig::synthetic_benchmark()
    }
}

fn networks(m: &DecGan) -> [&Network; 5] {
    [&m.g1, &m.g2, &m.gc, &m.d0, &m.dc]
}

fn unchanged(a: &DecGan, b: &DecGan) -> [bool; 5] {
    let (x, y) = (networks(a), networks(b));
    [0, 1, 2, 3, 4].map(|i| x[i].bitwise_eq(y[i]))
}

fn structural_invariants(dataset: &GzslDataset) -> Criterion {
    let mut c = Criterion::new(6, "structural invariants");
    let config = smoke_config();
    let view = dataset.training_view();

    // Composition, on initial and trained weights.
    let init = init_state(&view, &config).unwrap().models;
    let trained = train(&view, &config).unwrap().models;
    let mut composition = true;
    for m in [&init, &trained] {
        let z = m.sample_noise(256, &mut Rng::new(6));
        let direct = generate_unconditional(&m.g1, &m.g2, &z).unwrap();
        let two_step = m.g2.forward(&structured_prior(&m.g1, &z).unwrap()).unwrap();
        let mut tape = Tape::new();
        let (b1, b2) = (m.g1.bind(&mut tape), m.g2.bind(&mut tape));
        let zn = tape.leaf(z.clone());
        let s = b1.forward(&mut tape, zn).unwrap();
        let x = b2.forward(&mut tape, s).unwrap();
        composition &= direct.bitwise_eq(&two_step) && direct.bitwise_eq(tape.value(x));
    }
    c.check(composition, "G2(G1(z)) equals G0(z) bitwise, eager and taped, before and after training");

    // Stage isolation.
    let mut st = init_state(&view, &config).unwrap();
    run_stage(&mut st, 1, &view, &config).unwrap();
    let s1 = st.models.clone();
    run_stage(&mut st, 2, &view, &config).unwrap();
    let s2 = st.models.clone();
    run_stage(&mut st, 3, &view, &config).unwrap();
    let u2 = unchanged(&s1, &s2);
    let u3 = unchanged(&s2, &st.models);
    c.check(u2[2] && u2[4] && !u2[0] && !u2[3], "stage 2 leaves Gc and Dc bitwise unchanged");
    c.check(u3[0] && u3[1] && u3[4] && !u3[2], "stage 3 leaves G1, G2 and Dc bitwise unchanged");

    // Disjointness at load time.
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_dataset(dataset, dir.path()).unwrap();
    let splits_path = dir.path().join("splits.json");
    let mut splits: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&splits_path).unwrap()).unwrap();
    let leaked = splits["seen_classes"][0].clone();
    splits["unseen_classes"].as_array_mut().unwrap().push(leaked);
    std::fs::write(&splits_path, serde_json::to_string(&splits).unwrap()).unwrap();
    let err = load_dataset(&manifest).map(|_| ()).unwrap_err().to_string();
    c.check(err.contains("disjointness"), format!("overlapping class lists rejected: {err}"));

    // Firewall.
    let mut labels = dataset.unseen_pool_labels().to_vec();
    let shift = labels.len() / 3;
    labels.rotate_left(shift);
    let relabeled = dataset.with_unseen_pool_labels(labels).unwrap();
    let a = train(&view, &config).unwrap();
    let b = train(&relabeled.training_view(), &config).unwrap();
    c.check(
        relabeled.unseen_pool_labels() != dataset.unseen_pool_labels()
            && unchanged(&a.models, &b.models) == [true; 5]
            && a.telemetry.to_csv() == b.telemetry.to_csv(),
        "permuted unseen-pool labels leave models and telemetry bitwise identical",
    );

    // Determinism through files.
    let mut bytes = Vec::new();
    for run in 0..2 {
        let out = run_pipeline(dataset, &config).unwrap();
        let path = dir.path().join(format!("metrics_{run}.csv"));
        std::fs::write(&path, metrics_csv(&out.evaluation.metrics, dataset.seen_classes())).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    c.check(bytes[0] == bytes[1] && !bytes[0].is_empty(), "two identical runs write byte-identical metrics CSVs");
    c
}

fn regressor_pretraining() -> Criterion {
    let mut c = Criterion::new(7, "closed-form regressor pretraining");
    let mut rng = Rng::new(7);
    let x = rng.normal_matrix(300, 20, 1.0);
    let w = rng.normal_matrix(20, 6, 1.0);
    let b = rng.normal_matrix(1, 6, 1.0);
    let target = x.matmul(&w).unwrap().add_row(&b).unwrap();
    let a = pretrain_regressor(&x, &target, 0.0).unwrap();
    let err = a.layers()[0]
        .weight
        .max_abs_diff(&w)
        .max(a.layers()[0].bias.max_abs_diff(&b))
        .max(a.forward(&x).unwrap().max_abs_diff(&target));
    c.check(err < 1e-8, format!("exact linear map recovered, max abs error {err:.1e}"));

    let (n, d, e, ridge) = (120, 8, 4, 0.3);
    let x = rng.normal_matrix(n, d, 1.0);
    let noisy = x
        .matmul(&rng.normal_matrix(d, e, 1.0))
        .unwrap()
        .add(&rng.normal_matrix(n, e, 0.5))
        .unwrap();
    let closed = pretrain_regressor(&x, &noisy, ridge).unwrap();
    let closed_obj = regressor_objective(&closed, &x, &noisy, ridge).unwrap();
    // Plain gradient descent on [W; b] with step 1/L.
    let xa = x.concat_cols(&Matrix::filled(n, 1, 1.0)).unwrap();
    let gram = xa.matmul_t(true, &xa, false).unwrap();
    let lipschitz = 2.0 * ((0..=d).map(|i| gram.get(i, i)).sum::<f64>() + ridge);
    let mut theta = Matrix::zeros(d + 1, e);
    for _ in 0..5000 {
        let resid = xa.matmul(&theta).unwrap().sub(&noisy).unwrap();
        let mut grad = xa.matmul_t(true, &resid, false).unwrap().scale(2.0);
        for i in 0..d {
            for j in 0..e {
                grad.set(i, j, grad.get(i, j) + 2.0 * ridge * theta.get(i, j));
            }
        }
        theta = theta.sub(&grad.scale(1.0 / lipschitz)).unwrap();
    }
    let rows: Vec<usize> = (0..d).collect();
    let gd = regressor_network(theta.select_rows(&rows), theta.select_rows(&[d])).unwrap();
    let gd_obj = regressor_objective(&gd, &x, &noisy, ridge).unwrap();
    let gap = (gd_obj - closed_obj).abs();
    c.check(gap < 1e-4, format!("gradient-descent oracle objective gap {gap:.1e} < 1e-4"));
    c
}

fn update_bookkeeping(dataset: &GzslDataset) -> Criterion {
    let mut c = Criterion::new(8, "k critic updates per generator update in every stage");
    let config = smoke_config();
    c.check(config.k == 5, format!("k = {}", config.k));
    let out = run_pipeline(dataset, &config).unwrap();
    let counts = counts_from_csv(&out.telemetry().to_csv()).unwrap();
    c.check(counts.len() == 3, format!("{} stages in telemetry", counts.len()));
    for (stage, n) in counts {
        let pairs: &[(Net, Net)] = match stage {
            1 => &[(Net::D0, Net::G0), (Net::Dc, Net::Gc)],
            2 => &[(Net::D0, Net::G0)],
            _ => &[(Net::D0, Net::Gc)],
        };
        for &(critic, generator) in pairs {
            let (k_c, k_g) = (n.get(critic), n.get(generator));
            c.check(
                k_g > 0 && k_c == 5 * k_g,
                format!("stage {stage}: {} = {k_c}, {} = {k_g}", critic.name(), generator.name()),
            );
        }
    }
    c
}

#[test]
fn acceptance() {
    let spec = SyntheticSpec::default();
    let dataset = make_synthetic(&spec).unwrap();
    let base = TrainConfig::synthetic_benchmark();

    let start = Instant::now();
    let mut records = run_ablations(&dataset, &base, &[Ablation::Full], &SEEDS, |_| {});
    let full_elapsed = start.elapsed();
    records.extend(run_ablations(
        &dataset,
        &base,
        &[Ablation::Stg1, Ablation::Stg3, Ablation::NoStg3, Ablation::Baseline],
        &SEEDS,
        |_| {},
    ));
    let rows = summarize(&records);

    let criteria = [
        gradient_oracle(),
        penalty_closed_form(),
        metric_arithmetic(),
        synthetic_end_to_end(&dataset, &spec, summary(&rows, Ablation::Full), full_elapsed),
        ablation_ordering(&rows),
        structural_invariants(&dataset),
        regressor_pretraining(),
        update_bookkeeping(&dataset),
    ];
    for c in &criteria {
        c.print();
    }
    let failed: Vec<u8> = criteria.iter().filter(|c| !c.passed()).map(|c| c.id).collect();
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed.len(),
        criteria.len()
    );
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
