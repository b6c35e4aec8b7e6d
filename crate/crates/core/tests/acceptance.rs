//! Acceptance suite. Prints one PASS/FAIL line per criterion and a count of
//! failures; with `ACCEPTANCE_STRICT=1` any failure also makes the process
//! exit nonzero. `ACCEPTANCE_ONLY=1,5,6` runs a subset.

mod common;

use std::time::Instant;

use marflm::estimators::{
    estimate, fit_observance, kkt_violation, lambda_grid, lambda_max, lasso_path, FitOptions,
    FitPlan, MarSample, Method,
};
use marflm::functional::{fpc_decompose, DEFAULT_VAR_CUTOFF};
use marflm::gof::{
    build_a_matrix, golden_section_multipliers, pcvm_statistic, wild_bootstrap_test, GOLDEN_HIGH,
    GOLDEN_LOW, GOLDEN_LOW_PROBABILITY,
};
use marflm::rng::rng_from;
use marflm::simulation::{
    beta_curve, gen_missing, gen_ou_sample, generate, mc_experiment, DgpConfig, McConfig, McReport,
};
use marflm::Grid;
use rand::Rng;

const SEED: u64 = 20_240_601;

type Check = (bool, String);

fn mc(config: McConfig) -> McReport {
    let report = mc_experiment(&config).expect("Monte Carlo run");
    assert_eq!(report.total_failures(), 0, "failed replicates in {:?}", config);
    report
}

fn rates(report: &McReport, methods: &[Method]) -> Vec<(Method, f64)> {
    let cell = &report.cells[0];
    methods
        .iter()
        .map(|&m| (m, cell.rejection_rate(m).unwrap()))
        .collect()
}

fn fmt_rates(r: &[(Method, f64)]) -> String {
    r.iter()
        .map(|(m, v)| format!("{m}={v:.3}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn size_control() -> Check {
    let report = mc(McConfig {
        betas: vec![1],
        etas: vec![1.0],
        ns: vec![100],
        deltas: vec![0.0],
        replications: 500,
        bootstrap: 500,
        alpha: 0.05,
        methods: Method::MAR.to_vec(),
        seed: SEED,
        ..Default::default()
    });
    let r = rates(&report, &Method::MAR);
    let ok = r.iter().all(|(_, v)| (0.03..=0.08).contains(v));
    (ok, format!("{} (target [0.03, 0.08])", fmt_rates(&r)))
}

fn power() -> Check {
    let report = mc(McConfig {
        betas: vec![3],
        etas: vec![2.0],
        ns: vec![100],
        deltas: vec![0.03],
        replications: 200,
        bootstrap: 500,
        methods: Method::ALL.to_vec(),
        seed: SEED + 1,
        ..Default::default()
    });
    let r = rates(&report, &Method::ALL);
    let ok = r.iter().all(|(_, v)| *v >= 0.90);
    (ok, format!("{} (target >= 0.90)", fmt_rates(&r)))
}

fn power_gap() -> Check {
    let report = mc(McConfig {
        betas: vec![3],
        etas: vec![0.5],
        ns: vec![50],
        deltas: vec![0.02],
        replications: 500,
        bootstrap: 500,
        methods: vec![Method::S, Method::I],
        seed: SEED + 2,
        ..Default::default()
    });
    let r = rates(&report, &[Method::S, Method::I]);
    let gap = r[1].1 - r[0].1;
    (gap >= 0.05, format!("{} gap={gap:.3} (target >= 0.05)", fmt_rates(&r)))
}

fn msee_ordering() -> Check {
    let report = mc(McConfig {
        betas: vec![3],
        etas: vec![0.5],
        ns: vec![50],
        deltas: vec![0.0],
        replications: 200,
        bootstrap: 0,
        methods: vec![Method::C, Method::S, Method::I],
        seed: SEED + 3,
        ..Default::default()
    });
    let cell = &report.cells[0];
    let mean = |m| {
        let v = cell.msee(m);
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (c, i, s) = (mean(Method::C), mean(Method::I), mean(Method::S));
    let (w1, m1, p1) = common::sign_test_p(&cell.paired_msee(Method::C, Method::I));
    let (w2, m2, p2) = common::sign_test_p(&cell.paired_msee(Method::I, Method::S));
    let ok = c < i && i < s && p1 < 0.05 && p2 < 0.05;
    (
        ok,
        format!(
            "mean MSEE C={c:.4} I={i:.4} S={s:.4}; C<I in {w1}/{m1} (p={p1:.2e}), I<S in {w2}/{m2} (p={p2:.2e})"
        ),
    )
}

fn missingness() -> Check {
    let grid = Grid::uniform(0.0, 1.0, 201).unwrap();
    let x = gen_ou_sample(10_000, &grid, SEED + 4).unwrap();
    let mut ok = true;
    let mut parts = vec![];
    for (eta, target) in [(0.5, 0.35), (1.0, 0.27), (2.0, 0.20)] {
        let r = gen_missing(&x, eta, SEED + 5).unwrap();
        let miss = r.iter().filter(|&&o| !o).count() as f64 / r.len() as f64;
        ok &= (miss - target).abs() <= 0.02;
        parts.push(format!("eta={eta}: {:.1}% (target {:.0}%)", 100.0 * miss, 100.0 * target));
    }
    (ok, parts.join(", "))
}

fn r_squared() -> Check {
    let grid = Grid::uniform(0.0, 1.0, 201).unwrap();
    let beta = beta_curve(1, &grid).unwrap();
    let mut values = Vec::with_capacity(100_000);
    for chunk in 0..10u64 {
        let x = gen_ou_sample(10_000, &grid, SEED + 100 + chunk).unwrap();
        values.extend(x.inner_products(&beta).unwrap());
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let r2 = var / (var + 0.01);
    ((r2 - 0.8232).abs() <= 0.01, format!("R^2={r2:.4} (target 0.8232 +- 0.01)"))
}

fn oracle() -> Check {
    let mut worst_stat: f64 = 0.0;
    let mut worst_a: f64 = 0.0;
    for inst in 0..20u64 {
        let (scores, eps) = common::random_instance(SEED + inst, 30, 3);
        let a = build_a_matrix(&scores).unwrap();
        let stat = pcvm_statistic(&eps, &a).unwrap();
        let mc_stat = common::mc_statistic(&scores, &eps, 100_000, inst);
        let mc_a = common::mc_a_matrix(&scores, 100_000, inst);
        worst_stat = worst_stat.max((mc_stat - stat).abs() / stat);
        worst_a = worst_a.max(common::frobenius(&(&mc_a - &a.values)) / common::frobenius(&a.values));
    }
    (
        worst_stat < 0.02 && worst_a < 0.02,
        format!("20 instances: max statistic rel err {worst_stat:.4}, max A Frobenius rel err {worst_a:.4} (target < 0.02)"),
    )
}

fn fpc_invariants() -> (bool, String) {
    let mut worst_orth: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for s in 0..20u64 {
        let grid = Grid::uniform(0.0, 1.0, 201).unwrap();
        let x = gen_ou_sample(50 + 10 * s as usize, &grid, SEED + 200 + s).unwrap();
        let b = fpc_decompose(&x, DEFAULT_VAR_CUTOFF).unwrap();
        for j in 0..b.k_max() {
            for k in 0..b.k_max() {
                let ip = grid.inner_product(&b.eigenfunction(j), &b.eigenfunction(k)).unwrap();
                let want = if j == k { 1.0 } else { 0.0 };
                worst_orth = worst_orth.max((ip - want).abs());
            }
            let col = b.scores.column(j);
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / b.n() as f64;
            worst_var = worst_var.max((var - b.eigenvalues[j]).abs() / b.eigenvalues[j]);
        }
    }
    (
        worst_orth < 1e-8 && worst_var < 1e-6,
        format!("orthonormality {worst_orth:.1e}, score variance {worst_var:.1e}"),
    )
}

fn multiplier_invariants() -> (bool, String) {
    let p = GOLDEN_LOW_PROBABILITY;
    let mean = p * GOLDEN_LOW + (1.0 - p) * GOLDEN_HIGH;
    let second = p * GOLDEN_LOW * GOLDEN_LOW + (1.0 - p) * GOLDEN_HIGH * GOLDEN_HIGH;
    let v = golden_section_multipliers(1_000_000, SEED);
    let sample = v.iter().sum::<f64>() / v.len() as f64;
    let two_point = v.iter().all(|&x| x == GOLDEN_LOW || x == GOLDEN_HIGH);
    (
        mean.abs() < 1e-15 && (second - 1.0).abs() < 1e-15 && sample.abs() < 0.005 && two_point,
        format!("law mean {mean:.1e}, second moment {second:.15}, sample mean {sample:.5}"),
    )
}

fn kkt_invariants() -> (bool, String) {
    let mut rng = rng_from(SEED, &[0x4b4b]);
    let mut worst: f64 = 0.0;
    for inst in 0..100u64 {
        let n = rng.random_range(15..80);
        let grid = Grid::uniform(0.0, 1.0, 51).unwrap();
        let x = gen_ou_sample(n, &grid, SEED + 300 + inst).unwrap();
        let b = fpc_decompose(&x, DEFAULT_VAR_CUTOFF).unwrap();
        let design = b.scores.clone();
        let y: Vec<f64> = (0..n)
            .map(|i| design[(i, 0)] * rng.random_range(-2.0..2.0) + rng.random_range(-1.0..1.0))
            .collect();
        let lambdas = lambda_grid(lambda_max(&design, &y), 100, 1e-4);
        let path = lasso_path(&design, &y, &lambdas).unwrap();
        for (l, coef) in lambdas.iter().zip(&path.coefficients) {
            worst = worst.max(kkt_violation(&design, &y, *l, coef));
        }
    }
    (worst < 1e-6, format!("100 instances x 100 penalties: max KKT residual {worst:.1e}"))
}

fn reduction_invariants() -> (bool, String) {
    let mut worst: f64 = 0.0;
    let mut same_sets = true;
    for s in 0..10u64 {
        let data = generate(&DgpConfig {
            beta_id: 3,
            eta: None,
            n: 60,
            seed: SEED + 400 + s,
            ..Default::default()
        })
        .unwrap();
        let basis = fpc_decompose(&data.x, DEFAULT_VAR_CUTOFF).unwrap();
        let sample = MarSample::complete(data.x.clone(), data.y.clone()).unwrap();
        let opts = FitOptions::with_seed(s);
        let p_hat = fit_observance(&sample).unwrap();
        let c = estimate(Method::C, &sample, &basis, &opts, None).unwrap();
        let cl = estimate(Method::CL, &sample, &basis, &opts, None).unwrap();
        for m in Method::MAR {
            let e = estimate(m, &sample, &basis, &opts, Some(&p_hat)).unwrap();
            let reference = if m.is_lasso() { &cl } else { &c };
            let plan = FitPlan {
                method: reference.plan.method,
                first_stage: None,
                indices: e.slope.indices.clone(),
                probabilities: None,
            };
            let r = plan.refit(&basis, sample.y(), sample.observed()).unwrap();
            for (a, b) in e.slope.coefficients.iter().zip(&r.coefficients) {
                worst = worst.max((a - b).abs());
            }
            if m == Method::S || m == Method::SL {
                same_sets &= e.slope.indices == reference.slope.indices;
            }
        }
    }
    (
        worst < 1e-10 && same_sets,
        format!("max coefficient difference {worst:.1e}, S/SL selections equal C/CL: {same_sets}"),
    )
}

fn granularity_and_determinism() -> (bool, String) {
    let data = generate(&DgpConfig {
        beta_id: 2,
        n: 60,
        seed: SEED + 500,
        ..Default::default()
    })
    .unwrap();
    let basis = fpc_decompose(&data.x, DEFAULT_VAR_CUTOFF).unwrap();
    let sample = MarSample::new(data.x, data.y, data.observed).unwrap();
    let mut ok = true;
    for (m, b) in Method::MAR.iter().zip([50usize, 97, 100, 120, 131, 200]) {
        let r = wild_bootstrap_test(&sample, &basis, *m, b, SEED).unwrap();
        let k = r.p_value * b as f64;
        ok &= (k - k.round()).abs() < 1e-9;
        let again = wild_bootstrap_test(&sample, &basis, *m, b, SEED).unwrap();
        ok &= serde_json::to_string(&r).unwrap() == serde_json::to_string(&again).unwrap();
    }
    let cfg = McConfig {
        ns: vec![40],
        replications: 3,
        bootstrap: 30,
        seed: SEED,
        ..Default::default()
    };
    let a = serde_json::to_string(&mc_experiment(&cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&mc_experiment(&cfg).unwrap()).unwrap();
    ok &= a == b;
    (ok, "p-values on the 1/B lattice; GofResult and McReport JSON byte-identical".into())
}

fn invariants() -> Check {
    let parts = [
        ("FPC", fpc_invariants()),
        ("multipliers", multiplier_invariants()),
        ("KKT", kkt_invariants()),
        ("reductions", reduction_invariants()),
        ("bootstrap", granularity_and_determinism()),
    ];
    let ok = parts.iter().all(|(_, (p, _))| *p);
    let detail = parts
        .iter()
        .map(|(name, (p, d))| format!("{name} {}: {d}", if *p { "ok" } else { "FAILED" }))
        .collect::<Vec<_>>()
        .join("; ");
    (ok, detail)
}

fn main() {
    let only: Option<Vec<u8>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(u8, &str, fn() -> Check); 8] = [
        (1, "size control (beta1, eta=1, n=100, M=500, B=500)", size_control),
        (2, "power (beta3, eta=2, n=100, delta=0.03, M=200, B=500)", power),
        (3, "power gap I vs S (beta3, eta=0.5, n=50, delta=0.02, M=500)", power_gap),
        (4, "MSEE ordering C < I < S (beta3, eta=0.5, n=50, M=200)", msee_ordering),
        (5, "missingness calibration (n=1e4)", missingness),
        (6, "R^2 calibration (beta1, 1e5 draws)", r_squared),
        (7, "closed form vs sphere-projection oracle", oracle),
        (8, "invariant suites", invariants),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = run();
        if !ok {
            failed += 1;
        }
        println!(
            "[{}] criterion {id}: {name}: {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
