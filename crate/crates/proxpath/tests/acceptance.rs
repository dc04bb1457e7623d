//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs at full scale (several hundred study replicates, kernel DML at
//! n = 4000), so a complete run takes the better part of an hour on one
//! core. `ACCEPTANCE_ONLY=1,3,7` restricts the run to some criteria. The
//! process exits non-zero only when `ACCEPTANCE_STRICT=1` is set and a
//! criterion failed; otherwise failures are reported and left visible.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use proxpath::bootstrap::bootstrap;
use proxpath::dgp::bridge_maps;
use proxpath::estimators::{self, effect_summaries, eif_values, psi_quadr};
use proxpath::kernel::gram;
use proxpath::minimax::{full_alpha, profiled_gradient, profiled_objective, solve_minimax, SaddleProblem};
use proxpath::parametric::{fit_h_chain, fit_q_chain};
use proxpath::study::{parametric_estimates, run_study, MetricsTable, NuisanceMode, StudyConfig};
use proxpath::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

const TAGS: [EstimatorTag; 5] = EstimatorTag::PLUGINS_AND_QUADR;

// 1 -------------------------------------------------------------------------

fn oracle_equivalence() -> Outcome {
    let spec = ScenarioSpec::default();
    let orc = oracle(&spec, 1_000_000, 101).unwrap();
    let ds = simulate(&spec, 100_000, 102).unwrap();
    let maps = bridge_maps(&spec);
    let point = parametric_estimates(&ds, &maps, &TAGS).unwrap();
    let boot = bootstrap(&ds, 100, 103, 0.95, &|d: &Dataset64| parametric_estimates(d, &maps, &TAGS)).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (j, tag) in TAGS.iter().enumerate() {
        let combined = (boot[j].se.powi(2) + orc.psi_se.powi(2)).sqrt();
        let z = (point[j] - orc.psi) / combined;
        ok &= z.abs() <= 5.0;
        parts.push(format!("{tag} z={z:+.2}"));
    }
    outcome(ok, format!("oracle ψ {:.4}; {}", orc.psi, parts.join(", ")))
}

// 2 -------------------------------------------------------------------------

fn coverage(t: &MetricsTable, s: u8, tag: EstimatorTag) -> f64 {
    t.cell(s, tag).map_or(f64::NAN, |c| c.coverage)
}

fn robustness_pattern() -> Outcome {
    let cfg = StudyConfig { reps: 500, n: 1000, bootstrap_b: 500, seed: 202, ..StudyConfig::default() };
    let table = run_study(&cfg).unwrap();
    println!("{}", table.render_text());
    let mut ok = true;
    let mut bad = Vec::new();
    for s in 1..=5u8 {
        for &tag in &TAGS {
            if study::designated_consistent(s, tag) {
                let c = coverage(&table, s, tag);
                if !(0.92..=0.98).contains(&c) {
                    ok = false;
                    bad.push(format!("s{s} {tag} {c:.3}"));
                }
            }
        }
    }
    let pipw: Vec<f64> = [2, 4, 5].iter().map(|&s| coverage(&table, s, EstimatorTag::Pipw)).collect();
    let por3 = coverage(&table, 3, EstimatorTag::Por);
    ok &= pipw.iter().all(|&c| c < 0.60) && por3 < 0.85;
    outcome(
        ok,
        format!(
            "P-IPW cov s2/s4/s5 {:.3}/{:.3}/{:.3}, P-OR cov s3 {por3:.3}; designated out of range: [{}]",
            pipw[0],
            pipw[1],
            pipw[2],
            bad.join(", ")
        ),
    )
}

// 3 -------------------------------------------------------------------------

fn eif_identities() -> Outcome {
    let spec = ScenarioSpec::default();
    let orc = oracle(&spec, 1_000_000, 301).unwrap();
    // Reference bridges from a much larger independent sample stand in for
    // the population solutions of the (correctly specified) linear maps.
    let big = simulate(&spec, 1_000_000, 302).unwrap();
    let truth = estimators::fit_parametric_bridges(&big, &bridge_maps(&spec), false).unwrap();
    let ds = simulate(&spec, 100_000, 303).unwrap();
    let phi = eif_values(&ds, &truth, orc.psi).unwrap();
    let n = phi.len() as f64;
    let mean = phi.mean();
    let sd = (phi.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mean_ok = mean.abs() <= 4.0 * sd / n.sqrt();

    let fitted = estimators::fit_parametric_bridges(&ds, &bridge_maps(&spec), false).unwrap();
    let q = psi_quadr(&ds, &fitted).unwrap().psi_hat;
    let uncentered = eif_values(&ds, &fitted, 0.0).unwrap().mean();
    let exact = q == uncentered;

    // Constant bridges: every h equal to c collapses the EIF to
    // c + q₂·mean(A(Y − c)), whatever q₀ and q₁ are.
    let mut tele = 0.0f64;
    for &(c, q0, q1, q2) in &[(0.0, 1.0, 1.0, 1.0), (1.5, 2.0, -0.5, 3.0), (-2.0, 0.3, 7.0, -1.25)] {
        let bs = BridgeSet64::constants(c, q0, q1, q2);
        let got = psi_quadr(&ds, &bs).unwrap().psi_hat;
        let by_hand = c + q2 * ds.y().iter().zip(ds.a()).map(|(y, &a)| a as f64 * (y - c)).sum::<f64>() / n;
        tele = tele.max((got - by_hand).abs() / (1.0 + by_hand.abs()));
    }
    let tele_ok = tele <= 1e-12;
    outcome(
        mean_ok && exact && tele_ok,
        format!(
            "mean EIF {mean:+.5} vs bound {:.5}; quadR == mean uncentered EIF: {exact}; telescoping rel err {tele:.1e}",
            4.0 * sd / n.sqrt()
        ),
    )
}

// 4 -------------------------------------------------------------------------

/// max over β of the saddle Lagrangian at α, by a dense solve of the inner
/// first-order condition (K_f symmetric, so stationarity in β reads
/// K_f[(2/m)K_f + 2λ_F I]β = (1/m)K_f ρ; a least-squares solve copes with
/// a singular K_f).
fn saddle_value(kh: &DMatrix<f64>, kf: &DMatrix<f64>, p: &SaddleProblem<f64>, alpha: &DVector<f64>) -> f64 {
    let m = p.m() as f64;
    let rho = &p.u + p.s.component_mul(&(kh * alpha));
    let lhs = kf * (kf * (2.0 / m) + DMatrix::identity(p.m(), p.m()) * (2.0 * p.lambda_f));
    let rhs = kf * &rho / m;
    let beta = lhs.svd(true, true).solve(&rhs, 1e-14).unwrap();
    let f = kf * &beta;
    (rho.dot(&f) - f.dot(&f)) / m - p.lambda_f * beta.dot(&(kf * &beta)) + p.lambda_h * alpha.dot(&(kh * alpha))
}

/// Brute-force minimizer of the (quadratic) value function: Hessian by
/// second differences, gradient at zero by first differences, then a
/// pseudo-inverse solve.
fn brute_force_min(kh: &DMatrix<f64>, kf: &DMatrix<f64>, p: &SaddleProblem<f64>) -> f64 {
    let m = p.m();
    let v = |a: &DVector<f64>| saddle_value(kh, kf, p, a);
    let zero = DVector::zeros(m);
    let v0 = v(&zero);
    let e = |i: usize| {
        let mut x = DVector::zeros(m);
        x[i] = 1.0;
        x
    };
    let vi: Vec<f64> = (0..m).map(|i| v(&e(i))).collect();
    let vmi: Vec<f64> = (0..m).map(|i| v(&(-e(i)))).collect();
    let mut hess = DMatrix::zeros(m, m);
    for i in 0..m {
        hess[(i, i)] = vi[i] + vmi[i] - 2.0 * v0;
        for j in 0..i {
            let hij = v(&(e(i) + e(j))) - vi[i] - vi[j] + v0;
            hess[(i, j)] = hij;
            hess[(j, i)] = hij;
        }
    }
    let grad = DVector::from_fn(m, |i, _| (vi[i] - vmi[i]) / 2.0);
    let step = hess.svd(true, true).solve(&(-grad), 1e-12).unwrap();
    v(&step)
}

fn minimax_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_obj = 0.0f64;
    let mut worst_stat = 0.0f64;
    let mut mismatch = 0.0f64;
    let instances = 25;
    for _ in 0..instances {
        let m = rng.random_range(8..=30);
        let mut normal = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
        let hyp_inputs = normal(m, 2);
        let inst_inputs = normal(m, 2);
        let u = DVector::from_column_slice(normal(m, 1).as_slice());
        let s = DVector::from_fn(m, |_, _| if rng.random::<bool>() { 1.0 } else { 0.5 + rng.random::<f64>() });
        let lambdas = [1e-1, 1e-2, 1e-3];
        let p = SaddleProblem {
            u,
            s,
            hyp_inputs,
            inst_inputs,
            hyp_kernel: KernelSpec::new(vec![Role::W, Role::X], vec![1, 1], vec![1.0, 1.5]).unwrap(),
            inst_kernel: KernelSpec::new(vec![Role::Z, Role::X], vec![1, 1], vec![0.8, 1.5]).unwrap(),
            lambda_h: lambdas[rng.random_range(0..3)],
            lambda_f: lambdas[rng.random_range(0..3)],
        };
        let fit = solve_minimax(&p, BridgeKind::H2, LowRankOptions::exact::<f64>()).unwrap();
        let alpha = full_alpha(&fit, m);
        let kh = gram(&p.hyp_kernel.scaled(&p.hyp_inputs));
        let kf = gram(&p.inst_kernel.scaled(&p.inst_inputs));

        let at_fit = saddle_value(&kh, &kf, &p, &alpha);
        let best = brute_force_min(&kh, &kf, &p);
        worst_obj = worst_obj.max((at_fit - best).abs() / best.abs().max(1e-12));
        // the library's profiled form must agree with the saddle value
        let profiled = profiled_objective(&p, &alpha).unwrap();
        mismatch = mismatch.max((profiled - at_fit).abs() / at_fit.abs().max(1e-12));

        let scale = profiled_gradient(&p, &DVector::zeros(m)).unwrap().amax().max(1e-12);
        let g = profiled_gradient(&p, &alpha).unwrap();
        worst_stat = worst_stat.max(g.amax() / scale);
    }
    outcome(
        worst_obj <= 1e-4 && mismatch <= 1e-4 && worst_stat <= 1e-6,
        format!(
            "{instances} instances: worst objective rel gap {worst_obj:.1e}, profiled/saddle rel gap {mismatch:.1e}, stationarity {worst_stat:.1e}·scale"
        ),
    )
}

// 5 and 6 -------------------------------------------------------------------

fn kernel_study(n: usize, reps: usize, seed: u64) -> MetricsTable {
    let start = Instant::now();
    let cfg = StudyConfig {
        scenarios: vec![1],
        n,
        reps,
        estimators: vec![EstimatorTag::Pdml],
        nuisance: NuisanceMode::Kernel,
        folds: 5,
        seed,
        ..StudyConfig::default()
    };
    let t = run_study(&cfg).unwrap();
    let c = t.cell(1, EstimatorTag::Pdml).unwrap();
    println!(
        "  kernel DML n={n:>4} reps={:>3}: bias {:+.4} mse {:.5} sd {:.4} coverage {:.3} failures {} ({:.0?})",
        c.reps,
        c.bias,
        c.mse,
        c.mc_sd,
        c.coverage,
        t.failures.len(),
        start.elapsed()
    );
    t
}

fn dml_calibration(small: &MetricsTable, mid: &MetricsTable) -> Outcome {
    let a = small.cell(1, EstimatorTag::Pdml).unwrap();
    let b = mid.cell(1, EstimatorTag::Pdml).unwrap();
    let ok = b.bias.abs() < a.bias.abs() && b.mse < a.mse && (0.91..=0.98).contains(&b.coverage);
    outcome(
        ok,
        format!(
            "|bias| {:.4} → {:.4}, MSE {:.5} → {:.5}, coverage at n=1000 {:.3} (need [0.91, 0.98])",
            a.bias.abs(),
            b.bias.abs(),
            a.mse,
            b.mse,
            b.coverage
        ),
    )
}

fn root_n_rate(sds: [f64; 3]) -> Outcome {
    let r1 = sds[0] / sds[1];
    let r2 = sds[1] / sds[2];
    let ok = [r1, r2].iter().all(|r| (1.6..=2.4).contains(r));
    outcome(ok, format!("sd {:.4} / {:.4} / {:.4} at n = 250 / 1000 / 4000; ratios {r1:.2}, {r2:.2}", sds[0], sds[1], sds[2]))
}

// 7 -------------------------------------------------------------------------

fn moment_exactness() -> Outcome {
    let spec = ScenarioSpec::default();
    let maps = bridge_maps(&spec);
    let mut worst = 0.0f64;
    let mut q0_dev = 0.0f64;
    for seed in [701u64, 702, 703] {
        let ds = simulate(&spec, 2000, seed).unwrap();
        let n = ds.n();
        let a = DVector::from_iterator(n, ds.a().iter().map(|&v| v as f64));
        let one = DVector::from_element(n, 1.0);
        let na = &one - &a;
        let h = fit_h_chain(&ds, &maps).unwrap();
        let q = fit_q_chain(&ds, &maps).unwrap();
        let [h2, h1, h0] = [&h.stages[0].fitted, &h.stages[1].fitted, &h.stages[2].fitted];
        let [q0, q1, q2] = [&q.stages[0].fitted, &q.stages[1].fitted, &q.stages[2].fitted];
        let y = DVector::from_column_slice(ds.y());
        // (kind, per-row residual, the known part used for scaling)
        let eqs = [
            (BridgeKind::H2, a.component_mul(&(&y - h2)), y.clone()),
            (BridgeKind::H1, na.component_mul(&(h2 - h1)), h2.clone()),
            (BridgeKind::H0, a.component_mul(&(h1 - h0)), h1.clone()),
            (BridgeKind::Q0, a.component_mul(q0) - &one, one.clone()),
            (BridgeKind::Q1, na.component_mul(q1) - a.component_mul(q0), a.component_mul(q0)),
            (BridgeKind::Q2, a.component_mul(q2) - na.component_mul(q1), na.component_mul(q1)),
        ];
        for (kind, resid, known) in eqs {
            let c = maps.instrument(kind).design(&ds).unwrap();
            let moment = c.transpose() * resid;
            let scale = n as f64 * (1.0 + known.amax()) * c.amax();
            worst = worst.max(moment.norm() / scale);
        }
        q0_dev = q0_dev.max((a.component_mul(q0).mean() - 1.0).abs());
    }
    outcome(worst <= 1e-8 && q0_dev <= 1e-8, format!("worst moment norm {worst:.1e}·scale; |mean(A q̂₀) − 1| = {q0_dev:.1e}"))
}

// 8 -------------------------------------------------------------------------

fn effect_summaries_check() -> Outcome {
    // hand arithmetic: p₁ = 1 − 0.7 = 0.3, p₀ = 1 − 0.5 = 0.5,
    // R = 1 − (0.3/0.7)/(0.5/0.5) = 4/7
    let (pamy, ramy) = effect_summaries(0.7, 0.5, OutcomeKind::Binary).unwrap();
    let hand = (pamy - 0.2).abs() < 1e-15 && (ramy.unwrap() - 4.0 / 7.0).abs() < 1e-15;
    let (pamy_c, ramy_c) = effect_summaries(3.25, 1.0, OutcomeKind::Continuous).unwrap();
    let hand = hand && pamy_c == 2.25 && ramy_c.is_none();

    let spec = ScenarioSpec::binary_default();
    let orc = oracle(&spec, 1_000_000, 801).unwrap();
    let ds = simulate(&spec, 100_000, 802).unwrap();
    let bs = estimators::fit_parametric_bridges(&ds, &bridge_maps(&spec), true).unwrap();
    let r = estimators::effects(&ds, &bs, OutcomeKind::Binary).unwrap();
    let zp = (r.pamy - orc.pamy) / (r.pamy_se.powi(2) + orc.pamy_se.powi(2)).sqrt();
    let zr = (r.ramy.unwrap() - orc.ramy.unwrap()) / (r.ramy_se.unwrap().powi(2) + orc.ramy_se.unwrap().powi(2)).sqrt();
    outcome(
        hand && zp.abs() <= 5.0 && zr.abs() <= 5.0,
        format!(
            "hand arithmetic {}; P_AMY {:.4} vs {:.4} (z {zp:+.2}), R_AMY {:.4} vs {:.4} (z {zr:+.2})",
            if hand { "ok" } else { "WRONG" },
            r.pamy,
            orc.pamy,
            r.ramy.unwrap(),
            orc.ramy.unwrap()
        ),
    )
}

// ---------------------------------------------------------------------------

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |k: u32| only.as_ref().is_none_or(|v| v.contains(&k));
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");

    let mut lines: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut run = |k: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        if wanted(k) {
            let start = Instant::now();
            let o = f();
            println!("[{k}] {name}: {} ({:.0?})", if o.pass { "PASS" } else { "FAIL" }, start.elapsed());
            lines.push((k, name, o));
        }
    };
    run(1, "oracle equivalence of the five strategies", &mut oracle_equivalence);
    run(2, "quadruple-robustness coverage pattern", &mut robustness_pattern);
    run(3, "EIF mean zero and telescoping identities", &mut eif_identities);
    run(4, "minimax solver against brute force", &mut minimax_correctness);

    if wanted(5) || wanted(6) {
        let mid = kernel_study(1000, 300, 501);
        if wanted(5) {
            let small = kernel_study(200, 300, 502);
            run(5, "kernel DML calibration", &mut || dml_calibration(&small, &mid));
        }
        if wanted(6) {
            let sd = |t: &MetricsTable| t.cell(1, EstimatorTag::Pdml).unwrap().mc_sd;
            let lo = kernel_study(250, 100, 601);
            let hi = kernel_study(4000, 100, 602);
            let sds = [sd(&lo), sd(&mid), sd(&hi)];
            run(6, "root-n shrinkage of the DML sd", &mut || root_n_rate(sds));
        }
    }
    run(7, "moment-residual exactness", &mut moment_exactness);
    run(8, "effect summaries", &mut effect_summaries_check);

    println!();
    println!("acceptance summary");
    for (k, name, o) in &lines {
        println!("  [{k}] {:<44} {}  {}", name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed = lines.iter().filter(|(_, _, o)| !o.pass).count();
    println!("  {} of {} criteria passed", lines.len() - failed, lines.len());
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
