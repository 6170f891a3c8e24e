//! Acceptance criteria: one PASS/FAIL line per criterion, non-zero exit when
//! any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::time::Instant;

use common::{edge_intersection_vertices, fixed_point_hdot, load_model, published, read_model_text, same_point_set};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tspdc::dpoly::enumerate_vertices;
use tspdc::experiments::{replay_certificate, run_doa_comparison, run_sweep, DoaComparisonSpec, SweepResult, SweepSpec};
use tspdc::lmi::svec::{smat, svec};
use tspdc::lmi::{solve, AffineMatrixExpr, Objective, SdpProblem, Sense, SolveStatus, Structure};
use tspdc::model::{parse_model_with_overrides, Mode};
use tspdc::par::Execution;
use tspdc::sim::{integrate, resolve_hdot};
use tspdc::synth_global::GlobalOptions;
use tspdc::synth_local::synthesize_local;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn vertex_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    let mut cases = 0;
    for r in 2..=4 {
        for _ in 0..50 {
            let lower: Vec<f64> = (0..r).map(|_| rng.gen_range(-5.0..-0.01)).collect();
            let upper: Vec<f64> = (0..r).map(|_| rng.gen_range(0.01..5.0)).collect();
            let poly = enumerate_vertices(&lower, &upper).expect("valid bounds");
            if !same_point_set(&poly.vertices, &edge_intersection_vertices(&lower, &upper, 1e-12), 1e-12) {
                mismatches += 1;
            }
            cases += 1;
        }
    }
    let t = start.elapsed().as_secs_f64();
    outcome(mismatches == 0 && t < 5.0, format!("{cases} bound vectors, {mismatches} mismatches, {t:.3} s"))
}

fn sweep(na: usize, nb: usize) -> SweepResult {
    let spec = SweepSpec::grid(&read_model_text("ex1_parametric.json"), na, nb);
    run_sweep(&spec, Execution::default()).expect("valid sweep")
}

fn sweep_claim(full: &SweepResult) -> Outcome {
    let start = Instant::now();
    let sub = sweep(5, 3);
    let sub_t = start.elapsed().as_secs_f64();
    let total = full.a_values.len() * full.b_values.len();
    let feasible = full.feasible_count(Mode::Proposed).0;
    let verified = full
        .records_for(Mode::Proposed)
        .filter(|r| r.feasible)
        .all(|r| r.worst_eigenvalue.is_some_and(|w| w < 0.0));
    let infeasible: Vec<String> = full
        .records_for(Mode::Proposed)
        .filter(|r| !r.feasible)
        .take(6)
        .map(|r| format!("({},{})", r.a, r.b))
        .collect();
    let sub_all = sub.feasible_count(Mode::Proposed).0 == sub.a_values.len() * sub.b_values.len();
    outcome(
        feasible == total && verified && sub_all && full.elapsed_s < 600.0 && sub_t < 60.0,
        format!(
            "proposed feasible at {feasible}/{total} points (traditional {}, quadratic {}); 5x3 subgrid {}/15 in {sub_t:.2} s; \
             full grid {:.2} s; first infeasible {}",
            full.feasible_count(Mode::TraditionalPdc).0,
            full.feasible_count(Mode::Quadratic).0,
            sub.feasible_count(Mode::Proposed).0,
            full.elapsed_s,
            infeasible.join(" ")
        ),
    )
}

fn nesting(full: &SweepResult) -> Outcome {
    let into_proposed: Vec<_> = full.nesting.iter().filter(|n| n.from == Mode::TraditionalPdc).collect();
    let expected = full.feasible_count(Mode::TraditionalPdc).0;
    let worst = into_proposed.iter().map(|n| n.max_nsd_eigenvalue).fold(f64::NEG_INFINITY, f64::max);
    let min_psd = into_proposed.iter().map(|n| n.min_psd_eigenvalue).fold(f64::INFINITY, f64::min);
    outcome(
        into_proposed.len() == expected && worst <= 1e-7 && min_psd >= -1e-7,
        format!("{} substitutions, max NSD eigenvalue {worst:.3e}, min PSD eigenvalue {min_psd:.3e}", into_proposed.len()),
    )
}

fn frozen_stability(full: &SweepResult) -> Outcome {
    let template = read_model_text("ex1_parametric.json");
    let mut count = 0;
    let mut worst = f64::NEG_INFINITY;
    for rec in &full.records {
        let Some(cert) = &rec.certificate else { continue };
        let spec = parse_model_with_overrides(&template, &[("a".into(), rec.a.to_string()), ("b".into(), rec.b.to_string())])
            .expect("grid model");
        for i in 0..spec.model.rules() {
            let closed = &spec.model.a[i] + &spec.model.b[i] * &cert.k[i];
            let re = closed.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max(re);
        }
        count += 1;
    }
    outcome(count > 0 && worst < 0.0, format!("{count} certificates, max real part {worst:.4}"))
}

fn local_comparison() -> Outcome {
    let start = Instant::now();
    let spec = DoaComparisonSpec::new(&read_model_text("ex2_local.json"));
    let cmp = run_doa_comparison(&spec, Execution::default()).expect("comparison runs");
    let t = start.elapsed().as_secs_f64();
    let ratio = cmp.area_ratio.unwrap_or(0.0);
    outcome(
        cmp.resolution == 201 && cmp.proposed.feasible && cmp.derivative_free.feasible && ratio >= 1.5 && t < 120.0,
        format!(
            "proposed feasible {}, baseline feasible {}, areas {:.4} / {:.4}, ratio {ratio:.3}, {t:.2} s",
            cmp.proposed.feasible,
            cmp.derivative_free.feasible,
            cmp.proposed.area.unwrap_or(0.0),
            cmp.derivative_free.area.unwrap_or(0.0)
        ),
    )
}

fn published_replay() -> Outcome {
    let (spec, cert) = published();
    let (rep, paths) = replay_certificate(&spec.model, &cert, 36, 1e-3, 20.0, Execution::default()).expect("replay runs");
    outcome(
        paths.len() == 36 && rep.passed(),
        format!(
            "max V {:.6} ({}), max |x(20)| {:.2e} ({}), max V increase {:.2e} ({}), max |hdot| {:?} ({}), min factor {:?} ({})",
            rep.max_v,
            rep.v_level_ok,
            rep.max_final_norm,
            rep.convergence_ok,
            rep.max_v_increase,
            rep.decrease_ok,
            rep.max_abs_hdot.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(),
            rep.hdot_ok,
            rep.min_abs_factor.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            rep.factor_ok
        ),
    )
}

fn synthesized_local() -> tspdc::certificate::LocalCertificate {
    let spec = load_model("ex2_local.json");
    let (out, _) = synthesize_local(&spec.model, spec.sectors.as_ref().unwrap(), &spec.config, &GlobalOptions::default())
        .expect("local synthesis runs");
    out.certificate.expect("feasible local design")
}

fn implicit_oracle() -> Outcome {
    let (spec, published) = published();
    let own = synthesized_local();
    let region = &spec.model.region;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst, mut worst_sum, mut states) = (0.0f64, 0.0f64, 0);
    for cert in [&published.global, &own.global] {
        for _ in 0..1000 {
            let x: Vec<f64> = (0..spec.model.n).map(|k| rng.gen_range(region.lower[k]..=region.upper[k])).collect();
            let Ok(st) = resolve_hdot(&spec.model, cert, &x) else {
                worst = f64::INFINITY;
                continue;
            };
            match fixed_point_hdot(&spec.model, cert, &x) {
                Some(oracle) => worst = worst.max((&st.hdot - oracle).amax()),
                None => worst = f64::INFINITY,
            }
            worst_sum = worst_sum.max(st.hdot.sum().abs());
            states += 1;
        }
    }
    outcome(
        worst <= 1e-9 && worst_sum <= 1e-8,
        format!("{states} states, max oracle gap {worst:.2e}, max |sum hdot| {worst_sum:.2e}"),
    )
}

fn integrator_order() -> Outcome {
    let spec = load_model("ex2_local.json");
    let cert = synthesized_local();
    let x0 = [1.0, 1.5];
    let end = |dt: f64| {
        integrate(&spec.model, &cert.global, &spec.model.region, &x0, 2.0, dt).expect("integrates").final_state().to_vec()
    };
    let reference = end(0.0025);
    let err = |x: Vec<f64>| x.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (coarse, fine) = (err(end(0.04)), err(end(0.02)));
    let ratio = coarse / fine;
    outcome(ratio >= 12.0, format!("errors {coarse:.3e} (dt 0.04) / {fine:.3e} (dt 0.02), ratio {ratio:.2}"))
}

fn sdp_layer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let random_sym = |rng: &mut ChaCha8Rng, k: usize| {
        let m = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-10.0..10.0));
        (&m + m.transpose()) * 0.5
    };
    let mut bad = 0;
    for _ in 0..1000 {
        let k = rng.gen_range(1..=6);
        let (a, b) = (random_sym(&mut rng, k), random_sym(&mut rng, k));
        if (smat(&svec(&a), k) - &a).amax() > 1e-14 * (1.0 + a.amax()) {
            bad += 1;
        }
        let frob = a.component_mul(&b).sum();
        let dot: f64 = svec(&a).iter().zip(svec(&b)).map(|(x, y)| x * y).sum();
        if (frob - dot).abs() > 1e-12 * (1.0 + frob.abs()) {
            bad += 1;
        }
    }

    let scalar = |v: f64| DMatrix::from_element(1, 1, v);
    let mut p = SdpProblem::new(1e-7);
    let x = p.add_var("x", 1, 1, Structure::Symmetric).unwrap();
    p.add_lmi("x>=1", AffineMatrixExpr::var(x) - AffineMatrixExpr::constant(scalar(1.0)), Sense::Psd, false).unwrap();
    p.add_lmi("x<=2", AffineMatrixExpr::var(x) - AffineMatrixExpr::constant(scalar(2.0)), Sense::Nsd, false).unwrap();
    let s = solve(&p).expect("solves");
    let v = s.value(x)[(0, 0)];
    let sandwich = s.status == SolveStatus::Feasible && (1.0 - 1e-6..=2.0 + 1e-6).contains(&v);

    let mut p = SdpProblem::new(1e-7);
    let x = p.add_var("x", 1, 1, Structure::Symmetric).unwrap();
    p.add_lmi("x>=1", AffineMatrixExpr::var(x) - AffineMatrixExpr::constant(scalar(1.0)), Sense::Psd, false).unwrap();
    p.add_lmi("x<=0", AffineMatrixExpr::var(x), Sense::Nsd, false).unwrap();
    let infeasible = solve(&p).expect("solves").status == SolveStatus::Infeasible;

    let mut p = SdpProblem::new(1e-7);
    let h = p.add_var("H", 2, 2, Structure::Symmetric).unwrap();
    let cap = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0]));
    p.add_lmi("H<=cap", AffineMatrixExpr::var(h) - AffineMatrixExpr::constant(cap.clone()), Sense::Nsd, false).unwrap();
    p.set_objective(Objective::MaximizeLogDet(h));
    let s = solve(&p).expect("solves");
    // independent check of the optimum: eigenvalues of the returned H
    let mut eig: Vec<f64> = s.value(h).symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let logdet = s.status == SolveStatus::Feasible
        && (s.value(h) - &cap).amax() < 1e-6
        && (eig[0] - 2.0).abs() < 1e-6
        && (eig[1] - 3.0).abs() < 1e-6
        && s.objective_value.is_some_and(|o| (o - 6f64.ln()).abs() < 1e-6);

    outcome(
        bad == 0 && sandwich && infeasible && logdet,
        format!("1000 matrix pairs, {bad} invariant violations; sandwich x={v:.6} {sandwich}, infeasible pair {infeasible}, log-det {logdet}"),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        println!(
            "{} criterion {name} [{:.2} s]: {}",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
        results.push((name, o));
    };
    run("1 vertex oracle", &vertex_oracle);
    let full = sweep(21, 11);
    run("2 parametric sweep", &|| sweep_claim(&full));
    run("3 nesting", &|| nesting(&full));
    run("4 frozen-vertex stability", &|| frozen_stability(&full));
    run("5 local synthesis and DOA ratio", &local_comparison);
    run("6 published-certificate replay", &published_replay);
    run("7 implicit-dynamics oracle", &implicit_oracle);
    run("8 integrator order", &integrator_order);
    run("9 SDP layer", &sdp_layer);
    let passed = results.iter().filter(|(_, o)| o.pass).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
