mod common;

use common::{fixed_point_hdot, load_model, published};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tspdc::certificate::LocalCertificate;
use tspdc::experiments::replay_certificate;
use tspdc::model::ModelSpec;
use tspdc::par::Execution;
use tspdc::sim::{integrate, resolve_hdot};
use tspdc::synth_global::GlobalOptions;
use tspdc::synth_local::synthesize_local;

fn synthesized() -> (ModelSpec, LocalCertificate) {
    let spec = load_model("ex2_local.json");
    let (out, _) = synthesize_local(&spec.model, spec.sectors.as_ref().unwrap(), &spec.config, &GlobalOptions::default()).unwrap();
    (spec, out.certificate.expect("feasible local design"))
}

#[test]
fn linear_solve_matches_fixed_point_oracle() {
    let (spec, cert) = published();
    let (_, own) = synthesized();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let region = &spec.model.region;
    for c in [&cert.global, &own.global] {
        for _ in 0..300 {
            let x: Vec<f64> = (0..2).map(|k| rng.gen_range(region.lower[k]..=region.upper[k])).collect();
            let st = resolve_hdot(&spec.model, c, &x).unwrap();
            let oracle = fixed_point_hdot(&spec.model, c, &x).expect("damped iteration converges");
            assert!((&st.hdot - oracle).amax() <= 1e-9, "{x:?}");
            assert!(st.hdot.sum().abs() <= 1e-8);
        }
    }
}

#[test]
fn published_gains_at_unit_state() {
    let (spec, cert) = published();
    let st = resolve_hdot(&spec.model, &cert.global, &[1.0, 0.0]).unwrap();
    assert!((st.h[0] - (1.0 + 1f64.sin()) / 2.0).abs() < 1e-15);
    assert!((st.hdot[0] + st.hdot[1]).abs() < 1e-12);
    let oracle = fixed_point_hdot(&spec.model, &cert.global, &[1.0, 0.0]).unwrap();
    assert!((st.hdot - oracle).amax() < 1e-9);
}

#[test]
fn equilibrium_stays_at_rest() {
    let (spec, cert) = synthesized();
    let st = resolve_hdot(&spec.model, &cert.global, &[0.0, 0.0]).unwrap();
    assert_eq!(st.hdot.amax(), 0.0);
    assert_eq!(st.xdot.amax(), 0.0);
    assert_eq!(st.u.amax(), 0.0);
    let traj = integrate(&spec.model, &cert.global, &spec.model.region, &[0.0, 0.0], 1.0, 1e-2).unwrap();
    assert!(traj.x.iter().all(|x| x.iter().all(|v| *v == 0.0)));
}

#[test]
fn step_halving_shows_fourth_order() {
    let (spec, cert) = synthesized();
    let x0 = [1.0, 1.5];
    let end = |dt: f64| integrate(&spec.model, &cert.global, &spec.model.region, &x0, 2.0, dt).unwrap().final_state().to_vec();
    let reference = end(0.0025);
    let err = |x: Vec<f64>| x.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (coarse, fine) = (err(end(0.04)), err(end(0.02)));
    assert!(coarse / fine >= 12.0, "ratio {}", coarse / fine);
    let a = integrate(&spec.model, &cert.global, &spec.model.region, &x0, 20.0, 1e-3).unwrap();
    let b = integrate(&spec.model, &cert.global, &spec.model.region, &x0, 20.0, 5e-4).unwrap();
    let diff = a.final_state().iter().zip(b.final_state()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-6);
}

#[test]
fn synthesized_certificate_replays_cleanly() {
    let (spec, cert) = synthesized();
    let (rep, paths) = replay_certificate(&spec.model, &cert, 36, 1e-3, 20.0, Execution::Parallel).unwrap();
    assert_eq!(paths.len(), 36);
    assert!(rep.passed(), "{rep:?}");
    for p in &paths {
        assert!(p.hdot.iter().all(|d| d.iter().sum::<f64>().abs() <= 1e-8));
    }
}
