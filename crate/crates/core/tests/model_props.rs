mod common;

use common::{load_model, read_model_text};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tspdc::model::{hull_residual, parse_model, parse_model_with_overrides};

#[test]
fn sinusoidal_memberships_at_published_points() {
    let spec = load_model("ex2_local.json");
    let ev = spec.model.eval_membership(&[0.0, 0.0]).unwrap();
    assert_eq!(ev.h.as_slice(), &[0.5, 0.5]);
    assert_eq!(ev.grad.row(0).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.0]);
    assert_eq!(ev.grad.row(1).iter().copied().collect::<Vec<_>>(), vec![-0.5, 0.0]);
    let ev = spec.model.eval_membership(&[std::f64::consts::FRAC_PI_2, 0.0]).unwrap();
    assert!((ev.h[0] - 1.0).abs() < 1e-15 && ev.h[1].abs() < 1e-15);
    let ev = spec.model.eval_membership(&[2.0, 1.0]).unwrap();
    assert!((ev.h[0] - (1.0 + 2f64.sin()) / 2.0).abs() < 1e-15);
    assert!((ev.h[0] - 0.954649).abs() < 1e-6);
}

#[test]
fn partition_of_unity_gradient_consistency_and_hull() {
    let spec = load_model("ex2_local.json");
    let zeta = spec.sectors.as_ref().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let region = &spec.model.region;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..2).map(|k| rng.gen_range(region.lower[k]..=region.upper[k])).collect();
        let ev = spec.model.eval_membership(&x).unwrap();
        assert!((ev.h.sum() - 1.0).abs() <= 1e-9);
        assert!(ev.h.iter().all(|v| *v >= -1e-12));
        for (i, mf) in spec.model.memberships.as_ref().unwrap().iter().enumerate() {
            for k in 0..2 {
                let step = 1e-6;
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[k] += step;
                xm[k] -= step;
                let fd = (mf.value(&xp).unwrap() - mf.value(&xm).unwrap()) / (2.0 * step);
                let g = ev.grad[(i, k)];
                assert!((fd - g).abs() <= 1e-6f64.max(1e-4 * g.abs()), "rule {i}, coord {k}: {fd} vs {g}");
            }
            let g: Vec<f64> = ev.grad.row(i).iter().copied().collect();
            assert!(hull_residual(zeta.sectors(i), &g) <= 1e-9);
        }
    }
}

#[test]
fn blend_averages_the_parametric_rules() {
    let spec = load_model("ex1_parametric.json");
    let (a, b) = spec.model.blend(&[0.5, 0.5]);
    assert_eq!(a.as_slice(), nalgebra::DMatrix::from_row_slice(2, 2, &[1.8, -1.6, 6.2, -4.3]).as_slice());
    assert_eq!(b.as_slice(), &[-0.725, -3.0]);
    let (a1, b1) = spec.model.blend(&[1.0, 0.0]);
    assert_eq!(a1, spec.model.a[0]);
    assert_eq!(b1, spec.model.b[0]);
}

proptest! {
    #[test]
    fn blend_is_affine(p in 0.0..1.0f64, q in 0.0..1.0f64, lambda in 0.0..1.0f64) {
        let spec = load_model("ex2_local.json");
        let (h, g) = ([p, 1.0 - p], [q, 1.0 - q]);
        let mix = [lambda * h[0] + (1.0 - lambda) * g[0], lambda * h[1] + (1.0 - lambda) * g[1]];
        let (am, bm) = spec.model.blend(&mix);
        let (ah, bh) = spec.model.blend(&h);
        let (ag, bg) = spec.model.blend(&g);
        prop_assert!((am - (ah * lambda + ag * (1.0 - lambda))).amax() <= 1e-13);
        prop_assert!((bm - (bh * lambda + bg * (1.0 - lambda))).amax() <= 1e-13);
    }
}

#[test]
fn invalid_partitions_and_unknown_keys_are_rejected() {
    let text = read_model_text("ex2_local.json");
    let bad = parse_model_with_overrides(
        &text,
        &[("rules.0.h".into(), "\"0.6\"".into()), ("rules.1.h".into(), "\"0.6\"".into())],
    );
    assert!(bad.is_err());
    assert!(parse_model_with_overrides(&text, &[("config.nonsense".into(), "1".into())]).is_err());
    assert!(parse_model_with_overrides(&text, &[("nothere.alpha".into(), "1".into())]).is_err());
}

#[test]
fn constant_memberships_are_valid() {
    let text = r#"{
        "n": 1, "m": 1,
        "rules": [
            { "A": [[1]], "B": [[1]], "h": "1", "grad_h": ["0"] },
            { "A": [[2]], "B": [[1]], "h": "0", "grad_h": ["0"] }
        ],
        "config": { "alpha": 0.1, "phi": [1, 1], "mode": "proposed" }
    }"#;
    let spec = parse_model(text).unwrap();
    assert_eq!(spec.model.rules(), 2);
    assert_eq!(spec.model.eval_membership(&[0.3]).unwrap().h.as_slice(), &[1.0, 0.0]);
}
