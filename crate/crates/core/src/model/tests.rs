use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::*;

fn unit_model() -> ModelSpec {
    ModelSpec::new("u", vec![ParameterDescriptor::new("t", Domain::UnitInterval)], 1, |_: &[f64]| 0.0).unwrap()
}

fn positive_model() -> ModelSpec {
    ModelSpec::new("p", vec![ParameterDescriptor::new("s", Domain::Positive)], 1, |_: &[f64]| 0.0).unwrap()
}

fn simplex_model(k: usize) -> ModelSpec {
    let params = (0..k).map(|j| ParameterDescriptor::new(format!("w{j}"), Domain::Simplex { block: 7 })).collect();
    ModelSpec::new("s", params, 1, |_: &[f64]| 0.0).unwrap()
}

fn hyper(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

#[test]
fn unit_interval_transform_examples() {
    let m = unit_model();
    let (phi, lj) = m.to_unconstrained(&[0.5]).unwrap();
    assert_eq!(phi, vec![0.0]);
    assert!((lj - 0.25f64.ln()).abs() < 1e-15);
    let (phi, lj) = m.to_unconstrained(&[0.25]).unwrap();
    assert!((phi[0] - (1.0f64 / 3.0).ln()).abs() < 1e-15);
    assert!((lj - 0.1875f64.ln()).abs() < 1e-14);
    assert_eq!(m.to_constrained(&[0.0]), vec![0.5]);
    assert!((m.to_constrained(&[(1.0f64 / 3.0).ln()])[0] - 0.25).abs() < 1e-16);
}

#[test]
fn positive_transform_examples() {
    let m = positive_model();
    assert_eq!(m.to_unconstrained(&[1.0]).unwrap(), (vec![0.0], 0.0));
    assert_eq!(m.to_constrained(&[0.0]), vec![1.0]);
}

#[test]
fn boundary_points_are_rejected() {
    let m = unit_model();
    for t in [0.0, 1.0, -0.2, f64::NAN] {
        assert!(matches!(m.to_unconstrained(&[t]), Err(Error::OutsideDomain { .. })));
    }
    assert!(positive_model().to_unconstrained(&[0.0]).is_err());
    assert!(simplex_model(3).to_unconstrained(&[0.2, 0.2, 0.2]).is_err());
}

#[test]
fn simplex_origin_is_uniform() {
    let m = simplex_model(4);
    assert_eq!(m.unconstrained_dim(), 3);
    let w = m.to_constrained(&[0.0, 0.0, 0.0]);
    for x in w {
        assert!((x - 0.25).abs() < 1e-15);
    }
}

#[test]
fn round_trips_on_random_interior_points() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let real = ModelSpec::new("r", vec![ParameterDescriptor::new("x", Domain::Real)], 1, |_: &[f64]| 0.0).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1e-300);
    for _ in 0..100 {
        let x: f64 = rng.random_range(-50.0..50.0);
        let (phi, _) = real.to_unconstrained(&[x]).unwrap();
        assert_eq!(real.to_constrained(&phi)[0], x);

        let s: f64 = (rng.random_range(-8.0..8.0f64)).exp();
        let (phi, _) = positive_model().to_unconstrained(&[s]).unwrap();
        assert!(close(s, positive_model().to_constrained(&phi)[0]));

        let u: f64 = rng.random_range(1e-6..(1.0 - 1e-6));
        let (phi, _) = unit_model().to_unconstrained(&[u]).unwrap();
        assert!(close(u, unit_model().to_constrained(&phi)[0]));

        let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let m = simplex_model(4);
        let (phi, _) = m.to_unconstrained(&w).unwrap();
        let back = m.to_constrained(&phi);
        for (a, b) in w.iter().zip(&back) {
            assert!(close(*a, *b), "{a} vs {b}");
        }
    }
}

#[test]
fn simplex_log_jacobian_matches_numerical_determinant() {
    let m = simplex_model(3);
    let phi = [0.3, -0.7];
    let (_, lj) = m.to_constrained_with_log_jacobian(&phi);
    let h = 1e-6;
    let mut jac = nalgebra::DMatrix::<f64>::zeros(2, 2);
    for j in 0..2 {
        let mut p = phi;
        p[j] += h;
        let up = m.to_constrained(&p);
        p[j] -= 2.0 * h;
        let dn = m.to_constrained(&p);
        for i in 0..2 {
            jac[(i, j)] = (up[i] - dn[i]) / (2.0 * h);
        }
    }
    assert!((jac.determinant().abs().ln() - lj).abs() < 1e-8);
    let (_, lj2) = m.to_unconstrained(&m.to_constrained(&phi)).unwrap();
    assert!((lj - lj2).abs() < 1e-12);
}

#[test]
fn beta_binomial_kernel_is_the_stated_one() {
    let b = builtin_model("beta-binomial", &hyper(&[("p", 2.0), ("q", 8.0), ("a", 1.0), ("b", 1.0)]), &[]).unwrap();
    let m = b.primary();
    assert_eq!((m.dim(), m.sample_size()), (1, 10));
    let ratios: Vec<f64> = (1..=10)
        .map(|i| {
            let t = i as f64 / 11.0;
            m.log_kernel(&[t]) - (2.0 * t.ln() + 8.0 * (1.0 - t).ln())
        })
        .collect();
    let spread = ratios.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - ratios.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    assert!(spread < 1e-10);
}

#[test]
fn beta_binomial_without_evidence_is_flat() {
    let b = builtin_model("beta-binomial", &hyper(&[("p", 0.0), ("q", 0.0), ("a", 1.0), ("b", 1.0)]), &[]).unwrap();
    let m = b.primary();
    let v0 = m.log_kernel(&[0.1]);
    for t in [0.2, 0.5, 0.77, 0.999] {
        assert_eq!(m.log_kernel(&[t]), v0);
    }
}

#[test]
fn two_treatment_yields_model_pair() {
    let b =
        builtin_model("two-treatment", &hyper(&[("n11", 3.0), ("n12", 2.0), ("n21", 4.0), ("n22", 1.0)]), &[]).unwrap();
    assert_eq!(b.models.len(), 2);
    assert_eq!(b.models[0].dim(), 2);
    assert_eq!(b.models[1].dim(), 1);
    assert!(b.models.iter().all(|m| m.proper_prior()));
    // zero cells contribute nothing
    let (m1, _) = two_treatment(0.0, 2.0, 4.0, 0.0).unwrap();
    assert!(m1.log_kernel(&[0.3, 0.6]).is_finite());
}

#[test]
fn gaussian_kernel_matches_likelihood_times_prior() {
    let data = [1.2, 0.4, 2.2, 1.9, 0.7, 1.1];
    let m = gaussian_mean_var(&data).unwrap();
    assert!(!m.proper_prior());
    let direct = |mu: f64, s: f64| {
        data.iter().map(|x| -0.5 * ((x - mu) / s).powi(2) - s.ln()).sum::<f64>() - s.ln()
    };
    let pts = [(1.0, 0.5), (1.3, 0.8), (0.2, 2.0), (2.0, 1.1), (1.25, 0.65)];
    let r: Vec<f64> = pts.iter().map(|&(a, s)| m.log_kernel(&[a, s]) - direct(a, s)).collect();
    for v in &r {
        assert!((v - r[0]).abs() < 1e-10);
    }
}

#[test]
fn mixture_kernel_matches_direct_density() {
    let data = [-1.0, -0.8, 0.9, 1.1, 1.3];
    let prior = MixturePrior::from_data(&data).unwrap();
    let m = gaussian_mixture(&data, 2, &prior).unwrap();
    assert_eq!(m.dim(), 6);
    assert_eq!(m.unconstrained_dim(), 5);
    let t = [0.4, 0.6, -0.9, 1.1, 0.05, 0.1];
    let pdf = |x: f64, mu: f64, v: f64| (-(x - mu) * (x - mu) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
    let ll: f64 = data.iter().map(|&x| (0.4 * pdf(x, -0.9, 0.05) + 0.6 * pdf(x, 1.1, 0.1)).ln()).sum();
    let lp = -2.0 * (prior.mean_hi - prior.mean_lo).ln() - 2.0 * (prior.var_hi / prior.var_lo).ln().ln()
        - 0.05f64.ln()
        - 0.1f64.ln();
    assert!((m.log_kernel(&t) - (ll + lp)).abs() < 1e-10);
    assert_eq!(m.log_kernel(&[0.4, 0.6, -5.0, 1.1, 0.05, 0.1]), f64::NEG_INFINITY);
}

#[test]
fn builtin_errors() {
    assert!(matches!(builtin_model("poisson", &BTreeMap::new(), &[]), Err(Error::UnknownFamily(_))));
    assert!(matches!(
        builtin_model("beta-binomial", &hyper(&[("p", 2.0), ("q", 8.0), ("a", 1.0)]), &[]),
        Err(Error::InvalidHyper(_))
    ));
    assert!(matches!(
        builtin_model("beta-binomial", &hyper(&[("p", -1.0), ("q", 8.0), ("a", 1.0), ("b", 1.0)]), &[]),
        Err(Error::InvalidHyper(_))
    ));
    assert!(matches!(builtin_model("gaussian-meanvar", &BTreeMap::new(), &[]), Err(Error::InvalidInput(_))));
    assert!(builtin_model("gaussian-mixture", &hyper(&[("k", 1.5)]), &[1.0, 2.0]).is_err());
}

#[test]
fn model_construction_rejects_bad_specs() {
    assert!(ModelSpec::new("e", vec![], 1, |_: &[f64]| 0.0).is_err());
    assert!(ModelSpec::new("n", vec![ParameterDescriptor::new("a", Domain::Real)], 0, |_: &[f64]| 0.0).is_err());
    let lone = vec![ParameterDescriptor::new("w", Domain::Simplex { block: 0 })];
    assert!(ModelSpec::new("s", lone, 1, |_: &[f64]| 0.0).is_err());
    let split = vec![
        ParameterDescriptor::new("a", Domain::Simplex { block: 0 }),
        ParameterDescriptor::new("b", Domain::Simplex { block: 0 }),
        ParameterDescriptor::new("x", Domain::Real),
        ParameterDescriptor::new("c", Domain::Simplex { block: 0 }),
        ParameterDescriptor::new("d", Domain::Simplex { block: 0 }),
    ];
    assert!(ModelSpec::new("s", split, 1, |_: &[f64]| 0.0).is_err());
}
