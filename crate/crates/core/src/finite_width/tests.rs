use super::*;
use crate::kernel::{kernel_value, l1_norm, sample_l1_sphere_with, Atom, FirstLayerMeasure, LayerHyperparams};
use crate::gauss_expect::quadrature::legendre;

/// ∫_a^b f on 16 Gauss–Legendre panels of 32 nodes.
fn legendre_integral(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let rule = legendre(32);
    let h = (b - a) / 16.0;
    (0..16)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * r * f(c + r * x)).sum::<f64>()
        })
        .sum()
}

fn probes() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.6, 0.8, -0.5, 1.0])
}

#[test]
fn degenerate_weight_law_gives_zero_weights() {
    let mut spec = KernelSpec::standard(2, 3, ActivationKind::ReLU);
    for l in &mut spec.layers {
        l.var_w = 0.0;
    }
    let net = sample_network(&spec, &[5, 4], 2, 1).unwrap();
    net.validate().unwrap();
    assert!(net.weights[1..].iter().all(|w| w.iter().all(|v| *v == 0.0)));
    assert_eq!(net.weights[0].shape(), (5, 3));
    assert_eq!(net.weights[1].shape(), (4, 5));
    assert_eq!(net.weights[2].shape(), (2, 4));
    assert!(net.biases[2].iter().all(|b| *b == 0.0));
    assert_eq!(net, sample_network(&spec, &[5, 4], 2, 1).unwrap());
    assert_ne!(net.weights[0], sample_network(&spec, &[5, 4], 2, 2).unwrap().weights[0]);
}

#[test]
fn layer_two_weight_mean_is_scaled_by_fan_in() {
    let mut spec = KernelSpec::standard(1, 1, ActivationKind::ReLU);
    spec.layers[0].mu_w = 1.0;
    let net = sample_network(&spec, &[10], 10_000, 3).unwrap();
    let w: Vec<f64> = net.weights[1].iter().copied().collect();
    assert_eq!(w.len(), 100_000);
    let (m, se) = stats::mean_stderr(&w);
    assert!((m - 0.1).abs() < 4.0 * se, "{m} ± {se}");
    assert!((stats::variance(&w) - 0.1).abs() < 0.003);
}

#[test]
fn wrong_widths_are_rejected() {
    let spec = KernelSpec::standard(2, 1, ActivationKind::ReLU);
    assert!(sample_network(&spec, &[4], 1, 0).is_err());
    assert!(sample_network(&spec, &[4, 0], 1, 0).is_err());
}

fn hand_net(w1: &[f64], b1: &[f64], w2: &[f64], d_in: usize, act: ActivationKind) -> NetworkSample {
    let n = b1.len();
    NetworkSample {
        widths: vec![n],
        weights: vec![
            DMatrix::from_row_slice(n, d_in, w1),
            DMatrix::from_row_slice(w2.len() / n, n, w2),
        ],
        biases: vec![DVector::from_column_slice(b1), DVector::zeros(w2.len() / n)],
        activation: act,
    }
}

#[test]
fn forward_examples() {
    let id = hand_net(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0], &[0.0; 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0], 2, ActivationKind::Identity);
    id.validate().unwrap();
    assert_eq!(forward(&id, &[0.3, -2.0]).unwrap().as_slice(), &[0.3, -2.0]);

    let relu = hand_net(&[1.0, 2.0, 0.5, 0.0], &[0.0, 0.0], &[3.0, 1.0], 2, ActivationKind::ReLU);
    let x = [0.7, 1.1];
    let expect = 3.0 * (0.7 + 2.2) + 0.5 * 0.7;
    assert!((forward(&relu, &x).unwrap()[0] - expect).abs() < 1e-15);

    let one = hand_net(&[0.5], &[0.2], &[3.0], 1, ActivationKind::Tanh);
    let y = forward(&one, &[1.3]).unwrap()[0];
    assert!((y - 3.0 * (0.5f64 * 1.3 + 0.2).tanh()).abs() <= 1e-15);

    assert!(matches!(forward(&one, &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    assert!(forward(&one, &[f64::NAN]).is_err());
}

#[test]
fn identity_ensembles_match_kernel() {
    let mut spec = KernelSpec::standard(2, 2, ActivationKind::Identity);
    spec.pi = FirstLayerMeasure::GaussianIid { var_w: 1.5, var_b: 0.2, mu_w: 0.0, mu_b: 0.3 };
    spec.layers[0] = LayerHyperparams { mu_w: 0.0, var_w: 0.8, mu_b: -0.4, var_b: 0.1 };
    let p = probes();
    let s = ensemble_stats(&spec, &[16, 16], 2, &p, 4000, 11).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let xi: Vec<f64> = p.row(i).iter().copied().collect();
            let xj: Vec<f64> = p.row(j).iter().copied().collect();
            let (_, _, k) = kernel_value(&spec, &xi, &xj).unwrap();
            let z = (s.emp_cov[(i, j)] - k) / s.cov_stderr[(i, j)];
            assert!(z.abs() <= 4.0, "({i},{j}) z = {z}");
        }
    }
    assert_eq!(s.emp_cov, s.emp_cov.transpose());
}

#[test]
fn wide_relu_outputs_look_gaussian_and_independent() {
    let spec = KernelSpec::standard(1, 2, ActivationKind::ReLU);
    let s = ensemble_stats(&spec, &[1024], 2, &probes(), 4000, 5).unwrap();
    let band = 5.0 * (6.0f64 / 4000.0).sqrt();
    assert!(s.skewness.iter().all(|v| v.abs() <= band), "{:?}", s.skewness);
    let c = s.cross_output_corr.unwrap();
    assert!(c.abs() <= 4.0 / 4000f64.sqrt(), "{c}");
}

#[test]
fn kurtosis_shrinks_with_width() {
    let spec = KernelSpec::standard(1, 2, ActivationKind::ReLU);
    let narrow = ensemble_stats(&spec, &[8], 1, &probes(), 4000, 1).unwrap();
    let wide = ensemble_stats(&spec, &[512], 1, &probes(), 4000, 1).unwrap();
    let max = |v: &DVector<f64>| v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    assert!(max(&wide.excess_kurtosis) <= max(&narrow.excess_kurtosis) + 0.1);
    assert!(max(&narrow.excess_kurtosis) > 0.5);
    assert!(wide.cross_output_corr.is_none());
}

#[test]
fn ensembles_do_not_depend_on_worker_count() {
    let spec = KernelSpec::standard(1, 2, ActivationKind::Erf);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| ensemble_stats(&spec, &[32], 2, &probes(), 300, 9).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.emp_cov, b.emp_cov);
    assert_eq!(a.excess_kurtosis, b.excess_kurtosis);
    assert_eq!(a.cross_output_corr, b.cross_output_corr);
}

#[test]
fn width_report_with_real_finite_width_bias() {
    let mut spec = KernelSpec::standard(1, 2, ActivationKind::ReLU);
    spec.layers[0].mu_w = 3.0;
    let r = width_convergence_report(&spec, &[16, 1024], &probes(), 2000, 42).unwrap();
    assert_eq!(r.extreme_ordering(), Some(true));
    assert!(r.rows[0].max_abs_z > 5.0);
    let v = r.verdict(&Bands::default());
    assert!(v.pass, "{:?}", v.lines);
    let csv = r.to_csv();
    assert_eq!(csv.lines().next().unwrap(), "width,i,j,emp_cov,kernel,stderr,zscore");
    assert_eq!(csv.lines().count(), 1 + 2 * 6);
    assert_eq!(csv, width_convergence_report(&spec, &[16, 1024], &probes(), 2000, 42).unwrap().to_csv());
    assert!(r.to_text().contains("1024"));
}

#[test]
fn width_report_identity_and_degenerate_cases() {
    let spec = KernelSpec::standard(1, 2, ActivationKind::Identity);
    let r = width_convergence_report(&spec, &[4, 64], &probes(), 2000, 3).unwrap();
    assert!(r.rows.iter().all(|row| row.max_abs_z <= 5.0));
    assert!(r.verdict(&Bands::default()).pass);

    let one = width_convergence_report(&spec, &[16], &probes(), 2, 3).unwrap();
    let v = one.verdict(&Bands::default());
    assert!(v.lines.iter().any(|l| l.starts_with("skip ordering")));
    assert_eq!(one.extreme_ordering(), None);
    assert!(width_convergence_report(&spec, &[64, 16], &probes(), 10, 3).is_err());
}

#[test]
fn l1_sphere_draws() {
    for seed in 0..100 {
        let a = sample_l1_sphere(4, seed);
        assert!((l1_norm(&a) - 1.0).abs() <= 1e-12);
        assert_eq!(a, sample_l1_sphere(4, seed));
    }
    let mut r = rng::stream(8, 0);
    let mut positive = [0usize; 3];
    let n = 100_000;
    for _ in 0..n {
        let a = sample_l1_sphere_with(2, &mut r);
        for (k, v) in a.w.iter().chain([a.b].iter()).enumerate() {
            positive[k] += (*v > 0.0) as usize;
        }
    }
    for c in positive {
        assert!((c as f64 / n as f64 - 0.5).abs() <= 0.01);
    }
}

fn barron(a_rule: CoefficientRule, pi: FirstLayerMeasure, n: usize) -> BarronSamplerSpec {
    BarronSamplerSpec { d_in: 1, activation: ActivationKind::ReLU, pi, a_rule, n }
}

fn point_mass() -> FirstLayerMeasure {
    FirstLayerMeasure::Empirical { atoms: vec![Atom { w: vec![0.25], b: -0.75 }], weights: vec![1.0] }
}

#[test]
fn barron_network_examples() {
    let zero = barron(CoefficientRule::constant(0.0, 1), FirstLayerMeasure::L1SphereUniform, 64);
    let net = build_barron_network(&zero, 1).unwrap();
    assert_eq!(forward(&net, &[0.7]).unwrap()[0], 0.0);

    let single = barron(CoefficientRule::constant(2.5, 1), point_mass(), 1);
    let net = build_barron_network(&single, 1).unwrap();
    assert_eq!(forward(&net, &[5.0]).unwrap()[0], 2.5 * (0.25f64 * 5.0 - 0.75).max(0.0));

    let mut off_sphere = single.clone();
    off_sphere.pi = FirstLayerMeasure::Empirical { atoms: vec![Atom { w: vec![1.0], b: 1.0 }], weights: vec![1.0] };
    assert!(build_barron_network(&off_sphere, 0).is_err());
    let mut gaussian = single;
    gaussian.pi = FirstLayerMeasure::GaussianIid { var_w: 1.0, var_b: 0.0, mu_w: 0.0, mu_b: 0.0 };
    assert!(gaussian.validate().is_err());
}

#[test]
fn barron_estimator_is_unbiased() {
    let bs = barron(CoefficientRule::constant(1.0, 1), FirstLayerMeasure::L1SphereUniform, 128);
    let x = [0.8];
    let values: Vec<f64> =
        (0..200).map(|s| forward(&build_barron_network(&bs, s).unwrap(), &x).unwrap()[0]).collect();
    let (m, se) = stats::mean_stderr(&values);
    let (o, ose) = barron_mean_oracle(&bs, &x, 200_000, 1).unwrap();
    assert!((m - o).abs() <= 4.0 * (se * se + ose * ose).sqrt(), "{m} vs {o}");

    // |w| ~ U(0, 1), b = ±(1 − |w|), signs independent
    let exact = legendre_integral(0.0, 1.0, |t| {
        [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
            .iter()
            .map(|(sw, sb)| 0.25 * (sw * t * x[0] + sb * (1.0 - t)).max(0.0))
            .sum()
    });
    assert!((o - exact).abs() <= 4.0 * ose);
}

#[test]
fn variance_scales_as_one_over_n() {
    let bs = barron(CoefficientRule::constant(1.0, 1), FirstLayerMeasure::L1SphereUniform, 1);
    let r = barron_variance_scaling(&bs, &[0.5], &[64, 128], 2000, 42).unwrap();
    let ratio = r.ratios[0].ratio.unwrap();
    assert!((1.5..=2.5).contains(&ratio), "{ratio}");
    let (lo, hi) = r.ratios[0].ci.unwrap();
    assert!(lo < ratio && ratio < hi);
    assert_eq!(r.ratios_in_band(), Some(true));
    assert_eq!(r.to_csv(), barron_variance_scaling(&bs, &[0.5], &[64, 128], 2000, 42).unwrap().to_csv());

    let det = barron(CoefficientRule::constant(1.0, 1), point_mass(), 1);
    let r = barron_variance_scaling(&det, &[2.0], &[4, 8], 10, 0).unwrap();
    assert!(r.rows.iter().all(|row| row.variance == 0.0));
    assert_eq!(r.ratios_in_band(), None);

    let r = barron_variance_scaling(&bs, &[0.5], &[4, 8], 2, 0).unwrap();
    assert_eq!(r.rows.len(), 2);
    assert!(barron_variance_scaling(&bs, &[0.5], &[4, 6], 10, 0).is_err());
}

#[test]
fn hpi_norm_examples() {
    let c = barron(CoefficientRule::constant(0.7, 1), FirstLayerMeasure::L1SphereUniform, 1);
    assert_eq!(estimate_hpi_norm_sq(&c, 1000, 0).unwrap(), (0.7 * 0.7, 0.0));

    let alpha_b = CoefficientRule::Affine { constant: 0.0, b_coef: 1.0, w_coefs: vec![0.0], noise_var: 0.5 };
    let pm = barron(alpha_b.clone(), point_mass(), 1);
    assert_eq!(estimate_hpi_norm_sq(&pm, 10, 0).unwrap(), (0.75 * 0.75, 0.0));

    let bs = barron(alpha_b, FirstLayerMeasure::L1SphereUniform, 1);
    let (est, se) = estimate_hpi_norm_sq(&bs, 100_000, 3).unwrap();
    let oracle = legendre_integral(0.0, 1.0, |t| (1.0 - t) * (1.0 - t));
    assert!((est - oracle).abs() <= 4.0 * se, "{est} ± {se} vs {oracle}");

    let opaque = barron(CoefficientRule::Resample { values: vec![1.0, -1.0] }, FirstLayerMeasure::L1SphereUniform, 4);
    assert!(matches!(estimate_hpi_norm_sq(&opaque, 10, 0), Err(Error::Unsupported(_))));
    build_barron_network(&opaque, 0).unwrap();
}
