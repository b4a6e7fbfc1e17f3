//! Finite-width networks sampled under the same hyperparameters as the
//! kernel, and Monte Carlo checks that their outputs approach the induced GP.
//!
//! Layer `l ≥ 2` weights are `N(μ_w/N_{l−1}, σ_w²/N_{l−1})`, hidden biases
//! `N(μ_b, σ_b²)`, and the output layer has no bias. Biases enter inside the
//! activation: `x^{[l]} = φ(W^{[l]} x^{[l−1]} + b^{[l]})`.

mod barron;
mod report;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::activation::ActivationKind;
use crate::error::{check_dim, Error, Result};
use crate::kernel::KernelSpec;
use crate::{par, rng, stats};

pub use barron::{
    barron_mean_oracle, barron_variance_scaling, build_barron_network, estimate_hpi_norm_sq,
    sample_l1_sphere, BarronReport, BarronRow, BarronSamplerSpec, CoefficientRule, VarianceRatio,
};
pub use report::{width_convergence_report, Bands, Verdict, WidthReport, WidthRow};

/// One sampled network. `weights[l]` maps layer `l` to layer `l + 1`
/// (`N_{l+1} × N_l`, with `N_0 = d_in`); `biases[l]` has length `N_{l+1}` and
/// the last one is all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSample {
    pub widths: Vec<usize>,
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub activation: ActivationKind,
}

impl NetworkSample {
    pub fn d_in(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn d_out(&self) -> usize {
        self.weights.last().expect("at least one layer").nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let depth = self.widths.len();
        if self.weights.len() != depth + 1 || self.biases.len() != depth + 1 {
            return Err(Error::InvalidSpec(format!(
                "{} hidden widths need {} weight matrices and bias vectors",
                depth,
                depth + 1
            )));
        }
        for l in 0..=depth {
            let rows = if l < depth { self.widths[l] } else { self.d_out() };
            let cols = if l == 0 { self.d_in() } else { self.widths[l - 1] };
            let w = &self.weights[l];
            if w.nrows() != rows || w.ncols() != cols || self.biases[l].len() != rows {
                return Err(Error::InvalidSpec(format!("layer {} has inconsistent shape", l + 1)));
            }
        }
        if self.biases[depth].iter().any(|b| *b != 0.0) {
            return Err(Error::InvalidSpec("output bias must be zero".into()));
        }
        Ok(())
    }
}

fn check_widths(spec: &KernelSpec, widths: &[usize], d_out: usize) -> Result<()> {
    if widths.len() != spec.depth {
        return Err(Error::InvalidSpec(format!(
            "{} widths given for depth {}",
            widths.len(),
            spec.depth
        )));
    }
    if widths.contains(&0) || d_out == 0 {
        return Err(Error::InvalidSpec("widths and d_out must be positive".into()));
    }
    Ok(())
}

fn gaussian_matrix(rows: usize, cols: usize, mean: f64, sd: f64, r: &mut rng::StreamRng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let z: f64 = StandardNormal.sample(r);
            m[(i, j)] = mean + sd * z;
        }
    }
    m
}

fn sample_with(spec: &KernelSpec, widths: &[usize], d_out: usize, r: &mut rng::StreamRng) -> NetworkSample {
    let depth = widths.len();
    let mut weights = Vec::with_capacity(depth + 1);
    let mut biases = Vec::with_capacity(depth + 1);
    let mut w1 = DMatrix::zeros(widths[0], spec.d_in);
    let mut b1 = DVector::zeros(widths[0]);
    for i in 0..widths[0] {
        let atom = spec.pi.sample(spec.d_in, r);
        for (j, v) in atom.w.iter().enumerate() {
            w1[(i, j)] = *v;
        }
        b1[i] = atom.b;
    }
    weights.push(w1);
    biases.push(b1);
    for l in 1..=depth {
        let fan_in = widths[l - 1] as f64;
        let rows = if l < depth { widths[l] } else { d_out };
        let hp = &spec.layers[l - 1];
        weights.push(gaussian_matrix(rows, widths[l - 1], hp.mu_w / fan_in, (hp.var_w / fan_in).sqrt(), r));
        let b = if l < depth {
            let sd = hp.var_b.sqrt();
            DVector::from_fn(rows, |_, _| {
                let z: f64 = StandardNormal.sample(r);
                hp.mu_b + sd * z
            })
        } else {
            DVector::zeros(rows)
        };
        biases.push(b);
    }
    NetworkSample { widths: widths.to_vec(), weights, biases, activation: spec.activation }
}

/// Draws a network with hidden widths `widths` and `d_out` outputs.
pub fn sample_network(spec: &KernelSpec, widths: &[usize], d_out: usize, seed: u64) -> Result<NetworkSample> {
    spec.validate()?;
    check_widths(spec, widths, d_out)?;
    let mut r = rng::stream(seed, 0);
    Ok(sample_with(spec, widths, d_out, &mut r))
}

/// Exact forward pass.
pub fn forward(net: &NetworkSample, x: &[f64]) -> Result<DVector<f64>> {
    check_dim(net.d_in(), x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("input has non-finite entries".into()));
    }
    let mut h = DVector::from_column_slice(x);
    let last = net.weights.len() - 1;
    for l in 0..last {
        let mut z = &net.weights[l] * &h + &net.biases[l];
        z.apply(|v| *v = net.activation.apply(*v));
        h = z;
    }
    Ok(&net.weights[last] * h)
}

/// Empirical output statistics over an ensemble of independently sampled
/// networks, on output coordinate 0 at every probe.
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub n_ensembles: usize,
    pub probe_points: DMatrix<f64>,
    pub emp_mean: DVector<f64>,
    pub emp_cov: DMatrix<f64>,
    /// Standard error of each `emp_cov` entry.
    pub cov_stderr: DMatrix<f64>,
    pub mean_stderr: DVector<f64>,
    pub skewness: DVector<f64>,
    pub excess_kurtosis: DVector<f64>,
    /// Correlation of output coordinates 0 and 1 at probe 0; `None` when
    /// `d_out = 1`.
    pub cross_output_corr: Option<f64>,
}

/// Samples `n_ensembles` networks (replica `i` seeded by
/// `derive_seed(seed, ENSEMBLE, i)`) and reduces their outputs in replica order.
pub fn ensemble_stats(
    spec: &KernelSpec,
    widths: &[usize],
    d_out: usize,
    probes: &DMatrix<f64>,
    n_ensembles: usize,
    seed: u64,
) -> Result<EnsembleStats> {
    spec.validate()?;
    check_widths(spec, widths, d_out)?;
    check_dim(spec.d_in, probes.ncols())?;
    if n_ensembles < 2 {
        return Err(Error::InvalidSpec("n_ensembles must be at least 2".into()));
    }
    let p = probes.nrows();
    if p == 0 {
        return Err(Error::InvalidSpec("at least one probe point is required".into()));
    }
    if probes.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("probe points must be finite".into()));
    }
    let rows: Vec<Vec<f64>> = (0..p).map(|i| probes.row(i).iter().copied().collect()).collect();
    let outputs: Vec<(Vec<f64>, f64)> = par::map_indexed(n_ensembles, |rep| {
        let mut r = rng::stream(rng::derive_seed(seed, rng::purpose::ENSEMBLE, rep as u64), 0);
        let net = sample_with(spec, widths, d_out, &mut r);
        let mut first = Vec::with_capacity(p);
        let mut second = f64::NAN;
        for (i, x) in rows.iter().enumerate() {
            let y = forward(&net, x).expect("validated probe");
            first.push(y[0]);
            if i == 0 && d_out > 1 {
                second = y[1];
            }
        }
        (first, second)
    });

    let series: Vec<Vec<f64>> = (0..p).map(|i| outputs.iter().map(|o| o.0[i]).collect()).collect();
    let mut emp_mean = DVector::zeros(p);
    let mut mean_stderr = DVector::zeros(p);
    let mut skew = DVector::zeros(p);
    let mut kurt = DVector::zeros(p);
    for i in 0..p {
        let (m, se) = stats::mean_stderr(&series[i]);
        emp_mean[i] = m;
        mean_stderr[i] = se;
        skew[i] = stats::skewness(&series[i]);
        kurt[i] = stats::excess_kurtosis(&series[i]);
    }
    let mut emp_cov = DMatrix::zeros(p, p);
    let mut cov_stderr = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let (c, se) = stats::covariance_stderr(&series[i], &series[j]);
            emp_cov[(i, j)] = c;
            emp_cov[(j, i)] = c;
            cov_stderr[(i, j)] = se;
            cov_stderr[(j, i)] = se;
        }
    }
    let cross_output_corr = (d_out > 1).then(|| {
        let second: Vec<f64> = outputs.iter().map(|o| o.1).collect();
        stats::correlation(&series[0], &second)
    });
    Ok(EnsembleStats {
        n_ensembles,
        probe_points: probes.clone(),
        emp_mean,
        emp_cov,
        cov_stderr,
        mean_stderr,
        skewness: skew,
        excess_kurtosis: kurt,
        cross_output_corr,
    })
}

#[cfg(test)]
mod tests;
