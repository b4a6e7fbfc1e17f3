//! Two-layer networks `f_N(x) = (1/N) Σ a_i φ(w_iᵀx + b_i)` with `(w_i, b_i)`
//! drawn from a measure on the unit ℓ1-sphere and `a_i` drawn given them.

use std::fmt::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{forward, NetworkSample};
use crate::activation::ActivationKind;
use crate::config::{fmt_f64, KeyValues};
use crate::error::{check_dim, Error, Result};
use crate::kernel::{l1_norm, parse_atoms, sample_l1_sphere_with, Atom, FirstLayerMeasure};
use crate::{par, rng, stats};

const BOOTSTRAP_RESAMPLES: usize = 1000;
const SPHERE_TOLERANCE: f64 = 1e-12;

/// Law of the output coefficient `a` given `(w, b)`.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientRule {
    /// `a = constant + b_coef·b + w_coefsᵀw + ε`, `ε ~ N(0, noise_var)`; the
    /// conditional mean α is the affine part.
    Affine { constant: f64, b_coef: f64, w_coefs: Vec<f64>, noise_var: f64 },
    /// `a` drawn uniformly from `values`, independently of `(w, b)`. Only
    /// samples are available, not α.
    Resample { values: Vec<f64> },
}

impl CoefficientRule {
    pub fn constant(c: f64, d_in: usize) -> Self {
        CoefficientRule::Affine { constant: c, b_coef: 0.0, w_coefs: vec![0.0; d_in], noise_var: 0.0 }
    }

    /// `α(w, b)`, if the rule exposes it.
    pub fn alpha(&self, atom: &Atom) -> Option<f64> {
        match self {
            CoefficientRule::Affine { constant, b_coef, w_coefs, .. } => {
                Some(constant + b_coef * atom.b + w_coefs.iter().zip(&atom.w).map(|(c, w)| c * w).sum::<f64>())
            }
            CoefficientRule::Resample { .. } => None,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, atom: &Atom, r: &mut R) -> f64 {
        match self {
            CoefficientRule::Affine { noise_var, .. } => {
                let alpha = self.alpha(atom).expect("affine rule has alpha");
                if *noise_var > 0.0 {
                    let z: f64 = StandardNormal.sample(r);
                    alpha + noise_var.sqrt() * z
                } else {
                    alpha
                }
            }
            CoefficientRule::Resample { values } => values[r.gen_range(0..values.len())],
        }
    }

    /// α is the same for every `(w, b)`.
    fn constant_alpha(&self) -> Option<f64> {
        match self {
            CoefficientRule::Affine { constant, b_coef, w_coefs, .. }
                if *b_coef == 0.0 && w_coefs.iter().all(|c| *c == 0.0) =>
            {
                Some(*constant)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarronSamplerSpec {
    pub d_in: usize,
    pub activation: ActivationKind,
    /// Uniform ℓ1-sphere or an empirical measure with atoms on the sphere.
    pub pi: FirstLayerMeasure,
    pub a_rule: CoefficientRule,
    pub n: usize,
}

impl BarronSamplerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.n == 0 {
            return Err(Error::InvalidSpec("d_in and n must be positive".into()));
        }
        self.pi.validate(self.d_in)?;
        match &self.pi {
            FirstLayerMeasure::GaussianIid { .. } => {
                return Err(Error::InvalidSpec("the first-layer measure must live on the ℓ1-sphere".into()))
            }
            FirstLayerMeasure::Empirical { atoms, .. } => {
                for (k, a) in atoms.iter().enumerate() {
                    if (l1_norm(a) - 1.0).abs() > SPHERE_TOLERANCE {
                        return Err(Error::InvalidSpec(format!("atom {k} is not on the unit ℓ1-sphere")));
                    }
                }
            }
            FirstLayerMeasure::L1SphereUniform => {}
        }
        match &self.a_rule {
            CoefficientRule::Affine { constant, b_coef, w_coefs, noise_var } => {
                check_dim(self.d_in, w_coefs.len())?;
                if ![*constant, *b_coef, *noise_var].iter().chain(w_coefs).all(|v| v.is_finite()) || *noise_var < 0.0 {
                    return Err(Error::InvalidSpec("coefficient rule must be finite with noise_var ≥ 0".into()));
                }
            }
            CoefficientRule::Resample { values } => {
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSpec("resample values must be finite and non-empty".into()));
                }
            }
        }
        Ok(())
    }

    /// Reads the sampler keys from `kv`, leaving other keys untouched:
    ///
    /// ```text
    /// d_in = 1
    /// activation = relu
    /// pi.kind = l1sphere         # l1sphere | empirical (pi.atom<k> = weight, w..., b)
    /// a.kind = affine            # affine | resample
    /// a.const = 1
    /// a.b = 0
    /// a.w = 0                    # d_in comma-separated values
    /// a.noise_var = 0
    /// a.values = 1, -1           # resample only
    /// n = 256
    /// ```
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let d_in: usize = kv.require("d_in")?;
        let activation: ActivationKind = kv.require("activation")?;
        let pi = match kv.get_or::<String>("pi.kind", "l1sphere".into())?.as_str() {
            "l1sphere" => FirstLayerMeasure::L1SphereUniform,
            "empirical" => parse_atoms(kv, d_in)?,
            other => {
                return Err(Error::Parse(format!("unknown pi.kind '{other}' (expected l1sphere or empirical)")))
            }
        };
        let a_rule = match kv.get_or::<String>("a.kind", "affine".into())?.as_str() {
            "affine" => CoefficientRule::Affine {
                constant: kv.get_or("a.const", 1.0)?,
                b_coef: kv.get_or("a.b", 0.0)?,
                w_coefs: kv.get_list("a.w")?.unwrap_or_else(|| vec![0.0; d_in]),
                noise_var: kv.get_or("a.noise_var", 0.0)?,
            },
            "resample" => CoefficientRule::Resample {
                values: kv.get_list("a.values")?.ok_or_else(|| Error::Parse("a.values is required".into()))?,
            },
            other => return Err(Error::Parse(format!("unknown a.kind '{other}' (expected affine or resample)"))),
        };
        let bs = BarronSamplerSpec { d_in, activation, pi, a_rule, n: kv.get_or("n", 1)? };
        bs.validate()?;
        Ok(bs)
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        let bs = Self::from_key_values(&kv)?;
        kv.finish()?;
        Ok(bs)
    }

    fn with_n(&self, n: usize) -> Self {
        BarronSamplerSpec { n, ..self.clone() }
    }
}

/// A point of the unit ℓ1-sphere in dimension `d_in + 1`: Dirichlet(1, …, 1)
/// magnitudes with independent random signs, the last coordinate being `b`.
pub fn sample_l1_sphere(d_in: usize, seed: u64) -> Atom {
    sample_l1_sphere_with(d_in, &mut rng::stream(seed, 0))
}

fn build_with(bs: &BarronSamplerSpec, r: &mut rng::StreamRng) -> NetworkSample {
    let n = bs.n;
    let mut w1 = DMatrix::zeros(n, bs.d_in);
    let mut b1 = DVector::zeros(n);
    let mut w2 = DMatrix::zeros(1, n);
    for i in 0..n {
        let atom = bs.pi.sample(bs.d_in, r);
        let a = bs.a_rule.sample(&atom, r);
        for (j, v) in atom.w.iter().enumerate() {
            w1[(i, j)] = *v;
        }
        b1[i] = atom.b;
        w2[(0, i)] = a / n as f64;
    }
    NetworkSample {
        widths: vec![n],
        weights: vec![w1, w2],
        biases: vec![b1, DVector::zeros(1)],
        activation: bs.activation,
    }
}

/// Draws the width-`N` network with output weights `a_i / N`.
pub fn build_barron_network(bs: &BarronSamplerSpec, seed: u64) -> Result<NetworkSample> {
    bs.validate()?;
    Ok(build_with(bs, &mut rng::stream(seed, 0)))
}

/// `E_ρ[a φ(wᵀx + b)]`: exact for an empirical π, Monte Carlo otherwise.
/// Returns the estimate and its standard error.
pub fn barron_mean_oracle(bs: &BarronSamplerSpec, x: &[f64], samples: usize, seed: u64) -> Result<(f64, f64)> {
    bs.validate()?;
    check_dim(bs.d_in, x.len())?;
    let term = |atom: &Atom, a: f64| {
        let pre: f64 = atom.w.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + atom.b;
        a * bs.activation.apply(pre)
    };
    let mean_a = match &bs.a_rule {
        CoefficientRule::Resample { values } => Some(values.iter().sum::<f64>() / values.len() as f64),
        _ => None,
    };
    if let FirstLayerMeasure::Empirical { atoms, weights } = &bs.pi {
        let total = atoms
            .iter()
            .zip(weights)
            .map(|(atom, p)| p * term(atom, bs.a_rule.alpha(atom).or(mean_a).expect("one of the two")))
            .sum();
        return Ok((total, 0.0));
    }
    if samples < 2 {
        return Err(Error::InvalidSpec("the oracle needs at least two samples".into()));
    }
    let mut r = rng::stream(rng::derive_seed(seed, rng::purpose::BARRON_ORACLE, 0), 0);
    let values: Vec<f64> = (0..samples)
        .map(|_| {
            let atom = bs.pi.sample(bs.d_in, &mut r);
            let a = bs.a_rule.alpha(&atom).or(mean_a).expect("one of the two");
            term(&atom, a)
        })
        .collect();
    Ok(stats::mean_stderr(&values))
}

/// `‖f‖²_{H_π} = E_π[α(w, b)²]` with its standard error.
pub fn estimate_hpi_norm_sq(bs: &BarronSamplerSpec, samples: usize, seed: u64) -> Result<(f64, f64)> {
    bs.validate()?;
    if bs.a_rule.alpha(&Atom { w: vec![0.0; bs.d_in], b: 0.0 }).is_none() {
        return Err(Error::Unsupported("the coefficient rule does not expose α(w, b)".into()));
    }
    if let Some(c) = bs.a_rule.constant_alpha() {
        return Ok((c * c, 0.0));
    }
    if let FirstLayerMeasure::Empirical { atoms, weights } = &bs.pi {
        let total = atoms.iter().zip(weights).map(|(a, p)| p * bs.a_rule.alpha(a).unwrap().powi(2)).sum();
        return Ok((total, 0.0));
    }
    if samples < 2 {
        return Err(Error::InvalidSpec("at least two samples are required".into()));
    }
    let mut r = rng::stream(rng::derive_seed(seed, rng::purpose::HPI, 0), 0);
    let values: Vec<f64> = (0..samples)
        .map(|_| bs.a_rule.alpha(&bs.pi.sample(bs.d_in, &mut r)).unwrap().powi(2))
        .collect();
    Ok(stats::mean_stderr(&values))
}

#[derive(Debug, Clone)]
pub struct BarronRow {
    pub n: usize,
    pub mean: f64,
    pub mean_stderr: f64,
    pub variance: f64,
    pub values: Vec<f64>,
}

/// `Var[f_N] / Var[f_{N'}]` for consecutive list entries.
#[derive(Debug, Clone)]
pub struct VarianceRatio {
    pub n: usize,
    pub n_next: usize,
    /// `N' / N`, the ratio the 1/N law predicts.
    pub expected: f64,
    /// `None` when `Var[f_{N'}]` is zero.
    pub ratio: Option<f64>,
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct BarronReport {
    pub x: Vec<f64>,
    pub reps: usize,
    pub rows: Vec<BarronRow>,
    pub ratios: Vec<VarianceRatio>,
}

fn bootstrap_ratio_ci(a: &[f64], b: &[f64], seed: u64) -> Option<(f64, f64)> {
    let mut r = rng::stream(seed, 0);
    let mut resample = |xs: &[f64]| -> Vec<f64> { (0..xs.len()).map(|_| xs[r.gen_range(0..xs.len())]).collect() };
    let mut ratios: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .filter_map(|_| {
            let va = stats::variance(&resample(a));
            let vb = stats::variance(&resample(b));
            (vb > 0.0).then(|| va / vb)
        })
        .collect();
    if ratios.len() < 2 {
        return None;
    }
    ratios.sort_by(f64::total_cmp);
    let q = |p: f64| ratios[((ratios.len() - 1) as f64 * p).round() as usize];
    Some((q(0.025), q(0.975)))
}

/// Variance of `f_N(x)` over `reps` independent builds for each `N`.
pub fn barron_variance_scaling(
    bs_template: &BarronSamplerSpec,
    x: &[f64],
    n_list: &[usize],
    reps: usize,
    seed: u64,
) -> Result<BarronReport> {
    bs_template.validate()?;
    check_dim(bs_template.d_in, x.len())?;
    if n_list.len() < 2 || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(Error::InvalidSpec("N list needs at least two strictly increasing positive values".into()));
    }
    if n_list[n_list.len() - 1] < 2 * n_list[0] {
        return Err(Error::InvalidSpec("N list must span at least a factor of 2".into()));
    }
    if reps < 2 {
        return Err(Error::InvalidSpec("reps must be at least 2".into()));
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let bs = bs_template.with_n(n);
        let base = rng::derive_seed(seed, rng::purpose::BARRON, n as u64);
        let values: Vec<f64> = par::map_indexed(reps, |rep| {
            let mut r = rng::stream(rng::derive_seed(base, rng::purpose::BARRON, rep as u64), 0);
            let net = build_with(&bs, &mut r);
            forward(&net, x).expect("validated input")[0]
        });
        let (mean, mean_stderr) = stats::mean_stderr(&values);
        rows.push(BarronRow { n, mean, mean_stderr, variance: stats::variance(&values), values });
    }
    let ratios = rows
        .windows(2)
        .enumerate()
        .map(|(k, pair)| {
            let (a, b) = (&pair[0], &pair[1]);
            let defined = b.variance > 0.0;
            VarianceRatio {
                n: a.n,
                n_next: b.n,
                expected: b.n as f64 / a.n as f64,
                ratio: defined.then(|| a.variance / b.variance),
                ci: if defined {
                    bootstrap_ratio_ci(&a.values, &b.values, rng::derive_seed(seed, rng::purpose::BOOTSTRAP, k as u64))
                } else {
                    None
                },
            }
        })
        .collect();
    Ok(BarronReport { x: x.to_vec(), reps, rows, ratios })
}

impl BarronReport {
    /// `n,mean,mean_stderr,variance,ratio_to_next,ci_low,ci_high`; ratio
    /// fields are empty on the last row and when undefined.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,mean,mean_stderr,variance,ratio_to_next,ci_low,ci_high\n");
        for (k, row) in self.rows.iter().enumerate() {
            let ratio = self.ratios.get(k);
            let r = ratio.and_then(|v| v.ratio).map(fmt_f64).unwrap_or_default();
            let (lo, hi) = ratio
                .and_then(|v| v.ci)
                .map(|(l, h)| (fmt_f64(l), fmt_f64(h)))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{r},{lo},{hi}",
                row.n,
                fmt_f64(row.mean),
                fmt_f64(row.mean_stderr),
                fmt_f64(row.variance)
            );
        }
        out
    }

    /// Each defined ratio must lie in `[0.75, 1.25] × expected`, i.e.
    /// `[1.5, 2.5]` when `N` doubles. Returns `None` when no ratio is defined.
    pub fn ratios_in_band(&self) -> Option<bool> {
        let defined: Vec<_> = self.ratios.iter().filter_map(|r| r.ratio.map(|v| (v, r.expected))).collect();
        if defined.is_empty() {
            return None;
        }
        Some(defined.iter().all(|(v, e)| *v >= 0.75 * e && *v <= 1.25 * e))
    }
}
