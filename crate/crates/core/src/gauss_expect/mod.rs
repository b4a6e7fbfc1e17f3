//! One- and two-point Gaussian expectations of an activation.
//!
//! Three routes are available for every quantity: closed forms where they
//! exist, iterated panel quadrature in whitened coordinates, and a seeded
//! Monte Carlo estimator used as an independent oracle.

pub mod quadrature;

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::{par, rng};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// |ρ| above this is treated as a perfectly correlated pair.
pub const DEGENERATE_CORRELATION: f64 = 1.0 - 1e-12;
/// Correlations beyond ±(1 + this) indicate an upstream bug and are rejected.
pub const CORRELATION_SLACK: f64 = 1e-8;

/// Monte Carlo draws per independent stream.
const MC_BLOCK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMoments {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianMoments {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        let m = GaussianMoments { mean, variance };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() || !self.variance.is_finite() {
            return Err(Error::InvalidMoments(format!("non-finite moments {self:?}")));
        }
        if self.variance < 0.0 {
            return Err(Error::InvalidMoments(format!("negative variance {}", self.variance)));
        }
        Ok(())
    }
}

/// Means, variances and covariance of a jointly Gaussian pair `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivariateGaussianMoments {
    pub mean1: f64,
    pub mean2: f64,
    pub var1: f64,
    pub var2: f64,
    pub cov: f64,
}

impl BivariateGaussianMoments {
    pub fn new(mean1: f64, mean2: f64, var1: f64, var2: f64, cov: f64) -> Result<Self> {
        let m = BivariateGaussianMoments { mean1, mean2, var1, var2, cov };
        m.validate()?;
        Ok(m)
    }

    /// The pair `(u, u)` for a single Gaussian.
    pub fn diagonal(m: GaussianMoments) -> Self {
        BivariateGaussianMoments {
            mean1: m.mean,
            mean2: m.mean,
            var1: m.variance,
            var2: m.variance,
            cov: m.variance,
        }
    }

    pub fn swap(self) -> Self {
        BivariateGaussianMoments {
            mean1: self.mean2,
            mean2: self.mean1,
            var1: self.var2,
            var2: self.var1,
            cov: self.cov,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.mean1, self.mean2, self.var1, self.var2, self.cov];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMoments(format!("non-finite moments {self:?}")));
        }
        if self.var1 < 0.0 || self.var2 < 0.0 {
            return Err(Error::InvalidMoments(format!("negative variance in {self:?}")));
        }
        self.correlation().map(|_| ())
    }

    /// Correlation clamped to [-1, 1]; `None` when either variance is zero.
    /// Values outside the slack band are an error.
    pub fn correlation(&self) -> Result<Option<f64>> {
        if self.var1 == 0.0 || self.var2 == 0.0 {
            if self.cov.abs() > CORRELATION_SLACK * (1.0 + self.var1.max(self.var2)) {
                return Err(Error::InvalidMoments(format!(
                    "nonzero covariance {} with a zero variance",
                    self.cov
                )));
            }
            return Ok(None);
        }
        let rho = self.cov / (self.var1.sqrt() * self.var2.sqrt());
        if rho.abs() > 1.0 + CORRELATION_SLACK {
            return Err(Error::InvalidMoments(format!(
                "correlation {rho} outside [-1, 1] for {self:?}"
            )));
        }
        Ok(Some(rho.clamp(-1.0, 1.0)))
    }

    /// Orders the coordinates by `(var, mean)` so the two orderings of a pair
    /// run through identical arithmetic.
    fn canonical(self) -> Self {
        let key1 = (self.var1, self.mean1);
        let key2 = (self.var2, self.mean2);
        let swap = match key1.0.total_cmp(&key2.0) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => key1.1.total_cmp(&key2.1).is_gt(),
        };
        if swap {
            self.swap()
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectationMethod {
    Analytic,
    Quadrature { nodes: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl ExpectationMethod {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ExpectationMethod::Quadrature { nodes } if nodes < 2 => Err(Error::InvalidSpec(
                format!("quadrature needs at least 2 nodes, got {nodes}"),
            )),
            ExpectationMethod::MonteCarlo { samples: 0, .. } => {
                Err(Error::InvalidSpec("Monte Carlo needs at least 1 sample".into()))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ExpectationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExpectationMethod::Analytic => write!(f, "analytic"),
            ExpectationMethod::Quadrature { nodes } => write!(f, "quad:{nodes}"),
            ExpectationMethod::MonteCarlo { samples, seed } => write!(f, "mc:{samples}:{seed}"),
        }
    }
}

impl FromStr for ExpectationMethod {
    type Err = Error;

    /// Accepts `analytic`, `quad:<nodes>`, `mc:<samples>` and
    /// `mc:<samples>:<seed>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("invalid expectation method '{s}'"));
        let mut parts = s.split(':');
        let method = match parts.next().unwrap_or_default() {
            "analytic" => ExpectationMethod::Analytic,
            "quad" | "quadrature" => ExpectationMethod::Quadrature {
                nodes: parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?,
            },
            "mc" | "montecarlo" => {
                let samples = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                let seed = match parts.next() {
                    Some(p) => p.parse().map_err(|_| bad())?,
                    None => 0,
                };
                ExpectationMethod::MonteCarlo { samples, seed }
            }
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        method.validate()?;
        Ok(method)
    }
}

/// E[φ(u)] for `u ~ N(m.mean, m.variance)`.
pub fn expect_phi(m: GaussianMoments, kind: ActivationKind, method: ExpectationMethod) -> Result<f64> {
    m.validate()?;
    method.validate()?;
    match method {
        ExpectationMethod::Analytic => analytic_single(m, kind),
        ExpectationMethod::Quadrature { nodes } => Ok(quadrature_single(m, kind, nodes)),
        ExpectationMethod::MonteCarlo { samples, seed } => {
            Ok(mc_expect(m, kind, samples, seed)?.0)
        }
    }
}

/// E[φ(u)φ(v)] for the bivariate normal law `m`.
pub fn expect_phi_pair(
    m: BivariateGaussianMoments,
    kind: ActivationKind,
    method: ExpectationMethod,
) -> Result<f64> {
    m.validate()?;
    method.validate()?;
    let m = m.canonical();
    match method {
        ExpectationMethod::Analytic => analytic_pair(m, kind),
        ExpectationMethod::Quadrature { nodes } => Ok(quadrature_pair(m, kind, nodes)),
        ExpectationMethod::MonteCarlo { samples, seed } => {
            Ok(mc_expect_pair(m, kind, samples, seed)?.0)
        }
    }
}

fn analytic_single(m: GaussianMoments, kind: ActivationKind) -> Result<f64> {
    match kind {
        ActivationKind::Identity => Ok(m.mean),
        ActivationKind::ReLU if m.mean == 0.0 => Ok(m.variance.sqrt() * INV_SQRT_2PI),
        ActivationKind::Erf if m.mean == 0.0 => Ok(0.0),
        _ => Err(Error::Unsupported(format!(
            "no closed form for E[{kind}(u)] with mean {}",
            m.mean
        ))),
    }
}

fn analytic_pair(m: BivariateGaussianMoments, kind: ActivationKind) -> Result<f64> {
    let zero_mean = m.mean1 == 0.0 && m.mean2 == 0.0;
    match kind {
        ActivationKind::Identity => Ok(m.cov + m.mean1 * m.mean2),
        ActivationKind::ReLU if zero_mean => {
            // arc-cosine kernel of degree one
            let Some(rho) = m.correlation()? else {
                return Ok(0.0);
            };
            let theta = rho.acos();
            let sin_theta = (1.0 - rho * rho).max(0.0).sqrt();
            Ok((m.var1 * m.var2).sqrt()
                * (sin_theta + (std::f64::consts::PI - theta) * rho)
                / (2.0 * std::f64::consts::PI))
        }
        ActivationKind::Erf if zero_mean => {
            let denom = ((1.0 + 2.0 * m.var1) * (1.0 + 2.0 * m.var2)).sqrt();
            let arg = (2.0 * m.cov / denom).clamp(-1.0, 1.0);
            Ok(std::f64::consts::FRAC_2_PI * arg.asin())
        }
        _ => Err(Error::Unsupported(format!(
            "no closed form for E[{kind}(u){kind}(v)] with means ({}, {})",
            m.mean1, m.mean2
        ))),
    }
}

/// Breakpoints in z where `φ(mean + scale·z)` has a kink.
fn kink_breaks(kind: ActivationKind, mean: f64, scale: f64) -> Vec<f64> {
    if scale == 0.0 {
        return Vec::new();
    }
    kind.kinks().iter().map(|k| (k - mean) / scale).collect()
}

fn quadrature_single(m: GaussianMoments, kind: ActivationKind, nodes: usize) -> f64 {
    let s = m.variance.sqrt();
    let breaks = kink_breaks(kind, m.mean, s);
    quadrature::normal_panels(nodes, s, &breaks, |z| kind.apply(m.mean + s * z))
}

/// Square-root factor of the pair covariance: `u = m1 + a z1`,
/// `v = m2 + c z1 + d z2`. A perfectly correlated pair has `d = 0`.
struct Whitened {
    a: f64,
    c: f64,
    d: f64,
}

fn whiten(m: &BivariateGaussianMoments) -> Whitened {
    let a = m.var1.sqrt();
    let b = m.var2.sqrt();
    let rho = m.correlation().ok().flatten();
    match rho {
        None => Whitened { a, c: b, d: 0.0 },
        Some(r) if r.abs() > DEGENERATE_CORRELATION => Whitened { a, c: b.copysign(r), d: 0.0 },
        Some(r) => {
            let c = r * b;
            let d = (m.var2 - c * c).max(0.0).sqrt();
            Whitened { a, c, d }
        }
    }
}

fn quadrature_pair(m: BivariateGaussianMoments, kind: ActivationKind, nodes: usize) -> f64 {
    let Whitened { a, c, d } = whiten(&m);
    let outer_scale = a.max(c.abs());
    let mut outer_breaks = kink_breaks(kind, m.mean1, a);
    if d == 0.0 {
        // one-dimensional integral along the common direction
        outer_breaks.extend(kink_breaks(kind, m.mean2, c));
        return quadrature::normal_panels(nodes, outer_scale, &outer_breaks, |z| {
            kind.apply(m.mean1 + a * z) * kind.apply(m.mean2 + c * z)
        });
    }
    quadrature::normal_panels(nodes, outer_scale, &outer_breaks, |z1| {
        let phi_u = kind.apply(m.mean1 + a * z1);
        if phi_u == 0.0 {
            return 0.0;
        }
        let base = m.mean2 + c * z1;
        let inner_breaks = kink_breaks(kind, base, d);
        phi_u * quadrature::normal_panels(nodes, d, &inner_breaks, |z2| kind.apply(base + d * z2))
    })
}

/// Running mean and sum of squared deviations for one block.
#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0.0 {
            return other;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + delta * other.n / n,
            m2: self.m2 + other.m2 + delta * delta * self.n * other.n / n,
        }
    }

    fn estimate(self) -> (f64, f64) {
        let stderr = if self.n > 1.0 {
            (self.m2 / (self.n - 1.0)).sqrt() / self.n.sqrt()
        } else {
            f64::INFINITY
        };
        (self.mean, stderr)
    }
}

/// Runs `samples` draws split into fixed blocks, block `b` on stream `b` of
/// `seed`, merging block statistics in block order.
fn blocked_mc<F>(samples: usize, seed: u64, draw: F) -> (f64, f64)
where
    F: Fn(&mut rng::StreamRng) -> f64 + Sync + Send,
{
    let seed = rng::derive_seed(seed, rng::purpose::EXPECTATION, 0);
    let blocks = samples.div_ceil(MC_BLOCK);
    let parts = par::map_indexed(blocks, |b| {
        let count = MC_BLOCK.min(samples - b * MC_BLOCK);
        let mut r = rng::stream(seed, b as u64);
        let mut acc = Moments::default();
        for _ in 0..count {
            acc.push(draw(&mut r));
        }
        acc
    });
    parts.into_iter().fold(Moments::default(), Moments::merge).estimate()
}

/// Monte Carlo estimate of E[φ(u)] with its standard error.
pub fn mc_expect(
    m: GaussianMoments,
    kind: ActivationKind,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    m.validate()?;
    if samples == 0 {
        return Err(Error::InvalidSpec("Monte Carlo needs at least 1 sample".into()));
    }
    let s = m.variance.sqrt();
    Ok(blocked_mc(samples, seed, |r| {
        let z: f64 = StandardNormal.sample(r);
        kind.apply(m.mean + s * z)
    }))
}

/// Monte Carlo estimate of E[φ(u)φ(v)] with its standard error, drawing the
/// pair through the 2×2 covariance square root.
pub fn mc_expect_pair(
    m: BivariateGaussianMoments,
    kind: ActivationKind,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    m.validate()?;
    if samples == 0 {
        return Err(Error::InvalidSpec("Monte Carlo needs at least 1 sample".into()));
    }
    let Whitened { a, c, d } = whiten(&m);
    Ok(blocked_mc(samples, seed, |r| {
        let z1: f64 = StandardNormal.sample(r);
        let z2: f64 = StandardNormal.sample(r);
        kind.apply(m.mean1 + a * z1) * kind.apply(m.mean2 + c * z1 + d * z2)
    }))
}
