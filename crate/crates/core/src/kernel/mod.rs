//! The layerwise kernel recursion of an infinitely wide fully-connected
//! network.
//!
//! A pre-activation pair `(z(x), z(x'))` at layer `l − 1` is Gaussian with
//! means `h` and covariances `k`. Adding the layer bias and pushing it
//! through φ gives the next layer:
//!
//! ```text
//! h'(x)     = μ_w · E[φ(z(x) + b)]
//! k'(x, x') = σ_w² · E[φ(z(x) + b) · φ(z(x') + b)]
//! ```
//!
//! The first layer is handled separately because its law is whatever π is.
//! For a Gaussian π the pre-activations `wᵀx` are Gaussian and the same step
//! applies; for any other π the 1→2 step integrates over π directly.

mod config;
pub mod measure;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::activation::ActivationKind;
use crate::error::{check_dim, Error, Result};
use crate::gauss_expect::{
    expect_phi, expect_phi_pair, mc_expect_pair, BivariateGaussianMoments, ExpectationMethod,
    GaussianMoments,
};
use crate::{par, rng};

pub(crate) use config::parse_atoms;
pub use measure::{l1_norm, sample_l1_sphere_with, Atom, FirstLayerMeasure};

/// Hyperparameters of layer `l ≥ 2`: weight mean/variance scales (before the
/// `1/N_{l−1}` finite-width scaling) and the layer's bias mean/variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerHyperparams {
    pub mu_w: f64,
    pub var_w: f64,
    pub mu_b: f64,
    pub var_b: f64,
}

impl Default for LayerHyperparams {
    fn default() -> Self {
        LayerHyperparams { mu_w: 0.0, var_w: 1.0, mu_b: 0.0, var_b: 0.0 }
    }
}

impl LayerHyperparams {
    fn validate(&self, l: usize, output: bool) -> Result<()> {
        let vals = [self.mu_w, self.var_w, self.mu_b, self.var_b];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(format!("layer {l}: non-finite hyperparameter")));
        }
        if self.var_w < 0.0 || self.var_b < 0.0 {
            return Err(Error::InvalidSpec(format!("layer {l}: negative variance")));
        }
        if output && (self.mu_b != 0.0 || self.var_b != 0.0) {
            return Err(Error::InvalidSpec(format!(
                "layer {l} is the output layer and must have zero bias"
            )));
        }
        Ok(())
    }
}

/// Full description of the induced Gaussian process.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    /// Number of hidden layers `L`.
    pub depth: usize,
    pub d_in: usize,
    pub activation: ActivationKind,
    /// First-layer measure π; also carries the layer-1 bias law.
    pub pi: FirstLayerMeasure,
    /// Layers `2..=L+1`; `layers[i]` describes layer `i + 2`.
    pub layers: Vec<LayerHyperparams>,
    pub method: ExpectationMethod,
    /// Quadrature nodes used when `method` is analytic but a layer's state has
    /// no closed form (nonzero means, Tanh).
    pub quad_nodes: usize,
    /// Draws of π used for the 1→2 step when π is the ℓ1-sphere measure.
    pub pi_samples: usize,
    pub pi_seed: u64,
}

impl KernelSpec {
    /// `depth` hidden layers, N(0, 1) first-layer weights, unit output
    /// variance and no biases.
    pub fn standard(depth: usize, d_in: usize, activation: ActivationKind) -> Self {
        KernelSpec {
            depth,
            d_in,
            activation,
            pi: FirstLayerMeasure::GaussianIid { var_w: 1.0, var_b: 0.0, mu_w: 0.0, mu_b: 0.0 },
            layers: vec![LayerHyperparams::default(); depth],
            method: ExpectationMethod::Analytic,
            quad_nodes: 64,
            pi_samples: 100_000,
            pi_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidSpec("depth must be at least 1".into()));
        }
        if self.d_in == 0 {
            return Err(Error::InvalidSpec("d_in must be at least 1".into()));
        }
        if self.layers.len() != self.depth {
            return Err(Error::InvalidSpec(format!(
                "expected {} layer entries (layers 2..={}), got {}",
                self.depth,
                self.depth + 1,
                self.layers.len()
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate(i + 2, i + 1 == self.depth)?;
        }
        self.pi.validate(self.d_in)?;
        self.method.validate()?;
        if self.quad_nodes < 2 {
            return Err(Error::InvalidSpec("quad_nodes must be at least 2".into()));
        }
        if matches!(self.pi, FirstLayerMeasure::L1SphereUniform) && self.pi_samples == 0 {
            return Err(Error::InvalidSpec("pi.samples must be positive".into()));
        }
        Ok(())
    }

    /// The layer-1 bias law as (mean, variance) for a Gaussian π.
    fn first_bias(&self) -> (f64, f64) {
        match self.pi {
            FirstLayerMeasure::GaussianIid { mu_b, var_b, .. } => (mu_b, var_b),
            _ => (0.0, 0.0),
        }
    }

    /// Bias law of hidden layer `l` (1-based, `l ≤ L`).
    fn hidden_bias(&self, l: usize) -> (f64, f64) {
        if l == 1 {
            self.first_bias()
        } else {
            let layer = &self.layers[l - 2];
            (layer.mu_b, layer.var_b)
        }
    }

    fn expectations(&self, step: usize) -> Expectations {
        let method = match self.method {
            ExpectationMethod::MonteCarlo { samples, seed } => ExpectationMethod::MonteCarlo {
                samples,
                seed: rng::derive_seed(seed, rng::purpose::LAYER, step as u64),
            },
            m => m,
        };
        Expectations { method, fallback_nodes: Some(self.quad_nodes) }
    }
}

/// Expectation policy for one recursion step: the configured method, with an
/// optional quadrature fallback when a closed form does not apply.
#[derive(Debug, Clone, Copy)]
struct Expectations {
    method: ExpectationMethod,
    fallback_nodes: Option<usize>,
}

impl Expectations {
    fn strict(method: ExpectationMethod) -> Self {
        Expectations { method, fallback_nodes: None }
    }

    fn with_fallback<T>(&self, f: impl Fn(ExpectationMethod) -> Result<T>) -> Result<T> {
        match (f(self.method), self.fallback_nodes) {
            (Err(Error::Unsupported(_)), Some(nodes)) => {
                f(ExpectationMethod::Quadrature { nodes })
            }
            (r, _) => r,
        }
    }

    fn single(&self, m: GaussianMoments, kind: ActivationKind) -> Result<f64> {
        self.with_fallback(|method| expect_phi(m, kind, method))
    }

    fn pair(&self, m: BivariateGaussianMoments, kind: ActivationKind) -> Result<f64> {
        self.with_fallback(|method| expect_phi_pair(m, kind, method))
    }
}

/// Mean and covariance of the pre-activation pair at one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairState {
    pub h1: f64,
    pub h2: f64,
    pub k11: f64,
    pub k22: f64,
    pub k12: f64,
}

impl PairState {
    pub fn validate(&self) -> Result<()> {
        let all = [self.h1, self.h2, self.k11, self.k22, self.k12];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMoments(format!("non-finite state {self:?}")));
        }
        if self.k11 < 0.0 || self.k22 < 0.0 {
            return Err(Error::InvalidMoments(format!("negative variance in {self:?}")));
        }
        let prod = self.k11 * self.k22;
        if self.k12 * self.k12 > prod + 1e-10 * prod.max(1.0) {
            return Err(Error::InvalidMoments(format!("Cauchy–Schwarz violated in {self:?}")));
        }
        Ok(())
    }

    fn post_bias(&self, bias_mu: f64, bias_var: f64) -> Result<BivariateGaussianMoments> {
        let k12 = self.k12 + bias_var;
        let k11 = self.k11 + bias_var;
        let k22 = self.k22 + bias_var;
        // quadrature noise may push |k12| marginally past √(k11·k22)
        let bound = (k11 * k22).sqrt();
        BivariateGaussianMoments::new(
            self.h1 + bias_mu,
            self.h2 + bias_mu,
            k11,
            k22,
            k12.clamp(-bound, bound),
        )
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact moments of `(wᵀx, wᵀx')` under π.
pub fn first_layer_state(spec: &KernelSpec, x: &[f64], x2: &[f64]) -> Result<PairState> {
    check_dim(spec.d_in, x.len())?;
    check_dim(spec.d_in, x2.len())?;
    Ok(match &spec.pi {
        FirstLayerMeasure::GaussianIid { var_w, mu_w, .. } => PairState {
            h1: mu_w * x.iter().sum::<f64>(),
            h2: mu_w * x2.iter().sum::<f64>(),
            k11: var_w * dot(x, x),
            k22: var_w * dot(x2, x2),
            k12: var_w * dot(x, x2),
        },
        FirstLayerMeasure::L1SphereUniform => {
            // |coordinates| ~ flat Dirichlet over n = d_in + 1 parts with
            // independent signs: E[w_i w_j] = δ_ij · 2 / (n (n + 1)).
            let n = (spec.d_in + 1) as f64;
            let second = 2.0 / (n * (n + 1.0));
            PairState {
                h1: 0.0,
                h2: 0.0,
                k11: second * dot(x, x),
                k22: second * dot(x2, x2),
                k12: second * dot(x, x2),
            }
        }
        FirstLayerMeasure::Empirical { atoms, weights } => {
            let (mut h1, mut h2, mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (atom, p) in atoms.iter().zip(weights) {
                let u = dot(&atom.w, x);
                let v = dot(&atom.w, x2);
                h1 += p * u;
                h2 += p * v;
                s11 += p * (u * u);
                s22 += p * (v * v);
                s12 += p * (u * v);
            }
            PairState {
                h1,
                h2,
                k11: (s11 - h1 * h1).max(0.0),
                k22: (s22 - h2 * h2).max(0.0),
                k12: s12 - h1 * h2,
            }
        }
    })
}

/// One recursion step `l − 1 → l` with the given expectation method and no
/// fallback.
pub fn layer_step(
    state: PairState,
    bias_mu: f64,
    bias_var: f64,
    next: &LayerHyperparams,
    kind: ActivationKind,
    method: ExpectationMethod,
) -> Result<PairState> {
    step_with(state, bias_mu, bias_var, next, kind, Expectations::strict(method))
}

fn step_with(
    state: PairState,
    bias_mu: f64,
    bias_var: f64,
    next: &LayerHyperparams,
    kind: ActivationKind,
    ex: Expectations,
) -> Result<PairState> {
    state.validate()?;
    let m = state.post_bias(bias_mu, bias_var)?;
    let (d1, e1) = diagonal_step(m.mean1, m.var1, next, kind, ex)?;
    let (d2, e2) = diagonal_step(m.mean2, m.var2, next, kind, ex)?;
    let k12 = next.var_w * ex.pair(m, kind)?;
    Ok(PairState { h1: d1, h2: d2, k11: e1, k22: e2, k12 })
}

/// Mean and variance of a single point after one step, computed exactly as
/// the pair step computes its diagonal entries.
fn diagonal_step(
    mean: f64,
    var: f64,
    next: &LayerHyperparams,
    kind: ActivationKind,
    ex: Expectations,
) -> Result<(f64, f64)> {
    let single = GaussianMoments::new(mean, var)?;
    let h = next.mu_w * ex.single(single, kind)?;
    let k = next.var_w * ex.pair(BivariateGaussianMoments::diagonal(single), kind)?;
    Ok((h, k))
}

/// Atoms and probabilities standing in for a non-Gaussian π in the 1→2 step.
fn first_layer_atoms(spec: &KernelSpec) -> Option<(Vec<Atom>, Vec<f64>)> {
    match &spec.pi {
        FirstLayerMeasure::GaussianIid { .. } => None,
        FirstLayerMeasure::Empirical { atoms, weights } => Some((atoms.clone(), weights.clone())),
        FirstLayerMeasure::L1SphereUniform => {
            let n = spec.pi_samples;
            let seed = rng::derive_seed(spec.pi_seed, rng::purpose::FIRST_LAYER_MC, 0);
            let atoms = sample_pi_blocked(&spec.pi, spec.d_in, n, seed);
            Some((atoms, vec![1.0 / n as f64; n]))
        }
    }
}

const PI_BLOCK: usize = 4096;

/// `n` draws from π, block `b` on stream `b` of `seed`.
pub(crate) fn sample_pi_blocked(pi: &FirstLayerMeasure, d_in: usize, n: usize, seed: u64) -> Vec<Atom> {
    let blocks = n.div_ceil(PI_BLOCK);
    par::map_indexed(blocks, |b| {
        let count = PI_BLOCK.min(n - b * PI_BLOCK);
        let mut r = rng::stream(seed, b as u64);
        (0..count).map(|_| pi.sample(d_in, &mut r)).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// φ(wᵀx + b) for every atom.
fn atom_activations(atoms: &[Atom], kind: ActivationKind, x: &[f64]) -> Vec<f64> {
    atoms.iter().map(|a| kind.apply(dot(&a.w, x) + a.b)).collect()
}

fn atom_mean(weights: &[f64], act: &[f64]) -> f64 {
    weights.iter().zip(act).map(|(p, a)| p * a).sum()
}

fn atom_second(weights: &[f64], act1: &[f64], act2: &[f64]) -> f64 {
    weights.iter().zip(act1.iter().zip(act2)).map(|(p, (a, b))| p * (a * b)).sum()
}

/// Prior means at both points and the covariance `k(x, x')` of the output.
pub fn kernel_value(spec: &KernelSpec, x: &[f64], x2: &[f64]) -> Result<(f64, f64, f64)> {
    spec.validate()?;
    check_dim(spec.d_in, x.len())?;
    check_dim(spec.d_in, x2.len())?;
    let kind = spec.activation;
    let (mut state, start) = match first_layer_atoms(spec) {
        None => (first_layer_state(spec, x, x2)?, 1),
        Some((atoms, weights)) => {
            let a1 = atom_activations(&atoms, kind, x);
            let a2 = atom_activations(&atoms, kind, x2);
            let out = &spec.layers[0];
            let state = PairState {
                h1: out.mu_w * atom_mean(&weights, &a1),
                h2: out.mu_w * atom_mean(&weights, &a2),
                k11: out.var_w * atom_second(&weights, &a1, &a1),
                k22: out.var_w * atom_second(&weights, &a2, &a2),
                k12: out.var_w * atom_second(&weights, &a1, &a2),
            };
            (state, 2)
        }
    };
    for l in start..=spec.depth {
        let (bias_mu, bias_var) = spec.hidden_bias(l);
        let next = &spec.layers[l - 1];
        state = step_with(state, bias_mu, bias_var, next, kind, spec.expectations(l))?;
    }
    Ok((state.h1, state.h2, state.k12))
}

/// Per-point mean and variance plus the cross covariances between two point
/// sets, propagated layer by layer.
struct Propagation {
    h_a: Vec<f64>,
    k_a: Vec<f64>,
    h_b: Vec<f64>,
    k_b: Vec<f64>,
    /// Row-major `|A| × |B|` for a cross block, or the upper triangle
    /// (including the diagonal) for a symmetric block.
    cross: Vec<f64>,
}

/// Index pairs of the block being computed.
enum Block {
    Symmetric(usize),
    Cross(usize, usize),
}

impl Block {
    fn pairs(&self) -> Vec<(usize, usize)> {
        match *self {
            Block::Symmetric(m) => (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect(),
            Block::Cross(m, n) => (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect(),
        }
    }
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn propagate(spec: &KernelSpec, a: &[Vec<f64>], b: &[Vec<f64>], block: Block) -> Result<Propagation> {
    spec.validate()?;
    for p in a.iter().chain(b) {
        check_dim(spec.d_in, p.len())?;
    }
    let kind = spec.activation;
    let pairs = block.pairs();
    let (mut prop, start) = match first_layer_atoms(spec) {
        None => {
            let diag = |pts: &[Vec<f64>]| -> Result<(Vec<f64>, Vec<f64>)> {
                let mut h = Vec::with_capacity(pts.len());
                let mut k = Vec::with_capacity(pts.len());
                for p in pts {
                    let s = first_layer_state(spec, p, p)?;
                    h.push(s.h1);
                    k.push(s.k11);
                }
                Ok((h, k))
            };
            let (h_a, k_a) = diag(a)?;
            let (h_b, k_b) = diag(b)?;
            let cross = pairs
                .iter()
                .map(|&(i, j)| first_layer_state(spec, &a[i], &b[j]).map(|s| s.k12))
                .collect::<Result<Vec<_>>>()?;
            (Propagation { h_a, k_a, h_b, k_b, cross }, 1)
        }
        Some((atoms, weights)) => {
            let out = &spec.layers[0];
            let acts = |pts: &[Vec<f64>]| -> Vec<Vec<f64>> {
                par::map_indexed(pts.len(), |i| atom_activations(&atoms, kind, &pts[i]))
            };
            let act_a = acts(a);
            let act_b = acts(b);
            let h_a = act_a.iter().map(|v| out.mu_w * atom_mean(&weights, v)).collect();
            let k_a = act_a.iter().map(|v| out.var_w * atom_second(&weights, v, v)).collect();
            let h_b = act_b.iter().map(|v| out.mu_w * atom_mean(&weights, v)).collect();
            let k_b = act_b.iter().map(|v| out.var_w * atom_second(&weights, v, v)).collect();
            let cross = par::map_indexed(pairs.len(), |p| {
                let (i, j) = pairs[p];
                out.var_w * atom_second(&weights, &act_a[i], &act_b[j])
            });
            (Propagation { h_a, k_a, h_b, k_b, cross }, 2)
        }
    };
    for l in start..=spec.depth {
        let (bias_mu, bias_var) = spec.hidden_bias(l);
        let next = &spec.layers[l - 1];
        let ex = spec.expectations(l);
        let diag = |h: &[f64], k: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
            let out = par::try_map_indexed(h.len(), |i| {
                diagonal_step(h[i] + bias_mu, k[i] + bias_var, next, kind, ex)
            })?;
            Ok(out.into_iter().unzip())
        };
        let (h_a, k_a) = diag(&prop.h_a, &prop.k_a)?;
        let (h_b, k_b) = diag(&prop.h_b, &prop.k_b)?;
        let cross = par::try_map_indexed(pairs.len(), |p| {
            let (i, j) = pairs[p];
            let state = PairState {
                h1: prop.h_a[i],
                h2: prop.h_b[j],
                k11: prop.k_a[i],
                k22: prop.k_b[j],
                k12: prop.cross[p],
            };
            state.validate()?;
            let m = state.post_bias(bias_mu, bias_var)?;
            Ok::<f64, Error>(next.var_w * ex.pair(m, kind)?)
        })?;
        prop = Propagation { h_a, k_a, h_b, k_b, cross };
    }
    Ok(prop)
}

/// Prior mean vector and Gram matrix over the rows of `x`.
pub fn gram(spec: &KernelSpec, x: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_dim(spec.d_in, x.ncols())?;
    let m = x.nrows();
    if m == 0 {
        return Err(Error::InvalidSpec("gram needs at least one point".into()));
    }
    let pts = rows(x);
    let prop = propagate(spec, &pts, &pts, Block::Symmetric(m))?;
    let mut k = DMatrix::zeros(m, m);
    for (p, (i, j)) in Block::Symmetric(m).pairs().into_iter().enumerate() {
        k[(i, j)] = prop.cross[p];
        k[(j, i)] = prop.cross[p];
    }
    Ok((DVector::from_vec(prop.h_a), k))
}

/// Cross block between two point sets plus the prior variances of the
/// second set, each computed exactly as [`kernel_value`] would.
pub(crate) struct CrossBlock {
    pub h_a: DVector<f64>,
    pub h_b: DVector<f64>,
    pub var_b: Vec<f64>,
    pub k: DMatrix<f64>,
}

pub(crate) fn cross_block(spec: &KernelSpec, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<CrossBlock> {
    check_dim(spec.d_in, a.ncols())?;
    check_dim(spec.d_in, b.ncols())?;
    let (pa, pb) = (rows(a), rows(b));
    let prop = propagate(spec, &pa, &pb, Block::Cross(pa.len(), pb.len()))?;
    Ok(CrossBlock {
        h_a: DVector::from_vec(prop.h_a),
        h_b: DVector::from_vec(prop.h_b),
        var_b: prop.k_b,
        k: DMatrix::from_row_slice(pa.len(), pb.len(), &prop.cross),
    })
}

/// Prior means at both sets and the `|A| × |B|` cross-covariance block.
pub fn cross_gram(
    spec: &KernelSpec,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>)> {
    let block = cross_block(spec, a, b)?;
    Ok((block.h_a, block.h_b, block.k))
}

/// Monte Carlo (or exact, for an empirical π) estimate of
/// `E_π[φ(wᵀx + b) φ(wᵀx' + b)]` with its standard error.
pub fn two_layer_kernel(
    pi: &FirstLayerMeasure,
    kind: ActivationKind,
    x: &[f64],
    x2: &[f64],
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let d_in = x.len();
    check_dim(d_in, x2.len())?;
    pi.validate(d_in)?;
    if let FirstLayerMeasure::Empirical { atoms, weights } = pi {
        let a1 = atom_activations(atoms, kind, x);
        let a2 = atom_activations(atoms, kind, x2);
        return Ok((atom_second(weights, &a1, &a2), 0.0));
    }
    if samples == 0 {
        return Err(Error::InvalidSpec("two_layer_kernel needs at least 1 sample".into()));
    }
    let seed = rng::derive_seed(seed, rng::purpose::FIRST_LAYER_MC, 1);
    let atoms = sample_pi_blocked(pi, d_in, samples, seed);
    let vals: Vec<f64> = atoms
        .iter()
        .map(|a| kind.apply(dot(&a.w, x) + a.b) * kind.apply(dot(&a.w, x2) + a.b))
        .collect();
    Ok(crate::stats::mean_stderr(&vals))
}

/// Draws one output-layer sample path of the prior at the rows of `x`
/// (used to generate synthetic regression data).
pub fn sample_prior(
    spec: &KernelSpec,
    x: &DMatrix<f64>,
    noise_var: f64,
    seed: u64,
) -> Result<DVector<f64>> {
    let (h, mut k) = gram(spec, x)?;
    let m = x.nrows();
    let mean_diag = k.diagonal().mean().abs().max(f64::MIN_POSITIVE);
    for i in 0..m {
        k[(i, i)] += noise_var + 1e-10 * mean_diag;
    }
    let chol = k.cholesky().ok_or(Error::NotPositiveDefinite {
        jitter: 1e-10 * mean_diag,
        min_eigenvalue: f64::NAN,
    })?;
    let mut r = rng::stream(seed, 0);
    let z = DVector::from_iterator(m, (0..m).map(|_| StandardNormal.sample(&mut r)));
    Ok(h + chol.l() * z)
}

/// One recursion step evaluated by Monte Carlo: the next-layer covariance
/// entry and its standard error.
pub fn step_mc_with_stderr(
    state: PairState,
    bias_mu: f64,
    bias_var: f64,
    next: &LayerHyperparams,
    kind: ActivationKind,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let m = state.post_bias(bias_mu, bias_var)?;
    let (est, se) = mc_expect_pair(m, kind, samples, seed)?;
    Ok((next.var_w * est, next.var_w * se))
}
