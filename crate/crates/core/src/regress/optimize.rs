//! Marginal-likelihood maximisation by Nelder–Mead with seeded restarts.
//!
//! Variances are searched as `log v`, means directly. The noise variance is
//! mapped as `1e-12 + exp(t)` so the objective stays finite.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};

use super::log_marginal_likelihood;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{FirstLayerMeasure, KernelSpec};
use crate::rng;

const NOISE_FLOOR: f64 = 1e-12;
const VARIANCE_FLOOR: f64 = 1e-12;
const ZERO_VARIANCE_START: f64 = 0.1;
const INITIAL_STEP: f64 = 0.5;
const RESTART_SPREAD: f64 = 1.0;

/// A tunable scalar, named by its config key (`noise` for σ_ε²).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamId {
    PiMuW,
    PiVarW,
    PiMuB,
    PiVarB,
    LayerMuW(usize),
    LayerVarW(usize),
    LayerMuB(usize),
    LayerVarB(usize),
    Noise,
}

impl ParamId {
    pub fn is_variance(self) -> bool {
        matches!(
            self,
            ParamId::PiVarW
                | ParamId::PiVarB
                | ParamId::LayerVarW(_)
                | ParamId::LayerVarB(_)
                | ParamId::Noise
        )
    }

    fn layer(self) -> Option<usize> {
        match self {
            ParamId::LayerMuW(l) | ParamId::LayerVarW(l) | ParamId::LayerMuB(l) | ParamId::LayerVarB(l) => {
                Some(l)
            }
            _ => None,
        }
    }

    fn check(self, spec: &KernelSpec) -> Result<()> {
        match self {
            ParamId::PiMuW | ParamId::PiVarW | ParamId::PiMuB | ParamId::PiVarB if !spec.pi.is_gaussian() => {
                return Err(Error::InvalidSpec(format!(
                    "{self} can only be optimized for a gaussian first-layer measure"
                )));
            }
            _ => {}
        }
        if let Some(l) = self.layer() {
            if l < 2 || l > spec.depth + 1 {
                return Err(Error::InvalidSpec(format!("{self}: no such layer")));
            }
            if l == spec.depth + 1 && matches!(self, ParamId::LayerMuB(_) | ParamId::LayerVarB(_)) {
                return Err(Error::InvalidSpec(format!("{self}: the output layer has no bias")));
            }
        }
        Ok(())
    }

    fn get(self, spec: &KernelSpec, noise: f64) -> f64 {
        let pi = match spec.pi {
            FirstLayerMeasure::GaussianIid { var_w, var_b, mu_w, mu_b } => [mu_w, var_w, mu_b, var_b],
            _ => [f64::NAN; 4],
        };
        match self {
            ParamId::PiMuW => pi[0],
            ParamId::PiVarW => pi[1],
            ParamId::PiMuB => pi[2],
            ParamId::PiVarB => pi[3],
            ParamId::LayerMuW(l) => spec.layers[l - 2].mu_w,
            ParamId::LayerVarW(l) => spec.layers[l - 2].var_w,
            ParamId::LayerMuB(l) => spec.layers[l - 2].mu_b,
            ParamId::LayerVarB(l) => spec.layers[l - 2].var_b,
            ParamId::Noise => noise,
        }
    }

    fn set(self, spec: &mut KernelSpec, noise: &mut f64, v: f64) {
        if let FirstLayerMeasure::GaussianIid { var_w, var_b, mu_w, mu_b } = &mut spec.pi {
            match self {
                ParamId::PiMuW => *mu_w = v,
                ParamId::PiVarW => *var_w = v,
                ParamId::PiMuB => *mu_b = v,
                ParamId::PiVarB => *var_b = v,
                _ => {}
            }
        }
        match self {
            ParamId::LayerMuW(l) => spec.layers[l - 2].mu_w = v,
            ParamId::LayerVarW(l) => spec.layers[l - 2].var_w = v,
            ParamId::LayerMuB(l) => spec.layers[l - 2].mu_b = v,
            ParamId::LayerVarB(l) => spec.layers[l - 2].var_b = v,
            ParamId::Noise => *noise = v,
            _ => {}
        }
    }

    /// Search-space coordinate of `v`. A variance that is exactly zero starts
    /// the search at `ZERO_VARIANCE_START`, since its log is unbounded.
    fn to_search(self, v: f64) -> f64 {
        match self {
            p if p.is_variance() && v == 0.0 => ZERO_VARIANCE_START.ln(),
            ParamId::Noise => (v - NOISE_FLOOR).max(NOISE_FLOOR).ln(),
            p if p.is_variance() => v.max(VARIANCE_FLOOR).ln(),
            _ => v,
        }
    }

    fn value_at(self, t: f64) -> f64 {
        match self {
            ParamId::Noise => NOISE_FLOOR + t.exp(),
            p if p.is_variance() => t.exp(),
            _ => t,
        }
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamId::PiMuW => write!(f, "pi.mu_w"),
            ParamId::PiVarW => write!(f, "pi.var_w"),
            ParamId::PiMuB => write!(f, "pi.mu_b"),
            ParamId::PiVarB => write!(f, "pi.var_b"),
            ParamId::LayerMuW(l) => write!(f, "layer{l}.mu_w"),
            ParamId::LayerVarW(l) => write!(f, "layer{l}.var_w"),
            ParamId::LayerMuB(l) => write!(f, "layer{l}.mu_b"),
            ParamId::LayerVarB(l) => write!(f, "layer{l}.var_b"),
            ParamId::Noise => write!(f, "noise"),
        }
    }
}

impl FromStr for ParamId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("unknown hyperparameter '{s}'"));
        match s {
            "noise" => return Ok(ParamId::Noise),
            "pi.mu_w" => return Ok(ParamId::PiMuW),
            "pi.var_w" => return Ok(ParamId::PiVarW),
            "pi.mu_b" => return Ok(ParamId::PiMuB),
            "pi.var_b" => return Ok(ParamId::PiVarB),
            _ => {}
        }
        let rest = s.strip_prefix("layer").ok_or_else(bad)?;
        let (l, field) = rest.split_once('.').ok_or_else(bad)?;
        let l: usize = l.parse().map_err(|_| bad())?;
        match field {
            "mu_w" => Ok(ParamId::LayerMuW(l)),
            "var_w" => Ok(ParamId::LayerVarW(l)),
            "mu_b" => Ok(ParamId::LayerMuB(l)),
            "var_b" => Ok(ParamId::LayerVarB(l)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub free: Vec<ParamId>,
    /// Total Nelder–Mead runs: the first starts at the template, the others
    /// at seeded perturbations of it.
    pub restarts: usize,
    pub max_evals: usize,
    pub seed: u64,
    pub initial_noise: f64,
}

impl OptimizerConfig {
    pub fn new(free: Vec<ParamId>, initial_noise: f64) -> Self {
        OptimizerConfig { free, restarts: 3, max_evals: 500, seed: 0, initial_noise }
    }
}

/// One objective evaluation: free parameter values and the resulting LML
/// (`-inf` when the Gram matrix could not be factorised).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub params: Vec<f64>,
    pub lml: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub spec: KernelSpec,
    pub noise_var: f64,
    pub lml: f64,
    pub initial_lml: f64,
    pub free: Vec<ParamId>,
    pub trace: Vec<TraceEntry>,
}

impl OptimizationResult {
    /// CSV with one row per evaluation: `eval,<param names>,lml,best_lml`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("eval");
        for p in &self.free {
            out.push(',');
            out.push_str(&p.to_string());
        }
        out.push_str(",lml,best_lml\n");
        let mut best = f64::NEG_INFINITY;
        for (i, e) in self.trace.iter().enumerate() {
            best = best.max(e.lml);
            out.push_str(&i.to_string());
            for v in &e.params {
                out.push(',');
                out.push_str(&crate::config::fmt_f64(*v));
            }
            out.push_str(&format!(",{},{}\n", crate::config::fmt_f64(e.lml), crate::config::fmt_f64(best)));
        }
        out
    }
}

struct Objective<'a> {
    template: &'a KernelSpec,
    data: &'a Dataset,
    free: &'a [ParamId],
    initial_noise: f64,
    trace: Vec<TraceEntry>,
}

impl Objective<'_> {
    fn apply(&self, t: &[f64]) -> (KernelSpec, f64) {
        let mut spec = self.template.clone();
        let mut noise = self.initial_noise;
        for (p, &ti) in self.free.iter().zip(t) {
            p.set(&mut spec, &mut noise, p.value_at(ti));
        }
        (spec, noise)
    }

    /// Negative LML, `+inf` on failure.
    fn eval(&mut self, t: &[f64]) -> f64 {
        let (spec, noise) = self.apply(t);
        if t.iter().any(|v| !v.is_finite()) {
            let params = self.free.iter().map(|p| p.get(&spec, noise)).collect();
            self.trace.push(TraceEntry { params, lml: f64::NEG_INFINITY });
            return f64::INFINITY;
        }
        -self.record(spec, noise)
    }

    fn record(&mut self, spec: KernelSpec, noise: f64) -> f64 {
        let lml = if spec.validate().is_ok() {
            log_marginal_likelihood(&spec, self.data, noise).unwrap_or(f64::NEG_INFINITY)
        } else {
            f64::NEG_INFINITY
        };
        let lml = if lml.is_nan() { f64::NEG_INFINITY } else { lml };
        let params = self.free.iter().map(|p| p.get(&spec, noise)).collect();
        self.trace.push(TraceEntry { params, lml });
        lml
    }
}

/// Minimises `f` from `x0` within `max_evals` evaluations. Returns the best
/// point and value.
fn nelder_mead(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], max_evals: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut evals = 0;
    let mut call = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = call(x0, &mut evals);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        if evals >= max_evals {
            break;
        }
        let mut x = x0.to_vec();
        x[i] += INITIAL_STEP;
        let fx = call(&x, &mut evals);
        simplex.push((x, fx));
    }
    let by_value = |a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)| a.1.total_cmp(&b.1);
    if simplex.len() < n + 1 {
        simplex.sort_by(by_value);
        return simplex.swap_remove(0);
    }

    while evals < max_evals {
        simplex.sort_by(by_value);
        let (best, worst) = (simplex[0].1, simplex[n].1);
        let spread = simplex.iter().map(|(x, _)| dist(x, &simplex[0].0)).fold(0.0, f64::max);
        if best.is_finite() && (worst - best).abs() <= 1e-10 * (1.0 + best.abs()) && spread < 1e-8 {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let along = |s: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + s * (w - c)).collect()
        };
        let xr = along(-1.0);
        let fr = call(&xr, &mut evals);
        if fr < simplex[0].1 {
            if evals >= max_evals {
                simplex[n] = (xr, fr);
                break;
            }
            let xe = along(-2.0);
            let fe = call(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        if evals >= max_evals {
            break;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(-0.5);
            let fc = call(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = call(&xc, &mut evals);
            (xc, fc)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        for i in 1..=n {
            if evals >= max_evals {
                break;
            }
            let x: Vec<f64> =
                simplex[0].0.iter().zip(&simplex[i].0).map(|(b, xi)| b + 0.5 * (xi - b)).collect();
            let fx = call(&x, &mut evals);
            simplex[i] = (x, fx);
        }
    }
    simplex.sort_by(by_value);
    simplex.swap_remove(0)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Maximises the log marginal likelihood over the free hyperparameters.
pub fn optimize_hyperparams(
    template: &KernelSpec,
    data: &Dataset,
    search: &OptimizerConfig,
) -> Result<OptimizationResult> {
    template.validate()?;
    if !(search.initial_noise >= 0.0 && search.initial_noise.is_finite()) {
        return Err(Error::InvalidSpec("initial noise variance must be finite and ≥ 0".into()));
    }
    for (i, p) in search.free.iter().enumerate() {
        p.check(template)?;
        if search.free[..i].contains(p) {
            return Err(Error::InvalidSpec(format!("{p} listed twice")));
        }
    }
    if search.max_evals == 0 {
        return Err(Error::InvalidSpec("max_evals must be positive".into()));
    }
    let mut obj = Objective {
        template,
        data,
        free: &search.free,
        initial_noise: search.initial_noise,
        trace: Vec::new(),
    };
    let initial_lml = obj.record(template.clone(), search.initial_noise);
    let x0: Vec<f64> = search.free.iter().map(|p| p.to_search(p.get(template, search.initial_noise))).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    if !search.free.is_empty() {
        for r in 0..search.restarts.max(1) {
            let start: Vec<f64> = if r == 0 {
                x0.clone()
            } else {
                let mut g = rng::stream(rng::derive_seed(search.seed, rng::purpose::OPTIMIZER, r as u64), 0);
                x0.iter()
                    .map(|v| {
                        let z: f64 = StandardNormal.sample(&mut g);
                        v + RESTART_SPREAD * z
                    })
                    .collect()
            };
            let (x, f) = nelder_mead(|t| obj.eval(t), &start, search.max_evals);
            if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
                best = Some((x, f));
            }
        }
    }
    // The template is kept unless the search strictly improves on it.
    let (spec, noise_var, lml) = match best {
        Some((x, f)) if -f > initial_lml => {
            let (spec, noise) = obj.apply(&x);
            (spec, noise, -f)
        }
        _ => (template.clone(), search.initial_noise, initial_lml),
    };
    if !lml.is_finite() {
        return Err(Error::Optimization(format!(
            "all {} evaluations failed to factorise the Gram matrix",
            obj.trace.len()
        )));
    }
    Ok(OptimizationResult {
        spec,
        noise_var,
        lml,
        initial_lml,
        free: search.free.clone(),
        trace: obj.trace,
    })
}
