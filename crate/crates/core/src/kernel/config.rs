//! Text form of [`KernelSpec`].
//!
//! ```text
//! depth = 2
//! d_in = 3
//! activation = relu
//! pi.kind = gaussian        # gaussian | l1sphere | empirical
//! pi.var_w = 0.5
//! layer2.var_w = 2
//! layer2.var_b = 0.1
//! layer3.var_w = 1
//! method = analytic         # analytic | quadrature | montecarlo
//! quad_nodes = 64
//! ```
//!
//! An empirical π lists atoms as `pi.atom<k> = weight, w_1, ..., w_d, b`.

use std::fmt::Write;

use super::{Atom, FirstLayerMeasure, KernelSpec, LayerHyperparams};
use crate::activation::ActivationKind;
use crate::config::{fmt_f64, KeyValues};
use crate::error::{Error, Result};
use crate::gauss_expect::ExpectationMethod;

const DEFAULT_MC_SAMPLES: usize = 1_000_000;

impl KernelSpec {
    pub fn from_config_str(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        let spec = Self::from_key_values(&kv)?;
        kv.finish()?;
        Ok(spec)
    }

    /// Reads the kernel keys from `kv`, leaving other keys untouched.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let depth: usize = kv.require("depth")?;
        let d_in: usize = kv.require("d_in")?;
        let activation: ActivationKind = kv.require("activation")?;
        let pi = match kv.get_or::<String>("pi.kind", "gaussian".into())?.as_str() {
            "gaussian" => FirstLayerMeasure::GaussianIid {
                var_w: kv.get_or("pi.var_w", 1.0)?,
                var_b: kv.get_or("pi.var_b", 0.0)?,
                mu_w: kv.get_or("pi.mu_w", 0.0)?,
                mu_b: kv.get_or("pi.mu_b", 0.0)?,
            },
            "l1sphere" => FirstLayerMeasure::L1SphereUniform,
            "empirical" => parse_atoms(kv, d_in)?,
            other => {
                return Err(Error::Parse(format!(
                    "unknown pi.kind '{other}' (expected gaussian, l1sphere or empirical)"
                )))
            }
        };
        let mut layers = Vec::with_capacity(depth);
        for l in 2..=depth + 1 {
            let d = LayerHyperparams::default();
            layers.push(LayerHyperparams {
                mu_w: kv.get_or(&format!("layer{l}.mu_w"), d.mu_w)?,
                var_w: kv.get_or(&format!("layer{l}.var_w"), d.var_w)?,
                mu_b: kv.get_or(&format!("layer{l}.mu_b"), d.mu_b)?,
                var_b: kv.get_or(&format!("layer{l}.var_b"), d.var_b)?,
            });
        }
        let quad_nodes: usize = kv.get_or("quad_nodes", 64)?;
        let method = match kv.get_or::<String>("method", "analytic".into())?.as_str() {
            "analytic" => ExpectationMethod::Analytic,
            "quadrature" => ExpectationMethod::Quadrature { nodes: quad_nodes },
            "montecarlo" => ExpectationMethod::MonteCarlo {
                samples: kv.get_or("mc_samples", DEFAULT_MC_SAMPLES)?,
                seed: kv.get_or("mc_seed", 0)?,
            },
            other => {
                return Err(Error::Parse(format!(
                    "unknown method '{other}' (expected analytic, quadrature or montecarlo)"
                )))
            }
        };
        let spec = KernelSpec {
            depth,
            d_in,
            activation,
            pi,
            layers,
            method,
            quad_nodes,
            pi_samples: kv.get_or("pi.samples", 100_000)?,
            pi_seed: kv.get_or("pi.seed", 0)?,
        };
        // layer keys beyond the configured depth are typos, not extra layers
        for key in kv.keys_with_prefix("layer") {
            let l = key[5..].split('.').next().and_then(|n| n.parse::<usize>().ok());
            if !matches!(l, Some(l) if (2..=depth + 1).contains(&l)) {
                return Err(Error::Parse(format!(
                    "key '{key}' does not name a layer in 2..={}",
                    depth + 1
                )));
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Serialises every key, numbers with 17 significant digits.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "depth = {}", self.depth);
        let _ = writeln!(s, "d_in = {}", self.d_in);
        let _ = writeln!(s, "activation = {}", self.activation);
        match &self.pi {
            FirstLayerMeasure::GaussianIid { var_w, var_b, mu_w, mu_b } => {
                let _ = writeln!(s, "pi.kind = gaussian");
                let _ = writeln!(s, "pi.mu_w = {}", fmt_f64(*mu_w));
                let _ = writeln!(s, "pi.var_w = {}", fmt_f64(*var_w));
                let _ = writeln!(s, "pi.mu_b = {}", fmt_f64(*mu_b));
                let _ = writeln!(s, "pi.var_b = {}", fmt_f64(*var_b));
            }
            FirstLayerMeasure::L1SphereUniform => {
                let _ = writeln!(s, "pi.kind = l1sphere");
                let _ = writeln!(s, "pi.samples = {}", self.pi_samples);
                let _ = writeln!(s, "pi.seed = {}", self.pi_seed);
            }
            FirstLayerMeasure::Empirical { atoms, weights } => {
                let _ = writeln!(s, "pi.kind = empirical");
                for (k, (atom, p)) in atoms.iter().zip(weights).enumerate() {
                    let mut fields = vec![fmt_f64(*p)];
                    fields.extend(atom.w.iter().map(|v| fmt_f64(*v)));
                    fields.push(fmt_f64(atom.b));
                    let _ = writeln!(s, "pi.atom{k} = {}", fields.join(", "));
                }
            }
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let l = i + 2;
            let _ = writeln!(s, "layer{l}.mu_w = {}", fmt_f64(layer.mu_w));
            let _ = writeln!(s, "layer{l}.var_w = {}", fmt_f64(layer.var_w));
            let _ = writeln!(s, "layer{l}.mu_b = {}", fmt_f64(layer.mu_b));
            let _ = writeln!(s, "layer{l}.var_b = {}", fmt_f64(layer.var_b));
        }
        match self.method {
            ExpectationMethod::Analytic => {
                let _ = writeln!(s, "method = analytic");
            }
            ExpectationMethod::Quadrature { .. } => {
                let _ = writeln!(s, "method = quadrature");
            }
            ExpectationMethod::MonteCarlo { samples, seed } => {
                let _ = writeln!(s, "method = montecarlo");
                let _ = writeln!(s, "mc_samples = {samples}");
                let _ = writeln!(s, "mc_seed = {seed}");
            }
        }
        let _ = writeln!(s, "quad_nodes = {}", self.quad_nodes);
        s
    }
}

pub(crate) fn parse_atoms(kv: &KeyValues, d_in: usize) -> Result<FirstLayerMeasure> {
    let keys: Vec<String> = kv.keys_with_prefix("pi.atom").map(str::to_string).collect();
    let mut indexed = Vec::with_capacity(keys.len());
    for key in keys {
        let k: usize = key["pi.atom".len()..]
            .parse()
            .map_err(|_| Error::Parse(format!("malformed atom key '{key}'")))?;
        let vals = kv.get_list(&key)?.expect("key exists");
        if vals.len() != d_in + 2 {
            return Err(Error::Parse(format!(
                "'{key}' needs {} values (weight, {d_in} input weights, bias), got {}",
                d_in + 2,
                vals.len()
            )));
        }
        indexed.push((k, vals));
    }
    if indexed.is_empty() {
        return Err(Error::Parse("pi.kind = empirical needs at least one pi.atom<k>".into()));
    }
    indexed.sort_by_key(|(k, _)| *k);
    let weights = indexed.iter().map(|(_, v)| v[0]).collect();
    let atoms = indexed
        .iter()
        .map(|(_, v)| Atom { w: v[1..=d_in].to_vec(), b: v[d_in + 1] })
        .collect();
    Ok(FirstLayerMeasure::Empirical { atoms, weights })
}
