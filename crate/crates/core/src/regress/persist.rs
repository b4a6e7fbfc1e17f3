//! Self-contained text form of a [`TrainedModel`].
//!
//! ```text
//! [spec]
//! depth = 1
//! ...
//! [model]
//! noise_var = 1.0000000000000000e-2
//! jitter_used = 0.0000000000000000e0
//! [train]
//! x0,y
//! ...
//! [beta]
//! 1.2345678901234567e0
//! ...
//! ```
//!
//! Loading rebuilds the Gram matrix from the spec and training data and
//! rejects the file if the stored `β` no longer solves the regression system.

use nalgebra::DVector;

use super::{beta_residual, factor_exact, lml_from_parts, TrainedModel};
use crate::config::{fmt_f64, KeyValues};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{gram, KernelSpec};

/// Largest accepted normwise backward error of the stored `β`.
pub const BETA_TOLERANCE: f64 = 1e-8;

const SECTIONS: [&str; 4] = ["[spec]", "[model]", "[train]", "[beta]"];

pub fn model_to_string(model: &TrainedModel) -> String {
    let mut out = String::new();
    out.push_str("[spec]\n");
    out.push_str(&model.spec.to_config_string());
    out.push_str("[model]\n");
    out.push_str(&format!("noise_var = {}\n", fmt_f64(model.noise_var)));
    out.push_str(&format!("jitter_used = {}\n", fmt_f64(model.jitter_used)));
    out.push_str("[train]\n");
    out.push_str(&model.data.to_csv_string());
    out.push_str("[beta]\n");
    for b in model.beta.iter() {
        out.push_str(&fmt_f64(*b));
        out.push('\n');
    }
    out
}

fn split_sections(text: &str) -> Result<[String; 4]> {
    let mut parts: [Option<String>; 4] = Default::default();
    let mut current: Option<usize> = None;
    for (n, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if let Some(k) = SECTIONS.iter().position(|s| *s == trimmed) {
            if parts[k].is_some() {
                return Err(Error::Parse(format!("line {}: duplicate section {trimmed}", n + 1)));
            }
            parts[k] = Some(String::new());
            current = Some(k);
            continue;
        }
        match current {
            Some(k) => {
                let p = parts[k].as_mut().expect("section opened");
                p.push_str(line);
                p.push('\n');
            }
            None if trimmed.is_empty() || trimmed.starts_with('#') => {}
            None => {
                return Err(Error::Parse(format!("line {}: content before the [spec] section", n + 1)))
            }
        }
    }
    let mut out: [String; 4] = Default::default();
    for (k, p) in parts.into_iter().enumerate() {
        out[k] = p.ok_or_else(|| Error::Parse(format!("model file has no {} section", SECTIONS[k])))?;
    }
    Ok(out)
}

/// Parses a model file and re-verifies it against its own training data.
pub fn load_model(text: &str) -> Result<TrainedModel> {
    let [spec_text, model_text, train_text, beta_text] = split_sections(text)?;
    let spec = KernelSpec::from_config_str(&spec_text)?;
    let kv = KeyValues::parse(&model_text)?;
    let noise_var: f64 = kv.require("noise_var")?;
    let jitter_used: f64 = kv.require("jitter_used")?;
    kv.finish()?;
    if !(noise_var >= 0.0 && noise_var.is_finite() && jitter_used >= 0.0 && jitter_used.is_finite()) {
        return Err(Error::Parse("noise_var and jitter_used must be finite and ≥ 0".into()));
    }
    let data = Dataset::from_csv_str(&train_text)?;
    if data.d_in() != spec.d_in {
        return Err(Error::Parse(format!(
            "training data has {} input columns but d_in = {}",
            data.d_in(),
            spec.d_in
        )));
    }
    let beta: Vec<f64> = beta_text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.parse::<f64>().map_err(|_| Error::Parse(format!("bad beta entry '{l}'"))))
        .collect::<Result<_>>()?;
    if beta.len() != data.len() {
        return Err(Error::Integrity(format!(
            "{} beta entries for {} training points",
            beta.len(),
            data.len()
        )));
    }
    let beta = DVector::from_vec(beta);

    let (h_train, k) = gram(&spec, &data.x)?;
    let chol = factor_exact(&k, noise_var + jitter_used)?;
    let resid = &data.y - &h_train;
    let lml = lml_from_parts(&chol, &resid, &chol.solve(&resid));
    let model = TrainedModel { spec, data, noise_var, jitter_used, gram: k, h_train, chol, beta, lml };
    let err = beta_residual(&model);
    if err.is_nan() || err > BETA_TOLERANCE {
        return Err(Error::Integrity(format!(
            "stored beta does not solve the regression system (backward error {err:.3e} > {BETA_TOLERANCE:e})"
        )));
    }
    Ok(model)
}
