//! First-layer parameter measures π and sampling from them.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::{Exp1, Normal};

use crate::error::{Error, Result};

/// One neuron's first-layer parameters `(w, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub w: Vec<f64>,
    pub b: f64,
}

/// Law of the first-layer row `(w, b)`.
#[derive(Debug, Clone, PartialEq)]
pub enum FirstLayerMeasure {
    /// Entries of `w` i.i.d. `N(mu_w, var_w)`, `b ~ N(mu_b, var_b)`; no
    /// input-dimension scaling is applied.
    GaussianIid { var_w: f64, var_b: f64, mu_w: f64, mu_b: f64 },
    /// Cone measure on the unit ℓ1-sphere of `(w, b)`.
    L1SphereUniform,
    /// Finitely many atoms with probabilities summing to one.
    Empirical { atoms: Vec<Atom>, weights: Vec<f64> },
}

impl FirstLayerMeasure {
    pub fn validate(&self, d_in: usize) -> Result<()> {
        match self {
            FirstLayerMeasure::GaussianIid { var_w, var_b, mu_w, mu_b } => {
                if [var_w, var_b, mu_w, mu_b].iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSpec("non-finite first-layer hyperparameter".into()));
                }
                if *var_w < 0.0 || *var_b < 0.0 {
                    return Err(Error::InvalidSpec("negative first-layer variance".into()));
                }
                Ok(())
            }
            FirstLayerMeasure::L1SphereUniform => Ok(()),
            FirstLayerMeasure::Empirical { atoms, weights } => {
                if atoms.is_empty() {
                    return Err(Error::InvalidSpec("empirical measure needs at least one atom".into()));
                }
                if atoms.len() != weights.len() {
                    return Err(Error::InvalidSpec(format!(
                        "{} atoms but {} weights",
                        atoms.len(),
                        weights.len()
                    )));
                }
                for (k, a) in atoms.iter().enumerate() {
                    if a.w.len() != d_in {
                        return Err(Error::InvalidSpec(format!(
                            "atom {k} has {} weights, expected {d_in}",
                            a.w.len()
                        )));
                    }
                    if !a.b.is_finite() || a.w.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidSpec(format!("atom {k} is not finite")));
                    }
                }
                if weights.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::InvalidSpec("atom weights must be nonnegative".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidSpec(format!("atom weights sum to {total}, not 1")));
                }
                Ok(())
            }
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, FirstLayerMeasure::GaussianIid { .. })
    }

    /// Draws one row `(w, b)`.
    pub fn sample<R: Rng + ?Sized>(&self, d_in: usize, rng: &mut R) -> Atom {
        match self {
            FirstLayerMeasure::GaussianIid { var_w, var_b, mu_w, mu_b } => {
                let nw = Normal::new(*mu_w, var_w.sqrt()).expect("validated variance");
                let nb = Normal::new(*mu_b, var_b.sqrt()).expect("validated variance");
                let w = (0..d_in).map(|_| nw.sample(rng)).collect();
                Atom { w, b: nb.sample(rng) }
            }
            FirstLayerMeasure::L1SphereUniform => sample_l1_sphere_with(d_in, rng),
            FirstLayerMeasure::Empirical { atoms, weights } => {
                if atoms.len() == 1 {
                    return atoms[0].clone();
                }
                let idx = WeightedIndex::new(weights).expect("validated weights");
                atoms[idx.sample(rng)].clone()
            }
        }
    }
}

/// Uniform (cone-measure) draw from `{(w, b) : ‖(w, b)‖₁ = 1}` in dimension
/// `d_in + 1`: magnitudes from a flat Dirichlet via normalised Exp(1)
/// variables, each coordinate then given an independent random sign.
pub fn sample_l1_sphere_with<R: Rng + ?Sized>(d_in: usize, rng: &mut R) -> Atom {
    let n = d_in + 1;
    let mut g: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = g.iter().sum();
    for v in &mut g {
        *v /= total;
        if rng.gen::<bool>() {
            *v = -*v;
        }
    }
    let b = g.pop().expect("n >= 1");
    Atom { w: g, b }
}

/// `‖(w, b)‖₁`.
pub fn l1_norm(atom: &Atom) -> f64 {
    atom.w.iter().map(|v| v.abs()).sum::<f64>() + atom.b.abs()
}
