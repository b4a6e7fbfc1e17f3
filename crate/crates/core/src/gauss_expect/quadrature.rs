//! Composite Gauss–Legendre integration against the standard normal density.
//!
//! A plain Gauss–Hermite rule converges slowly once φ(m + s·z) saturates or
//! has a kink inside the window, so integrals over z are instead split into
//! panels on a truncated window `[-T, T]`: fixed panels whose width shrinks
//! with the scale `s`, plus extra cuts at every kink of the integrand. Each
//! panel gets an `n`-point Gauss–Legendre rule.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights of a 1-D rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss–Legendre rule on [-1, 1].
pub fn legendre(n: usize) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    cached(&CACHE, n, legendre_uncached)
}

fn cached(
    cache: &OnceLock<Mutex<HashMap<usize, Arc<Rule>>>>,
    n: usize,
    build: fn(usize) -> Rule,
) -> Arc<Rule> {
    let map = cache.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = map.lock().unwrap().get(&n) {
        return rule.clone();
    }
    let rule = Arc::new(build(n));
    map.lock().unwrap().entry(n).or_insert(rule).clone()
}

fn legendre_uncached(n: usize) -> Rule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    if n % 2 == 1 {
        nodes[m - 1] = 0.0;
    }
    Rule { nodes, weights }
}

/// Truncation radius of the standard normal window; the omitted tail mass
/// is about 1.5e-23.
pub const NORMAL_TRUNCATION: f64 = 10.0;

/// Panel width in z for unit scale.
const BASE_PANEL: f64 = 5.0;
const MAX_PANELS: usize = 64;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Panel edges on `[-T, T]` for an integrand `φ(m + scale·z)`, cut at `breaks`.
pub fn panel_edges(scale: f64, breaks: &[f64]) -> Vec<f64> {
    let t = NORMAL_TRUNCATION;
    let panels = ((2.0 * t / BASE_PANEL) * (scale / 2.0).max(1.0))
        .ceil()
        .min(MAX_PANELS as f64) as usize;
    let width = 2.0 * t / panels as f64;
    let mut edges: Vec<f64> = (0..=panels).map(|i| -t + i as f64 * width).collect();
    edges[panels] = t;
    edges.extend(breaks.iter().copied().filter(|b| b.is_finite() && *b > -t && *b < t));
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    edges
}

/// `∫ f(z) φ(z) dz` over `[-T, T]` with an `n`-point Gauss–Legendre rule on
/// each panel of [`panel_edges`].
pub fn normal_panels<F: FnMut(f64) -> f64>(n: usize, scale: f64, breaks: &[f64], mut f: F) -> f64 {
    let rule = legendre(n);
    let edges = panel_edges(scale, breaks);
    let mut total = 0.0;
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut panel = 0.0;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let z = mid + half * x;
            panel += w * f(z) * (-0.5 * z * z).exp();
        }
        total += panel * half;
    }
    total * INV_SQRT_2PI
}
