//! Width sweeps: empirical output covariance against the kernel.

use std::fmt::Write;

use nalgebra::DMatrix;

use super::{ensemble_stats, EnsembleStats};
use crate::config::fmt_f64;
use crate::error::{Error, Result};
use crate::kernel::{gram, KernelSpec};
use crate::rng;

/// One width of a sweep (all hidden layers share the width).
#[derive(Debug, Clone)]
pub struct WidthRow {
    pub width: usize,
    pub stats: EnsembleStats,
    /// Largest `|emp_cov − k|` over probe pairs `i ≤ j`.
    pub max_abs_dev: f64,
    /// Largest `|emp_cov − k| / stderr` over the same pairs.
    pub max_abs_z: f64,
}

#[derive(Debug, Clone)]
pub struct WidthReport {
    pub kernel: DMatrix<f64>,
    pub rows: Vec<WidthRow>,
}

/// Acceptance bands applied to a [`WidthReport`].
#[derive(Debug, Clone, Copy)]
pub struct Bands {
    /// Allowed `max |z|` at the largest width.
    pub z_max: f64,
    /// The extreme-width ordering is only checked when the smallest width
    /// deviates by more than this many standard errors.
    pub detect_z: f64,
    /// `|skewness| ≤ skew_sigmas · √(6/n)` at the largest width.
    pub skew_sigmas: f64,
    /// `|cross-output corr| ≤ corr_sigmas / √n` at the largest width.
    pub corr_sigmas: f64,
    /// `max |kurtosis|` at the largest width may exceed the smallest by this.
    pub kurtosis_slack: f64,
}

impl Default for Bands {
    fn default() -> Self {
        Bands { z_max: 5.0, detect_z: 5.0, skew_sigmas: 5.0, corr_sigmas: 4.0, kurtosis_slack: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub pass: bool,
    /// One line per check, prefixed `ok`, `FAIL` or `skip`.
    pub lines: Vec<String>,
}

fn z_score(dev: f64, se: f64) -> f64 {
    if se > 0.0 {
        dev / se
    } else if dev == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(dev)
    }
}

fn max_abs(v: impl Iterator<Item = f64>) -> f64 {
    v.map(f64::abs).fold(0.0, f64::max)
}

/// Runs one ensemble per width with `d_out = 2`. Width `w` uses master seed
/// `derive_seed(seed, NETWORK, w)`, so a width's results do not depend on
/// which other widths are in the list.
pub fn width_convergence_report(
    spec: &KernelSpec,
    widths: &[usize],
    probes: &DMatrix<f64>,
    n_ensembles: usize,
    seed: u64,
) -> Result<WidthReport> {
    if widths.is_empty() {
        return Err(Error::InvalidSpec("width list is empty".into()));
    }
    if widths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSpec("widths must be strictly increasing".into()));
    }
    let (_, kernel) = gram(spec, probes)?;
    let p = probes.nrows();
    let mut rows = Vec::with_capacity(widths.len());
    for &w in widths {
        let s = rng::derive_seed(seed, rng::purpose::NETWORK, w as u64);
        let stats = ensemble_stats(spec, &vec![w; spec.depth], 2, probes, n_ensembles, s)?;
        let mut max_abs_dev: f64 = 0.0;
        let mut max_abs_z: f64 = 0.0;
        for i in 0..p {
            for j in i..p {
                let dev = stats.emp_cov[(i, j)] - kernel[(i, j)];
                max_abs_dev = max_abs_dev.max(dev.abs());
                max_abs_z = max_abs_z.max(z_score(dev, stats.cov_stderr[(i, j)]).abs());
            }
        }
        rows.push(WidthRow { width: w, stats, max_abs_dev, max_abs_z });
    }
    Ok(WidthReport { kernel, rows })
}

impl WidthReport {
    /// `width,i,j,emp_cov,kernel,stderr,zscore`, one row per width and probe
    /// pair `i ≤ j`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("width,i,j,emp_cov,kernel,stderr,zscore\n");
        let p = self.kernel.nrows();
        for row in &self.rows {
            for i in 0..p {
                for j in i..p {
                    let emp = row.stats.emp_cov[(i, j)];
                    let k = self.kernel[(i, j)];
                    let se = row.stats.cov_stderr[(i, j)];
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        row.width,
                        i,
                        j,
                        fmt_f64(emp),
                        fmt_f64(k),
                        fmt_f64(se),
                        fmt_f64(z_score(emp - k, se))
                    );
                }
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>8}  {:>12}  {:>8}  {:>10}  {:>10}  {:>10}",
            "width", "max|dev|", "max|z|", "max|skew|", "max|kurt|", "corr"
        );
        for row in &self.rows {
            let corr = row.stats.cross_output_corr.map_or("-".to_string(), |c| format!("{c:.4}"));
            let _ = writeln!(
                out,
                "{:>8}  {:>12.4e}  {:>8.3}  {:>10.4}  {:>10.4}  {:>10}",
                row.width,
                row.max_abs_dev,
                row.max_abs_z,
                max_abs(row.stats.skewness.iter().copied()),
                max_abs(row.stats.excess_kurtosis.iter().copied()),
                corr
            );
        }
        out
    }

    /// Whether the largest width deviates no more than the smallest; `None`
    /// for a single width.
    pub fn extreme_ordering(&self) -> Option<bool> {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) if self.rows.len() > 1 => Some(b.max_abs_dev <= a.max_abs_dev),
            _ => None,
        }
    }

    pub fn verdict(&self, bands: &Bands) -> Verdict {
        let mut lines = Vec::new();
        let mut pass = true;
        let mut check = |ok: bool, msg: String| {
            pass &= ok;
            lines.push(format!("{} {msg}", if ok { "ok  " } else { "FAIL" }));
        };
        let first = &self.rows[0];
        let last = self.rows.last().expect("non-empty report");
        let n = last.stats.n_ensembles as f64;

        check(
            last.max_abs_z <= bands.z_max,
            format!("width {}: max |z| = {:.3} (limit {})", last.width, last.max_abs_z, bands.z_max),
        );
        let skew = max_abs(last.stats.skewness.iter().copied());
        let skew_lim = bands.skew_sigmas * (6.0 / n).sqrt();
        check(skew <= skew_lim, format!("width {}: max |skewness| = {skew:.4} (limit {skew_lim:.4})", last.width));
        if let Some(c) = last.stats.cross_output_corr {
            let lim = bands.corr_sigmas / n.sqrt();
            check(c.abs() <= lim, format!("width {}: cross-output corr = {c:.4} (limit ±{lim:.4})", last.width));
        }
        if self.rows.len() > 1 {
            let k_first = max_abs(first.stats.excess_kurtosis.iter().copied());
            let k_last = max_abs(last.stats.excess_kurtosis.iter().copied());
            check(
                k_last <= k_first + bands.kurtosis_slack,
                format!(
                    "max |excess kurtosis|: {k_last:.4} at width {} vs {k_first:.4} at width {} (+{})",
                    last.width, first.width, bands.kurtosis_slack
                ),
            );
            if first.max_abs_z > bands.detect_z {
                check(
                    last.max_abs_dev <= first.max_abs_dev,
                    format!(
                        "max |dev|: {:.4e} at width {} vs {:.4e} at width {}",
                        last.max_abs_dev, last.width, first.max_abs_dev, first.width
                    ),
                );
            } else {
                lines.push(format!(
                    "skip ordering: width {} is already within {} stderr of the kernel",
                    first.width, bands.detect_z
                ));
            }
        } else {
            lines.push("skip ordering: only one width".into());
        }
        Verdict { pass, lines }
    }
}
