//! Grid search over the single-hop share β and, under imperfect CSI, the
//! rate back-off θ.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::channel::CsiMode;
use crate::montecarlo::{run, EstimateWithCI, RunSpec, RunStats};
use crate::{Error, Result};

/// Uniform grid `{0, step, 2 step, …}` on `[lo, hi]`, always containing `hi`.
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0 && hi >= lo);
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
    if let Some(last) = grid.last_mut() {
        if (hi - *last).abs() < step * 1e-6 {
            *last = hi;
        } else {
            grid.push(hi);
        }
    }
    grid
}

/// `{0, 0.05, …, 1}`.
pub fn default_beta_grid() -> Vec<f64> {
    uniform_grid(0.0, 1.0, 0.05)
}

/// `{0.05, 0.10, …, 1}`.
pub fn default_theta_grid() -> Vec<f64> {
    uniform_grid(0.05, 1.0, 0.05)
}

/// Search specification. `base.params` supplies every protocol field not
/// on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OptSpec {
    pub base: RunSpec,
    pub beta_grid: Vec<f64>,
    pub theta_grid: Vec<f64>,
    pub pilots: u32,
    pub cycles_per_point: u64,
}

impl OptSpec {
    /// β search under perfect CSI.
    pub fn perfect(base: RunSpec, beta_grid: Vec<f64>, cycles_per_point: u64) -> Self {
        OptSpec { base, beta_grid, theta_grid: vec![1.0], pilots: 0, cycles_per_point }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta_grid.is_empty() || self.theta_grid.is_empty() {
            return Err(Error::config("optimizer grids must be nonempty"));
        }
        if let Some(b) = self.beta_grid.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(Error::config(format!("beta grid value {b} outside [0, 1]")));
        }
        if let Some(t) = self.theta_grid.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(Error::config(format!("theta grid value {t} outside (0, 1]")));
        }
        if self.cycles_per_point == 0 {
            return Err(Error::config("cycles per point must be positive"));
        }
        if self.base.params.csi == CsiMode::Perfect && (self.theta_grid != [1.0] || self.pilots != 0) {
            return Err(Error::config("perfect CSI requires theta grid {1} and zero pilots"));
        }
        Ok(())
    }

    fn point_spec(&self, beta: f64, theta: f64) -> RunSpec {
        let mut spec = self.base.clone();
        spec.params.beta = beta;
        spec.params.theta = theta;
        spec.params.pilots = self.pilots;
        spec.n_cycles = self.cycles_per_point;
        spec
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone)]
pub struct SurfacePoint {
    pub beta: f64,
    pub theta: f64,
    pub stats: Result<RunStats>,
}

impl SurfacePoint {
    pub fn outage(&self) -> Option<EstimateWithCI> {
        self.stats.as_ref().ok().map(|s| s.outage)
    }
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub beta_hat: f64,
    pub theta_hat: f64,
    pub outage_at_opt: EstimateWithCI,
    pub stats_at_opt: RunStats,
    /// Row-major over `beta_grid × theta_grid`.
    pub surface: Vec<SurfacePoint>,
}

impl OptResult {
    /// Looks up the surface point evaluated at `(beta, theta)`.
    pub fn point(&self, beta: f64, theta: f64) -> Option<&SurfacePoint> {
        self.surface.iter().find(|p| p.beta == beta && p.theta == theta)
    }

    /// `beta,theta,outage,se` rows; failed points leave the last two fields empty.
    pub fn surface_csv(&self) -> String {
        let mut out = String::from("beta,theta,outage,se\n");
        for p in &self.surface {
            match p.outage() {
                Some(o) => writeln!(out, "{},{},{},{}", p.beta, p.theta, o.estimate, o.std_error),
                None => writeln!(out, "{},{},,", p.beta, p.theta),
            }
            .expect("writing to a String");
        }
        out
    }
}

/// `true` if `(b, t, o)` should replace the incumbent `(bb, tb, ob)`.
fn better(o: f64, b: f64, t: f64, ob: f64, bb: f64, tb: f64) -> bool {
    o < ob || (o == ob && (b > bb || (b == bb && t > tb)))
}

/// Evaluates every grid point with the same master seed and returns the
/// minimizer. Ties go to the larger β, then the larger θ.
pub fn optimize(spec: &OptSpec) -> Result<OptResult> {
    spec.validate()?;
    let grid: Vec<(f64, f64)> =
        spec.beta_grid.iter().flat_map(|&b| spec.theta_grid.iter().map(move |&t| (b, t))).collect();
    let surface: Vec<SurfacePoint> = grid
        .par_iter()
        .map(|&(beta, theta)| SurfacePoint { beta, theta, stats: run(&spec.point_spec(beta, theta)) })
        .collect();

    let mut best: Option<&SurfacePoint> = None;
    for p in &surface {
        let Some(o) = p.outage() else { continue };
        let replace = match best {
            None => true,
            Some(b) => better(o.estimate, p.beta, p.theta, b.outage().expect("ok").estimate, b.beta, b.theta),
        };
        if replace {
            best = Some(p);
        }
    }
    let Some(best) = best else {
        let first = surface.iter().find_map(|p| p.stats.as_ref().err()).cloned();
        return Err(Error::config(format!(
            "every grid point failed: {}",
            first.map(|e| e.to_string()).unwrap_or_default()
        )));
    };
    let stats = best.stats.clone().expect("best point succeeded");
    Ok(OptResult {
        beta_hat: best.beta,
        theta_hat: best.theta,
        outage_at_opt: stats.outage,
        stats_at_opt: stats,
        surface: surface.clone(),
    })
}
