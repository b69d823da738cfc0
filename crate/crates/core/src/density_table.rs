//! Cached piecewise Chebyshev interpolants of `(f, f + x f')` for the
//! standard symmetric stable law, one table per index.
//!
//! Panels are refined until the interpolant reproduces the direct
//! evaluation to about 1e−13 relative at off-node check points, so a table
//! lookup replaces a Zolotarev quadrature in the hot loops of the centering
//! integrals.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::stable_core::std_density_check;

/// Tables cover `[0, X_MAX]` in standard units; beyond that the direct path
/// (usually the tail series) is cheap.
const X_MAX: f64 = 64.0;
const NODES: usize = 24;
const REL_TOL: f64 = 1e-13;
/// Absolute floor, relative to `f(0)`, below which the direct evaluation
/// itself is not reliable.
const ABS_TOL: f64 = 1e-15;
const MIN_WIDTH: f64 = 1.0 / 64.0;

struct Panel {
    lo: f64,
    hi: f64,
    f: [f64; NODES],
    c: [f64; NODES],
}

struct Table {
    starts: Vec<f64>,
    panels: Vec<Panel>,
}

fn cheb_nodes() -> &'static ([f64; NODES], [f64; NODES]) {
    static NODES_AND_WEIGHTS: OnceLock<([f64; NODES], [f64; NODES])> = OnceLock::new();
    NODES_AND_WEIGHTS.get_or_init(|| {
        let mut t = [0.0; NODES];
        let mut w = [0.0; NODES];
        for j in 0..NODES {
            let th = (2 * j + 1) as f64 * PI / (2 * NODES) as f64;
            t[j] = th.cos();
            w[j] = if j % 2 == 0 { th.sin() } else { -th.sin() };
        }
        (t, w)
    })
}

impl Panel {
    fn build(alpha: f64, lo: f64, hi: f64) -> Self {
        let (t, _) = cheb_nodes();
        let mut f = [0.0; NODES];
        let mut c = [0.0; NODES];
        for j in 0..NODES {
            let x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t[j];
            (f[j], c[j]) = std_density_check(alpha, x);
        }
        Self { lo, hi, f, c }
    }

    /// Barycentric interpolation at the first-kind Chebyshev points.
    fn eval(&self, x: f64) -> (f64, f64) {
        let (t, w) = cheb_nodes();
        let s = (2.0 * x - self.lo - self.hi) / (self.hi - self.lo);
        let (mut num_f, mut num_c, mut den) = (0.0, 0.0, 0.0);
        for j in 0..NODES {
            let d = s - t[j];
            if d == 0.0 {
                return (self.f[j], self.c[j]);
            }
            let q = w[j] / d;
            num_f += q * self.f[j];
            num_c += q * self.c[j];
            den += q;
        }
        (num_f / den, num_c / den)
    }

    fn accurate(&self, alpha: f64, floor: f64) -> bool {
        // midpoints between nodes are the worst case for the interpolant
        [0.11, 0.37, 0.5, 0.63, 0.89, 0.013, 0.987].iter().all(|&frac| {
            let x = self.lo + frac * (self.hi - self.lo);
            let (f, c) = std_density_check(alpha, x);
            let (fi, ci) = self.eval(x);
            let tol = REL_TOL * f.abs() + floor;
            (fi - f).abs() <= tol && (ci - c).abs() <= tol * 4.0
        })
    }
}

impl Table {
    fn build(alpha: f64) -> Self {
        let edges = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, X_MAX];
        let mut pending: Vec<(f64, f64)> = edges.windows(2).rev().map(|e| (e[0], e[1])).collect();
        let floor = ABS_TOL * std_density_check(alpha, 0.0).0;
        let mut panels = Vec::new();
        while let Some((lo, hi)) = pending.pop() {
            let panel = Panel::build(alpha, lo, hi);
            if hi - lo <= MIN_WIDTH || panel.accurate(alpha, floor) {
                panels.push(panel);
            } else {
                let mid = 0.5 * (lo + hi);
                pending.push((mid, hi));
                pending.push((lo, mid));
            }
        }
        let starts = panels.iter().map(|p| p.lo).collect();
        Self { starts, panels }
    }

    fn eval(&self, x: f64) -> (f64, f64) {
        let i = self.starts.partition_point(|&s| s <= x).saturating_sub(1);
        self.panels[i].eval(x)
    }
}

type Registry = Mutex<HashMap<u64, Arc<OnceLock<Table>>>>;

fn table_for(alpha: f64) -> Arc<OnceLock<Table>> {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    let registry = REGISTRY.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = registry.lock().unwrap_or_else(|e| e.into_inner());
    map.entry(alpha.to_bits()).or_default().clone()
}

/// Same contract as [`std_density_check`], served from the cached table
/// inside `[0, X_MAX]`.
pub(crate) fn density_check(alpha: f64, x: f64) -> (f64, f64) {
    if alpha == 1.0 || alpha == 2.0 || !(x <= X_MAX) {
        return std_density_check(alpha, x);
    }
    let cell = table_for(alpha);
    cell.get_or_init(|| Table::build(alpha)).eval(x)
}
