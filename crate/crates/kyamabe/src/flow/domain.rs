//! Spatial discretizations the flow can run on.

use crate::conformal::{Gauge, NodeScratch, Operators};
use crate::error::{Error, Result};
use crate::geometry::{MetricField, SchoutenBackground};
use crate::radial::{radial_sigma, RadialGrid, RadialKind};

/// A discretization of a background manifold acting on gauge-w vectors.
pub trait FlowDomain {
    fn n(&self) -> usize;
    fn len(&self) -> usize;
    /// Whether node `i` evolves; other nodes hold frozen boundary data.
    fn active(&self, i: usize) -> bool;
    /// Volume weights of g0, zero on frozen nodes.
    fn weights(&self) -> &[f64];
    /// σ_0..σ_kmax of λ(W) at every active node, `kmax + 1` values per node
    /// (NaN at frozen nodes).
    fn sigmas(&self, w: &[f64], kmax: usize) -> Result<Vec<f64>>;
    /// Largest gradient and Hessian entries of `w` over active nodes.
    fn derivative_sup(&self, w: &[f64]) -> (f64, f64);
    /// Shape header for checkpoints: (extents, spacing, topology).
    fn shape(&self) -> (Vec<usize>, Vec<f64>, String);
}

/// Radial sphere (polar angle) or radial flat ball.
///
/// On flat space the state vector carries one extra trailing entry, the frozen
/// outer ghost value, so that scaling the vector scales the boundary data.
#[derive(Debug, Clone)]
pub struct RadialDomain {
    pub grid: RadialGrid,
    weights: Vec<f64>,
}

impl RadialDomain {
    pub fn new(grid: RadialGrid) -> Self {
        let mut weights = grid.weights();
        if matches!(grid.kind, RadialKind::Flat { .. }) {
            weights.push(0.0);
        }
        Self { grid, weights }
    }

    fn outer(&self, w: &[f64]) -> f64 {
        match self.grid.kind {
            RadialKind::Flat { .. } => w[self.grid.nodes],
            RadialKind::Sphere => 0.0,
        }
    }
}

impl FlowDomain for RadialDomain {
    fn n(&self) -> usize {
        self.grid.n
    }

    fn len(&self) -> usize {
        self.weights.len()
    }

    fn active(&self, i: usize) -> bool {
        i < self.grid.nodes
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn sigmas(&self, w: &[f64], kmax: usize) -> Result<Vec<f64>> {
        let n = self.grid.n;
        let outer = self.outer(w);
        let mut out = vec![f64::NAN; self.len() * (kmax + 1)];
        for i in 0..self.grid.nodes {
            let (lr, lt) = self.grid.spectrum_w(w, outer, i);
            for j in 0..=kmax {
                out[i * (kmax + 1) + j] = if j > n { 0.0 } else { radial_sigma(n, j, lr, lt) };
            }
        }
        Ok(out)
    }

    fn derivative_sup(&self, w: &[f64]) -> (f64, f64) {
        let outer = self.outer(w);
        let mut g: f64 = 0.0;
        let mut h: f64 = 0.0;
        for i in 0..self.grid.nodes {
            let (d1, d2) = self.grid.derivs(w, outer, i);
            g = g.max(d1.abs());
            h = h.max(d2.abs());
        }
        (g, h)
    }

    fn shape(&self) -> (Vec<usize>, Vec<f64>, String) {
        let topo = match self.grid.kind {
            RadialKind::Flat { .. } => "radial-flat",
            RadialKind::Sphere => "radial-sphere",
        };
        (vec![self.len()], vec![self.grid.h], topo.to_string())
    }
}

/// A rectangular chart; nodes in the operator margin are frozen.
#[derive(Debug, Clone)]
pub struct GridDomain {
    pub metric: MetricField,
    pub bg: SchoutenBackground,
    weights: Vec<f64>,
}

impl GridDomain {
    pub fn new(metric: MetricField, bg: SchoutenBackground) -> Result<Self> {
        let q = crate::functionals::QuadratureContext::new(&metric, &bg)?;
        Ok(Self { metric, bg, weights: q.weights })
    }

    fn ops(&self) -> Operators<'_> {
        Operators { metric: &self.metric, bg: &self.bg }
    }
}

impl FlowDomain for GridDomain {
    fn n(&self) -> usize {
        self.metric.grid.n
    }

    fn len(&self) -> usize {
        self.metric.grid.len()
    }

    fn active(&self, i: usize) -> bool {
        self.ops().evaluable(i)
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn sigmas(&self, w: &[f64], kmax: usize) -> Result<Vec<f64>> {
        if w.len() != self.len() {
            return Err(Error::Format("state length does not match the grid".into()));
        }
        let ops = self.ops();
        let n = self.n();
        let mut s = NodeScratch::new(n);
        let mut out = vec![f64::NAN; self.len() * (kmax + 1)];
        for idx in 0..self.len() {
            if !ops.evaluable(idx) {
                continue;
            }
            let scale = ops.node_matrix(Gauge::W, w, idx, &mut s)?;
            let sig = ops.sigmas_of(&s.mat, scale, &s.ginv, kmax);
            out[idx * (kmax + 1)..(idx + 1) * (kmax + 1)].copy_from_slice(&sig);
        }
        Ok(out)
    }

    fn derivative_sup(&self, w: &[f64]) -> (f64, f64) {
        let ops = self.ops();
        let n = self.n();
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n * n];
        let (mut g, mut h): (f64, f64) = (0.0, 0.0);
        for idx in 0..self.len() {
            if ops.derivatives(w, idx, &mut grad, &mut hess).is_ok() {
                g = grad.iter().fold(g, |m, x| m.max(x.abs()));
                h = hess.iter().fold(h, |m, x| m.max(x.abs()));
            }
        }
        (g, h)
    }

    fn shape(&self) -> (Vec<usize>, Vec<f64>, String) {
        let g = &self.metric.grid;
        let topo = match g.topology {
            crate::geometry::Topology::Periodic => "periodic",
            crate::geometry::Topology::Bounded => "bounded",
        };
        (g.extents.clone(), g.spacing.clone(), topo.to_string())
    }
}
