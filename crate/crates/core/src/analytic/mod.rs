//! Closed-form stationary analysis of one TCPair.
//!
//! The chain state probabilities are recovered block by block: for every stage
//! pair `(m, n)` the vectors `r_{m,n}(j) = P(m,n,0,j)`, `d_{m,n}(i) = P(m,n,i,0)`
//! and the corner `eps_{m,n} = P(m,n,0,0)` are obtained from the blocks that
//! feed it, in increasing stage order. Blocks on the last stage feed
//! themselves and are solved as small structured linear systems.

mod blocks;
mod fixed_point;
mod throughput;

use std::ops::{Index, IndexMut};

pub use blocks::{
    min_plus_one_sum, solve_sigma, solve_suffix, Injection, Kernel, TransitionMatrices,
};
pub use fixed_point::{
    bisect_collision_prob, collision_residual, newton_collision_prob, solve_collision_prob,
};
pub use throughput::{
    baseline_attempt_prob, baseline_csma_throughput, baseline_fixed_point, operating_point,
    throughput, throughput_from_times, throughput_unsimplified, BaselinePoint, OperatingPoint,
    Throughput,
};

use crate::chain_oracle::ChainState;
use crate::params::ProtocolParams;
use crate::{Error, Result};

/// Square table indexed by a stage pair `(m, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTable<T> {
    stages: usize,
    cells: Vec<T>,
}

impl<T: Clone> StageTable<T> {
    fn filled(stages: usize, value: T) -> Self {
        Self {
            stages,
            cells: vec![value; stages * stages],
        }
    }
}

impl<T> StageTable<T> {
    pub fn stages(&self) -> usize {
        self.stages
    }

    /// Cells in row-major `(m, n)` order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &T)> {
        let k = self.stages;
        self.cells
            .iter()
            .enumerate()
            .map(move |(x, v)| ((x / k, x % k), v))
    }
}

impl<T> Index<(usize, usize)> for StageTable<T> {
    type Output = T;
    fn index(&self, (m, n): (usize, usize)) -> &T {
        &self.cells[m * self.stages + n]
    }
}

impl<T> IndexMut<(usize, usize)> for StageTable<T> {
    fn index_mut(&mut self, (m, n): (usize, usize)) -> &mut T {
        &mut self.cells[m * self.stages + n]
    }
}

/// Stationary quantities of the pair chain at a given collision probability.
#[derive(Debug, Clone)]
pub struct StateSummary {
    pub params: ProtocolParams,
    pub p: f64,
    /// `P(m, n, 0, 0)`.
    pub eps: StageTable<f64>,
    /// `r[(m, n)][j - 1] = P(m, n, 0, j)`.
    pub r: StageTable<Vec<f64>>,
    /// `d[(m, n)][i - 1] = P(m, n, i, 0)`.
    pub d: StageTable<Vec<f64>>,
    /// Mass of each stage block.
    pub pmn: StageTable<f64>,
    pub eta: f64,
    pass: Pass,
}

impl StateSummary {
    /// All states of block `(m, n)`, row-major in `(i, j)`.
    pub fn block_states(&self, m: usize, n: usize) -> Vec<f64> {
        let (wm, wn) = (self.params.window(m), self.params.window(n));
        Kernel::new(wm, wn, &self.pass.inj[(m, n)]).states()
    }

    pub fn state_prob(&self, s: ChainState) -> f64 {
        let (wm, wn) = (self.params.window(s.m), self.params.window(s.n));
        Kernel::new(wm, wn, &self.pass.inj[(s.m, s.n)]).state(s.i, s.j)
    }

    /// Mass injected per slot into block `(m, n)`.
    pub fn injection(&self, m: usize, n: usize) -> &Injection {
        &self.pass.inj[(m, n)]
    }

    pub fn total(&self) -> f64 {
        self.pmn.cells.iter().sum()
    }
}

/// Derivatives of [`StateSummary`] in the collision probability.
#[derive(Debug, Clone)]
pub struct DerivativeSummary {
    pub deps: StageTable<f64>,
    pub dr: StageTable<Vec<f64>>,
    pub dd: StageTable<Vec<f64>>,
    pub dpmn: StageTable<f64>,
    pub deta: f64,
}

impl DerivativeSummary {
    pub fn total(&self) -> f64 {
        self.dpmn.cells.iter().sum()
    }
}

#[derive(Debug, Clone)]
struct Pass {
    eps: StageTable<f64>,
    r: StageTable<Vec<f64>>,
    d: StageTable<Vec<f64>>,
    pmn: StageTable<f64>,
    inj: StageTable<Injection>,
    /// Unscaled collision inflow sums, needed by the derivative pass.
    r_in: StageTable<Vec<f64>>,
    d_in: StageTable<Vec<f64>>,
}

impl Pass {
    fn total(&self) -> f64 {
        self.pmn.cells.iter().sum()
    }

    fn eta(&self) -> f64 {
        self.r
            .cells
            .iter()
            .chain(&self.d.cells)
            .map(|v| v.iter().sum::<f64>())
            .sum()
    }
}

/// Stages whose collisions move a counter into `stage`.
fn feeders(stage: usize, stages: usize) -> Vec<usize> {
    match stage {
        0 => vec![],
        s if s + 1 < stages => vec![s - 1],
        s => vec![s - 1, s],
    }
}

fn add_into(acc: &mut [f64], v: &[f64], scale: f64) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += scale * x;
    }
}

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|x| s * x).collect()
}

/// One sweep over all blocks.
///
/// `seed` is the corner `eps_{0,0}`. With `basis` set this computes the
/// derivative system instead: inflows gain the extra term
/// `basis.r_in / W_m` from differentiating `p / W_m`.
fn propagate(params: &ProtocolParams, p: f64, seed: f64, basis: Option<&Pass>) -> Result<Pass> {
    let k = params.m_stages();
    let w = params.windows();
    let last = k - 1;
    let mut pass = Pass {
        eps: StageTable::filled(k, 0.0),
        r: StageTable::filled(k, Vec::new()),
        d: StageTable::filled(k, Vec::new()),
        pmn: StageTable::filled(k, 0.0),
        inj: StageTable::filled(k, Injection::default()),
        r_in: StageTable::filled(k, Vec::new()),
        d_in: StageTable::filled(k, Vec::new()),
    };
    for m in 0..k {
        for n in 0..=m {
            let (wm, wn) = (w[m], w[n]);
            let am = p / wm as f64;
            let an = p / wn as f64;

            let mut r_ext = vec![0.0; wn - 1];
            for a in feeders(m, k).into_iter().filter(|&a| a != m) {
                add_into(&mut r_ext, &pass.r[(a, n)], 1.0);
            }
            let mut d_ext = vec![0.0; wm - 1];
            for b in feeders(n, k).into_iter().filter(|&b| b != n) {
                add_into(&mut d_ext, &pass.d[(m, b)], 1.0);
            }
            let mut e_ext = 0.0;
            for a in feeders(m, k) {
                for b in feeders(n, k) {
                    if (a, b) != (m, n) {
                        e_ext += pass.eps[(a, b)];
                    }
                }
            }

            let mut known = Injection {
                rho: scaled(&r_ext, am),
                delta: scaled(&d_ext, an),
                uniform: e_ext / (wm * wn) as f64,
            };
            if let Some(b) = basis {
                add_into(&mut known.rho, &b.r_in[(m, n)], 1.0 / wm as f64);
                add_into(&mut known.delta, &b.d_in[(m, n)], 1.0 / wn as f64);
            }
            if (m, n) == (0, 0) {
                known.uniform += seed / wm as f64;
            }

            let (inj, r_in, d_in) = if m == last && n == last {
                let kn = Kernel::new(wm, wn, &known);
                let b = kn.r();
                let unit: Vec<f64> = (1..wm)
                    .map(|j| (wm - j) as f64 / (wm * wm) as f64)
                    .collect();
                let singular = Error::SingularSystem { m, n };
                let xb = solve_sigma(am, &b).ok_or(singular.clone())?;
                let xu = solve_sigma(am, &unit).ok_or(singular.clone())?;
                let den = 1.0 - 1.0 / wm as f64 - 2.0 * am * xu.iter().sum::<f64>();
                if !(den > 0.0) {
                    return Err(singular);
                }
                let corner = (kn.eps() + 2.0 * am * xb.iter().sum::<f64>()) / den;
                let x: Vec<f64> = xb.iter().zip(&xu).map(|(a, b)| a + corner * b).collect();
                let mut inj = known;
                add_into(&mut inj.rho, &x, am);
                add_into(&mut inj.delta, &x, am);
                inj.uniform += corner / (wm * wm) as f64;
                add_into(&mut r_ext, &x, 1.0);
                add_into(&mut d_ext, &x, 1.0);
                (inj, r_ext, d_ext)
            } else if m == last {
                let x = solve_suffix(am, &Kernel::new(wm, wn, &known).r());
                let mut inj = known;
                add_into(&mut inj.rho, &x, am);
                add_into(&mut r_ext, &x, 1.0);
                (inj, r_ext, d_ext)
            } else {
                (known, r_ext, d_ext)
            };

            let kernel = Kernel::new(wm, wn, &inj);
            let (r, d) = (kernel.r(), kernel.d());
            let (eps, pmn) = (kernel.eps(), kernel.aggregate());
            if m != n {
                pass.r[(n, m)] = d.clone();
                pass.d[(n, m)] = r.clone();
                pass.eps[(n, m)] = eps;
                pass.pmn[(n, m)] = pmn;
                pass.inj[(n, m)] = inj.transposed();
                pass.r_in[(n, m)] = d_in.clone();
                pass.d_in[(n, m)] = r_in.clone();
            }
            pass.r[(m, n)] = r;
            pass.d[(m, n)] = d;
            pass.eps[(m, n)] = eps;
            pass.pmn[(m, n)] = pmn;
            pass.inj[(m, n)] = inj;
            pass.r_in[(m, n)] = r_in;
            pass.d_in[(m, n)] = d_in;
        }
    }
    Ok(pass)
}

fn check_inputs(params: &ProtocolParams, p: f64) -> Result<()> {
    if params.m_stages() < 2 {
        return Err(Error::InvalidParams(
            "the block recurrences need at least two stages".into(),
        ));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    Ok(())
}

/// Stationary block quantities at collision probability `p`, normalized to
/// total mass one.
pub fn solve_summary(params: &ProtocolParams, p: f64) -> Result<StateSummary> {
    check_inputs(params, p)?;
    let provisional = propagate(params, p, 1.0, None)?;
    let z = provisional.total();
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::SingularSystem { m: 0, n: 0 });
    }
    let pass = propagate(params, p, 1.0 / z, None)?;
    Ok(StateSummary {
        params: *params,
        p,
        eps: pass.eps.clone(),
        r: pass.r.clone(),
        d: pass.d.clone(),
        pmn: pass.pmn.clone(),
        eta: pass.eta(),
        pass,
    })
}

/// Probability that exactly one counter of the pair is zero.
pub fn eta(summary: &StateSummary) -> f64 {
    summary.eta
}

/// Derivatives in `p`. The corner derivative is pinned by requiring the
/// block masses to keep summing to one.
pub fn solve_derivatives(
    params: &ProtocolParams,
    p: f64,
    summary: &StateSummary,
) -> Result<DerivativeSummary> {
    check_inputs(params, p)?;
    if summary.params != *params || summary.p != p {
        return Err(Error::InvalidParams(
            "summary was solved for different inputs".into(),
        ));
    }
    let base = &summary.pass;
    let z0 = propagate(params, p, 0.0, Some(base))?.total();
    let z1 = propagate(params, p, 1.0, Some(base))?.total();
    let slope = z1 - z0;
    if !(slope.is_finite() && slope != 0.0) {
        return Err(Error::SingularSystem { m: 0, n: 0 });
    }
    let pass = propagate(params, p, -z0 / slope, Some(base))?;
    Ok(DerivativeSummary {
        deta: pass.eta(),
        deps: pass.eps,
        dr: pass.r,
        dd: pass.d,
        dpmn: pass.pmn,
    })
}
