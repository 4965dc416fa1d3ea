//! Explicit Markov chain of one TCPair for a fixed external collision
//! probability, and its stationary distribution.
//!
//! State `(m, n, i, j)`: stages and counter values of the two counters.
//! This is deliberately brute force; the closed forms in
//! [`analytic`](crate::analytic) are tested against it.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::params::ProtocolParams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChainState {
    pub m: usize,
    pub n: usize,
    pub i: usize,
    pub j: usize,
}

impl ChainState {
    pub fn new(m: usize, n: usize, i: usize, j: usize) -> Self {
        Self { m, n, i, j }
    }
}

/// Enumeration of all states, block by block in `(m, n)` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    windows: Vec<usize>,
    offsets: Vec<usize>,
    len: usize,
}

impl StateSpace {
    pub fn new(windows: Vec<usize>) -> Self {
        let k = windows.len();
        let mut offsets = Vec::with_capacity(k * k);
        let mut len = 0;
        for &wm in &windows {
            for &wn in &windows {
                offsets.push(len);
                len += wm * wn;
            }
        }
        Self {
            windows,
            offsets,
            len,
        }
    }

    pub fn for_params(params: &ProtocolParams) -> Self {
        Self::new(params.windows())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn stages(&self) -> usize {
        self.windows.len()
    }

    pub fn window(&self, stage: usize) -> usize {
        self.windows[stage]
    }

    pub fn index(&self, s: ChainState) -> usize {
        let k = self.windows.len();
        debug_assert!(s.m < k && s.n < k);
        debug_assert!(s.i < self.windows[s.m] && s.j < self.windows[s.n]);
        self.offsets[s.m * k + s.n] + s.i * self.windows[s.n] + s.j
    }

    pub fn state(&self, index: usize) -> ChainState {
        let k = self.windows.len();
        let block = self.offsets.partition_point(|&o| o <= index) - 1;
        let (m, n) = (block / k, block % k);
        let local = index - self.offsets[block];
        ChainState::new(m, n, local / self.windows[n], local % self.windows[n])
    }

    pub fn states(&self) -> impl Iterator<Item = ChainState> + '_ {
        let k = self.windows.len();
        (0..k).flat_map(move |m| {
            (0..k).flat_map(move |n| {
                let (wm, wn) = (self.windows[m], self.windows[n]);
                (0..wm).flat_map(move |i| (0..wn).map(move |j| ChainState::new(m, n, i, j)))
            })
        })
    }
}

/// Sparse row-stochastic transition matrix.
#[derive(Debug, Clone)]
pub struct TransitionChain {
    space: StateSpace,
    rows: Vec<Vec<(usize, f64)>>,
}

impl TransitionChain {
    /// Wraps caller-supplied rows; each row lists `(target index, probability)`.
    pub fn from_rows(space: StateSpace, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.len() != space.len() {
            return Err(Error::InvalidParams(format!(
                "{} rows for {} states",
                rows.len(),
                space.len()
            )));
        }
        for row in &rows {
            for &(t, w) in row {
                if t >= space.len() {
                    return Err(Error::InvalidParams(format!("target {t} out of range")));
                }
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::InvalidProbability(w));
                }
            }
        }
        Ok(Self { space, rows })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn row(&self, s: ChainState) -> &[(usize, f64)] {
        &self.rows[self.space.index(s)]
    }

    /// Probability of moving from `from` to `to`.
    pub fn prob(&self, from: ChainState, to: ChainState) -> f64 {
        let t = self.space.index(to);
        self.row(from)
            .iter()
            .filter(|&&(k, _)| k == t)
            .map(|&(_, w)| w)
            .sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(_, w)| w).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.space.len();
        let mut t = DMatrix::zeros(n, n);
        for (s, row) in self.rows.iter().enumerate() {
            for &(k, w) in row {
                t[(s, k)] += w;
            }
        }
        t
    }

    /// `x^T T`.
    pub fn left_apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (s, row) in self.rows.iter().enumerate() {
            let xs = x[s];
            if xs == 0.0 {
                continue;
            }
            for &(k, w) in row {
                y[k] += xs * w;
            }
        }
        y
    }

    /// Largest entry of `|x^T T - x^T|`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.left_apply(x)
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Builds the one-pair chain at collision probability `p`.
///
/// Accepts `p = 1`, where success transitions simply carry no mass.
pub fn build_chain(params: &ProtocolParams, p: f64) -> Result<TransitionChain> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    let space = StateSpace::for_params(params);
    let w0 = params.w0();
    let mut rows = Vec::with_capacity(space.len());
    for s in space.states() {
        let mut row: Vec<(usize, f64)> = Vec::new();
        let mut push = |t: ChainState, w: f64| {
            if w > 0.0 {
                row.push((space.index(t), w));
            }
        };
        let ChainState { m, n, i, j } = s;
        match (i, j) {
            (0, 0) => {
                let (m2, n2) = (params.next_stage(m), params.next_stage(n));
                let (wa, wb) = (params.window(m2), params.window(n2));
                let w = 1.0 / (wa * wb) as f64;
                for a in 0..wa {
                    for b in 0..wb {
                        push(ChainState::new(m2, n2, a, b), w);
                    }
                }
            }
            (0, _) | (_, 0) => {
                let ws = (1.0 - p) / (w0 * w0) as f64;
                for a in 0..w0 {
                    for b in 0..w0 {
                        push(ChainState::new(0, 0, a, b), ws);
                    }
                }
                if i == 0 {
                    let m2 = params.next_stage(m);
                    let wa = params.window(m2);
                    for a in 0..wa {
                        push(ChainState::new(m2, n, a, j - 1), p / wa as f64);
                    }
                } else {
                    let n2 = params.next_stage(n);
                    let wb = params.window(n2);
                    for b in 0..wb {
                        push(ChainState::new(m, n2, i - 1, b), p / wb as f64);
                    }
                }
            }
            _ => push(ChainState::new(m, n, i - 1, j - 1), 1.0),
        }
        row.sort_unstable_by_key(|&(k, _)| k);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for (k, w) in row {
            match merged.last_mut() {
                Some((last, acc)) if *last == k => *acc += w,
                _ => merged.push((k, w)),
            }
        }
        rows.push(merged);
    }
    Ok(TransitionChain { space, rows })
}

/// Stationary probabilities indexed like the chain's state space.
#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    space: StateSpace,
    probs: Vec<f64>,
}

impl StationaryDistribution {
    pub fn new(space: StateSpace, probs: Vec<f64>) -> Self {
        assert_eq!(space.len(), probs.len());
        Self { space, probs }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn get(&self, s: ChainState) -> f64 {
        self.probs[self.space.index(s)]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn iter(&self) -> impl Iterator<Item = (ChainState, f64)> + '_ {
        self.space.states().zip(self.probs.iter().copied())
    }

    /// Aggregate probability of stage pair `(m, n)`.
    pub fn block_sum(&self, m: usize, n: usize) -> f64 {
        let (wm, wn) = (self.space.window(m), self.space.window(n));
        let start = self.space.index(ChainState::new(m, n, 0, 0));
        self.probs[start..start + wm * wn].iter().sum()
    }

    /// CSV dump with header `m,n,i,j,prob`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "m,n,i,j,prob")?;
        for (s, p) in self.iter() {
            writeln!(out, "{},{},{},{},{:e}", s.m, s.n, s.i, s.j, p)?;
        }
        Ok(())
    }
}

/// Largest chain solved by a dense LU factorization under [`SolveMethod::Auto`].
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Auto,
    Dense,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub method: SolveMethod,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            method: SolveMethod::Auto,
            tol: 1e-12,
            max_iter: 2_000_000,
        }
    }
}

pub fn stationary(chain: &TransitionChain) -> Result<StationaryDistribution> {
    stationary_with(chain, SolveOptions::default())
}

pub fn stationary_with(
    chain: &TransitionChain,
    opts: SolveOptions,
) -> Result<StationaryDistribution> {
    let n = chain.space.len();
    if n == 0 {
        return Err(Error::InvalidParams("empty chain".into()));
    }
    let dense = match opts.method {
        SolveMethod::Auto => n <= DENSE_LIMIT,
        SolveMethod::Dense => true,
        SolveMethod::Power => false,
    };
    let mut probs = if dense {
        solve_dense(chain)?
    } else {
        solve_power(chain, opts)?
    };
    for x in probs.iter_mut() {
        if *x < 0.0 {
            if *x < -opts.tol {
                return Err(Error::SolverFailure { residual: *x });
            }
            *x = 0.0;
        }
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|x| *x /= total);
    let residual = chain.residual(&probs);
    if !(residual <= opts.tol) {
        return Err(Error::SolverFailure { residual });
    }
    Ok(StationaryDistribution::new(chain.space.clone(), probs))
}

/// Solves `(T^T - I) x = 0` with the last balance equation replaced by `sum x = 1`.
fn solve_dense(chain: &TransitionChain) -> Result<Vec<f64>> {
    let n = chain.space.len();
    let mut a = chain.to_dense().transpose();
    for k in 0..n {
        a[(k, k)] -= 1.0;
    }
    a.row_mut(n - 1).fill(1.0);
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(Error::SolverFailure {
        residual: f64::INFINITY,
    })?;
    Ok(x.iter().copied().collect())
}

/// Power iteration on the lazy chain `(I + T) / 2`, which is aperiodic.
fn solve_power(chain: &TransitionChain, opts: SolveOptions) -> Result<Vec<f64>> {
    let n = chain.space.len();
    let mut x = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let y = chain.left_apply(&x);
        residual = y
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual <= opts.tol * 0.5 {
            return Ok(x);
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = 0.5 * (*xi + yi);
        }
    }
    Err(Error::SolverFailure { residual })
}

/// Probability that exactly one counter of the pair is zero.
pub fn eta_of(dist: &StationaryDistribution) -> f64 {
    dist.iter()
        .filter(|(s, _)| (s.i == 0) != (s.j == 0))
        .map(|(_, p)| p)
        .sum()
}
