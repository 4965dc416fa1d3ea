//! Initial-window and pair-count selection, and degree-balanced partner maps.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::analytic::operating_point;
use crate::params::{FrameTimings, ProtocolParams};
use crate::partner::PartnerMap;
use crate::{Error, Result};

/// Largest window exponent tried by the direct search.
pub const DIRECT_SEARCH_MAX_EXP: u32 = 14;

/// Closed-form approximation of the throughput-optimal real `W0`.
pub fn relaxed_w0(n: usize, gamma: f64) -> Result<f64> {
    let x = n as f64 * gamma;
    let sqrt2 = std::f64::consts::SQRT_2;
    let radicand = 9.0 / 8.0 * x * x - 21.0 * sqrt2 / 8.0 * x + 1.0 / 16.0;
    if radicand < 0.0 {
        return Err(Error::NonPositiveDiscriminant(radicand));
    }
    Ok(3.0 / (2.0 * sqrt2) * x - 0.75 + radicand.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowChoice {
    /// `None` when the closed form is unusable and the direct search ran.
    pub relaxed: Option<f64>,
    /// Powers of two around `relaxed`, or the whole search grid.
    pub candidates: Vec<usize>,
    pub chosen: usize,
    /// Model throughput of each candidate.
    pub c_values: Vec<(usize, f64)>,
}

impl WindowChoice {
    pub fn used_direct_search(&self) -> bool {
        self.relaxed.is_none()
    }
}

fn model_throughput(w0: usize, m_stages: usize, n: usize, timings: &FrameTimings) -> Result<f64> {
    let params = ProtocolParams::new(w0, m_stages, n)?;
    Ok(operating_point(&params, timings)?.c)
}

/// Highest throughput; ties go to the first entry.
fn best<K: Copy>(values: &[(K, f64)]) -> K {
    let mut top = values[0];
    for &v in &values[1..] {
        if v.1 > top.1 {
            top = v;
        }
    }
    top.0
}

/// Picks `W0` for `n` pairs: the closed form proposes the two neighbouring
/// powers of two and the full model decides between them.
pub fn optimal_w0(n: usize, m_stages: usize, timings: &FrameTimings) -> Result<WindowChoice> {
    if n < 2 {
        return Err(Error::InvalidParams("window selection needs n >= 2".into()));
    }
    timings.validate()?;
    let relaxed = match relaxed_w0(n, timings.gamma()) {
        Ok(w) => Some(w),
        Err(Error::NonPositiveDiscriminant(_)) => None,
        Err(e) => return Err(e),
    };
    let candidates: Vec<usize> = match relaxed {
        Some(w) => {
            let lo = if w < 2.0 {
                2
            } else {
                1usize << (w.log2().floor() as u32)
            };
            let hi = if (lo as f64) < w { lo * 2 } else { lo };
            if lo == hi {
                vec![lo]
            } else {
                vec![lo, hi]
            }
        }
        None => (1..=DIRECT_SEARCH_MAX_EXP).map(|k| 1usize << k).collect(),
    };
    let c_values = candidates
        .par_iter()
        .map(|&w| model_throughput(w, m_stages, n, timings).map(|c| (w, c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(WindowChoice {
        relaxed,
        chosen: best(&c_values),
        candidates,
        c_values,
    })
}

/// Attempt probability with a single window `W0` and no collisions.
pub fn uniform_window_eta(w0: usize) -> f64 {
    let w = w0 as f64;
    (w - 1.0) / (w * w / 3.0 + w / 2.0 + 1.0 / 6.0)
}

/// Positive root of `1 - (eta + eta^2/2) N - (T_c/tau - 1)(eta^2/2) N^2 = 0`.
pub fn relaxed_pair_count(eta: f64, tc_over_slot: f64) -> Result<f64> {
    let a = (tc_over_slot - 1.0) * eta * eta / 2.0;
    let b = eta + eta * eta / 2.0;
    let disc = b * b + 4.0 * a;
    let den = b + disc.max(0.0).sqrt();
    if !(den > 0.0) || disc < 0.0 {
        return Err(Error::NoPositiveRoot);
    }
    Ok(2.0 / den)
}

/// The closed form exactly as printed, with `2 T_c / eta` under the root.
pub fn printed_pair_count(eta: f64, tc: f64, slot: f64) -> f64 {
    let r = tc / slot;
    ((eta * eta / 4.0 + eta + 2.0 * tc / eta - 1.0).sqrt() - (1.0 + eta / 2.0)) / (eta * (r - 1.0))
}

/// Same closed form with `2 T_c / tau`, algebraically the quadratic root.
pub fn corrected_pair_count(eta: f64, tc: f64, slot: f64) -> f64 {
    let r = tc / slot;
    ((eta * eta / 4.0 + eta + 2.0 * r - 1.0).sqrt() - (1.0 + eta / 2.0)) / (eta * (r - 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairCountChoice {
    pub eta_uniform: f64,
    /// Quadratic root.
    pub relaxed: f64,
    /// The printed closed form, for comparison.
    pub printed: f64,
    /// Whether the printed form equals the root within 1e-6.
    pub printed_agrees: bool,
    pub candidates: Vec<usize>,
    pub chosen: usize,
    /// Every pair count evaluated, ascending.
    pub c_values: Vec<(usize, f64)>,
    /// True when neither candidate was a local maximum and the choice was
    /// moved to the nearest one.
    pub refined: bool,
}

/// Picks the pair count for a given `W0`.
pub fn optimal_n(w0: usize, m_stages: usize, timings: &FrameTimings) -> Result<PairCountChoice> {
    ProtocolParams::new(w0, m_stages, 1)?;
    timings.validate()?;
    let (tc, slot) = (timings.collision_time() as f64, timings.slot as f64);
    let eta = uniform_window_eta(w0);
    let relaxed = relaxed_pair_count(eta, tc / slot)?;
    let printed = printed_pair_count(eta, tc, slot);
    let lo = (relaxed.floor() as usize).max(1);
    let hi = (relaxed.ceil() as usize).max(1);
    let candidates: Vec<usize> = if lo == hi { vec![lo] } else { vec![lo, hi] };

    let mut cache: BTreeMap<usize, f64> = BTreeMap::new();
    let mut eval = |n: usize| -> Result<f64> {
        if let Some(&c) = cache.get(&n) {
            return Ok(c);
        }
        let c = model_throughput(w0, m_stages, n, timings)?;
        cache.insert(n, c);
        Ok(c)
    };
    let first: Vec<(usize, f64)> = candidates
        .iter()
        .map(|&n| eval(n).map(|c| (n, c)))
        .collect::<Result<_>>()?;
    let mut chosen = best(&first);
    let mut refined = false;
    loop {
        let here = eval(chosen)?;
        let up = eval(chosen + 1)?;
        if up > here {
            chosen += 1;
            refined = true;
            continue;
        }
        if chosen > 1 && eval(chosen - 1)? > here {
            chosen -= 1;
            refined = true;
            continue;
        }
        break;
    }
    Ok(PairCountChoice {
        eta_uniform: eta,
        relaxed,
        printed,
        printed_agrees: (printed - relaxed).abs() < 1e-6,
        candidates,
        chosen,
        c_values: cache.into_iter().collect(),
        refined,
    })
}

/// A level of the greedy search: every map with `v` pairs removed that
/// the greedy rule can reach.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSearchState {
    pub current_set: Vec<PartnerMap>,
    pub removed_pairs: usize,
    pub q_value: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GreedyOptions {
    /// Keep a single map per level (smallest maximizing edge).
    pub first_only: bool,
    /// Largest frontier kept; extra maps are dropped in canonical order.
    pub frontier_cap: usize,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        Self {
            first_only: false,
            frontier_cap: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GreedyStep {
    /// Level after the step.
    pub v: usize,
    /// Largest endpoint-degree sum over present pairs.
    pub g_star: usize,
    pub q_before: usize,
    pub q_after: usize,
    pub frontier_size: usize,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutcome {
    pub state: MapSearchState,
    pub steps: Vec<GreedyStep>,
    pub variance: f64,
    pub truncated: bool,
}

impl MapSearchState {
    pub fn initial(s: &PartnerMap) -> Self {
        Self {
            current_set: vec![s.clone()],
            removed_pairs: 0,
            q_value: s.q(),
        }
    }

    /// Removes, from every map, each pair of maximal endpoint-degree sum.
    pub fn step(&self, opts: GreedyOptions) -> Result<(Self, GreedyStep)> {
        let mut g_star = None;
        let mut scored = Vec::with_capacity(self.current_set.len());
        for b in &self.current_set {
            let deg = b.degrees();
            let edges: Vec<((usize, usize), usize)> = b
                .edges()
                .into_iter()
                .map(|(i, j)| ((i, j), deg[i - 1] + deg[j - 1]))
                .collect();
            for &(_, g) in &edges {
                g_star = Some(g_star.map_or(g, |x: usize| x.max(g)));
            }
            scored.push(edges);
        }
        let g_star = g_star.ok_or(Error::EmptyFrontier)?;
        let mut next = BTreeSet::new();
        'maps: for (b, edges) in self.current_set.iter().zip(&scored) {
            for &((i, j), g) in edges {
                if g == g_star {
                    let mut child = b.clone();
                    child.set_edge(i, j, false);
                    next.insert(child);
                    if opts.first_only {
                        break 'maps;
                    }
                }
            }
        }
        let truncated = next.len() > opts.frontier_cap.max(1);
        let current_set: Vec<PartnerMap> =
            next.into_iter().take(opts.frontier_cap.max(1)).collect();
        let q_after = current_set[0].q();
        debug_assert!(current_set.iter().all(|m| m.q() == q_after));
        let v = self.removed_pairs + 1;
        let step = GreedyStep {
            v,
            g_star,
            q_before: self.q_value,
            q_after,
            frontier_size: current_set.len(),
            truncated,
        };
        Ok((
            Self {
                current_set,
                removed_pairs: v,
                q_value: q_after,
            },
            step,
        ))
    }
}

fn check_target(s: &PartnerMap, target_n: usize) -> Result<()> {
    if target_n % 2 == 1 {
        return Err(Error::InfeasibleTarget(format!("target {target_n} is odd")));
    }
    if target_n > s.n_entries() {
        return Err(Error::InfeasibleTarget(format!(
            "target {target_n} exceeds the {} entries of the connectivity",
            s.n_entries()
        )));
    }
    Ok(())
}

/// Greedy removal of high-degree pairs until `target_n` entries remain.
pub fn greedy_partner_map(s: &PartnerMap, target_n: usize) -> Result<GreedyOutcome> {
    greedy_partner_map_with(s, target_n, GreedyOptions::default())
}

pub fn greedy_partner_map_with(
    s: &PartnerMap,
    target_n: usize,
    opts: GreedyOptions,
) -> Result<GreedyOutcome> {
    check_target(s, target_n)?;
    let rounds = (s.n_entries() - target_n) / 2;
    let mut state = MapSearchState::initial(s);
    let mut steps = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let (next, step) = state.step(opts)?;
        state = next;
        steps.push(step);
    }
    let truncated = steps.iter().any(|s| s.truncated);
    Ok(GreedyOutcome {
        variance: state.current_set[0].degree_variance(),
        state,
        steps,
        truncated,
    })
}

/// Largest number of undirected pairs the exhaustive search accepts.
pub const BRUTE_FORCE_EDGE_LIMIT: usize = 22;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceOutcome {
    pub min_q: usize,
    /// Every sub-map attaining `min_q`, canonical order.
    pub witnesses: Vec<PartnerMap>,
}

/// Exhaustive minimum of the squared-degree sum over sub-maps of `s` with
/// exactly `target_n` entries.
pub fn brute_force_partner_map(s: &PartnerMap, target_n: usize) -> Result<BruteForceOutcome> {
    check_target(s, target_n)?;
    let edges = s.edges();
    let e = edges.len();
    if e > BRUTE_FORCE_EDGE_LIMIT {
        return Err(Error::TooLarge {
            edges: e,
            limit: BRUTE_FORCE_EDGE_LIMIT,
        });
    }
    let keep = target_n / 2;
    let n = s.n_stations();
    let mut min_q = usize::MAX;
    let mut masks = Vec::new();
    let mut deg = vec![0usize; n];
    let mut visit = |mask: u32| {
        deg.iter_mut().for_each(|d| *d = 0);
        for (k, &(i, j)) in edges.iter().enumerate() {
            if mask >> k & 1 == 1 {
                deg[i - 1] += 1;
                deg[j - 1] += 1;
            }
        }
        let q: usize = deg.iter().map(|d| d * d).sum();
        if q < min_q {
            min_q = q;
            masks.clear();
        }
        if q == min_q {
            masks.push(mask);
        }
    };
    if keep == 0 {
        visit(0);
    } else {
        // all `keep`-subsets of `e` bits in increasing order
        let mut mask: u32 = (1u32 << keep) - 1;
        let limit: u32 = 1u32 << e;
        while mask < limit {
            visit(mask);
            let c = mask & mask.wrapping_neg();
            let r = mask + c;
            mask = (((r ^ mask) >> 2) / c) | r;
        }
    }
    let mut witnesses: Vec<PartnerMap> = masks
        .into_iter()
        .map(|mask| {
            let chosen: Vec<(usize, usize)> = edges
                .iter()
                .enumerate()
                .filter(|(k, _)| mask >> k & 1 == 1)
                .map(|(_, &edge)| edge)
                .collect();
            PartnerMap::from_edges(n, &chosen).expect("edges of a valid map")
        })
        .collect();
    witnesses.sort();
    Ok(BruteForceOutcome { min_q, witnesses })
}
