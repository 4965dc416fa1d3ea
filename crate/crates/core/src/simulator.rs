//! Slot-level Monte Carlo of saturated contention.
//!
//! Time advances in backoff slots. A slot in which at least one counter
//! expires is followed by the busy period of the resulting exchange; every
//! counter that did not take part decrements in that slot and then holds its
//! value through the busy period (see [`BusySlotRule`]). Idle runs are skipped
//! in one step by storing each counter as the absolute slot of its expiry.
//!
//! Randomness: one ChaCha8 stream per contender group (`seed`, stream =
//! group index), plus one extra stream for refusal draws. Results are
//! bit-identical for identical inputs on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::params::{ExchangeOutcome, FrameTimings, ProtocolParams};
use crate::partner::PartnerMap;
use crate::{Error, Result};

/// What uninvolved counters do in a slot that carries a transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BusySlotRule {
    /// Decrement once, then hold through the busy period.
    #[default]
    Decrement,
    /// Hold; the slot does not count for them.
    Freeze,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub horizon_slots: u64,
    pub seed: u64,
    pub busy_rule: BusySlotRule,
    /// Probability that a partner declines the superimposed transmission.
    pub refuse_prob: f64,
}

impl SimOptions {
    pub fn new(horizon_slots: u64, seed: u64) -> Self {
        Self {
            horizon_slots,
            seed,
            busy_rule: BusySlotRule::Decrement,
            refuse_prob: 0.0,
        }
    }

    /// Leading slots excluded from measurement.
    pub fn warmup(&self) -> u64 {
        (self.horizon_slots / 20).min(100_000)
    }
}

/// 95% normal-approximation half-widths across replications.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConfidenceHalfWidths {
    pub collision_prob: f64,
    pub throughput: f64,
    pub eta: f64,
}

/// Measured quantities. Durations are in symbol units.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimStats {
    /// Backoff slots measured, idle or not.
    pub virtual_slots: u64,
    /// Idle backoff slots measured.
    pub slots_elapsed: u64,
    pub busy_time_success: u64,
    pub busy_time_collision: u64,
    pub busy_time_refused: u64,
    pub successes: u64,
    pub collisions: u64,
    pub refusals: u64,
    /// Expired counters (each sends one RTS).
    pub attempts: u64,
    /// Expired counters that shared their slot with another.
    pub collided_attempts: u64,
    /// Group-slots in which exactly one counter of the group expired.
    pub single_expiries: u64,
    /// Of those, the ones where some other group also transmitted.
    pub single_collided: u64,
    pub contenders: usize,
    pub payload: u64,
    pub slot: u64,
    /// Probability that a group's lone expiry meets another group's RTS,
    /// the quantity the analytic `p` describes.
    pub collision_prob_hat: f64,
    /// Fraction of all RTS that collided, same-group double expiries included.
    pub per_attempt_collision_hat: f64,
    pub throughput_hat: f64,
    /// Per-group probability of exactly one expired counter per slot.
    pub eta_hat: f64,
    pub ci95: Option<ConfidenceHalfWidths>,
}

impl SimStats {
    pub fn total_time(&self) -> u64 {
        self.slots_elapsed * self.slot
            + self.busy_time_success
            + self.busy_time_collision
            + self.busy_time_refused
    }

    fn finish(&mut self) {
        self.collision_prob_hat = ratio(self.single_collided, self.single_expiries);
        self.per_attempt_collision_hat = ratio(self.collided_attempts, self.attempts);
        self.throughput_hat = ratio(self.successes * self.payload, self.total_time());
        self.eta_hat = ratio(
            self.single_expiries,
            self.virtual_slots * self.contenders as u64,
        );
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Station-mode result with per-station bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct StationReport {
    pub stats: SimStats,
    /// Successful exchanges each station took part in, 1-based order.
    pub exchanges_per_station: Vec<u64>,
    /// Exchanges each station initiated that its partner refused.
    pub refused_per_station: Vec<u64>,
}

/// Runtime state of one TCPair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairState {
    pub stage_m: usize,
    pub stage_n: usize,
    pub t1: u64,
    pub t2: u64,
    pub rng_stream: u64,
}

struct Engine {
    windows: Vec<u64>,
    expiry: Vec<u64>,
    stage: Vec<usize>,
    touched: Vec<bool>,
    group_of: Vec<usize>,
    members: Vec<Vec<usize>>,
    rngs: Vec<ChaCha8Rng>,
    refusal_rng: ChaCha8Rng,
    opts: SimOptions,
    ts: u64,
    tc: u64,
    tr: u64,
    stats: SimStats,
}

enum Resolution {
    Success { counter: usize },
    Collision,
}

impl Engine {
    fn new(
        windows: Vec<u64>,
        members: Vec<Vec<usize>>,
        opts: SimOptions,
        times: (u64, u64, u64),
    ) -> Self {
        let n_counters: usize = members.iter().map(Vec::len).sum();
        let mut group_of = vec![0; n_counters];
        for (g, ms) in members.iter().enumerate() {
            for &c in ms {
                group_of[c] = g;
            }
        }
        let rngs = (0..members.len())
            .map(|g| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(g as u64);
                rng
            })
            .collect();
        let mut refusal_rng = ChaCha8Rng::seed_from_u64(opts.seed);
        refusal_rng.set_stream(members.len() as u64);
        let mut engine = Self {
            windows,
            expiry: vec![0; n_counters],
            stage: vec![0; n_counters],
            touched: vec![false; n_counters],
            group_of,
            members,
            rngs,
            refusal_rng,
            opts,
            ts: times.0,
            tc: times.1,
            tr: times.2,
            stats: SimStats::default(),
        };
        for c in 0..n_counters {
            engine.redraw(c, 0, 0);
        }
        engine
    }

    /// New value for counter `c` at `stage`, counting from slot `from`.
    fn redraw(&mut self, c: usize, stage: usize, from: u64) {
        self.stage[c] = stage;
        self.touched[c] = true;
        let w = self.windows[stage];
        let v = self.rngs[self.group_of[c]].gen_range(0..w);
        self.expiry[c] = from + v;
    }

    fn run(mut self, resolve: impl Fn(&mut Self, &[usize], u64) -> Resolution) -> (SimStats, Self) {
        let horizon = self.opts.horizon_slots;
        let warmup = self.opts.warmup();
        let mut now = 0u64;
        let mut zeros = Vec::new();
        let mut group_hits = vec![0u32; self.members.len()];
        while now < horizon {
            let t = *self.expiry.iter().min().expect("at least one counter");
            let idle_end = t.min(horizon);
            let measured_idle = idle_end.saturating_sub(now.max(warmup));
            self.stats.slots_elapsed += measured_idle;
            self.stats.virtual_slots += measured_idle;
            if t >= horizon {
                break;
            }
            zeros.clear();
            zeros.extend((0..self.expiry.len()).filter(|&c| self.expiry[c] == t));
            let measure = t >= warmup;
            if measure {
                self.stats.virtual_slots += 1;
                self.stats.attempts += zeros.len() as u64;
                for &c in &zeros {
                    group_hits[self.group_of[c]] += 1;
                }
                for &c in &zeros {
                    let g = self.group_of[c];
                    if group_hits[g] == 1 {
                        self.stats.single_expiries += 1;
                        if zeros.len() > 1 {
                            self.stats.single_collided += 1;
                        }
                    }
                    group_hits[g] = 0;
                }
            }
            let outcome = resolve(&mut self, &zeros, t);
            match outcome {
                Resolution::Success { counter } if measure => {
                    if counter == usize::MAX {
                        self.stats.refusals += 1;
                        self.stats.busy_time_refused += self.tr;
                    } else {
                        self.stats.successes += 1;
                        self.stats.busy_time_success += self.ts;
                    }
                }
                Resolution::Collision if measure => {
                    self.stats.collisions += 1;
                    self.stats.collided_attempts += zeros.len() as u64;
                    self.stats.busy_time_collision += self.tc;
                }
                _ => {}
            }
            for c in 0..self.expiry.len() {
                if !self.touched[c] && self.opts.busy_rule == BusySlotRule::Freeze {
                    self.expiry[c] += 1;
                }
                self.touched[c] = false;
            }
            now = t + 1;
            debug_assert!(self.legal(now));
        }
        let mut stats = std::mem::take(&mut self.stats);
        stats.finish();
        (stats, self)
    }

    fn legal(&self, now: u64) -> bool {
        (0..self.expiry.len()).all(|c| {
            self.stage[c] < self.windows.len()
                && self.expiry[c] >= now
                && self.expiry[c] - now < self.windows[self.stage[c]]
        })
    }

    fn collide(&mut self, zeros: &[usize], t: u64) -> Resolution {
        let top = self.windows.len() - 1;
        for &c in zeros {
            let s = (self.stage[c] + 1).min(top);
            self.redraw(c, s, t + 1);
        }
        Resolution::Collision
    }

    fn reset_group(&mut self, c: usize, t: u64) {
        let g = self.group_of[c];
        for k in 0..self.members[g].len() {
            let member = self.members[g][k];
            self.redraw(member, 0, t + 1);
        }
    }

    fn pair_state(&self, g: usize, now: u64) -> PairState {
        let ms = &self.members[g];
        PairState {
            stage_m: self.stage[ms[0]],
            stage_n: self.stage[ms[1]],
            t1: self.expiry[ms[0]] - now,
            t2: self.expiry[ms[1]] - now,
            rng_stream: g as u64,
        }
    }
}

fn pair_members(n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|g| vec![2 * g, 2 * g + 1]).collect()
}

fn windows_of(params: &ProtocolParams) -> Vec<u64> {
    params.windows().into_iter().map(|w| w as u64).collect()
}

fn pairs_engine(params: &ProtocolParams, timings: &FrameTimings, opts: SimOptions) -> Engine {
    let (ts, tc) = timings.channel_times();
    let mut engine = Engine::new(
        windows_of(params),
        pair_members(params.n_pairs()),
        opts,
        (ts, tc, timings.refusal_time()),
    );
    engine.stats.contenders = params.n_pairs();
    engine.stats.payload = timings.payload;
    engine.stats.slot = timings.slot;
    engine
}

fn resolve_pairs(e: &mut Engine, zeros: &[usize], t: u64) -> Resolution {
    if zeros.len() == 1 {
        e.reset_group(zeros[0], t);
        Resolution::Success { counter: zeros[0] }
    } else {
        e.collide(zeros, t)
    }
}

/// `N` independent TCPairs sharing one channel.
pub fn simulate_pairs(
    params: &ProtocolParams,
    timings: &FrameTimings,
    horizon_slots: u64,
    seed: u64,
) -> SimStats {
    simulate_pairs_with(params, timings, SimOptions::new(horizon_slots, seed))
}

pub fn simulate_pairs_with(
    params: &ProtocolParams,
    timings: &FrameTimings,
    opts: SimOptions,
) -> SimStats {
    pairs_engine(params, timings, opts).run(resolve_pairs).0
}

/// Pair states at the end of a run, for inspection.
pub fn final_pair_states(
    params: &ProtocolParams,
    timings: &FrameTimings,
    opts: SimOptions,
) -> Vec<PairState> {
    let (_, engine) = pairs_engine(params, timings, opts).run(resolve_pairs);
    let now = *engine
        .expiry
        .iter()
        .min()
        .expect("counters")
        .min(&opts.horizon_slots);
    (0..params.n_pairs())
        .map(|g| engine.pair_state(g, now))
        .collect()
}

/// TCPairs taken from a partner map; each station owns one counter per
/// partner. `params.n_pairs()` is ignored. A partner refuses with
/// probability `refuse_prob`; the exchange then ends after its SAK.
pub fn simulate_stations(
    map: &PartnerMap,
    params: &ProtocolParams,
    timings: &FrameTimings,
    horizon_slots: u64,
    seed: u64,
    refuse_prob: f64,
) -> Result<StationReport> {
    let mut opts = SimOptions::new(horizon_slots, seed);
    opts.refuse_prob = refuse_prob;
    simulate_stations_with(map, params, timings, opts)
}

pub fn simulate_stations_with(
    map: &PartnerMap,
    params: &ProtocolParams,
    timings: &FrameTimings,
    opts: SimOptions,
) -> Result<StationReport> {
    if !(0.0..=1.0).contains(&opts.refuse_prob) {
        return Err(Error::InvalidProbability(opts.refuse_prob));
    }
    let pairs = map.tc_pairs();
    if pairs.is_empty() {
        return Err(Error::InvalidParams("partner map has no pairs".into()));
    }
    // counter 2g belongs to the lower-numbered station of pair g
    let station_of: Vec<usize> = pairs
        .iter()
        .flat_map(|(a, b)| [a.station, b.station])
        .collect();
    let (ts, tc) = timings.channel_times();
    let mut engine = Engine::new(
        windows_of(params),
        pair_members(pairs.len()),
        opts,
        (ts, tc, timings.duration(ExchangeOutcome::Refused)),
    );
    engine.stats.contenders = pairs.len();
    engine.stats.payload = timings.payload;
    engine.stats.slot = timings.slot;
    let n_st = map.n_stations();
    let exchanges = std::cell::RefCell::new(vec![0u64; n_st]);
    let refused = std::cell::RefCell::new(vec![0u64; n_st]);
    let warmup = opts.warmup();
    let (stats, _) = engine.run(|e, zeros, t| {
        if zeros.len() != 1 {
            return e.collide(zeros, t);
        }
        let c = zeros[0];
        let partner = c ^ 1;
        let refuse = e.opts.refuse_prob > 0.0 && e.refusal_rng.gen_bool(e.opts.refuse_prob);
        if refuse {
            let s = e.stage[c];
            e.redraw(c, s, t + 1);
            e.redraw(partner, 0, t + 1);
            if t >= warmup {
                refused.borrow_mut()[station_of[c] - 1] += 1;
            }
            Resolution::Success {
                counter: usize::MAX,
            }
        } else {
            e.reset_group(c, t);
            if t >= warmup {
                let mut ex = exchanges.borrow_mut();
                ex[station_of[c] - 1] += 1;
                ex[station_of[partner] - 1] += 1;
            }
            Resolution::Success { counter: c }
        }
    });
    Ok(StationReport {
        stats,
        exchanges_per_station: exchanges.into_inner(),
        refused_per_station: refused.into_inner(),
    })
}

/// Conventional CSMA/CA: one counter per station, RTS/CTS exchange.
pub fn simulate_baseline(
    n_stations: usize,
    w0: usize,
    m_stages: usize,
    timings: &FrameTimings,
    horizon_slots: u64,
    seed: u64,
) -> Result<SimStats> {
    if n_stations == 0 || m_stages == 0 || w0 == 0 {
        return Err(Error::InvalidParams("baseline needs n, w0, M >= 1".into()));
    }
    let windows = (0..m_stages).map(|s| (w0 as u64) << s).collect();
    let (ts, tc) = timings.baseline_channel_times();
    let members = (0..n_stations).map(|c| vec![c]).collect();
    let mut engine = Engine::new(
        windows,
        members,
        SimOptions::new(horizon_slots, seed),
        (ts, tc, 0),
    );
    engine.stats.contenders = n_stations;
    engine.stats.payload = timings.payload;
    engine.stats.slot = timings.slot;
    Ok(engine.run(resolve_pairs).0)
}

/// Runs `sim_fn(base_seed + k)` for `k < n_reps` in parallel.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicated {
    pub reps: Vec<SimStats>,
    /// Counters summed; point estimates are means of per-replication
    /// estimates; `ci95` is set.
    pub aggregate: SimStats,
}

pub fn replicate<F>(sim_fn: F, n_reps: usize, base_seed: u64) -> Result<Replicated>
where
    F: Fn(u64) -> SimStats + Sync,
{
    if n_reps < 2 {
        return Err(Error::InvalidParams(
            "replicate needs at least two runs".into(),
        ));
    }
    let reps: Vec<SimStats> = (0..n_reps as u64)
        .into_par_iter()
        .map(|k| sim_fn(base_seed.wrapping_add(k)))
        .collect();
    let aggregate = aggregate(&reps);
    Ok(Replicated { reps, aggregate })
}

/// Mean and 95% half-width `1.96 s / sqrt(n)` of a sample.
pub fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

fn aggregate(reps: &[SimStats]) -> SimStats {
    let mut agg = SimStats {
        contenders: reps[0].contenders,
        payload: reps[0].payload,
        slot: reps[0].slot,
        ..Default::default()
    };
    for r in reps {
        agg.virtual_slots += r.virtual_slots;
        agg.slots_elapsed += r.slots_elapsed;
        agg.busy_time_success += r.busy_time_success;
        agg.busy_time_collision += r.busy_time_collision;
        agg.busy_time_refused += r.busy_time_refused;
        agg.successes += r.successes;
        agg.collisions += r.collisions;
        agg.refusals += r.refusals;
        agg.attempts += r.attempts;
        agg.collided_attempts += r.collided_attempts;
        agg.single_expiries += r.single_expiries;
        agg.single_collided += r.single_collided;
    }
    let col = |f: fn(&SimStats) -> f64| mean_ci(&reps.iter().map(f).collect::<Vec<_>>());
    let (p, cp) = col(|s| s.collision_prob_hat);
    let (c, cc) = col(|s| s.throughput_hat);
    let (e, ce) = col(|s| s.eta_hat);
    agg.collision_prob_hat = p;
    agg.throughput_hat = c;
    agg.eta_hat = e;
    agg.per_attempt_collision_hat = mean_ci(
        &reps
            .iter()
            .map(|s| s.per_attempt_collision_hat)
            .collect::<Vec<_>>(),
    )
    .0;
    agg.ci95 = Some(ConfidenceHalfWidths {
        collision_prob: cp,
        throughput: cc,
        eta: ce,
    });
    agg
}
