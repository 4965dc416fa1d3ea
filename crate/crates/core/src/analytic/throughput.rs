//! Saturation throughput, for the double-station protocol and for
//! conventional single-counter CSMA/CA.

use super::{solve_collision_prob, solve_summary};
use crate::params::{FrameTimings, ProtocolParams};
use crate::{Error, Result};

/// Payload symbols delivered per symbol of channel time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Throughput {
    /// `L_p / (T_s + tau / L_o - T_c)`.
    pub c: f64,
    /// Ratio of expected payload to expected slot duration.
    pub c_unsimplified: f64,
    pub l_o: f64,
}

/// Expected payload over expected channel time for `n` contenders that each
/// attempt with probability `eta`.
pub fn throughput_from_times(eta: f64, n: usize, ts: f64, tc: f64, slot: f64, payload: f64) -> f64 {
    let nf = n as f64;
    let idle = (1.0 - eta).powi(n as i32);
    let single = nf * eta * (1.0 - eta).powi(n as i32 - 1);
    let busy = ts * single + tc * (1.0 - single - idle) + slot * idle;
    payload * single / busy
}

pub fn throughput_unsimplified(eta: f64, n: usize, timings: &FrameTimings) -> f64 {
    let (ts, tc) = timings.channel_times();
    throughput_from_times(
        eta,
        n,
        ts as f64,
        tc as f64,
        timings.slot as f64,
        timings.payload as f64,
    )
}

/// Both forms; fails on `eta` outside `(0, 1)` where `L_o` degenerates.
pub fn throughput(eta: f64, n: usize, timings: &FrameTimings) -> Result<Throughput> {
    if !(eta > 0.0 && eta < 1.0) || n == 0 {
        return Err(Error::DegenerateEta(eta));
    }
    let (ts, tc) = timings.channel_times();
    let (ts, tc, slot) = (ts as f64, tc as f64, timings.slot as f64);
    let nf = n as f64;
    let ratio = tc / slot;
    let l_o = nf * eta * (1.0 - eta).powi(n as i32 - 1)
        / (ratio - (1.0 - eta).powi(n as i32) * (ratio - 1.0));
    let c = timings.payload as f64 / (ts + slot / l_o - tc);
    let c_unsimplified = throughput_unsimplified(eta, n, timings);
    debug_assert!(
        c_unsimplified == 0.0 || ((c - c_unsimplified) / c_unsimplified).abs() < 1e-12,
        "throughput forms disagree: {c} vs {c_unsimplified}"
    );
    Ok(Throughput {
        c,
        c_unsimplified,
        l_o,
    })
}

/// Model prediction at the collision fixed point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub p: f64,
    pub eta: f64,
    pub c: f64,
}

pub fn operating_point(params: &ProtocolParams, timings: &FrameTimings) -> Result<OperatingPoint> {
    let p = solve_collision_prob(params)?;
    let eta = solve_summary(params, p)?.eta;
    let c = throughput(eta, params.n_pairs(), timings)?.c;
    Ok(OperatingPoint { p, eta, c })
}

/// Attempt probability of one binary-exponential-backoff station that sees
/// collision probability `p`; `m_stages` windows `W0 .. 2^(M-1) W0`.
pub fn baseline_attempt_prob(p: f64, w0: usize, m_stages: usize) -> f64 {
    let top = m_stages - 1;
    let half = |s: usize| ((w0 << s) as f64 + 1.0) / 2.0;
    let lower: f64 = (0..top).map(|s| p.powi(s as i32) * half(s)).sum();
    1.0 / ((1.0 - p) * lower + p.powi(top as i32) * half(top))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselinePoint {
    pub tau: f64,
    pub p: f64,
    pub c: f64,
}

/// Solves `p = 1 - (1 - tau(p))^(n-1)` by bisection. Returns `(tau, p)`.
pub fn baseline_fixed_point(n_stations: usize, w0: usize, m_stages: usize) -> Result<(f64, f64)> {
    if n_stations == 0 || m_stages == 0 || w0 == 0 {
        return Err(Error::InvalidParams("baseline needs n, w0, M >= 1".into()));
    }
    let tau = |p: f64| baseline_attempt_prob(p, w0, m_stages);
    if n_stations == 1 {
        return Ok((tau(0.0), 0.0));
    }
    let k = n_stations as i32 - 1;
    let h = |p: f64| p - (1.0 - (1.0 - tau(p)).powi(k));
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            let p = 0.5 * (lo + hi);
            return Ok((tau(p), p));
        }
    }
    Err(Error::NoConvergence { iterations: 200 })
}

/// Conventional CSMA/CA with RTS/CTS, `n_stations` saturated stations.
pub fn baseline_csma_throughput(
    n_stations: usize,
    w0: usize,
    m_stages: usize,
    timings: &FrameTimings,
) -> Result<BaselinePoint> {
    let (tau, p) = baseline_fixed_point(n_stations, w0, m_stages)?;
    let (ts, tc) = timings.baseline_channel_times();
    let c = throughput_from_times(
        tau,
        n_stations,
        ts as f64,
        tc as f64,
        timings.slot as f64,
        timings.payload as f64,
    );
    Ok(BaselinePoint { tau, p, c })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanishing_attempts_give_zero() {
        assert_eq!(
            throughput_unsimplified(0.0, 30, &FrameTimings::default()),
            0.0
        );
        assert!(matches!(
            throughput(0.0, 30, &FrameTimings::default()),
            Err(Error::DegenerateEta(_))
        ));
        assert!(throughput(1.0, 30, &FrameTimings::default()).is_err());
    }

    #[test]
    fn forms_agree() {
        let t = FrameTimings::default();
        let mut x: u64 = 42;
        for _ in 0..100 {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1);
            let eta = ((x >> 11) as f64 / (1u64 << 53) as f64).clamp(1e-6, 0.9);
            let n = 1 + (x % 200) as usize;
            let th = throughput(eta, n, &t).unwrap();
            assert!(((th.c - th.c_unsimplified) / th.c_unsimplified).abs() < 1e-12);
        }
    }

    #[test]
    fn baseline_single_station() {
        let (tau, p) = baseline_fixed_point(1, 16, 4).unwrap();
        assert_eq!(p, 0.0);
        assert!((tau - 2.0 / 17.0).abs() < 1e-15);
    }

    #[test]
    fn baseline_bounded_and_decreasing() {
        let t = FrameTimings::default();
        let b = baseline_csma_throughput(30, 128, 4, &t).unwrap();
        let (ts, _) = t.baseline_channel_times();
        assert!(b.c > 0.0 && b.c < t.payload as f64 / ts as f64);
        let c: Vec<f64> = [10, 50, 200]
            .iter()
            .map(|&n| baseline_csma_throughput(n, 32, 4, &t).unwrap().c)
            .collect();
        assert!(c[0] > c[1] && c[1] > c[2]);
    }

    #[test]
    fn baseline_fixed_point_is_consistent() {
        let (tau, p) = baseline_fixed_point(30, 128, 4).unwrap();
        assert!((p - (1.0 - (1.0 - tau).powi(29))).abs() < 1e-12);
    }
}
