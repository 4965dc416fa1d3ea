//! Coupling of the pair chain with the other `N - 1` pairs:
//! `p = 1 - (1 - eta(p))^(N-1)`.

use super::{solve_derivatives, solve_summary};
use crate::params::ProtocolParams;
use crate::{Error, Result};

const P_MIN: f64 = 1e-12;
const P_MAX: f64 = 1.0 - 1e-12;

/// `(1 - eta(p))^(N-1) + p - 1`; zero at the operating point.
pub fn collision_residual(params: &ProtocolParams, p: f64) -> Result<f64> {
    let eta = solve_summary(params, p)?.eta;
    Ok((1.0 - eta).powi(params.n_pairs() as i32 - 1) + p - 1.0)
}

/// Newton iteration from `p = 0.5` with step halving; hands over to
/// bisection after three rejected steps.
pub fn newton_collision_prob(params: &ProtocolParams, tol: f64, max_iter: usize) -> Result<f64> {
    if params.n_pairs() == 1 {
        return Ok(0.0);
    }
    let k = params.n_pairs() as i32 - 1;
    let mut p: f64 = 0.5;
    for _ in 0..max_iter {
        let s = solve_summary(params, p)?;
        let q = 1.0 - s.eta;
        let f = q.powi(k) + p - 1.0;
        if f.abs() < tol {
            return Ok(p);
        }
        let ds = solve_derivatives(params, p, &s)?;
        let slope = 1.0 - k as f64 * q.powi(k - 1) * ds.deta;
        let mut step = f / slope;
        let mut rejected = 0;
        let next = loop {
            let cand = p - step;
            if step.is_finite() && cand > 0.0 && cand < 1.0 {
                break cand.clamp(P_MIN, P_MAX);
            }
            rejected += 1;
            if rejected > 3 {
                return bisect_collision_prob(params, tol.min(1e-13));
            }
            step *= 0.5;
        };
        p = next;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
    })
}

/// Bisection on `1 - (1 - eta(p))^(N-1) - p` over `[0, 1)`.
///
/// `tol` bounds the width of the final bracket.
pub fn bisect_collision_prob(params: &ProtocolParams, tol: f64) -> Result<f64> {
    if params.n_pairs() == 1 {
        return Ok(0.0);
    }
    let g = |p: f64| collision_residual(params, p).map(|f| -f);
    let (mut lo, mut hi) = (0.0, P_MAX);
    let g_lo = g(lo)?;
    if g_lo == 0.0 {
        return Ok(0.0);
    }
    if !(g_lo > 0.0 && g(hi)? < 0.0) {
        return Err(Error::NoSignChange);
    }
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let v = g(mid)?;
        if v == 0.0 {
            return Ok(mid);
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Newton with a bisection fallback.
pub fn solve_collision_prob(params: &ProtocolParams) -> Result<f64> {
    match newton_collision_prob(params, 1e-12, 100) {
        Err(Error::NoConvergence { .. }) => bisect_collision_prob(params, 1e-13),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair_never_collides() {
        let p = ProtocolParams::new(16, 4, 1).unwrap();
        assert_eq!(newton_collision_prob(&p, 1e-12, 50).unwrap(), 0.0);
        assert_eq!(bisect_collision_prob(&p, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn newton_agrees_with_bisection() {
        let p = ProtocolParams::new(2, 2, 2).unwrap();
        let a = newton_collision_prob(&p, 1e-12, 50).unwrap();
        let b = bisect_collision_prob(&p, 1e-13).unwrap();
        assert!((a - b).abs() < 1e-9);
        assert!(collision_residual(&p, a).unwrap().abs() < 1e-9);
    }

    #[test]
    fn more_pairs_collide_more() {
        let a = bisect_collision_prob(&ProtocolParams::new(32, 4, 10).unwrap(), 1e-12).unwrap();
        let b = bisect_collision_prob(&ProtocolParams::new(32, 4, 30).unwrap(), 1e-12).unwrap();
        assert!(0.0 < a && a < b && b < 1.0);
    }

    #[test]
    fn iteration_budget_is_enforced() {
        let p = ProtocolParams::new(32, 4, 30).unwrap();
        assert_eq!(
            newton_collision_prob(&p, 1e-300, 2).unwrap_err(),
            Error::NoConvergence { iterations: 2 }
        );
    }
}
