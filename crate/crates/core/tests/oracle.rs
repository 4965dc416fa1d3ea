use dscsma::analytic::{solve_derivatives, solve_summary};
use dscsma::chain_oracle::{build_chain, eta_of, stationary, ChainState};
use dscsma::ProtocolParams;

const GRID_P: [f64; 4] = [0.0, 0.1, 0.3, 0.7];

fn grid() -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for m in [2, 3] {
        for w0 in [2, 4] {
            for p in GRID_P {
                out.push((m, w0, p));
            }
        }
    }
    out
}

#[test]
fn every_state_matches_dense_chain() {
    for (m, w0, p) in grid() {
        let params = ProtocolParams::new(w0, m, 1).unwrap();
        let dist = stationary(&build_chain(&params, p).unwrap()).unwrap();
        let s = solve_summary(&params, p).unwrap();
        let mut worst: f64 = 0.0;
        for (state, prob) in dist.iter() {
            worst = worst.max((s.state_prob(state) - prob).abs());
        }
        assert!(worst < 1e-10, "M={m} W0={w0} p={p}: max error {worst:e}");
        for a in 0..m {
            for b in 0..m {
                assert!((s.eps[(a, b)] - dist.get(ChainState::new(a, b, 0, 0))).abs() < 1e-10);
                assert!((s.pmn[(a, b)] - dist.block_sum(a, b)).abs() < 1e-10);
                for (k, v) in s.r[(a, b)].iter().enumerate() {
                    assert!((v - dist.get(ChainState::new(a, b, 0, k + 1))).abs() < 1e-10);
                }
                for (k, v) in s.d[(a, b)].iter().enumerate() {
                    assert!((v - dist.get(ChainState::new(a, b, k + 1, 0))).abs() < 1e-10);
                }
            }
        }
        assert!((s.eta - eta_of(&dist)).abs() < 1e-10);
    }
}

#[test]
fn larger_chains_match() {
    for (w0, m, p) in [(8, 3, 0.45), (4, 4, 0.9), (16, 2, 0.2)] {
        let params = ProtocolParams::new(w0, m, 1).unwrap();
        let dist = stationary(&build_chain(&params, p).unwrap()).unwrap();
        let s = solve_summary(&params, p).unwrap();
        for (state, prob) in dist.iter() {
            assert!((s.state_prob(state) - prob).abs() < 1e-10, "{state:?}");
        }
    }
}

#[test]
fn derivative_of_oracle_eta() {
    let params = ProtocolParams::new(4, 3, 1).unwrap();
    let p = 0.3;
    let h = 1e-5;
    let eta = |p: f64| eta_of(&stationary(&build_chain(&params, p).unwrap()).unwrap());
    let fd = (eta(p + h) - eta(p - h)) / (2.0 * h);
    let s = solve_summary(&params, p).unwrap();
    let ds = solve_derivatives(&params, p, &s).unwrap();
    assert!(((ds.deta - fd) / fd).abs() < 1e-6);
}

#[test]
fn single_stage_chain_matches_uniform_window_formula() {
    for w0 in [2usize, 4, 8, 16] {
        let params = ProtocolParams::single_stage(w0, 1).unwrap();
        let eta = eta_of(&stationary(&build_chain(&params, 0.0).unwrap()).unwrap());
        let w = w0 as f64;
        let want = (w - 1.0) / (w * w / 3.0 + w / 2.0 + 1.0 / 6.0);
        assert!((eta - want).abs() < 1e-10, "W0={w0}: {eta} vs {want}");
    }
}

#[test]
fn chain_satisfies_pair_symmetry() {
    for (m, w0, p) in grid() {
        let params = ProtocolParams::new(w0, m, 1).unwrap();
        let dist = stationary(&build_chain(&params, p).unwrap()).unwrap();
        for (s, prob) in dist.iter() {
            let t = dist.get(ChainState::new(s.n, s.m, s.j, s.i));
            assert!((prob - t).abs() < 1e-10);
        }
        let e00 = dist.get(ChainState::new(0, 0, 0, 0));
        let w = w0 as f64;
        assert!((dist.block_sum(0, 0) - (2.0 * w + 1.0) * (w + 1.0) / 6.0 * e00).abs() < 1e-10);
    }
}
