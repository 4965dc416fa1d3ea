//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use clap::Parser;
use dscsma::analytic::{
    baseline_csma_throughput, bisect_collision_prob, collision_residual, newton_collision_prob,
    operating_point, solve_collision_prob, solve_derivatives, solve_summary, OperatingPoint,
};
use dscsma::chain_oracle::{build_chain, stationary};
use dscsma::optimizer::{
    brute_force_partner_map, greedy_partner_map, optimal_n, optimal_w0, uniform_window_eta,
};
use dscsma::simulator::{
    replicate, simulate_baseline, simulate_pairs, simulate_stations, Replicated,
};
use dscsma::{FrameTimings, PartnerMap, ProtocolParams};
use dscsma_cli::{run_with_threads, Cli};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const SMALL_GRID_P: [f64; 4] = [0.0, 0.1, 0.3, 0.7];
const SIM_W0: [usize; 5] = [32, 64, 128, 256, 512];
const SIM_N: usize = 30;
const SIM_M: usize = 4;
const SIM_REPS: usize = 10;
const SIM_HORIZON: u64 = 1_000_000;

fn small_grid() -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for m in [2, 3] {
        for w0 in [2, 4] {
            for p in SMALL_GRID_P {
                out.push((m, w0, p));
            }
        }
    }
    out
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (m, w0, p) in small_grid() {
        let params = ProtocolParams::new(w0, m, 1).map_err(|e| e.to_string())?;
        let dist = stationary(&build_chain(&params, p).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let s = solve_summary(&params, p).map_err(|e| e.to_string())?;
        for (state, prob) in dist.iter() {
            worst = worst.max((s.state_prob(state) - prob).abs());
        }
    }
    let t = start.elapsed();
    verdict(
        worst < 1e-10 && within(t, Duration::from_secs(30)),
        format!(
            "max |analytic - oracle| = {worst:.2e} over 16 configs, {:.2} s",
            t.as_secs_f64()
        ),
    )
}

fn normalization_and_symmetry() -> Outcome {
    let (mut mass, mut dmass, mut sym): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (m, w0, p) in small_grid() {
        let params = ProtocolParams::new(w0, m, 1).map_err(|e| e.to_string())?;
        let s = solve_summary(&params, p).map_err(|e| e.to_string())?;
        let ds = solve_derivatives(&params, p, &s).map_err(|e| e.to_string())?;
        mass = mass.max((s.total() - 1.0).abs());
        dmass = dmass.max(ds.total().abs());
        for a in 0..m {
            for b in 0..m {
                let (wa, wb) = (params.window(a), params.window(b));
                let ab = s.block_states(a, b);
                let ba = s.block_states(b, a);
                for i in 0..wa {
                    for j in 0..wb {
                        sym = sym.max((ab[i * wb + j] - ba[j * wa + i]).abs());
                    }
                }
                sym = sym.max((s.pmn[(a, b)] - s.pmn[(b, a)]).abs());
                sym = sym.max((ds.dpmn[(a, b)] - ds.dpmn[(b, a)]).abs());
            }
        }
    }
    verdict(
        mass < 1e-10 && dmass < 1e-9 && sym <= 1e-14,
        format!("|sum P - 1| = {mass:.1e}, |sum dP/dp| = {dmass:.1e}, max asymmetry = {sym:.1e}"),
    )
}

fn gradient_check() -> Outcome {
    let mut worst: f64 = 0.0;
    for m in [2, 3] {
        for w0 in [2, 4] {
            let params = ProtocolParams::new(w0, m, 1).map_err(|e| e.to_string())?;
            let eta = |p: f64| solve_summary(&params, p).map(|s| s.eta);
            for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let s = solve_summary(&params, p).map_err(|e| e.to_string())?;
                let exact = solve_derivatives(&params, p, &s)
                    .map_err(|e| e.to_string())?
                    .deta;
                let central = |h: f64| -> Result<f64, String> {
                    Ok((eta(p + h).map_err(|e| e.to_string())?
                        - eta(p - h).map_err(|e| e.to_string())?)
                        / (2.0 * h))
                };
                // Richardson extrapolation of two central differences
                let h = 1e-3;
                let fd = (4.0 * central(h / 2.0)? - central(h)?) / 3.0;
                worst = worst.max(((exact - fd) / fd).abs());
            }
        }
    }
    verdict(
        worst < 1e-6,
        format!("max relative error {worst:.2e} over 20 points"),
    )
}

fn fixed_point() -> Outcome {
    let start = Instant::now();
    let (mut gap, mut resid): (f64, f64) = (0.0, 0.0);
    for n in [2, 5, 10, 30] {
        for w0 in [16, 32, 64, 128] {
            let params = ProtocolParams::new(w0, 4, n).map_err(|e| e.to_string())?;
            let newton = newton_collision_prob(&params, 1e-12, 100).map_err(|e| e.to_string())?;
            let bisect = bisect_collision_prob(&params, 1e-13).map_err(|e| e.to_string())?;
            gap = gap.max((newton - bisect).abs());
            for p in [newton, bisect] {
                resid = resid.max(
                    collision_residual(&params, p)
                        .map_err(|e| e.to_string())?
                        .abs(),
                );
            }
        }
    }
    let single = ProtocolParams::new(32, 4, 1).map_err(|e| e.to_string())?;
    let p1 = solve_collision_prob(&single).map_err(|e| e.to_string())?;
    let p1n = newton_collision_prob(&single, 1e-12, 100).map_err(|e| e.to_string())?;
    let t = start.elapsed();
    verdict(
        gap < 1e-9 && resid < 1e-9 && p1 == 0.0 && p1n == 0.0 && within(t, Duration::from_secs(120)),
        format!(
            "max |newton - bisection| = {gap:.1e}, max residual = {resid:.1e}, N=1 gives p = {p1}, {:.2} s",
            t.as_secs_f64()
        ),
    )
}

struct SimPoint {
    w0: usize,
    model: OperatingPoint,
    ds: Replicated,
    base_c: f64,
    base: Replicated,
}

fn sim_points(timings: &FrameTimings) -> Result<Vec<SimPoint>, String> {
    SIM_W0
        .iter()
        .map(|&w0| {
            let params = ProtocolParams::new(w0, SIM_M, SIM_N).map_err(|e| e.to_string())?;
            let model = operating_point(&params, timings).map_err(|e| e.to_string())?;
            let base_c = baseline_csma_throughput(SIM_N, w0, SIM_M, timings)
                .map_err(|e| e.to_string())?
                .c;
            let ds = replicate(
                |seed| simulate_pairs(&params, timings, SIM_HORIZON, seed),
                SIM_REPS,
                1,
            )
            .map_err(|e| e.to_string())?;
            let base = replicate(
                |seed| {
                    simulate_baseline(SIM_N, w0, SIM_M, timings, SIM_HORIZON, seed)
                        .expect("valid baseline")
                },
                SIM_REPS,
                1,
            )
            .map_err(|e| e.to_string())?;
            Ok(SimPoint {
                w0,
                model,
                ds,
                base_c,
                base,
            })
        })
        .collect()
}

fn model_vs_simulation(points: &[SimPoint], elapsed: Duration) -> Outcome {
    let mut ok = within(elapsed, Duration::from_secs(600));
    let mut cells = Vec::new();
    for pt in points {
        let agg = &pt.ds.aggregate;
        let ci = agg.ci95.expect("replicated");
        let rel_p = (agg.collision_prob_hat - pt.model.p).abs() / pt.model.p;
        let rel_c = (agg.throughput_hat - pt.model.c).abs() / pt.model.c;
        // 3 sigma of the replication mean; ci95 is 1.96 sigma
        let z_p = (pt.model.p - agg.collision_prob_hat) / (ci.collision_prob / 1.96);
        let z_c = (pt.model.c - agg.throughput_hat) / (ci.throughput / 1.96);
        let band = rel_p < 0.05 && rel_c < 0.05;
        let inside = z_p.abs() <= 3.0 && z_c.abs() <= 3.0;
        ok &= band && inside;
        cells.push(format!(
            "W0={}: dp={:.2}% dC={:.2}% z_p={:+.1} z_C={:+.1}{}",
            pt.w0,
            100.0 * rel_p,
            100.0 * rel_c,
            z_p,
            z_c,
            if band && inside {
                ""
            } else if band {
                " (outside 3 sigma)"
            } else {
                " (outside 5%)"
            }
        ));
    }
    cells.push(format!("{:.1} s", elapsed.as_secs_f64()));
    verdict(ok, cells.join("; "))
}

fn superiority(points: &[SimPoint]) -> Outcome {
    let mut ok = true;
    let mut cells = Vec::new();
    for pt in points {
        let ds_sim = pt.ds.aggregate.throughput_hat;
        let base_sim = pt.base.aggregate.throughput_hat;
        let better = pt.model.c > pt.base_c && ds_sim > base_sim;
        ok &= better;
        cells.push(format!(
            "W0={}: DS {:.4}/{:.4} vs CSMA {:.4}/{:.4}{}",
            pt.w0,
            pt.model.c,
            ds_sim,
            pt.base_c,
            base_sim,
            if better { "" } else { " (not higher)" }
        ));
    }
    verdict(ok, format!("analytic/simulated: {}", cells.join("; ")))
}

/// The closed-form relaxed window, written out independently.
fn eq31(n: usize, timings: &FrameTimings) -> f64 {
    let gamma = (timings.collision_time() as f64 / timings.slot as f64).sqrt();
    let x = n as f64 * gamma;
    let r2 = 2f64.sqrt();
    3.0 * x / (2.0 * r2) - 0.75 + (9.0 * x * x / 8.0 - 21.0 * r2 * x / 8.0 + 1.0 / 16.0).sqrt()
}

fn table_w0(timings: &FrameTimings) -> Outcome {
    let start = Instant::now();
    let table = [(20, 128), (50, 256), (100, 512), (200, 1024), (500, 4096)];
    let mut ok = true;
    let mut cells = Vec::new();
    for (n, want) in table {
        let c = optimal_w0(n, 4, timings).map_err(|e| e.to_string())?;
        let relaxed = c.relaxed.ok_or("closed form unusable")?;
        let relaxed_ok = (relaxed - eq31(n, timings)).abs() < 0.5;
        ok &= relaxed_ok && c.chosen == want;
        cells.push(format!(
            "N={n}: {}{} (relaxed {relaxed:.2})",
            c.chosen,
            if c.chosen == want {
                String::new()
            } else {
                format!(" != {want}")
            }
        ));
    }
    let spot = (eq31(20, timings) - 99.3).abs() < 0.05 && (eq31(100, timings) - 506.6).abs() < 0.05;
    ok &= spot;
    let t = start.elapsed();
    ok &= within(t, Duration::from_secs(120));
    cells.push(format!("spot values {}", if spot { "ok" } else { "off" }));
    cells.push(format!("{:.2} s", t.as_secs_f64()));
    verdict(ok, cells.join("; "))
}

fn table_n(timings: &FrameTimings) -> Outcome {
    let table = [(32, 4), (64, 9), (128, 17), (256, 35), (1024, 138)];
    let tc_over_slot = timings.collision_time() as f64 / timings.slot as f64;
    let mut ok = true;
    let mut cells = Vec::new();
    for (w0, want) in table {
        let c = optimal_n(w0, 4, timings).map_err(|e| e.to_string())?;
        let eta = uniform_window_eta(w0);
        let a = (tc_over_slot - 1.0) * eta * eta / 2.0;
        let b = eta + eta * eta / 2.0;
        let root = (-b + (b * b + 4.0 * a).sqrt()) / (2.0 * a);
        let root_ok = (root - c.relaxed).abs() < 1e-6;
        let th = |n: usize| -> Result<f64, String> {
            let params = ProtocolParams::new(w0, 4, n).map_err(|e| e.to_string())?;
            Ok(operating_point(&params, timings)
                .map_err(|e| e.to_string())?
                .c)
        };
        let here = th(c.chosen)?;
        let argmax = here >= th(c.chosen + 1)? && (c.chosen == 1 || here >= th(c.chosen - 1)?);
        ok &= root_ok && argmax;
        cells.push(format!(
            "W0={w0}: N*={} root {:.4} table {want} {}",
            c.chosen,
            c.relaxed,
            if c.chosen == want {
                "MATCH"
            } else {
                "MISMATCH"
            }
        ));
    }
    verdict(ok, cells.join("; "))
}

fn random_map(rng: &mut ChaCha8Rng) -> PartnerMap {
    let n = rng.gen_range(2..=6);
    let mut edges = Vec::new();
    for i in 1..=n {
        for j in i + 1..=n {
            if rng.gen_bool(0.6) {
                edges.push((i, j));
            }
        }
    }
    PartnerMap::from_edges(n, &edges).expect("valid edges")
}

fn partner_optimizer() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut violations, mut optimal, mut max_gap, mut total_gap) =
        (0usize, 0usize, 0usize, 0usize);
    for _ in 0..200 {
        let s = random_map(&mut rng);
        let target = 2 * rng.gen_range(0..=s.n_pairs());
        let g = greedy_partner_map(&s, target).map_err(|e| e.to_string())?;
        let mut q = s.q();
        for st in &g.steps {
            if st.q_before != q || st.q_before - st.q_after != 2 * st.g_star - 2 {
                violations += 1;
            }
            q = st.q_after;
        }
        for m in &g.state.current_set {
            if !(m.is_symmetric() && m.dominated_by(&s) && m.n_entries() == target && m.q() == q) {
                violations += 1;
            }
        }
        let bf = brute_force_partner_map(&s, target).map_err(|e| e.to_string())?;
        let gap = g.state.q_value - bf.min_q;
        optimal += usize::from(gap == 0);
        max_gap = max_gap.max(gap);
        total_gap += gap;
    }
    let k3 = PartnerMap::from_edges(3, &[(1, 2), (1, 3), (2, 3)]).unwrap();
    let star4 = PartnerMap::from_edges(4, &[(1, 2), (1, 3), (1, 4)]).unwrap();
    let star6 = PartnerMap::from_edges(6, &[(1, 2), (1, 3), (1, 4), (1, 5), (1, 6)]).unwrap();
    let mut exact = true;
    for s in [&k3, &star4, &star6] {
        for keep in 0..=s.n_pairs() {
            let g = greedy_partner_map(s, 2 * keep).map_err(|e| e.to_string())?;
            let bf = brute_force_partner_map(s, 2 * keep).map_err(|e| e.to_string())?;
            exact &= g.state.q_value == bf.min_q;
        }
    }
    let t = start.elapsed();
    verdict(
        violations == 0 && exact && within(t, Duration::from_secs(60)),
        format!(
            "200 instances: {violations} constraint violations, greedy optimal on {optimal}, \
             gap vs brute force max {max_gap} mean {:.3}; K3/star exact: {exact}; {:.2} s",
            total_gap as f64 / 200.0,
            t.as_secs_f64()
        ),
    )
}

fn run_cli(args: &[&str], out: &Path, threads: usize) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut argv = vec!["dscsma"];
    argv.extend_from_slice(args);
    let out_str = out.to_str().ok_or("non-utf8 path")?;
    argv.extend(["--out", out_str]);
    let cli = Cli::try_parse_from(argv).map_err(|e| e.to_string())?;
    let written = run_with_threads(&cli, Some(threads)).map_err(|e| e.to_string())?;
    let mut files = written
        .iter()
        .map(|p| {
            let name = p
                .file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            std::fs::read(p)
                .map(|b| (name, b))
                .map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    files.sort();
    Ok(files)
}

fn determinism(timings: &FrameTimings) -> Outcome {
    let params = ProtocolParams::new(32, 4, 10).map_err(|e| e.to_string())?;
    let mut same = simulate_pairs(&params, timings, 200_000, 7)
        == simulate_pairs(&params, timings, 200_000, 7);
    let map = PartnerMap::from_edges(5, &[(1, 2), (1, 4), (2, 3), (3, 5), (4, 5)]).unwrap();
    let sp = ProtocolParams::new(16, 4, map.n_pairs()).map_err(|e| e.to_string())?;
    same &= simulate_stations(&map, &sp, timings, 200_000, 7, 0.2)
        == simulate_stations(&map, &sp, timings, 200_000, 7, 0.2);
    same &= simulate_baseline(10, 32, 4, timings, 200_000, 7)
        == simulate_baseline(10, 32, 4, timings, 200_000, 7);
    let rep = |_: ()| replicate(|s| simulate_pairs(&params, timings, 50_000, s), 4, 3);
    same &= rep(()).map_err(|e| e.to_string())? == rep(()).map_err(|e| e.to_string())?;

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs: [&[&str]; 4] = [
        &[
            "simulate",
            "--n",
            "6",
            "--w0",
            "16,64",
            "--reps",
            "3",
            "--horizon",
            "30000",
            "--seed",
            "11",
        ],
        &[
            "simulate",
            "--mode",
            "stations",
            "--w0",
            "32",
            "--reps",
            "2",
            "--horizon",
            "30000",
            "--refuse-prob",
            "0.1",
        ],
        &[
            "compare",
            "--n",
            "8",
            "--w0",
            "32,128",
            "--reps",
            "2",
            "--horizon",
            "30000",
        ],
        &["optimize-map", "--target", "6"],
    ];
    let mut cli_same = true;
    for (k, args) in runs.iter().enumerate() {
        let a = run_cli(args, &tmp.path().join(format!("{k}a")), 1)?;
        let b = run_cli(args, &tmp.path().join(format!("{k}b")), 3)?;
        cli_same &= a == b;
    }
    verdict(
        same && cli_same,
        format!("library runs identical: {same}; CLI outputs byte-identical across runs and thread counts: {cli_same}"),
    )
}

fn main() {
    let timings = FrameTimings::default();
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "oracle equivalence", oracle_equivalence()),
        (
            2,
            "normalization and symmetry",
            normalization_and_symmetry(),
        ),
        (3, "gradient check", gradient_check()),
        (4, "fixed point", fixed_point()),
    ];
    let start = Instant::now();
    let sims = sim_points(&timings);
    let elapsed = start.elapsed();
    match &sims {
        Ok(points) => {
            results.push((
                5,
                "model vs simulation",
                model_vs_simulation(points, elapsed),
            ));
            results.push((
                6,
                "throughput above conventional CSMA/CA",
                superiority(points),
            ));
        }
        Err(e) => {
            results.push((5, "model vs simulation", Err(e.clone())));
            results.push((6, "throughput above conventional CSMA/CA", Err(e.clone())));
        }
    }
    results.push((7, "optimal W0 table row", table_w0(&timings)));
    results.push((8, "optimal N table row", table_n(&timings)));
    results.push((9, "partner-map optimizer", partner_optimizer()));
    results.push((10, "determinism", determinism(&timings)));

    let mut failed = 0;
    for (k, name, r) in &results {
        let (tag, detail) = match r {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {k:>2} {tag}  {name}: {detail}");
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
