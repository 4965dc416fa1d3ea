//! Per-block kernels.
//!
//! Inside a stage block `(m, n)` both counters decrement together, so every
//! state is a sum along its diagonal of the mass injected into the block:
//!
//! `g(i, j) = rho(j+1) [j <= W_n-2] + delta(i+1) [i <= W_m-2] + u`
//!
//! where `rho` comes from collisions of the first counter (landing with the
//! second counter at `j`), `delta` symmetrically, and `u` is the uniform part.
//! All kernels below are O(W) with prefix sums.

/// Mass injected into one block, per slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Injection {
    /// `rho[l-1]` for `l = 1..W_n-1`.
    pub rho: Vec<f64>,
    /// `delta[l-1]` for `l = 1..W_m-1`.
    pub delta: Vec<f64>,
    /// Uniform density over the whole block.
    pub uniform: f64,
}

impl Injection {
    pub fn zero(wm: usize, wn: usize) -> Self {
        Self {
            rho: vec![0.0; wn - 1],
            delta: vec![0.0; wm - 1],
            uniform: 0.0,
        }
    }

    /// The same injection seen from the mirrored block `(n, m)`.
    pub fn transposed(&self) -> Self {
        Self {
            rho: self.delta.clone(),
            delta: self.rho.clone(),
            uniform: self.uniform,
        }
    }
}

fn prefix(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for &x in v {
        acc += x;
        out.push(acc);
    }
    out
}

/// Sum of `v[l-1]` for `l` in `a..=b`.
fn range(pre: &[f64], a: usize, b: usize) -> f64 {
    if a > b {
        0.0
    } else {
        pre[b] - pre[a - 1]
    }
}

/// `sum_{i < W} (min(i, l-1) + 1)`.
fn kappa(l: usize, w: usize) -> f64 {
    let (l, w) = (l as f64, w as f64);
    if l <= w {
        l * (l + 1.0) / 2.0 + (w - l) * l
    } else {
        w * (w + 1.0) / 2.0
    }
}

/// `sum_{i < a, j < b} (min(i, j) + 1)`.
pub fn min_plus_one_sum(a: usize, b: usize) -> f64 {
    let (big, small) = (a.max(b) as u128, a.min(b) as u128);
    let six = 3 * big * small * small + 3 * big * small + small - small * small * small;
    (six / 6) as f64
}

/// Evaluates states of a block from its injection.
pub struct Kernel {
    wm: usize,
    wn: usize,
    rho: Vec<f64>,
    delta: Vec<f64>,
    uniform: f64,
}

impl Kernel {
    pub fn new(wm: usize, wn: usize, inj: &Injection) -> Self {
        debug_assert_eq!(inj.rho.len(), wn - 1);
        debug_assert_eq!(inj.delta.len(), wm - 1);
        Self {
            wm,
            wn,
            rho: prefix(&inj.rho),
            delta: prefix(&inj.delta),
            uniform: inj.uniform,
        }
    }

    /// Stationary mass of `(i, j)` inside the block.
    pub fn state(&self, i: usize, j: usize) -> f64 {
        let k = (self.wm - 1 - i).min(self.wn - 1 - j);
        range(&self.rho, j + 1, (j + 1 + k).min(self.wn - 1))
            + range(&self.delta, i + 1, (i + 1 + k).min(self.wm - 1))
            + (k + 1) as f64 * self.uniform
    }

    /// `r(j) = state(0, j)` for `j = 1..W_n-1`.
    pub fn r(&self) -> Vec<f64> {
        (1..self.wn).map(|j| self.state(0, j)).collect()
    }

    /// `d(i) = state(i, 0)` for `i = 1..W_m-1`.
    pub fn d(&self) -> Vec<f64> {
        (1..self.wm).map(|i| self.state(i, 0)).collect()
    }

    pub fn eps(&self) -> f64 {
        self.state(0, 0)
    }

    /// Total block mass, in closed form.
    pub fn aggregate(&self) -> f64 {
        let rho: f64 = (1..self.wn)
            .map(|l| (self.rho[l] - self.rho[l - 1]) * kappa(l, self.wm))
            .sum();
        let delta: f64 = (1..self.wm)
            .map(|l| (self.delta[l] - self.delta[l - 1]) * kappa(l, self.wn))
            .sum();
        rho + delta + min_plus_one_sum(self.wm, self.wn) * self.uniform
    }

    /// Every state, row-major in `(i, j)`.
    pub fn states(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.wm * self.wn);
        for i in 0..self.wm {
            for j in 0..self.wn {
                out.push(self.state(i, j));
            }
        }
        out
    }
}

/// Solves `x(j) = a sum_{l > j} x(l) + b(j)`.
pub fn solve_suffix(a: f64, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; b.len()];
    let mut tail = 0.0;
    for k in (0..b.len()).rev() {
        x[k] = a * tail + b[k];
        tail += x[k];
    }
    x
}

/// Solves `x(j) = a [sum_{l > j} x(l) + sum_{l <= W-j} x(l)] + b(j)` for
/// `j = 1..W-1`, `b.len() = W - 1`, `W` even.
///
/// Differencing adjacent rows gives
/// `x(j) - x(j+1) = a [x(j+1) + x(W-j)] + b(j) - b(j+1)` and the last row
/// `x(W-1) = a x(1) + b(W-1)`. With `s = x(1)` as unknown both ends are
/// swept toward the middle in affine form and `s` is fixed where they meet.
/// Returns `None` when the system is singular.
pub fn solve_sigma(a: f64, b: &[f64]) -> Option<Vec<f64>> {
    let w = b.len() + 1;
    debug_assert!(w >= 2 && w % 2 == 0);
    if w == 2 {
        let den = 1.0 - a;
        return (den.abs() > f64::EPSILON).then(|| vec![b[0] / den]);
    }
    // x[k] = c0[k] + c1[k] s, k = 1..W-1 (slot 0 unused)
    let mut c0 = vec![0.0; w];
    let mut c1 = vec![0.0; w];
    c1[1] = 1.0;
    c0[w - 1] = b[w - 2];
    c1[w - 1] = a;
    let bb = |j: usize| b[j - 1];
    let half = w / 2;
    let mut mid_back = (0.0, 0.0);
    for j in 1..half {
        let cj = bb(j) - bb(j + 1);
        let f0 = (c0[j] - a * c0[w - j] - cj) / (1.0 + a);
        let f1 = (c1[j] - a * c1[w - j]) / (1.0 + a);
        let k = w - 1 - j;
        let ck = bb(k) - bb(k + 1);
        let g0 = (1.0 + a) * c0[w - j] + a * f0 + ck;
        let g1 = (1.0 + a) * c1[w - j] + a * f1;
        if j + 1 == half {
            c0[half] = f0;
            c1[half] = f1;
            mid_back = (g0, g1);
        } else {
            c0[j + 1] = f0;
            c1[j + 1] = f1;
            c0[k] = g0;
            c1[k] = g1;
        }
    }
    let den = c1[half] - mid_back.1;
    if !den.is_finite() || den.abs() < 1e-300 {
        return None;
    }
    let s = (mid_back.0 - c0[half]) / den;
    Some((1..w).map(|k| c0[k] + c1[k] * s).collect())
}

/// Dense 0/1 form of the kernel maps of a block.
///
/// With `rho` and `delta` the collision inflows (already divided by the
/// destination window and scaled by `p`):
/// `r = a_rr rho + a_dr delta + u_r e`, `d = a_rd rho + a_dd delta + u_d e`,
/// where `e` is the uniform density. `u` lists the uniform coefficient of
/// `(eps, d(1), .., d(W_m-1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrices {
    pub a_rr: Vec<Vec<u8>>,
    pub a_dr: Vec<Vec<u8>>,
    pub a_rd: Vec<Vec<u8>>,
    pub a_dd: Vec<Vec<u8>>,
    pub u: Vec<usize>,
    pub u_r: Vec<usize>,
}

impl TransitionMatrices {
    pub fn for_block(wm: usize, wn: usize) -> Self {
        let probe = |rho_l: Option<usize>, delta_l: Option<usize>| {
            let mut inj = Injection::zero(wm, wn);
            if let Some(l) = rho_l {
                inj.rho[l] = 1.0;
            }
            if let Some(l) = delta_l {
                inj.delta[l] = 1.0;
            }
            let k = Kernel::new(wm, wn, &inj);
            (k.r(), k.d())
        };
        let cols = |n_cols: usize, on_rho: bool, take_r: bool, n_rows: usize| {
            let mut mat = vec![vec![0u8; n_cols]; n_rows];
            for l in 0..n_cols {
                let (r, d) = if on_rho {
                    probe(Some(l), None)
                } else {
                    probe(None, Some(l))
                };
                let col = if take_r { r } else { d };
                for (row, v) in col.into_iter().enumerate() {
                    mat[row][l] = v as u8;
                }
            }
            mat
        };
        Self {
            a_rr: cols(wn - 1, true, true, wn - 1),
            a_dr: cols(wm - 1, false, true, wn - 1),
            a_rd: cols(wn - 1, true, false, wm - 1),
            a_dd: cols(wm - 1, false, false, wm - 1),
            u: (0..wm).map(|i| (wm - i).min(wn)).collect(),
            u_r: (0..wn).map(|j| (wn - j).min(wm)).collect(),
        }
    }

    /// Evaluates `(r, d)` by dense products.
    pub fn apply(&self, inj: &Injection) -> (Vec<f64>, Vec<f64>) {
        let mul = |mat: &[Vec<u8>], v: &[f64]| -> Vec<f64> {
            mat.iter()
                .map(|row| row.iter().zip(v).map(|(&a, &x)| a as f64 * x).sum())
                .collect()
        };
        let add = |x: Vec<f64>, y: Vec<f64>, u: &[usize]| -> Vec<f64> {
            x.iter()
                .zip(&y)
                .zip(u)
                .map(|((a, b), &c)| a + b + c as f64 * inj.uniform)
                .collect()
        };
        let r = add(
            mul(&self.a_rr, &inj.rho),
            mul(&self.a_dr, &inj.delta),
            &self.u_r[1..],
        );
        let d = add(
            mul(&self.a_rd, &inj.rho),
            mul(&self.a_dd, &inj.delta),
            &self.u[1..],
        );
        (r, d)
    }

    /// `A_sigma = a_rr + a_dr`, the self map of a square block whose
    /// inflows satisfy `rho = delta`.
    pub fn sigma(&self) -> Vec<Vec<u8>> {
        self.a_rr
            .iter()
            .zip(&self.a_dr)
            .map(|(x, y)| x.iter().zip(y).map(|(a, b)| a + b).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    fn random_injection(wm: usize, wn: usize, seed: &mut u64) -> Injection {
        Injection {
            rho: (1..wn).map(|_| lcg(seed)).collect(),
            delta: (1..wm).map(|_| lcg(seed)).collect(),
            uniform: lcg(seed),
        }
    }

    fn brute_state(wm: usize, wn: usize, inj: &Injection, i: usize, j: usize) -> f64 {
        let g = |a: usize, b: usize| {
            let mut v = inj.uniform;
            if b + 1 < wn {
                v += inj.rho[b];
            }
            if a + 1 < wm {
                v += inj.delta[a];
            }
            v
        };
        (0..)
            .take_while(|k| i + k < wm && j + k < wn)
            .map(|k| g(i + k, j + k))
            .sum()
    }

    #[test]
    fn kernel_matches_diagonal_sums() {
        let mut seed = 7;
        for (wm, wn) in [(2, 2), (4, 2), (2, 8), (8, 4), (16, 16)] {
            let inj = random_injection(wm, wn, &mut seed);
            let k = Kernel::new(wm, wn, &inj);
            let mut total = 0.0;
            for i in 0..wm {
                for j in 0..wn {
                    let b = brute_state(wm, wn, &inj, i, j);
                    assert!((k.state(i, j) - b).abs() < 1e-12);
                    total += b;
                }
            }
            assert!((k.aggregate() - total).abs() < 1e-10 * total);
        }
    }

    #[test]
    fn min_plus_one_closed_form() {
        for a in 1..12 {
            for b in 1..12 {
                let brute: usize = (0..a).flat_map(|i| (0..b).map(move |j| i.min(j) + 1)).sum();
                assert_eq!(min_plus_one_sum(a, b), brute as f64);
            }
        }
    }

    #[test]
    fn suffix_solver() {
        let b = [1.0, 2.0, 3.0, 4.0];
        let x = solve_suffix(0.25, &b);
        for j in 0..4 {
            let tail: f64 = x[j + 1..].iter().sum();
            assert!((x[j] - 0.25 * tail - b[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn sigma_solver_matches_definition() {
        let mut seed = 11;
        for w in [2usize, 4, 8, 16, 64] {
            for a in [0.0, 0.01, 0.2, 0.45] {
                let b: Vec<f64> = (1..w).map(|_| lcg(&mut seed)).collect();
                let x = solve_sigma(a, &b).unwrap();
                for j in 1..w {
                    let suffix: f64 = (j + 1..w).map(|l| x[l - 1]).sum();
                    let head: f64 = (1..=(w - j).min(w - 1)).map(|l| x[l - 1]).sum();
                    let rhs = a * (suffix + head) + b[j - 1];
                    assert!((x[j - 1] - rhs).abs() < 1e-12, "w={w} a={a} j={j}");
                }
            }
        }
    }

    #[test]
    fn matrices_are_binary_and_reproduce_kernel() {
        let mut seed = 3;
        for (wm, wn) in [(2, 2), (4, 2), (8, 4), (4, 4), (8, 8)] {
            let t = TransitionMatrices::for_block(wm, wn);
            for mat in [&t.a_rr, &t.a_dr, &t.a_rd, &t.a_dd] {
                assert!(mat.iter().flatten().all(|&v| v <= 1));
            }
            let inj = random_injection(wm, wn, &mut seed);
            let (r, d) = t.apply(&inj);
            let k = Kernel::new(wm, wn, &inj);
            for (x, y) in r.iter().zip(k.r()) {
                assert!((x - y).abs() < 1e-12);
            }
            for (x, y) in d.iter().zip(k.d()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rr_is_strict_suffix_when_first_window_dominates() {
        let t = TransitionMatrices::for_block(8, 4);
        for (j, row) in t.a_rr.iter().enumerate() {
            for (l, &v) in row.iter().enumerate() {
                assert_eq!(v, (l > j) as u8);
            }
        }
        assert_eq!(t.u, vec![4, 4, 4, 4, 4, 3, 2, 1]);
    }

    #[test]
    fn sigma_on_diagonal_block() {
        let t = TransitionMatrices::for_block(6, 6);
        let s = t.sigma();
        for j in 1..6 {
            for l in 1..6 {
                let want = (l > j) as u8 + (l <= 6 - j) as u8;
                assert_eq!(s[j - 1][l - 1], want);
            }
        }
    }
}
