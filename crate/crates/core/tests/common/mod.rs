//! Test-only oracles shared by the integration suites. Nothing here calls
//! into the solver paths it is used to check.

#![allow(dead_code)]

use cascade_core::lp::LinearProgram;

/// Gaussian elimination with partial pivoting; `None` when (near) singular.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[p][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (dst, src) in a[r].iter_mut().zip(&pivot_row).skip(col) {
                *dst -= f * src;
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Minimum objective over all basic feasible points of an inequality-only
/// LP with nonnegative variables, or `None` when no vertex is feasible.
pub fn vertex_enumeration_optimum(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    let mut rows: Vec<(Vec<f64>, f64)> = (0..lp.ineq_lhs.rows())
        .map(|i| (lp.ineq_lhs.row(i).to_vec(), lp.ineq_rhs[i]))
        .collect();
    for j in 0..n {
        let mut r = vec![0.0; n];
        r[j] = -1.0;
        rows.push((r, 0.0));
    }
    let mut best: Option<f64> = None;
    for subset in combinations(rows.len(), n) {
        let a: Vec<Vec<f64>> = subset.iter().map(|&i| rows[i].0.clone()).collect();
        let b: Vec<f64> = subset.iter().map(|&i| rows[i].1).collect();
        let Some(z) = gauss_solve(a, b) else { continue };
        let feasible = rows.iter().all(|(r, rhs)| {
            let lhs: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            lhs <= rhs + 1e-9
        });
        if feasible {
            let obj: f64 = (0..n).map(|j| lp.objective[j] * z[j]).sum();
            best = Some(best.map_or(obj, |b: f64| b.min(obj)));
        }
    }
    best
}

use cascade_core::dynamics::OrthantSignature;
use cascade_core::network::FinancialNetwork;
use cascade_core::numerics::{DenseMatrix, DenseVector};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// `1 - sum_{j != i} c_ji`, computed column by column.
pub fn chat_oracle(c: &DenseMatrix) -> Vec<f64> {
    let n = c.rows();
    (0..n)
        .map(|i| 1.0 - (0..n).filter(|&j| j != i).map(|j| c[(j, i)]).sum::<f64>())
        .collect()
}

/// `v_i / c_hat_i - sum_l c_il v_l / c_hat_l`.
pub fn floor_oracle(c: &DenseMatrix, v_lo: &[f64]) -> Vec<f64> {
    let n = c.rows();
    let ch = chat_oracle(c);
    (0..n)
        .map(|i| v_lo[i] / ch[i] - (0..n).map(|l| c[(i, l)] * v_lo[l] / ch[l]).sum::<f64>())
        .collect()
}

/// `P(Binomial(delta, theta) <= k)` by summing over all `2^delta` outcomes.
pub fn binom_enumerate(delta: u32, theta: f64, k: i64) -> f64 {
    let mut total = 0.0;
    for mask in 0u32..(1 << delta) {
        let ones = mask.count_ones();
        if i64::from(ones) <= k {
            total += theta.powi(ones as i32) * (1.0 - theta).powi((delta - ones) as i32);
        }
    }
    total
}

pub fn random_signature<R: Rng>(rng: &mut R, n: usize) -> OrthantSignature {
    OrthantSignature::from_signs((0..n).map(|_| if rng.random_bool(0.4) { -1 } else { 1 }).collect())
}

/// Signature with at least one healthy and one failed company (`n >= 2`).
pub fn mixed_signature<R: Rng>(rng: &mut R, n: usize) -> OrthantSignature {
    loop {
        let sig = random_signature(rng, n);
        if sig.negative_count() > 0 && sig.negative_count() < n {
            return sig;
        }
    }
}

/// Cross-holdings with column sums below `col_cap`; `allow(i, l)` gates each link.
pub fn random_holdings<R: Rng>(
    rng: &mut R,
    n: usize,
    col_cap: f64,
    allow: impl Fn(usize, usize) -> bool,
) -> DenseMatrix {
    let cap = col_cap / n as f64;
    DenseMatrix::from_fn(n, n, |i, l| {
        if i != l && allow(i, l) && rng.random_bool(0.7) {
            rng.random_range(0.0..cap)
        } else {
            0.0
        }
    })
}

/// Network with identity asset holdings and prices `p`.
pub fn with_prices(c: DenseMatrix, p: Vec<f64>, v_lo: Vec<f64>, beta: f64) -> FinancialNetwork {
    let n = c.rows();
    let net = FinancialNetwork {
        c,
        d: DenseMatrix::identity(n),
        p: p.into(),
        v_lo: v_lo.into(),
        beta,
    };
    assert!(net.validate().is_empty(), "{:?}", net.validate());
    net
}

pub struct Instance {
    pub net: FinancialNetwork,
    pub sig: OrthantSignature,
    pub x0: DenseVector,
}

fn start_in<R: Rng>(rng: &mut R, sig: &OrthantSignature) -> DenseVector {
    DenseVector::from_fn(sig.len(), |i| {
        if sig.is_negative(i) {
            -rng.random_range(1e-3..1000.0)
        } else {
            rng.random_range(0.0..1000.0)
        }
    })
}

/// An orthant that is invariant by construction: no holdings across the
/// healthy/failed split, healthy rows invested above the floor and failed
/// rows strictly below the floor plus `beta`.
pub fn invariant_instance<R: Rng>(rng: &mut R, n: usize, col_cap: f64) -> Instance {
    let sig = random_signature(rng, n);
    let c = random_holdings(rng, n, col_cap, |i, l| sig.is_negative(i) == sig.is_negative(l));
    let v_lo: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..100.0)).collect();
    let q = floor_oracle(&c, &v_lo);
    let beta = 2.0 * q.iter().fold(0.0f64, |a, v| a.max(v.abs())) + rng.random_range(10.0..100.0);
    let p = (0..n)
        .map(|i| {
            if sig.is_negative(i) {
                rng.random_range(0.01..0.95) * (q[i] + beta)
            } else {
                q[i].max(0.0) + rng.random_range(0.1..50.0)
            }
        })
        .collect();
    let x0 = start_in(rng, &sig);
    Instance {
        net: with_prices(c, p, v_lo, beta),
        sig,
        x0,
    }
}

/// Failed companies hold only failed ones and stay failed; healthy ones may
/// hold anyone. Healthy investment is set from the box `x_bar`, returned
/// alongside, using the threshold `q_i + sum_l c_il x_bar_l / c_hat_l`.
pub fn bounded_failure_instance<R: Rng>(rng: &mut R, n: usize, horizon: usize) -> (Instance, Vec<f64>) {
    let sig = mixed_signature(rng, n);
    let c = random_holdings(rng, n, 0.9, |i, l| !sig.is_negative(i) || sig.is_negative(l));
    let v_lo: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..100.0)).collect();
    let q = floor_oracle(&c, &v_lo);
    let ch = chat_oracle(&c);
    let beta = 2.0 * q.iter().fold(0.0f64, |a, v| a.max(v.abs())) + rng.random_range(10.0..100.0);
    let mut p: Vec<f64> = (0..n)
        .map(|i| {
            if sig.is_negative(i) {
                rng.random_range(0.01..0.95) * (q[i] + beta)
            } else {
                1.0
            }
        })
        .collect();
    let x0 = start_in(rng, &sig);

    // The failed block does not see healthy rows, so its path is fixed now.
    let probe = with_prices(c.clone(), p.clone(), v_lo.clone(), beta);
    let mut x_bar = vec![0.0; n];
    let mut x = x0.clone();
    for _ in 0..=horizon {
        for l in sig.n_set() {
            x_bar[l] = f64::max(x_bar[l], -x[l]);
        }
        x = step_error_oracle(&probe, &x);
    }
    // Pad so the library stepper's rounding stays inside the box.
    for v in &mut x_bar {
        *v = *v * (1.0 + 1e-9) + 1e-9;
    }
    for i in sig.p_set() {
        let coupling: f64 = sig.n_set().iter().map(|&l| c[(i, l)] * x_bar[l] / ch[l]).sum();
        p[i] = (q[i] + coupling).max(0.0) + rng.random_range(0.1..20.0);
    }
    (
        Instance {
            net: with_prices(c, p, v_lo, beta),
            sig,
            x0,
        },
        x_bar,
    )
}

/// Error map written from the equity recursion: `V' = C V + D p - phi`,
/// `x = C_hat V - v_lo`.
pub fn step_error_oracle(net: &FinancialNetwork, x: &DenseVector) -> DenseVector {
    let n = net.n();
    let ch = chat_oracle(&net.c);
    let v: Vec<f64> = (0..n).map(|i| (x[i] + net.v_lo[i]) / ch[i]).collect();
    DenseVector::from_fn(n, |i| {
        let dp: f64 = (0..net.m()).map(|h| net.d[(i, h)] * net.p[h]).sum();
        let phi = if x[i] < 0.0 { net.beta } else { 0.0 };
        let cv: f64 = (0..n).map(|l| net.c[(i, l)] * v[l]).sum();
        ch[i] * (cv + dp - phi) - net.v_lo[i]
    })
}
