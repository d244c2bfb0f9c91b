//! Pairwise O(N²) kernels shared by the GPL stepper and the MFG sweeps.
//!
//! Both kernels visit each unordered pair once. The per-pair work is done in
//! a branch-light first pass that writes into row buffers, so that it can be
//! vectorised; row reductions and column scatters follow in separate passes.

use crate::kappa::{Form, KappaLogit};

/// Reusable buffers sized to the grid.
#[derive(Debug, Clone, Default)]
pub(crate) struct Scratch {
    row: Vec<f64>,
    col: Vec<f64>,
    factor: Vec<f64>,
    col_prod: Vec<f64>,
    col_log: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            row: vec![0.0; n],
            col: vec![0.0; n],
            factor: vec![0.0; n],
            col_prod: vec![1.0; n],
            col_log: vec![0.0; n],
        }
    }

    fn fit(&mut self, n: usize) {
        if self.row.len() < n {
            *self = Self::new(n);
        }
    }
}

#[inline(always)]
fn lane_sum(v: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = v.chunks_exact(4);
    let rest = chunks.remainder();
    for c in chunks {
        for k in 0..4 {
            acc[k] += c[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for r in rest {
        s += r;
    }
    s
}

/// Products of blocks this long stay finite for factors up to 1e38.
const LOG_BLOCK: usize = 8;

/// `Σ ln v_k`, one logarithm per block of factors.
#[inline(always)]
fn log_sum(v: &[f64]) -> f64 {
    v.chunks(LOG_BLOCK).map(|c| c.iter().product::<f64>().ln()).sum()
}

/// `rhs_i = (1/N) Σ_j (a_ji m_j - a_ij m_i)` with
/// `a_ij = 1 / (1 + e_κ((u_i - u_j)/η))`, as net flows per unordered pair.
pub(crate) fn flux_rhs(kl: &KappaLogit, u: &[f64], m: &[f64], rhs: &mut [f64], scratch: &mut Scratch) {
    let inv_eta = 1.0 / kl.eta();
    match kl.form() {
        Form::Exp => flux_with(|y| Form::Exp.small_rate(y), inv_eta, u, m, rhs, scratch),
        Form::Half => flux_with(|y| Form::Half.small_rate(y), inv_eta, u, m, rhs, scratch),
        Form::One => flux_with(|y| Form::One.small_rate(y), inv_eta, u, m, rhs, scratch),
        g @ Form::General(_) => flux_with(|y| g.small_rate(y), inv_eta, u, m, rhs, scratch),
    }
}

#[inline(always)]
fn flux_with<S: Fn(f64) -> f64>(small: S, inv_eta: f64, u: &[f64], m: &[f64], rhs: &mut [f64], scratch: &mut Scratch) {
    let n = u.len();
    scratch.fit(n);
    rhs.fill(0.0);
    for i in 0..n {
        let (ui, mi) = (u[i], m[i]);
        let flow = &mut scratch.row[..n - i - 1];
        for ((f, &uj), &mj) in flow.iter_mut().zip(&u[i + 1..]).zip(&m[i + 1..]) {
            let z = (ui - uj) * inv_eta;
            let s = small(z.abs()) * (mi + mj);
            // net flow j -> i
            *f = if z >= 0.0 { mj - s } else { s - mi };
        }
        for (r, f) in rhs[i + 1..].iter_mut().zip(flow.iter()) {
            *r -= f;
        }
        rhs[i] += lane_sum(flow);
    }
    let inv_n = 1.0 / n as f64;
    for r in rhs.iter_mut() {
        *r *= inv_n;
    }
}

/// `sums_i = Σ_j [(Φ_i - Φ_j) a_ij + F(a_ij)]` with the logit control
/// `a_ij = 1 / (1 + e_κ((Φ_i - Φ_j)/η))`. Returns `false` if κ needs the
/// quadrature cost and `quadrature` is not set.
pub(crate) fn hamiltonian_sums(
    kl: &KappaLogit,
    quadrature: bool,
    phi: &[f64],
    sums: &mut [f64],
    scratch: &mut Scratch,
) -> bool {
    let eta = kl.eta();
    let inv_eta = 1.0 / eta;
    match kl.form() {
        // F/η = ln((1 + √(1+y²))/2) / 2
        Form::One => hamiltonian_with(
            |y| {
                let s = (y * y + 1.0).sqrt();
                (1.0 / (1.0 + y + s), 0.0, 0.5 * (1.0 + s))
            },
            0.5 * eta,
            inv_eta,
            phi,
            sums,
            scratch,
        ),
        // F/η = 1 - 2/√(y²+4)
        Form::Half => hamiltonian_with(
            |y| {
                let r = (y * y + 4.0).sqrt();
                let q = 0.5 * (y + r);
                (1.0 / (1.0 + q * q), eta * (1.0 - 2.0 / r), 1.0)
            },
            0.0,
            inv_eta,
            phi,
            sums,
            scratch,
        ),
        // F/η = -ln((1 + e^{-y})/2) - y/(1 + e^y)
        Form::Exp => hamiltonian_with(
            |y| {
                let t = (-y).exp();
                let small = t / (1.0 + t);
                (small, -eta * small * y, 0.5 * (1.0 + t))
            },
            -eta,
            inv_eta,
            phi,
            sums,
            scratch,
        ),
        g @ Form::General(_) => {
            if !quadrature {
                return false;
            }
            let kl = *kl;
            hamiltonian_with(
                |y| {
                    let small = g.small_rate(y);
                    (small, kl.cost_quadrature(small).unwrap_or(f64::NAN), 1.0)
                },
                0.0,
                inv_eta,
                phi,
                sums,
                scratch,
            )
        }
    }
    true
}

/// `terms(y)` returns the smaller rate of the pair, the part of `F` that
/// is computed directly, and a factor whose logarithm times `log_coef` is
/// the remaining part of `F`. Both parts are symmetric in the pair.
#[inline(always)]
fn hamiltonian_with<T: Fn(f64) -> (f64, f64, f64)>(
    terms: T,
    log_coef: f64,
    inv_eta: f64,
    phi: &[f64],
    sums: &mut [f64],
    scratch: &mut Scratch,
) {
    let n = phi.len();
    scratch.fit(n);
    let Scratch { row, col, factor, col_prod, col_log } = scratch;
    let with_logs = log_coef != 0.0;
    sums.fill(0.0);
    col_prod[..n].fill(1.0);
    col_log[..n].fill(0.0);
    for i in 0..n {
        let pi = phi[i];
        let len = n - i - 1;
        let (row, col, factor) = (&mut row[..len], &mut col[..len], &mut factor[..len]);
        for (((r, c), f), &pj) in row.iter_mut().zip(col.iter_mut()).zip(factor.iter_mut()).zip(&phi[i + 1..]) {
            let d = pi - pj;
            let (small, cost, fac) = terms(d.abs() * inv_eta);
            // a_ij = small when Φ_i >= Φ_j; the pair rates sum to one
            let (a_ij, a_ji) = if d >= 0.0 { (small, 1.0 - small) } else { (1.0 - small, small) };
            *r = d * a_ij + cost;
            *c = cost - d * a_ji;
            *f = fac;
        }
        for (s, c) in sums[i + 1..].iter_mut().zip(col.iter()) {
            *s += c;
        }
        sums[i] += lane_sum(row);
        if with_logs {
            for (p, f) in col_prod[i + 1..n].iter_mut().zip(factor.iter()) {
                *p *= f;
            }
            col_log[i] += log_sum(factor);
            if i % LOG_BLOCK == LOG_BLOCK - 1 {
                for (l, p) in col_log[i + 1..n].iter_mut().zip(col_prod[i + 1..n].iter_mut()) {
                    *l += p.ln();
                    *p = 1.0;
                }
            }
        }
    }
    if with_logs {
        for ((s, l), p) in sums.iter_mut().zip(&col_log[..n]).zip(&col_prod[..n]) {
            *s += log_coef * (l + p.ln());
        }
    }
}
