//! Oracles shared by the integration tests. Nothing here calls the library's
//! information measures.
#![allow(dead_code)]

pub fn h(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum()
}

pub fn h2(x: f64) -> f64 {
    h(&[x, 1.0 - x])
}

/// Marginal of a row-major table (last variable fastest) onto `keep`.
pub fn marg(joint: &[f64], sizes: &[usize], keep: &[usize]) -> Vec<f64> {
    let out_len: usize = keep.iter().map(|&k| sizes[k]).product();
    let mut out = vec![0.0; out_len];
    let mut digits = vec![0usize; sizes.len()];
    for &p in joint {
        let mut idx = 0;
        for &k in keep {
            idx = idx * sizes[k] + digits[k];
        }
        out[idx] += p;
        for d in (0..sizes.len()).rev() {
            digits[d] += 1;
            if digits[d] < sizes[d] {
                break;
            }
            digits[d] = 0;
        }
    }
    out
}

/// `I(A;B|C)` from four marginal entropies.
pub fn cmi(joint: &[f64], sizes: &[usize], a: &[usize], b: &[usize], c: &[usize]) -> f64 {
    let cat = |x: &[usize], y: &[usize]| -> Vec<usize> { x.iter().chain(y).copied().collect() };
    let hs = |s: &[usize]| if s.is_empty() { 0.0 } else { h(&marg(joint, sizes, s)) };
    hs(&cat(a, c)) + hs(&cat(b, c)) - hs(&cat(&cat(a, b), c)) - hs(c)
}

/// `I(U;AB)` for `q = w P0 + (1 - w) P1` with `P0` the product of
/// `Bern(a)` and `Bern(b)`; `w` is forced by `det(q - w P0) = 0`.
fn wyner_at(q: [f64; 4], a: f64, b: f64) -> Option<f64> {
    let p0 = [(1.0 - a) * (1.0 - b), (1.0 - a) * b, a * (1.0 - b), a * b];
    let det = q[0] * q[3] - q[1] * q[2];
    if det.abs() < 1e-15 {
        return Some(0.0);
    }
    let c = q[0] * p0[3] + q[3] * p0[0] - q[1] * p0[2] - q[2] * p0[1];
    if c.abs() < 1e-15 {
        return None;
    }
    let w = det / c;
    if !(w > 0.0 && w < 1.0) {
        return None;
    }
    let mut p1 = [0.0; 4];
    for i in 0..4 {
        p1[i] = (q[i] - w * p0[i]) / (1.0 - w);
        if p1[i] < -1e-12 {
            return None;
        }
        p1[i] = p1[i].max(0.0);
    }
    Some(h(&q) - w * h(&p0) - (1.0 - w) * h(&p1))
}

/// Wyner common information of a 2×2 pmf over binary auxiliaries: grid of
/// step `1/res` over the first component, then `zooms` refinements of the
/// best cell.
pub fn wyner_grid(q: [f64; 4], res: u32, zooms: usize) -> f64 {
    let mut best = (f64::INFINITY, 0.5, 0.5);
    let scan = |lo_a: f64, lo_b: f64, step: f64, n: u32, best: &mut (f64, f64, f64)| {
        for i in 0..=n {
            for j in 0..=n {
                let a = (lo_a + i as f64 * step).clamp(0.0, 1.0);
                let b = (lo_b + j as f64 * step).clamp(0.0, 1.0);
                if let Some(v) = wyner_at(q, a, b) {
                    if v < best.0 {
                        *best = (v, a, b);
                    }
                }
            }
        }
    };
    let mut step = 1.0 / res as f64;
    scan(0.0, 0.0, step, res, &mut best);
    for _ in 0..zooms {
        let window = 2.0 * step;
        step = 2.0 * window / res as f64;
        let (a, b) = (best.1, best.2);
        scan(a - window, b - window, step, res, &mut best);
    }
    best.0
}

/// Closed form for the doubly symmetric binary source with crossover `p`.
pub fn wyner_dsbs(p: f64) -> f64 {
    let a = (1.0 - (1.0 - 2.0 * p).sqrt()) / 2.0;
    1.0 + h2(p) - 2.0 * h2(a)
}

/// `Σ_x q(x) C_W(q(y1, y2 | x))` for binary `x`, `y1`, `y2`.
pub fn conditional_wyner(px: &[f64], rows: &[[f64; 4]]) -> f64 {
    px.iter().zip(rows).map(|(&p, &r)| p * wyner_grid(r, 32, 12)).sum()
}

pub fn dsbs(p: f64) -> [f64; 4] {
    [0.5 * (1.0 - p), 0.5 * p, 0.5 * p, 0.5 * (1.0 - p)]
}
