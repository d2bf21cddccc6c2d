//! Binary LDPC syndrome binning with sum-product decoding.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng::stream;

/// Sparse parity-check matrix with `m` checks over `n` bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ldpc {
    n: usize,
    m: usize,
    /// Bits of each check.
    checks: Vec<Vec<usize>>,
}

impl Ldpc {
    /// Random matrix with the given column weight (capped at `m`) and row
    /// weights as equal as possible. Duplicate entries within a column are
    /// repaired by swapping.
    pub fn new(n: usize, m: usize, column_weight: usize, seed: u64) -> Self {
        let w = column_weight.min(m);
        let mut checks = vec![Vec::new(); m];
        if w == 0 {
            return Ldpc { n, m, checks };
        }
        let mut rng = stream(seed, &[0x1d9c]);
        let mut sockets: Vec<usize> = (0..n * w).map(|i| i % m).collect();
        sockets.shuffle(&mut rng);
        let dup = |s: &[usize], c: usize| {
            let col = &s[c * w..(c + 1) * w];
            (0..w).any(|a| (a + 1..w).any(|b| col[a] == col[b]))
        };
        for c in 0..n {
            let mut tries = 0;
            while dup(&sockets, c) && tries < 1000 {
                let a = c * w + rng.gen_range(0..w);
                let b = rng.gen_range(0..n * w);
                sockets.swap(a, b);
                let other = b / w;
                if other != c && dup(&sockets, other) {
                    sockets.swap(a, b);
                }
                tries += 1;
            }
        }
        for c in 0..n {
            let mut rows: Vec<usize> = sockets[c * w..(c + 1) * w].to_vec();
            rows.sort_unstable();
            rows.dedup();
            for r in rows {
                checks[r].push(c);
            }
        }
        Ldpc { n, m, checks }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn syndrome(&self, bits: &[usize]) -> Vec<u32> {
        self.checks
            .iter()
            .map(|c| c.iter().map(|&v| bits[v] as u32).sum::<u32>() & 1)
            .collect()
    }

    /// Sum-product decoding of the sequence with syndrome `syndrome`, given
    /// prior log-likelihood ratios `ln p(0)/p(1)` per bit. Returns the hard
    /// decision after convergence or `max_iter` iterations.
    pub fn decode(&self, syndrome: &[u32], llr: &[f64], max_iter: usize) -> Vec<usize> {
        let hard = |t: &[f64]| t.iter().map(|&l| usize::from(l < 0.0)).collect::<Vec<_>>();
        let mut total = llr.to_vec();
        let mut bits = hard(&total);
        if self.syndrome(&bits) == syndrome {
            return bits;
        }
        // Edge messages, stored per check in the order of `checks`.
        let mut v2c: Vec<Vec<f64>> = self.checks.iter().map(|c| c.iter().map(|&v| llr[v]).collect()).collect();
        let mut c2v: Vec<Vec<f64>> = self.checks.iter().map(|c| vec![0.0; c.len()]).collect();
        const LIM: f64 = 1.0 - 1e-12;
        for _ in 0..max_iter {
            for (j, vars) in self.checks.iter().enumerate() {
                let sign = if syndrome[j] == 1 { -1.0 } else { 1.0 };
                let t: Vec<f64> = v2c[j].iter().map(|&m| (m / 2.0).tanh()).collect();
                for e in 0..vars.len() {
                    let prod: f64 = t.iter().enumerate().filter(|&(i, _)| i != e).map(|(_, x)| x).product();
                    c2v[j][e] = sign * 2.0 * prod.clamp(-LIM, LIM).atanh();
                }
            }
            total.copy_from_slice(llr);
            for (j, vars) in self.checks.iter().enumerate() {
                for (e, &v) in vars.iter().enumerate() {
                    total[v] += c2v[j][e];
                }
            }
            for (j, vars) in self.checks.iter().enumerate() {
                for (e, &v) in vars.iter().enumerate() {
                    v2c[j][e] = total[v] - c2v[j][e];
                }
            }
            bits = hard(&total);
            if self.syndrome(&bits) == syndrome {
                break;
            }
        }
        bits
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_weights_and_balance() {
        let h = Ldpc::new(64, 40, 3, 5);
        let mut col = vec![0; 64];
        for c in &h.checks {
            for &v in c {
                col[v] += 1;
            }
        }
        assert!(col.iter().all(|&w| w == 3), "{col:?}");
        let rows: Vec<usize> = h.checks.iter().map(Vec::len).collect();
        assert!(rows.iter().max().unwrap() - rows.iter().min().unwrap() <= 1);
    }

    #[test]
    fn decodes_with_strong_side_information() {
        let n = 128;
        let h = Ldpc::new(n, 96, 3, 11);
        let mut rng = stream(3, &[]);
        let x: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        // Side information flips about 3% of the bits.
        let p = 0.03f64;
        let y: Vec<usize> = x.iter().map(|&b| if rng.gen::<f64>() < p { 1 - b } else { b }).collect();
        let l = ((1.0 - p) / p).ln();
        let llr: Vec<f64> = y.iter().map(|&b| if b == 0 { l } else { -l }).collect();
        assert_eq!(h.decode(&h.syndrome(&x), &llr, 100), x);
    }
}
