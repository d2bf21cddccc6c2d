//! Layered soft-covering codebooks.
//!
//! For a base pmf over `(F_1..F_r, V, X)` and a conditioning sequence
//! `x_{1:n}`, layer `s` holds `N_1 ⋯ N_s` codewords; each is drawn symbol by
//! symbol from `q(f_s | f_{1:s-1}, x)` given its parent in layer `s - 1`.
//! The induced distribution averages `Π_k q(v_k | f_k, x_k)` over all leaf
//! codewords and is computed exactly; randomness enters only through the
//! codebook draw.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::info::l1;
use crate::dist::pmf::{checked_product, flat_index, JointPmf, Odometer, Variable};
use crate::dist::sequence::sequence_vars;
use crate::dist::mutual_info;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, sample_index, stream};

/// Enumeration limits for exact evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Caps {
    /// Leaf index tuples `Π N_s`.
    pub index_tuples: u64,
    /// `|V|^n`.
    pub v_sequences: u64,
    /// `|X|^n`.
    pub x_sequences: u64,
    /// Total inner-loop work, `|X|^n · Π N_s · |V|^n`.
    pub work: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            index_tuples: 1 << 16,
            v_sequences: 1 << 16,
            x_sequences: 1 << 12,
            work: 1 << 30,
        }
    }
}

/// Rows tolerance below which a `q(v | f, x)` row is treated as equal to
/// `q(v | x)`.
const SNAP_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug)]
struct Tables {
    f_sizes: Vec<usize>,
    v_size: usize,
    x_size: usize,
    px: Vec<f64>,
    /// Layer `s`: row `(chain_{s-1} · |X| + x)` over `f_s`.
    layer_rows: Vec<Vec<f64>>,
    /// Distinct `q(v | ·)` rows; row 0..|X| are `q(v | x)`.
    v_rows: Vec<Vec<f64>>,
    /// For `(chain_r · |X| + x)`, the index into `v_rows`.
    v_row_of: Vec<u32>,
}

/// Parameters of one soft-covering experiment.
#[derive(Clone, Debug)]
pub struct SoftcoverSpec {
    base: JointPmf,
    layers: Vec<String>,
    v_vars: Vec<String>,
    x_vars: Vec<String>,
    rates: Vec<f64>,
    n: usize,
    caps: Caps,
    counts: Vec<usize>,
    tables: Tables,
}

pub(crate) fn normalize_rows(table: &mut [f64], width: usize) {
    for row in table.chunks_mut(width) {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|p| *p /= s);
        } else {
            row.iter_mut().for_each(|p| *p = 1.0 / width as f64);
        }
    }
}

impl SoftcoverSpec {
    pub fn new(
        base: &JointPmf,
        layers: &[&str],
        v_vars: &[&str],
        x_vars: &[&str],
        rates: &[f64],
        n: usize,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Argument("at least one codebook layer is required".into()));
        }
        if v_vars.is_empty() {
            return Err(Error::Argument("v_vars must be nonempty".into()));
        }
        let mut order: Vec<&str> = layers.to_vec();
        order.extend(v_vars);
        order.extend(x_vars);
        if order.len() != base.vars().len() {
            return Err(Error::Shape(
                "base pmf must contain exactly the layer, v and x variables".into(),
            ));
        }
        let base = base.reorder(&order)?;
        let sizes = base.sizes();
        let r = layers.len();
        let f_sizes = sizes[..r].to_vec();
        let v_size: usize = sizes[r..r + v_vars.len()].iter().product();
        let x_size: usize = sizes[r + v_vars.len()..].iter().product();
        let chain_size = checked_product(f_sizes.iter().copied())
            .filter(|&c| c.saturating_mul(x_size) <= u32::MAX as usize)
            .ok_or_else(|| Error::resource("layer alphabet product", u128::MAX, u32::MAX as u128))?;

        let f_idx: Vec<usize> = (0..r).collect();
        let v_idx: Vec<usize> = (r..r + v_vars.len()).collect();
        let x_idx: Vec<usize> = (r + v_vars.len()..sizes.len()).collect();
        let cat = |parts: &[&[usize]]| parts.concat();

        let px = if x_idx.is_empty() { vec![1.0] } else { base.project(&x_idx) };
        let layer_rows = (0..r)
            .map(|s| {
                let mut t = base.project(&cat(&[&f_idx[..s], &x_idx, &[s]]));
                normalize_rows(&mut t, f_sizes[s]);
                t
            })
            .collect();

        let mut v_given_x = base.project(&cat(&[&x_idx, &v_idx]));
        normalize_rows(&mut v_given_x, v_size);
        let mut v_rows: Vec<Vec<f64>> = v_given_x.chunks(v_size).map(<[f64]>::to_vec).collect();
        let joint = base.project(&cat(&[&f_idx, &x_idx, &v_idx]));
        let mut v_row_of = Vec::with_capacity(chain_size * x_size);
        for (i, row) in joint.chunks(v_size).enumerate() {
            let x = i % x_size;
            let mass: f64 = row.iter().sum();
            let id = if mass <= 0.0 {
                x
            } else {
                let cond: Vec<f64> = row.iter().map(|p| p / mass).collect();
                if cond.iter().zip(&v_rows[x]).all(|(a, b)| (a - b).abs() <= SNAP_TOLERANCE) {
                    x
                } else {
                    v_rows.push(cond);
                    v_rows.len() - 1
                }
            };
            v_row_of.push(id as u32);
        }

        let tables = Tables {
            f_sizes,
            v_size,
            x_size,
            px,
            layer_rows,
            v_rows,
            v_row_of,
        };
        let mut spec = SoftcoverSpec {
            base,
            layers: layers.iter().map(|s| s.to_string()).collect(),
            v_vars: v_vars.iter().map(|s| s.to_string()).collect(),
            x_vars: x_vars.iter().map(|s| s.to_string()).collect(),
            rates: Vec::new(),
            n: 0,
            caps: Caps::default(),
            counts: Vec::new(),
            tables,
        };
        spec.set(rates.to_vec(), n)?;
        Ok(spec)
    }

    fn set(&mut self, rates: Vec<f64>, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::Argument("block length must be positive".into()));
        }
        if rates.len() != self.layers.len() {
            return Err(Error::Argument(format!(
                "{} rates given for {} layers",
                rates.len(),
                self.layers.len()
            )));
        }
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Argument("rates must be finite and nonnegative".into()));
        }
        let counts = rates
            .iter()
            .map(|&r| {
                let e = n as f64 * r;
                if e > 62.0 {
                    return Err(Error::resource("codewords in one layer", u128::MAX, self.caps.index_tuples as u128));
                }
                Ok((e.exp2().round() as usize).max(1))
            })
            .collect::<Result<Vec<_>>>()?;
        self.rates = rates;
        self.n = n;
        self.counts = counts;
        self.check_caps()
    }

    fn check_caps(&self) -> Result<()> {
        let pow = |b: usize| (b as u128).checked_pow(self.n as u32).unwrap_or(u128::MAX);
        let tuples = self.counts.iter().fold(1u128, |a, &c| a.saturating_mul(c as u128));
        let vs = pow(self.tables.v_size);
        let xs = pow(self.tables.x_size);
        let checks = [
            ("codebook index tuples", tuples, self.caps.index_tuples),
            ("V sequences", vs, self.caps.v_sequences),
            ("X sequences", xs, self.caps.x_sequences),
            ("soft-covering work", xs.saturating_mul(tuples).saturating_mul(vs), self.caps.work),
        ];
        for (what, size, cap) in checks {
            if size > cap as u128 {
                return Err(Error::resource(what, size, cap as u128));
            }
        }
        Ok(())
    }

    pub fn with_caps(mut self, caps: Caps) -> Result<Self> {
        self.caps = caps;
        self.check_caps()?;
        Ok(self)
    }

    /// Same base and variables with new rates and block length.
    pub fn with_params(&self, rates: &[f64], n: usize) -> Result<Self> {
        let mut out = self.clone();
        out.set(rates.to_vec(), n)?;
        Ok(out)
    }

    /// Base pmf, reordered to layers, then V, then X.
    pub fn base(&self) -> &JointPmf {
        &self.base
    }

    pub fn layers(&self) -> &[String] {
        &self.layers
    }

    pub fn v_vars(&self) -> &[String] {
        &self.v_vars
    }

    pub fn x_vars(&self) -> &[String] {
        &self.x_vars
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn r(&self) -> usize {
        self.layers.len()
    }

    /// `N_s = max(1, round(2^{n R'_s}))`.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// `log2(N_s) / n`.
    pub fn effective_rates(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| (c as f64).log2() / self.n as f64).collect()
    }

    /// Size of the combined V alphabet (product over `v_vars`).
    pub fn v_size(&self) -> usize {
        self.tables.v_size
    }

    pub fn x_size(&self) -> usize {
        self.tables.x_size
    }

    pub fn layer_size(&self, s: usize) -> usize {
        self.tables.f_sizes[s]
    }

    /// Single-letter pmf of the combined X index.
    pub fn x_marginal(&self) -> &[f64] {
        &self.tables.px
    }

    /// Single-letter `q(v | x)` row for a combined X index.
    pub fn v_given_x(&self, x: usize) -> &[f64] {
        &self.tables.v_rows[x]
    }

    /// Variables of V sequences, position-major, in the layout of
    /// [`induced_distribution`].
    pub fn v_sequence_vars(&self) -> Vec<Variable> {
        let r = self.r();
        sequence_vars(&self.base.vars()[r..r + self.v_vars.len()], self.n)
    }

    pub fn x_sequence_prob(&self, x_seq: &[usize]) -> f64 {
        x_seq.iter().map(|&x| self.tables.px[x]).product()
    }

    fn check_x_seq(&self, x_seq: &[usize]) -> Result<()> {
        if x_seq.len() != self.n {
            return Err(Error::Argument(format!(
                "x sequence has length {}, expected {}",
                x_seq.len(),
                self.n
            )));
        }
        if let Some(&bad) = x_seq.iter().find(|&&x| x >= self.tables.x_size) {
            return Err(Error::Argument(format!("x symbol {bad} outside the X alphabet")));
        }
        Ok(())
    }
}

/// Codewords of every layer for one x sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayeredCodebook {
    pub x_seq: Vec<usize>,
    pub seed: u64,
    counts: Vec<usize>,
    n: usize,
    /// Layer `s`: codeword `t` occupies `[t·n, (t+1)·n)`; the parent of `t`
    /// is `t / N_s`.
    symbols: Vec<Vec<u32>>,
    /// Joint layer index `(f_1..f_r)` of each leaf codeword, per position.
    leaf_chain: Vec<u32>,
}

impl LayeredCodebook {
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn layer_len(&self, s: usize) -> usize {
        self.symbols[s].len() / self.n
    }

    /// Codeword of layer `s` (0-based) at flattened index-prefix `t`.
    pub fn codeword(&self, s: usize, t: usize) -> &[u32] {
        &self.symbols[s][t * self.n..(t + 1) * self.n]
    }

    /// Flattened index of the prefix `(t_1..t_s)` in layer `s = prefix.len() - 1`.
    pub fn prefix_index(&self, prefix: &[usize]) -> usize {
        flat_index(&self.counts[..prefix.len()], prefix)
    }

    pub(crate) fn leaf_chain(&self, t: usize) -> &[u32] {
        &self.leaf_chain[t * self.n..(t + 1) * self.n]
    }
}

/// Seed of the codebook for x-sequence number `x_index` in replicate `replicate`.
pub fn codebook_seed(master: u64, replicate: u64, x_index: u64) -> u64 {
    derive_seed(master, &[replicate, x_index])
}

pub fn build_codebook(spec: &SoftcoverSpec, x_seq: &[usize], seed: u64) -> Result<LayeredCodebook> {
    spec.check_x_seq(x_seq)?;
    spec.check_caps()?;
    let n = spec.n;
    let t = &spec.tables;
    let mut prev_chain = vec![0u32; n];
    let mut prev_count = 1usize;
    let mut symbols = Vec::with_capacity(spec.r());
    for s in 0..spec.r() {
        let mut rng = stream(seed, &[s as u64]);
        let fs = t.f_sizes[s];
        let ns = spec.counts[s];
        let total = prev_count * ns;
        let mut syms = Vec::with_capacity(total * n);
        let mut chain = Vec::with_capacity(total * n);
        for idx in 0..total {
            let parent = idx / ns;
            for (k, &x) in x_seq.iter().enumerate() {
                let c = prev_chain[parent * n + k] as usize;
                let base = (c * t.x_size + x) * fs;
                let f = sample_index(&mut rng, &t.layer_rows[s][base..base + fs]);
                syms.push(f as u32);
                chain.push((c * fs + f) as u32);
            }
        }
        symbols.push(syms);
        prev_chain = chain;
        prev_count = total;
    }
    Ok(LayeredCodebook {
        x_seq: x_seq.to_vec(),
        seed,
        counts: spec.counts.clone(),
        n,
        symbols,
        leaf_chain: prev_chain,
    })
}

/// `out ← ⊗_k rows[k]`, position 1 slowest.
fn kron_into(rows: &[&[f64]], out: &mut Vec<f64>, scratch: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    for row in rows {
        scratch.clear();
        for &a in out.iter() {
            scratch.extend(row.iter().map(|&b| a * b));
        }
        std::mem::swap(out, scratch);
    }
}

/// Flat `q^n(v_{1:n} | x_{1:n})`.
pub(crate) fn target_probs(spec: &SoftcoverSpec, x_seq: &[usize]) -> Vec<f64> {
    let rows: Vec<&[f64]> = x_seq.iter().map(|&x| spec.tables.v_rows[x].as_slice()).collect();
    let (mut out, mut scratch) = (Vec::new(), Vec::new());
    kron_into(&rows, &mut out, &mut scratch);
    out
}

/// Flat `Q(v_{1:n} | x_{1:n})` for a codebook.
pub(crate) fn induced_probs(spec: &SoftcoverSpec, cb: &LayeredCodebook) -> Vec<f64> {
    let t = &spec.tables;
    let n = spec.n;
    let leaves = cb.leaf_chain.len() / n;
    // Leaves whose q(v | ·) rows coincide contribute identical terms.
    let mut keys: Vec<Vec<u32>> = (0..leaves)
        .map(|l| {
            cb.leaf_chain(l)
                .iter()
                .zip(&cb.x_seq)
                .map(|(&c, &x)| t.v_row_of[c as usize * t.x_size + x])
                .collect()
        })
        .collect();
    keys.sort_unstable();
    let total = leaves as f64;
    let len = t.v_size.pow(n as u32);
    let mut acc = vec![0.0; len];
    let (mut term, mut scratch) = (Vec::with_capacity(len), Vec::with_capacity(len));
    let mut i = 0;
    while i < keys.len() {
        let j = i + keys[i..].iter().take_while(|k| **k == keys[i]).count();
        let rows: Vec<&[f64]> = keys[i].iter().map(|&id| t.v_rows[id as usize].as_slice()).collect();
        kron_into(&rows, &mut term, &mut scratch);
        let w = (j - i) as f64 / total;
        for (a, b) in acc.iter_mut().zip(&term) {
            *a += w * b;
        }
        i = j;
    }
    acc
}

fn check_consistent(spec: &SoftcoverSpec, cb: &LayeredCodebook) -> Result<()> {
    if cb.counts != spec.counts || cb.n != spec.n || cb.symbols.len() != spec.r() {
        return Err(Error::Argument("codebook was not built for this spec".into()));
    }
    spec.check_x_seq(&cb.x_seq)
}

/// Exact `Q(· | x_seq)` over V sequences.
pub fn induced_distribution(cb: &LayeredCodebook, spec: &SoftcoverSpec) -> Result<JointPmf> {
    check_consistent(spec, cb)?;
    let q = induced_probs(spec, cb);
    let total: f64 = q.iter().sum();
    debug_assert!((total - 1.0).abs() < 1e-9, "induced distribution sums to {total}");
    Ok(JointPmf::from_parts_unchecked(spec.v_sequence_vars(), q))
}

/// `‖Q(·|x) − q^n(·|x)‖₁` for one codebook.
pub fn codebook_tv(spec: &SoftcoverSpec, cb: &LayeredCodebook) -> Result<f64> {
    check_consistent(spec, cb)?;
    Ok(l1(&induced_probs(spec, cb), &target_probs(spec, &cb.x_seq)))
}

/// Exact joint TV `Σ_x p(x) ‖Q(·|x) − q^n(·|x)‖₁` for one replicate, with
/// codebooks seeded by [`codebook_seed`].
pub fn replicate_tv(spec: &SoftcoverSpec, master: u64, replicate: u64) -> Result<f64> {
    spec.check_caps()?;
    let sizes = vec![spec.tables.x_size; spec.n];
    let mut odo = Odometer::new(&sizes);
    let mut tv = 0.0;
    let mut idx = 0u64;
    while let Some(x_seq) = odo.current() {
        let p = spec.x_sequence_prob(x_seq);
        if p > 0.0 {
            let cb = build_codebook(spec, x_seq, codebook_seed(master, replicate, idx))?;
            tv += p * l1(&induced_probs(spec, &cb), &target_probs(spec, x_seq));
        }
        idx += 1;
        odo.advance();
    }
    Ok(tv)
}

/// One row of a rate/block-length sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub n: usize,
    pub rates: Vec<f64>,
    pub counts: Vec<usize>,
    pub effective_rates: Vec<f64>,
    pub replicates: usize,
    pub mean_tv: f64,
    pub stderr_tv: f64,
    pub seed: u64,
    pub seconds: f64,
}

/// Mean and standard error of `values`, summed in order.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Mean exact TV over independent codebook replicates.
pub fn expected_tv_estimate(spec: &SoftcoverSpec, replicates: usize, master_seed: u64) -> Result<SweepRecord> {
    if replicates == 0 {
        return Err(Error::Argument("at least one replicate is required".into()));
    }
    let start = Instant::now();
    let tvs = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| replicate_tv(spec, master_seed, rep))
        .collect::<Result<Vec<f64>>>()?;
    let (mean_tv, stderr_tv) = mean_stderr(&tvs);
    Ok(SweepRecord {
        n: spec.n,
        rates: spec.rates.clone(),
        counts: spec.counts.clone(),
        effective_rates: spec.effective_rates(),
        replicates,
        mean_tv,
        stderr_tv,
        seed: master_seed,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Per-layer slack `Σ_{i≤s} R'_i − I(V; F_{1:s} | X)`.
pub fn check_rate_condition(spec: &SoftcoverSpec) -> Result<Vec<f64>> {
    let v: Vec<&str> = spec.v_vars.iter().map(String::as_str).collect();
    let x: Vec<&str> = spec.x_vars.iter().map(String::as_str).collect();
    let mut sum = 0.0;
    (0..spec.r())
        .map(|s| {
            sum += spec.rates[s];
            let f: Vec<&str> = spec.layers[..=s].iter().map(String::as_str).collect();
            Ok(sum - mutual_info(&spec.base, &v, &f, &x)?)
        })
        .collect()
}

/// Runs every `(rates, n)` cell, rates outer and `n` inner, with the same
/// master seed in each cell. A failing cell does not stop the sweep.
pub fn rate_sweep(
    spec: &SoftcoverSpec,
    rate_grid: &[Vec<f64>],
    ns: &[usize],
    replicates: usize,
    master_seed: u64,
) -> Vec<Result<SweepRecord>> {
    rate_grid
        .iter()
        .flat_map(|rates| ns.iter().map(move |&n| (rates, n)))
        .map(|(rates, n)| {
            let cell = spec.with_params(rates, n)?;
            expected_tv_estimate(&cell, replicates, master_seed)
        })
        .collect()
}

/// Writes sweep rows as CSV. `seconds` is left empty unless `timing` is set,
/// so that identical runs produce identical bytes.
pub fn write_sweep_csv<W: Write>(out: W, layers: usize, records: &[SweepRecord], timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["n".to_string()];
    header.extend((1..=layers).map(|s| format!("R'_{s}")));
    header.extend((1..=layers).map(|s| format!("N_{s}")));
    header.extend(["replicates", "mean_tv", "stderr_tv", "seed", "seconds", "version"].map(String::from));
    w.write_record(&header)?;
    for rec in records {
        let mut row = vec![rec.n.to_string()];
        row.extend(rec.rates.iter().map(|r| format!("{r:?}")));
        row.extend(rec.counts.iter().map(usize::to_string));
        row.push(rec.replicates.to_string());
        row.push(format!("{:?}", rec.mean_tv));
        row.push(format!("{:?}", rec.stderr_tv));
        row.push(rec.seed.to_string());
        row.push(if timing { format!("{:.3}", rec.seconds) } else { String::new() });
        row.push(crate::VERSION.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// X constant (absent), V = F uniform binary.
    fn copy_spec(rate: f64, n: usize) -> SoftcoverSpec {
        let base = JointPmf::from_fn(vec![Variable::binary("F"), Variable::binary("V")], |a| {
            if a[0] == a[1] { 0.5 } else { 0.0 }
        })
        .unwrap();
        SoftcoverSpec::new(&base, &["F"], &["V"], &[], &[rate], n).unwrap()
    }

    fn two_layer(n: usize, rates: [f64; 2]) -> SoftcoverSpec {
        let vars = ["F1", "F2", "V", "X"].map(Variable::binary).to_vec();
        let base = JointPmf::from_fn(vars, |a| {
            let px = [0.4, 0.6][a[3]];
            let f1 = if a[0] == a[3] { 0.7 } else { 0.3 };
            let f2 = if a[1] == a[0] { 0.8 } else { 0.2 };
            let v = if a[2] == (a[1] ^ a[3]) { 0.9 } else { 0.1 };
            px * f1 * f2 * v
        })
        .unwrap();
        SoftcoverSpec::new(&base, &["F1", "F2"], &["V"], &["X"], &rates, n).unwrap()
    }

    #[test]
    fn counts_round_and_floor_at_one() {
        let s = copy_spec(0.0, 4);
        assert_eq!(s.counts(), &[1]);
        let s = copy_spec(0.3, 3);
        assert_eq!(s.counts(), &[2]); // 2^0.9 = 1.87
        assert_eq!(copy_spec(1.25, 8).counts(), &[1024]);
    }

    #[test]
    fn caps_are_enforced() {
        let s = copy_spec(1.0, 4);
        assert!(matches!(s.with_params(&[3.0], 8), Err(Error::Resource { .. })));
        let tight = Caps { v_sequences: 8, ..Caps::default() };
        assert!(matches!(s.with_caps(tight), Err(Error::Resource { .. })));
    }

    #[test]
    fn single_codeword_is_point_mass_for_copy_channel() {
        let s = copy_spec(0.0, 3);
        let cb = build_codebook(&s, &[0, 0, 0], 5).unwrap();
        assert_eq!(cb.layer_len(0), 1);
        let q = induced_distribution(&cb, &s).unwrap();
        let word = cb.codeword(0, 0);
        let at = flat_index(&[2, 2, 2], &word.iter().map(|&w| w as usize).collect::<Vec<_>>());
        assert_eq!(q.probs()[at], 1.0);
        assert_eq!(q.probs().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn deterministic_layer_forces_codewords() {
        let vars = ["F", "V", "X"].map(Variable::binary).to_vec();
        let base = JointPmf::from_fn(vars, |a| if a[0] == a[2] { 0.25 } else { 0.0 }).unwrap();
        let s = SoftcoverSpec::new(&base, &["F"], &["V"], &["X"], &[0.5], 4).unwrap();
        let cb = build_codebook(&s, &[1, 0, 0, 1], 9).unwrap();
        for t in 0..cb.layer_len(0) {
            assert_eq!(cb.codeword(0, t), &[1, 0, 0, 1]);
        }
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let s = two_layer(2, [0.5, 0.5]);
        assert_eq!(s.counts(), &[2, 2]);
        let first = build_codebook(&s, &[0, 1], 77).unwrap();
        for _ in 0..100 {
            assert_eq!(build_codebook(&s, &[0, 1], 77).unwrap(), first);
        }
        assert_eq!(first.layer_len(1), 4);
        assert_ne!(build_codebook(&s, &[0, 1], 78).unwrap().symbols, first.symbols);
    }

    #[test]
    fn induced_matches_hand_enumeration() {
        let vars = ["F", "V"].map(Variable::binary).to_vec();
        let chan = [[0.8, 0.2], [0.3, 0.7]];
        let base = JointPmf::from_fn(vars, |a| [0.5, 0.5][a[0]] * chan[a[0]][a[1]]).unwrap();
        let s = SoftcoverSpec::new(&base, &["F"], &["V"], &[], &[0.5], 2).unwrap();
        assert_eq!(s.counts(), &[2]);
        let cb = build_codebook(&s, &[0, 0], 3).unwrap();
        let q = induced_distribution(&cb, &s).unwrap();
        for v1 in 0..2 {
            for v2 in 0..2 {
                let mut expect = 0.0;
                for t in 0..2 {
                    let w = cb.codeword(0, t);
                    expect += 0.5 * chan[w[0] as usize][v1] * chan[w[1] as usize][v2];
                }
                assert!((q.prob(&[v1, v2]) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn independent_v_gives_exact_zero() {
        let vars = ["F", "V", "X"].map(Variable::binary).to_vec();
        let base = JointPmf::from_fn(vars, |a| {
            [0.3, 0.7][a[2]] * [[0.6, 0.4], [0.1, 0.9]][a[2]][a[0]] * [[0.2, 0.8], [0.55, 0.45]][a[2]][a[1]]
        })
        .unwrap();
        let s = SoftcoverSpec::new(&base, &["F"], &["V"], &["X"], &[0.7], 3).unwrap();
        let rec = expected_tv_estimate(&s, 4, 1).unwrap();
        assert_eq!(rec.mean_tv, 0.0);
        assert_eq!(rec.stderr_tv, 0.0);
    }

    #[test]
    fn normalization_of_random_codebooks() {
        let s = two_layer(3, [0.4, 0.7]);
        for seed in 0..20 {
            let cb = build_codebook(&s, &[1, 0, 1], seed).unwrap();
            let total: f64 = induced_probs(&s, &cb).iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rate_condition_slacks() {
        let s = copy_spec(1.5, 2);
        let slack = check_rate_condition(&s).unwrap();
        assert!((slack[0] - 0.5).abs() < 1e-12);
        let vars = ["F", "V"].map(Variable::binary).to_vec();
        let indep = JointPmf::uniform(vars).unwrap();
        let s = SoftcoverSpec::new(&indep, &["F"], &["V"], &[], &[0.3], 2).unwrap();
        assert!((check_rate_condition(&s).unwrap()[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn estimate_is_thread_independent() {
        let s = two_layer(2, [0.5, 1.0]);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| expected_tv_estimate(&s, 12, 42)).unwrap();
        let b = many.install(|| expected_tv_estimate(&s, 12, 42)).unwrap();
        assert_eq!(a.mean_tv.to_bits(), b.mean_tv.to_bits());
        assert_eq!(a.stderr_tv.to_bits(), b.stderr_tv.to_bits());
    }

    #[test]
    fn empty_sweep_writes_header_only() {
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, 2, &[], false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("n,R'_1,R'_2,N_1,N_2,replicates"));
    }

    #[test]
    fn sweep_orders_rates_outer() {
        let s = copy_spec(1.0, 2);
        let rows = rate_sweep(&s, &[vec![0.5], vec![1.0]], &[1, 2], 2, 3);
        let got: Vec<(f64, usize)> = rows.iter().map(|r| {
            let r = r.as_ref().unwrap();
            (r.rates[0], r.n)
        }).collect();
        assert_eq!(got, vec![(0.5, 1), (0.5, 2), (1.0, 1), (1.0, 2)]);
    }
}
