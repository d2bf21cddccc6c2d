//! Two-round Slepian-Wolf exchange: each node bins its sequence and the other
//! node decodes with its own sequence as side information.

use std::sync::Arc;

use crate::dist::pmf::{condition, flat_index, JointPmf};
use crate::dist::entropy;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

use super::ldpc::Ldpc;
use super::{MessageSpace, MsgDist, Node, ProtocolDef, SeqDist, Step, Strategy, View};

/// Largest `|X|^n` for which bins are hashed and decoded by exhaustive
/// maximum likelihood.
pub const ML_CAP: u128 = 1 << 20;

const BP_ITERATIONS: usize = 100;

/// How one direction is encoded and decoded.
#[derive(Clone, Debug)]
pub enum ExchangeDecoder {
    /// `H(X_i | X_j) = 0`: nothing is sent.
    Silent,
    /// The sequence itself, when the rate covers `log2 |X|`.
    Raw,
    /// Random hash bins; ML decoding inside the bin.
    Hash { bins: u64, members: Vec<Vec<u32>>, bin_of: Vec<u32> },
    /// Syndrome of a binary LDPC code; belief-propagation decoding.
    Ldpc(Ldpc),
}

#[derive(Clone, Debug)]
struct Direction {
    decoder: ExchangeDecoder,
    /// `ln p(x_i | x_j)`, row per `x_j`.
    log_cond: Vec<Vec<f64>>,
    size: usize,
}

impl Direction {
    fn encode(&self, seq: &[usize]) -> Option<Vec<u32>> {
        match &self.decoder {
            ExchangeDecoder::Silent => None,
            ExchangeDecoder::Raw => Some(seq.iter().map(|&s| s as u32).collect()),
            ExchangeDecoder::Hash { bin_of, .. } => {
                let sizes = vec![self.size; seq.len()];
                Some(vec![bin_of[flat_index(&sizes, seq)]])
            }
            ExchangeDecoder::Ldpc(h) => Some(h.syndrome(seq)),
        }
    }

    fn decode(&self, msg: Option<&[u32]>, side: &[usize]) -> Vec<usize> {
        let score = |cand: &[usize]| -> f64 { cand.iter().zip(side).map(|(&a, &b)| self.log_cond[b][a]).sum() };
        let per_position = || -> Vec<usize> {
            side.iter()
                .map(|&b| {
                    let row = &self.log_cond[b];
                    (0..row.len()).fold(0, |best, a| if row[a] > row[best] { a } else { best })
                })
                .collect()
        };
        match (&self.decoder, msg) {
            (ExchangeDecoder::Raw, Some(m)) => m.iter().map(|&d| d as usize).collect(),
            (ExchangeDecoder::Hash { members, .. }, Some(m)) => {
                let n = side.len();
                let sizes = vec![self.size; n];
                let mut cand = vec![0; n];
                let mut best: Option<(f64, Vec<usize>)> = None;
                for &flat in &members[m[0] as usize] {
                    crate::dist::pmf::unflatten(&sizes, flat as usize, &mut cand);
                    let s = score(&cand);
                    if best.as_ref().map_or(true, |(b, _)| s > *b) {
                        best = Some((s, cand.clone()));
                    }
                }
                best.map(|(_, c)| c).unwrap_or_else(per_position)
            }
            (ExchangeDecoder::Ldpc(h), Some(m)) => {
                let llr: Vec<f64> = side
                    .iter()
                    .map(|&b| (self.log_cond[b][0] - self.log_cond[b][1]).clamp(-30.0, 30.0))
                    .collect();
                h.decode(m, &llr, BP_ITERATIONS)
            }
            _ => per_position(),
        }
    }
}

struct ExchangeStrategy {
    n: usize,
    dirs: [Direction; 2],
    /// Message position of each direction, if it sends.
    slot: [Option<usize>; 2],
}

impl Strategy for ExchangeStrategy {
    fn message(&self, _step: usize, node: Node, view: &View) -> Result<MsgDist> {
        let d = &self.dirs[node.index()];
        Ok(MsgDist::Point(d.encode(&view.inputs[0]).unwrap_or_default()))
    }

    fn output(&self, node: Node, view: &View) -> Result<SeqDist> {
        // Node 1 decodes direction 2 and vice versa.
        let other = 1 - node.index();
        let d = &self.dirs[other];
        let msg = self.slot[other].map(|i| view.messages[i].as_slice());
        let est = d.decode(msg, &view.inputs[0]);
        debug_assert_eq!(est.len(), self.n);
        Ok(SeqDist::point(&est, d.size))
    }
}

fn hat(name: &str) -> String {
    format!("{name}hat")
}

/// Target of an exchange: `(X1, X2, X2hat = X2, X1hat = X1)`.
pub fn demand_pmf(source: &JointPmf, x1: &str, x2: &str) -> Result<JointPmf> {
    let m = source.marginal(&[x1, x2])?;
    let v1 = m.vars()[0].clone();
    let v2 = m.vars()[1].clone();
    let vars = vec![v1.clone(), v2.clone(), v2.renamed(hat(x2)), v1.renamed(hat(x1))];
    JointPmf::from_fn(vars, |a| if a[2] == a[1] && a[3] == a[0] { m.prob(&a[..2]) } else { 0.0 })
}

fn direction(source: &JointPmf, xi: &str, xj: &str, n: usize, rate: f64, seed: u64, dir: u64, force: bool) -> Result<Direction> {
    let h = entropy(source, &[xi], &[xj])?;
    let vi = source.var(xi)?.clone();
    let size = vi.size();
    let cond = condition(source, &[xi], &[xj])?;
    let log_cond: Vec<Vec<f64>> = cond
        .rows()
        .iter()
        .map(|r| r.iter().map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY }).collect())
        .collect();
    if h <= 1e-12 {
        return Ok(Direction { decoder: ExchangeDecoder::Silent, log_cond, size });
    }
    if !(rate > h) && !force {
        return Err(Error::Model(format!(
            "rate {rate} for `{xi}` does not exceed H({xi}|{xj}) = {h:.6}"
        )));
    }
    let seqs = (size as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    let decoder = if n as f64 * rate >= n as f64 * (size as f64).log2() {
        ExchangeDecoder::Raw
    } else if seqs <= ML_CAP {
        let bins = ((n as f64 * rate).exp2().floor() as u128).clamp(1, seqs) as u64;
        let bin_of: Vec<u32> = (0..seqs as u64)
            .map(|s| (derive_seed(seed, &[dir, s]) % bins) as u32)
            .collect();
        let mut members = vec![Vec::new(); bins as usize];
        for (s, &b) in bin_of.iter().enumerate() {
            members[b as usize].push(s as u32);
        }
        ExchangeDecoder::Hash { bins, members, bin_of }
    } else if size == 2 {
        let m = (n as f64 * rate).floor() as usize;
        ExchangeDecoder::Ldpc(Ldpc::new(n, m, 3, derive_seed(seed, &[dir])))
    } else {
        return Err(Error::resource("exhaustive bin decoding", seqs, ML_CAP));
    };
    Ok(Direction { decoder, log_cond, size })
}

/// Slepian-Wolf exchange of `x1` (node 1) and `x2` (node 2) at
/// `rates = (R12, R21)`. Node 1 outputs `{x2}hat`, node 2 outputs `{x1}hat`.
///
/// Rates must exceed the conditional entropies unless `force` is set.
pub fn make_exchange_protocol(
    source: &JointPmf,
    x1: &str,
    x2: &str,
    n: usize,
    rates: (f64, f64),
    seed: u64,
    force: bool,
) -> Result<ProtocolDef> {
    if n == 0 {
        return Err(Error::Argument("block length must be positive".into()));
    }
    let d1 = direction(source, x1, x2, n, rates.0, seed, 1, force)?;
    let d2 = direction(source, x2, x1, n, rates.1, seed, 2, force)?;
    let v1 = source.var(x1)?.clone();
    let v2 = source.var(x2)?.clone();
    let mut steps = Vec::new();
    let mut slot = [None, None];
    for (i, (d, node)) in [(&d1, Node::One), (&d2, Node::Two)].into_iter().enumerate() {
        let radices = match &d.decoder {
            ExchangeDecoder::Silent => continue,
            ExchangeDecoder::Raw => vec![d.size as u64; n],
            ExchangeDecoder::Hash { bins, .. } => vec![*bins],
            ExchangeDecoder::Ldpc(h) => vec![2; h.m()],
        };
        slot[i] = Some(steps.len());
        steps.push(Step::Send { node, space: MessageSpace::new(radices) });
    }
    Ok(ProtocolDef {
        name: "exchange".into(),
        n,
        inputs: [vec![v1.clone()], vec![v2.clone()]],
        outputs: [vec![v2.renamed(hat(x2))], vec![v1.renamed(hat(x1))]],
        steps,
        strategy: Arc::new(ExchangeStrategy { n, dirs: [d1, d2], slot }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Variable;
    use crate::protocol::{estimate_block_error, run_protocol, Mode};

    fn dsbs(p: f64) -> JointPmf {
        JointPmf::from_fn(vec![Variable::binary("X1"), Variable::binary("X2")], |a| {
            0.5 * if a[0] == a[1] { 1.0 - p } else { p }
        })
        .unwrap()
    }

    #[test]
    fn identical_inputs_need_no_messages() {
        let src = dsbs(0.0);
        let p = make_exchange_protocol(&src, "X1", "X2", 4, (0.0, 0.0), 1, false).unwrap();
        assert!(p.steps.is_empty());
        assert_eq!(p.rounds(), 0);
        let res = run_protocol(&p, &src, Mode::Exact, 0).unwrap();
        assert!(res.tv_to_iid(&demand_pmf(&src, "X1", "X2").unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn low_rates_are_rejected_unless_forced() {
        let src = dsbs(0.1);
        assert!(matches!(
            make_exchange_protocol(&src, "X1", "X2", 4, (0.3, 0.9), 1, false),
            Err(Error::Model(_))
        ));
        assert!(make_exchange_protocol(&src, "X1", "X2", 4, (0.3, 0.9), 1, true).is_ok());
    }

    #[test]
    fn tv_is_twice_the_block_error() {
        let src = dsbs(0.2);
        let p = make_exchange_protocol(&src, "X1", "X2", 3, (0.8, 0.9), 7, false).unwrap();
        assert_eq!(p.rounds(), 2);
        let res = run_protocol(&p, &src, Mode::Exact, 0).unwrap();
        let tv = res.tv_to_iid(&demand_pmf(&src, "X1", "X2").unwrap()).unwrap();
        let pmf = res.to_pmf().unwrap();
        let mut err = 0.0;
        let mut odo = crate::dist::Odometer::new(&pmf.sizes());
        let mut at = 0;
        while let Some(a) = odo.current() {
            // Position-major letters (X1, X2, X2hat, X1hat).
            if a.chunks(4).any(|l| l[2] != l[1] || l[3] != l[0]) {
                err += pmf.probs()[at];
            }
            at += 1;
            odo.advance();
        }
        assert!(err > 0.0);
        assert!((tv - 2.0 * err).abs() < 1e-12, "{tv} vs {err}");
    }

    #[test]
    fn correct_decoding_reproduces_inputs() {
        let src = dsbs(0.1);
        let p = make_exchange_protocol(&src, "X1", "X2", 8, (0.8, 0.8), 3, false).unwrap();
        let ok = crate::protocol::simulate_trials(&p, &src, 300, 5, |tr| {
            // Whenever a decoded sequence lies in the sender's bin and is the
            // true one, the output equals the input.
            (tr.outputs[0][0] == tr.inputs[1][0], tr.outputs[1][0] == tr.inputs[0][0])
        })
        .unwrap();
        assert!(ok.iter().filter(|(a, b)| *a && *b).count() > 150);
    }

    #[test]
    fn ldpc_mode_for_long_blocks() {
        let src = dsbs(0.05);
        let p = make_exchange_protocol(&src, "X1", "X2", 64, (0.6, 0.6), 3, false).unwrap();
        assert!(matches!(&p.steps[0], Step::Send { space, .. } if space.radices.len() == 38));
        let (err, _) = estimate_block_error(&p, &src, &[("X2hat", "X2"), ("X1hat", "X1")], 200, 1).unwrap();
        assert!(err < 0.2, "{err}");
    }
}
