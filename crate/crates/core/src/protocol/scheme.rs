//! Soft-covering index exchange: node 1 picks the odd-layer indices, node 2
//! the even-layer ones, and each node synthesizes its output from the shared
//! codebook of the common sequence.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::dist::pmf::{flat_index, Variable};
use crate::dist::mutual_info;
use crate::error::{Error, Result};
use crate::softcover::{build_codebook, check_rate_condition, codebook_seed, normalize_rows, LayeredCodebook, SoftcoverSpec};

use super::{MessageSpace, MsgDist, Node, ProtocolDef, SeqDist, Step, Strategy, View};

/// Largest Markov residual `I(Y1; Y2 | F, X)` accepted, in bits.
const MARKOV_TOLERANCE: f64 = 1e-9;

struct SoftcoverStrategy {
    spec: SoftcoverSpec,
    seed: u64,
    x_sizes: Vec<usize>,
    /// Per node: row `(chain · |X| + x)` over the node's combined outputs.
    y_rows: [Vec<f64>; 2],
    y_size: [usize; 2],
    cache: Mutex<HashMap<Vec<usize>, Arc<LayeredCodebook>>>,
}

impl SoftcoverStrategy {
    fn codebook(&self, x_seq: &[usize]) -> Result<Arc<LayeredCodebook>> {
        if let Some(cb) = self.cache.lock().expect("codebook cache").get(x_seq) {
            return Ok(cb.clone());
        }
        let idx = flat_index(&vec![self.spec.x_size(); x_seq.len()], x_seq) as u64;
        let cb = Arc::new(build_codebook(&self.spec, x_seq, codebook_seed(self.seed, 0, idx))?);
        self.cache.lock().expect("codebook cache").insert(x_seq.to_vec(), cb.clone());
        Ok(cb)
    }
}

impl Strategy for SoftcoverStrategy {
    fn message(&self, _: usize, _: Node, _: &View) -> Result<MsgDist> {
        Ok(MsgDist::Uniform)
    }

    fn output(&self, node: Node, view: &View) -> Result<SeqDist> {
        let n = self.spec.n();
        let x_seq: Vec<usize> = (0..n)
            .map(|k| flat_index(&self.x_sizes, &view.inputs.iter().map(|s| s[k]).collect::<Vec<_>>()))
            .collect();
        let cb = self.codebook(&x_seq)?;
        let r = self.spec.r();
        let t: Vec<usize> = (0..r)
            .map(|s| view.messages[s % 2][s / 2] as usize)
            .collect();
        let chain = cb.leaf_chain(flat_index(cb.counts(), &t));
        let w = self.y_size[node.index()];
        let rows = &self.y_rows[node.index()];
        let xs = self.spec.x_size();
        Ok(SeqDist(
            chain
                .iter()
                .zip(&x_seq)
                .map(|(&c, &x)| {
                    let at = (c as usize * xs + x) * w;
                    rows[at..at + w].to_vec()
                })
                .collect(),
        ))
    }
}

/// Two-round protocol realizing the soft-covering construction of `spec`.
///
/// `y[i]` names node `i`'s outputs (together exactly `spec.v_vars()`), and
/// `node_x[i]` names node `i`'s inputs, which play the roles of
/// `spec.x_vars()` in order. Both nodes must therefore know the common
/// sequence. Requires `Y1 - (F, X) - Y2` and, unless `force`, positive rate
/// slacks for every layer.
pub fn make_softcover_protocol(
    spec: &SoftcoverSpec,
    y: [&[&str]; 2],
    node_x: [&[&str]; 2],
    seed: u64,
    force: bool,
) -> Result<ProtocolDef> {
    let mut all_y: Vec<&str> = y[0].iter().chain(y[1]).copied().collect();
    all_y.sort_unstable();
    let mut v: Vec<&str> = spec.v_vars().iter().map(String::as_str).collect();
    v.sort_unstable();
    if all_y != v {
        return Err(Error::Argument("node outputs must partition the V variables".into()));
    }
    if node_x.iter().any(|nx| nx.len() != spec.x_vars().len()) {
        return Err(Error::Argument("each node must map one input to every X variable".into()));
    }
    let base = spec.base();
    let f: Vec<&str> = spec.layers().iter().map(String::as_str).collect();
    let x: Vec<&str> = spec.x_vars().iter().map(String::as_str).collect();
    if !y[0].is_empty() && !y[1].is_empty() {
        let mut given = f.clone();
        given.extend(&x);
        let res = mutual_info(base, y[0], y[1], &given)?;
        if res > MARKOV_TOLERANCE {
            return Err(Error::Model(format!(
                "outputs are not conditionally independent given the codewords: I = {res:.3e} bits"
            )));
        }
    }
    if !force {
        if let Some((s, slack)) = check_rate_condition(spec)?.into_iter().enumerate().find(|(_, v)| *v <= 0.0) {
            return Err(Error::Model(format!("rate condition fails at layer {} (slack {slack:.6})", s + 1)));
        }
    }

    let idx = |names: &[&str]| base.indices_of(names);
    let f_idx = idx(&f)?;
    let x_idx = idx(&x)?;
    let mut y_rows: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut y_size = [1usize; 2];
    for i in 0..2 {
        let yi = idx(y[i])?;
        y_size[i] = yi.iter().map(|&j| base.vars()[j].size()).product();
        let mut t = base.project(&[f_idx.as_slice(), &x_idx, &yi].concat());
        normalize_rows(&mut t, y_size[i]);
        y_rows[i] = t;
    }
    let inputs = [0, 1].map(|i| {
        node_x[i]
            .iter()
            .zip(&x_idx)
            .map(|(name, &j)| base.vars()[j].renamed(*name))
            .collect::<Vec<Variable>>()
    });
    let outputs = [0, 1].map(|i| y[i].iter().map(|name| base.var(name).cloned()).collect::<Result<Vec<_>>>());
    let [o1, o2] = outputs;
    let outputs = [o1?, o2?];
    let counts = spec.counts();
    let mut steps = Vec::new();
    for (node, parity) in [(Node::One, 0), (Node::Two, 1)] {
        let radices: Vec<u64> = counts.iter().skip(parity).step_by(2).map(|&c| c as u64).collect();
        if !radices.is_empty() {
            steps.push(Step::Send { node, space: MessageSpace::new(radices) });
        }
    }
    let strategy = SoftcoverStrategy {
        spec: spec.clone(),
        seed,
        x_sizes: x_idx.iter().map(|&j| base.vars()[j].size()).collect(),
        y_rows,
        y_size,
        cache: Mutex::new(HashMap::new()),
    };
    Ok(ProtocolDef {
        name: "softcover".into(),
        n: spec.n(),
        inputs,
        outputs,
        steps,
        strategy: Arc::new(strategy),
    })
}
