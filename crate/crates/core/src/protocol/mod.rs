//! Two-node interactive protocols over block sources.
//!
//! A protocol is a list of steps. `Send` steps carry a message from one node
//! to the other; `Draw` steps let a node draw private randomness. A
//! [`Strategy`] supplies, for each step, a distribution that may depend only
//! on what the acting node has seen: its own inputs, all messages so far and
//! its own draws. Outputs are per-position product distributions given the
//! same view. Causality is therefore enforced by construction.
//!
//! Exact mode enumerates every source block and every branch of the nodes'
//! randomness; empirical mode samples trials.

mod compose;
mod exchange;
mod ldpc;
mod scheme;

pub use compose::{concatenate, copy_protocol, extract_common};
pub use exchange::{demand_pmf, make_exchange_protocol, ExchangeDecoder, ML_CAP};
pub use ldpc::Ldpc;
pub use scheme::make_softcover_protocol;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::pmf::{flat_index, unflatten, JointPmf, Odometer, Variable};
use crate::dist::sequence::sequence_vars;
use crate::error::{Error, Result};
use crate::rng::{sample_index, stream};

/// A message as mixed-radix digits.
pub type Message = Vec<u32>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageSpace {
    pub radices: Vec<u64>,
}

impl MessageSpace {
    pub fn new(radices: Vec<u64>) -> Self {
        MessageSpace { radices }
    }

    pub fn bits(&self) -> f64 {
        self.radices.iter().map(|&r| (r as f64).log2()).sum()
    }

    /// Number of messages, if it fits.
    pub fn size(&self) -> Option<u128> {
        self.radices.iter().try_fold(1u128, |a, &r| a.checked_mul(r as u128))
    }

    pub fn contains(&self, m: &Message) -> bool {
        m.len() == self.radices.len() && m.iter().zip(&self.radices).all(|(&d, &r)| (d as u64) < r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Node {
    One,
    Two,
}

impl Node {
    pub fn index(self) -> usize {
        match self {
            Node::One => 0,
            Node::Two => 1,
        }
    }

    pub fn number(self) -> usize {
        self.index() + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Send { node: Node, space: MessageSpace },
    Draw { node: Node },
}

impl Step {
    pub fn node(&self) -> Node {
        match self {
            Step::Send { node, .. } | Step::Draw { node } => *node,
        }
    }
}

/// What a node knows when acting.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct View {
    /// One sequence per input variable of the node.
    pub inputs: Vec<Vec<usize>>,
    /// Every message sent so far, in order.
    pub messages: Vec<Message>,
    /// This node's own draws so far, in order.
    pub draws: Vec<Vec<usize>>,
}

/// Distribution of a message.
#[derive(Clone, Debug, PartialEq)]
pub enum MsgDist {
    Point(Message),
    /// Uniform over the whole message space of the step.
    Uniform,
    Table(Vec<(Message, f64)>),
}

/// Per-position product distribution over a finite alphabet.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqDist(pub Vec<Vec<f64>>);

impl SeqDist {
    pub fn point(seq: &[usize], alphabet: usize) -> Self {
        SeqDist(
            seq.iter()
                .map(|&s| {
                    let mut row = vec![0.0; alphabet];
                    row[s] = 1.0;
                    row
                })
                .collect(),
        )
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        self.0.iter().map(|row| sample_index(rng, row)).collect()
    }

    /// Every sequence of positive probability, in lexicographic order.
    fn support(&self) -> Vec<(Vec<usize>, f64)> {
        let mut out = vec![(Vec::with_capacity(self.0.len()), 1.0)];
        for row in &self.0 {
            let mut next = Vec::with_capacity(out.len() * row.len());
            for (seq, p) in &out {
                for (s, &q) in row.iter().enumerate() {
                    if q > 0.0 {
                        let mut t = seq.clone();
                        t.push(s);
                        next.push((t, p * q));
                    }
                }
            }
            out = next;
        }
        out
    }

    fn support_size(&self) -> u128 {
        self.0
            .iter()
            .map(|r| r.iter().filter(|&&p| p > 0.0).count() as u128)
            .fold(1u128, |a, b| a.saturating_mul(b))
    }
}

/// Node behaviour. `step` is the index into [`ProtocolDef::steps`].
pub trait Strategy: Send + Sync {
    fn message(&self, step: usize, node: Node, view: &View) -> Result<MsgDist>;

    fn draw(&self, step: usize, node: Node, view: &View) -> Result<SeqDist> {
        let _ = view;
        Err(Error::Protocol {
            round: step,
            node: node.number(),
            detail: "strategy has no draw steps".into(),
        })
    }

    /// Distribution of the node's outputs, over the product of its output
    /// alphabets.
    fn output(&self, node: Node, view: &View) -> Result<SeqDist>;
}

/// An `n`-block, two-node protocol.
#[derive(Clone)]
pub struct ProtocolDef {
    pub name: String,
    pub n: usize,
    pub inputs: [Vec<Variable>; 2],
    pub outputs: [Vec<Variable>; 2],
    pub steps: Vec<Step>,
    pub strategy: Arc<dyn Strategy>,
}

impl std::fmt::Debug for ProtocolDef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProtocolDef")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("inputs", &self.inputs)
            .field("outputs", &self.outputs)
            .field("steps", &self.steps)
            .finish()
    }
}

fn alphabet_product(vars: &[Variable]) -> usize {
    vars.iter().map(Variable::size).product()
}

impl ProtocolDef {
    /// Number of rounds: maximal runs of sends by the same node, with round 1
    /// reserved for node 1.
    pub fn rounds(&self) -> usize {
        let mut rounds = 0;
        let mut last = None;
        for step in &self.steps {
            if let Step::Send { node, .. } = step {
                if last != Some(*node) {
                    if last.is_none() && *node == Node::Two {
                        rounds += 1;
                    }
                    rounds += 1;
                    last = Some(*node);
                }
            }
        }
        rounds
    }

    /// `(R12, R21)` in bits per symbol.
    pub fn rates(&self) -> (f64, f64) {
        let mut r = [0.0; 2];
        for step in &self.steps {
            if let Step::Send { node, space } = step {
                r[node.index()] += space.bits();
            }
        }
        (r[0] / self.n as f64, r[1] / self.n as f64)
    }

    /// Round number (1-based) of each step.
    fn round_of(&self, step: usize) -> usize {
        let mut rounds = 0;
        let mut last = None;
        for s in &self.steps[..=step] {
            if let Step::Send { node, .. } = s {
                if last != Some(*node) {
                    if last.is_none() && *node == Node::Two {
                        rounds += 1;
                    }
                    rounds += 1;
                    last = Some(*node);
                }
            }
        }
        rounds.max(1)
    }

    /// Single-letter variables of the outcome: node 1 inputs, node 2 inputs,
    /// node 1 outputs, node 2 outputs.
    pub fn letter_vars(&self) -> Vec<Variable> {
        let mut v = self.inputs[0].clone();
        v.extend(self.inputs[1].iter().cloned());
        v.extend(self.outputs[0].iter().cloned());
        v.extend(self.outputs[1].iter().cloned());
        v
    }

    fn check_message(&self, step: usize, node: Node, m: &Message) -> Result<()> {
        let Step::Send { space, .. } = &self.steps[step] else {
            unreachable!()
        };
        if !space.contains(m) {
            return Err(Error::Protocol {
                round: self.round_of(step),
                node: node.number(),
                detail: format!("message {m:?} outside space {:?}", space.radices),
            });
        }
        Ok(())
    }

    fn check_seq(&self, what: &str, step: usize, node: Node, d: &SeqDist, alphabet: usize) -> Result<()> {
        if d.0.len() != self.n || d.0.iter().any(|r| r.len() != alphabet) {
            return Err(Error::Protocol {
                round: if step < self.steps.len() { self.round_of(step) } else { self.rounds() },
                node: node.number(),
                detail: format!("{what} distribution has the wrong shape"),
            });
        }
        Ok(())
    }
}

/// One execution of a protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct Transcript {
    pub trial: u64,
    pub seed: u64,
    /// `[node][variable][position]`.
    pub inputs: [Vec<Vec<usize>>; 2],
    pub messages: Vec<Message>,
    pub outputs: [Vec<Vec<usize>>; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Empirical { trials: usize },
    /// Exact when within caps, otherwise empirical with a warning.
    Auto { trials: usize },
}

/// Limits for exact enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunCaps {
    /// Source blocks with positive probability.
    pub source_blocks: u128,
    /// Branches of node randomness per source block.
    pub branches: u128,
}

impl Default for RunCaps {
    fn default() -> Self {
        RunCaps {
            source_blocks: 1 << 20,
            branches: 1 << 20,
        }
    }
}

/// Distribution of a protocol's outcome sequences.
///
/// Keys are flat row-major indices over the position-major layout
/// `L_1, L_2, .., L_n` with `L` = [`ProtocolDef::letter_vars`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub vars: Vec<Variable>,
    pub n: usize,
    pub probs: BTreeMap<u64, f64>,
    /// `None` for exact results.
    pub trials: Option<usize>,
    pub sample: Option<Transcript>,
}

impl RunResult {
    fn letter_size(&self) -> usize {
        alphabet_product(&self.vars)
    }

    pub fn is_exact(&self) -> bool {
        self.trials.is_none()
    }

    /// TV to the i.i.d. extension of `target`, which must contain every
    /// outcome variable (it is marginalized and reordered as needed).
    pub fn tv_to_iid(&self, target: &JointPmf) -> Result<f64> {
        let names: Vec<&str> = self.vars.iter().map(|v| v.name.as_str()).collect();
        let t = target.marginal(&names)?;
        for (a, b) in t.vars().iter().zip(&self.vars) {
            if a.alphabet != b.alphabet {
                return Err(Error::Shape(format!("alphabet of `{}` differs from target", a.name)));
            }
        }
        let letter = t.probs();
        let ls = self.letter_size();
        let mut digits = vec![0usize; self.n];
        let sizes = vec![ls; self.n];
        let mut tv = 0.0;
        let mut covered = 0.0;
        for (&key, &p) in &self.probs {
            unflatten(&sizes, key as usize, &mut digits);
            let q: f64 = digits.iter().map(|&d| letter[d]).product();
            tv += (p - q).abs();
            covered += q;
        }
        Ok(tv + (1.0 - covered).max(0.0))
    }

    /// Marginal onto a subset of the outcome variables.
    pub fn marginal(&self, keep: &[&str]) -> Result<RunResult> {
        let idx: Vec<usize> = keep
            .iter()
            .map(|k| {
                self.vars
                    .iter()
                    .position(|v| v.name == *k)
                    .ok_or_else(|| Error::UnknownVariable(k.to_string()))
            })
            .collect::<Result<_>>()?;
        let sizes: Vec<usize> = self.vars.iter().map(Variable::size).collect();
        let keep_sizes: Vec<usize> = idx.iter().map(|&i| sizes[i]).collect();
        let new_letter: usize = keep_sizes.iter().product();
        let ls = self.letter_size();
        let mut letter = vec![0; sizes.len()];
        let mut sub = vec![0; idx.len()];
        let mut out = BTreeMap::new();
        for (&key, &p) in &self.probs {
            let mut rest = key as usize;
            let mut new_key = 0u64;
            let mut scale = 1u64;
            for _ in 0..self.n {
                unflatten(&sizes, rest % ls, &mut letter);
                rest /= ls;
                for (s, &i) in sub.iter_mut().zip(&idx) {
                    *s = letter[i];
                }
                new_key += scale * flat_index(&keep_sizes, &sub) as u64;
                scale *= new_letter as u64;
            }
            *out.entry(new_key).or_insert(0.0) += p;
        }
        Ok(RunResult {
            vars: idx.iter().map(|&i| self.vars[i].clone()).collect(),
            n: self.n,
            probs: out,
            trials: self.trials,
            sample: self.sample.clone(),
        })
    }

    /// Dense pmf over the sequence variables, when small enough.
    pub fn to_pmf(&self) -> Result<JointPmf> {
        let len = (self.letter_size() as u128).checked_pow(self.n as u32).unwrap_or(u128::MAX);
        if len > crate::dist::sequence::DEFAULT_EXTENSION_CAP as u128 {
            return Err(Error::resource("dense outcome table", len, crate::dist::sequence::DEFAULT_EXTENSION_CAP as u128));
        }
        let mut probs = vec![0.0; len as usize];
        for (&k, &p) in &self.probs {
            probs[k as usize] = p;
        }
        JointPmf::from_weights(sequence_vars(&self.vars, self.n), probs)
    }
}

/// Packs inputs and outputs of all positions into an outcome key.
struct Layout {
    n: usize,
    in_sizes: [Vec<usize>; 2],
    out_sizes: [usize; 2],
    in_product: [usize; 2],
    letter: u64,
}

impl Layout {
    fn new(def: &ProtocolDef) -> Result<Self> {
        let in_sizes = [0, 1].map(|i| def.inputs[i].iter().map(Variable::size).collect::<Vec<_>>());
        let in_product = [0, 1].map(|i| in_sizes[i].iter().product::<usize>());
        let out_sizes = [0, 1].map(|i| alphabet_product(&def.outputs[i]));
        let letter = (in_product[0] * in_product[1] * out_sizes[0] * out_sizes[1]) as u64;
        let total = (letter as u128).checked_pow(def.n as u32).unwrap_or(u128::MAX);
        if total > u64::MAX as u128 {
            return Err(Error::resource("outcome key space", total, u64::MAX as u128));
        }
        Ok(Layout {
            n: def.n,
            in_sizes,
            out_sizes,
            in_product,
            letter,
        })
    }

    fn stride(&self, k: usize) -> u64 {
        self.letter.pow((self.n - 1 - k) as u32)
    }

    fn input_part(&self, inputs: &[Vec<Vec<usize>>; 2]) -> u64 {
        let tail = (self.out_sizes[0] * self.out_sizes[1]) as u64;
        (0..self.n)
            .map(|k| {
                let i1 = flat_index(&self.in_sizes[0], &inputs[0].iter().map(|s| s[k]).collect::<Vec<_>>());
                let i2 = flat_index(&self.in_sizes[1], &inputs[1].iter().map(|s| s[k]).collect::<Vec<_>>());
                self.stride(k) * (((i1 * self.in_product[1] + i2) as u64) * tail)
            })
            .sum()
    }

    fn output_part(&self, node: usize, seq: &[usize]) -> u64 {
        let mult = if node == 0 { self.out_sizes[1] as u64 } else { 1 };
        seq.iter().enumerate().map(|(k, &o)| self.stride(k) * mult * o as u64).sum()
    }
}

/// Splits a block of combined source letters into per-node, per-variable
/// sequences.
fn split_inputs(def: &ProtocolDef, letters: &[usize]) -> [Vec<Vec<usize>>; 2] {
    let sizes: Vec<usize> = def.inputs[0].iter().chain(&def.inputs[1]).map(Variable::size).collect();
    let n1 = def.inputs[0].len();
    let mut seqs = vec![Vec::with_capacity(letters.len()); sizes.len()];
    let mut digits = vec![0; sizes.len()];
    for &l in letters {
        unflatten(&sizes, l, &mut digits);
        for (s, &d) in seqs.iter_mut().zip(&digits) {
            s.push(d);
        }
    }
    let second = seqs.split_off(n1);
    [seqs, second]
}

/// Single-letter source pmf over node 1 inputs then node 2 inputs.
fn source_letter(def: &ProtocolDef, source: &JointPmf) -> Result<Vec<f64>> {
    let names: Vec<&str> = def.inputs[0].iter().chain(&def.inputs[1]).map(|v| v.name.as_str()).collect();
    if names.is_empty() {
        return Ok(vec![1.0]);
    }
    let m = source.marginal(&names)?;
    for (a, b) in m.vars().iter().zip(def.inputs[0].iter().chain(&def.inputs[1])) {
        if a.alphabet != b.alphabet {
            return Err(Error::Shape(format!("source alphabet of `{}` differs from the protocol input", a.name)));
        }
    }
    Ok(m.probs().to_vec())
}

fn node_view(inputs: &[Vec<Vec<usize>>; 2], messages: &[Message], draws: &[Vec<Vec<usize>>; 2], node: Node) -> View {
    View {
        inputs: inputs[node.index()].clone(),
        messages: messages.to_vec(),
        draws: draws[node.index()].clone(),
    }
}

struct Enumerator<'a> {
    def: &'a ProtocolDef,
    layout: &'a Layout,
    caps: RunCaps,
    inputs: [Vec<Vec<usize>>; 2],
    input_key: u64,
    weight: f64,
    out: Vec<(u64, f64)>,
    work: u128,
}

impl Enumerator<'_> {
    fn charge(&mut self, amount: u128) -> Result<()> {
        self.work = self.work.saturating_add(amount);
        if self.work > self.caps.branches {
            return Err(Error::resource("protocol branches per source block", self.work, self.caps.branches));
        }
        Ok(())
    }

    fn walk(&mut self, step: usize, messages: &mut Vec<Message>, draws: &mut [Vec<Vec<usize>>; 2], p: f64) -> Result<()> {
        let def = self.def;
        if step == def.steps.len() {
            return self.finish(messages, draws, p);
        }
        match &def.steps[step] {
            Step::Send { node, space } => {
                let view = node_view(&self.inputs, messages, draws, *node);
                let dist = def.strategy.message(step, *node, &view)?;
                let entries: Vec<(Message, f64)> = match dist {
                    MsgDist::Point(m) => vec![(m, 1.0)],
                    MsgDist::Table(t) => t,
                    MsgDist::Uniform => {
                        let size = space.size().unwrap_or(u128::MAX);
                        self.charge(size)?;
                        let radices: Vec<usize> = space.radices.iter().map(|&r| r as usize).collect();
                        let w = 1.0 / size as f64;
                        let mut odo = Odometer::new(&radices);
                        let mut all = Vec::with_capacity(size as usize);
                        while let Some(a) = odo.current() {
                            all.push((a.iter().map(|&d| d as u32).collect(), w));
                            odo.advance();
                        }
                        all
                    }
                };
                self.charge(entries.len() as u128)?;
                for (m, q) in entries {
                    def.check_message(step, *node, &m)?;
                    if q <= 0.0 {
                        continue;
                    }
                    messages.push(m);
                    self.walk(step + 1, messages, draws, p * q)?;
                    messages.pop();
                }
            }
            Step::Draw { node } => {
                let view = node_view(&self.inputs, messages, draws, *node);
                let d = def.strategy.draw(step, *node, &view)?;
                if d.0.len() != def.n {
                    return Err(Error::Protocol {
                        round: def.round_of(step),
                        node: node.number(),
                        detail: "draw has the wrong length".into(),
                    });
                }
                self.charge(d.support_size())?;
                for (seq, q) in d.support() {
                    draws[node.index()].push(seq);
                    self.walk(step + 1, messages, draws, p * q)?;
                    draws[node.index()].pop();
                }
            }
        }
        Ok(())
    }

    fn finish(&mut self, messages: &[Message], draws: &[Vec<Vec<usize>>; 2], p: f64) -> Result<()> {
        let def = self.def;
        let mut parts: Vec<Vec<(u64, f64)>> = Vec::with_capacity(2);
        for node in [Node::One, Node::Two] {
            let view = node_view(&self.inputs, messages, draws, node);
            let d = def.strategy.output(node, &view)?;
            def.check_seq("output", def.steps.len(), node, &d, self.layout.out_sizes[node.index()])?;
            self.charge(d.support_size())?;
            parts.push(
                d.support()
                    .into_iter()
                    .map(|(seq, q)| (self.layout.output_part(node.index(), &seq), q))
                    .collect(),
            );
        }
        self.charge((parts[0].len() * parts[1].len()) as u128)?;
        for &(k1, q1) in &parts[0] {
            for &(k2, q2) in &parts[1] {
                self.out.push((self.input_key + k1 + k2, self.weight * p * q1 * q2));
            }
        }
        Ok(())
    }
}

fn run_exact(def: &ProtocolDef, source: &JointPmf, caps: RunCaps) -> Result<RunResult> {
    let layout = Layout::new(def)?;
    let letter = source_letter(def, source)?;
    let blocks = (letter.len() as u128).checked_pow(def.n as u32).unwrap_or(u128::MAX);
    if blocks > caps.source_blocks {
        return Err(Error::resource("source blocks", blocks, caps.source_blocks));
    }
    let sizes = vec![letter.len(); def.n];
    let total = blocks as usize;
    let chunks: Vec<Vec<(u64, f64)>> = (0..total)
        .into_par_iter()
        .map(|b| {
            let mut letters = vec![0; def.n];
            unflatten(&sizes, b, &mut letters);
            let weight: f64 = letters.iter().map(|&l| letter[l]).product();
            if weight <= 0.0 {
                return Ok(Vec::new());
            }
            let inputs = split_inputs(def, &letters);
            let mut e = Enumerator {
                def,
                layout: &layout,
                caps,
                input_key: layout.input_part(&inputs),
                inputs,
                weight,
                out: Vec::new(),
                work: 0,
            };
            e.walk(0, &mut Vec::new(), &mut [Vec::new(), Vec::new()], 1.0)?;
            Ok(e.out)
        })
        .collect::<Result<_>>()?;
    let mut probs = BTreeMap::new();
    for chunk in chunks {
        for (k, p) in chunk {
            *probs.entry(k).or_insert(0.0) += p;
        }
    }
    Ok(RunResult {
        vars: def.letter_vars(),
        n: def.n,
        probs,
        trials: None,
        sample: None,
    })
}

/// Runs one sampled trial. Nature uses stream `(seed, trial, 2)`, node `i`
/// stream `(seed, trial, i)`.
pub fn run_trial(def: &ProtocolDef, letter: &[f64], seed: u64, trial: u64) -> Result<Transcript> {
    let mut nature = stream(seed, &[trial, 2]);
    let letters: Vec<usize> = (0..def.n).map(|_| sample_index(&mut nature, letter)).collect();
    let inputs = split_inputs(def, &letters);
    let mut rngs = [stream(seed, &[trial, 0]), stream(seed, &[trial, 1])];
    let mut messages = Vec::new();
    let mut draws: [Vec<Vec<usize>>; 2] = [Vec::new(), Vec::new()];
    for (step, s) in def.steps.iter().enumerate() {
        match s {
            Step::Send { node, space } => {
                let view = node_view(&inputs, &messages, &draws, *node);
                let rng = &mut rngs[node.index()];
                let m = match def.strategy.message(step, *node, &view)? {
                    MsgDist::Point(m) => m,
                    MsgDist::Uniform => space.radices.iter().map(|&r| rng.gen_range(0..r) as u32).collect(),
                    MsgDist::Table(t) => {
                        let w: Vec<f64> = t.iter().map(|(_, p)| *p).collect();
                        t[sample_index(rng, &w)].0.clone()
                    }
                };
                def.check_message(step, *node, &m)?;
                messages.push(m);
            }
            Step::Draw { node } => {
                let view = node_view(&inputs, &messages, &draws, *node);
                let d = def.strategy.draw(step, *node, &view)?;
                let seq = d.sample(&mut rngs[node.index()]);
                draws[node.index()].push(seq);
            }
        }
    }
    let mut outputs: [Vec<Vec<usize>>; 2] = [Vec::new(), Vec::new()];
    for node in [Node::One, Node::Two] {
        let view = node_view(&inputs, &messages, &draws, node);
        let d = def.strategy.output(node, &view)?;
        let sizes: Vec<usize> = def.outputs[node.index()].iter().map(Variable::size).collect();
        def.check_seq("output", def.steps.len(), node, &d, sizes.iter().product())?;
        let combined = d.sample(&mut rngs[node.index()]);
        let mut per_var = vec![Vec::with_capacity(def.n); sizes.len()];
        let mut digits = vec![0; sizes.len()];
        for c in combined {
            unflatten(&sizes, c, &mut digits);
            for (v, &d) in per_var.iter_mut().zip(&digits) {
                v.push(d);
            }
        }
        outputs[node.index()] = per_var;
    }
    Ok(Transcript {
        trial,
        seed,
        inputs,
        messages,
        outputs,
    })
}

/// Runs `trials` sampled trials in parallel and maps each transcript;
/// results are in trial order.
pub fn simulate_trials<T, F>(def: &ProtocolDef, source: &JointPmf, trials: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Transcript) -> T + Sync,
{
    let letter = source_letter(def, source)?;
    (0..trials as u64)
        .into_par_iter()
        .map(|t| run_trial(def, &letter, seed, t).map(|tr| f(&tr)))
        .collect()
}

fn run_empirical(def: &ProtocolDef, source: &JointPmf, trials: usize, seed: u64) -> Result<RunResult> {
    if trials == 0 {
        return Err(Error::Argument("empirical mode needs at least one trial".into()));
    }
    let layout = Layout::new(def)?;
    let keys = simulate_trials(def, source, trials, seed, |tr| {
        let combine = |node: usize| -> Vec<usize> {
            let sizes: Vec<usize> = def.outputs[node].iter().map(Variable::size).collect();
            (0..def.n)
                .map(|k| flat_index(&sizes, &tr.outputs[node].iter().map(|s| s[k]).collect::<Vec<_>>()))
                .collect()
        };
        layout.input_part(&tr.inputs) + layout.output_part(0, &combine(0)) + layout.output_part(1, &combine(1))
    })?;
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for k in keys {
        *counts.entry(k).or_insert(0) += 1;
    }
    let letter = source_letter(def, source)?;
    let sample = run_trial(def, &letter, seed, 0)?;
    Ok(RunResult {
        vars: def.letter_vars(),
        n: def.n,
        probs: counts.into_iter().map(|(k, c)| (k, c as f64 / trials as f64)).collect(),
        trials: Some(trials),
        sample: Some(sample),
    })
}

/// Induced distribution of `(inputs, outputs)` sequences.
pub fn run_protocol(def: &ProtocolDef, source: &JointPmf, mode: Mode, seed: u64) -> Result<RunResult> {
    run_protocol_capped(def, source, mode, seed, RunCaps::default())
}

pub fn run_protocol_capped(def: &ProtocolDef, source: &JointPmf, mode: Mode, seed: u64, caps: RunCaps) -> Result<RunResult> {
    match mode {
        Mode::Exact => run_exact(def, source, caps),
        Mode::Empirical { trials } => run_empirical(def, source, trials, seed),
        Mode::Auto { trials } => match run_exact(def, source, caps) {
            Err(Error::Resource { what, size, cap }) => {
                log::warn!("exact enumeration of {what} needs {size} > {cap}; sampling {trials} trials instead");
                run_empirical(def, source, trials, seed)
            }
            other => other,
        },
    }
}

/// Fraction of trials in which some output differs from its designated input,
/// with its standard error. `pairs` lists `(output name, input name)`.
pub fn estimate_block_error(
    def: &ProtocolDef,
    source: &JointPmf,
    pairs: &[(&str, &str)],
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::Argument("at least one trial is required".into()));
    }
    let locate = |vars: &[Vec<Variable>; 2], name: &str| -> Result<(usize, usize)> {
        for (node, list) in vars.iter().enumerate() {
            if let Some(i) = list.iter().position(|v| v.name == name) {
                return Ok((node, i));
            }
        }
        Err(Error::UnknownVariable(name.to_string()))
    };
    let resolved: Vec<((usize, usize), (usize, usize))> = pairs
        .iter()
        .map(|(o, i)| Ok((locate(&def.outputs, o)?, locate(&def.inputs, i)?)))
        .collect::<Result<_>>()?;
    let errors = simulate_trials(def, source, trials, seed, |tr| {
        resolved
            .iter()
            .any(|&((on, oi), (inn, ii))| tr.outputs[on][oi] != tr.inputs[inn][ii])
    })?;
    let k = errors.iter().filter(|&&e| e).count() as f64;
    let t = trials as f64;
    let p = k / t;
    Ok((p, (p * (1.0 - p) / t).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant;

    impl Strategy for Constant {
        fn message(&self, _: usize, _: Node, _: &View) -> Result<MsgDist> {
            Ok(MsgDist::Point(vec![0]))
        }
        fn output(&self, _: Node, view: &View) -> Result<SeqDist> {
            let n = view.inputs[0].len();
            Ok(SeqDist::point(&vec![1; n], 2))
        }
    }

    struct BadSender;

    impl Strategy for BadSender {
        fn message(&self, _: usize, _: Node, _: &View) -> Result<MsgDist> {
            Ok(MsgDist::Point(vec![5]))
        }
        fn output(&self, _: Node, _: &View) -> Result<SeqDist> {
            unreachable!()
        }
    }

    fn pair_source() -> JointPmf {
        JointPmf::new(vec![Variable::binary("X1"), Variable::binary("X2")], vec![0.4, 0.1, 0.2, 0.3]).unwrap()
    }

    fn def(strategy: Arc<dyn Strategy>, steps: Vec<Step>) -> ProtocolDef {
        ProtocolDef {
            name: "test".into(),
            n: 2,
            inputs: [vec![Variable::binary("X1")], vec![Variable::binary("X2")]],
            outputs: [vec![Variable::binary("Y1")], vec![Variable::binary("Y2")]],
            steps,
            strategy,
        }
    }

    #[test]
    fn constant_outputs_give_source_times_point_mass() {
        let d = def(Arc::new(Constant), vec![]);
        let res = run_protocol(&d, &pair_source(), Mode::Exact, 0).unwrap();
        let src = pair_source();
        let point = JointPmf::point_mass(vec![Variable::binary("Y1"), Variable::binary("Y2")], &[1, 1]).unwrap();
        let target = src.product(&point).unwrap();
        assert!(res.tv_to_iid(&target).unwrap() < 1e-12);
        assert_eq!(res.probs.len(), 16);
    }

    #[test]
    fn out_of_space_message_names_the_round() {
        let steps = vec![
            Step::Send { node: Node::Two, space: MessageSpace::new(vec![4]) },
        ];
        let d = def(Arc::new(BadSender), steps);
        match run_protocol(&d, &pair_source(), Mode::Exact, 0) {
            Err(Error::Protocol { round, node, .. }) => assert_eq!((round, node), (2, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rounds_and_rates() {
        let s = |node, r: u64| Step::Send { node, space: MessageSpace::new(vec![r]) };
        let d = def(Arc::new(Constant), vec![s(Node::One, 4), s(Node::One, 2), Step::Draw { node: Node::Two }, s(Node::Two, 8)]);
        assert_eq!(d.rounds(), 2);
        assert_eq!(d.rates(), (1.5, 1.5));
        let d = def(Arc::new(Constant), vec![s(Node::Two, 2)]);
        assert_eq!(d.rounds(), 2);
        let d = def(Arc::new(Constant), vec![]);
        assert_eq!(d.rounds(), 0);
    }

    #[test]
    fn empirical_converges_to_exact() {
        let d = def(Arc::new(Constant), vec![]);
        let exact = run_protocol(&d, &pair_source(), Mode::Exact, 0).unwrap();
        let emp = run_protocol(&d, &pair_source(), Mode::Empirical { trials: 20000 }, 9).unwrap();
        let diff: f64 = exact
            .probs
            .iter()
            .map(|(k, p)| (p - emp.probs.get(k).copied().unwrap_or(0.0)).abs())
            .sum();
        assert!(diff < 0.05, "{diff}");
        assert_eq!(emp.trials, Some(20000));
    }

    #[test]
    fn auto_falls_back_when_over_cap() {
        let d = def(Arc::new(Constant), vec![]);
        let caps = RunCaps { source_blocks: 2, ..RunCaps::default() };
        let res = run_protocol_capped(&d, &pair_source(), Mode::Auto { trials: 10 }, 1, caps).unwrap();
        assert_eq!(res.trials, Some(10));
    }
}
