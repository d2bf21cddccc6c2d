//! Protocol composition and common-part extraction.

use std::sync::Arc;

use crate::dist::pmf::{flat_index, unflatten, ConditionalPmf, JointPmf, Odometer, Variable};
use crate::dist::mutual_info;
use crate::error::{Error, Result};

use super::{MsgDist, Node, ProtocolDef, SeqDist, Step, Strategy, View};

/// Largest Markov residual accepted for a common part, in bits.
const MARKOV_TOLERANCE: f64 = 1e-9;

struct CopyStrategy {
    /// Per node: input positions copied to outputs, in output order.
    sources: [Vec<usize>; 2],
    sizes: [Vec<usize>; 2],
}

impl Strategy for CopyStrategy {
    fn message(&self, _: usize, _: Node, _: &View) -> Result<MsgDist> {
        unreachable!("copy protocols send nothing")
    }

    fn output(&self, node: Node, view: &View) -> Result<SeqDist> {
        let i = node.index();
        let n = view.inputs.first().map_or(0, Vec::len);
        let n = if self.sources[i].is_empty() { n.max(view.inputs.iter().map(Vec::len).max().unwrap_or(0)) } else { n };
        let width: usize = self.sizes[i].iter().product();
        let seq: Vec<usize> = (0..n)
            .map(|k| {
                let digits: Vec<usize> = self.sources[i].iter().map(|&s| view.inputs[s][k]).collect();
                flat_index(&self.sizes[i], &digits)
            })
            .collect();
        Ok(SeqDist::point(&seq, width))
    }
}

/// A protocol with no communication whose outputs copy inputs.
/// `copies[i]` lists `(input name, output name)` for node `i`.
pub fn copy_protocol(n: usize, inputs: [Vec<Variable>; 2], copies: [&[(&str, &str)]; 2]) -> Result<ProtocolDef> {
    let mut sources = [Vec::new(), Vec::new()];
    let mut sizes = [Vec::new(), Vec::new()];
    let mut outputs = [Vec::new(), Vec::new()];
    for i in 0..2 {
        for (src, out) in copies[i] {
            let pos = inputs[i]
                .iter()
                .position(|v| v.name == *src)
                .ok_or_else(|| Error::UnknownVariable(src.to_string()))?;
            sources[i].push(pos);
            sizes[i].push(inputs[i][pos].size());
            outputs[i].push(inputs[i][pos].renamed(*out));
        }
    }
    Ok(ProtocolDef {
        name: "copy".into(),
        n,
        inputs,
        outputs,
        steps: Vec::new(),
        strategy: Arc::new(CopyStrategy { sources, sizes }),
    })
}

struct ConcatStrategy {
    a: ProtocolDef,
    b: ProtocolDef,
    /// Sends and own draws of each node in `a`.
    a_msgs: usize,
    a_draws: [usize; 2],
    /// For each node and each `b` input, its position in `a`'s inputs
    /// followed by `a`'s outputs.
    order: [Vec<usize>; 2],
}

impl ConcatStrategy {
    fn view_a(&self, node: Node, view: &View) -> View {
        View {
            inputs: view.inputs.clone(),
            messages: view.messages[..view.messages.len().min(self.a_msgs)].to_vec(),
            draws: view.draws[..view.draws.len().min(self.a_draws[node.index()])].to_vec(),
        }
    }

    fn view_b(&self, node: Node, view: &View) -> View {
        let i = node.index();
        let z = &view.draws[self.a_draws[i]];
        let sizes: Vec<usize> = self.a.outputs[i].iter().map(Variable::size).collect();
        let mut split = vec![Vec::with_capacity(z.len()); sizes.len()];
        let mut digits = vec![0; sizes.len()];
        for &c in z {
            unflatten(&sizes, c, &mut digits);
            for (s, &d) in split.iter_mut().zip(&digits) {
                s.push(d);
            }
        }
        let mut provided = view.inputs.clone();
        provided.extend(split);
        View {
            inputs: self.order[i].iter().map(|&j| provided[j].clone()).collect(),
            messages: view.messages[self.a_msgs..].to_vec(),
            draws: view.draws[self.a_draws[i] + 1..].to_vec(),
        }
    }
}

impl Strategy for ConcatStrategy {
    fn message(&self, step: usize, node: Node, view: &View) -> Result<MsgDist> {
        let a_len = self.a.steps.len();
        if step < a_len {
            self.a.strategy.message(step, node, &self.view_a(node, view))
        } else {
            self.b.strategy.message(step - a_len - 2, node, &self.view_b(node, view))
        }
    }

    fn draw(&self, step: usize, node: Node, view: &View) -> Result<SeqDist> {
        let a_len = self.a.steps.len();
        if step < a_len {
            self.a.strategy.draw(step, node, &self.view_a(node, view))
        } else if step < a_len + 2 {
            self.a.strategy.output(node, &self.view_a(node, view))
        } else {
            self.b.strategy.draw(step - a_len - 2, node, &self.view_b(node, view))
        }
    }

    fn output(&self, node: Node, view: &View) -> Result<SeqDist> {
        self.b.strategy.output(node, &self.view_b(node, view))
    }
}

/// Runs `a`, then `b` on each node's inputs extended with its `a` outputs.
///
/// Each node's `b` inputs must be its `a` inputs and `a` outputs, in any order.
/// Adjacent sends by the same node merge into one round.
pub fn concatenate(a: &ProtocolDef, b: &ProtocolDef) -> Result<ProtocolDef> {
    if a.n != b.n {
        return Err(Error::Composition(format!("block lengths differ: {} and {}", a.n, b.n)));
    }
    let mut order = [Vec::new(), Vec::new()];
    for i in 0..2 {
        let mut provided = a.inputs[i].clone();
        provided.extend(a.outputs[i].iter().cloned());
        let names = |v: &[Variable]| v.iter().map(|x| x.name.clone()).collect::<Vec<_>>().join(",");
        let mismatch = || {
            Error::Composition(format!(
                "node {} of the second protocol reads ({}) but the first provides ({})",
                i + 1,
                names(&b.inputs[i]),
                names(&provided)
            ))
        };
        if b.inputs[i].len() != provided.len() {
            return Err(mismatch());
        }
        for v in &b.inputs[i] {
            let j = provided.iter().position(|p| p == v).ok_or_else(mismatch)?;
            order[i].push(j);
        }
    }
    let a_msgs = a.steps.iter().filter(|s| matches!(s, Step::Send { .. })).count();
    let a_draws = [Node::One, Node::Two].map(|n| a.steps.iter().filter(|s| matches!(s, Step::Draw { node } if *node == n)).count());
    let mut steps = a.steps.clone();
    steps.push(Step::Draw { node: Node::One });
    steps.push(Step::Draw { node: Node::Two });
    steps.extend(b.steps.iter().cloned());
    Ok(ProtocolDef {
        name: format!("{}+{}", a.name, b.name),
        n: a.n,
        inputs: a.inputs.clone(),
        outputs: b.outputs.clone(),
        steps,
        strategy: Arc::new(ConcatStrategy {
            a: a.clone(),
            b: b.clone(),
            a_msgs,
            a_draws,
            order,
        }),
    })
}

/// Adjoins the common part `K = k1(X1) = k2(X2)` to `q`.
///
/// Fails with a common-part error naming an atom where the maps disagree, and
/// with a model error unless `(X1, X2) - K - (other variables)` holds.
pub fn extract_common(q: &JointPmf, x1: &str, x2: &str, k1: &[usize], k2: &[usize], k_name: &str) -> Result<JointPmf> {
    let i1 = q.var_index(x1)?;
    let i2 = q.var_index(x2)?;
    let v1 = q.vars()[i1].clone();
    let v2 = q.vars()[i2].clone();
    if k1.len() != v1.size() || k2.len() != v2.size() {
        return Err(Error::Argument("common-part maps must be total on their alphabets".into()));
    }
    let k_size = k1.iter().chain(k2).max().map_or(1, |m| m + 1);
    let sizes = q.sizes();
    let mut odo = Odometer::new(&sizes);
    let mut at = 0;
    while let Some(a) = odo.current() {
        let p = q.probs()[at];
        if p > 0.0 && k1[a[i1]] != k2[a[i2]] {
            return Err(Error::CommonPart { atom: q.describe(a), prob: p });
        }
        at += 1;
        odo.advance();
    }
    let k = Variable::with_size(k_name, k_size);
    let channel = ConditionalPmf::deterministic(k, vec![v1], |g| k1[g[0]])?;
    let out = q.chain(&channel)?;
    let rest: Vec<&str> = q.names().into_iter().filter(|n| *n != x1 && *n != x2).collect();
    if !rest.is_empty() {
        let res = mutual_info(&out, &[x1, x2], &rest, &[k_name])?;
        if res > MARKOV_TOLERANCE {
            return Err(Error::Model(format!(
                "the demand depends on the inputs beyond the common part: I = {res:.3e} bits"
            )));
        }
    }
    Ok(out)
}
