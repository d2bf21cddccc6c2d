//! Rate regions: certificates for the one-round, `r`-round and
//! unbounded-round outer bounds, Wyner common information, and inner-bound
//! points from source exchange and soft covering.
//!
//! Auxiliaries are parameterized by factorized conditionals, so every chain
//! constraint holds by construction. Only the match with the demand marginal
//! (and, for `R3`, the constraint `I(X1;X2|U) <= I(X1;X2)`) is penalized.
//! Minimizations are multistart local searches; their values are upper
//! bounds on the true infimum.

mod model;
mod search;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::info::l1;
use crate::dist::io::PmfRecord;
use crate::dist::{entropy, mutual_info, ConditionalPmf, JointPmf, Variable};
use crate::error::{Error, Result};

use model::{Expr, Factor, Model, Outcome, Problem, Settings};

pub use search::{
    check_outer_membership, consistency_check, inner_bound_points, sandwich, ConsistencyReport, ConsistencyRow,
    InnerBound, InnerPoint, Sandwich, SearchBudget, Verdict, VerdictKind,
};

/// Residuals at or below this mark a certificate as certified.
pub const CERTIFIED_TOLERANCE: f64 = 1e-6;

/// Largest joint table an optimizer model may use.
pub const MODEL_CAP: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum RegionTag {
    R1,
    R2(usize),
    R3,
    Inner,
    Wyner,
}

impl fmt::Display for RegionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionTag::R1 => write!(f, "R1"),
            RegionTag::R2(r) => write!(f, "R2({r})"),
            RegionTag::R3 => write!(f, "R3"),
            RegionTag::Inner => write!(f, "inner"),
            RegionTag::Wyner => write!(f, "wyner"),
        }
    }
}

impl FromStr for RegionTag {
    type Err = Error;

    /// Accepts `R1`, `R2(r)`, `R3`, `inner`, `wyner` (case-insensitive).
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "r1" => return Ok(RegionTag::R1),
            "r3" => return Ok(RegionTag::R3),
            "inner" => return Ok(RegionTag::Inner),
            "wyner" => return Ok(RegionTag::Wyner),
            _ => {}
        }
        if let Some(r) = t.strip_prefix("r2(").and_then(|x| x.strip_suffix(')')) {
            if let Ok(r) = r.trim().parse::<usize>() {
                if r >= 1 {
                    return Ok(RegionTag::R2(r));
                }
            }
        }
        Err(Error::Parse(format!("unknown region tag `{s}` (expected R1, R2(r), R3, inner or wyner)")))
    }
}

impl From<RegionTag> for String {
    fn from(t: RegionTag) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for RegionTag {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// A rate pair in bits per symbol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub r12: f64,
    pub r21: f64,
}

impl RatePoint {
    pub fn new(r12: f64, r21: f64) -> Result<Self> {
        if !(r12.is_finite() && r21.is_finite() && r12 >= 0.0 && r21 >= 0.0) {
            return Err(Error::Domain(format!("rate point ({r12}, {r21}) must be finite and nonnegative")));
        }
        Ok(RatePoint { r12, r21 })
    }
}

/// Lower bounds on `R12`, `R21` and `R12 + R21` witnessed by a certificate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub r12: f64,
    pub r21: f64,
    pub sum: f64,
}

impl Bounds {
    /// The two corners of `{a >= r12, b >= r21, a + b >= sum}`.
    pub fn corners(&self) -> [(f64, f64); 2] {
        [
            (self.r12, self.r21.max(self.sum - self.r12)),
            (self.r12.max(self.sum - self.r21), self.r21),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub name: String,
    pub value: f64,
}

/// An auxiliary joint pmf with the bounds it witnesses and how well it
/// satisfies the region's constraints.
#[derive(Clone, Debug)]
pub struct RegionCertificate {
    pub tag: RegionTag,
    /// Over the auxiliary variables followed by the demand variables.
    pub aux: JointPmf,
    pub aux_vars: Vec<String>,
    pub aux_cards: Vec<usize>,
    pub bounds: Bounds,
    /// `Σ |p_aux(x, y) - q(x, y)|`.
    pub mismatch: f64,
    pub residuals: Vec<Residual>,
    pub certified: bool,
    /// Produced by a heuristic search.
    pub upper_bound: bool,
}

/// Serialized form of a certificate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub tag: RegionTag,
    pub aux_vars: Vec<String>,
    pub aux_cards: Vec<usize>,
    pub bounds: Bounds,
    pub mismatch: f64,
    pub residuals: Vec<Residual>,
    pub certified: bool,
    pub upper_bound: bool,
    pub aux: PmfRecord,
}

impl RegionCertificate {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.value).fold(0.0, f64::max)
    }

    pub fn to_record(&self) -> CertificateRecord {
        CertificateRecord {
            tag: self.tag,
            aux_vars: self.aux_vars.clone(),
            aux_cards: self.aux_cards.clone(),
            bounds: self.bounds,
            mismatch: self.mismatch,
            residuals: self.residuals.clone(),
            certified: self.certified,
            upper_bound: self.upper_bound,
            aux: PmfRecord::from_pmf(&self.aux),
        }
    }
}

/// Budget of a multistart minimization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    pub restarts: usize,
    pub iters: usize,
    /// Projected-gradient steps after restoration.
    pub polish: usize,
    /// Mismatch penalty, bits per unit L1.
    pub lambda: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            restarts: 32,
            iters: 2000,
            polish: 60,
            lambda: 100.0,
        }
    }
}

impl Budget {
    fn settings(&self) -> Settings {
        Settings {
            iters: self.iters,
            polish: self.polish,
            lambda: self.lambda,
        }
    }
}

/// A demand `q(x1, x2, y1, y2)` with its variables in that order.
#[derive(Clone, Debug)]
pub struct Demand {
    q: JointPmf,
    names: [String; 4],
}

impl Demand {
    /// Marginalizes `q` onto `[x1, x2, y1, y2]`.
    pub fn new(q: &JointPmf, names: [&str; 4]) -> Result<Self> {
        let q = q.marginal(&names)?;
        Ok(Demand {
            q,
            names: names.map(String::from),
        })
    }

    /// The first four variables of `q`, in order.
    pub fn from_pmf(q: &JointPmf) -> Result<Self> {
        let n = q.names();
        if n.len() != 4 {
            return Err(Error::Argument(format!(
                "a demand needs exactly four variables (X1, X2, Y1, Y2), got {}",
                n.len()
            )));
        }
        Demand::new(q, [n[0], n[1], n[2], n[3]])
    }

    pub fn q(&self) -> &JointPmf {
        &self.q
    }

    pub fn names(&self) -> [&str; 4] {
        [&self.names[0], &self.names[1], &self.names[2], &self.names[3]]
    }

    pub fn sizes(&self) -> [usize; 4] {
        let s = self.q.sizes();
        [s[0], s[1], s[2], s[3]]
    }

    fn n(&self, i: usize) -> &str {
        &self.names[i]
    }

    /// `I(Y1;Y2|X1X2)`, the sum-bound floor.
    pub fn coordination(&self) -> f64 {
        mutual_info(&self.q, &[self.n(2)], &[self.n(3)], &[self.n(0), self.n(1)]).expect("demand variables")
    }

    /// `(H(X1|X2), H(X2|X1))`.
    pub fn exchange_cost(&self) -> RatePoint {
        let h = |a: &str, b: &str| entropy(&self.q, &[a], &[b]).expect("demand variables");
        RatePoint {
            r12: h(self.n(0), self.n(1)),
            r21: h(self.n(1), self.n(0)),
        }
    }

    /// `|X1||Y1||X2||Y2| + 1`.
    pub fn u_cap(&self) -> usize {
        self.q.len() + 1
    }

    /// Cap for the next layer given the previous layer sizes.
    pub fn f_cap(&self, previous: &[usize]) -> usize {
        previous.iter().product::<usize>().saturating_mul(self.q.len()).saturating_add(1)
    }

    fn demand_vars(&self) -> Vec<Variable> {
        self.q.vars().to_vec()
    }

    fn check_aux_names(&self, aux: &[String]) -> Result<()> {
        for a in aux {
            if self.names.contains(a) {
                return Err(Error::Argument(format!("auxiliary name `{a}` clashes with a demand variable")));
            }
        }
        Ok(())
    }
}

/// Positions of the demand variables after `a` auxiliaries.
fn pos(a: usize) -> [usize; 4] {
    [a, a + 1, a + 2, a + 3]
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Family {
    T1,
    T2,
    T3,
    Inner,
}

fn aux_names(family: Family, count: usize) -> Vec<String> {
    match family {
        Family::T2 => (1..=count).map(|i| format!("F{i}")).collect(),
        _ => vec!["U".to_string()],
    }
}

/// Factor model of a family, with the given auxiliary cardinalities.
fn build_model(d: &Demand, family: Family, cards: &[usize]) -> Result<Model> {
    let a = cards.len();
    let [x1, x2, y1, y2] = pos(a);
    let ds = d.sizes();
    let mut sizes = cards.to_vec();
    sizes.extend(ds);
    let len = sizes.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s));
    match len {
        Some(l) if l <= MODEL_CAP => {}
        _ => {
            let need = sizes.iter().map(|&s| s as u128).product::<u128>();
            return Err(Error::resource("auxiliary model table", need, MODEL_CAP as u128));
        }
    }
    let qx = d.q.marginal(&[d.n(0), d.n(1)])?;
    let f = |target: usize, given: Vec<usize>| Factor { target, given };
    let factors = match family {
        Family::T1 => vec![f(0, vec![x1]), f(y1, vec![0, x1]), f(y2, vec![0, x2])],
        Family::T3 => vec![f(0, vec![x1, x2]), f(y1, vec![0, x1]), f(y2, vec![0, x2])],
        Family::Inner => vec![f(0, vec![x1, x2]), f(y1, vec![0, x1, x2]), f(y2, vec![0, x1, x2])],
        Family::T2 => {
            let mut v: Vec<Factor> = (0..a)
                .map(|i| {
                    let mut g: Vec<usize> = (0..i).collect();
                    g.push(if i % 2 == 0 { x1 } else { x2 });
                    f(i, g)
                })
                .collect();
            let all: Vec<usize> = (0..a).collect();
            v.push(f(y1, [all.clone(), vec![x1]].concat()));
            v.push(f(y2, [all, vec![x2]].concat()));
            v
        }
    };
    Ok(Model::new(sizes, &[x1, x2], qx.probs().to_vec(), &factors, &[x1, x2, y1, y2], d.q.probs().to_vec()))
}

/// Objective and hinge constraints for a family.
fn build_problem(d: &Demand, family: Family, cards: &[usize], weights: (f64, f64)) -> Result<Problem> {
    let mut model = build_model(d, family, cards)?;
    let a = cards.len();
    let [x1, x2, y1, y2] = pos(a);
    let aux: Vec<usize> = (0..a).collect();
    let mut hinges = Vec::new();
    let objective: Expr = match family {
        Family::T1 => model.mi(&aux, &[x1, y1, y2], &[x2]),
        Family::Inner => model.mi(&[y1, y2], &aux, &[x1, x2]),
        Family::T2 | Family::T3 => {
            let mut e: Expr = Vec::new();
            if weights.0 != 0.0 {
                e.extend(model.mi(&[x1], &aux, &[x2]).into_iter().map(|(c, s)| (weights.0 * c, s)));
            }
            if weights.1 != 0.0 {
                e.extend(model.mi(&[x2], &aux, &[x1]).into_iter().map(|(c, s)| (weights.1 * c, s)));
            }
            if family == Family::T3 {
                let bound = mutual_info(&d.q, &[d.n(0)], &[d.n(1)], &[])?;
                hinges.push((model.mi(&[x1], &[x2], &aux), bound));
            }
            e
        }
    };
    Ok(Problem {
        model,
        objective,
        hinges,
    })
}

fn joint_pmf(d: &Demand, aux: &[String], cards: &[usize], probs: Vec<f64>) -> Result<JointPmf> {
    let mut vars: Vec<Variable> = aux.iter().zip(cards).map(|(n, &c)| Variable::with_size(n.clone(), c)).collect();
    vars.extend(d.demand_vars());
    JointPmf::new(vars, probs)
}

fn chain_name(left: &[&str], mid: &[&str], right: &[&str]) -> String {
    format!("{} - {} - {}", left.join(","), mid.join(","), right.join(","))
}

fn residual(p: &JointPmf, left: &[&str], mid: &[&str], right: &[&str]) -> Result<Residual> {
    Ok(Residual {
        name: chain_name(left, mid, right),
        value: mutual_info(p, left, right, mid)?,
    })
}

/// Recomputes bounds and residuals of an auxiliary joint from scratch.
fn certify(d: &Demand, tag: RegionTag, aux: JointPmf, aux_vars: Vec<String>, upper_bound: bool) -> Result<RegionCertificate> {
    let [x1, x2, y1, y2] = d.names();
    let a: Vec<&str> = aux_vars.iter().map(String::as_str).collect();
    let aux_cards: Vec<usize> = a.iter().map(|n| aux.var(n).map(Variable::size)).collect::<Result<_>>()?;
    let mismatch = l1(aux.marginal(&d.names())?.probs(), d.q.probs());
    fn with<'a>(a: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
        a.iter().chain(extra).copied().collect()
    }
    let mi = |l: &[&str], r: &[&str], c: &[&str]| mutual_info(&aux, l, r, c);
    let ycoord = d.coordination();
    let (bounds, residuals) = match tag {
        RegionTag::R1 => {
            let rate = mi(&a, &[x1, y1, y2], &[x2])?;
            let res = vec![
                residual(&aux, &a, &[x1], &[x2])?,
                residual(&aux, &[y1], &with(&a, &[x1]), &[x2, y2])?,
                residual(&aux, &[y2], &with(&a, &[x2]), &[x1, y1])?,
            ];
            (Bounds { r12: rate, r21: 0.0, sum: rate }, res)
        }
        RegionTag::R2(r) => {
            if a.len() != r {
                return Err(Error::Argument(format!("R2({r}) needs {r} auxiliary layers, got {}", a.len())));
            }
            let r12 = mi(&[x1], &a, &[x2])?;
            let r21 = mi(&[x2], &a, &[x1])?;
            let mut res = Vec::new();
            for i in 0..r {
                let (own, other) = if i % 2 == 0 { (x1, x2) } else { (x2, x1) };
                let mut mid: Vec<&str> = a[..i].to_vec();
                mid.push(own);
                res.push(residual(&aux, &[a[i]], &mid, &[other])?);
            }
            res.push(residual(&aux, &[y1], &with(&a, &[x1]), &[x2, y2])?);
            res.push(residual(&aux, &[y2], &with(&a, &[x2]), &[x1, y1])?);
            (Bounds { r12, r21, sum: r12 + r21 + ycoord }, res)
        }
        RegionTag::R3 => {
            let r12 = mi(&[x1], &a, &[x2])?;
            let r21 = mi(&[x2], &a, &[x1])?;
            let excess = mi(&[x1], &[x2], &a)? - mutual_info(&d.q, &[x1], &[x2], &[])?;
            let res = vec![
                Residual {
                    name: format!("I({x1};{x2}|{}) <= I({x1};{x2})", a.join(",")),
                    value: excess.max(0.0),
                },
                residual(&aux, &[y1], &with(&a, &[x1]), &[x2, y2])?,
                residual(&aux, &[y2], &with(&a, &[x2]), &[x1, y1])?,
            ];
            (Bounds { r12, r21, sum: r12 + r21 + ycoord }, res)
        }
        RegionTag::Inner => {
            let v = mi(&[y1, y2], &a, &[x1, x2])?;
            let res = vec![residual(&aux, &[y1], &with(&a, &[x1, x2]), &[y2])?];
            (Bounds { r12: v, r21: 0.0, sum: v }, res)
        }
        RegionTag::Wyner => return Err(Error::Argument("use wyner_ci for Wyner certificates".into())),
    };
    let certified = mismatch <= CERTIFIED_TOLERANCE && residuals.iter().all(|r| r.value <= CERTIFIED_TOLERANCE);
    Ok(RegionCertificate {
        tag,
        aux,
        aux_vars,
        aux_cards,
        bounds,
        mismatch,
        residuals,
        certified,
        upper_bound,
    })
}

/// Checks that `ch` is `p(target | given)` with the expected names, and the
/// target alphabet when given.
fn check_channel(ch: &ConditionalPmf, target: Option<&Variable>, given: &[&Variable], what: &str) -> Result<()> {
    if ch.target().len() != 1 {
        return Err(Error::Argument(format!("{what}: expected a single target variable")));
    }
    if let Some(t) = target {
        if &ch.target()[0] != t {
            return Err(Error::Shape(format!(
                "{what}: target must be `{}` with {} symbols",
                t.name,
                t.size()
            )));
        }
    }
    let names: Vec<&str> = ch.given().iter().map(|v| v.name.as_str()).collect();
    let expect: Vec<&str> = given.iter().map(|v| v.name.as_str()).collect();
    if names != expect {
        return Err(Error::Shape(format!(
            "{what}: must be conditioned on ({}), got ({})",
            expect.join(","),
            names.join(",")
        )));
    }
    for (g, e) in ch.given().iter().zip(given) {
        if g != *e {
            return Err(Error::Shape(format!("{what}: alphabet of `{}` differs", g.name)));
        }
    }
    Ok(())
}

fn check_cap(name: &str, card: usize, cap: usize) -> Result<()> {
    if card == 0 || card > cap {
        return Err(Error::Argument(format!("|{name}| = {card} violates the cardinality cap {cap}")));
    }
    Ok(())
}

/// One-round certificate from `q(x1,x2) p(u|x1) p(y1|u,x1) p(y2|u,x2)`.
pub fn eval_t1(
    d: &Demand,
    p_u_given_x1: &ConditionalPmf,
    p_y1_given_ux1: &ConditionalPmf,
    p_y2_given_ux2: &ConditionalPmf,
) -> Result<RegionCertificate> {
    let v = d.demand_vars();
    check_channel(p_u_given_x1, None, &[&v[0]], "p(u|x1)")?;
    let u = p_u_given_x1.target()[0].clone();
    d.check_aux_names(&[u.name.clone()])?;
    check_cap(&u.name, u.size(), d.u_cap())?;
    check_channel(p_y1_given_ux1, Some(&v[2]), &[&u, &v[0]], "p(y1|u,x1)")?;
    check_channel(p_y2_given_ux2, Some(&v[3]), &[&u, &v[1]], "p(y2|u,x2)")?;
    let joint = d
        .q
        .marginal(&[d.n(0), d.n(1)])?
        .chain(p_u_given_x1)?
        .chain(p_y1_given_ux1)?
        .chain(p_y2_given_ux2)?;
    let joint = joint.reorder(&[&u.name, d.n(0), d.n(1), d.n(2), d.n(3)])?;
    certify(d, RegionTag::R1, joint, vec![u.name], false)
}

/// `r`-round certificate from layer channels `p(f_i | f_{1:i-1}, x1)` (odd
/// `i`) or `p(f_i | f_{1:i-1}, x2)` (even `i`) and the output channels
/// `p(y1 | f, x1)`, `p(y2 | f, x2)`.
pub fn eval_t2(
    d: &Demand,
    layers: &[ConditionalPmf],
    p_y1: &ConditionalPmf,
    p_y2: &ConditionalPmf,
) -> Result<RegionCertificate> {
    if layers.is_empty() {
        return Err(Error::Argument("at least one layer is needed".into()));
    }
    let v = d.demand_vars();
    let mut fs: Vec<Variable> = Vec::new();
    for (i, ch) in layers.iter().enumerate() {
        let own = if i % 2 == 0 { &v[0] } else { &v[1] };
        let mut given: Vec<&Variable> = fs.iter().collect();
        given.push(own);
        check_channel(ch, None, &given, &format!("layer {}", i + 1))?;
        let f = ch.target()[0].clone();
        let sizes: Vec<usize> = fs.iter().map(Variable::size).collect();
        check_cap(&f.name, f.size(), d.f_cap(&sizes))?;
        fs.push(f);
    }
    let names: Vec<String> = fs.iter().map(|f| f.name.clone()).collect();
    d.check_aux_names(&names)?;
    let given1: Vec<&Variable> = fs.iter().chain(std::iter::once(&v[0])).collect();
    let given2: Vec<&Variable> = fs.iter().chain(std::iter::once(&v[1])).collect();
    check_channel(p_y1, Some(&v[2]), &given1, "p(y1|f,x1)")?;
    check_channel(p_y2, Some(&v[3]), &given2, "p(y2|f,x2)")?;
    let mut joint = d.q.marginal(&[d.n(0), d.n(1)])?;
    for ch in layers {
        joint = joint.chain(ch)?;
    }
    let joint = joint.chain(p_y1)?.chain(p_y2)?;
    let mut order: Vec<&str> = names.iter().map(String::as_str).collect();
    order.extend(d.names());
    let joint = joint.reorder(&order)?;
    certify(d, RegionTag::R2(layers.len()), joint, names, false)
}

/// Unbounded-round certificate from `q(x1,x2) p(u|x1,x2) p(y1|u,x1) p(y2|u,x2)`.
pub fn eval_t3(
    d: &Demand,
    p_u_given_x: &ConditionalPmf,
    p_y1_given_ux1: &ConditionalPmf,
    p_y2_given_ux2: &ConditionalPmf,
) -> Result<RegionCertificate> {
    let v = d.demand_vars();
    check_channel(p_u_given_x, None, &[&v[0], &v[1]], "p(u|x1,x2)")?;
    let u = p_u_given_x.target()[0].clone();
    d.check_aux_names(&[u.name.clone()])?;
    check_cap(&u.name, u.size(), d.u_cap())?;
    check_channel(p_y1_given_ux1, Some(&v[2]), &[&u, &v[0]], "p(y1|u,x1)")?;
    check_channel(p_y2_given_ux2, Some(&v[3]), &[&u, &v[1]], "p(y2|u,x2)")?;
    let joint = d
        .q
        .marginal(&[d.n(0), d.n(1)])?
        .chain(p_u_given_x)?
        .chain(p_y1_given_ux1)?
        .chain(p_y2_given_ux2)?;
    let joint = joint.reorder(&[&u.name, d.n(0), d.n(1), d.n(2), d.n(3)])?;
    certify(d, RegionTag::R3, joint, vec![u.name], false)
}

/// `R3` certificate of `U = F_{1:r}` built from an `R2(r)` certificate.
///
/// The merged `U` keeps all `Π |F_i|` symbols, so it may exceed the `R3`
/// cardinality cap.
pub fn collapse(d: &Demand, cert: &RegionCertificate) -> Result<RegionCertificate> {
    if !matches!(cert.tag, RegionTag::R2(_)) {
        return Err(Error::Argument(format!("collapse needs an R2 certificate, got {}", cert.tag)));
    }
    let card: usize = cert.aux_cards.iter().product();
    let labels: Vec<String> = {
        let vars = &cert.aux.vars()[..cert.aux_cards.len()];
        let sizes: Vec<usize> = cert.aux_cards.clone();
        let mut out = Vec::with_capacity(card);
        let mut odo = crate::dist::Odometer::new(&sizes);
        while let Some(a) = odo.current() {
            out.push(a.iter().zip(vars).map(|(&i, v)| v.alphabet[i].clone()).collect::<Vec<_>>().join("."));
            odo.advance();
        }
        out
    };
    let mut vars = vec![Variable::new("U", labels)];
    vars.extend(d.demand_vars());
    d.check_aux_names(&["U".to_string()])?;
    let aux = JointPmf::new(vars, cert.aux.probs().to_vec())?;
    certify(d, RegionTag::R3, aux, vec!["U".into()], cert.upper_bound)
}

/// Deterministic choice among restarts: certified outcomes by objective,
/// then restart index; otherwise the smallest mismatch.
fn pick_best(outcomes: &[Outcome]) -> usize {
    let ok = |o: &Outcome| o.mismatch <= CERTIFIED_TOLERANCE && o.hinge_excess <= CERTIFIED_TOLERANCE;
    let mut best: Option<usize> = None;
    for (i, o) in outcomes.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let ob = &outcomes[b];
                let better = match (ok(o), ok(ob)) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => o.objective < ob.objective,
                    (false, false) => o.mismatch < ob.mismatch,
                };
                Some(if better { i } else { b })
            }
        };
    }
    best.expect("at least one restart")
}

fn minimize(d: &Demand, family: Family, tag: RegionTag, cards: &[usize], weights: (f64, f64), budget: &Budget, seed: u64) -> Result<RegionCertificate> {
    if budget.restarts == 0 {
        return Err(Error::Argument("at least one restart is needed".into()));
    }
    let names = aux_names(family, cards.len());
    d.check_aux_names(&names)?;
    let problem = build_problem(d, family, cards, weights)?;
    let outcomes = problem.multistart(budget.restarts, seed, &budget.settings());
    let best = &outcomes[pick_best(&outcomes)];
    let probs = problem.model.joint(&best.params);
    let aux = joint_pmf(d, &names, cards, probs)?;
    certify(d, tag, aux, names, true)
}

/// Heuristic minimum of the one-round bound `I(U; X1 Y1 Y2 | X2)` over the
/// one-round auxiliaries with `|U| = u_card`.
///
/// Fails with a model error when the demand violates `Y1 - X1 - X2`, which
/// rules out one-round generation altogether.
pub fn minimize_t1(d: &Demand, u_card: usize, budget: &Budget, seed: u64) -> Result<RegionCertificate> {
    let r = one_round_chain(d)?;
    if r > CERTIFIED_TOLERANCE {
        let [x1, x2, y1, _] = d.names();
        return Err(Error::Model(format!(
            "{} fails by {r:.3e} bits; the demand is not attainable with one round",
            chain_name(&[y1], &[x1], &[x2])
        )));
    }
    check_cap("U", u_card, d.u_cap())?;
    minimize(d, Family::T1, RegionTag::R1, &[u_card], (1.0, 0.0), budget, seed)
}

/// `I(Y1; X2 | X1)` on the demand.
pub fn one_round_chain(d: &Demand) -> Result<f64> {
    mutual_info(&d.q, &[d.n(2)], &[d.n(1)], &[d.n(0)])
}

/// Heuristic minimum of `w12 R12 + w21 R21` over `R2(r)` (one card per
/// layer) or `R3` certificates.
pub fn minimize_outer(
    d: &Demand,
    tag: RegionTag,
    cards: &[usize],
    weights: (f64, f64),
    budget: &Budget,
    seed: u64,
) -> Result<RegionCertificate> {
    if !(weights.0 >= 0.0 && weights.1 >= 0.0 && weights.0 + weights.1 > 0.0) {
        return Err(Error::Argument("weights must be nonnegative and not both zero".into()));
    }
    match tag {
        RegionTag::R2(r) => {
            if cards.len() != r {
                return Err(Error::Argument(format!("R2({r}) needs {r} layer cardinalities")));
            }
            for i in 0..r {
                check_cap(&format!("F{}", i + 1), cards[i], d.f_cap(&cards[..i]))?;
            }
            minimize(d, Family::T2, tag, cards, weights, budget, seed)
        }
        RegionTag::R3 => {
            if cards.len() != 1 {
                return Err(Error::Argument("R3 needs one auxiliary cardinality".into()));
            }
            check_cap("U", cards[0], d.u_cap())?;
            minimize(d, Family::T3, tag, cards, weights, budget, seed)
        }
        other => Err(Error::Argument(format!("minimize_outer handles R2(r) and R3, not {other}"))),
    }
}

/// Heuristic minimum of the soft-covering increment `I(Y1 Y2; U | X1 X2)`
/// over `U` with `Y1 - U X1 X2 - Y2`.
pub fn min_increment(d: &Demand, u_card: usize, budget: &Budget, seed: u64) -> Result<RegionCertificate> {
    check_cap("U", u_card, d.u_cap())?;
    minimize(d, Family::Inner, RegionTag::Inner, &[u_card], (1.0, 0.0), budget, seed)
}

/// Heuristic Wyner common information of a two-variable pmf: the minimum of
/// `I(U; A B)` over `p(u) p(a|u) p(b|u)` matching `q2`.
pub fn wyner_ci(q2: &JointPmf, u_card: usize, budget: &Budget, seed: u64) -> Result<(f64, RegionCertificate)> {
    let names = q2.names();
    if names.len() != 2 {
        return Err(Error::Argument(format!("Wyner common information needs two variables, got {}", names.len())));
    }
    if names.contains(&"U") {
        return Err(Error::Argument("auxiliary name `U` clashes with an input variable".into()));
    }
    check_cap("U", u_card, q2.len() + 1)?;
    if budget.restarts == 0 {
        return Err(Error::Argument("at least one restart is needed".into()));
    }
    let s = q2.sizes();
    let factors = [
        Factor { target: 0, given: vec![] },
        Factor { target: 1, given: vec![0] },
        Factor { target: 2, given: vec![0] },
    ];
    let mut model = Model::new(vec![u_card, s[0], s[1]], &[], vec![1.0], &factors, &[1, 2], q2.probs().to_vec());
    let objective = model.mi(&[0], &[1, 2], &[]);
    let problem = Problem {
        model,
        objective,
        hinges: vec![],
    };
    let outcomes = problem.multistart(budget.restarts, seed, &budget.settings());
    let best = &outcomes[pick_best(&outcomes)];
    let mut vars = vec![Variable::with_size("U", u_card)];
    vars.extend(q2.vars().iter().cloned());
    let aux = JointPmf::new(vars, problem.model.joint(&best.params))?;
    let value = mutual_info(&aux, &["U"], &names, &[])?;
    let mismatch = l1(aux.marginal(&names)?.probs(), q2.probs());
    let residuals = vec![residual(&aux, &[names[0]], &["U"], &[names[1]])?];
    let certified = mismatch <= CERTIFIED_TOLERANCE && residuals[0].value <= CERTIFIED_TOLERANCE;
    let cert = RegionCertificate {
        tag: RegionTag::Wyner,
        aux,
        aux_vars: vec!["U".into()],
        aux_cards: vec![u_card],
        bounds: Bounds {
            r12: value,
            r21: 0.0,
            sum: value,
        },
        mismatch,
        residuals,
        certified,
        upper_bound: true,
    };
    Ok((value, cert))
}
