//! Outer-region membership, inner-bound points and their consistency.

use serde::{Deserialize, Serialize};

use super::{
    build_problem, minimize_outer, minimize_t1, min_increment, one_round_chain, Budget, Demand, Family,
    RatePoint, RegionCertificate, RegionTag,
};
use crate::dist::info::l1;
use crate::dist::{entropy, mutual_info, JointPmf};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictKind {
    NotExcluded,
    ExcludedBySearch,
    CertifiedOutside,
}

impl std::fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VerdictKind::NotExcluded => "not-excluded",
            VerdictKind::ExcludedBySearch => "excluded-by-search",
            VerdictKind::CertifiedOutside => "certified-outside",
        })
    }
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub kind: VerdictKind,
    /// One or two certificates whose convex combination the point dominates.
    pub witnesses: Vec<RegionCertificate>,
    pub reason: String,
    /// Minimizations run.
    pub searches: usize,
    /// Grid points evaluated.
    pub grid_points: u64,
    /// Grid step, when a grid was used.
    pub resolution: Option<f64>,
}

/// Search limits for membership checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchBudget {
    pub budget: Budget,
    /// Weight directions tried for `R2`/`R3`.
    pub directions: usize,
    /// Auxiliary cardinalities; the caps when absent.
    pub cards: Option<Vec<usize>>,
    /// Grid denominator (`1/resolution` steps).
    pub resolution: u32,
    /// Largest grid scanned.
    pub grid_cap: u64,
    /// Slack allowed when comparing a point against bounds.
    pub tolerance: f64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            budget: Budget::default(),
            directions: 5,
            cards: None,
            resolution: 32,
            grid_cap: 1 << 22,
            tolerance: 1e-6,
        }
    }
}

/// Grids are only offered for models with at most this many free parameters.
const GRID_PARAMETERS: usize = 12;

fn default_cards(d: &Demand, tag: RegionTag) -> Vec<usize> {
    match tag {
        RegionTag::R2(r) => {
            let mut cards = Vec::with_capacity(r);
            for _ in 0..r {
                let c = d.f_cap(&cards);
                cards.push(c);
            }
            cards
        }
        _ => vec![d.u_cap()],
    }
}

/// Whether `p + tol` dominates a point of the segment `[a, b]`.
fn dominates_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64), tol: f64) -> bool {
    // t a + (1 - t) b <= p + tol componentwise, t in [0, 1].
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for (pk, ak, bk) in [(p.0, a.0, b.0), (p.1, a.1, b.1)] {
        let slope = ak - bk;
        let room = pk + tol - bk;
        if slope > 0.0 {
            hi = hi.min(room / slope);
        } else if slope < 0.0 {
            lo = lo.max(room / slope);
        } else if room < 0.0 {
            return false;
        }
    }
    lo <= hi
}

/// Indices of at most two corner sets whose convex hull, pushed up and
/// right, contains `p`.
fn find_witness(p: (f64, f64), corners: &[[(f64, f64); 2]], tol: f64) -> Option<(usize, usize)> {
    for i in 0..corners.len() {
        for j in i..corners.len() {
            for a in corners[i] {
                for b in corners[j] {
                    if dominates_segment(p, a, b, tol) {
                        return Some((i, j));
                    }
                }
            }
        }
    }
    None
}

fn verdict(kind: VerdictKind, reason: impl Into<String>) -> Verdict {
    Verdict {
        kind,
        witnesses: Vec::new(),
        reason: reason.into(),
        searches: 0,
        grid_points: 0,
        resolution: None,
    }
}

/// Tests a rate pair against an outer region.
///
/// The point is not excluded once it dominates a convex combination of at
/// most two certified bound sets found by search. Analytic floors and, for
/// models with at most 12 free parameters, an exhaustive grid (mismatch
/// tolerance equal to the grid step) can certify that it lies outside.
pub fn check_outer_membership(d: &Demand, point: RatePoint, tag: RegionTag, budget: &SearchBudget, seed: u64) -> Result<Verdict> {
    let tol = budget.tolerance;
    let p = (point.r12, point.r21);
    let family = match tag {
        RegionTag::R1 => Family::T1,
        RegionTag::R2(_) => Family::T2,
        RegionTag::R3 => Family::T3,
        other => return Err(Error::Argument(format!("{other} is not an outer region"))),
    };
    let [x1, x2, y1, y2] = d.names();
    let ycoord = d.coordination();
    if tag == RegionTag::R1 {
        let chain = one_round_chain(d)?;
        if chain > super::CERTIFIED_TOLERANCE {
            return Ok(verdict(VerdictKind::CertifiedOutside, format!("one-round chain fails by {chain:.3e}")));
        }
        let floor = mutual_info(d.q(), &[x1, y1], &[y2], &[x2])?;
        if point.r12 < floor - tol {
            return Ok(verdict(VerdictKind::CertifiedOutside, format!("R12 below the floor I({x1}{y1};{y2}|{x2}) = {floor:.6}")));
        }
    } else if point.r12 + point.r21 < ycoord - tol {
        return Ok(verdict(VerdictKind::CertifiedOutside, format!("sum below I({y1};{y2}|{x1}{x2}) = {ycoord:.6}")));
    }
    let cards = budget.cards.clone().unwrap_or_else(|| default_cards(d, tag));
    let directions: Vec<(f64, f64)> = if tag == RegionTag::R1 {
        vec![(1.0, 0.0)]
    } else if budget.directions <= 1 {
        vec![(1.0, 1.0)]
    } else {
        (0..budget.directions)
            .map(|k| {
                let t = std::f64::consts::FRAC_PI_2 * k as f64 / (budget.directions - 1) as f64;
                (t.cos().max(0.0), t.sin().max(0.0))
            })
            .collect()
    };
    let mut pool: Vec<RegionCertificate> = Vec::new();
    let mut searches = 0;
    for (k, &w) in directions.iter().enumerate() {
        let s = derive_seed(seed, &[k as u64]);
        let cert = if tag == RegionTag::R1 {
            minimize_t1(d, cards[0], &budget.budget, s)?
        } else {
            minimize_outer(d, tag, &cards, w, &budget.budget, s)?
        };
        searches += 1;
        if cert.certified {
            pool.push(cert);
        }
        let corners: Vec<_> = pool.iter().map(|c| c.bounds.corners()).collect();
        if let Some((i, j)) = find_witness(p, &corners, tol) {
            let mut witnesses = vec![pool[i].clone()];
            if j != i {
                witnesses.push(pool[j].clone());
            }
            return Ok(Verdict {
                kind: VerdictKind::NotExcluded,
                witnesses,
                reason: "search".into(),
                searches,
                grid_points: 0,
                resolution: None,
            });
        }
    }
    let problem = build_problem(d, family, &cards, (1.0, 0.0))?;
    let m = budget.resolution.max(1);
    let grid_ok = problem.model.parameter_count() <= GRID_PARAMETERS
        && problem.model.grid_size(m).is_some_and(|g| g <= budget.grid_cap);
    if !grid_ok {
        return Ok(Verdict {
            kind: VerdictKind::ExcludedBySearch,
            witnesses: Vec::new(),
            reason: "no witness found; grid unavailable".into(),
            searches,
            grid_points: 0,
            resolution: None,
        });
    }
    let mut model = problem.model;
    let a = cards.len();
    let aux: Vec<usize> = (0..a).collect();
    let [px1, px2, py1, py2] = [a, a + 1, a + 2, a + 3];
    let exprs = match family {
        Family::T1 => vec![model.mi(&aux, &[px1, py1, py2], &[px2])],
        _ => {
            let mut e = vec![model.mi(&[px1], &aux, &[px2]), model.mi(&[px2], &aux, &[px1])];
            if family == Family::T3 {
                e.push(model.mi(&[px1], &[px2], &aux));
            }
            e
        }
    };
    let step = 1.0 / m as f64;
    let scan = model.grid_scan(&exprs, m, step);
    let ixx = mutual_info(d.q(), &[x1], &[x2], &[])?;
    let corners: Vec<[(f64, f64); 2]> = scan
        .feasible
        .iter()
        .filter(|v| family != Family::T3 || v[2] <= ixx + step)
        .map(|v| {
            let b = if family == Family::T1 {
                super::Bounds { r12: v[0], r21: 0.0, sum: v[0] }
            } else {
                super::Bounds { r12: v[0], r21: v[1], sum: v[0] + v[1] + ycoord }
            };
            b.corners()
        })
        .collect();
    let found = find_witness(p, &corners, tol).is_some();
    Ok(Verdict {
        kind: if found { VerdictKind::NotExcluded } else { VerdictKind::CertifiedOutside },
        witnesses: Vec::new(),
        reason: if found { "grid point within resolution".into() } else { "exhaustive grid".into() },
        searches,
        grid_points: scan.points,
        resolution: Some(step),
    })
}

/// An achievable rate pair and the scheme behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerPoint {
    pub point: RatePoint,
    pub rounds: usize,
    pub provenance: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerBound {
    /// `(H(X1|X2), H(X2|X1))`.
    pub exchange_cost: RatePoint,
    pub points: Vec<InnerPoint>,
}

fn merged_rounds(senders: &[usize]) -> usize {
    let mut rounds = 0;
    let mut last = 0;
    for &s in senders {
        if s != last {
            rounds += 1;
            last = s;
        }
    }
    rounds
}

/// Achievable points: exchange the sources, then run layered soft covering
/// on `aux` (over `layers` followed by the demand variables) with each rate
/// split; plus the direct Slepian-Wolf point when each output is a function
/// of the other node's source.
///
/// A split whose partial sums do not exceed `I(Y1 Y2; F_1..F_s | X1 X2)` is
/// rejected with the violated `s`.
pub fn inner_bound_points(d: &Demand, aux: &JointPmf, layers: &[&str], splits: &[Vec<f64>]) -> Result<InnerBound> {
    let [x1, x2, y1, y2] = d.names();
    let q_aux = aux.marginal(&d.names())?;
    let gap = l1(q_aux.probs(), d.q().probs());
    if gap > 1e-9 {
        return Err(Error::Argument(format!("auxiliary pmf differs from the demand by {gap:.3e} in L1")));
    }
    let mut given: Vec<&str> = layers.to_vec();
    given.extend([x1, x2]);
    let markov = mutual_info(aux, &[y1], &[y2], &given)?;
    if markov > 1e-9 {
        return Err(Error::Model(format!("{y1} - {},{x1},{x2} - {y2} fails by {markov:.3e}", layers.join(","))));
    }
    let info: Vec<f64> = (1..=layers.len())
        .map(|s| mutual_info(aux, &[y1, y2], &layers[..s], &[x1, x2]))
        .collect::<Result<_>>()?;
    let e = d.exchange_cost();
    let mut ex_senders = Vec::new();
    if e.r12 > 0.0 {
        ex_senders.push(1);
    }
    if e.r21 > 0.0 {
        ex_senders.push(2);
    }
    let mut points = Vec::new();
    for (k, split) in splits.iter().enumerate() {
        if split.len() != layers.len() {
            return Err(Error::Argument(format!("split {k} has {} rates for {} layers", split.len(), layers.len())));
        }
        let mut partial = 0.0;
        for (s, (&r, &i)) in split.iter().zip(&info).enumerate() {
            partial += r;
            if !(r > 0.0) || partial <= i {
                return Err(Error::Argument(format!(
                    "split {k}: layer {} slack {:.3e} is not positive",
                    s + 1,
                    partial - i
                )));
            }
        }
        let odd: f64 = split.iter().step_by(2).sum();
        let even: f64 = split.iter().skip(1).step_by(2).sum();
        let mut senders = ex_senders.clone();
        senders.push(1);
        if even > 0.0 {
            senders.push(2);
        }
        points.push(InnerPoint {
            point: RatePoint::new(e.r12 + odd, e.r21 + even)?,
            rounds: merged_rounds(&senders),
            provenance: format!("exchange + soft covering, split {k}"),
        });
    }
    let h = |a: &str, b: &str| entropy(d.q(), &[a], &[b]);
    if h(y1, x2)? <= 1e-12 && h(y2, x1)? <= 1e-12 {
        let pt = RatePoint::new(h(y2, x2)?, h(y1, x1)?)?;
        let mut senders = Vec::new();
        if pt.r12 > 0.0 {
            senders.push(1);
        }
        if pt.r21 > 0.0 {
            senders.push(2);
        }
        points.push(InnerPoint {
            point: pt,
            rounds: merged_rounds(&senders),
            provenance: "Slepian-Wolf exchange of the outputs".into(),
        });
    }
    Ok(InnerBound { exchange_cost: e, points })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub point: RatePoint,
    pub provenance: String,
    pub region: RegionTag,
    pub verdict: VerdictKind,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub rows: Vec<ConsistencyRow>,
    /// Rows whose point was not found inside the region.
    pub violations: Vec<usize>,
    /// Slack used: tolerance plus grid step.
    pub tolerance: f64,
}

/// Checks each inner point against `R3`, `R2(rounds)` and, for one-round
/// points, `R1`.
///
/// Comparisons allow `budget.tolerance + 1/resolution`. `R2` searches use
/// `budget.cards` when it has one entry per round, binary layers otherwise.
pub fn consistency_check(d: &Demand, points: &[InnerPoint], budget: &SearchBudget, seed: u64) -> Result<ConsistencyReport> {
    let slack = budget.tolerance + 1.0 / budget.resolution.max(1) as f64;
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for (i, ip) in points.iter().enumerate() {
        let mut regions = vec![RegionTag::R3];
        if ip.rounds >= 1 {
            regions.push(RegionTag::R2(ip.rounds));
        }
        if ip.rounds <= 1 {
            regions.push(RegionTag::R1);
        }
        for (k, &tag) in regions.iter().enumerate() {
            let mut b = budget.clone();
            b.tolerance = slack;
            b.cards = match tag {
                RegionTag::R2(r) => Some(match &budget.cards {
                    Some(c) if c.len() == r => c.clone(),
                    _ => vec![2; r],
                }),
                _ => match &budget.cards {
                    Some(c) if c.len() == 1 => Some(c.clone()),
                    _ => None,
                },
            };
            let v = check_outer_membership(d, ip.point, tag, &b, derive_seed(seed, &[i as u64, k as u64]))?;
            if v.kind != VerdictKind::NotExcluded {
                violations.push(rows.len());
            }
            rows.push(ConsistencyRow {
                point: ip.point,
                provenance: ip.provenance.clone(),
                region: tag,
                verdict: v.kind,
                reason: v.reason,
            });
        }
    }
    Ok(ConsistencyReport {
        rows,
        violations,
        tolerance: slack,
    })
}

/// One-round converse value and soft-covering increment for a demand with
/// `X1 = X2`.
#[derive(Clone, Debug)]
pub struct Sandwich {
    pub outer: RegionCertificate,
    pub inner: RegionCertificate,
    /// `inner - outer`.
    pub gap: f64,
}

/// Both sides of the one-round sandwich. Requires `X1 = X2` almost surely.
pub fn sandwich(d: &Demand, u_card: usize, budget: &Budget, seed: u64) -> Result<Sandwich> {
    let [x1, x2, ..] = d.names();
    let split = entropy(d.q(), &[x1], &[x2])? + entropy(d.q(), &[x2], &[x1])?;
    if split > 1e-12 {
        return Err(Error::Model(format!("the sandwich needs {x1} = {x2}; H({x1}|{x2}) + H({x2}|{x1}) = {split:.3e}")));
    }
    let outer = minimize_t1(d, u_card, budget, derive_seed(seed, &[1]))?;
    let inner = min_increment(d, u_card, budget, derive_seed(seed, &[2]))?;
    let gap = inner.bounds.r12 - outer.bounds.r12;
    Ok(Sandwich { outer, inner, gap })
}
