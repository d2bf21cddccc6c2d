//! Subcommand bodies. Each returns the bytes to write so that the caller
//! decides where they go.

use std::time::Instant;

use coordgen::dist::{entropy, markov_residual, mutual_info, JointPmf, MarkovChain, Variable};
use coordgen::protocol::{
    concatenate, demand_pmf, estimate_block_error, make_exchange_protocol, make_softcover_protocol,
    run_protocol, Mode, ProtocolDef,
};
use coordgen::regions::{
    check_outer_membership, min_increment, minimize_outer, minimize_t1, wyner_ci, CertificateRecord, Demand,
    RatePoint, RegionCertificate, RegionTag, SearchBudget,
};
use coordgen::rng::derive_seed;
use coordgen::softcover::{rate_sweep, write_sweep_csv, SoftcoverSpec};
use coordgen::VERSION;
use serde::Serialize;

use crate::config::{read, InfoConfig, Metric, RegionConfig, RunMode, Scheme, SimulateConfig, SoftcoverConfig};
use crate::error::{CliError, CliResult};

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Core(e.into())
}

pub fn info(cfg: &InfoConfig) -> CliResult<Vec<u8>> {
    let p = read(&cfg.pmf)?;
    let names = p.names();
    let mut rows: Vec<(String, f64)> = Vec::new();
    for &a in &names {
        rows.push((format!("H({a})"), entropy(&p, &[a], &[])?));
    }
    for (i, &a) in names.iter().enumerate() {
        for &b in &names[i + 1..] {
            rows.push((format!("I({a};{b})"), mutual_info(&p, &[a], &[b], &[])?));
        }
    }
    let demand: Option<Vec<&str>> = match &cfg.demand {
        Some(d) if d.len() != 4 => {
            return Err(CliError::Data(format!("field `demand`: expected 4 names, got {}", d.len())))
        }
        Some(d) => Some(refs(d)),
        None if names.len() == 4 => Some(names.clone()),
        None => None,
    };
    if let Some(d) = demand {
        let [x1, x2, y1, y2] = [d[0], d[1], d[2], d[3]];
        rows.push((format!("H({x1}|{x2})"), entropy(&p, &[x1], &[x2])?));
        rows.push((format!("H({x2}|{x1})"), entropy(&p, &[x2], &[x1])?));
        rows.push((format!("I({y1};{x2}|{x1})"), mutual_info(&p, &[y1], &[x2], &[x1])?));
        rows.push((format!("I({y2};{x1}|{x2})"), mutual_info(&p, &[y2], &[x1], &[x2])?));
        rows.push((format!("I({x1}{y1};{y2}|{x2})"), mutual_info(&p, &[x1, y1], &[y2], &[x2])?));
        rows.push((format!("I({x2}{y2};{y1}|{x1})"), mutual_info(&p, &[x2, y2], &[y1], &[x1])?));
        rows.push((format!("I({y1};{y2}|{x1}{x2})"), mutual_info(&p, &[y1], &[y2], &[x1, x2])?));
    }
    for m in &cfg.markov {
        let chain = MarkovChain::parse(m)?;
        rows.push((format!("markov {m}"), markov_residual(&p, &chain)?));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["quantity", "bits", "version"]).map_err(csv_err)?;
    for (q, v) in rows {
        w.write_record([q, format!("{v:?}"), VERSION.to_string()]).map_err(csv_err)?;
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

/// Sweep rows for every cell that succeeded, and the first failure.
pub fn softcover(cfg: &SoftcoverConfig, seed: u64, timing: bool) -> CliResult<(Vec<u8>, Option<CliError>)> {
    let base = read(&cfg.pmf)?;
    let r = cfg.layers.len();
    let results = if cfg.rates.is_empty() || cfg.n.is_empty() {
        Vec::new()
    } else {
        let spec = SoftcoverSpec::new(&base, &refs(&cfg.layers), &refs(&cfg.v_vars), &refs(&cfg.x_vars), &vec![0.0; r], 1)?;
        let spec = match cfg.caps {
            Some(c) => spec.with_caps(c)?,
            None => spec,
        };
        rate_sweep(&spec, &cfg.rates, &cfg.n, cfg.replicates, seed)
    };
    let mut records = Vec::new();
    let mut failure = None;
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok(rec) => {
                if timing {
                    log::info!("cell {i}: n = {}, {:.3} s", rec.n, rec.seconds);
                }
                records.push(rec);
            }
            Err(e) => {
                log::error!("cell {i}: {e}");
                failure.get_or_insert(CliError::Core(e));
            }
        }
    }
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, r, &records, timing)?;
    Ok((buf, failure))
}

struct SimRow {
    n: usize,
    rates: (f64, f64),
    rounds: usize,
    value: f64,
    trials: Option<usize>,
}

fn need<'a, T>(v: &'a Option<T>, field: &str, scheme: &str) -> CliResult<&'a T> {
    v.as_ref()
        .ok_or_else(|| CliError::Data(format!("scheme `{scheme}` needs field `{field}`")))
}

/// Source over the node inputs, with `node_x[0][k] = node_x[1][k] = x_vars[k]`.
fn common_source(base: &JointPmf, x_vars: &[&str], node_x: &[Vec<String>; 2]) -> CliResult<JointPmf> {
    if x_vars.is_empty() {
        return Ok(JointPmf::uniform(vec![Variable::with_size("_", 1)])?);
    }
    let m = base.marginal(x_vars)?;
    let k = x_vars.len();
    let mut vars = Vec::with_capacity(2 * k);
    for side in node_x {
        for (v, name) in m.vars().iter().zip(side) {
            vars.push(v.renamed(name.clone()));
        }
    }
    Ok(JointPmf::from_fn(vars, |a| if a[..k] == a[k..] { m.prob(&a[..k]) } else { 0.0 })?)
}

/// Target over node inputs and outputs, matching [`common_source`].
fn common_target(base: &JointPmf, x_vars: &[&str], node_x: &[Vec<String>; 2], y: &[&str]) -> CliResult<JointPmf> {
    if x_vars.is_empty() {
        return Ok(base.marginal(y)?);
    }
    let mut keep: Vec<&str> = x_vars.to_vec();
    keep.extend(y);
    let m = base.marginal(&keep)?;
    let k = x_vars.len();
    let mut vars = Vec::new();
    for side in node_x {
        for (v, name) in m.vars().iter().zip(side) {
            vars.push(v.renamed(name.clone()));
        }
    }
    vars.extend(m.vars()[k..].iter().cloned());
    Ok(JointPmf::from_fn(vars, |a| {
        if a[..k] == a[k..2 * k] {
            let mut at = a[..k].to_vec();
            at.extend(&a[2 * k..]);
            m.prob(&at)
        } else {
            0.0
        }
    })?)
}

fn run_tv(def: &ProtocolDef, source: &JointPmf, target: &JointPmf, mode: RunMode, trials: usize, seed: u64) -> CliResult<(f64, Option<usize>)> {
    let mode = match mode {
        RunMode::Auto => Mode::Auto { trials },
        RunMode::Exact => Mode::Exact,
        RunMode::Empirical => Mode::Empirical { trials },
    };
    let res = run_protocol(def, source, mode, seed)?;
    Ok((res.tv_to_iid(target)?, res.trials))
}

pub fn simulate(cfg: &SimulateConfig, seed: u64) -> CliResult<Vec<u8>> {
    let base = read(&cfg.pmf)?;
    let name = match cfg.scheme {
        Scheme::Exchange => "exchange",
        Scheme::Softcover => "softcover",
        Scheme::Concat => "concat",
    };
    let metric = cfg.metric.unwrap_or(if cfg.scheme == Scheme::Exchange { Metric::Error } else { Metric::Tv });
    if metric == Metric::Error && cfg.scheme != Scheme::Exchange {
        return Err(CliError::Data(format!("metric `error` applies to `exchange`, not `{name}`")));
    }
    let y1 = refs(&cfg.y1);
    let y2 = refs(&cfg.y2);
    let mut y_all = y1.clone();
    y_all.extend(&y2);
    let mut rows = Vec::with_capacity(cfg.n.len());
    for &n in &cfg.n {
        let code_seed = derive_seed(seed, &[n as u64, 0]);
        let run_seed = derive_seed(seed, &[n as u64, 1]);
        let (def, value, trials) = match cfg.scheme {
            Scheme::Exchange => {
                let (x1, x2) = (need(&cfg.x1, "x1", name)?, need(&cfg.x2, "x2", name)?);
                let r = need(&cfg.exchange_rates, "exchange_rates", name)?;
                let src = base.marginal(&[x1, x2])?;
                let def = make_exchange_protocol(&src, x1, x2, n, (r[0], r[1]), code_seed, cfg.force)?;
                match metric {
                    Metric::Error => {
                        let pairs = [(format!("{x2}hat"), x2.as_str()), (format!("{x1}hat"), x1.as_str())];
                        let pairs: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.as_str(), *b)).collect();
                        let (e, _) = estimate_block_error(&def, &src, &pairs, cfg.trials, run_seed)?;
                        (def, e, Some(cfg.trials))
                    }
                    Metric::Tv => {
                        let target = demand_pmf(&src, x1, x2)?;
                        let (tv, t) = run_tv(&def, &src, &target, cfg.mode, cfg.trials, run_seed)?;
                        (def, tv, t)
                    }
                }
            }
            Scheme::Softcover => {
                let x = refs(&cfg.x_vars);
                let node_x = match &cfg.node_x {
                    Some(nx) => nx.clone(),
                    None if x.is_empty() => [Vec::new(), Vec::new()],
                    None => return Err(CliError::Data("scheme `softcover` with x_vars needs field `node_x`".into())),
                };
                let spec = SoftcoverSpec::new(&base, &refs(&cfg.layers), &y_all, &x, &cfg.rates, n)?;
                let def = make_softcover_protocol(&spec, [&y1, &y2], [&refs(&node_x[0]), &refs(&node_x[1])], code_seed, cfg.force)?;
                let src = common_source(&base, &x, &node_x)?;
                let target = common_target(&base, &x, &node_x, &y_all)?;
                let (tv, t) = run_tv(&def, &src, &target, cfg.mode, cfg.trials, run_seed)?;
                (def, tv, t)
            }
            Scheme::Concat => {
                let (x1, x2) = (need(&cfg.x1, "x1", name)?, need(&cfg.x2, "x2", name)?);
                let r = need(&cfg.exchange_rates, "exchange_rates", name)?;
                let src = base.marginal(&[x1, x2])?;
                let a = make_exchange_protocol(&src, x1, x2, n, (r[0], r[1]), code_seed, cfg.force)?;
                let spec = SoftcoverSpec::new(&base, &refs(&cfg.layers), &y_all, &[x1, x2], &cfg.rates, n)?;
                let (h1, h2) = (format!("{x1}hat"), format!("{x2}hat"));
                let b = make_softcover_protocol(
                    &spec,
                    [&y1, &y2],
                    [&[x1, &h2], &[&h1, x2]],
                    derive_seed(seed, &[n as u64, 2]),
                    cfg.force,
                )?;
                let def = concatenate(&a, &b)?;
                let mut keep = vec![x1.as_str(), x2.as_str()];
                keep.extend(&y_all);
                let target = base.marginal(&keep)?;
                let (tv, t) = run_tv(&def, &src, &target, cfg.mode, cfg.trials, run_seed)?;
                (def, tv, t)
            }
        };
        rows.push(SimRow {
            n,
            rates: def.rates(),
            rounds: def.rounds(),
            value,
            trials,
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scheme", "n", "R12", "R21", "rounds", "tv_or_error", "trials", "seed", "version"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            name.to_string(),
            r.n.to_string(),
            format!("{:?}", r.rates.0),
            format!("{:?}", r.rates.1),
            r.rounds.to_string(),
            format!("{:?}", r.value),
            r.trials.map(|t| t.to_string()).unwrap_or_default(),
            seed.to_string(),
            VERSION.to_string(),
        ])
        .map_err(csv_err)?;
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

#[derive(Serialize)]
struct CertificateEntry {
    row: usize,
    role: &'static str,
    certificate: CertificateRecord,
}

#[derive(Serialize)]
struct CertificateFile {
    region: RegionTag,
    seed: u64,
    version: &'static str,
    certificates: Vec<CertificateEntry>,
}

#[derive(Default)]
struct RegionRow {
    kind: &'static str,
    weights: Option<(f64, f64)>,
    r12: f64,
    r21: f64,
    sum: Option<f64>,
    verdict: String,
    cert: Option<(f64, f64, bool, bool)>,
}

impl RegionRow {
    fn from_cert(weights: Option<(f64, f64)>, c: &RegionCertificate) -> Self {
        RegionRow {
            kind: "minimize",
            weights,
            r12: c.bounds.r12,
            r21: c.bounds.r21,
            sum: Some(c.bounds.sum),
            verdict: String::new(),
            cert: Some((c.mismatch, c.max_residual(), c.certified, c.upper_bound)),
        }
    }
}

fn parse_tag(cfg: &RegionConfig) -> CliResult<RegionTag> {
    let tag = if cfg.region.trim().eq_ignore_ascii_case("r2") {
        RegionTag::R2(cfg.r.ok_or_else(|| CliError::Data("region `R2` needs field `r`".into()))?)
    } else {
        cfg.region.parse::<RegionTag>()?
    };
    if let (RegionTag::R2(r), Some(r2)) = (tag, cfg.r) {
        if r != r2 {
            return Err(CliError::Data(format!("region {tag} disagrees with r = {r2}")));
        }
    }
    if tag == RegionTag::R2(0) {
        return Err(CliError::Data("R2 needs r >= 1".into()));
    }
    Ok(tag)
}

/// CSV summary and certificate file.
pub fn region(cfg: &RegionConfig, seed: u64) -> CliResult<(Vec<u8>, Vec<u8>)> {
    let pmf = read(&cfg.pmf)?;
    let tag = parse_tag(cfg)?;
    let budget = cfg.budget;
    let mut rows: Vec<RegionRow> = Vec::new();
    let mut certs: Vec<CertificateEntry> = Vec::new();
    let mut keep = |row: usize, role, c: &RegionCertificate| {
        certs.push(CertificateEntry { row, role, certificate: c.to_record() })
    };
    let start = Instant::now();
    if tag == RegionTag::Wyner {
        let q2 = match &cfg.demand {
            Some(d) => pmf.marginal(&refs(d))?,
            None => pmf,
        };
        let card = cfg.cards.as_ref().and_then(|c| c.first().copied()).unwrap_or(q2.len() + 1);
        let (_, c) = wyner_ci(&q2, card, &budget, derive_seed(seed, &[0, 0]))?;
        keep(0, "minimizer", &c);
        rows.push(RegionRow::from_cert(None, &c));
    } else {
        let d = match &cfg.demand {
            Some(names) if names.len() == 4 => Demand::new(&pmf, [&names[0], &names[1], &names[2], &names[3]])?,
            Some(names) => {
                return Err(CliError::Data(format!("field `demand`: expected 4 names, got {}", names.len())))
            }
            None => Demand::from_pmf(&pmf)?,
        };
        let cards = match (&cfg.cards, tag) {
            (Some(c), _) => c.clone(),
            (None, RegionTag::R2(r)) => {
                let mut c = Vec::with_capacity(r);
                for _ in 0..r {
                    let next = d.f_cap(&c);
                    c.push(next);
                }
                c
            }
            (None, _) => vec![d.u_cap()],
        };
        match tag {
            RegionTag::R1 | RegionTag::Inner => {
                let card = *cards
                    .first()
                    .ok_or_else(|| CliError::Data("field `cards` must be nonempty".into()))?;
                let c = if tag == RegionTag::R1 {
                    minimize_t1(&d, card, &budget, derive_seed(seed, &[0, 0]))?
                } else {
                    min_increment(&d, card, &budget, derive_seed(seed, &[0, 0]))?
                };
                keep(0, "minimizer", &c);
                rows.push(RegionRow::from_cert(Some((1.0, 0.0)), &c));
            }
            _ => {
                let weights = cfg.weights.clone().unwrap_or_else(|| vec![[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
                for (k, w) in weights.iter().enumerate() {
                    let c = minimize_outer(&d, tag, &cards, (w[0], w[1]), &budget, derive_seed(seed, &[0, k as u64]))?;
                    keep(rows.len(), "minimizer", &c);
                    rows.push(RegionRow::from_cert(Some((w[0], w[1])), &c));
                }
            }
        }
        if !cfg.points.is_empty() {
            if !matches!(tag, RegionTag::R1 | RegionTag::R2(_) | RegionTag::R3) {
                return Err(CliError::Data(format!("membership points need an outer region, not {tag}")));
            }
            let defaults = SearchBudget::default();
            let sb = SearchBudget {
                budget,
                directions: cfg.directions.unwrap_or(defaults.directions),
                cards: cfg.cards.clone(),
                resolution: cfg.resolution.unwrap_or(defaults.resolution),
                grid_cap: cfg.grid_cap.unwrap_or(defaults.grid_cap),
                tolerance: cfg.tolerance.unwrap_or(defaults.tolerance),
            };
            for (i, p) in cfg.points.iter().enumerate() {
                let point = RatePoint::new(p[0], p[1])?;
                let v = check_outer_membership(&d, point, tag, &sb, derive_seed(seed, &[1, i as u64]))?;
                for c in &v.witnesses {
                    keep(rows.len(), "witness", c);
                }
                rows.push(RegionRow {
                    kind: "membership",
                    r12: p[0],
                    r21: p[1],
                    verdict: v.kind.to_string(),
                    ..RegionRow::default()
                });
            }
        }
    }
    log::debug!("region {tag}: {:.3} s", start.elapsed().as_secs_f64());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "kind", "region", "w12", "w21", "r12", "r21", "sum", "verdict", "mismatch", "max_residual", "certified",
        "upper_bound", "seed", "version",
    ])
    .map_err(csv_err)?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:?}")).unwrap_or_default();
    for r in &rows {
        let (mismatch, residual, certified, upper) = match r.cert {
            Some((m, res, c, u)) => (format!("{m:?}"), format!("{res:?}"), c.to_string(), u.to_string()),
            None => Default::default(),
        };
        w.write_record([
            r.kind.to_string(),
            tag.to_string(),
            opt(r.weights.map(|w| w.0)),
            opt(r.weights.map(|w| w.1)),
            format!("{:?}", r.r12),
            format!("{:?}", r.r21),
            opt(r.sum),
            r.verdict.clone(),
            mismatch,
            residual,
            certified,
            upper,
            seed.to_string(),
            VERSION.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let file = CertificateFile {
        region: tag,
        seed,
        version: VERSION,
        certificates: certs,
    };
    let json = serde_json::to_vec_pretty(&file).map_err(|e| CliError::Core(e.into()))?;
    Ok((w.into_inner().expect("in-memory writer"), json))
}
