//! Factorized auxiliary models and the local search behind the region
//! evaluations.
//!
//! A model is a fixed base table times conditional factors `p(target | given)`
//! over positions in one variable list. The search minimizes a linear
//! combination of entropies plus penalties on the marginal mismatch and on
//! hinge constraints (exponentiated-gradient steps on factor rows), then
//! restores the marginal by Gauss-Newton steps and polishes along the
//! matched set.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::dist::info::shannon;
use crate::dist::pmf::{flat_index, Odometer};
use crate::rng::stream;

const LN2: f64 = std::f64::consts::LN_2;
/// Entries at or below this are held at zero by restoration.
const ZERO: f64 = 1e-13;
/// EG floor, so entries can recover.
const FLOOR: f64 = 1e-40;
/// Restoration target on the L1 residual.
const RESTORED: f64 = 1e-13;

#[derive(Clone, Debug)]
pub(crate) struct Factor {
    pub target: usize,
    pub given: Vec<usize>,
}

/// Σ coef · H(subset), subsets by id.
pub(crate) type Expr = Vec<(f64, usize)>;

/// Flat row-major tables, one per factor.
pub(crate) type Params = Vec<Vec<f64>>;

#[derive(Clone, Debug)]
struct Subset {
    vars: Vec<usize>,
    len: usize,
    idx: Vec<u32>,
}

#[derive(Clone, Debug)]
pub(crate) struct Model {
    sizes: Vec<usize>,
    len: usize,
    base: Vec<f64>,
    base_idx: Vec<u32>,
    widths: Vec<usize>,
    rows: Vec<usize>,
    fac_idx: Vec<Vec<u32>>,
    match_idx: Vec<u32>,
    target: Vec<f64>,
    subsets: Vec<Subset>,
    relevant: Vec<Vec<bool>>,
}

fn index_map(sizes: &[usize], vars: &[usize]) -> Vec<u32> {
    let sub: Vec<usize> = vars.iter().map(|&v| sizes[v]).collect();
    let mut out = Vec::new();
    let mut pick = vec![0; vars.len()];
    let mut odo = Odometer::new(sizes);
    while let Some(a) = odo.current() {
        for (p, &v) in pick.iter_mut().zip(vars) {
            *p = a[v];
        }
        out.push(flat_index(&sub, &pick) as u32);
        odo.advance();
    }
    out
}

impl Model {
    /// `base` is a table over `base_vars`; `target` is the required
    /// marginal over `matched`.
    pub fn new(
        sizes: Vec<usize>,
        base_vars: &[usize],
        base: Vec<f64>,
        factors: &[Factor],
        matched: &[usize],
        target: Vec<f64>,
    ) -> Model {
        let len = sizes.iter().product();
        let base_idx = index_map(&sizes, base_vars);
        let widths: Vec<usize> = factors.iter().map(|f| sizes[f.target]).collect();
        let rows: Vec<usize> = factors.iter().map(|f| f.given.iter().map(|&g| sizes[g]).product()).collect();
        let fac_idx = factors
            .iter()
            .map(|f| {
                let mut vars = f.given.clone();
                vars.push(f.target);
                index_map(&sizes, &vars)
            })
            .collect();
        let match_idx = index_map(&sizes, matched);
        let mut model = Model {
            sizes,
            len,
            base,
            base_idx,
            widths,
            rows,
            fac_idx,
            match_idx,
            target,
            subsets: Vec::new(),
            relevant: Vec::new(),
        };
        let uniform = model.uniform_params();
        let joint = model.joint(&uniform);
        model.relevant = (0..factors.len())
            .map(|j| {
                let mut mass = vec![0.0; model.rows[j]];
                for (z, &p) in joint.iter().enumerate() {
                    mass[model.fac_idx[j][z] as usize / model.widths[j]] += p;
                }
                mass.into_iter().map(|m| m > 0.0).collect()
            })
            .collect();
        model
    }

    pub fn uniform_params(&self) -> Params {
        self.widths
            .iter()
            .zip(&self.rows)
            .map(|(&w, &r)| vec![1.0 / w as f64; w * r])
            .collect()
    }

    /// Free parameters over rows that can carry mass.
    pub fn parameter_count(&self) -> usize {
        self.relevant
            .iter()
            .zip(&self.widths)
            .map(|(rel, &w)| rel.iter().filter(|&&r| r).count() * (w - 1))
            .sum()
    }

    /// Interns the entropy term for a set of variable positions.
    pub fn subset(&mut self, vars: &[usize]) -> usize {
        let mut vars = vars.to_vec();
        vars.sort_unstable();
        vars.dedup();
        if let Some(i) = self.subsets.iter().position(|s| s.vars == vars) {
            return i;
        }
        let len = vars.iter().map(|&v| self.sizes[v]).product();
        let idx = index_map(&self.sizes, &vars);
        self.subsets.push(Subset { vars, len, idx });
        self.subsets.len() - 1
    }

    /// `I(A;B|C)` as an entropy combination.
    pub fn mi(&mut self, a: &[usize], b: &[usize], c: &[usize]) -> Expr {
        let cat = |x: &[usize], y: &[usize]| -> Vec<usize> { x.iter().chain(y).copied().collect() };
        let ac = cat(a, c);
        let bc = cat(b, c);
        let abc = cat(&ac, b);
        vec![
            (1.0, self.subset(&ac)),
            (1.0, self.subset(&bc)),
            (-1.0, self.subset(&abc)),
            (-1.0, self.subset(c)),
        ]
    }

    pub fn random_params(&self, seed: u64, restart: u64) -> Params {
        let mut rng = stream(seed, &[restart]);
        // Odd restarts start from sharper rows.
        let power = if restart % 2 == 1 { 3.0 } else { 1.0 };
        self.widths
            .iter()
            .zip(&self.rows)
            .map(|(&w, &r)| {
                let mut t: Vec<f64> = (0..w * r)
                    .map(|_| (-(1.0 - rng.gen::<f64>()).ln()).powf(power) + 1e-6)
                    .collect();
                normalize_rows(&mut t, w);
                t
            })
            .collect()
    }

    pub fn joint(&self, params: &Params) -> Vec<f64> {
        (0..self.len)
            .map(|z| {
                let mut p = self.base[self.base_idx[z] as usize];
                for (j, t) in params.iter().enumerate() {
                    p *= t[self.fac_idx[j][z] as usize];
                }
                p
            })
            .collect()
    }

    fn marginal_of(&self, joint: &[f64], idx: &[u32], len: usize) -> Vec<f64> {
        let mut m = vec![0.0; len];
        for (z, &p) in joint.iter().enumerate() {
            m[idx[z] as usize] += p;
        }
        m
    }

    pub fn matched_marginal(&self, joint: &[f64]) -> Vec<f64> {
        self.marginal_of(joint, &self.match_idx, self.target.len())
    }

    pub fn mismatch(&self, joint: &[f64]) -> f64 {
        self.matched_marginal(joint)
            .iter()
            .zip(&self.target)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    fn entropies(&self, joint: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let margs: Vec<Vec<f64>> = self.subsets.iter().map(|s| self.marginal_of(joint, &s.idx, s.len)).collect();
        let h = margs.iter().map(|m| shannon(m)).collect();
        (margs, h)
    }

    pub fn value(&self, expr: &Expr, joint: &[f64]) -> f64 {
        let (_, h) = self.entropies(joint);
        expr.iter().map(|&(c, s)| c * h[s]).sum()
    }

    /// Value of each expression at `joint`.
    pub fn values(&self, exprs: &[Expr], joint: &[f64]) -> Vec<f64> {
        let (_, h) = self.entropies(joint);
        exprs.iter().map(|e| e.iter().map(|&(c, s)| c * h[s]).sum()).collect()
    }

    /// `Σ_e G[j][e]` contributions: `G[j][e] = Σ_z g(z) ∂p(z)/∂θ_{j,e}`,
    /// plus the mass of each factor row.
    fn param_grad(&self, params: &Params, gz: &[f64]) -> (Params, Params) {
        let f = params.len();
        let mut grad: Params = params.iter().map(|t| vec![0.0; t.len()]).collect();
        let mut mass: Params = self.rows.iter().map(|&r| vec![0.0; r]).collect();
        let mut vals = vec![0.0; f];
        let mut prefix = vec![0.0; f + 1];
        for z in 0..self.len {
            let b = self.base[self.base_idx[z] as usize];
            if b == 0.0 {
                continue;
            }
            for j in 0..f {
                vals[j] = params[j][self.fac_idx[j][z] as usize];
            }
            prefix[0] = b;
            for j in 0..f {
                prefix[j + 1] = prefix[j] * vals[j];
            }
            let p = prefix[f];
            let mut suffix = 1.0;
            for j in (0..f).rev() {
                let e = self.fac_idx[j][z] as usize;
                let others = prefix[j] * suffix;
                grad[j][e] += gz[z] * others;
                mass[j][e / self.widths[j]] += p;
                suffix *= vals[j];
            }
        }
        (grad, mass)
    }

    /// Jacobian of the matched marginal and the row sums with respect to the
    /// free entries, and the residual vector.
    fn restoration_system(&self, params: &Params, free: &[(usize, usize)]) -> (DMatrix<f64>, DVector<f64>) {
        let f = params.len();
        let cells = self.target.len();
        let row_offset: Vec<usize> = self
            .rows
            .iter()
            .scan(cells, |acc, &r| {
                let o = *acc;
                *acc += r;
                Some(o)
            })
            .collect();
        let eqs = cells + self.rows.iter().sum::<usize>();
        let mut var_of: Vec<Vec<Option<usize>>> = params.iter().map(|t| vec![None; t.len()]).collect();
        for (k, &(j, e)) in free.iter().enumerate() {
            var_of[j][e] = Some(k);
        }
        let mut jac = DMatrix::<f64>::zeros(eqs, free.len());
        let mut vals = vec![0.0; f];
        let mut prefix = vec![0.0; f + 1];
        let mut marg = vec![0.0; cells];
        for z in 0..self.len {
            let b = self.base[self.base_idx[z] as usize];
            if b == 0.0 {
                continue;
            }
            for j in 0..f {
                vals[j] = params[j][self.fac_idx[j][z] as usize];
            }
            prefix[0] = b;
            for j in 0..f {
                prefix[j + 1] = prefix[j] * vals[j];
            }
            let c = self.match_idx[z] as usize;
            marg[c] += prefix[f];
            let mut suffix = 1.0;
            for j in (0..f).rev() {
                if let Some(k) = var_of[j][self.fac_idx[j][z] as usize] {
                    jac[(c, k)] += prefix[j] * suffix;
                }
                suffix *= vals[j];
            }
        }
        let mut res = DVector::<f64>::zeros(eqs);
        for c in 0..cells {
            res[c] = marg[c] - self.target[c];
        }
        for (j, t) in params.iter().enumerate() {
            let w = self.widths[j];
            for (r, row) in t.chunks(w).enumerate() {
                res[row_offset[j] + r] = row.iter().sum::<f64>() - 1.0;
                for e in r * w..(r + 1) * w {
                    if let Some(k) = var_of[j][e] {
                        jac[(row_offset[j] + r, k)] = 1.0;
                    }
                }
            }
        }
        (jac, res)
    }

    fn free_entries(&self, params: &Params) -> Vec<(usize, usize)> {
        let mut free = Vec::new();
        for (j, t) in params.iter().enumerate() {
            for (e, &v) in t.iter().enumerate() {
                if v > ZERO && self.relevant[j][e / self.widths[j]] {
                    free.push((j, e));
                }
            }
        }
        free
    }

    fn residual_norm(&self, params: &Params) -> f64 {
        let joint = self.joint(params);
        let rows: f64 = params
            .iter()
            .zip(&self.widths)
            .flat_map(|(t, &w)| t.chunks(w).map(|r| (r.iter().sum::<f64>() - 1.0).abs()))
            .sum();
        self.mismatch(&joint) + rows
    }

    /// Gauss-Newton (minimum-norm steps) towards an exact marginal match.
    /// Returns the final L1 residual.
    pub fn restore(&self, params: &mut Params) -> f64 {
        let mut norm = self.residual_norm(params);
        for _ in 0..40 {
            if norm <= RESTORED {
                break;
            }
            let free = self.free_entries(params);
            if free.is_empty() {
                break;
            }
            let (jac, res) = self.restoration_system(params, &free);
            let svd = jac.svd(true, true);
            let Ok(delta) = svd.solve(&(-res), 1e-12) else { break };
            let mut step = 1.0;
            let mut improved = false;
            for _ in 0..12 {
                let mut trial = params.clone();
                for (k, &(j, e)) in free.iter().enumerate() {
                    trial[j][e] = (trial[j][e] + step * delta[k]).max(0.0);
                }
                let t = self.residual_norm(&trial);
                if t < norm {
                    *params = trial;
                    norm = t;
                    improved = true;
                    break;
                }
                step /= 2.0;
            }
            if !improved {
                break;
            }
        }
        for (t, &w) in params.iter_mut().zip(&self.widths) {
            normalize_rows(t, w);
        }
        self.residual_norm(params)
    }
}

pub(crate) fn normalize_rows(t: &mut [f64], w: usize) {
    for row in t.chunks_mut(w) {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        } else {
            row.iter_mut().for_each(|v| *v = 1.0 / w as f64);
        }
    }
}

/// Objective with hinge constraints `expr <= bound`.
#[derive(Clone, Debug)]
pub(crate) struct Problem {
    pub model: Model,
    pub objective: Expr,
    pub hinges: Vec<(Expr, f64)>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Settings {
    pub iters: usize,
    pub polish: usize,
    pub lambda: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct Outcome {
    pub params: Params,
    pub objective: f64,
    pub mismatch: f64,
    pub hinge_excess: f64,
}

fn smooth_abs(d: f64, mu: f64) -> (f64, f64) {
    let s = (d * d + mu * mu).sqrt();
    (s - mu, d / s)
}

fn smooth_hinge(t: f64, mu: f64) -> (f64, f64) {
    let s = (t * t + mu * mu).sqrt();
    (0.5 * (t + s), 0.5 * (1.0 + t / s))
}

impl Problem {
    /// Penalized value and, optionally, its gradient in the joint entries.
    /// `lambda_match = 0` drops the mismatch term.
    fn evaluate(&self, params: &Params, lambda_match: f64, lambda: f64, mu: f64, grad: bool) -> (f64, Option<Vec<f64>>) {
        let m = &self.model;
        let joint = m.joint(params);
        let (margs, h) = m.entropies(&joint);
        let ev = |e: &Expr| -> f64 { e.iter().map(|&(c, s)| c * h[s]).sum() };
        let mut value = ev(&self.objective);
        let mut weights: Vec<f64> = vec![0.0; m.subsets.len()];
        for &(c, s) in &self.objective {
            weights[s] += c;
        }
        for (e, bound) in &self.hinges {
            let (v, d) = smooth_hinge(ev(e) - bound, mu);
            value += lambda * v;
            for &(c, s) in e {
                weights[s] += lambda * d * c;
            }
        }
        let marg = m.matched_marginal(&joint);
        let mut dmatch = vec![0.0; marg.len()];
        if lambda_match > 0.0 {
            for (c, (a, b)) in marg.iter().zip(&m.target).enumerate() {
                let (v, d) = smooth_abs(a - b, mu);
                value += lambda_match * v;
                dmatch[c] = lambda_match * d;
            }
        }
        if !grad {
            return (value, None);
        }
        let mut gz = vec![0.0; m.len];
        for (s, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let sub = &m.subsets[s];
            let logs: Vec<f64> = margs[s].iter().map(|&p| -(p.max(1e-300)).log2() - 1.0 / LN2).collect();
            for (z, g) in gz.iter_mut().enumerate() {
                *g += w * logs[sub.idx[z] as usize];
            }
        }
        for (z, g) in gz.iter_mut().enumerate() {
            *g += dmatch[m.match_idx[z] as usize];
        }
        (value, Some(gz))
    }

    fn eg_step(&self, params: &Params, grad: &Params, mass: &Params, eta: f64) -> Params {
        let m = &self.model;
        params
            .iter()
            .enumerate()
            .map(|(j, t)| {
                let w = m.widths[j];
                let mut out = t.clone();
                for (r, row) in out.chunks_mut(w).enumerate() {
                    let scale = 1.0 / mass[j][r].max(1e-12);
                    let g = &grad[j][r * w..(r + 1) * w];
                    let lo = g.iter().cloned().fold(f64::INFINITY, f64::min) * scale;
                    for (v, &gi) in row.iter_mut().zip(g) {
                        let step = (-eta * (gi * scale - lo)).max(-700.0);
                        *v = (*v * step.exp()).max(FLOOR);
                    }
                }
                normalize_rows(&mut out, w);
                out
            })
            .collect()
    }

    /// Objective plus exact hinge penalty, as used after restoration.
    fn feasible_value(&self, params: &Params, lambda: f64) -> f64 {
        let joint = self.model.joint(params);
        let vals = self.model.values(std::slice::from_ref(&self.objective), &joint);
        vals[0] + lambda * self.hinge_excess(&joint)
    }

    fn hinge_excess(&self, joint: &[f64]) -> f64 {
        let exprs: Vec<Expr> = self.hinges.iter().map(|(e, _)| e.clone()).collect();
        let vals = self.model.values(&exprs, joint);
        vals.iter().zip(&self.hinges).map(|(v, (_, b))| (v - b).max(0.0)).sum()
    }

    fn descend(&self, params: &mut Params, iters: usize, lambda: f64) {
        let (mu0, mu1) = (1e-1f64, 1e-6f64);
        let mut eta = 0.5;
        for k in 0..iters {
            let mu = mu0 * (mu1 / mu0).powf(k as f64 / iters.max(1) as f64);
            let (f, gz) = self.evaluate(params, lambda, lambda, mu, true);
            let (grad, mass) = self.model.param_grad(params, &gz.expect("gradient requested"));
            let mut accepted = false;
            for _ in 0..12 {
                let trial = self.eg_step(params, &grad, &mass, eta);
                let (ft, _) = self.evaluate(&trial, lambda, lambda, mu, false);
                if ft < f {
                    *params = trial;
                    eta = (eta * 1.3).min(50.0);
                    accepted = true;
                    break;
                }
                eta *= 0.3;
            }
            if !accepted && eta < 1e-12 {
                eta = 1e-3;
            }
        }
    }

    /// Projected-gradient steps along the matched set, each followed by
    /// restoration.
    fn polish(&self, params: &mut Params, rounds: usize, lambda: f64) {
        let m = &self.model;
        let mut current = self.feasible_value(params, lambda);
        let mut step = f64::NAN;
        for _ in 0..rounds {
            let free = m.free_entries(params);
            if free.is_empty() {
                break;
            }
            let (_, gz) = self.evaluate(params, 0.0, lambda, 1e-9, true);
            let (grad, _) = m.param_grad(params, &gz.expect("gradient requested"));
            let g = DVector::from_iterator(free.len(), free.iter().map(|&(j, e)| grad[j][e]));
            let (jac, _) = m.restoration_system(params, &free);
            let svd = jac.svd(false, true);
            let vt = svd.v_t.expect("v_t requested");
            let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            let mut pg = g.clone();
            for (i, &s) in svd.singular_values.iter().enumerate() {
                if s > 1e-10 * smax {
                    let v = vt.row(i).transpose();
                    let c = v.dot(&g);
                    pg -= c * v;
                }
            }
            let gmax = pg.amax();
            if gmax < 1e-12 {
                break;
            }
            if step.is_nan() {
                step = 0.05 / gmax;
            }
            let mut accepted = false;
            for _ in 0..8 {
                let mut trial = params.clone();
                for (k, &(j, e)) in free.iter().enumerate() {
                    trial[j][e] = (trial[j][e] - step * pg[k]).max(0.0);
                }
                let res = m.restore(&mut trial);
                if res <= 1e-11 {
                    let v = self.feasible_value(&trial, lambda);
                    if v < current - 1e-15 {
                        *params = trial;
                        current = v;
                        step *= 2.0;
                        accepted = true;
                        break;
                    }
                }
                step /= 4.0;
            }
            if !accepted {
                break;
            }
        }
    }

    /// Descent, λ doubling on a mismatch plateau, restoration and polish.
    pub fn optimize(&self, mut params: Params, s: &Settings) -> Outcome {
        let mut lambda = s.lambda;
        self.descend(&mut params, s.iters, lambda);
        for _ in 0..3 {
            let joint = self.model.joint(&params);
            if self.model.mismatch(&joint) <= 1e-3 {
                break;
            }
            lambda *= 2.0;
            self.descend(&mut params, s.iters / 4, lambda);
        }
        let mut restored = params.clone();
        let res = self.model.restore(&mut restored);
        if res <= 1e-9 {
            params = restored;
            self.polish(&mut params, s.polish, lambda);
        }
        let joint = self.model.joint(&params);
        Outcome {
            objective: self.model.value(&self.objective, &joint),
            mismatch: self.model.mismatch(&joint),
            hinge_excess: self.hinge_excess(&joint),
            params,
        }
    }

    /// Independent restarts in parallel, reduced in restart order.
    pub fn multistart(&self, restarts: usize, seed: u64, s: &Settings) -> Vec<Outcome> {
        (0..restarts as u64)
            .into_par_iter()
            .map(|r| self.optimize(self.model.random_params(seed, r), s))
            .collect()
    }
}

/// All compositions of `m` into `k` parts, scaled by `1/m`.
fn simplex_grid(m: u32, k: usize) -> Vec<Vec<f64>> {
    fn rec(left: u32, k: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for a in 0..=left {
            cur.push(a);
            rec(left - a, k - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, k, &mut Vec::new(), &mut out);
    out.into_iter().map(|c| c.into_iter().map(|a| a as f64 / m as f64).collect()).collect()
}

/// Result of an exhaustive grid scan.
#[derive(Clone, Debug)]
pub(crate) struct GridScan {
    pub points: u64,
    /// Expression values at grid points with mismatch at most the tolerance.
    pub feasible: Vec<Vec<f64>>,
}

impl Model {
    /// Number of grid points at step `1/m` over the relevant rows, if it fits
    /// in `u64`.
    pub fn grid_size(&self, m: u32) -> Option<u64> {
        let mut total: u64 = 1;
        for (rel, &w) in self.relevant.iter().zip(&self.widths) {
            let per = binomial(m as u64 + w as u64 - 1, w as u64 - 1)?;
            for _ in rel.iter().filter(|&&r| r) {
                total = total.checked_mul(per)?;
            }
        }
        Some(total)
    }

    /// Evaluates `exprs` at every grid point whose mismatch is at most `tol`.
    pub fn grid_scan(&self, exprs: &[Expr], m: u32, tol: f64) -> GridScan {
        let slots: Vec<(usize, usize)> = self
            .relevant
            .iter()
            .enumerate()
            .flat_map(|(j, rel)| rel.iter().enumerate().filter(|(_, &r)| r).map(move |(r, _)| (j, r)))
            .collect();
        let grids: Vec<Vec<Vec<f64>>> = self.widths.iter().map(|&w| simplex_grid(m, w)).collect();
        let total = self.grid_size(m).expect("grid size checked by caller");
        let uniform = self.uniform_params();
        let feasible = (0..total)
            .into_par_iter()
            .map_init(
                || uniform.clone(),
                |params, mut i| {
                    for &(j, r) in &slots {
                        let g = &grids[j];
                        let pick = &g[(i % g.len() as u64) as usize];
                        i /= g.len() as u64;
                        let w = self.widths[j];
                        params[j][r * w..(r + 1) * w].copy_from_slice(pick);
                    }
                    let joint = self.joint(params);
                    if self.mismatch(&joint) <= tol {
                        Some(self.values(exprs, &joint))
                    } else {
                        None
                    }
                },
            )
            .flatten()
            .collect();
        GridScan { points: total, feasible }
    }
}

fn binomial(n: u64, k: u64) -> Option<u64> {
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `p(u) p(a|u) p(b|u)` matched to a 2×2 target: the Wyner problem.
    fn wyner_problem(q: [f64; 4], u: usize) -> Problem {
        let factors = [
            Factor { target: 0, given: vec![] },
            Factor { target: 1, given: vec![0] },
            Factor { target: 2, given: vec![0] },
        ];
        let mut model = Model::new(vec![u, 2, 2], &[], vec![1.0], &factors, &[1, 2], q.to_vec());
        let objective = model.mi(&[0], &[1, 2], &[]);
        Problem {
            model,
            objective,
            hinges: vec![],
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = wyner_problem([0.4, 0.1, 0.2, 0.3], 3);
        let params = p.model.random_params(7, 0);
        let (_, gz) = p.evaluate(&params, 5.0, 5.0, 1e-2, true);
        let (grad, _) = p.model.param_grad(&params, &gz.unwrap());
        let h = 1e-7;
        for j in 0..params.len() {
            for e in 0..params[j].len() {
                let mut up = params.clone();
                up[j][e] += h;
                let mut dn = params.clone();
                dn[j][e] -= h;
                let fd = (p.evaluate(&up, 5.0, 5.0, 1e-2, false).0 - p.evaluate(&dn, 5.0, 5.0, 1e-2, false).0) / (2.0 * h);
                assert!((fd - grad[j][e]).abs() < 1e-5, "factor {j} entry {e}: {fd} vs {}", grad[j][e]);
            }
        }
    }

    #[test]
    fn restoration_reaches_exact_match() {
        let p = wyner_problem([0.45, 0.05, 0.05, 0.45], 2);
        let mut params = vec![vec![0.5, 0.5], vec![0.9, 0.1, 0.12, 0.88], vec![0.88, 0.12, 0.1, 0.9]];
        assert!(p.model.restore(&mut params) < 1e-12);
    }

    #[test]
    fn dsbs_wyner_value() {
        // Closed form 1 + h(p) - 2 h(a), a = (1 - sqrt(1 - 2p)) / 2.
        let h = |x: f64| -x * x.log2() - (1.0 - x) * (1.0 - x).log2();
        let a = (1.0 - (1.0f64 - 0.2).sqrt()) / 2.0;
        let exact = 1.0 + h(0.1) - 2.0 * h(a);
        let p = wyner_problem([0.45, 0.05, 0.05, 0.45], 2);
        let s = Settings {
            iters: 2000,
            polish: 60,
            lambda: 100.0,
        };
        let best = p
            .multistart(8, 3, &s)
            .into_iter()
            .filter(|o| o.mismatch < 1e-9)
            .map(|o| o.objective)
            .fold(f64::INFINITY, f64::min);
        assert!((best - exact).abs() < 1e-4, "{best} vs {exact}");
    }

    #[test]
    fn grid_counts() {
        assert_eq!(simplex_grid(4, 3).len(), 15);
        let p = wyner_problem([0.25; 4], 2);
        assert_eq!(p.model.grid_size(4), Some(5u64.pow(5)));
        assert_eq!(p.model.parameter_count(), 5);
    }
}
