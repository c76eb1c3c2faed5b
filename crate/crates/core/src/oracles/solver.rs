//! Minimization of low-dimensional convex functions of the form
//!
//! `F(x) = sum_k max_i (a_ki . x + b_ki) + sum of curved terms`
//!
//! which is the shape of every dual problem the oracles solve. Piecewise
//! linear problems small enough to enumerate are solved exactly by visiting
//! every vertex of the breakpoint arrangement; larger ones are solved as a
//! linear program in epigraph form. Everything else goes through
//! projected subgradient descent with restarts, exact line searches along
//! coordinate and random directions, and (for piecewise linear problems) a
//! polish over vertices formed by the breakpoint hyperplanes nearest to the
//! iterate.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::objectives::Piece;

#[derive(Clone, Debug)]
pub(crate) enum Curved {
    /// `piece`'s conjugate `max_{x in [0,1]} y x + p(x)` evaluated at `x[var]`.
    Conj { var: usize, piece: Piece },
    /// `weight * ||x[start..start+len]||_2`
    Norm2 { start: usize, len: usize, weight: f64 },
}

impl Curved {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Curved::Conj { var, piece } => piece.conjugate(x[*var]),
            Curved::Norm2 { start, len, weight } => {
                weight * x[*start..start + len].iter().map(|v| v * v).sum::<f64>().sqrt()
            }
        }
    }

    /// Affine pieces whose maximum lies below the term everywhere and is
    /// tight at the sample points: a grid of 512 steps for conjugates,
    /// evenly spread directions for the norm.
    fn minorant(&self, n: usize) -> Vec<(Vec<f64>, f64)> {
        match self {
            Curved::Conj { var, piece } => (0..=CONJ_GRID)
                .map(|i| {
                    let x = i as f64 / CONJ_GRID as f64;
                    let mut a = vec![0.0; n];
                    a[*var] = x;
                    (a, piece.eval(x))
                })
                .collect(),
            Curved::Norm2 { start, len, weight } => unit_directions(*len)
                .into_iter()
                .map(|u| {
                    let mut a = vec![0.0; n];
                    for (k, uk) in u.into_iter().enumerate() {
                        a[start + k] = weight * uk;
                    }
                    (a, 0.0)
                })
                .collect(),
        }
    }

    fn add_gradient(&self, x: &[f64], g: &mut [f64]) {
        match self {
            Curved::Conj { var, piece } => g[*var] += piece.conjugate_argmax(x[*var]),
            Curved::Norm2 { start, len, weight } => {
                let s = &x[*start..start + len];
                let n = s.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 0.0 {
                    for (gi, si) in g[*start..start + len].iter_mut().zip(s) {
                        *gi += weight * si / n;
                    }
                }
            }
        }
    }
}

const CONJ_GRID: usize = 512;

/// Directions on the unit sphere of `R^len`: exact for `len = 1`, a regular
/// polygon in the plane, seeded Gaussian samples beyond.
fn unit_directions(len: usize) -> Vec<Vec<f64>> {
    match len {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..256)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 256.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut dirs: Vec<Vec<f64>> = (0..len)
                .flat_map(|k| {
                    let mut e = vec![0.0; len];
                    e[k] = 1.0;
                    let neg = e.iter().map(|v| -v).collect();
                    [e, neg]
                })
                .collect();
            dirs.extend((0..2048).map(|_| random_unit(&mut rng, len)));
            dirs
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Problem {
    n: usize,
    coef: Vec<f64>,
    offset: Vec<f64>,
    blocks: Vec<(usize, usize)>,
    curved: Vec<Curved>,
    bound: Option<f64>,
}

#[derive(Clone, Debug)]
struct Hyperplane {
    normal: Vec<f64>,
    rhs: f64,
}

impl Problem {
    pub fn new(n: usize) -> Self {
        Problem {
            n,
            coef: Vec::new(),
            offset: Vec::new(),
            blocks: Vec::new(),
            curved: Vec::new(),
            bound: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `max_i (a_i . x + b_i)`.
    pub fn add_block<I>(&mut self, pieces: I)
    where
        I: IntoIterator<Item = (Vec<f64>, f64)>,
    {
        let start = self.offset.len();
        for (a, b) in pieces {
            debug_assert_eq!(a.len(), self.n);
            self.coef.extend_from_slice(&a);
            self.offset.push(b);
        }
        let end = self.offset.len();
        if end > start {
            self.blocks.push((start, end));
        }
    }

    pub fn add_curved(&mut self, term: Curved) {
        self.curved.push(term);
    }

    /// Restricts the search to `|x_i| <= bound`.
    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn is_piecewise_linear(&self) -> bool {
        self.curved.is_empty()
    }

    fn piece_value(&self, p: usize, x: &[f64]) -> f64 {
        let a = &self.coef[p * self.n..(p + 1) * self.n];
        a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() + self.offset[p]
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for &(s, e) in &self.blocks {
            let mut m = f64::NEG_INFINITY;
            for p in s..e {
                m = m.max(self.piece_value(p, x));
            }
            total += m;
        }
        total + self.curved.iter().map(|c| c.eval(x)).sum::<f64>()
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        for &(s, e) in &self.blocks {
            let mut best = s;
            let mut m = f64::NEG_INFINITY;
            for p in s..e {
                let v = self.piece_value(p, x);
                if v > m {
                    m = v;
                    best = p;
                }
            }
            for (gi, ai) in g.iter_mut().zip(&self.coef[best * self.n..(best + 1) * self.n]) {
                *gi += ai;
            }
        }
        for c in &self.curved {
            c.add_gradient(x, &mut g);
        }
        g
    }

    fn project(&self, x: &mut [f64]) {
        if let Some(b) = self.bound {
            for v in x.iter_mut() {
                *v = v.clamp(-b, b);
            }
        }
    }

    fn feasible(&self, x: &[f64]) -> bool {
        match self.bound {
            Some(b) => x.iter().all(|v| v.abs() <= b * (1.0 + 1e-12) + 1e-12),
            None => true,
        }
    }

    /// Distinct hyperplanes where two pieces of one block tie, plus the box
    /// facets when a bound is set.
    fn hyperplanes(&self) -> Vec<Hyperplane> {
        let n = self.n;
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut push = |normal: Vec<f64>, rhs: f64| {
            let scale = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
            if scale < 1e-12 {
                return;
            }
            let lead = normal.iter().find(|v| v.abs() > 1e-12 * scale).copied().unwrap_or(1.0);
            let s = lead.signum() / scale;
            let normal: Vec<f64> = normal.iter().map(|v| v * s).collect();
            let rhs = rhs * s;
            let key: Vec<i64> = normal
                .iter()
                .chain(std::iter::once(&rhs))
                .map(|v| (v * 1e9).round() as i64)
                .collect();
            if seen.insert(key) {
                out.push(Hyperplane { normal, rhs });
            }
        };
        for &(s, e) in &self.blocks {
            for i in s..e {
                for j in i + 1..e {
                    let normal: Vec<f64> = (0..n).map(|c| self.coef[i * n + c] - self.coef[j * n + c]).collect();
                    push(normal, self.offset[j] - self.offset[i]);
                }
            }
        }
        if let Some(b) = self.bound {
            for c in 0..n {
                let mut e = vec![0.0; n];
                e[c] = 1.0;
                push(e.clone(), b);
                push(e, -b);
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Largest number of vertex candidates enumerated.
    pub enum_limit: f64,
    pub refine_rounds: usize,
    /// Solve piecewise-linear problems too large to enumerate as an LP
    /// instead of iteratively.
    pub use_lp: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            iterations: 20_000,
            restarts: 10,
            seed: 0,
            enum_limit: 2e5,
            refine_rounds: 12,
            use_lp: true,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Solution {
    pub x: Vec<f64>,
    pub value: f64,
    /// True when every vertex of the arrangement was checked.
    pub exact: bool,
    /// Zero for exact solves. With a minorant LP it bounds the gap to the
    /// true minimum; on the purely iterative path it is the last improvement
    /// the refinement stage found, a stall indicator rather than a bound.
    pub tolerance: f64,
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Solves `A x = b` for square `A` (row-major); `None` when singular.
fn solve_square(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-10 {
            return None;
        }
        if piv != col {
            for c in 0..n {
                a.swap(piv * n + c, col * n + c);
            }
            b.swap(piv, col);
        }
        for r in col + 1..n {
            let f = a[r * n + col] / a[col * n + col];
            if f != 0.0 {
                for c in col..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r * n + c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r * n + r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn rank(rows: &[Vec<f64>], n: usize) -> usize {
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let mut r = 0;
    for col in 0..n {
        let Some(piv) = (r..m.len()).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())) else {
            break;
        };
        if m[piv][col].abs() < 1e-9 {
            continue;
        }
        m.swap(piv, r);
        let (top, rest) = m.split_at_mut(r + 1);
        let pivot = &top[r];
        for row in rest {
            let f = row[col] / pivot[col];
            for (x, p) in row[col..n].iter_mut().zip(&pivot[col..n]) {
                *x -= f * p;
            }
        }
        r += 1;
        if r == m.len() {
            break;
        }
    }
    r
}

/// Keeps the best point; ties (within a relative 1e-12) go to the smaller
/// Secondary key used to break ties between equally good points.
type TieKey<'a> = &'a dyn Fn(&[f64]) -> f64;

/// tie key.
struct Best<'a> {
    x: Vec<f64>,
    value: f64,
    key: f64,
    tie_key: Option<TieKey<'a>>,
}

impl<'a> Best<'a> {
    fn new(x: Vec<f64>, value: f64, tie_key: Option<TieKey<'a>>) -> Self {
        let key = tie_key.map_or(0.0, |k| k(&x));
        Best { x, value, key, tie_key }
    }

    fn offer(&mut self, x: &[f64], value: f64) -> bool {
        if !value.is_finite() {
            return false;
        }
        let tol = 1e-12 * (1.0 + self.value.abs());
        if value < self.value - tol {
            self.value = value;
            self.x = x.to_vec();
            self.key = self.tie_key.map_or(0.0, |k| k(x));
            return true;
        }
        if value <= self.value + tol {
            if let Some(k) = self.tie_key {
                let key = k(x);
                if key < self.key - 1e-12 {
                    self.key = key;
                    self.x = x.to_vec();
                    self.value = self.value.min(value);
                }
            }
        }
        false
    }
}

/// Visits the vertices spanned by every `n`-subset of `planes`.
fn enumerate_vertices(problem: &Problem, planes: &[Hyperplane], best: &mut Best<'_>) {
    let n = problem.n;
    let m = planes.len();
    if m < n {
        return;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let mut a = Vec::with_capacity(n * n);
        let mut b = Vec::with_capacity(n);
        for &i in &idx {
            a.extend_from_slice(&planes[i].normal);
            b.push(planes[i].rhs);
        }
        if let Some(x) = solve_square(a, b, n) {
            if problem.feasible(&x) {
                let mut x = x;
                problem.project(&mut x);
                let v = problem.eval(&x);
                best.offer(&x, v);
            }
        }
        // Next combination in lexicographic order.
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + m - n {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exact minimization of a convex function along `x + s e`.
fn line_min(problem: &Problem, x: &[f64], e: &[f64], fx: f64, scale: f64) -> (f64, f64) {
    let at = |s: f64| {
        let mut y: Vec<f64> = x.iter().zip(e).map(|(a, b)| a + s * b).collect();
        problem.project(&mut y);
        problem.eval(&y)
    };
    let h = 1e-9 * scale.max(1.0);
    let sign = if at(h) < fx {
        1.0
    } else if at(-h) < fx {
        -1.0
    } else {
        return (0.0, fx);
    };
    // Bracket the minimum of the convex restriction.
    let mut lo = 0.0;
    let mut mid = h;
    let mut fmid = at(sign * mid);
    let mut hi = 2.0 * mid;
    let mut fhi = at(sign * hi);
    let mut doublings = 0;
    while fhi < fmid && doublings < 80 {
        lo = mid;
        mid = hi;
        fmid = fhi;
        hi *= 2.0;
        fhi = at(sign * hi);
        doublings += 1;
    }
    if fhi < fmid {
        return (sign * hi, fhi);
    }
    // Golden section on [lo, hi].
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (at(sign * c), at(sign * d));
    for _ in 0..200 {
        if (b - a) <= 1e-15 * (1.0 + b.abs()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = at(sign * c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = at(sign * d);
        }
    }
    let mut cands = [(mid, fmid), (c, fc), (d, fd)];
    cands.sort_by(|p, q| p.1.total_cmp(&q.1));
    (sign * cands[0].0, cands[0].1)
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

/// Line-search refinement; returns the last improvement found.
fn refine(problem: &Problem, best: &mut Best<'_>, rng: &mut ChaCha8Rng, rounds: usize) -> f64 {
    let n = problem.n;
    let mut last_gain = 0.0;
    let mut prev = best.x.clone();
    for round in 0..rounds {
        let start_value = best.value;
        let mut dirs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect();
        for _ in 0..n {
            dirs.push(random_unit(rng, n));
        }
        let g = problem.subgradient(&best.x);
        if g.iter().any(|v| *v != 0.0) {
            dirs.push(g.iter().map(|v| -v).collect());
        }
        if round > 0 {
            let delta: Vec<f64> = best.x.iter().zip(&prev).map(|(a, b)| a - b).collect();
            if delta.iter().any(|v| *v != 0.0) {
                dirs.push(delta);
            }
        }
        prev = best.x.clone();
        for e in dirs {
            let scale = best.x.iter().map(|v| v.abs()).fold(1.0, f64::max);
            let x = best.x.clone();
            let (s, v) = line_min(problem, &x, &e, best.value, scale);
            if s != 0.0 {
                let mut y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a + s * b).collect();
                problem.project(&mut y);
                let v = v.min(problem.eval(&y));
                best.offer(&y, v);
            }
        }
        last_gain = start_value - best.value;
        if last_gain <= 1e-15 * (1.0 + best.value.abs()) {
            break;
        }
    }
    last_gain.max(0.0)
}

/// Vertices formed by the breakpoint hyperplanes nearest to the current best
/// point.
fn polish(problem: &Problem, planes: &[Hyperplane], best: &mut Best<'_>, limit: f64) {
    let n = problem.n;
    let mut ranked: Vec<(f64, usize)> = planes
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let r: f64 = h.normal.iter().zip(&best.x).map(|(a, b)| a * b).sum::<f64>() - h.rhs;
            (r.abs(), i)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut m = n;
    while m < ranked.len() && binomial(m + 1, n) <= limit {
        m += 1;
    }
    let near: Vec<Hyperplane> = ranked[..m.min(ranked.len())]
        .iter()
        .map(|&(_, i)| planes[i].clone())
        .collect();
    enumerate_vertices(problem, &near, best);
}

/// `min sum_k u_k` subject to `u_k >= a_ki . x + b_ki`, with curved terms
/// replaced by their minorants, so the optimum is a lower bound on the
/// minimum (exact when there are no curved terms). `None` when the simplex
/// solver reports failure (for example an unbounded problem).
fn solve_lp(problem: &Problem) -> Option<(Vec<f64>, f64)> {
    use minilp::{ComparisonOp, LinearExpr, OptimizationDirection};
    let n = problem.n;
    let free = (f64::NEG_INFINITY, f64::INFINITY);
    let mut lp = minilp::Problem::new(OptimizationDirection::Minimize);
    let bounds = problem.bound.map_or(free, |b| (-b, b));
    let xs: Vec<_> = (0..n).map(|_| lp.add_var(0.0, bounds)).collect();
    let mut add_block = |pieces: &mut dyn Iterator<Item = (&[f64], f64)>| {
        let u = lp.add_var(1.0, free);
        for (a, b) in pieces {
            let mut expr = LinearExpr::empty();
            expr.add(u, 1.0);
            for (&xj, &aj) in xs.iter().zip(a) {
                if aj != 0.0 {
                    expr.add(xj, -aj);
                }
            }
            lp.add_constraint(expr, ComparisonOp::Ge, b);
        }
    };
    for &(s, e) in &problem.blocks {
        add_block(&mut (s..e).map(|p| (&problem.coef[p * n..(p + 1) * n], problem.offset[p])));
    }
    for c in &problem.curved {
        let pieces = c.minorant(n);
        add_block(&mut pieces.iter().map(|(a, b)| (a.as_slice(), *b)));
    }
    let sol = lp.solve().ok()?;
    Some((xs.iter().map(|&v| *sol.var_value(v)).collect(), sol.objective()))
}

pub(crate) fn minimize(problem: &Problem, opts: &SolveOptions, tie_key: Option<TieKey<'_>>) -> Solution {
    let n = problem.n;
    let mut origin = vec![0.0; n];
    problem.project(&mut origin);
    let mut best = Best::new(origin.clone(), problem.eval(&origin), tie_key);
    if n == 0 {
        return Solution {
            x: best.x,
            value: best.value,
            exact: true,
            tolerance: 0.0,
        };
    }

    let planes = if problem.is_piecewise_linear() {
        problem.hyperplanes()
    } else {
        Vec::new()
    };
    // Enumeration is only worth its cost when ties must be broken by key;
    // otherwise the LP is exact and faster.
    if problem.is_piecewise_linear()
        && (tie_key.is_some() || !opts.use_lp)
        && binomial(planes.len(), n) <= opts.enum_limit
        && rank(&planes.iter().map(|h| h.normal.clone()).collect::<Vec<_>>(), n) == n
    {
        enumerate_vertices(problem, &planes, &mut best);
        return Solution {
            x: best.x,
            value: best.value,
            exact: true,
            tolerance: 0.0,
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    if opts.use_lp {
        if let Some((x, lower)) = solve_lp(problem) {
            let fx = problem.eval(&x);
            best.offer(&x, fx);
            if problem.is_piecewise_linear() {
                return Solution {
                    x: best.x,
                    value: best.value,
                    exact: true,
                    tolerance: 0.0,
                };
            }
            refine(problem, &mut best, &mut rng, opts.refine_rounds);
            let tolerance = (best.value - lower).max(0.0);
            return Solution {
                x: best.x,
                value: best.value,
                exact: false,
                tolerance,
            };
        }
    }

    let restarts = opts.restarts.max(1);
    let per_restart = (opts.iterations / restarts).max(1);
    for r in 0..restarts {
        let mut x = if r == 0 {
            origin.clone()
        } else {
            // Starting radii spread over a log grid from 1e-3 to 1e3.
            let frac = (r - 1) as f64 / (restarts.saturating_sub(2)).max(1) as f64;
            let radius = 10f64.powf(-3.0 + 6.0 * frac);
            random_unit(&mut rng, n).into_iter().map(|v| v * radius).collect()
        };
        problem.project(&mut x);
        let step0 = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0) * 0.5;
        let fx = problem.eval(&x);
        best.offer(&x, fx);
        for k in 1..=per_restart {
            let g = problem.subgradient(&x);
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gn == 0.0 {
                break;
            }
            let step = step0 / (k as f64).sqrt() / gn;
            for (xi, gi) in x.iter_mut().zip(&g) {
                *xi -= step * gi;
            }
            problem.project(&mut x);
            let fx = problem.eval(&x);
            best.offer(&x, fx);
        }
    }

    let mut tolerance = refine(problem, &mut best, &mut rng, opts.refine_rounds);
    if problem.is_piecewise_linear() && !planes.is_empty() {
        let before = best.value;
        polish(problem, &planes, &mut best, opts.enum_limit);
        if best.value < before {
            tolerance = refine(problem, &mut best, &mut rng, 2);
        }
    }
    Solution {
        x: best.x,
        value: best.value,
        exact: false,
        tolerance,
    }
}
