//! Dense two-phase simplex over a generic [`Scalar`].
//!
//! Problems are stated with arbitrary variable bounds and `≤ / = / ≥` rows;
//! they are rewritten into `A x = b, x ≥ 0, b ≥ 0` internally. Every row
//! gets an identity column (slack or artificial) that is never dropped, so
//! `B⁻¹` can be read off the final tableau to produce dual multipliers and
//! Farkas certificates.

use thiserror::Error;

use crate::linalg::solve_sparse;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint<S> {
    /// Sparse coefficients `(variable, value)`.
    pub coeffs: Vec<(usize, S)>,
    pub relation: Relation,
    pub rhs: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds<S> {
    pub lower: Option<S>,
    pub upper: Option<S>,
}

impl<S: Scalar> Bounds<S> {
    pub fn non_negative() -> Self {
        Bounds {
            lower: Some(S::zero()),
            upper: None,
        }
    }

    pub fn free() -> Self {
        Bounds {
            lower: None,
            upper: None,
        }
    }

    pub fn between(lower: S, upper: S) -> Self {
        Bounds {
            lower: Some(lower),
            upper: Some(upper),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem<S> {
    pub sense: Sense,
    pub objective: Vec<S>,
    pub bounds: Vec<Bounds<S>>,
    pub constraints: Vec<Constraint<S>>,
}

impl<S: Scalar> LpProblem<S> {
    pub fn new(sense: Sense) -> Self {
        LpProblem {
            sense,
            objective: Vec::new(),
            bounds: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, cost: S, bounds: Bounds<S>) -> usize {
        self.objective.push(cost);
        self.bounds.push(bounds);
        self.objective.len() - 1
    }

    /// Adds `count` non-negative variables with zero cost; returns the first index.
    pub fn add_nonneg_vars(&mut self, count: usize) -> usize {
        let first = self.num_vars();
        for _ in 0..count {
            self.add_var(S::zero(), Bounds::non_negative());
        }
        first
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, S)>, relation: Relation, rhs: S) -> usize {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    /// Row activity `Σ a_j x_j` for constraint `row`.
    pub fn activity(&self, row: usize, x: &[S]) -> S {
        self.constraints[row]
            .coeffs
            .iter()
            .fold(S::zero(), |acc, (j, a)| acc + a.mul_ref(&x[*j]))
    }

    pub fn objective_value(&self, x: &[S]) -> S {
        self.objective
            .iter()
            .zip(x)
            .fold(S::zero(), |acc, (c, v)| acc + c.mul_ref(v))
    }

    /// Checks rows and bounds at `x` within `tol` (scaled by row magnitude
    /// in float mode).
    pub fn is_feasible(&self, x: &[S], tol: f64) -> bool {
        if x.len() != self.num_vars() {
            return false;
        }
        for (j, b) in self.bounds.iter().enumerate() {
            if let Some(l) = &b.lower {
                if !l.le_tol(&x[j], tol) {
                    return false;
                }
            }
            if let Some(u) = &b.upper {
                if !x[j].le_tol(u, tol) {
                    return false;
                }
            }
        }
        for (r, c) in self.constraints.iter().enumerate() {
            let act = self.activity(r, x);
            let scale = 1.0
                + c.rhs.to_f64().abs()
                + c.coeffs
                    .iter()
                    .map(|(j, a)| (a.to_f64() * x[*j].to_f64()).abs())
                    .sum::<f64>();
            let t = tol * scale;
            let ok = match c.relation {
                Relation::Le => act.le_tol(&c.rhs, t),
                Relation::Ge => c.rhs.le_tol(&act, t),
                Relation::Eq => act.approx_eq(&c.rhs, t),
            };
            if !ok {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PivotRule {
    /// Smallest-index entering and leaving variables; never cycles.
    #[default]
    Bland,
    /// Most negative reduced cost; faster, Bland ratio-test ties.
    Dantzig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOptions {
    pub pivot_rule: PivotRule,
    /// Pivot and zero tolerance for float mode. Ignored by exact scalars.
    pub tol: f64,
    /// Feasibility tolerance used to validate float solutions.
    pub feasibility_tol: f64,
    /// Overrides the default `10·(rows+cols)²` pivot limit.
    pub max_pivots: Option<usize>,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            pivot_rule: PivotRule::Bland,
            tol: 1e-9,
            feasibility_tol: 1e-9,
            max_pivots: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("simplex pivot limit of {0} reached")]
    IterationLimit(usize),
    #[error("numerical breakdown in float mode; retry in rational mode")]
    NumericalBreakdown,
    #[error("constraint references variable {var} but the problem has {num_vars} variables")]
    DimensionMismatch { var: usize, num_vars: usize },
    #[error("variable {0} has lower bound above upper bound")]
    InvalidBounds(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimal<S> {
    pub value: S,
    pub x: Vec<S>,
    /// One multiplier per constraint, signed for the stated sense:
    /// `value = Σ y_i b_i + Σ_j d_j x_j` with `d = c − Aᵀy`.
    pub duals: Vec<S>,
}

/// Row multipliers `m` such that `G(x) = Σ m_i (A_i x − b_i)` is
/// non-negative on the feasible set yet strictly negative everywhere on the
/// bound box.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasCertificate<S> {
    pub multipliers: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ray<S> {
    pub direction: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome<S> {
    Optimal(Optimal<S>),
    Infeasible(FarkasCertificate<S>),
    Unbounded(Ray<S>),
}

impl<S> LpOutcome<S> {
    pub fn optimal(self) -> Option<Optimal<S>> {
        match self {
            LpOutcome::Optimal(o) => Some(o),
            _ => None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        matches!(self, LpOutcome::Optimal(_))
    }
}

/// How an original variable maps into standard-form columns.
#[derive(Debug, Clone)]
enum VarMap<S> {
    /// `x = lower + x'`
    Shifted { col: usize, lower: S },
    /// `x = upper − x'`
    Mirrored { col: usize, upper: S },
    /// `x = x⁺ − x⁻`
    Split { pos: usize, neg: usize },
}

struct Tableau<S> {
    rows: Vec<Vec<S>>,
    /// Reduced costs; last entry is minus the objective value.
    obj: Vec<S>,
    basis: Vec<usize>,
    ncols: usize,
    first_artificial: usize,
    tol: f64,
}

impl<S: Scalar> Tableau<S> {
    fn rhs(&self, r: usize) -> &S {
        &self.rows[r][self.ncols]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let piv = self.rows[pr][pc].clone();
        let inv = S::one() / piv;
        let nz: Vec<usize> = {
            let row = &mut self.rows[pr];
            let mut nz = Vec::new();
            for (j, v) in row.iter_mut().enumerate() {
                if !v.is_zero() {
                    *v = v.mul_ref(&inv);
                    nz.push(j);
                }
            }
            row[pc] = S::one();
            nz
        };
        let prow = std::mem::take(&mut self.rows[pr]);
        for (r, row) in self.rows.iter_mut().enumerate() {
            if r == pr || row[pc].is_zero() {
                continue;
            }
            let f = row[pc].clone();
            for &j in &nz {
                row[j].sub_mul_assign(&f, &prow[j]);
            }
            row[pc] = S::zero();
            if !S::EXACT {
                for &j in &nz {
                    if row[j].is_zero_tol(self.tol * 1e-3) {
                        row[j] = S::zero();
                    }
                }
            }
        }
        if !self.obj[pc].is_zero() {
            let f = self.obj[pc].clone();
            for &j in &nz {
                self.obj[j].sub_mul_assign(&f, &prow[j]);
            }
            self.obj[pc] = S::zero();
        }
        self.rows[pr] = prow;
        self.basis[pr] = pc;
    }

    /// Sets reduced costs for the cost vector `c` (length `ncols`).
    fn price(&mut self, c: &[S]) {
        let mut obj: Vec<S> = c.iter().cloned().chain(std::iter::once(S::zero())).collect();
        for (r, &b) in self.basis.iter().enumerate() {
            if c[b].is_zero() {
                continue;
            }
            for (j, v) in self.rows[r].iter().enumerate() {
                if !v.is_zero() {
                    obj[j].sub_mul_assign(&c[b], v);
                }
            }
        }
        for &b in &self.basis {
            obj[b] = S::zero();
        }
        self.obj = obj;
    }

    fn entering(&self, rule: PivotRule, allowed: usize) -> Option<usize> {
        match rule {
            PivotRule::Bland => (0..allowed).find(|&j| self.obj[j].is_neg_tol(self.tol)),
            PivotRule::Dantzig => {
                let mut best: Option<usize> = None;
                for j in 0..allowed {
                    if self.obj[j].is_neg_tol(self.tol)
                        && best.is_none_or(|b| self.obj[j] < self.obj[b])
                    {
                        best = Some(j);
                    }
                }
                best
            }
        }
    }

    fn leaving(&self, col: usize) -> Option<usize> {
        if !S::EXACT {
            return self.leaving_harris(col);
        }
        let mut best: Option<(usize, S)> = None;
        for r in 0..self.rows.len() {
            let a = &self.rows[r][col];
            if !a.is_pos_tol(self.tol) {
                continue;
            }
            let ratio = self.rhs(r).div_ref(a);
            best = match best {
                None => Some((r, ratio)),
                Some((br, bv)) => {
                    if ratio < bv || (ratio == bv && self.basis[r] < self.basis[br]) {
                        Some((r, ratio))
                    } else {
                        Some((br, bv))
                    }
                }
            };
        }
        best.map(|(r, _)| r)
    }

    /// Two-pass ratio test for floats: bound the step using right-hand
    /// sides relaxed by the tolerance, then take the largest pivot among the
    /// rows within that bound. Small pivots amplify round-off.
    fn leaving_harris(&self, col: usize) -> Option<usize> {
        let slack = S::from_f64(self.tol).unwrap_or_else(S::zero);
        let mut bound: Option<S> = None;
        for r in 0..self.rows.len() {
            let a = &self.rows[r][col];
            if !a.is_pos_tol(self.tol) {
                continue;
            }
            let relaxed = self.rhs(r).add_ref(&slack).div_ref(a);
            if bound.as_ref().is_none_or(|b| relaxed < *b) {
                bound = Some(relaxed);
            }
        }
        let bound = bound?;
        let mut best: Option<usize> = None;
        for r in 0..self.rows.len() {
            let a = &self.rows[r][col];
            if !a.is_pos_tol(self.tol) {
                continue;
            }
            let b = self.rhs(r);
            let ratio = if b.is_pos_tol(0.0) { b.div_ref(a) } else { S::zero() };
            if ratio <= bound && best.is_none_or(|br| a.abs() > self.rows[br][col].abs()) {
                best = Some(r);
            }
        }
        best
    }

    /// Runs simplex iterations. `Ok(Some(col))` reports an unbounded column.
    /// With `floor` set, stops once the objective value is within it.
    fn run(
        &mut self,
        rule: PivotRule,
        allowed: usize,
        pivots: &mut usize,
        limit: usize,
        floor: Option<f64>,
    ) -> Result<Option<usize>, LpError> {
        // In float mode, noisy zero tests can make Bland's rule cycle on
        // degenerate vertices. After a long degenerate streak the entering
        // column is drawn pseudo-randomly among the eligible ones.
        let stall_limit = self.rows.len() + allowed;
        let mut stall = 0usize;
        let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
        loop {
            if let Some(tol) = floor {
                if !(-self.obj[self.ncols].clone()).is_pos_tol(tol) {
                    return Ok(None);
                }
            }
            let e = if !S::EXACT && stall > stall_limit {
                let eligible: Vec<usize> = (0..allowed).filter(|&j| self.obj[j].is_neg_tol(self.tol)).collect();
                if eligible.is_empty() {
                    None
                } else {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    Some(eligible[(state % eligible.len() as u64) as usize])
                }
            } else {
                self.entering(rule, allowed)
            };
            let Some(e) = e else {
                return Ok(None);
            };
            let Some(l) = self.leaving(e) else {
                return Ok(Some(e));
            };
            if *pivots >= limit {
                return Err(LpError::IterationLimit(limit));
            }
            if self.rhs(l).is_pos_tol(self.tol) {
                stall = 0;
            } else {
                stall += 1;
            }
            self.pivot(l, e);
            *pivots += 1;
            if !S::EXACT && !self.obj[self.ncols].is_finite_value() {
                return Err(LpError::NumericalBreakdown);
            }
        }
    }

    /// `c_Bᵀ B⁻¹ e_i` for each row, given the identity column of each row.
    fn row_duals(&self, c: &[S], identity_col: &[usize]) -> Vec<S> {
        identity_col
            .iter()
            .map(|&col| {
                self.basis
                    .iter()
                    .enumerate()
                    .fold(S::zero(), |acc, (r, &b)| {
                        if c[b].is_zero() || self.rows[r][col].is_zero() {
                            acc
                        } else {
                            acc + c[b].mul_ref(&self.rows[r][col])
                        }
                    })
            })
            .collect()
    }
}

/// Standard form `A x = b, x ≥ 0` of an [`LpProblem`], with what is needed
/// to map a standard-form solution back.
struct StdForm<S> {
    maps: Vec<VarMap<S>>,
    sign: Vec<S>,
    identity_col: Vec<usize>,
    first_artificial: usize,
    ncols: usize,
    m_orig: usize,
    /// Phase 2 costs, always minimizing.
    cost: Vec<S>,
}

/// Returns the standard form and its dense rows `[A | b]`.
fn standardize<S: Scalar>(problem: &LpProblem<S>) -> Result<(StdForm<S>, Vec<Vec<S>>), LpError> {
    let n = problem.num_vars();
    for c in &problem.constraints {
        if let Some(&(var, _)) = c.coeffs.iter().find(|(j, _)| *j >= n) {
            return Err(LpError::DimensionMismatch { var, num_vars: n });
        }
    }

    // Variable substitution.
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut upper_rows: Vec<(usize, S)> = Vec::new();
    for (j, b) in problem.bounds.iter().enumerate() {
        match (&b.lower, &b.upper) {
            (Some(l), upper) => {
                if let Some(u) = upper {
                    if u < l {
                        return Err(LpError::InvalidBounds(j));
                    }
                    upper_rows.push((ncols, u.sub_ref(l)));
                }
                maps.push(VarMap::Shifted {
                    col: ncols,
                    lower: l.clone(),
                });
                ncols += 1;
            }
            (None, Some(u)) => {
                maps.push(VarMap::Mirrored {
                    col: ncols,
                    upper: u.clone(),
                });
                ncols += 1;
            }
            (None, None) => {
                maps.push(VarMap::Split {
                    pos: ncols,
                    neg: ncols + 1,
                });
                ncols += 2;
            }
        }
    }
    let nstruct = ncols;

    // Standard-form rows: (dense coeffs over structural cols, relation, rhs).
    let m_orig = problem.constraints.len();
    let m = m_orig + upper_rows.len();
    let mut std_rows: Vec<(Vec<S>, Relation, S)> = Vec::with_capacity(m);
    for c in &problem.constraints {
        let mut coeffs = vec![S::zero(); nstruct];
        let mut rhs = c.rhs.clone();
        for (j, a) in &c.coeffs {
            match &maps[*j] {
                VarMap::Shifted { col, lower } => {
                    coeffs[*col] = coeffs[*col].add_ref(a);
                    rhs = rhs.sub_ref(&a.mul_ref(lower));
                }
                VarMap::Mirrored { col, upper } => {
                    coeffs[*col] = coeffs[*col].sub_ref(a);
                    rhs = rhs.sub_ref(&a.mul_ref(upper));
                }
                VarMap::Split { pos, neg } => {
                    coeffs[*pos] = coeffs[*pos].add_ref(a);
                    coeffs[*neg] = coeffs[*neg].sub_ref(a);
                }
            }
        }
        std_rows.push((coeffs, c.relation, rhs));
    }
    for (col, width) in &upper_rows {
        let mut coeffs = vec![S::zero(); nstruct];
        coeffs[*col] = S::one();
        std_rows.push((coeffs, Relation::Le, width.clone()));
    }

    // Slack columns follow the structural ones, artificials come last.
    let mut slack_of_row: Vec<Option<usize>> = vec![None; m];
    for (i, (_, rel, _)) in std_rows.iter().enumerate() {
        if *rel != Relation::Eq {
            slack_of_row[i] = Some(ncols);
            ncols += 1;
        }
    }
    let mut sign = vec![S::one(); m];
    let mut needs_artificial = vec![false; m];
    for (i, (_, rel, rhs)) in std_rows.iter().enumerate() {
        let flip = rhs.is_neg_tol(0.0);
        if flip {
            sign[i] = -S::one();
        }
        // The slack can start basic only if its coefficient is +1 after flipping.
        needs_artificial[i] = match rel {
            Relation::Eq => true,
            Relation::Le => flip,
            Relation::Ge => !flip,
        };
    }
    let first_artificial = ncols;
    let mut identity_col = vec![0usize; m];
    for i in 0..m {
        if needs_artificial[i] {
            identity_col[i] = ncols;
            ncols += 1;
        } else {
            identity_col[i] = slack_of_row[i].expect("inequality rows have slacks");
        }
    }

    let mut rows: Vec<Vec<S>> = Vec::with_capacity(m);
    for (i, (coeffs, rel, rhs)) in std_rows.into_iter().enumerate() {
        let mut row = coeffs;
        row.resize(ncols + 1, S::zero());
        if let Some(s) = slack_of_row[i] {
            row[s] = match rel {
                Relation::Le => S::one(),
                _ => -S::one(),
            };
        }
        row[ncols] = rhs;
        if sign[i] != S::one() {
            for v in row.iter_mut() {
                if !v.is_zero() {
                    *v = -v.clone();
                }
            }
        }
        if needs_artificial[i] {
            row[identity_col[i]] = S::one();
        }
        rows.push(row);
    }

    let mut c2 = vec![S::zero(); ncols];
    for (j, cost) in problem.objective.iter().enumerate() {
        let cost = match problem.sense {
            Sense::Minimize => cost.clone(),
            Sense::Maximize => -cost.clone(),
        };
        match &maps[j] {
            VarMap::Shifted { col, .. } => c2[*col] = cost,
            VarMap::Mirrored { col, .. } => c2[*col] = -cost,
            VarMap::Split { pos, neg } => {
                c2[*neg] = -cost.clone();
                c2[*pos] = cost;
            }
        }
    }
    let form = StdForm {
        maps,
        sign,
        identity_col,
        first_artificial,
        ncols,
        m_orig,
        cost: c2,
    };
    Ok((form, rows))
}

/// Maps standard-form primal values `xs` and row duals `y` back to `problem`.
fn solution<S: Scalar>(form: &StdForm<S>, problem: &LpProblem<S>, xs: &[S], y: &[S]) -> Optimal<S> {
    let x: Vec<S> = form
        .maps
        .iter()
        .map(|mp| match mp {
            VarMap::Shifted { col, lower } => lower.add_ref(&xs[*col]),
            VarMap::Mirrored { col, upper } => upper.sub_ref(&xs[*col]),
            VarMap::Split { pos, neg } => xs[*pos].sub_ref(&xs[*neg]),
        })
        .collect();
    let duals: Vec<S> = (0..form.m_orig)
        .map(|i| {
            let v = form.sign[i].mul_ref(&y[i]);
            match problem.sense {
                Sense::Minimize => v,
                Sense::Maximize => -v,
            }
        })
        .collect();
    let value = problem.objective_value(&x);
    Optimal { value, x, duals }
}

/// Solves `problem` with the simplex method.
///
/// Exact scalars first try the final basis of a floating-point solve,
/// recomputed exactly and accepted only when it is primal and dual
/// feasible; otherwise the exact simplex runs from scratch.
pub fn solve_lp<S: Scalar>(problem: &LpProblem<S>, opts: &LpOptions) -> Result<LpOutcome<S>, LpError> {
    if S::EXACT {
        if let Some(opt) = certify_float_basis(problem, opts)? {
            return Ok(LpOutcome::Optimal(opt));
        }
        log::debug!("float basis not certified; running the exact simplex");
    }
    simplex(problem, opts).map(|(outcome, _)| outcome)
}

fn to_float<S: Scalar>(problem: &LpProblem<S>) -> LpProblem<f64> {
    let f = |v: &S| v.to_f64();
    LpProblem {
        sense: problem.sense,
        objective: problem.objective.iter().map(f).collect(),
        bounds: problem
            .bounds
            .iter()
            .map(|b| Bounds {
                lower: b.lower.as_ref().map(f),
                upper: b.upper.as_ref().map(f),
            })
            .collect(),
        constraints: problem
            .constraints
            .iter()
            .map(|c| Constraint {
                coeffs: c.coeffs.iter().map(|(j, v)| (*j, f(v))).collect(),
                relation: c.relation,
                rhs: f(&c.rhs),
            })
            .collect(),
    }
}

fn certify_float_basis<S: Scalar>(problem: &LpProblem<S>, opts: &LpOptions) -> Result<Option<Optimal<S>>, LpError> {
    let (form, rows) = standardize(problem)?;
    let float = to_float(problem);
    let basis = match simplex(&float, opts) {
        Ok((LpOutcome::Optimal(_), Some((basis, identity_col)))) if identity_col == form.identity_col => basis,
        _ => return Ok(None),
    };
    let m = rows.len();
    let ncols = form.ncols;
    let mut pos = vec![usize::MAX; ncols];
    for (k, &b) in basis.iter().enumerate() {
        pos[b] = k;
    }
    let mut b_rows: Vec<Vec<(usize, S)>> = vec![Vec::new(); m];
    let mut bt_rows: Vec<Vec<(usize, S)>> = vec![Vec::new(); m];
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row[..ncols].iter().enumerate() {
            if pos[j] != usize::MAX && !v.is_zero() {
                b_rows[i].push((pos[j], v.clone()));
                bt_rows[pos[j]].push((i, v.clone()));
            }
        }
    }
    let rhs: Vec<S> = rows.iter().map(|r| r[ncols].clone()).collect();
    let Some(xb) = solve_sparse(m, b_rows, rhs) else {
        return Ok(None);
    };
    for (k, &b) in basis.iter().enumerate() {
        if xb[k].is_neg_tol(0.0) || (b >= form.first_artificial && !xb[k].is_zero()) {
            return Ok(None);
        }
    }
    let cb: Vec<S> = basis.iter().map(|&b| form.cost[b].clone()).collect();
    let Some(y) = solve_sparse(m, bt_rows, cb) else {
        return Ok(None);
    };
    let mut reduced = form.cost[..form.first_artificial].to_vec();
    for (yi, row) in y.iter().zip(&rows) {
        if yi.is_zero() {
            continue;
        }
        for (d, a) in reduced.iter_mut().zip(&row[..form.first_artificial]) {
            if !a.is_zero() {
                d.sub_mul_assign(yi, a);
            }
        }
    }
    if reduced.iter().any(|d| d.is_neg_tol(0.0)) {
        return Ok(None);
    }
    let mut xs = vec![S::zero(); ncols];
    for (k, &b) in basis.iter().enumerate() {
        xs[b] = xb[k].clone();
    }
    Ok(Some(solution(&form, problem, &xs, &y)))
}

/// Two-phase tableau simplex. On optimality also returns the final basis
/// and the initial identity columns.
#[allow(clippy::type_complexity)]
fn simplex<S: Scalar>(
    problem: &LpProblem<S>,
    opts: &LpOptions,
) -> Result<(LpOutcome<S>, Option<(Vec<usize>, Vec<usize>)>), LpError> {
    let (form, rows) = standardize(problem)?;
    let m = rows.len();
    let m_orig = form.m_orig;
    let ncols = form.ncols;
    let first_artificial = form.first_artificial;
    let identity_col = form.identity_col.clone();
    let sign = &form.sign;
    let maps = &form.maps;
    let c2 = form.cost.clone();
    let limit = opts
        .max_pivots
        .unwrap_or_else(|| 10 * (m + ncols) * (m + ncols));
    let mut tab = Tableau {
        rows,
        obj: Vec::new(),
        basis: identity_col.clone(),
        ncols,
        first_artificial,
        tol: if S::EXACT { 0.0 } else { opts.tol },
    };
    let mut pivots = 0usize;

    // Phase 1.
    let has_artificials = first_artificial < ncols;
    if has_artificials {
        let c1: Vec<S> = (0..ncols)
            .map(|j| if j >= first_artificial { S::one() } else { S::zero() })
            .collect();
        tab.price(&c1);
        // Phase 1 is bounded below by zero; an unbounded column cannot occur.
        tab.run(opts.pivot_rule, ncols, &mut pivots, limit, Some(opts.feasibility_tol))?;
        let infeasibility = -tab.obj[ncols].clone();
        if infeasibility.is_pos_tol(opts.feasibility_tol) {
            let y = tab.row_duals(&c1, &identity_col);
            let multipliers = (0..m_orig).map(|i| sign[i].mul_ref(&y[i])).collect();
            return Ok((LpOutcome::Infeasible(FarkasCertificate { multipliers }), None));
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] < first_artificial {
                continue;
            }
            let col = (0..first_artificial).find(|&j| !tab.rows[r][j].is_zero_tol(tab.tol));
            if let Some(j) = col {
                tab.pivot(r, j);
                pivots += 1;
            }
        }
    }

    tab.price(&c2);
    if let Some(e) = tab.run(opts.pivot_rule, tab.first_artificial, &mut pivots, limit, None)? {
        let mut dir_std = vec![S::zero(); ncols];
        dir_std[e] = S::one();
        for (r, &b) in tab.basis.iter().enumerate() {
            dir_std[b] = -tab.rows[r][e].clone();
        }
        let direction = maps
            .iter()
            .map(|mp| match mp {
                VarMap::Shifted { col, .. } => dir_std[*col].clone(),
                VarMap::Mirrored { col, .. } => -dir_std[*col].clone(),
                VarMap::Split { pos, neg } => dir_std[*pos].sub_ref(&dir_std[*neg]),
            })
            .collect();
        return Ok((LpOutcome::Unbounded(Ray { direction }), None));
    }

    let mut xs = vec![S::zero(); ncols];
    for (r, &b) in tab.basis.iter().enumerate() {
        xs[b] = tab.rhs(r).clone();
    }
    let y = tab.row_duals(&c2, &identity_col);
    let opt = solution(&form, problem, &xs, &y);

    if !S::EXACT && !problem.is_feasible(&opt.x, opts.feasibility_tol.max(opts.tol) * 1e3) {
        return Err(LpError::NumericalBreakdown);
    }

    Ok((LpOutcome::Optimal(opt), Some((tab.basis, identity_col))))
}

/// `sup` of `a·x` over the bound box, `None` when unbounded above.
fn box_sup<S: Scalar>(a: &[S], bounds: &[Bounds<S>], tol: f64) -> Option<S> {
    let mut total = S::zero();
    for (aj, b) in a.iter().zip(bounds) {
        if aj.is_pos_tol(tol) {
            total = total + aj.mul_ref(b.upper.as_ref()?);
        } else if aj.is_neg_tol(tol) {
            total = total + aj.mul_ref(b.lower.as_ref()?);
        }
    }
    Some(total)
}

impl<S: Scalar> FarkasCertificate<S> {
    /// Independent check that the multipliers prove infeasibility.
    pub fn verify(&self, problem: &LpProblem<S>, tol: f64) -> bool {
        if self.multipliers.len() != problem.constraints.len() {
            return false;
        }
        let mut a = vec![S::zero(); problem.num_vars()];
        let mut mb = S::zero();
        for (m, c) in self.multipliers.iter().zip(&problem.constraints) {
            let sign_ok = match c.relation {
                Relation::Le => !m.is_pos_tol(tol),
                Relation::Ge => !m.is_neg_tol(tol),
                Relation::Eq => true,
            };
            if !sign_ok {
                return false;
            }
            for (j, v) in &c.coeffs {
                a[*j] = a[*j].add_ref(&m.mul_ref(v));
            }
            mb = mb + m.mul_ref(&c.rhs);
        }
        match box_sup(&a, &problem.bounds, tol) {
            Some(sup) => (sup - mb).is_neg_tol(tol),
            None => false,
        }
    }
}

impl<S: Scalar> Ray<S> {
    /// Checks that the ray is a recession direction that improves the objective.
    pub fn verify(&self, problem: &LpProblem<S>, tol: f64) -> bool {
        let d = &self.direction;
        if d.len() != problem.num_vars() {
            return false;
        }
        for (dj, b) in d.iter().zip(&problem.bounds) {
            if b.lower.is_some() && dj.is_neg_tol(tol) {
                return false;
            }
            if b.upper.is_some() && dj.is_pos_tol(tol) {
                return false;
            }
        }
        for r in 0..problem.constraints.len() {
            let act = problem.activity(r, d);
            let ok = match problem.constraints[r].relation {
                Relation::Le => !act.is_pos_tol(tol),
                Relation::Ge => !act.is_neg_tol(tol),
                Relation::Eq => act.is_zero_tol(tol),
            };
            if !ok {
                return false;
            }
        }
        let gain = problem.objective_value(d);
        match problem.sense {
            Sense::Maximize => gain.is_pos_tol(tol),
            Sense::Minimize => gain.is_neg_tol(tol),
        }
    }
}

impl<S: Scalar> Optimal<S> {
    /// Reduced costs `d = c − Aᵀy` in the original variable space.
    pub fn reduced_costs(&self, problem: &LpProblem<S>) -> Vec<S> {
        let mut d = problem.objective.clone();
        for (y, c) in self.duals.iter().zip(&problem.constraints) {
            for (j, a) in &c.coeffs {
                d[*j] = d[*j].sub_ref(&y.mul_ref(a));
            }
        }
        d
    }

    /// Strong duality and complementary slackness check.
    pub fn verify_duality(&self, problem: &LpProblem<S>, tol: f64) -> bool {
        let d = self.reduced_costs(problem);
        let yb = self
            .duals
            .iter()
            .zip(&problem.constraints)
            .fold(S::zero(), |acc, (y, c)| acc + y.mul_ref(&c.rhs));
        let dx = d
            .iter()
            .zip(&self.x)
            .fold(S::zero(), |acc, (a, b)| acc + a.mul_ref(b));
        if !self.value.approx_eq(&(yb + dx), tol) {
            return false;
        }
        // Dual sign conditions (stated for minimization; flipped for max).
        let flip = problem.sense == Sense::Maximize;
        for (y, c) in self.duals.iter().zip(&problem.constraints) {
            let ok = match (c.relation, flip) {
                (Relation::Eq, _) => true,
                (Relation::Ge, false) | (Relation::Le, true) => !y.is_neg_tol(tol),
                (Relation::Le, false) | (Relation::Ge, true) => !y.is_pos_tol(tol),
            };
            if !ok {
                return false;
            }
        }
        // A non-zero reduced cost only at a bound that it pushes against.
        for ((dj, xj), b) in d.iter().zip(&self.x).zip(&problem.bounds) {
            let dj = if flip { -dj.clone() } else { dj.clone() };
            if dj.is_pos_tol(tol) && !b.lower.as_ref().is_some_and(|l| l.approx_eq(xj, tol)) {
                return false;
            }
            if dj.is_neg_tol(tol) && !b.upper.as_ref().is_some_and(|u| u.approx_eq(xj, tol)) {
                return false;
            }
        }
        true
    }
}
