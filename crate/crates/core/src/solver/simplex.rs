//! Dense two-phase simplex for small linear programs.
//!
//! Maximizes `c^T x` subject to linear rows and `x >= 0`. Pivoting uses
//! Bland's rule, so the method terminates without cycling; the instances the
//! solver builds have a few dozen rows, where a dense tableau is the simplest
//! robust choice.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rel: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, rel: Relation, rhs: f64) -> Self {
        Self { coeffs, rel, rhs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub num_vars: usize,
    /// Maximized.
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<(Vec<f64>, f64)> {
        match self {
            LpOutcome::Optimal { x, value } => Some((x, value)),
            _ => None,
        }
    }
}

const MAX_PIVOTS: usize = 20_000;

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    cols: usize,
    /// Columns that may never enter (dropped artificials).
    blocked: Vec<bool>,
    eps: f64,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r];
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c];
            if f == 0.0 {
                continue;
            }
            for (v, pv) in self.rows[i].iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.rows[i][c] = 0.0;
            self.rhs[i] -= f * pivot_rhs;
            if self.rhs[i].abs() < self.eps * 1e-3 {
                self.rhs[i] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Reduced-cost row `z_j = c_B B^-1 A_j - c_j` for objective `cost`.
    fn reduced(&self, cost: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = cost.iter().map(|c| -c).collect();
        for (i, row) in self.rows.iter().enumerate() {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (zj, a) in z.iter_mut().zip(row) {
                    *zj += cb * a;
                }
            }
        }
        z
    }

    /// Runs primal simplex for `cost` from the current basic feasible
    /// solution. Returns `Ok(true)` at optimality, `Ok(false)` if unbounded.
    fn optimize(&mut self, cost: &[f64], pivots: &mut usize) -> Result<bool, ()> {
        loop {
            let z = self.reduced(cost);
            let entering = (0..self.cols).find(|&j| !self.blocked[j] && z[j] < -self.eps);
            let Some(c) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > self.eps {
                    let ratio = self.rhs[i] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-12 || (ratio <= br + 1e-12 && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Ok(false);
            };
            self.pivot(r, c);
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return Err(());
            }
        }
    }
}

/// Solves `lp` with pivot tolerance `eps`.
pub fn solve(lp: &LinearProgram, eps: f64) -> LpOutcome {
    let n = lp.num_vars;
    let m = lp.constraints.len();
    // normalize to nonnegative right-hand sides
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = lp
        .constraints
        .iter()
        .map(|c| {
            let mut coeffs = c.coeffs.clone();
            coeffs.resize(n, 0.0);
            if c.rhs < 0.0 {
                let rel = match c.rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (coeffs.iter().map(|a| -a).collect(), rel, -c.rhs)
            } else {
                (coeffs, c.rel, c.rhs)
            }
        })
        .collect();
    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let cols = n + n_slack + n_art;
    let mut t = Tableau {
        rows: Vec::with_capacity(m),
        rhs: Vec::with_capacity(m),
        basis: Vec::with_capacity(m),
        cols,
        blocked: vec![false; cols],
        eps,
    };
    let mut slack = n;
    let mut art = n + n_slack;
    for (coeffs, rel, rhs) in rows.drain(..) {
        let mut row = coeffs;
        row.resize(cols, 0.0);
        match rel {
            Relation::Le => {
                row[slack] = 1.0;
                t.basis.push(slack);
                slack += 1;
            }
            Relation::Ge => {
                row[slack] = -1.0;
                slack += 1;
                row[art] = 1.0;
                t.basis.push(art);
                art += 1;
            }
            Relation::Eq => {
                row[art] = 1.0;
                t.basis.push(art);
                art += 1;
            }
        }
        t.rows.push(row);
        t.rhs.push(rhs);
    }
    let mut pivots = 0usize;
    let first_art = n + n_slack;
    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        for c in phase1.iter_mut().skip(first_art) {
            *c = -1.0;
        }
        match t.optimize(&phase1, &mut pivots) {
            Err(()) => return LpOutcome::IterationLimit,
            Ok(false) => return LpOutcome::Infeasible,
            Ok(true) => {}
        }
        let infeas: f64 = (0..t.rows.len())
            .filter(|&i| t.basis[i] >= first_art)
            .map(|i| t.rhs[i])
            .sum();
        let scale = 1.0 + t.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if infeas > eps * scale.max(1.0) * 10.0 {
            return LpOutcome::Infeasible;
        }
        // drive artificials out of the basis; drop redundant rows
        let mut i = 0;
        while i < t.rows.len() {
            if t.basis[i] >= first_art {
                match (0..first_art).find(|&j| t.rows[i][j].abs() > eps) {
                    Some(j) => {
                        t.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        t.rows.remove(i);
                        t.rhs.remove(i);
                        t.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
        for b in t.blocked.iter_mut().skip(first_art) {
            *b = true;
        }
    }
    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&lp.objective[..n]);
    match t.optimize(&cost, &mut pivots) {
        Err(()) => LpOutcome::IterationLimit,
        Ok(false) => LpOutcome::Unbounded,
        Ok(true) => {
            let mut x = vec![0.0; n];
            for (i, &b) in t.basis.iter().enumerate() {
                if b < n {
                    x[b] = t.rhs[i].max(0.0);
                }
            }
            let value = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
            LpOutcome::Optimal { x, value }
        }
    }
}
