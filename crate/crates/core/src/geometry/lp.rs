//! Dense two-phase tableau simplex for the small linear programs that show
//! up in support-function queries and hull tests (tens of rows at most).

const EPS: f64 = 1e-9;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Unbounded,
    Infeasible,
}

pub(crate) struct Constraint {
    pub coeffs: Vec<f64>,
    pub rel: Relation,
    pub rhs: f64,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    fn pivot(&mut self, p: usize, q: usize) {
        let piv = self.rows[p][q];
        for v in self.rows[p].iter_mut() {
            *v /= piv;
        }
        let prow = self.rows[p].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == p {
                continue;
            }
            let f = row[q];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
            }
        }
        let f = self.obj[q];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
        }
        self.basis[p] = q;
    }

    /// Bland's rule iterations on the current objective row. `allowed`
    /// masks columns that may enter the basis.
    fn run(&mut self, allowed: &[bool]) -> Option<bool> {
        for _ in 0..MAX_PIVOTS {
            let entering = (0..self.width).find(|&j| allowed[j] && self.obj[j] > EPS);
            let Some(q) = entering else {
                return Some(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][q];
                if a > EPS {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - EPS || (ratio <= lr + EPS && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Some(false),
                Some((p, _)) => self.pivot(p, q),
            }
        }
        None
    }
}

/// Maximise `c·x` subject to `constraints` and `x >= 0`.
pub(crate) fn maximize(c: &[f64], constraints: &[Constraint]) -> LpOutcome {
    let n = c.len();
    let m = constraints.len();
    let n_slack = constraints.iter().filter(|k| k.rel != Relation::Eq).count();
    // Normalise to non-negative right hand sides.
    let normalised: Vec<(Vec<f64>, Relation, f64)> = constraints
        .iter()
        .map(|k| {
            debug_assert_eq!(k.coeffs.len(), n);
            if k.rhs < 0.0 {
                let rel = match k.rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (k.coeffs.iter().map(|v| -v).collect(), rel, -k.rhs)
            } else {
                (k.coeffs.clone(), k.rel, k.rhs)
            }
        })
        .collect();
    let n_art = normalised.iter().filter(|k| k.1 != Relation::Le).count();
    let width = n + n_slack + n_art;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut slack_col = n;
    let mut art_col = n + n_slack;
    for (coeffs, rel, rhs) in &normalised {
        let mut row = vec![0.0; width + 1];
        row[..n].copy_from_slice(coeffs);
        row[width] = *rhs;
        match rel {
            Relation::Le => {
                row[slack_col] = 1.0;
                basis.push(slack_col);
                slack_col += 1;
            }
            Relation::Ge => {
                row[slack_col] = -1.0;
                slack_col += 1;
                row[art_col] = 1.0;
                basis.push(art_col);
                art_col += 1;
            }
            Relation::Eq => {
                row[art_col] = 1.0;
                basis.push(art_col);
                art_col += 1;
            }
        }
        rows.push(row);
    }
    let is_art = |j: usize| j >= n + n_slack && j < width;
    let mut tab = Tableau {
        rows,
        obj: vec![0.0; width + 1],
        basis,
        width,
    };

    if n_art > 0 {
        // Phase 1: maximise -sum(artificials).
        for j in 0..width {
            if is_art(j) {
                tab.obj[j] = -1.0;
            }
        }
        for i in 0..m {
            if is_art(tab.basis[i]) {
                let row = tab.rows[i].clone();
                for (v, r) in tab.obj.iter_mut().zip(&row) {
                    *v += r;
                }
            }
        }
        let allowed = vec![true; width];
        if tab.run(&allowed).is_none() {
            return LpOutcome::Infeasible;
        }
        // obj[width] holds +sum(artificials) at the optimum.
        if tab.obj[width] > 1e-7 {
            return LpOutcome::Infeasible;
        }
        // Drive remaining artificials out of the basis.
        let mut i = 0;
        while i < tab.rows.len() {
            if is_art(tab.basis[i]) {
                let q = (0..n + n_slack).find(|&j| tab.rows[i][j].abs() > EPS);
                match q {
                    Some(q) => {
                        tab.pivot(i, q);
                        i += 1;
                    }
                    None => {
                        tab.rows.remove(i);
                        tab.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    // Phase 2.
    tab.obj = vec![0.0; width + 1];
    tab.obj[..n].copy_from_slice(c);
    for i in 0..tab.rows.len() {
        let b = tab.basis[i];
        let cb = if b < n { c[b] } else { 0.0 };
        if cb != 0.0 {
            let row = tab.rows[i].clone();
            for (v, r) in tab.obj.iter_mut().zip(&row) {
                *v -= cb * r;
            }
        }
    }
    let allowed: Vec<bool> = (0..width).map(|j| !is_art(j)).collect();
    match tab.run(&allowed) {
        None => LpOutcome::Infeasible,
        Some(false) => LpOutcome::Unbounded,
        Some(true) => {
            let mut x = vec![0.0; n];
            for (i, &b) in tab.basis.iter().enumerate() {
                if b < n {
                    x[b] = tab.rhs(i);
                }
            }
            let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
            LpOutcome::Optimal { x, value }
        }
    }
}

/// Maximise `c·y` over `{y : A y <= b}` with `y` free. `a_rows` are the rows
/// of `A`.
pub(crate) fn maximize_free(c: &[f64], a_rows: &[Vec<f64>], b: &[f64]) -> LpOutcome {
    let n = c.len();
    let split_c: Vec<f64> = c.iter().copied().chain(c.iter().map(|v| -v)).collect();
    let cons: Vec<Constraint> = a_rows
        .iter()
        .zip(b)
        .map(|(row, &rhs)| Constraint {
            coeffs: row.iter().copied().chain(row.iter().map(|v| -v)).collect(),
            rel: Relation::Le,
            rhs,
        })
        .collect();
    match maximize(&split_c, &cons) {
        LpOutcome::Optimal { x, value } => {
            let y = (0..n).map(|i| x[i] - x[i + n]).collect();
            LpOutcome::Optimal { x: y, value }
        }
        other => other,
    }
}
