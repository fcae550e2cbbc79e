//! A small modeling layer: matrix-valued affine expressions in a flat vector
//! of scalar decision variables, with equality, nonnegativity, second-order
//! cone and LMI constraints and a linear objective.

use std::ops::{Add, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Scalar affine expression `sum_i c_i x_i + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(i: usize) -> Self {
        Self {
            terms: vec![(i, 1.0)],
            constant: 0.0,
        }
    }

    /// Sort by variable and merge duplicates, dropping exact zeros.
    pub fn normalize(mut self) -> Self {
        self.terms.sort_unstable_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (i, c) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
        self
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|&(i, c)| (i, c * s)).collect(),
            constant: self.constant * s,
        }
    }

    fn axpy(&mut self, s: f64, other: &LinExpr) {
        if s == 0.0 {
            return;
        }
        self.terms
            .extend(other.terms.iter().map(|&(i, c)| (i, c * s)));
        self.constant += s * other.constant;
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self.axpy(1.0, &rhs);
        self.normalize()
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: LinExpr) -> LinExpr {
        self.axpy(-1.0, &rhs);
        self.normalize()
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scale(-1.0)
    }
}

/// Matrix of affine expressions, stored column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMat {
    rows: usize,
    cols: usize,
    data: Vec<LinExpr>,
}

impl AffineMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![LinExpr::default(); rows * cols],
        }
    }

    pub fn constant(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().map(|&v| LinExpr::constant(v)).collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(&DMatrix::identity(n, n))
    }

    /// `v * m` for a scalar expression `v` and constant matrix `m`.
    pub fn scaled(v: &LinExpr, m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().map(|&c| v.scale(c).normalize()).collect(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> LinExpr) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> &LinExpr {
        &self.data[j * self.rows + i]
    }

    pub fn entries(&self) -> impl Iterator<Item = &LinExpr> {
        self.data.iter()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    /// `a * self` for a constant matrix `a`.
    pub fn lmul(&self, a: &DMatrix<f64>) -> Self {
        assert_eq!(a.ncols(), self.rows, "lmul shape mismatch");
        Self::from_fn(a.nrows(), self.cols, |i, j| {
            let mut acc = LinExpr::default();
            for k in 0..self.rows {
                acc.axpy(a[(i, k)], self.get(k, j));
            }
            acc.normalize()
        })
    }

    /// `self * a` for a constant matrix `a`.
    pub fn rmul(&self, a: &DMatrix<f64>) -> Self {
        self.transpose().lmul(&a.transpose()).transpose()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|e| e.scale(s)).collect(),
        }
    }

    fn zip(&self, other: &Self, s: f64) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| {
                    let mut e = a.clone();
                    e.axpy(s, b);
                    e.normalize()
                })
                .collect(),
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        self.zip(other, 1.0)
    }

    pub fn minus(&self, other: &Self) -> Self {
        self.zip(other, -1.0)
    }

    pub fn minus_const(&self, m: &DMatrix<f64>) -> Self {
        self.minus(&Self::constant(m))
    }

    pub fn columns(&self, start: usize, count: usize) -> Self {
        Self::from_fn(self.rows, count, |i, j| self.get(i, start + j).clone())
    }

    pub fn rows_range(&self, start: usize, count: usize) -> Self {
        Self::from_fn(count, self.cols, |i, j| self.get(start + i, j).clone())
    }

    /// Assemble a block matrix; `None` entries are zero blocks. Every block
    /// row needs at least one concrete block to fix its height, and likewise
    /// for block columns.
    pub fn blocks(grid: &[Vec<Option<&AffineMat>>]) -> Self {
        let nbr = grid.len();
        let nbc = grid.first().map_or(0, Vec::len);
        let heights: Vec<usize> = (0..nbr)
            .map(|r| {
                grid[r]
                    .iter()
                    .flatten()
                    .map(|b| b.rows)
                    .next()
                    .expect("block row without a concrete block")
            })
            .collect();
        let widths: Vec<usize> = (0..nbc)
            .map(|c| {
                (0..nbr)
                    .filter_map(|r| grid[r][c])
                    .map(|b| b.cols)
                    .next()
                    .expect("block column without a concrete block")
            })
            .collect();
        let rows: usize = heights.iter().sum();
        let cols: usize = widths.iter().sum();
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for (br, h) in heights.iter().enumerate() {
            let mut c0 = 0;
            for (bc, w) in widths.iter().enumerate() {
                if let Some(b) = grid[br][bc] {
                    assert_eq!(b.shape(), (*h, *w), "block ({br},{bc}) has the wrong shape");
                    for j in 0..*w {
                        for i in 0..*h {
                            out.data[(c0 + j) * rows + r0 + i] = b.get(i, j).clone();
                        }
                    }
                }
                c0 += w;
            }
            r0 += h;
        }
        out
    }

    pub fn hstack(parts: &[&AffineMat]) -> Self {
        Self::blocks(&[parts.iter().map(|p| Some(*p)).collect()])
    }

    pub fn vstack(parts: &[&AffineMat]) -> Self {
        let grid: Vec<Vec<Option<&AffineMat>>> = parts.iter().map(|p| vec![Some(*p)]).collect();
        Self::blocks(&grid)
    }

    pub fn trace(&self) -> LinExpr {
        let mut acc = LinExpr::default();
        for i in 0..self.rows.min(self.cols) {
            acc.axpy(1.0, self.get(i, i));
        }
        acc.normalize()
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval(x))
    }
}

/// A named group of decision variables forming a matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MatVar {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub symmetric: bool,
    /// Variable index for every entry, column-major.
    index: Vec<usize>,
}

impl MatVar {
    pub fn expr(&self) -> AffineMat {
        AffineMat::from_fn(self.rows, self.cols, |i, j| {
            LinExpr::var(self.index[j * self.rows + i])
        })
    }

    pub fn value(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| {
            x[self.index[j * self.rows + i]]
        })
    }
}

#[derive(Clone, Debug)]
pub struct Lmi {
    pub label: String,
    pub matrix: AffineMat,
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct Soc {
    pub label: String,
    /// `(t, v)` with the constraint `|v| <= t`.
    pub head: LinExpr,
    pub tail: Vec<LinExpr>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixNorm {
    Spectral,
    Frobenius,
}

/// Conic program in the flat variable vector.
#[derive(Clone, Debug, Default)]
pub struct ConicProgram {
    nvars: usize,
    pub vars: Vec<MatVar>,
    /// Each expression must equal zero.
    pub equalities: Vec<(String, LinExpr)>,
    /// Each expression must be nonnegative.
    pub nonneg: Vec<(String, LinExpr)>,
    pub socs: Vec<Soc>,
    pub lmis: Vec<Lmi>,
    pub objective: LinExpr,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    fn fresh(&mut self, k: usize) -> std::ops::Range<usize> {
        let r = self.nvars..self.nvars + k;
        self.nvars += k;
        r
    }

    pub fn matrix_var(&mut self, name: &str, rows: usize, cols: usize) -> MatVar {
        let index: Vec<usize> = self.fresh(rows * cols).collect();
        let v = MatVar {
            name: name.into(),
            rows,
            cols,
            symmetric: false,
            index,
        };
        self.vars.push(v.clone());
        v
    }

    pub fn sym_var(&mut self, name: &str, n: usize) -> MatVar {
        let base = self.fresh(n * (n + 1) / 2).start;
        let mut index = vec![0; n * n];
        let mut k = base;
        for j in 0..n {
            for i in 0..=j {
                index[j * n + i] = k;
                index[i * n + j] = k;
                k += 1;
            }
        }
        let v = MatVar {
            name: name.into(),
            rows: n,
            cols: n,
            symmetric: true,
            index,
        };
        self.vars.push(v.clone());
        v
    }

    pub fn scalar_var(&mut self, name: &str) -> LinExpr {
        let v = self.matrix_var(name, 1, 1);
        LinExpr::var(v.index[0])
    }

    /// `lhs == rhs` entrywise.
    pub fn equal(&mut self, label: &str, lhs: &AffineMat, rhs: &DMatrix<f64>) {
        assert_eq!(lhs.shape(), rhs.shape(), "{label}: shape mismatch");
        for (k, e) in lhs.minus_const(rhs).data.into_iter().enumerate() {
            self.equalities.push((format!("{label}[{k}]"), e));
        }
    }

    /// `expr >= value`.
    pub fn at_least(&mut self, label: &str, expr: &LinExpr, value: f64) {
        self.nonneg
            .push((label.into(), expr.clone() - LinExpr::constant(value)));
    }

    /// `expr <= value`.
    pub fn at_most(&mut self, label: &str, expr: &LinExpr, value: f64) {
        self.nonneg
            .push((label.into(), LinExpr::constant(value) - expr.clone()));
    }

    /// `m >= margin * I` in the semidefinite order; `m` is symmetrized.
    pub fn psd(&mut self, label: &str, m: AffineMat, margin: f64) {
        assert_eq!(m.nrows(), m.ncols(), "{label}: LMI must be square");
        if m.nrows() == 0 {
            return;
        }
        self.lmis.push(Lmi {
            label: label.into(),
            matrix: m,
            margin,
        });
    }

    /// Fresh scalar `t` with `||m|| <= t`; returns `t`.
    pub fn norm_bound(&mut self, label: &str, m: &AffineMat, norm: MatrixNorm) -> LinExpr {
        let t = self.scalar_var(&format!("t_{label}"));
        if m.nrows() == 0 || m.ncols() == 0 {
            self.at_least(label, &t, 0.0);
            return t;
        }
        match norm {
            MatrixNorm::Spectral => {
                let ti_r = AffineMat::scaled(&t, &DMatrix::identity(m.nrows(), m.nrows()));
                let ti_c = AffineMat::scaled(&t, &DMatrix::identity(m.ncols(), m.ncols()));
                let mt = m.transpose();
                let block =
                    AffineMat::blocks(&[vec![Some(&ti_r), Some(m)], vec![Some(&mt), Some(&ti_c)]]);
                self.psd(label, block, 0.0);
            }
            MatrixNorm::Frobenius => {
                self.socs.push(Soc {
                    label: label.into(),
                    head: t.clone(),
                    tail: m.data.clone(),
                });
            }
        }
        t
    }

    pub fn minimize(&mut self, objective: LinExpr) {
        self.objective = objective.normalize();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lmul_rmul_match_dense_products() {
        let mut p = ConicProgram::new();
        let y = p.matrix_var("Y", 3, 2);
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, -3.0]);
        let x: Vec<f64> = (0..6).map(|i| i as f64 * 0.7 - 1.0).collect();
        let yv = y.value(&x);
        let e = y.expr().lmul(&a).rmul(&b);
        assert!((e.eval(&x) - &a * &yv * &b).abs().max() < 1e-12);
    }

    #[test]
    fn symmetric_var_shares_entries() {
        let mut p = ConicProgram::new();
        let s = p.sym_var("P", 3);
        assert_eq!(p.nvars(), 6);
        let x: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let v = s.value(&x);
        assert_eq!(v, v.transpose());
    }

    #[test]
    fn block_assembly() {
        let a = AffineMat::identity(2);
        let b = AffineMat::constant(&DMatrix::from_element(2, 1, 3.0));
        let bt = b.transpose();
        let m = AffineMat::blocks(&[vec![Some(&a), Some(&b)], vec![Some(&bt), None]]);
        let v = m.eval(&[]);
        assert_eq!(v.shape(), (3, 3));
        assert_eq!(v[(2, 0)], 3.0);
        assert_eq!(v[(2, 2)], 0.0);
        assert_eq!(AffineMat::hstack(&[&a, &b]).shape(), (2, 3));
    }
}
