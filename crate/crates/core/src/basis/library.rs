use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::function::BasisFunction;
use crate::error::{Error, Result};

/// Ordered dictionary `Z(p) = [p; Q(p)]` where `p` stacks the state and,
/// for input-augmented dictionaries, the input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLibrary", into = "RawLibrary")]
pub struct BasisLibrary {
    state_dim: usize,
    input_dim: usize,
    nonlinear: Vec<BasisFunction>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawLibrary {
    state_dim: usize,
    #[serde(default)]
    input_dim: usize,
    nonlinear: Vec<BasisFunction>,
}

impl TryFrom<RawLibrary> for BasisLibrary {
    type Error = Error;
    fn try_from(r: RawLibrary) -> Result<Self> {
        BasisLibrary::new(r.state_dim, r.input_dim, r.nonlinear)
    }
}

impl From<BasisLibrary> for RawLibrary {
    fn from(l: BasisLibrary) -> Self {
        RawLibrary {
            state_dim: l.state_dim,
            input_dim: l.input_dim,
            nonlinear: l.nonlinear,
        }
    }
}

impl BasisLibrary {
    pub fn new(state_dim: usize, input_dim: usize, nonlinear: Vec<BasisFunction>) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::input(
                "dictionary needs at least one state coordinate",
            ));
        }
        let dim = state_dim + input_dim;
        for (i, f) in nonlinear.iter().enumerate() {
            f.check_dim(dim)
                .map_err(|e| Error::input(format!("Q[{i}]: {e}")))?;
            if f.is_affine() {
                return Err(Error::input(format!(
                    "Q[{i}] is affine and duplicates the identity block"
                )));
            }
            if nonlinear[..i].contains(f) {
                return Err(Error::input(format!("Q[{i}] is a duplicate entry")));
            }
        }
        Ok(Self {
            state_dim,
            input_dim,
            nonlinear,
        })
    }

    /// `Z(x) = x`, no nonlinear part.
    pub fn linear(state_dim: usize) -> Result<Self> {
        Self::new(state_dim, 0, Vec::new())
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Number of identity coordinates.
    pub fn coord_dim(&self) -> usize {
        self.state_dim + self.input_dim
    }

    pub fn nonlinear(&self) -> &[BasisFunction] {
        &self.nonlinear
    }

    pub fn nonlinear_dim(&self) -> usize {
        self.nonlinear.len()
    }

    /// Full dictionary length.
    pub fn dim(&self) -> usize {
        self.coord_dim() + self.nonlinear.len()
    }

    pub fn eval(&self, point: &[f64]) -> Result<DVector<f64>> {
        if point.len() != self.coord_dim() {
            return Err(Error::input(format!(
                "point has dimension {}, dictionary expects {}",
                point.len(),
                self.coord_dim()
            )));
        }
        Ok(self.eval_unchecked(point))
    }

    pub(crate) fn eval_unchecked(&self, point: &[f64]) -> DVector<f64> {
        let mut z = DVector::zeros(self.dim());
        z.rows_mut(0, point.len()).copy_from_slice(point);
        for (i, f) in self.nonlinear.iter().enumerate() {
            z[point.len() + i] = f.eval(point);
        }
        z
    }

    pub fn eval_nonlinear(&self, point: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.nonlinear.len(),
            self.nonlinear.iter().map(|f| f.eval(point)),
        )
    }

    /// Evaluate Z column by column.
    pub fn eval_columns(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if points.nrows() != self.coord_dim() {
            return Err(Error::input(format!(
                "points have {} rows, dictionary expects {}",
                points.nrows(),
                self.coord_dim()
            )));
        }
        let mut out = DMatrix::zeros(self.dim(), points.ncols());
        for (k, col) in points.column_iter().enumerate() {
            let p: Vec<f64> = col.iter().copied().collect();
            out.set_column(k, &self.eval_unchecked(&p));
        }
        Ok(out)
    }

    pub fn coord_names(&self) -> Vec<String> {
        (1..=self.state_dim)
            .map(|i| format!("x{i}"))
            .chain((1..=self.input_dim).map(|i| format!("u{i}")))
            .collect()
    }

    /// One label per entry of Z.
    pub fn labels(&self) -> Vec<String> {
        let names = self.coord_names();
        names
            .iter()
            .cloned()
            .chain(self.nonlinear.iter().map(|f| f.label(&names)))
            .collect()
    }

    /// True when every Q entry vanishes at the origin with zero gradient, so
    /// `|Q(x)| / |x| -> 0`: the linear part dominates near the origin.
    pub fn is_small_near_origin(&self) -> bool {
        let dim = self.coord_dim();
        self.nonlinear.iter().all(|f| {
            f.value_at_origin() == 0.0 && f.gradient_at_origin(dim).iter().all(|&g| g == 0.0)
        })
    }

    /// Jacobian of Q at the origin, `|Q| x coord_dim`.
    pub fn jacobian_at_origin(&self) -> DMatrix<f64> {
        let dim = self.coord_dim();
        let mut f = DMatrix::zeros(self.nonlinear.len(), dim);
        for (i, q) in self.nonlinear.iter().enumerate() {
            for (j, g) in q.gradient_at_origin(dim).into_iter().enumerate() {
                f[(i, j)] = g;
            }
        }
        f
    }

    /// Split `Q(x) = F x + r(x)` and return `F` together with the library of
    /// remainders `r`.
    pub fn taylor_remainder(&self) -> Result<(DMatrix<f64>, BasisLibrary)> {
        let dim = self.coord_dim();
        let names = self.coord_names();
        let mut rem = Vec::with_capacity(self.nonlinear.len());
        for q in &self.nonlinear {
            let v0 = q.value_at_origin();
            if v0 != 0.0 {
                return Err(Error::Transform(format!(
                    "{} does not vanish at the origin (value {v0})",
                    q.label(&names)
                )));
            }
            let r = q.remainder(dim).ok_or_else(|| {
                Error::Transform(format!("{} has no remainder form", q.label(&names)))
            })?;
            rem.push(r);
        }
        let lib = BasisLibrary::new(self.state_dim, self.input_dim, rem)?;
        Ok((self.jacobian_at_origin(), lib))
    }
}

/// Exponent vectors of total degree `d` in `n` variables, pure powers first
/// (by variable), then the mixed ones in ascending lexicographic order.
fn exponents_of_degree(n: usize, d: u32) -> Vec<Vec<u32>> {
    let mut all = Vec::new();
    let mut cur = vec![0u32; n];
    fn rec(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur[i] = e;
            rec(i + 1, left - e, cur, out);
        }
    }
    rec(0, d, &mut cur, &mut all);
    let is_pure = |e: &Vec<u32>| e.iter().filter(|&&v| v > 0).count() == 1;
    let mut pure: Vec<Vec<u32>> = all.iter().filter(|e| is_pure(e)).cloned().collect();
    pure.sort_by_key(|e| e.iter().position(|&v| v > 0));
    let mut mixed: Vec<Vec<u32>> = all.into_iter().filter(|e| !is_pure(e)).collect();
    mixed.sort();
    pure.extend(mixed);
    pure
}

/// Every monomial of total degree 2 through `d` in `n` state variables.
///
/// Within a degree, pure powers come first in variable order, followed by
/// the mixed monomials in ascending lexicographic order of their exponent
/// vectors. For `n = 2, d = 3` this gives
/// `x1^2, x2^2, x1*x2, x1^3, x2^3, x1*x2^2, x1^2*x2`.
pub fn monomials_up_to_degree(n: usize, d: u32) -> Result<BasisLibrary> {
    if n == 0 {
        return Err(Error::input("dimension must be at least 1"));
    }
    if d < 2 {
        return Err(Error::input("maximum degree must be at least 2"));
    }
    let q = (2..=d)
        .flat_map(|deg| exponents_of_degree(n, deg))
        .map(|exponents| BasisFunction::Monomial { exponents })
        .collect();
    BasisLibrary::new(n, 0, q)
}
