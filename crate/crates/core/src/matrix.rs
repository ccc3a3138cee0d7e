//! Dense matrices over exact rationals: products, inverses, determinants,
//! and linear solves. Row-major storage; nothing here knows about p.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::exactnum::Rational;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RatMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Rational>,
}

impl RatMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Rational>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(RatMatrix { rows, cols, data })
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        RatMatrix {
            rows,
            cols,
            data: vec![Rational::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = RatMatrix::zero(n, n);
        for i in 0..n {
            m.set(i, i, Rational::one());
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Rational>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(|row| row.len()).unwrap_or(0);
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged or empty row list".into()));
        }
        Ok(RatMatrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// Test/bench convenience; panics on ragged input.
    pub fn from_i64_rows(rows: &[&[i64]]) -> Self {
        let data: Vec<Rational> = rows
            .iter()
            .flat_map(|row| row.iter().map(|&n| Rational::from_integer(BigInt::from(n))))
            .collect();
        RatMatrix::new(rows.len(), rows[0].len(), data).expect("rectangular input")
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Rational) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        RatMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Rational) {
        self.data[i * self.cols + j] = v;
    }

    pub fn entries(&self) -> impl Iterator<Item = &Rational> {
        self.data.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn is_integral(&self) -> bool {
        self.data.iter().all(|x| x.denom().is_one())
    }

    pub fn is_identity(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| {
                (0..self.cols).all(|j| {
                    if i == j {
                        self.get(i, j).is_one()
                    } else {
                        self.get(i, j).is_zero()
                    }
                })
            })
    }

    pub fn transpose(&self) -> RatMatrix {
        RatMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn map(&self, mut f: impl FnMut(&Rational) -> Rational) -> RatMatrix {
        RatMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| f(x)).collect(),
        }
    }

    fn same_shape(&self, other: &RatMatrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &RatMatrix) -> Result<RatMatrix> {
        self.same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(RatMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn sub(&self, other: &RatMatrix) -> Result<RatMatrix> {
        self.same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(RatMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn neg(&self) -> RatMatrix {
        self.map(|x| -x)
    }

    pub fn scale(&self, c: &Rational) -> RatMatrix {
        self.map(|x| x * c)
    }

    pub fn mul(&self, other: &RatMatrix) -> Result<RatMatrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = RatMatrix::zero(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(k, j);
                    if b.is_zero() {
                        continue;
                    }
                    let cur = out.get(i, j) + a * b;
                    out.set(i, j, cur);
                }
            }
        }
        Ok(out)
    }

    pub fn trace(&self) -> Result<Rational> {
        if !self.is_square() {
            return Err(Error::Dimension("trace of a non-square matrix".into()));
        }
        Ok((0..self.rows).map(|i| self.get(i, i)).sum())
    }

    pub fn det(&self) -> Result<Rational> {
        if !self.is_square() {
            return Err(Error::Dimension("det of a non-square matrix".into()));
        }
        let n = self.rows;
        let mut m = self.clone();
        let mut det = Rational::one();
        for col in 0..n {
            let pivot = (col..n).find(|&r| !m.get(r, col).is_zero());
            let Some(pr) = pivot else {
                return Ok(Rational::zero());
            };
            if pr != col {
                m.swap_rows(pr, col);
                det = -det;
            }
            let pv = m.get(col, col).clone();
            det *= &pv;
            for r in col + 1..n {
                let factor = m.get(r, col) / &pv;
                if factor.is_zero() {
                    continue;
                }
                for c in col..n {
                    let v = m.get(r, c) - &factor * m.get(col, c);
                    m.set(r, c, v);
                }
            }
        }
        Ok(det)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    pub(crate) fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(i * self.cols + a, i * self.cols + b);
        }
    }

    pub fn inverse(&self) -> Result<RatMatrix> {
        if !self.is_square() {
            return Err(Error::Dimension("inverse of a non-square matrix".into()));
        }
        let n = self.rows;
        let mut m = self.clone();
        let mut inv = RatMatrix::identity(n);
        for col in 0..n {
            let pivot = (col..n)
                .find(|&r| !m.get(r, col).is_zero())
                .ok_or(Error::Singular)?;
            m.swap_rows(pivot, col);
            inv.swap_rows(pivot, col);
            let pv = m.get(col, col).clone();
            for j in 0..n {
                let a = m.get(col, j) / &pv;
                m.set(col, j, a);
                let b = inv.get(col, j) / &pv;
                inv.set(col, j, b);
            }
            for r in 0..n {
                if r == col || m.get(r, col).is_zero() {
                    continue;
                }
                let f = m.get(r, col).clone();
                for j in 0..n {
                    let a = m.get(r, j) - &f * m.get(col, j);
                    m.set(r, j, a);
                    let b = inv.get(r, j) - &f * inv.get(col, j);
                    inv.set(r, j, b);
                }
            }
        }
        Ok(inv)
    }

    /// Solve self * X = rhs exactly. Returns None when inconsistent; free
    /// variables (rank-deficient self) are set to zero.
    pub fn solve(&self, rhs: &RatMatrix) -> Result<Option<RatMatrix>> {
        if self.rows != rhs.rows {
            return Err(Error::Dimension(format!(
                "solve: {}x{} vs rhs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let (m, n, k) = (self.rows, self.cols, rhs.cols);
        // Augmented row reduction.
        let mut a = RatMatrix::from_fn(m, n + k, |i, j| {
            if j < n {
                self.get(i, j).clone()
            } else {
                rhs.get(i, j - n).clone()
            }
        });
        let mut pivots: Vec<(usize, usize)> = Vec::new();
        let mut row = 0;
        for col in 0..n {
            let Some(pr) = (row..m).find(|&r| !a.get(r, col).is_zero()) else {
                continue;
            };
            a.swap_rows(pr, row);
            let pv = a.get(row, col).clone();
            for j in col..n + k {
                let v = a.get(row, j) / &pv;
                a.set(row, j, v);
            }
            for r in 0..m {
                if r == row || a.get(r, col).is_zero() {
                    continue;
                }
                let f = a.get(r, col).clone();
                for j in col..n + k {
                    let v = a.get(r, j) - &f * a.get(row, j);
                    a.set(r, j, v);
                }
            }
            pivots.push((row, col));
            row += 1;
            if row == m {
                break;
            }
        }
        // Consistency: zero rows of the coefficient block must have zero rhs.
        for r in row..m {
            for j in 0..k {
                if !a.get(r, n + j).is_zero() {
                    return Ok(None);
                }
            }
        }
        let mut x = RatMatrix::zero(n, k);
        for &(r, c) in &pivots {
            for j in 0..k {
                x.set(c, j, a.get(r, n + j).clone());
            }
        }
        Ok(Some(x))
    }

    /// Column rank, by elimination.
    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        let (rows, cols) = (m.rows, m.cols);
        let mut rank = 0;
        for col in 0..cols {
            let Some(pr) = (rank..rows).find(|&r| !m.get(r, col).is_zero()) else {
                continue;
            };
            m.swap_rows(pr, rank);
            let pv = m.get(rank, col).clone();
            for r in rank + 1..rows {
                if m.get(r, col).is_zero() {
                    continue;
                }
                let f = m.get(r, col) / &pv;
                for j in col..cols {
                    let v = m.get(r, j) - &f * m.get(rank, j);
                    m.set(r, j, v);
                }
            }
            rank += 1;
            if rank == rows {
                break;
            }
        }
        rank
    }

    /// Flatten row-major into an n*1 column vector.
    pub fn vectorize(&self) -> RatMatrix {
        RatMatrix {
            rows: self.rows * self.cols,
            cols: 1,
            data: self.data.clone(),
        }
    }

    /// Largest absolute value of an entry (archimedean).
    pub fn max_abs(&self) -> Rational {
        let mut m = Rational::zero();
        for x in &self.data {
            let a = x.abs();
            if a > m {
                m = a;
            }
        }
        m
    }

    /// Format the entry block only (no header); rows newline-separated.
    pub fn body_string(&self) -> String {
        let mut s = String::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                if j > 0 {
                    s.push(' ');
                }
                s.push_str(&self.get(i, j).to_string());
            }
            s.push('\n');
        }
        s
    }

    /// Parse an entry block of exactly rows*cols whitespace-separated
    /// rationals (newlines included).
    pub fn parse_body(s: &str, rows: usize, cols: usize) -> Result<RatMatrix> {
        let mut data = Vec::with_capacity(rows * cols);
        for tok in s.split_whitespace() {
            let x: Rational = tok
                .parse()
                .map_err(|e| Error::Parse(format!("bad rational {tok:?}: {e}")))?;
            data.push(x);
        }
        RatMatrix::new(rows, cols, data)
    }
}

impl fmt::Display for RatMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.body_string())
    }
}
