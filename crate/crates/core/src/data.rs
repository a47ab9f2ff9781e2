//! Observations and in-memory datasets.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset is empty")]
    Empty,
    #[error("row {row}: expected {expected} covariates, got {got}")]
    RowLength { row: usize, expected: usize, got: usize },
    #[error("row {row}: non-finite value")]
    NonFinite { row: usize },
}

/// A borrowed record: raw covariates (no intercept column) and a response.
#[derive(Clone, Copy, Debug)]
pub struct Obs<'a> {
    pub x: &'a [f64],
    pub y: f64,
}

/// Flat column-count-checked storage for `N` records with `p` covariates.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    p: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Dataset {
    pub fn new(p: usize) -> Self {
        Dataset { p, xs: Vec::new(), ys: Vec::new() }
    }

    pub fn with_capacity(p: usize, n: usize) -> Self {
        Dataset { p, xs: Vec::with_capacity(p * n), ys: Vec::with_capacity(n) }
    }

    /// Assembles a dataset from pre-filled flat storage.
    pub fn from_parts(p: usize, xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert_eq!(xs.len(), ys.len() * p, "flat covariate storage must be n * p");
        Dataset { p, xs, ys }
    }

    pub fn push(&mut self, x: &[f64], y: f64) -> Result<(), DataError> {
        let row = self.ys.len();
        if x.len() != self.p {
            return Err(DataError::RowLength { row, expected: self.p, got: x.len() });
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(DataError::NonFinite { row });
        }
        self.xs.extend_from_slice(x);
        self.ys.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> Obs<'_> {
        Obs { x: &self.xs[i * self.p..(i + 1) * self.p], y: self.ys[i] }
    }
}

/// Random-access view over records, possibly excluding some indices.
///
/// Indices are stable positions in the underlying dataset; `get` returns
/// `None` for excluded records. All bulk operations in this crate iterate
/// the index space `0..index_bound()` in fixed-size chunks so that results
/// do not depend on thread count.
pub trait Records: Sync {
    /// One past the largest valid index.
    fn index_bound(&self) -> usize;
    /// Covariate dimension.
    fn p(&self) -> usize;
    /// Record at `i`, or `None` if the view excludes it.
    fn get(&self, i: usize) -> Option<Obs<'_>>;
    /// Number of records the view actually exposes.
    fn count(&self) -> usize;

    /// Visits `start..end` in index order. Implementations may override this
    /// with a tighter sequential loop; the visitation order and the set of
    /// visited records must match repeated `get` calls exactly.
    fn scan<F>(&self, start: usize, end: usize, f: F)
    where
        F: FnMut(usize, Obs<'_>),
        Self: Sized,
    {
        let mut f = f;
        for i in start..end {
            if let Some(obs) = self.get(i) {
                f(i, obs);
            }
        }
    }
}

impl Records for Dataset {
    fn index_bound(&self) -> usize {
        self.len()
    }

    fn p(&self) -> usize {
        self.p
    }

    fn get(&self, i: usize) -> Option<Obs<'_>> {
        (i < self.len()).then(|| self.row(i))
    }

    fn count(&self) -> usize {
        self.len()
    }

    fn scan<F>(&self, start: usize, end: usize, mut f: F)
    where
        F: FnMut(usize, Obs<'_>),
    {
        if self.p == 0 {
            for (k, &y) in self.ys[start..end].iter().enumerate() {
                f(start + k, Obs { x: &[], y });
            }
            return;
        }
        let xs = &self.xs[start * self.p..end * self.p];
        let ys = &self.ys[start..end];
        for (k, (x, &y)) in xs.chunks_exact(self.p).zip(ys).enumerate() {
            f(start + k, Obs { x, y });
        }
    }
}

impl<T: Records> Records for &T {
    fn index_bound(&self) -> usize {
        (**self).index_bound()
    }

    fn p(&self) -> usize {
        (**self).p()
    }

    fn get(&self, i: usize) -> Option<Obs<'_>> {
        (**self).get(i)
    }

    fn count(&self) -> usize {
        (**self).count()
    }

    fn scan<F>(&self, start: usize, end: usize, f: F)
    where
        F: FnMut(usize, Obs<'_>),
    {
        (**self).scan(start, end, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_and_row_round_trip() {
        let mut d = Dataset::new(2);
        d.push(&[1.0, 2.0], 0.0).unwrap();
        d.push(&[3.0, 4.0], 1.0).unwrap();
        assert_eq!(d.len(), 2);
        let r = d.row(1);
        assert_eq!(r.x, &[3.0, 4.0]);
        assert_eq!(r.y, 1.0);
    }

    #[test]
    fn push_rejects_bad_rows() {
        let mut d = Dataset::new(2);
        assert!(matches!(d.push(&[1.0], 0.0), Err(DataError::RowLength { .. })));
        assert!(matches!(d.push(&[1.0, f64::NAN], 0.0), Err(DataError::NonFinite { .. })));
    }
}
