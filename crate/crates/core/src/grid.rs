//! Rectangular lattice storage.
//!
//! A [`GridShape`] `N x M` covers the sites `(n, m)` with `0 <= n <= N` and
//! `0 <= m <= M`. Values are stored row-major: a row is a fixed `m`.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    pub n: usize,
    pub m: usize,
}

impl Site {
    pub const fn new(n: usize, m: usize) -> Self {
        Self { n, m }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.n, self.m)
    }
}

/// Number of lattice steps in each direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub n: usize,
    pub m: usize,
}

impl GridShape {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidInput(format!(
                "grid shape must be at least 1x1, got {n}x{m}"
            )));
        }
        Ok(Self { n, m })
    }

    /// Number of sites, `(N+1)(M+1)`.
    pub fn site_count(&self) -> usize {
        (self.n + 1) * (self.m + 1)
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> {
        let (n_max, m_max) = (self.n, self.m);
        (0..=m_max).flat_map(move |m| (0..=n_max).map(move |n| Site::new(n, m)))
    }
}

impl fmt::Display for GridShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.n, self.m)
    }
}

/// A dense `width x height` array addressed by `(n, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T> Grid<T> {
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for m in 0..height {
            for n in 0..width {
                data.push(f(n, m));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "expected {} grid values, found {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, n: usize, m: usize) -> Option<&T> {
        (n < self.width && m < self.height).then(|| &self.data[m * self.width + n])
    }

    /// Values in row-major order.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = (Site, &T)> {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| (Site::new(i % w, i / w), v))
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(&mut f).collect(),
        }
    }
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Index<(usize, usize)> for Grid<T> {
    type Output = T;

    fn index(&self, (n, m): (usize, usize)) -> &T {
        assert!(
            n < self.width && m < self.height,
            "site ({n}, {m}) outside {}x{} grid",
            self.width,
            self.height
        );
        &self.data[m * self.width + n]
    }
}

impl<T> IndexMut<(usize, usize)> for Grid<T> {
    fn index_mut(&mut self, (n, m): (usize, usize)) -> &mut T {
        assert!(
            n < self.width && m < self.height,
            "site ({n}, {m}) outside {}x{} grid",
            self.width,
            self.height
        );
        &mut self.data[m * self.width + n]
    }
}
