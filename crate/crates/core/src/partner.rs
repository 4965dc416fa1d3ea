//! Partner map: which station pairs may transmit superimposed.
//!
//! Stations and counters are numbered from 1 at every public interface.

use std::fmt;

use crate::{Error, Result};

/// Counter `counter` (1-based) of station `station` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CounterIndex {
    pub station: usize,
    pub counter: usize,
}

/// Symmetric 0/1 station matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PartnerMap {
    n: usize,
    bits: Vec<bool>,
}

/// Checks a square matrix and builds the map.
pub fn validate_partner_map(rows: &[Vec<u32>]) -> Result<PartnerMap> {
    let n = rows.len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::NotSquare {
                row: i + 1,
                len: row.len(),
                expected: n,
            });
        }
    }
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > 1 {
                return Err(Error::NonBinaryEntry {
                    i: i + 1,
                    j: j + 1,
                    value: v,
                });
            }
        }
    }
    for i in 0..n {
        if rows[i][i] != 0 {
            return Err(Error::NonzeroDiagonal { i: i + 1 });
        }
        for j in i + 1..n {
            if rows[i][j] != rows[j][i] {
                return Err(Error::AsymmetricMatrix { i: i + 1, j: j + 1 });
            }
        }
    }
    let bits = rows.iter().flatten().map(|&v| v == 1).collect();
    Ok(PartnerMap { n, bits })
}

impl PartnerMap {
    /// Map with no pairs.
    pub fn empty(n_stations: usize) -> Self {
        Self {
            n: n_stations,
            bits: vec![false; n_stations * n_stations],
        }
    }

    /// Builds a map from 1-based undirected edges.
    pub fn from_edges(n_stations: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut map = Self::empty(n_stations);
        for &(i, j) in edges {
            if i == 0 || i > n_stations {
                return Err(Error::StationOutOfRange(i));
            }
            if j == 0 || j > n_stations {
                return Err(Error::StationOutOfRange(j));
            }
            if i == j {
                return Err(Error::NonzeroDiagonal { i });
            }
            map.set_edge(i, j, true);
        }
        Ok(map)
    }

    /// A single pair of stations 1 and 2.
    pub fn single_pair() -> Self {
        Self::from_edges(2, &[(1, 2)]).expect("valid")
    }

    pub fn n_stations(&self) -> usize {
        self.n
    }

    /// Entry `phi_{i,j}`, 1-based.
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[(i - 1) * self.n + (j - 1)]
    }

    pub(crate) fn set_edge(&mut self, i: usize, j: usize, on: bool) {
        let n = self.n;
        self.bits[(i - 1) * n + (j - 1)] = on;
        self.bits[(j - 1) * n + (i - 1)] = on;
    }

    /// Row sums `J_i`, one per station.
    pub fn degrees(&self) -> Vec<usize> {
        self.bits
            .chunks(self.n.max(1))
            .take(self.n)
            .map(|row| row.iter().filter(|&&b| b).count())
            .collect()
    }

    pub fn degree(&self, i: usize) -> usize {
        (1..=self.n).filter(|&k| self.get(i, k)).count()
    }

    /// Number of ordered nonzero entries, `N`.
    pub fn n_entries(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Number of unordered pairs, `N / 2`.
    pub fn n_pairs(&self) -> usize {
        self.n_entries() / 2
    }

    /// Undirected edges `(i, j)` with `i < j`, 1-based, lexicographic.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 1..=self.n {
            for j in i + 1..=self.n {
                if self.get(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Counter indices of the pair formed by stations `i` and `i2`.
    pub fn partner_of(&self, i: usize, i2: usize) -> Result<(CounterIndex, CounterIndex)> {
        for s in [i, i2] {
            if s == 0 || s > self.n {
                return Err(Error::StationOutOfRange(s));
            }
        }
        if i == i2 || !self.get(i, i2) {
            return Err(Error::NotPartners { i, j: i2 });
        }
        let j = (1..=i2).filter(|&k| self.get(i, k)).count();
        let j2 = (1..=i).filter(|&k| self.get(i2, k)).count();
        Ok((
            CounterIndex {
                station: i,
                counter: j,
            },
            CounterIndex {
                station: i2,
                counter: j2,
            },
        ))
    }

    /// Every pair as counter indices, ordered by edge.
    pub fn tc_pairs(&self) -> Vec<(CounterIndex, CounterIndex)> {
        self.edges()
            .into_iter()
            .map(|(i, j)| self.partner_of(i, j).expect("edge is a pair"))
            .collect()
    }

    /// Sum of squared degrees.
    pub fn q(&self) -> usize {
        self.degrees().iter().map(|&d| d * d).sum()
    }

    /// Population variance of the degrees.
    pub fn degree_variance(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.n_entries() as f64 / n;
        self.q() as f64 / n - mean * mean
    }

    /// True when every pair of `self` is also a pair of `other`.
    pub fn dominated_by(&self, other: &PartnerMap) -> bool {
        self.n == other.n && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Number of differing entries.
    pub fn hamming(&self, other: &PartnerMap) -> usize {
        assert_eq!(self.n, other.n, "maps differ in size");
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn is_symmetric(&self) -> bool {
        (1..=self.n)
            .all(|i| !self.get(i, i) && (1..=self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn to_rows(&self) -> Vec<Vec<u32>> {
        self.bits
            .chunks(self.n.max(1))
            .take(self.n)
            .map(|row| row.iter().map(|&b| b as u32).collect())
            .collect()
    }
}

impl fmt::Display for PartnerMap {
    /// One row per line, entries separated by single spaces.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.to_rows() {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}
