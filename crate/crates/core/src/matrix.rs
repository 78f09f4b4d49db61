//! Small dense square matrices used for risk bookkeeping, plus integer
//! counterparts for failure counting. Both serialize to a `from,to,value`
//! triplet CSV so campaign artifacts round-trip through plain text.

use serde::{Deserialize, Serialize};

use crate::error::{DyveError, Result};

/// Row-major `n x n` matrix of reals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix { n, data: vec![0.0; n * n] }
    }

    /// Constant value everywhere off the diagonal, zero on it.
    pub fn constant_off_diagonal(n: usize, value: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m.set(i, j, value);
                }
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(DyveError::DimensionMismatch(format!(
                    "row of length {} in a {n}-class matrix",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(SquareMatrix { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Elementwise product; dimensions must agree.
    pub fn hadamard(&self, rhs: &SquareMatrix) -> Result<SquareMatrix> {
        if self.n != rhs.n {
            return Err(DyveError::DimensionMismatch(format!(
                "{}x{} against {}x{}",
                self.n, self.n, rhs.n, rhs.n
            )));
        }
        let data = self
            .data
            .iter()
            .zip(rhs.data.iter())
            .map(|(a, b)| a * b)
            .collect();
        Ok(SquareMatrix { n: self.n, data })
    }

    pub fn off_diagonal_sum(&self) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    sum += self.get(i, j);
                }
            }
        }
        sum
    }

    pub fn zero_diagonal(&mut self) {
        for i in 0..self.n {
            self.set(i, i, 0.0);
        }
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// All entries divided by the maximum one; display form only.
    pub fn max_normalized(&self) -> SquareMatrix {
        let m = self.max_value();
        if m <= 0.0 {
            return self.clone();
        }
        SquareMatrix {
            n: self.n,
            data: self.data.iter().map(|v| v / m).collect(),
        }
    }

    pub fn to_triplet_csv(&self, value_name: &str) -> String {
        let mut out = format!("from,to,{value_name}\n");
        for i in 0..self.n {
            for j in 0..self.n {
                out.push_str(&format!("{i},{j},{}\n", self.get(i, j)));
            }
        }
        out
    }

    pub fn from_triplet_csv(text: &str) -> Result<SquareMatrix> {
        let triplets = parse_triplets(text)?;
        let n = triplet_dim(&triplets)?;
        let mut m = SquareMatrix::zeros(n);
        for (i, j, v) in triplets {
            m.set(i, j, v);
        }
        Ok(m)
    }
}

/// Row-major `n x n` matrix of event counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountMatrix {
    n: usize,
    data: Vec<u64>,
}

impl CountMatrix {
    pub fn zeros(n: usize) -> Self {
        CountMatrix { n, data: vec![0; n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.n + j]
    }

    pub fn increment(&mut self, i: usize, j: usize) {
        self.data[i * self.n + j] += 1;
    }

    pub fn total(&self) -> u64 {
        self.data.iter().sum()
    }

    /// Merge two count matrices by summing cells; counts commute, so merge
    /// order never affects the result.
    pub fn merged(&self, rhs: &CountMatrix) -> Result<CountMatrix> {
        if self.n != rhs.n {
            return Err(DyveError::DimensionMismatch(format!(
                "{}x{} against {}x{}",
                self.n, self.n, rhs.n, rhs.n
            )));
        }
        let data = self
            .data
            .iter()
            .zip(rhs.data.iter())
            .map(|(a, b)| a + b)
            .collect();
        Ok(CountMatrix { n: self.n, data })
    }

    /// Counts normalized by the grand total; `None` when no events exist.
    pub fn to_probabilities(&self) -> Option<SquareMatrix> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let mut m = SquareMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.set(i, j, self.get(i, j) as f64 / total as f64);
            }
        }
        Some(m)
    }

    /// Off-diagonal sum of `count * weight`.
    pub fn weighted_sum(&self, weights: &SquareMatrix) -> Result<f64> {
        if self.n != weights.n() {
            return Err(DyveError::DimensionMismatch(format!(
                "counts {}x{} against weights {}x{}",
                self.n,
                self.n,
                weights.n(),
                weights.n()
            )));
        }
        let mut sum = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    sum += self.get(i, j) as f64 * weights.get(i, j);
                }
            }
        }
        Ok(sum)
    }

    pub fn to_triplet_csv(&self, value_name: &str) -> String {
        let mut out = format!("from,to,{value_name}\n");
        for i in 0..self.n {
            for j in 0..self.n {
                out.push_str(&format!("{i},{j},{}\n", self.get(i, j)));
            }
        }
        out
    }

    pub fn from_triplet_csv(text: &str) -> Result<CountMatrix> {
        let triplets = parse_triplets(text)?;
        let n = triplet_dim(&triplets)?;
        let mut m = CountMatrix::zeros(n);
        for (i, j, v) in triplets {
            if v < 0.0 || v.fract() != 0.0 {
                return Err(DyveError::ArtifactFormat(format!(
                    "count cell ({i},{j}) holds non-count value {v}"
                )));
            }
            m.data[i * n + j] = v as u64;
        }
        Ok(m)
    }
}

fn parse_triplets(text: &str) -> Result<Vec<(usize, usize, f64)>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| DyveError::ArtifactFormat("empty matrix CSV".into()))?;
    if !header.starts_with("from,to,") {
        return Err(DyveError::ArtifactFormat(format!(
            "unexpected matrix CSV header: {header}"
        )));
    }
    let mut triplets = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (i, j, v) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(i), Some(j), Some(v), None) => (i, j, v),
            _ => {
                return Err(DyveError::ArtifactFormat(format!(
                    "malformed matrix CSV line: {line}"
                )))
            }
        };
        let parse = |s: &str, what: &str| -> Result<usize> {
            s.trim().parse().map_err(|_| {
                DyveError::ArtifactFormat(format!("bad {what} index in line: {line}"))
            })
        };
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| DyveError::ArtifactFormat(format!("bad value in line: {line}")))?;
        triplets.push((parse(i, "row")?, parse(j, "col")?, value));
    }
    Ok(triplets)
}

fn triplet_dim(triplets: &[(usize, usize, f64)]) -> Result<usize> {
    let n = triplets
        .iter()
        .map(|&(i, j, _)| i.max(j) + 1)
        .max()
        .unwrap_or(0);
    if triplets.len() != n * n {
        return Err(DyveError::ArtifactFormat(format!(
            "matrix CSV holds {} cells, expected {}",
            triplets.len(),
            n * n
        )));
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hadamard_multiplies_elementwise() {
        let a = SquareMatrix::from_rows(&[vec![0.0, 0.75], vec![0.25, 0.0]]).unwrap();
        let b = SquareMatrix::from_rows(&[vec![0.0, 100.0], vec![1.0, 0.0]]).unwrap();
        let c = a.hadamard(&b).unwrap();
        assert_eq!(c.get(0, 1), 75.0);
        assert_eq!(c.get(1, 0), 0.25);
        assert_eq!(c.get(0, 0), 0.0);
    }

    #[test]
    fn hadamard_rejects_dimension_mismatch() {
        let a = SquareMatrix::zeros(2);
        let b = SquareMatrix::zeros(3);
        assert!(a.hadamard(&b).is_err());
    }

    #[test]
    fn counts_normalize_to_distribution() {
        let mut c = CountMatrix::zeros(2);
        for _ in 0..3 {
            c.increment(0, 1);
        }
        c.increment(1, 0);
        let p = c.to_probabilities().unwrap();
        assert_eq!(p.get(0, 1), 0.75);
        assert_eq!(p.get(1, 0), 0.25);
    }

    #[test]
    fn empty_counts_have_no_distribution() {
        assert!(CountMatrix::zeros(4).to_probabilities().is_none());
    }

    #[test]
    fn triplet_csv_round_trips() {
        let mut m = SquareMatrix::zeros(3);
        m.set(0, 2, 0.5);
        m.set(2, 1, 0.125);
        let text = m.to_triplet_csv("probability");
        let back = SquareMatrix::from_triplet_csv(&text).unwrap();
        assert_eq!(m, back);

        let mut c = CountMatrix::zeros(2);
        c.increment(1, 0);
        let text = c.to_triplet_csv("count");
        assert_eq!(CountMatrix::from_triplet_csv(&text).unwrap(), c);
    }

    #[test]
    fn merged_counts_sum_cells() {
        let mut a = CountMatrix::zeros(2);
        a.increment(0, 1);
        let mut b = CountMatrix::zeros(2);
        b.increment(0, 1);
        b.increment(1, 0);
        let m = a.merged(&b).unwrap();
        assert_eq!(m.get(0, 1), 2);
        assert_eq!(m.get(1, 0), 1);
    }
}
