//! Partitions of the unit interval into P1 elements.
//!
//! # Index convention
//!
//! Nodes are numbered `1..=n` as in the assembly formulas: `z_1 = 0`,
//! `z_n = 1`, and `h_i = z_i − z_{i−1}` for `i = 2..=n`. The hat function
//! `φ_1` carries the Dirichlet value, so the unknowns are the values at
//! `z_2, …, z_n`:
//!
//! | matrix row / vector entry (0-based) | basis function | node   |
//! |-------------------------------------|----------------|--------|
//! | `r`                                 | `φ_{r+2}`      | `z_{r+2}` |
//!
//! [`Mesh::node`] and [`Mesh::h`] take the 1-based node index; every
//! assembly routine goes through [`row_to_node`] rather than re-deriving the
//! offset.

use std::path::Path;

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-12;
const UNIFORM_TOLERANCE: f64 = 1e-14;

/// 1-based node index of the basis function attached to 0-based matrix row `r`.
#[inline]
pub const fn row_to_node(r: usize) -> usize {
    r + 2
}

/// Inverse of [`row_to_node`]; `None` for the Dirichlet node `z_1`.
#[inline]
pub const fn node_to_row(i: usize) -> Option<usize> {
    if i >= 2 {
        Some(i - 2)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<f64>,
    lengths: Vec<f64>,
    uniform: Option<f64>,
}

impl Mesh {
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidMesh(format!("need at least 3 nodes, got {n}")));
        }
        let h = 1.0 / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
        nodes[n - 1] = 1.0;
        let lengths = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self { nodes, lengths, uniform: Some(h) })
    }

    pub fn graded(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::InvalidMesh(format!("need at least 3 nodes, got {}", nodes.len())));
        }
        if nodes[0] != 0.0 || *nodes.last().unwrap() != 1.0 {
            return Err(Error::InvalidMesh(format!(
                "nodes must start at 0 and end at 1, got [{}, …, {}]",
                nodes[0],
                nodes.last().unwrap()
            )));
        }
        if let Some(k) = nodes.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidMesh(format!(
                "nodes must be strictly increasing (z_{} = {}, z_{} = {})",
                k + 1,
                nodes[k],
                k + 2,
                nodes[k + 1]
            )));
        }
        let lengths: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        let total: f64 = lengths.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidMesh(format!("element lengths sum to {total}")));
        }
        let first = lengths[0];
        let uniform = lengths
            .iter()
            .all(|h| (h - first).abs() <= UNIFORM_TOLERANCE)
            .then(|| 1.0 / lengths.len() as f64);
        Ok(Self { nodes, lengths, uniform })
    }

    /// Reads one node coordinate per line. Blank lines and `#` comments are skipped.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut nodes = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let field = line.split(',').next().unwrap_or("").trim();
            if field.is_empty() || field.starts_with('#') {
                continue;
            }
            match field.parse::<f64>() {
                Ok(z) => nodes.push(z),
                // a header line
                Err(_) if nodes.is_empty() => continue,
                Err(e) => {
                    return Err(Error::Io(format!(
                        "{}:{}: cannot parse `{field}`: {e}",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        Self::graded(nodes)
    }

    /// Number of nodes `n`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of unknowns `n − 1`.
    pub fn dofs(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Element lengths `(h_2, …, h_n)`.
    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    /// `z_i`, 1-based.
    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i - 1]
    }

    /// `h_i = z_i − z_{i−1}` for `2 ≤ i ≤ n`.
    pub fn h(&self, i: usize) -> f64 {
        debug_assert!(i >= 2, "h_1 is undefined");
        self.lengths[i - 2]
    }

    /// Common element length when the mesh is uniform.
    pub fn uniform_h(&self) -> Option<f64> {
        self.uniform
    }

    pub fn h_min(&self) -> f64 {
        self.lengths.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        self.lengths.iter().copied().fold(0.0, f64::max)
    }
}
