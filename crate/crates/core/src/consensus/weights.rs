use nalgebra::{DMatrix, DVector};
use super::{ConsensusError, Graph, GraphKind};

const SUM_TOL: f64 = 1e-12;

/// Doubly stochastic mixing matrix with positive diagonal, whose off-diagonal
/// support is the edge set of a connected graph.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: DMatrix<f64>,
}

impl WeightMatrix {
    /// Metropolis weights: `w_ij = 1 / (1 + max(deg_i, deg_j))` on edges and
    /// `w_ii = 1 − Σ_j w_ij`.
    pub fn metropolis(g: &Graph) -> Self {
        let n = g.n();
        let deg = g.degrees();
        let mut w = DMatrix::zeros(n, n);
        for &(i, j) in g.edges() {
            let v = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
            w[(i, i)] = 1.0 - off;
        }
        Self { w }
    }

    /// Validates a user-supplied matrix; the graph is read off its
    /// off-diagonal support and must be connected.
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self, ConsensusError> {
        let n = w.nrows();
        if w.ncols() != n {
            return Err(ConsensusError::InvalidWeights(format!("matrix is {}×{}, not square", n, w.ncols())));
        }
        if n < 3 {
            return Err(ConsensusError::TooFewNodes(n));
        }
        let bad = |msg: String| Err(ConsensusError::InvalidWeights(msg));
        for i in 0..n {
            for j in 0..n {
                let v = w[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return bad(format!("entry ({i}, {j}) = {v} is negative or non-finite"));
                }
                if (v > 0.0) != (w[(j, i)] > 0.0) {
                    return bad(format!("support is not symmetric at ({i}, {j})"));
                }
            }
            if w[(i, i)] <= 0.0 {
                return bad(format!("diagonal entry {i} must be > 0"));
            }
            let row: f64 = w.row(i).sum();
            let col: f64 = w.column(i).sum();
            if (row - 1.0).abs() > SUM_TOL || (col - 1.0).abs() > SUM_TOL {
                return bad(format!("row/column {i} sums to {row}/{col}, not 1"));
            }
        }
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| w[(i, j)] > 0.0);
        let edges: Vec<_> = edges.collect();
        Graph::from_edges(n, edges, GraphKind::FromFile)?;
        Ok(Self { w })
    }

    /// Row-major CSV without a header.
    pub fn from_csv(text: &str) -> Result<Self, ConsensusError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| ConsensusError::InvalidWeights(format!("row {}: {f:?}: {e}", r + 1)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        let n = rows.len();
        if let Some((r, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != n) {
            return Err(ConsensusError::InvalidWeights(format!(
                "row {} has {} entries, expected {n}",
                r + 1,
                row.len()
            )));
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for i in 0..self.n() {
            w.write_record((0..self.n()).map(|j| self.w[(i, j)].to_string()))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.w * x
    }

    /// `‖W − 11ᵀ/n‖₂`, the per-step contraction of the disagreement
    /// `x − x̄·1`. For symmetric `W` this is the second-largest eigenvalue
    /// modulus.
    pub fn convergence_factor(&self) -> f64 {
        let n = self.n();
        let j = DMatrix::from_element(n, n, 1.0 / n as f64);
        (&self.w - j).singular_values().max()
    }
}
