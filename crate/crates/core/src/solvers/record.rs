//! Per-iteration telemetry.

/// Column names of [`ConvergenceRecord::to_csv`].
pub const CSV_HEADER: &str = "iter,J,min_f,div_residual,boundary_residual,delta_f";

/// One logged iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordRow {
    pub iter: usize,
    /// Energy of the centered iterate, infeasible cells replaced by a penalty.
    pub objective: f64,
    /// Smallest density sample (staggered when available).
    pub min_f: f64,
    /// `|div U|_inf`.
    pub div_residual: f64,
    /// Largest deviation of the boundary samples from their targets.
    pub boundary_residual: f64,
    /// `|f^(l) - f^(l-1)|`.
    pub delta_f: f64,
    /// Cells whose energy was replaced by the penalty.
    pub infeasible_cells: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceRecord {
    rows: Vec<RecordRow>,
}

impl ConvergenceRecord {
    pub fn rows(&self) -> &[RecordRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&RecordRow> {
        self.rows.last()
    }

    pub(crate) fn push(&mut self, row: RecordRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.iter < row.iter));
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e}\n",
                r.iter, r.objective, r.min_f, r.div_residual, r.boundary_residual, r.delta_f
            ));
        }
        out
    }
}
