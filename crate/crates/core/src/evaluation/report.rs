use serde::{Deserialize, Serialize};

use super::{EvalError, EvalResult, Metrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stat {
    Precision,
    Recall,
    F1,
}

impl Stat {
    fn short(self) -> &'static str {
        match self {
            Stat::Precision => "P",
            Stat::Recall => "R",
            Stat::F1 => "F1",
        }
    }

    fn of(self, m: &Metrics) -> f64 {
        match self {
            Stat::Precision => m.precision,
            Stat::Recall => m.recall,
            Stat::F1 => m.f1,
        }
    }
}

/// A group of table columns: one scope or category, shown as the listed
/// statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub stats: Vec<Stat>,
}

impl Column {
    pub fn prf(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            stats: vec![Stat::Precision, Stat::Recall, Stat::F1],
        }
    }

    pub fn recall(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            stats: vec![Stat::Recall],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub system: String,
    /// One entry per column, in column order.
    pub metrics: Vec<Metrics>,
}

/// Systems as rows, scores per scope as columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub regime: String,
    pub columns: Vec<Column>,
    pub rows: Vec<ReportRow>,
}

impl ComparisonReport {
    pub fn new(regime: impl Into<String>, columns: Vec<Column>) -> Self {
        Self {
            regime: regime.into(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, system: impl Into<String>, metrics: Vec<Metrics>) -> EvalResult<()> {
        let system = system.into();
        if metrics.len() != self.columns.len() {
            return Err(EvalError::RowShape(system, metrics.len(), self.columns.len()));
        }
        self.rows.push(ReportRow { system, metrics });
        Ok(())
    }

    pub fn to_json(&self) -> EvalResult<String> {
        if self.rows.is_empty() {
            return Err(EvalError::EmptyReport);
        }
        Ok(serde_json::to_string_pretty(self).expect("report serializes"))
    }

    /// Fixed-width text table with percentages to one decimal.
    pub fn to_table(&self) -> EvalResult<String> {
        if self.rows.is_empty() {
            return Err(EvalError::EmptyReport);
        }
        const CELL: usize = 6;
        let sys_width = self
            .rows
            .iter()
            .map(|r| r.system.chars().count())
            .chain(std::iter::once("System".len()))
            .max()
            .unwrap_or(6);

        let group_width = |c: &Column| c.stats.len() * (CELL + 1) - 1;
        let mut head1 = format!("{:<sys_width$}", "");
        let mut head2 = format!("{:<sys_width$}", "System");
        for c in &self.columns {
            let w = group_width(c).max(c.name.chars().count());
            head1.push_str(&format!(" | {:^w$}", c.name));
            let stats: Vec<String> = c.stats.iter().map(|s| format!("{:>CELL$}", s.short())).collect();
            head2.push_str(&format!(" | {:>w$}", stats.join(" ")));
        }
        let mut out = format!("{}\n", self.regime);
        out.push_str(head1.trim_end());
        out.push('\n');
        out.push_str(&head2);
        out.push('\n');
        out.push_str(&"-".repeat(head2.chars().count()));
        out.push('\n');
        for row in &self.rows {
            let mut line = format!("{:<sys_width$}", row.system);
            for (c, m) in self.columns.iter().zip(&row.metrics) {
                let w = group_width(c).max(c.name.chars().count());
                let vals: Vec<String> = c
                    .stats
                    .iter()
                    .map(|s| format!("{:>CELL$.1}", s.of(m) * 100.0))
                    .collect();
                line.push_str(&format!(" | {:>w$}", vals.join(" ")));
            }
            out.push_str(&line);
            out.push('\n');
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row_table() {
        let mut r = ComparisonReport::new("Entities", vec![Column::prf("Histology")]);
        r.push("baseline", vec![Metrics::from_counts(1, 1, 1)]).unwrap();
        let t = r.to_table().unwrap();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("baseline"));
        assert!(lines[4].ends_with("  50.0   50.0   50.0"));
    }

    #[test]
    fn empty_report_rejected() {
        let r = ComparisonReport::new("x", vec![Column::recall("Recall")]);
        assert!(matches!(r.to_table(), Err(EvalError::EmptyReport)));
        assert!(matches!(r.to_json(), Err(EvalError::EmptyReport)));
    }

    #[test]
    fn row_shape_checked() {
        let mut r = ComparisonReport::new("x", vec![Column::prf("a"), Column::prf("b")]);
        assert!(r.push("s", vec![Metrics::default()]).is_err());
    }
}
