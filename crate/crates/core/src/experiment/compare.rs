use std::fmt::Write as _;
use std::path::Path;

use super::report::{Summary, TrainReport};
use crate::error::{Error, Result};

/// Architecture x regime grid of summary triples.
///
/// Several reports for the same cell (different seeds) are averaged
/// component-wise. Within each architecture row, the lowest minimum loss,
/// the lowest final loss and the highest accuracy are marked best; exact
/// ties are all marked.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub architectures: Vec<String>,
    pub regimes: Vec<String>,
    pub cells: Vec<Vec<Option<Cell>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub summary: Summary,
    pub runs: usize,
    pub best_min_loss: bool,
    pub best_last_loss: bool,
    pub best_accuracy: bool,
}

fn position_or_push(list: &mut Vec<String>, item: &str) -> usize {
    match list.iter().position(|v| v == item) {
        Some(i) => i,
        None => {
            list.push(item.to_string());
            list.len() - 1
        }
    }
}

pub fn compare_runs(reports: &[TrainReport]) -> Result<ComparisonTable> {
    let first = reports
        .first()
        .ok_or_else(|| Error::contract("no reports to compare"))?;
    if let Some(r) = reports.iter().find(|r| r.dataset != first.dataset) {
        return Err(Error::contract(format!(
            "reports use different datasets: {} vs {}",
            first.dataset, r.dataset
        )));
    }
    let mut architectures = Vec::new();
    let mut regimes = Vec::new();
    let mut sums: Vec<((usize, usize), Summary, usize)> = Vec::new();
    for r in reports {
        let a = position_or_push(&mut architectures, &r.architecture);
        let g = position_or_push(&mut regimes, &r.regime);
        match sums.iter_mut().find(|(key, _, _)| *key == (a, g)) {
            Some((_, s, n)) => {
                s.min_test_loss += r.summary.min_test_loss;
                s.last_test_loss += r.summary.last_test_loss;
                s.max_test_accuracy += r.summary.max_test_accuracy;
                *n += 1;
            }
            None => sums.push(((a, g), r.summary, 1)),
        }
    }
    let mut cells = vec![vec![None; regimes.len()]; architectures.len()];
    for ((a, g), s, n) in sums {
        let k = n as f64;
        let summary = if n == 1 {
            s
        } else {
            Summary {
                min_test_loss: s.min_test_loss / k,
                last_test_loss: s.last_test_loss / k,
                max_test_accuracy: s.max_test_accuracy / k,
            }
        };
        cells[a][g] = Some(Cell {
            summary,
            runs: n,
            best_min_loss: false,
            best_last_loss: false,
            best_accuracy: false,
        });
    }
    for row in &mut cells {
        let present = || row.iter().flatten().map(|c| c.summary);
        let best_min = present()
            .map(|s| s.min_test_loss)
            .fold(f64::INFINITY, f64::min);
        let best_last = present()
            .map(|s| s.last_test_loss)
            .fold(f64::INFINITY, f64::min);
        let best_acc = present()
            .map(|s| s.max_test_accuracy)
            .fold(f64::NEG_INFINITY, f64::max);
        for c in row.iter_mut().flatten() {
            c.best_min_loss = c.summary.min_test_loss == best_min;
            c.best_last_loss = c.summary.last_test_loss == best_last;
            c.best_accuracy = c.summary.max_test_accuracy == best_acc;
        }
    }
    Ok(ComparisonTable {
        architectures,
        regimes,
        cells,
    })
}

impl ComparisonTable {
    pub fn cell(&self, architecture: &str, regime: &str) -> Option<&Cell> {
        let a = self.architectures.iter().position(|v| v == architecture)?;
        let g = self.regimes.iter().position(|v| v == regime)?;
        self.cells[a][g].as_ref()
    }

    /// Markdown grid; cells read `min / last / max-acc`, best values bold.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Net |");
        for g in &self.regimes {
            let _ = write!(out, " {g} |");
        }
        out.push_str("\n|---|");
        for _ in &self.regimes {
            out.push_str("---|");
        }
        out.push('\n');
        let mark = |v: String, best: bool| if best { format!("**{v}**") } else { v };
        for (a, row) in self.architectures.iter().zip(&self.cells) {
            let _ = write!(out, "| {a} |");
            for cell in row {
                match cell {
                    None => out.push_str(" - |"),
                    Some(c) => {
                        let _ = write!(
                            out,
                            " {} / {} / {} |",
                            mark(format!("{:.3}", c.summary.min_test_loss), c.best_min_loss),
                            mark(format!("{:.3}", c.summary.last_test_loss), c.best_last_loss),
                            mark(
                                format!("{:.3}", c.summary.max_test_accuracy),
                                c.best_accuracy
                            ),
                        );
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "architecture",
            "regime",
            "runs",
            "min_test_loss",
            "last_test_loss",
            "max_test_accuracy",
            "best_min_loss",
            "best_last_loss",
            "best_accuracy",
        ])?;
        for (a, row) in self.architectures.iter().zip(&self.cells) {
            for (g, cell) in self.regimes.iter().zip(row) {
                if let Some(c) = cell {
                    w.write_record([
                        a.clone(),
                        g.clone(),
                        c.runs.to_string(),
                        c.summary.min_test_loss.to_string(),
                        c.summary.last_test_loss.to_string(),
                        c.summary.max_test_accuracy.to_string(),
                        c.best_min_loss.to_string(),
                        c.best_last_loss.to_string(),
                        c.best_accuracy.to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}
