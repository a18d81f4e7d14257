//! Accuracy and fit-time tables for `bench`.

use reactnav::Algorithm;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub algorithm: Algorithm,
    pub train_acc: f64,
    pub test_acc: f64,
    pub fit_seconds: f64,
}

/// Fixed-width text table and the same numbers as CSV. Both are rendered from
/// one set of formatted strings so they cannot disagree.
pub fn report_tables(rows: &[BenchRow]) -> (String, String) {
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            [
                r.algorithm.as_str().to_string(),
                format!("{:.2}", r.train_acc),
                format!("{:.2}", r.test_acc),
                format!("{:.4}", r.fit_seconds),
            ]
        })
        .collect();
    let header = ["algorithm", "train_acc", "test_acc", "fit_seconds"];
    let mut text = format!("{:<10}{:>10}{:>10}{:>13}\n", header[0], header[1], header[2], header[3]);
    let mut csv = format!("{}\n", header.join(","));
    for c in &cells {
        text += &format!("{:<10}{:>10}{:>10}{:>13}\n", c[0], c[1], c[2], c[3]);
        csv += &format!("{}\n", c.join(","));
    }
    (text, csv)
}
