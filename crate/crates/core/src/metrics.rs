// Partition comparison metrics: adjusted Rand index, Binder distance,
// and variation of information.

use crate::error::{Error, Result};
use crate::partition::Partition;

fn check_sizes(p: &Partition, q: &Partition, context: &'static str) -> Result<()> {
    if p.n_items() != q.n_items() {
        return Err(Error::SizeMismatch {
            context,
            expected: p.n_items(),
            got: q.n_items(),
        });
    }
    Ok(())
}

/// Cross-tabulation of cluster memberships: `table[a][b]` counts items with
/// label `a + 1` in `p` and label `b + 1` in `q`.
fn contingency(p: &Partition, q: &Partition) -> Vec<Vec<usize>> {
    let mut table = vec![vec![0usize; q.n_clusters()]; p.n_clusters()];
    for i in 0..p.n_items() {
        table[p.label(i) - 1][q.label(i) - 1] += 1;
    }
    table
}

fn choose2(n: usize) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Hubert-Arabie adjusted Rand index. Equals 1 for identical equivalence
/// classes and 0 in expectation under independent random labelings.
pub fn adjusted_rand_index(p: &Partition, q: &Partition) -> Result<f64> {
    check_sizes(p, q, "adjusted_rand_index")?;
    let table = contingency(p, q);
    let sum_cells: f64 = table.iter().flatten().map(|&n| choose2(n)).sum();
    let sum_rows: f64 = p.cluster_sizes().iter().map(|&n| choose2(n)).sum();
    let sum_cols: f64 = q.cluster_sizes().iter().map(|&n| choose2(n)).sum();
    let total = choose2(p.n_items());
    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() < f64::EPSILON {
        // Degenerate case: both partitions trivially agree (e.g. both are
        // all-singletons), so the index equals its own expectation.
        return Ok(1.0);
    }
    Ok((sum_cells - expected) / (max_index - expected))
}

/// Number of unordered item pairs whose co-clustering status differs between
/// the two partitions (unit-weight Binder loss).
pub fn binder_distance(p: &Partition, q: &Partition) -> Result<f64> {
    check_sizes(p, q, "binder_distance")?;
    let table = contingency(p, q);
    let sum_cells: f64 = table.iter().flatten().map(|&n| choose2(n)).sum();
    let sum_rows: f64 = p.cluster_sizes().iter().map(|&n| choose2(n)).sum();
    let sum_cols: f64 = q.cluster_sizes().iter().map(|&n| choose2(n)).sum();
    Ok(sum_rows + sum_cols - 2.0 * sum_cells)
}

/// Variation of information, `H(p) + H(q) - 2 I(p, q)`, with natural
/// logarithms and empirical cluster proportions.
pub fn vi_distance(p: &Partition, q: &Partition) -> Result<f64> {
    check_sizes(p, q, "vi_distance")?;
    let n = p.n_items() as f64;
    let table = contingency(p, q);
    let entropy = |sizes: &[usize]| -> f64 {
        sizes
            .iter()
            .filter(|&&s| s > 0)
            .map(|&s| {
                let f = s as f64 / n;
                -f * f.ln()
            })
            .sum()
    };
    let h_p = entropy(&p.cluster_sizes());
    let h_q = entropy(&q.cluster_sizes());
    let mut mutual = 0.0;
    for (a, row) in table.iter().enumerate() {
        for (b, &cell) in row.iter().enumerate() {
            if cell > 0 {
                let f_ab = cell as f64 / n;
                let f_a = p.cluster_sizes()[a] as f64 / n;
                let f_b = q.cluster_sizes()[b] as f64 / n;
                mutual += f_ab * (f_ab / (f_a * f_b)).ln();
            }
        }
    }
    Ok((h_p + h_q - 2.0 * mutual).max(0.0))
}
