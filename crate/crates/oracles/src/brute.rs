//! Brute-force scans.

/// Index of the row with the largest sum over `columns`, among rows with
/// at least one 1 in those columns; ties go to the smallest `ids[row]`.
pub fn canonical_row(ids: &[String], scores: &[Vec<u8>], columns: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    let mut best_total = 0u32;
    for row in 0..ids.len() {
        let total: u32 = columns.iter().map(|&c| u32::from(scores[row][c])).sum();
        if total == 0 {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => total > best_total || (total == best_total && ids[row] < ids[b]),
        };
        if better {
            best = Some(row);
            best_total = total;
        }
    }
    best
}
