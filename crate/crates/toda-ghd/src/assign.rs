//! Bipartite matching on sparse row/column graphs.
//!
//! Rows are eigen-indices and columns are lattice sites, but nothing here
//! depends on that reading.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Candidate column with its weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub col: usize,
    pub weight: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}
impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.partial_cmp(&self.0).unwrap_or(Ordering::Equal).then(other.1.cmp(&self.1))
    }
}
impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Maximum-weight assignment of every row to a distinct column, using only
/// the listed edges. Weights must lie in `[0, 1]`. Returns `None` when no
/// perfect row matching exists.
///
/// Successive shortest augmenting paths with Dijkstra on reduced costs
/// `1 − w`, which are nonnegative so the initial potentials are zero.
pub fn max_weight_assignment(rows: &[Vec<Edge>], n_cols: usize) -> Option<Vec<usize>> {
    let n_rows = rows.len();
    let mut row_of_col = vec![usize::MAX; n_cols];
    let mut col_of_row = vec![usize::MAX; n_rows];
    let mut pot_row = vec![0.0f64; n_rows];
    let mut pot_col = vec![0.0f64; n_cols];
    let mut dist = vec![f64::INFINITY; n_cols];
    let mut prev_row = vec![usize::MAX; n_cols];
    let mut done = vec![false; n_cols];
    let mut touched: Vec<usize> = Vec::new();
    let cost = |w: f64| 1.0 - w;

    for start in 0..n_rows {
        for &c in &touched {
            dist[c] = f64::INFINITY;
            prev_row[c] = usize::MAX;
            done[c] = false;
        }
        touched.clear();
        let mut heap = BinaryHeap::new();
        for e in &rows[start] {
            let d = cost(e.weight) - pot_row[start] - pot_col[e.col];
            if d < dist[e.col] {
                if dist[e.col].is_infinite() {
                    touched.push(e.col);
                }
                dist[e.col] = d;
                prev_row[e.col] = start;
                heap.push(Item(d, e.col));
            }
        }
        let mut end = usize::MAX;
        let mut end_dist = 0.0;
        while let Some(Item(d, c)) = heap.pop() {
            if done[c] || d > dist[c] {
                continue;
            }
            done[c] = true;
            let r = row_of_col[c];
            if r == usize::MAX {
                end = c;
                end_dist = d;
                break;
            }
            for e in &rows[r] {
                if done[e.col] {
                    continue;
                }
                let nd = d + cost(e.weight) - pot_row[r] - pot_col[e.col];
                if nd < dist[e.col] {
                    if dist[e.col].is_infinite() {
                        touched.push(e.col);
                    }
                    dist[e.col] = nd;
                    prev_row[e.col] = r;
                    heap.push(Item(nd, e.col));
                }
            }
        }
        if end == usize::MAX {
            return None;
        }
        // Potential update keeps reduced costs nonnegative and matched edges tight.
        pot_row[start] += end_dist;
        for &c in &touched {
            if done[c] && dist[c] < end_dist {
                let delta = end_dist - dist[c];
                pot_col[c] -= delta;
                let r = row_of_col[c];
                if r != usize::MAX {
                    pot_row[r] += delta;
                }
            }
        }
        let mut c = end;
        loop {
            let r = prev_row[c];
            let next = col_of_row[r];
            row_of_col[c] = r;
            col_of_row[r] = c;
            if r == start {
                break;
            }
            c = next;
        }
    }
    Some(col_of_row)
}

/// Any matching that covers every row (augmenting paths, greedy start).
pub fn perfect_matching(rows: &[Vec<usize>], n_cols: usize) -> Option<Vec<usize>> {
    let n_rows = rows.len();
    let mut row_of_col = vec![usize::MAX; n_cols];
    let mut col_of_row = vec![usize::MAX; n_rows];
    for (r, cols) in rows.iter().enumerate() {
        if let Some(&c) = cols.iter().find(|&&c| row_of_col[c] == usize::MAX) {
            row_of_col[c] = r;
            col_of_row[r] = c;
        }
    }
    let mut seen = vec![usize::MAX; n_cols];
    for start in 0..n_rows {
        if col_of_row[start] != usize::MAX {
            continue;
        }
        // Iterative DFS over alternating paths.
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        let mut via: Vec<usize> = Vec::new();
        let mut found = false;
        while let Some(&mut (r, ref mut k)) = stack.last_mut() {
            if *k >= rows[r].len() {
                stack.pop();
                via.pop();
                continue;
            }
            let c = rows[r][*k];
            *k += 1;
            if seen[c] == start {
                continue;
            }
            seen[c] = start;
            via.push(c);
            let owner = row_of_col[c];
            if owner == usize::MAX {
                found = true;
                break;
            }
            stack.push((owner, 0));
        }
        if !found {
            return None;
        }
        // stack[i].0 is the row that takes column via[i].
        for (i, &(r, _)) in stack.iter().enumerate() {
            let c = via[i];
            row_of_col[c] = r;
            col_of_row[r] = c;
        }
    }
    Some(col_of_row)
}
