//! Exact linear assignment by shortest augmenting paths with potentials
//! (Hungarian method, O(n^3)).

/// Minimum-cost perfect matching of a dense square cost matrix (row-major,
/// `n x n`). Returns `target[i]`, the column assigned to row `i`.
///
/// Rows are inserted in index order and every scan takes the first strict
/// minimum, so ties resolve towards lower indices deterministically.
pub fn solve(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n x n");
    if n == 0 {
        return Vec::new();
    }
    // 1-based bookkeeping, column 0 is the virtual root
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let base = (i0 - 1) * n;
            let ui0 = u[i0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[base + j - 1] - ui0 - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut target = vec![0usize; n];
    for j in 1..=n {
        target[owner[j] - 1] = j - 1;
    }
    target
}

/// Assignment cost summed in row order.
pub fn assignment_cost(cost: &[f64], n: usize, target: &[usize]) -> f64 {
    target
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=6 {
            for _ in 0..20 {
                let cost: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
                let best = permutations(n)
                    .iter()
                    .map(|p| assignment_cost(&cost, n, p))
                    .fold(f64::INFINITY, f64::min);
                let got = assignment_cost(&cost, n, &solve(&cost, n));
                assert_eq!(got, best);
            }
        }
    }

    #[test]
    fn identity_on_diagonal_minimum() {
        let n = 5;
        let cost: Vec<f64> = (0..n * n)
            .map(|k| if k / n == k % n { 0.0 } else { 1.0 })
            .collect();
        assert_eq!(solve(&cost, n), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn all_ties_resolve_to_identity() {
        let n = 4;
        assert_eq!(solve(&vec![1.0; n * n], n), vec![0, 1, 2, 3]);
    }

    #[test]
    fn empty_problem() {
        assert!(solve(&[], 0).is_empty());
    }
}
