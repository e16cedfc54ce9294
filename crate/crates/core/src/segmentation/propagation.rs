//! Sparse row-stochastic transition over regions and clamped iterative
//! propagation of foreground probabilities.

use crate::par;

use super::knn::{squared_distance, DescriptorStore};

/// Row-major sparse matrix; each row lists `(column, value)` with the
/// diagonal entry first.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl Transition {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, v)| v).sum()
    }

    pub fn multiply(&self, v: &[f64]) -> Vec<f64> {
        par::map_slice(&self.rows, |row| row.iter().map(|&(j, p)| p * v[j]).sum())
    }
}

/// Unnormalized weights: 1 on the diagonal and `exp(-|f_i - f_j|)` for each
/// listed neighbor.
pub fn weight_rows(store: &DescriptorStore, nn: &[Vec<usize>]) -> Vec<Vec<(usize, f64)>> {
    par::map_range(store.len(), |i| {
        let mut row = Vec::with_capacity(nn[i].len() + 1);
        row.push((i, 1.0));
        for &j in &nn[i] {
            row.push((
                j,
                (-squared_distance(store.row(i), store.row(j)).sqrt()).exp(),
            ));
        }
        row
    })
}

pub fn build_transition(store: &DescriptorStore, nn: &[Vec<usize>]) -> Transition {
    let rows = weight_rows(store, nn)
        .into_iter()
        .map(|row| {
            let s: f64 = row.iter().map(|&(_, w)| w).sum();
            row.into_iter().map(|(j, w)| (j, w / s)).collect()
        })
        .collect();
    Transition { rows }
}

/// `iterations` rounds of `v <- P v`, restoring clamped entries after each.
pub fn propagate(p: &Transition, v0: &[f64], clamped: &[bool], iterations: usize) -> Vec<f64> {
    assert_eq!(p.len(), v0.len(), "transition and vector sizes differ");
    assert_eq!(
        clamped.len(),
        v0.len(),
        "clamp mask and vector sizes differ"
    );
    let mut v = v0.to_vec();
    for _ in 0..iterations {
        let mut next = p.multiply(&v);
        for (i, x) in next.iter_mut().enumerate() {
            if clamped[i] {
                *x = v0[i];
            } else {
                *x = x.clamp(0.0, 1.0);
            }
        }
        v = next;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lone_region_keeps_a_self_loop() {
        let s = DescriptorStore::new(2, vec![0.3, 0.4], vec![1]);
        let p = build_transition(&s, &[vec![]]);
        assert_eq!(p.rows, vec![vec![(0, 1.0)]]);
    }

    #[test]
    fn identical_pair_splits_evenly() {
        let s = DescriptorStore::new(2, vec![0.3, 0.4, 0.3, 0.4], vec![1, 1]);
        let p = build_transition(&s, &[vec![1], vec![0]]);
        assert_eq!(p.rows[0], vec![(0, 0.5), (1, 0.5)]);
        let v = propagate(&p, &[1.0, 0.0], &[false, false], 1);
        assert_eq!(v, vec![0.5, 0.5]);
    }

    #[test]
    fn identity_leaves_v_alone() {
        let p = Transition {
            rows: (0..4).map(|i| vec![(i, 1.0)]).collect(),
        };
        let v0 = [0.1, 0.9, 0.4, 0.0];
        assert_eq!(propagate(&p, &v0, &[false; 4], 10), v0.to_vec());
    }

    #[test]
    fn clamped_entries_are_restored() {
        let s = DescriptorStore::new(1, vec![0.0, 0.5, 1.0], vec![1, 1, 1]);
        let p = build_transition(&s, &[vec![1], vec![0, 2], vec![1]]);
        for i in 0..3 {
            assert!((p.row_sum(i) - 1.0).abs() < 1e-12);
        }
        let v0 = [1.0, 0.3, 0.0];
        let v = propagate(&p, &v0, &[true, false, true], 10);
        assert_eq!(v[0].to_bits(), 1.0f64.to_bits());
        assert_eq!(v[2].to_bits(), 0.0f64.to_bits());
        assert!((v[1] - 0.5).abs() < 0.01);
    }
}
