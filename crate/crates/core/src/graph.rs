//! Neighbor graph construction: RBF similarities, pruning of missing samples,
//! top-K binarization, global graph fusion, normalization and view-graph refinement.

use std::io::Write;

use ndarray::{Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{Error, Result};

/// Dense pairwise similarity matrix with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix(pub Array2<f64>);

impl SimilarityMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }
}

/// Binary `N x N` neighbor graph stored as 0.0 / 1.0 entries. Rows are not
/// symmetrized: row `i` lists the neighbors chosen by sample `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyGraph {
    values: Array2<f64>,
    k_per_row: usize,
}

impl AdjacencyGraph {
    /// Wraps a 0/1 matrix. Fails if any entry is not exactly 0 or 1.
    pub fn from_binary(values: Array2<f64>, k_per_row: usize) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::Dimension(format!(
                "adjacency must be square, got {:?}",
                values.dim()
            )));
        }
        if values.iter().any(|&a| a != 0.0 && a != 1.0) {
            return Err(Error::Argument("adjacency entries must be 0 or 1".into()));
        }
        Ok(Self { values, k_per_row })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            values: Array2::eye(n),
            k_per_row: 1,
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn k_per_row(&self) -> usize {
        self.k_per_row
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.values[[i, j]] == 1.0
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.values
            .row(i)
            .into_iter()
            .enumerate()
            .filter(|(_, &a)| a == 1.0)
            .map(|(j, _)| j)
    }

    pub fn row_degrees(&self) -> Vec<usize> {
        self.values
            .rows()
            .into_iter()
            .map(|r| r.iter().filter(|&&a| a == 1.0).count())
            .collect()
    }

    /// Writes one `i,j` line per edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.n() {
            for j in self.neighbors(i) {
                writeln!(out, "{i},{j}")?;
            }
        }
        Ok(())
    }
}

/// `S_ij = exp(-||x_i - x_j||^2 / t)` over the rows of `x`.
pub fn rbf_similarity(x: ArrayView2<'_, f64>, t: f64) -> SimilarityMatrix {
    assert!(t > 0.0, "rbf scale must be positive");
    let n = x.nrows();
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        s[[i, i]] = 1.0;
        let xi = x.row(i);
        for j in (i + 1)..n {
            let d2: f64 = xi
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let v = (-d2 / t).exp();
            s[[i, j]] = v;
            s[[j, i]] = v;
        }
    }
    SimilarityMatrix(s)
}

/// Zeroes the rows and columns of samples whose view is unobserved.
pub fn prune_missing(s: &SimilarityMatrix, mask_col: ArrayView1<'_, bool>) -> SimilarityMatrix {
    let mut out = s.0.clone();
    for (i, &observed) in mask_col.iter().enumerate() {
        if !observed {
            out.row_mut(i).fill(0.0);
            out.column_mut(i).fill(0.0);
        }
    }
    SimilarityMatrix(out)
}

/// Column indices of the `k` largest entries of `row`, ties broken by lowest index.
pub(crate) fn top_k_indices(row: ArrayView1<'_, f64>, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    // Stable sort keeps the index order among equal values.
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    idx.truncate(k);
    idx
}

/// Sets the `k` largest entries of each row to 1 and the rest to 0.
/// All-zero rows stay all-zero.
pub fn top_k_binarize(w: ArrayView2<'_, f64>, k: usize) -> Result<AdjacencyGraph> {
    let n = w.ncols();
    if k > n {
        return Err(Error::Argument(format!("top-k with k = {k} > N = {n}")));
    }
    let mut out = Array2::zeros(w.raw_dim());
    for (row, mut dst) in w.rows().into_iter().zip(out.rows_mut()) {
        if row.iter().all(|&x| x == 0.0) {
            continue;
        }
        for j in top_k_indices(row, k) {
            dst[j] = 1.0;
        }
    }
    Ok(AdjacencyGraph {
        values: out,
        k_per_row: k,
    })
}

/// Summed pruned per-view similarities: the score matrix the global graph is cut from.
pub fn fused_scores(views: &[Array2<f64>], mask: ArrayView2<'_, bool>, t: f64) -> Result<Array2<f64>> {
    let n = mask.nrows();
    if views.len() != mask.ncols() {
        return Err(Error::Dimension(format!(
            "{} views for a mask with {} columns",
            views.len(),
            mask.ncols()
        )));
    }
    let mut total = Array2::zeros((n, n));
    for (v, x) in views.iter().enumerate() {
        if x.nrows() != n {
            return Err(Error::Dimension(format!("view {v} has {} rows, expected {n}", x.nrows())));
        }
        let pruned = prune_missing(&rbf_similarity(x.view(), t), mask.column(v));
        total += &pruned.0;
    }
    Ok(total)
}

/// Global graph: top-K of the sum of pruned per-view RBF similarities.
pub fn fuse_global_graph(
    views: &[Array2<f64>],
    mask: ArrayView2<'_, bool>,
    t: f64,
    k: usize,
) -> Result<AdjacencyGraph> {
    top_k_binarize(fused_scores(views, mask, t)?.view(), k)
}

/// `D^{-1/2} A D^{-1/2}` with row-sum degrees. Zero-degree rows stay zero.
pub fn normalize_adjacency(a: &AdjacencyGraph) -> Array2<f64> {
    let degree: Vec<f64> = a.values.rows().into_iter().map(|r| r.sum()).collect();
    let mut out = a.values.clone();
    Zip::indexed(&mut out).for_each(|(i, j), x| {
        if *x != 0.0 {
            *x /= (degree[i] * degree[j]).sqrt();
        }
    });
    out
}

/// Replaces the rows of unobserved samples in a view graph by the global graph's rows.
pub fn refine_view_graph(
    a_view: &AdjacencyGraph,
    a_global: &AdjacencyGraph,
    mask_col: ArrayView1<'_, bool>,
) -> Result<AdjacencyGraph> {
    if a_view.values.dim() != a_global.values.dim() || mask_col.len() != a_view.n() {
        return Err(Error::Dimension("view graph, global graph and mask disagree".into()));
    }
    let mut out = a_view.values.clone();
    for (i, &observed) in mask_col.iter().enumerate() {
        if !observed {
            out.row_mut(i).assign(&a_global.values.row(i));
        }
    }
    Ok(AdjacencyGraph {
        values: out,
        k_per_row: a_view.k_per_row,
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    use super::*;

    fn selected(a: &AdjacencyGraph) -> Vec<Vec<usize>> {
        (0..a.n()).map(|i| a.neighbors(i).collect()).collect()
    }

    #[test]
    fn rbf_scalar_values() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]];
        let s = rbf_similarity(x.view(), 2.0);
        assert_eq!(s.0[[0, 2]], 1.0);
        assert_abs_diff_eq!(s.0[[0, 1]], 0.367879441171, epsilon = 1e-12);
        let s4 = rbf_similarity(x.view(), 4.0);
        assert_abs_diff_eq!(s4.0[[0, 1]], 0.606530659713, epsilon = 1e-12);
        assert!((0..3).all(|i| s.0[[i, i]] == 1.0));
    }

    #[test]
    fn prune_rows_and_columns() {
        let s = SimilarityMatrix(Array2::from_shape_fn((3, 3), |(i, j)| 0.1 * (i * 3 + j + 1) as f64));
        let all = Array1::from_elem(3, true);
        assert_eq!(prune_missing(&s, all.view()), s);
        let mask = array![true, false, true];
        let p = prune_missing(&s, mask.view());
        for k in 0..3 {
            assert_eq!(p.0[[1, k]], 0.0);
            assert_eq!(p.0[[k, 1]], 0.0);
        }
        for (i, j) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(p.0[[i, j]], s.0[[i, j]]);
        }
    }

    #[test]
    fn top_k_examples() {
        let w = array![[1.0, 0.5, 0.2], [0.5, 1.0, 0.9], [0.2, 0.9, 1.0]];
        let a = top_k_binarize(w.view(), 2).unwrap();
        assert_eq!(selected(&a), vec![vec![0, 1], vec![1, 2], vec![1, 2]]);
        let full = top_k_binarize(w.view(), 3).unwrap();
        assert!(full.values().iter().all(|&x| x == 1.0));
        let tie = array![[0.5, 0.5, 0.1], [0.0, 0.0, 0.0], [0.1, 0.5, 0.5]];
        let a = top_k_binarize(tie.view(), 1).unwrap();
        assert_eq!(selected(&a), vec![vec![0], vec![], vec![1]]);
        assert!(top_k_binarize(w.view(), 4).is_err());
    }

    #[test]
    fn single_view_fusion_is_plain_knn() {
        let x = array![[0.0], [0.3], [1.0], [1.2]];
        let mask = Array2::from_elem((4, 1), true);
        let fused = fuse_global_graph(std::slice::from_ref(&x), mask.view(), 2.0, 2).unwrap();
        let direct = top_k_binarize(rbf_similarity(x.view(), 2.0).0.view(), 2).unwrap();
        assert_eq!(fused, direct);
    }

    #[test]
    fn fusion_matches_hand_composition() {
        // View 0 misses sample 1.
        let x0 = array![[0.0], [0.0], [1.0]];
        let x1 = array![[0.0], [0.5], [2.0]];
        let mask = array![[true, true], [false, true], [true, true]];
        let fused = fuse_global_graph(&[x0, x1], mask.view(), 2.0, 1).unwrap();
        // Scores (prune -> sum):
        //   row 0: [1 + 1, 0 + e^{-0.125}, e^{-0.5} + e^{-2}]
        //   row 1: [e^{-0.125}, 1, e^{-1.125}]
        //   row 2: [e^{-0.5} + e^{-2}, e^{-1.125}, 2]
        assert_eq!(selected(&fused), vec![vec![0], vec![1], vec![2]]);
        let scores = fused_scores(
            &[array![[0.0], [0.0], [1.0]], array![[0.0], [0.5], [2.0]]],
            mask.view(),
            2.0,
        )
        .unwrap();
        let e = f64::exp;
        assert_abs_diff_eq!(scores[[0, 1]], e(-0.125), epsilon = 1e-15);
        assert_abs_diff_eq!(scores[[0, 2]], e(-0.5) + e(-2.0), epsilon = 1e-15);
        assert_abs_diff_eq!(scores[[1, 2]], e(-1.125), epsilon = 1e-15);
        assert_eq!(scores[[1, 1]], 1.0);
    }

    #[test]
    fn normalization_closed_forms() {
        let ring = array![
            [1.0, 1.0, 0.0, 0.0],
            [0.0, 1.0, 1.0, 0.0],
            [0.0, 0.0, 1.0, 1.0],
            [1.0, 0.0, 0.0, 1.0]
        ];
        let a = AdjacencyGraph::from_binary(ring.clone(), 2).unwrap();
        assert_eq!(normalize_adjacency(&a), ring / 2.0);
        let id = AdjacencyGraph::identity(3);
        assert_eq!(normalize_adjacency(&id), Array2::<f64>::eye(3));
        let asym = AdjacencyGraph::from_binary(array![[1.0, 1.0], [1.0, 0.0]], 1).unwrap();
        let n = normalize_adjacency(&asym);
        let r = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(n, array![[0.5, r], [r, 0.0]], epsilon = 1e-15);
        let zero = AdjacencyGraph::from_binary(array![[0.0, 0.0], [1.0, 1.0]], 1).unwrap();
        assert_eq!(normalize_adjacency(&zero).row(0).sum(), 0.0);
    }

    #[test]
    fn refinement_splices_rows() {
        let av = AdjacencyGraph::from_binary(array![[1.0, 0.0], [1.0, 0.0]], 1).unwrap();
        let ag = AdjacencyGraph::from_binary(array![[0.0, 1.0], [0.0, 1.0]], 1).unwrap();
        let r = refine_view_graph(&av, &ag, array![true, false].view()).unwrap();
        assert_eq!(r.values(), &array![[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(refine_view_graph(&av, &ag, array![true, true].view()).unwrap(), av);
        let all = refine_view_graph(&av, &ag, array![false, false].view()).unwrap();
        assert_eq!(all.values(), ag.values());
    }

    #[test]
    fn edge_list_export() {
        let a = AdjacencyGraph::from_binary(array![[1.0, 1.0], [0.0, 1.0]], 1).unwrap();
        let mut buf = Vec::new();
        a.write_edge_list(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0,0\n0,1\n1,1\n");
    }

    fn matrix(n: usize, d: usize) -> impl Strategy<Value = Array2<f64>> {
        proptest::collection::vec(-2.0f64..2.0, n * d)
            .prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
    }

    fn instance() -> impl Strategy<Value = (Array2<f64>, Array2<f64>, Vec<bool>, Vec<bool>)> {
        (3usize..10).prop_flat_map(|n| {
            (
                matrix(n, 3),
                matrix(n, 2),
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn rbf_symmetric_and_bounded(x in matrix(7, 3), t in 0.1f64..5.0) {
            let s = rbf_similarity(x.view(), t).0;
            for i in 0..7 {
                for j in 0..7 {
                    prop_assert!((s[[i, j]] - s[[j, i]]).abs() <= 1e-12);
                    prop_assert!(s[[i, j]] > 0.0 && s[[i, j]] <= 1.0);
                }
            }
        }

        #[test]
        fn fused_graph_properties((x0, x1, m0, m1) in instance(), k in 1usize..4) {
            let n = x0.nrows();
            let k = k.min(n);
            // Keep at least one view per sample.
            let mask = Array2::from_shape_fn((n, 2), |(i, v)| {
                if v == 0 { m0[i] || !m1[i] } else { m1[i] }
            });
            let views = vec![x0, x1];
            let scores = fused_scores(&views, mask.view(), 2.0).unwrap();
            let a = top_k_binarize(scores.view(), k).unwrap();
            for d in a.row_degrees() {
                prop_assert!(d == 0 || d == k);
            }

            // Permutation equivariance.
            let perm: Vec<usize> = (0..n).rev().collect();
            let pv: Vec<_> = views.iter().map(|x| x.select(ndarray::Axis(0), &perm)).collect();
            let pm = mask.select(ndarray::Axis(0), &perm);
            let ps = fused_scores(&pv, pm.view(), 2.0).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(ps[[i, j]], scores[[perm[i], perm[j]]]);
                }
            }
        }

        #[test]
        fn fully_pruned_columns_score_zero((x0, x1, m0, _m1) in instance()) {
            let n = x0.nrows();
            let mask = Array2::from_shape_fn((n, 2), |(i, v)| v == 0 && m0[i]);
            let scores = fused_scores(&[x0, x1], mask.view(), 2.0).unwrap();
            for j in 0..n {
                if !m0[j] {
                    prop_assert!(scores.column(j).iter().all(|&s| s == 0.0));
                }
            }
        }

        #[test]
        fn symmetric_normalization_stays_symmetric(bits in proptest::collection::vec(any::<bool>(), 36)) {
            let a = Array2::from_shape_fn((6, 6), |(i, j)| {
                let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                if bits[lo * 6 + hi] { 1.0 } else { 0.0 }
            });
            let n = normalize_adjacency(&AdjacencyGraph::from_binary(a, 1).unwrap());
            prop_assert_eq!(n.clone(), n.t().to_owned());
        }

        #[test]
        fn refinement_idempotent(
            bits in proptest::collection::vec(any::<bool>(), 50),
            mask in proptest::collection::vec(any::<bool>(), 5),
        ) {
            let av = Array2::from_shape_fn((5, 5), |(i, j)| bits[i * 5 + j] as u8 as f64);
            let ag = Array2::from_shape_fn((5, 5), |(i, j)| bits[25 + i * 5 + j] as u8 as f64);
            let av = AdjacencyGraph::from_binary(av, 1).unwrap();
            let ag = AdjacencyGraph::from_binary(ag, 1).unwrap();
            let mask = Array1::from(mask);
            let once = refine_view_graph(&av, &ag, mask.view()).unwrap();
            let twice = refine_view_graph(&once, &ag, mask.view()).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
