//! HDBSCAN with a cluster-selection distance threshold (HDBSCAN(ε̂)).
//!
//! Exact, brute-force neighbor search: core distances, a dense Prim MST over
//! mutual reachability, single-linkage merge tree, condensed tree with
//! `min_cluster_size = min_pts`, excess-of-mass selection and finally the
//! ε̂ rule that replaces any selected cluster born below ε̂ by its closest
//! ancestor born above it.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::model::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusteringParams {
    pub min_pts: usize,
    pub eps_hat: f64,
    pub membership_cutoff: f64,
    /// Let the root of the condensed tree be selected as the only cluster.
    pub allow_single_cluster: bool,
}

impl Default for ClusteringParams {
    fn default() -> Self {
        Self {
            min_pts: 6,
            eps_hat: 0.0,
            membership_cutoff: 0.1,
            allow_single_cluster: true,
        }
    }
}

/// Returned when there are too few points to estimate density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TooFewPoints;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// `None` marks an outlier.
    pub labels: Vec<Option<usize>>,
    pub probabilities: Vec<f64>,
}

impl ClusterResult {
    pub fn cluster_count(&self) -> usize {
        self.labels.iter().flatten().collect::<BTreeSet<_>>().len()
    }
}

/// Distance from each point to its `k`-th nearest neighbor, self excluded.
pub fn knn_distances(points: &[Vec3], k: usize) -> Result<Vec<f64>, TooFewPoints> {
    if k == 0 || points.len() <= k {
        return Err(TooFewPoints);
    }
    Ok(points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| (p - q).norm())
                .collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    a: usize,
    b: usize,
    w: f64,
}

fn mutual_reachability_mst(points: &[Vec3], core: &[f64]) -> Vec<Edge> {
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let p = points[current];
        let cc = core[current];
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = (p - points[j]).norm().max(cc).max(core[j]);
            if d < best[j] {
                best[j] = d;
                from[j] = current;
            }
        }
        let mut next = usize::MAX;
        let mut next_w = f64::INFINITY;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j] < next_w) {
                next = j;
                next_w = best[j];
            }
        }
        in_tree[next] = true;
        edges.push(Edge {
            a: from[next].min(next),
            b: from[next].max(next),
            w: next_w,
        });
        current = next;
    }
    edges.sort_by(|x, y| x.w.total_cmp(&y.w).then(x.a.cmp(&y.a)).then(x.b.cmp(&y.b)));
    edges
}

/// Single-linkage merge: node `n + i` joins `left` and `right` at `distance`.
#[derive(Debug, Clone, Copy)]
struct Merge {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

fn single_linkage(n: usize, edges: &[Edge]) -> Vec<Merge> {
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    let mut size = vec![1usize; 2 * n - 1];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut merges = Vec::with_capacity(n - 1);
    for (i, e) in edges.iter().enumerate() {
        let ra = find(&mut parent, e.a);
        let rb = find(&mut parent, e.b);
        let node = n + i;
        parent[ra] = node;
        parent[rb] = node;
        size[node] = size[ra] + size[rb];
        merges.push(Merge {
            left: ra,
            right: rb,
            distance: e.w,
            size: size[node],
        });
    }
    merges
}

/// Row of the condensed tree: `child` leaves `parent` at `lambda`.
#[derive(Debug, Clone, Copy)]
struct CondensedRow {
    parent: usize,
    child: usize,
    lambda: f64,
    child_size: usize,
}

fn condense(n: usize, merges: &[Merge], min_cluster_size: usize) -> Vec<CondensedRow> {
    let size_of = |node: usize| if node < n { 1 } else { merges[node - n].size };
    let leaves_of = |node: usize| {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                let m = &merges[x - n];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
        out
    };

    let root = 2 * n - 2;
    let mut rows = Vec::new();
    let mut next_label = n + 1;
    // (hierarchy node, condensed cluster label)
    let mut queue = std::collections::VecDeque::from([(root, n)]);
    while let Some((node, label)) = queue.pop_front() {
        if node < n {
            continue;
        }
        let m = merges[node - n];
        let lambda = if m.distance > 0.0 { 1.0 / m.distance } else { f64::INFINITY };
        let (ls, rs) = (size_of(m.left), size_of(m.right));
        let big_l = ls >= min_cluster_size;
        let big_r = rs >= min_cluster_size;
        if big_l && big_r {
            for (child, sz) in [(m.left, ls), (m.right, rs)] {
                let cl = next_label;
                next_label += 1;
                rows.push(CondensedRow {
                    parent: label,
                    child: cl,
                    lambda,
                    child_size: sz,
                });
                queue.push_back((child, cl));
            }
        } else {
            for (child, big) in [(m.left, big_l), (m.right, big_r)] {
                if big {
                    queue.push_back((child, label));
                } else {
                    for p in leaves_of(child) {
                        rows.push(CondensedRow {
                            parent: label,
                            child: p,
                            lambda,
                            child_size: 1,
                        });
                    }
                }
            }
        }
    }
    rows
}

struct ClusterTree {
    n: usize,
    rows: Vec<CondensedRow>,
    /// Indexed by `label - n`.
    birth: Vec<f64>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    stability: Vec<f64>,
}

impl ClusterTree {
    fn new(n: usize, rows: Vec<CondensedRow>) -> Self {
        let count = rows
            .iter()
            .filter(|r| r.child_size > 1)
            .map(|r| r.child - n + 1)
            .max()
            .unwrap_or(1);
        let mut birth = vec![0.0; count];
        let mut parent = vec![None; count];
        let mut children = vec![Vec::new(); count];
        for r in rows.iter().filter(|r| r.child_size > 1) {
            birth[r.child - n] = r.lambda;
            parent[r.child - n] = Some(r.parent);
            children[r.parent - n].push(r.child);
        }
        let mut stability = vec![0.0; count];
        for r in &rows {
            let c = r.parent - n;
            stability[c] += (r.lambda - birth[c]) * r.child_size as f64;
        }
        Self {
            n,
            rows,
            birth,
            parent,
            children,
            stability,
        }
    }

    fn root(&self) -> usize {
        self.n
    }

    fn len(&self) -> usize {
        self.birth.len()
    }

    fn descendants(&self, c: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = self.children[c - self.n].clone();
        while let Some(x) = stack.pop() {
            out.push(x);
            stack.extend(self.children[x - self.n].iter().copied());
        }
        out
    }

    /// Birth distance of a non-root cluster.
    fn eps_of(&self, c: usize) -> f64 {
        1.0 / self.birth[c - self.n]
    }

    fn excess_of_mass(&self, allow_single_cluster: bool) -> BTreeSet<usize> {
        let n = self.n;
        let mut stab = self.stability.clone();
        let mut selected = vec![true; self.len()];
        let mut order: Vec<usize> = (n..n + self.len()).rev().collect();
        if !allow_single_cluster {
            order.pop();
            selected[0] = false;
        }
        for &c in &order {
            let sub: f64 = self.children[c - n].iter().map(|&ch| stab[ch - n]).sum();
            if sub > stab[c - n] {
                selected[c - n] = false;
                stab[c - n] = sub;
            } else {
                for d in self.descendants(c) {
                    selected[d - n] = false;
                }
            }
        }
        (0..self.len()).filter(|&i| selected[i]).map(|i| i + n).collect()
    }

    fn traverse_upwards(&self, eps_hat: f64, leaf: usize, allow_single_cluster: bool) -> usize {
        let mut leaf = leaf;
        loop {
            let parent = self.parent[leaf - self.n].expect("non-root cluster has a parent");
            if parent == self.root() {
                return if allow_single_cluster { parent } else { leaf };
            }
            if self.eps_of(parent) > eps_hat {
                return parent;
            }
            leaf = parent;
        }
    }

    fn epsilon_search(&self, eom: &BTreeSet<usize>, eps_hat: f64, allow_single_cluster: bool) -> BTreeSet<usize> {
        let mut selected = BTreeSet::new();
        let mut processed = BTreeSet::new();
        for &leaf in eom {
            if leaf == self.root() {
                selected.insert(leaf);
                continue;
            }
            if self.eps_of(leaf) < eps_hat {
                if !processed.contains(&leaf) {
                    let chosen = self.traverse_upwards(eps_hat, leaf, allow_single_cluster);
                    selected.insert(chosen);
                    processed.extend(self.descendants(chosen));
                }
            } else {
                selected.insert(leaf);
            }
        }
        // drop anything nested inside another selection
        let nested: BTreeSet<usize> = selected.iter().flat_map(|&c| self.descendants(c)).collect();
        selected.difference(&nested).copied().collect()
    }
}

/// Cluster `points`; too few points (≤ `min_pts`) yields [`TooFewPoints`].
pub fn hdbscan_eps(points: &[Vec3], params: &ClusteringParams) -> Result<ClusterResult, TooFewPoints> {
    let n = points.len();
    if n <= params.min_pts || params.min_pts < 2 {
        return Err(TooFewPoints);
    }
    let core = knn_distances(points, params.min_pts - 1)?;
    let mst = mutual_reachability_mst(points, &core);
    let merges = single_linkage(n, &mst);
    let rows = condense(n, &merges, params.min_pts);
    let tree = ClusterTree::new(n, rows);

    let eom = tree.excess_of_mass(params.allow_single_cluster);
    let has_splits = tree.len() > 1;
    let selected = if params.eps_hat > 0.0 && has_splits {
        if eom.len() == 1 && eom.contains(&tree.root()) {
            eom
        } else {
            tree.epsilon_search(&eom, params.eps_hat, params.allow_single_cluster)
        }
    } else {
        eom
    };

    Ok(label_points(&tree, &selected, params))
}

fn label_points(tree: &ClusterTree, selected: &BTreeSet<usize>, params: &ClusteringParams) -> ClusterResult {
    let n = tree.n;
    let root = tree.root();
    let label_of: std::collections::BTreeMap<usize, usize> =
        selected.iter().enumerate().map(|(i, &c)| (c, i)).collect();

    // nearest selected ancestor of every cluster, if any
    let mut owner: Vec<Option<usize>> = vec![None; tree.len()];
    for c in n..n + tree.len() {
        let mut x = Some(c);
        while let Some(cur) = x {
            if selected.contains(&cur) {
                owner[c - n] = Some(cur);
                break;
            }
            x = tree.parent[cur - n];
        }
    }

    // largest lambda among the direct children of each cluster
    let mut deaths = vec![0.0f64; tree.len()];
    for r in &tree.rows {
        let d = &mut deaths[r.parent - n];
        *d = d.max(r.lambda);
    }

    let single_root = selected.len() == 1 && selected.contains(&root);
    let mut labels = vec![None; n];
    let mut probabilities = vec![0.0; n];
    for r in tree.rows.iter().filter(|r| r.child_size == 1 && r.child < n) {
        let Some(cluster) = owner[r.parent - n] else {
            continue;
        };
        if single_root {
            let keep = if params.eps_hat > 0.0 {
                r.lambda >= 1.0 / params.eps_hat
            } else {
                r.lambda >= deaths[0]
            };
            if !keep {
                continue;
            }
        }
        labels[r.child] = Some(label_of[&cluster]);
        let max_lambda = deaths[cluster - n];
        probabilities[r.child] = if max_lambda == 0.0 || !r.lambda.is_finite() {
            1.0
        } else {
            r.lambda.min(max_lambda) / max_lambda
        };
    }
    ClusterResult {
        labels,
        probabilities,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Box–Muller standard normal.
    fn normal(rng: &mut impl Rng) -> f64 {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    fn blob(rng: &mut ChaCha8Rng, c: Vec3, sigma: f64, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| c + Vec3::new(normal(rng), normal(rng), normal(rng)) * sigma)
            .collect()
    }

    #[test]
    fn knn_collinear() {
        let pts = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        assert_eq!(knn_distances(&pts, 1).unwrap(), vec![1.0, 1.0, 1.0]);
        assert_eq!(knn_distances(&pts, 2).unwrap(), vec![2.0, 1.0, 2.0]);
        assert_eq!(knn_distances(&pts, 3), Err(TooFewPoints));
    }

    #[test]
    fn two_blobs_and_far_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pts = blob(&mut rng, Vec3::zeros(), 0.1, 10);
        pts.extend(blob(&mut rng, Vec3::new(10.0, 0.0, 0.0), 0.1, 10));
        pts.push(Vec3::new(50.0, 0.0, 0.0));
        let params = ClusteringParams {
            eps_hat: 0.5,
            ..Default::default()
        };
        let r = hdbscan_eps(&pts, &params).unwrap();
        assert_eq!(r.cluster_count(), 2);
        assert_eq!(r.labels[20], None);
        assert_eq!(r.probabilities[20], 0.0);
        assert!(r.labels[..10].iter().all(|l| *l == r.labels[0] && l.is_some()));
        assert!(r.labels[10..20].iter().all(|l| *l == r.labels[10] && l.is_some()));
        assert_ne!(r.labels[0], r.labels[10]);
    }

    #[test]
    fn single_tight_blob_is_one_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = blob(&mut rng, Vec3::new(1.0, 2.0, 3.0), 0.05, 60);
        let core = knn_distances(&pts, 5).unwrap();
        let eps = core.iter().copied().fold(0.0, f64::max);
        let r = hdbscan_eps(&pts, &ClusteringParams { eps_hat: eps, ..Default::default() }).unwrap();
        assert_eq!(r.cluster_count(), 1);
        assert!(r.labels.iter().all(Option::is_some));
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut pts = blob(&mut rng, Vec3::zeros(), 0.2, 30);
        pts.extend(blob(&mut rng, Vec3::new(5.0, 5.0, 0.0), 0.2, 30));
        pts.push(Vec3::new(30.0, 0.0, 0.0));
        let params = ClusteringParams { eps_hat: 0.6, ..Default::default() };
        let base = hdbscan_eps(&pts, &params).unwrap();
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let shuffled: Vec<Vec3> = perm.iter().map(|&i| pts[i]).collect();
        let r = hdbscan_eps(&shuffled, &params).unwrap();
        // same partition up to relabeling, same probabilities
        let mut map = std::collections::HashMap::new();
        for (k, &i) in perm.iter().enumerate() {
            match (base.labels[i], r.labels[k]) {
                (None, None) => {}
                (Some(a), Some(b)) => assert_eq!(*map.entry(a).or_insert(b), b),
                other => panic!("label mismatch {other:?}"),
            }
            assert!((base.probabilities[i] - r.probabilities[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_points() {
        let pts = vec![Vec3::zeros(); 6];
        assert_eq!(hdbscan_eps(&pts, &ClusteringParams::default()), Err(TooFewPoints));
    }
}
