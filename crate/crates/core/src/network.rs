//! Grouped directed networks, design matrices and identification diagnostics.
//!
//! Agents are split into `M` observed groups and `S` independent
//! subnetworks. Friendship is directed; for each ordered pair of groups
//! `(g, g')` the row of agent `i` (with `g_i = g`) in `W^{gg'}` averages over
//! the friends of `i` that belong to `g'`. Rows without such friends are zero.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compressed sparse row matrix, only what the model needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| self.row(i).map(|(j, w)| w * x[j]).sum())
            .collect()
    }

    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_rows, x.ncols());
        for i in 0..self.n_rows {
            for (j, w) in self.row(i) {
                for k in 0..x.ncols() {
                    out[(i, k)] += w * x[(j, k)];
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, w) in self.row(i) {
                out[(i, j)] = w;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct GroupedNetwork {
    n_groups: usize,
    n_subnets: usize,
    groups: Vec<usize>,
    subnet: Vec<usize>,
    // pooled out-neighbourhoods, sorted
    offsets: Vec<usize>,
    targets: Vec<usize>,
    // friend counts per (agent, friend group), row-major n x M
    group_counts: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl GroupedNetwork {
    /// Builds the network from 0-based directed edges `(i, j)` meaning "j is a
    /// friend of i". `groups` take values in `0..n_groups`; subnetwork labels
    /// are 0-based and `S` is one more than the largest label.
    pub fn new(
        edges: &[(usize, usize)],
        groups: Vec<usize>,
        subnet: Vec<usize>,
        n_groups: usize,
    ) -> Result<Self> {
        let n = groups.len();
        if subnet.len() != n {
            return Err(Error::Dimension(format!(
                "{} group labels but {} subnetwork labels",
                n,
                subnet.len()
            )));
        }
        if n_groups == 0 {
            return Err(Error::InvalidParameter("at least one group is required".into()));
        }
        if let Some((agent, &label)) = groups.iter().enumerate().find(|(_, &g)| g >= n_groups) {
            return Err(Error::GroupOutOfRange {
                agent,
                label,
                n_groups,
            });
        }
        let n_subnets = subnet.iter().max().map_or(0, |&s| s + 1);

        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(i, j) in edges {
            for index in [i, j] {
                if index >= n {
                    return Err(Error::AgentOutOfRange { index, n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            if subnet[i] != subnet[j] {
                return Err(Error::CrossSubnetwork {
                    src: i,
                    dst: j,
                    src_subnet: subnet[i],
                    dst_subnet: subnet[j],
                });
            }
            adjacency[i].push(j);
        }

        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::with_capacity(edges.len());
        let mut group_counts = vec![0usize; n * n_groups];
        offsets.push(0);
        for (i, row) in adjacency.iter_mut().enumerate() {
            row.sort_unstable();
            if let Some(w) = row.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::DuplicateEdge(i, w[0]));
            }
            for &j in row.iter() {
                group_counts[i * n_groups + groups[j]] += 1;
            }
            targets.extend_from_slice(row);
            offsets.push(targets.len());
        }

        let mut members = vec![Vec::new(); n_subnets];
        for (i, &s) in subnet.iter().enumerate() {
            members[s].push(i);
        }

        Ok(Self {
            n_groups,
            n_subnets,
            groups,
            subnet,
            offsets,
            targets,
            group_counts,
            members,
        })
    }

    pub fn n(&self) -> usize {
        self.groups.len()
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn n_subnets(&self) -> usize {
        self.n_subnets
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> usize {
        self.groups[i]
    }

    pub fn subnets(&self) -> &[usize] {
        &self.subnet
    }

    pub fn subnet(&self, i: usize) -> usize {
        self.subnet[i]
    }

    /// Agents of subnetwork `s`, in increasing index order.
    pub fn members(&self, s: usize) -> &[usize] {
        &self.members[s]
    }

    pub fn friends(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Number of friends of `i` that belong to group `g`.
    pub fn friends_in_group(&self, i: usize, g: usize) -> usize {
        self.group_counts[i * self.n_groups + g]
    }

    pub fn n_edges(&self) -> usize {
        self.targets.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n()).flat_map(move |i| self.friends(i).iter().map(move |&j| (i, j)))
    }

    /// Same edges and subnetworks under new group labels.
    pub fn with_groups(&self, groups: Vec<usize>, n_groups: usize) -> Result<Self> {
        let edges: Vec<_> = self.edges().collect();
        Self::new(&edges, groups, self.subnet.clone(), n_groups)
    }

    /// Same agents with every link removed.
    pub fn without_edges(&self) -> Self {
        Self::new(&[], self.groups.clone(), self.subnet.clone(), self.n_groups)
            .expect("labels already validated")
    }

    /// Row-normalised `W^{gg'}`.
    pub fn weight_matrix(&self, g: usize, g_peer: usize) -> CsrMatrix {
        self.build_csr(|i, j| {
            if self.groups[i] == g && self.groups[j] == g_peer {
                Some(1.0 / self.friends_in_group(i, g_peer) as f64)
            } else {
                None
            }
        })
    }

    /// Row-normalised pooled `W` over all friends.
    pub fn pooled_weights(&self) -> CsrMatrix {
        self.build_csr(|i, _| Some(1.0 / self.out_degree(i) as f64))
    }

    /// `A = Σ α^{gg'} W^{gg'}` as a sparse matrix.
    pub fn peer_operator(&self, alpha: &DMatrix<f64>) -> CsrMatrix {
        self.build_csr(|i, j| {
            let (gi, gj) = (self.groups[i], self.groups[j]);
            Some(alpha[(gi, gj)] / self.friends_in_group(i, gj) as f64)
        })
    }

    fn build_csr(&self, weight: impl Fn(usize, usize) -> Option<f64>) -> CsrMatrix {
        let n = self.n();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..n {
            for &j in self.friends(i) {
                if let Some(w) = weight(i, j) {
                    indices.push(j);
                    values.push(w);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            indptr,
            indices,
            values,
        }
    }

    /// Group-wise friend averages: entry `(i, g')` is `w_i^{g_i g'} u`.
    pub fn group_means(&self, u: &[f64]) -> Vec<f64> {
        let m = self.n_groups;
        let mut out = vec![0.0; self.n() * m];
        self.group_means_into(u, &mut out);
        out
    }

    pub(crate) fn group_means_into(&self, u: &[f64], out: &mut [f64]) {
        let m = self.n_groups;
        for i in 0..self.n() {
            let row = &mut out[i * m..(i + 1) * m];
            row.iter_mut().for_each(|v| *v = 0.0);
            for &j in self.friends(i) {
                row[self.groups[j]] += u[j];
            }
            for (g, v) in row.iter_mut().enumerate() {
                let c = self.group_counts[i * m + g];
                if c > 0 {
                    *v /= c as f64;
                }
            }
        }
    }

    /// Pooled friend average of a single vector.
    pub fn pooled_mean(&self, u: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                let f = self.friends(i);
                if f.is_empty() {
                    0.0
                } else {
                    f.iter().map(|&j| u[j]).sum::<f64>() / f.len() as f64
                }
            })
            .collect()
    }
}

/// Regressors `Z = [1, X, WX]`, or `[D_S, X, WX]` with subnetwork dummies.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    wx: DMatrix<f64>,
    z: DMatrix<f64>,
    n_intercepts: usize,
    fixed_effects: bool,
    names: Vec<String>,
}

impl DesignMatrix {
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn wx(&self) -> &DMatrix<f64> {
        &self.wx
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    /// Leading intercept columns: 1, or `S` with fixed effects.
    pub fn n_intercepts(&self) -> usize {
        self.n_intercepts
    }

    pub fn fixed_effects(&self) -> bool {
        self.fixed_effects
    }

    pub fn n_cols(&self) -> usize {
        self.z.ncols()
    }

    /// Column of `Z` holding own covariate `k`.
    pub fn own_column(&self, k: usize) -> usize {
        self.n_intercepts + k
    }

    /// Column of `Z` holding the contextual average of covariate `k`.
    pub fn contextual_column(&self, k: usize) -> usize {
        self.n_intercepts + self.x.ncols() + k
    }

    pub fn column_names(&self) -> &[String] {
        &self.names
    }

    /// `Z β` per agent.
    pub fn index(&self, beta: &DVector<f64>) -> Vec<f64> {
        (&self.z * beta).iter().copied().collect()
    }
}

pub fn build_design(
    net: &GroupedNetwork,
    x: &DMatrix<f64>,
    fixed_effects: bool,
) -> Result<DesignMatrix> {
    build_design_named(net, x, fixed_effects, None)
}

pub fn build_design_named(
    net: &GroupedNetwork,
    x: &DMatrix<f64>,
    fixed_effects: bool,
    covariate_names: Option<&[String]>,
) -> Result<DesignMatrix> {
    let n = net.n();
    if x.nrows() != n {
        return Err(Error::Dimension(format!(
            "covariate matrix has {} rows for {} agents",
            x.nrows(),
            n
        )));
    }
    if let Some(((i, k), _)) = x
        .iter()
        .enumerate()
        .map(|(idx, v)| ((idx % n, idx / n), v))
        .find(|(_, v)| !v.is_finite())
    {
        return Err(Error::NonFinite(format!("covariate {k} of agent {i}")));
    }
    let k = x.ncols();
    let wx = net.pooled_weights().mul_dense(x);
    let n_intercepts = if fixed_effects { net.n_subnets() } else { 1 };
    let mut z = DMatrix::zeros(n, n_intercepts + 2 * k);
    for i in 0..n {
        let c = if fixed_effects { net.subnet(i) } else { 0 };
        z[(i, c)] = 1.0;
    }
    z.columns_mut(n_intercepts, k).copy_from(x);
    z.columns_mut(n_intercepts + k, k).copy_from(&wx);

    let x_names: Vec<String> = match covariate_names {
        Some(names) if names.len() == k => names.to_vec(),
        _ => (1..=k).map(|j| format!("x{j}")).collect(),
    };
    let mut names = Vec::with_capacity(z.ncols());
    if fixed_effects {
        names.extend((0..n_intercepts).map(|s| format!("fe{s}")));
    } else {
        names.push("intercept".to_string());
    }
    names.extend(x_names.iter().cloned());
    names.extend(x_names.iter().map(|s| format!("{s}_bar")));

    Ok(DesignMatrix {
        x: x.clone(),
        wx,
        z,
        n_intercepts,
        fixed_effects,
        names,
    })
}

/// `π_i^g`: agent `i` has a friend in group `g` and at least one friend of a
/// friend (any group, pooled graph) that is neither `i` nor a direct friend.
#[derive(Debug, Clone, PartialEq)]
pub struct PiMatrix {
    pub pi: DMatrix<f64>,
}

pub fn compute_pi(net: &GroupedNetwork) -> PiMatrix {
    let n = net.n();
    let m = net.n_groups();
    let mut pi = DMatrix::zeros(n, m);
    for i in 0..n {
        let direct = net.friends(i);
        let has_distant = direct.iter().any(|&j| {
            net.friends(j)
                .iter()
                .any(|&k| k != i && direct.binary_search(&k).is_err())
        });
        if !has_distant {
            continue;
        }
        for g in 0..m {
            if net.friends_in_group(i, g) > 0 {
                pi[(i, g)] = 1.0;
            }
        }
    }
    PiMatrix { pi }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankSummary {
    pub dim: usize,
    pub rank: usize,
    pub condition_number: f64,
    pub threshold: f64,
}

/// Post-estimation requirement on the contextual covariate: `β1·β2 >= 0`
/// and `β2 != 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextualCheck {
    pub covariate: usize,
    pub own_column: usize,
    pub contextual_column: usize,
    pub status: Verdict,
}

impl ContextualCheck {
    pub fn evaluate(&self, beta: &DVector<f64>) -> Verdict {
        let b1 = beta[self.own_column];
        let b2 = beta[self.contextual_column];
        if b1 * b2 >= 0.0 && b2 != 0.0 {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub n: usize,
    pub n_groups: usize,
    pub sufficient_conditions_apply: bool,
    pub condition_a: Verdict,
    pub regressors: RankSummary,
    pub condition_b: Verdict,
    pub friends_of_friends: Option<RankSummary>,
    pub agents_with_distant_friends: usize,
    pub condition_c: Option<ContextualCheck>,
    pub verdict: Verdict,
    pub warnings: Vec<String>,
}

impl DiagnosticReport {
    /// Re-evaluates condition C at estimated coefficients and updates the verdict.
    pub fn confirm_contextual(&mut self, beta: &DVector<f64>) -> Verdict {
        let Some(check) = self.condition_c.as_mut() else {
            return Verdict::Indeterminate;
        };
        check.status = check.evaluate(beta);
        if self.verdict != Verdict::Fail && self.sufficient_conditions_apply {
            self.verdict = check.status;
        }
        check.status
    }
}

fn rank_summary(gram: &DMatrix<f64>, n: usize) -> RankSummary {
    let dim = gram.nrows();
    if dim == 0 {
        return RankSummary {
            dim,
            rank: 0,
            condition_number: f64::NAN,
            threshold: 0.0,
        };
    }
    let sv = gram.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    let threshold = n.max(dim) as f64 * f64::EPSILON * max;
    let rank = sv.iter().filter(|&&s| s > threshold).count();
    RankSummary {
        dim,
        rank,
        condition_number: if min > 0.0 { max / min } else { f64::INFINITY },
        threshold,
    }
}

/// Checks the testable sufficient conditions for the rank assumption.
/// `contextual` is the covariate index (into `X`) whose coefficients must
/// satisfy the sign condition after estimation.
pub fn identification_diagnostic(
    net: &GroupedNetwork,
    design: &DesignMatrix,
    contextual: Option<usize>,
) -> DiagnosticReport {
    let n = net.n();
    let m = net.n_groups();
    let z = design.z();
    let regressors = rank_summary(&(z.transpose() * z), n);
    let condition_a = if regressors.rank == regressors.dim {
        Verdict::Pass
    } else {
        Verdict::Fail
    };

    let mut warnings = Vec::new();
    let sufficient = m <= 2;
    let pi = compute_pi(net).pi;
    let agents_with_distant_friends = (0..n).filter(|&i| pi.row(i).sum() > 0.0).count();
    let (condition_b, fof) = if sufficient {
        let summary = rank_summary(&(pi.transpose() * &pi), n);
        let verdict = if summary.rank == m {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        (verdict, Some(summary))
    } else {
        warnings.push(format!(
            "sufficient conditions cover at most two groups; {m} groups present, only the rank of Z'Z is reported"
        ));
        (Verdict::Indeterminate, None)
    };

    let condition_c = contextual.and_then(|k| {
        if k >= design.n_covariates() {
            warnings.push(format!("contextual covariate {k} does not exist"));
            None
        } else {
            Some(ContextualCheck {
                covariate: k,
                own_column: design.own_column(k),
                contextual_column: design.contextual_column(k),
                status: Verdict::Indeterminate,
            })
        }
    });

    let verdict = if condition_a == Verdict::Fail || condition_b == Verdict::Fail {
        Verdict::Fail
    } else if sufficient && condition_c.is_some() {
        Verdict::Pass
    } else {
        Verdict::Indeterminate
    };
    if verdict == Verdict::Pass {
        warnings.push("condition C must be confirmed on the estimated coefficients".into());
    }

    DiagnosticReport {
        n,
        n_groups: m,
        sufficient_conditions_apply: sufficient,
        condition_a,
        regressors,
        condition_b,
        friends_of_friends: fof,
        agents_with_distant_friends,
        condition_c,
        verdict,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(groups: Vec<usize>, m: usize) -> GroupedNetwork {
        GroupedNetwork::new(&[(0, 1), (1, 2)], groups, vec![0; 3], m).unwrap()
    }

    #[test]
    fn chain_weights() {
        let net = chain(vec![0; 3], 1);
        let w = net.weight_matrix(0, 0).to_dense();
        assert_eq!(w[(0, 1)], 1.0);
        assert_eq!(w[(1, 2)], 1.0);
        assert_eq!(w.iter().filter(|&&v| v != 0.0).count(), 2);
    }

    #[test]
    fn empty_edges_give_zero_weights() {
        let net = GroupedNetwork::new(&[], vec![0, 1, 0], vec![0; 3], 2).unwrap();
        for g in 0..2 {
            for h in 0..2 {
                assert_eq!(net.weight_matrix(g, h).nnz(), 0);
            }
        }
        assert_eq!(net.pooled_weights().nnz(), 0);
    }

    #[test]
    fn group_pairs_normalised_separately() {
        // agent 0 (group 0) befriends 1 (group 0) and 2 (group 1)
        let net = GroupedNetwork::new(&[(0, 1), (0, 2)], vec![0, 0, 1], vec![0; 3], 2).unwrap();
        assert_eq!(net.weight_matrix(0, 0).to_dense()[(0, 1)], 1.0);
        assert_eq!(net.weight_matrix(0, 1).to_dense()[(0, 2)], 1.0);
        let pooled = net.pooled_weights().to_dense();
        assert_eq!(pooled[(0, 1)], 0.5);
        assert_eq!(pooled[(0, 2)], 0.5);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(matches!(
            GroupedNetwork::new(&[(1, 1)], vec![0; 2], vec![0; 2], 1),
            Err(Error::SelfLoop(1))
        ));
        assert!(matches!(
            GroupedNetwork::new(&[(0, 1)], vec![0; 2], vec![0, 1], 1),
            Err(Error::CrossSubnetwork { src: 0, dst: 1, .. })
        ));
        assert!(matches!(
            GroupedNetwork::new(&[(0, 1), (0, 1)], vec![0; 2], vec![0; 2], 1),
            Err(Error::DuplicateEdge(0, 1))
        ));
        assert!(matches!(
            GroupedNetwork::new(&[(0, 5)], vec![0; 2], vec![0; 2], 1),
            Err(Error::AgentOutOfRange { index: 5, n: 2 })
        ));
    }

    #[test]
    fn design_for_chain() {
        let net = chain(vec![0; 3], 1);
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 5.0]);
        let d = build_design(&net, &x, false).unwrap();
        assert_eq!(d.wx().as_slice(), &[1.0, 5.0, 0.0]);
        assert_eq!(d.n_cols(), 3);
        assert_eq!(d.z().column(0).sum(), 3.0);
        assert_eq!(d.column_names(), &["intercept", "x1", "x1_bar"]);
    }

    #[test]
    fn design_rejects_non_finite() {
        let net = chain(vec![0; 3], 1);
        let x = DMatrix::from_column_slice(3, 1, &[0.0, f64::NAN, 5.0]);
        assert!(matches!(build_design(&net, &x, false), Err(Error::NonFinite(_))));
    }

    #[test]
    fn constant_covariate_survives_averaging() {
        let net = GroupedNetwork::new(&[(0, 1), (0, 2), (2, 1)], vec![0; 4], vec![0; 4], 1).unwrap();
        let x = DMatrix::from_element(4, 1, 3.5);
        let d = build_design(&net, &x, false).unwrap();
        for i in 0..4 {
            let expect = if net.out_degree(i) > 0 { 3.5 } else { 0.0 };
            assert_eq!(d.wx()[(i, 0)], expect);
        }
    }

    #[test]
    fn fixed_effect_dummies_replace_intercept() {
        let net = GroupedNetwork::new(&[(0, 1), (2, 3)], vec![0; 4], vec![0, 0, 1, 1], 1).unwrap();
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let d = build_design(&net, &x, true).unwrap();
        assert_eq!(d.n_intercepts(), 2);
        assert_eq!(d.n_cols(), 4);
        assert_eq!(d.z()[(2, 1)], 1.0);
        assert_eq!(d.z()[(2, 0)], 0.0);
        assert_eq!(d.contextual_column(0), 3);
    }

    #[test]
    fn pi_on_chain_and_triangle() {
        let pi = compute_pi(&chain(vec![0; 3], 1)).pi;
        assert_eq!(pi.as_slice(), &[1.0, 0.0, 0.0]);

        let tri: Vec<_> = (0..3)
            .flat_map(|i| (0..3).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        let net = GroupedNetwork::new(&tri, vec![0; 3], vec![0; 3], 1).unwrap();
        assert!(compute_pi(&net).pi.iter().all(|&v| v == 0.0));

        let pi = compute_pi(&chain(vec![0, 1, 0], 2)).pi;
        assert_eq!((pi[(0, 0)], pi[(0, 1)]), (0.0, 1.0));
        assert_eq!(pi.row(1).sum() + pi.row(2).sum(), 0.0);
    }

    #[test]
    fn reciprocal_link_does_not_count_self() {
        let net = GroupedNetwork::new(&[(0, 1), (1, 0)], vec![0; 2], vec![0; 2], 1).unwrap();
        assert!(compute_pi(&net).pi.iter().all(|&v| v == 0.0));
    }
}
