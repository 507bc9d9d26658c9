//! Survival random forest for the censoring distribution.
//!
//! Trees are grown on bootstrap resamples with log-rank splitting. Once a
//! tree's structure is fixed, every training subject is routed to its leaf
//! and the leaf keeps the Kaplan-Meier curve of those subjects' censoring
//! observations. Predictions average leaf curves over trees, optionally only
//! over trees whose bootstrap left the query subject out.

use std::sync::atomic::{AtomicBool, Ordering};

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::step::StepSurvival;
use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    #[serde(default = "default_node_size")]
    pub min_node_size: usize,
    /// Candidate split variables per node; `None` means `floor(sqrt(p))`.
    #[serde(default)]
    pub mtry: Option<usize>,
    #[serde(rename = "oob", alias = "oob_for_insample", default = "default_oob")]
    pub oob_for_insample: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_trees() -> usize {
    100
}
fn default_node_size() -> usize {
    100
}
fn default_oob() -> bool {
    true
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 100, min_node_size: 100, mtry: None, oob_for_insample: true, seed: 0 }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or_else(|| ((p as f64).sqrt().floor() as usize).max(1))
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::ConfigInvalid("forest needs at least one tree".into()));
        }
        if self.min_node_size == 0 {
            return Err(Error::ConfigInvalid("min_node_size must be >= 1".into()));
        }
        let m = self.resolved_mtry(p);
        if m == 0 || m > p {
            return Err(Error::ConfigInvalid(format!("mtry = {m} must lie in [1, {p}]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split { var: usize, value: f64, left: usize, right: usize },
    Leaf { curve: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
    curves: Vec<StepSurvival>,
    /// `in_bag[i]` is true when training subject `i` was drawn at least once.
    in_bag: Vec<bool>,
}

impl Tree {
    fn leaf_for(&self, x: &[f64]) -> &StepSurvival {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Split { var, value, left, right } => {
                    k = if x[*var] <= *value { *left } else { *right };
                }
                Node::Leaf { curve } => return &self.curves[*curve],
            }
        }
    }

    fn leaf_index(&self, x: &[f64]) -> usize {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Split { var, value, left, right } => {
                    k = if x[*var] <= *value { *left } else { *right };
                }
                Node::Leaf { curve } => return *curve,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalForest {
    trees: Vec<Tree>,
    params: ForestParams,
    n_train: usize,
    #[serde(skip)]
    warned: WarnFlag,
}

#[derive(Debug, Default)]
struct WarnFlag(AtomicBool);

impl Clone for WarnFlag {
    fn clone(&self) -> Self {
        WarnFlag(AtomicBool::new(self.0.load(Ordering::Relaxed)))
    }
}

impl PartialEq for WarnFlag {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

struct GrowContext<'a> {
    x: &'a [Vec<f64>],
    times: &'a [f64],
    events: &'a [bool],
    min_node_size: usize,
    mtry: usize,
    p: usize,
}

impl SurvivalForest {
    /// Fits the forest on censoring observations `(times, events)` with
    /// covariates `x` (one row per subject).
    pub fn fit(x: &[Vec<f64>], times: &[f64], events: &[bool], params: &ForestParams) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(Error::Empty("forest training sample".into()));
        }
        let p = x[0].len();
        params.validate(p)?;
        let ctx = GrowContext {
            x,
            times,
            events,
            min_node_size: params.min_node_size,
            mtry: params.resolved_mtry(p),
            p,
        };
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|b| grow_tree(&ctx, params.seed, b as u64))
            .collect();
        Ok(SurvivalForest { trees, params: params.clone(), n_train: n, warned: WarnFlag::default() })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Number of trees whose bootstrap excluded training subject `i`.
    pub fn oob_count(&self, i: usize) -> usize {
        self.trees.iter().filter(|t| !t.in_bag[i]).count()
    }

    /// Averaged leaf survival. `subject` marks an in-sample query.
    pub fn survival(&self, t: f64, z: &[f64], subject: Option<usize>) -> f64 {
        if let Some(i) = subject.filter(|&i| self.params.oob_for_insample && i < self.n_train) {
            let (sum, count) = self
                .trees
                .iter()
                .filter(|tree| !tree.in_bag[i])
                .fold((0.0, 0usize), |(s, c), tree| (s + tree.leaf_for(z).eval(t), c + 1));
            if count > 0 {
                return sum / count as f64;
            }
            if !self.warned.0.swap(true, Ordering::Relaxed) {
                log::warn!("subject {i} is in-bag for every tree; using all trees");
            }
        }
        let sum: f64 = self.trees.iter().map(|tree| tree.leaf_for(z).eval(t)).sum();
        sum / self.trees.len() as f64
    }
}

fn grow_tree(ctx: &GrowContext<'_>, seed: u64, tree_index: u64) -> Tree {
    let n = ctx.times.len();
    let mut rng = substream(seed, &[0x7265_6573, tree_index]);
    let members: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut in_bag = vec![false; n];
    for &i in &members {
        in_bag[i] = true;
    }

    let mut nodes = Vec::new();
    let mut leaves = 0usize;
    // (node slot, members)
    let mut stack = vec![(0usize, members)];
    nodes.push(Node::Leaf { curve: usize::MAX });
    while let Some((slot, members)) = stack.pop() {
        let split = if members.len() >= 2 * ctx.min_node_size {
            best_split(ctx, &members, &mut rng)
        } else {
            None
        };
        match split {
            Some((var, value)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&i| ctx.x[i][var] <= value);
                let left = nodes.len();
                nodes.push(Node::Leaf { curve: usize::MAX });
                let right = nodes.len();
                nodes.push(Node::Leaf { curve: usize::MAX });
                nodes[slot] = Node::Split { var, value, left, right };
                stack.push((right, r));
                stack.push((left, l));
            }
            None => {
                nodes[slot] = Node::Leaf { curve: leaves };
                leaves += 1;
            }
        }
    }

    let mut tree = Tree { nodes, curves: Vec::new(), in_bag };
    let mut per_leaf: Vec<Vec<(f64, bool)>> = vec![Vec::new(); leaves];
    for i in 0..n {
        per_leaf[tree.leaf_index(&ctx.x[i])].push((ctx.times[i], ctx.events[i]));
    }
    tree.curves = per_leaf.iter().map(|obs| StepSurvival::kaplan_meier(obs)).collect();
    tree
}

/// Best admissible (variable, cut) by the standardized log-rank statistic.
fn best_split(ctx: &GrowContext<'_>, members: &[usize], rng: &mut impl Rng) -> Option<(usize, f64)> {
    let stats = NodeHazards::new(ctx, members);
    let vars = sample_indices(rng, ctx.p, ctx.mtry);
    let mut best: Option<(f64, usize, f64)> = None;
    for var in vars.iter() {
        if let Some((stat, value)) = stats.best_cut(ctx, members, var) {
            if best.as_ref().is_none_or(|b| stat > b.0) {
                best = Some((stat, var, value));
            }
        }
    }
    best.map(|(_, var, value)| (var, value))
}

/// Per-member cumulative quantities that make the two-sample log-rank
/// statistic additive over the members of one child.
struct NodeHazards {
    /// time rank of each member (into the node's distinct times)
    rank: Vec<usize>,
    n_ranks: usize,
    /// event indicator minus Nelson-Aalen hazard at the member's time
    resid: Vec<f64>,
    /// sum over s <= t_i of c(s)/Y(s)
    lin: Vec<f64>,
    /// sum over s <= t_i of c(s)/Y(s)^2
    quad: Vec<f64>,
}

impl NodeHazards {
    fn new(ctx: &GrowContext<'_>, members: &[usize]) -> Self {
        let m = members.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| ctx.times[members[a]].total_cmp(&ctx.times[members[b]]));
        let mut rank = vec![0usize; m];
        let mut resid = vec![0.0; m];
        let mut lin = vec![0.0; m];
        let mut quad = vec![0.0; m];
        let (mut h, mut a, mut k) = (0.0, 0.0, 0.0);
        let mut at_risk = m as f64;
        let mut i = 0;
        let mut r = 0;
        while i < m {
            let t = ctx.times[members[order[i]]];
            let mut j = i;
            let mut d = 0.0;
            while j < m && ctx.times[members[order[j]]] == t {
                if ctx.events[members[order[j]]] {
                    d += 1.0;
                }
                j += 1;
            }
            if d > 0.0 {
                h += d / at_risk;
                if at_risk > 1.0 {
                    let c = d * (at_risk - d) / (at_risk - 1.0);
                    a += c / at_risk;
                    k += c / (at_risk * at_risk);
                }
            }
            for &o in &order[i..j] {
                rank[o] = r;
                let e = if ctx.events[members[o]] { 1.0 } else { 0.0 };
                resid[o] = e - h;
                lin[o] = a;
                quad[o] = k;
            }
            at_risk -= (j - i) as f64;
            r += 1;
            i = j;
        }
        NodeHazards { rank, n_ranks: r, resid, lin, quad }
    }

    /// Sweeps members in order of covariate `var`, growing the left child.
    fn best_cut(&self, ctx: &GrowContext<'_>, members: &[usize], var: usize) -> Option<(f64, f64)> {
        let m = members.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| ctx.x[members[a]][var].total_cmp(&ctx.x[members[b]][var]));
        let mut count = Fenwick::new(self.n_ranks);
        let mut ksum = Fenwick::new(self.n_ranks);
        let (mut o_minus_e, mut lin, mut quad) = (0.0, 0.0, 0.0);
        let mut best: Option<(f64, f64)> = None;
        for (pos, &o) in order.iter().enumerate() {
            let r = self.rank[o];
            let kk = self.quad[o];
            let below_count = count.prefix(r);
            let below_k = ksum.prefix(r);
            let left_size = pos as f64;
            quad += kk + 2.0 * (below_k + kk * (left_size - below_count));
            lin += self.lin[o];
            o_minus_e += self.resid[o];
            count.add(r, 1.0);
            ksum.add(r, kk);

            let n_left = pos + 1;
            if n_left < ctx.min_node_size || m - n_left < ctx.min_node_size || n_left == m {
                continue;
            }
            let here = ctx.x[members[o]][var];
            let next = ctx.x[members[order[pos + 1]]][var];
            if next <= here {
                continue;
            }
            let var_lr = lin - quad;
            if var_lr <= 1e-12 {
                continue;
            }
            let stat = o_minus_e.abs() / var_lr.sqrt();
            if stat.is_finite() && best.is_none_or(|b| stat > b.0) {
                best = Some((stat, 0.5 * (here + next)));
            }
        }
        best
    }
}

/// Fenwick tree over time ranks; `prefix(r)` sums entries with rank <= r.
struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick { tree: vec![0.0; n + 1] }
    }

    fn add(&mut self, idx: usize, value: f64) {
        let mut i = idx + 1;
        while i < self.tree.len() {
            self.tree[i] += value;
            i += i & i.wrapping_neg();
        }
    }

    fn prefix(&self, idx: usize) -> f64 {
        let mut i = idx + 1;
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct two-sample log-rank statistic, |O - E| / sqrt(V).
    fn logrank_direct(times: &[f64], events: &[bool], left: &[bool]) -> f64 {
        let mut uniq: Vec<f64> = times.iter().zip(events).filter(|(_, &e)| e).map(|(&t, _)| t).collect();
        uniq.sort_by(f64::total_cmp);
        uniq.dedup();
        let (mut oe, mut var) = (0.0, 0.0);
        for &t in &uniq {
            let y = times.iter().filter(|&&s| s >= t).count() as f64;
            let y1 = (0..times.len()).filter(|&i| times[i] >= t && left[i]).count() as f64;
            let d = (0..times.len()).filter(|&i| times[i] == t && events[i]).count() as f64;
            let d1 = (0..times.len()).filter(|&i| times[i] == t && events[i] && left[i]).count() as f64;
            oe += d1 - d * y1 / y;
            if y > 1.0 {
                var += y1 * (y - y1) * d * (y - d) / (y * y * (y - 1.0));
            }
        }
        oe.abs() / var.sqrt()
    }

    #[test]
    fn incremental_logrank_matches_direct() {
        let times: Vec<f64> = vec![5.0, 3.0, 3.0, 8.0, 1.0, 9.0, 4.0, 4.0, 7.0, 2.0, 6.0, 10.0];
        let events = vec![true, true, false, true, true, false, true, true, true, false, true, true];
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![((i * 7) % 12) as f64]).collect();
        let ctx = GrowContext { x: &x, times: &times, events: &events, min_node_size: 1, mtry: 1, p: 1 };
        let members: Vec<usize> = (0..12).collect();
        let hz = NodeHazards::new(&ctx, &members);
        let (stat, cut) = hz.best_cut(&ctx, &members, 0).unwrap();
        // brute force over all cuts
        let mut best = 0.0f64;
        let mut best_cut = 0.0;
        for c in 0..11 {
            let cutv = c as f64 + 0.5;
            let left: Vec<bool> = x.iter().map(|r| r[0] <= cutv).collect();
            let s = logrank_direct(&times, &events, &left);
            if s > best {
                best = s;
                best_cut = cutv;
            }
        }
        assert!((stat - best).abs() < 1e-10, "{stat} vs {best}");
        assert_eq!(cut, best_cut);
    }

    #[test]
    fn duplicated_members_match_direct() {
        let times = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let events = vec![true, true, false, true, true, true];
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let ctx = GrowContext { x: &x, times: &times, events: &events, min_node_size: 2, mtry: 1, p: 1 };
        let members = vec![0, 0, 1, 2, 3, 3, 4, 5, 5];
        let hz = NodeHazards::new(&ctx, &members);
        let (stat, cut) = hz.best_cut(&ctx, &members, 0).unwrap();
        let t: Vec<f64> = members.iter().map(|&i| times[i]).collect();
        let e: Vec<bool> = members.iter().map(|&i| events[i]).collect();
        let left: Vec<bool> = members.iter().map(|&i| x[i][0] <= cut).collect();
        assert!((stat - logrank_direct(&t, &e, &left)).abs() < 1e-10);
    }

    #[test]
    fn large_node_size_gives_marginal_km() {
        let n = 50;
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 * 0.37).fract(), (i % 2) as f64]).collect();
        let times: Vec<f64> = (0..n).map(|i| 10.0 + ((i * 13) % 17) as f64).collect();
        let events = vec![true; n];
        let params = ForestParams { n_trees: 7, min_node_size: n, mtry: Some(2), oob_for_insample: true, seed: 3 };
        let f = SurvivalForest::fit(&x, &times, &events, &params).unwrap();
        let obs: Vec<(f64, bool)> = times.iter().map(|&t| (t, true)).collect();
        let km = StepSurvival::kaplan_meier(&obs);
        for k in 0..40 {
            let t = 9.0 + 0.5 * k as f64;
            assert!((f.survival(t, &x[0], Some(0)) - km.eval(t)).abs() < 1e-10);
            assert!((f.survival(t, &[0.5, 1.0], None) - km.eval(t)).abs() < 1e-10);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let n = 300;
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 * 0.618).fract(), (i % 3 == 0) as u8 as f64]).collect();
        let times: Vec<f64> = x.iter().map(|r| 5.0 + 10.0 * r[0] + 3.0 * r[1] + (r[0] * 97.0).fract()).collect();
        let events = vec![true; n];
        let params = ForestParams { n_trees: 10, min_node_size: 20, mtry: Some(2), oob_for_insample: true, seed: 11 };
        let a = SurvivalForest::fit(&x, &times, &events, &params).unwrap();
        let b = SurvivalForest::fit(&x, &times, &events, &params).unwrap();
        for i in (0..n).step_by(17) {
            assert_eq!(
                a.survival(12.0, &x[i], Some(i)).to_bits(),
                b.survival(12.0, &x[i], Some(i)).to_bits()
            );
        }
        assert!(a.trees.iter().any(|t| t.nodes.len() > 1));
    }
}
