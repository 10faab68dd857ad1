//! Hierarchical packing trees and the mass distribution that turns an upper
//! codimension bound into a lower bound for Hausdorff content.
//!
//! Level k holds balls of radius δ^k R. The children of a node are a greedy
//! maximal packing of E inside a region around the parent, and each child
//! receives the parent's mass in proportion to its Lebesgue volume.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{invalid, LabError, Result};
use crate::geometry::{greedy_packing, lex_cmp_pub, Ball, PointSet};
use crate::numeric::{ball_volume, compensated_sum, dist2};

/// Where child centers are searched for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChildRegion {
    /// Centers in (1/2)·parent ∩ E.
    #[default]
    HalfParent,
    /// Centers in parent ∩ E.
    Parent,
}

impl ChildRegion {
    fn factor(self) -> f64 {
        match self {
            ChildRegion::HalfParent => 0.5,
            ChildRegion::Parent => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub center: Vec<f64>,
    pub radius: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Lebesgue volume of the node's ball.
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingTree {
    pub ambient_dim: usize,
    pub root: Ball,
    pub delta: f64,
    pub depth: usize,
    pub region: ChildRegion,
    pub levels: Vec<Vec<TreeNode>>,
}

impl PackingTree {
    pub fn leaves(&self) -> &[TreeNode] {
        &self.levels[self.depth]
    }

    pub fn level_radius(&self, k: usize) -> f64 {
        self.root.radius * self.delta.powi(k as i32)
    }

    /// Checks the structural invariants: radii δ^k R, child centers in the
    /// search region, sibling centers more than 2δ^k R apart.
    pub fn validate(&self) -> Result<()> {
        for (k, level) in self.levels.iter().enumerate() {
            let r = self.level_radius(k);
            for (i, node) in level.iter().enumerate() {
                if node.radius != r {
                    return invalid(format!("level {k} node {i}: radius {} != {r}", node.radius));
                }
                if k == 0 {
                    continue;
                }
                let p = &self.levels[k - 1][node.parent.expect("non-root node has a parent")];
                let reach = p.radius * self.region.factor();
                if dist2(&p.center, &node.center) > reach * reach {
                    return invalid(format!("level {k} node {i}: center outside the parent region"));
                }
            }
            if k + 1 < self.levels.len() {
                let sep = 2.0 * self.level_radius(k + 1);
                for node in level {
                    for (a, &ia) in node.children.iter().enumerate() {
                        for &ib in &node.children[a + 1..] {
                            let (ca, cb) = (&self.levels[k + 1][ia].center, &self.levels[k + 1][ib].center);
                            if dist2(ca, cb) <= sep * sep {
                                return invalid(format!("level {}: siblings {ia} and {ib} overlap", k + 1));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Builds the packing tree rooted at B(w, R).
pub fn build_packing_tree(
    e: &PointSet,
    w: &[f64],
    big: f64,
    delta: f64,
    depth: usize,
    region: ChildRegion,
) -> Result<PackingTree> {
    if !(delta > 0.0 && delta < 0.5) {
        return invalid(format!("delta must lie in (0, 1/2), got {delta}"));
    }
    if !(big > 0.0) {
        return invalid(format!("root radius must be positive, got {big}"));
    }
    let wi = e
        .find(w)
        .ok_or_else(|| LabError::Invalid(format!("root center {w:?} is not a point of E")))?;
    let finest = big * delta.powi(depth as i32);
    if finest < e.resolution() {
        return Err(LabError::SubResolution {
            scale: finest,
            resolution: e.resolution(),
        });
    }
    let n = e.ambient_dim();
    let root = TreeNode {
        center: e.point(wi).to_vec(),
        radius: big,
        parent: None,
        children: Vec::new(),
        volume: ball_volume(n, big),
    };
    let mut levels = vec![vec![root]];
    for k in 1..=depth {
        let r = big * delta.powi(k as i32);
        let mut next = Vec::new();
        let prev = levels.last_mut().unwrap();
        for (pi, parent) in prev.iter_mut().enumerate() {
            let window = Ball::new(parent.center.clone(), parent.radius * region.factor());
            let cand = e.indices_in(&window);
            // The parent's own center is a point of E inside the window.
            assert!(!cand.is_empty(), "parent region lost its own center");
            for c in greedy_packing(e, &cand, r) {
                parent.children.push(next.len());
                next.push(TreeNode {
                    center: e.point(c).to_vec(),
                    radius: r,
                    parent: Some(pi),
                    children: Vec::new(),
                    volume: ball_volume(n, r),
                });
            }
        }
        levels.push(next);
    }
    Ok(PackingTree {
        ambient_dim: n,
        root: Ball::new(e.point(wi).to_vec(), big),
        delta,
        depth,
        region,
        levels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureDistribution {
    /// Mass per node, same layout as the tree levels.
    pub masses: Vec<Vec<f64>>,
    /// M = Σ μ(children) per node; zero for leaves.
    pub normalizers: Vec<Vec<f64>>,
}

impl MeasureDistribution {
    pub fn leaf_masses(&self) -> &[f64] {
        self.masses.last().unwrap()
    }

    /// Largest |Σ children ν - ν(node)| over internal nodes.
    pub fn conservation_error(&self, tree: &PackingTree) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..tree.depth {
            for (i, node) in tree.levels[k].iter().enumerate() {
                let s = compensated_sum(node.children.iter().map(|&c| self.masses[k + 1][c]));
                worst = worst.max((s - self.masses[k][i]).abs());
            }
        }
        worst
    }
}

/// ν(root) = 1, ν(child) = ν(parent) · μ(child) / M(parent).
pub fn distribute_measure(tree: &PackingTree) -> MeasureDistribution {
    let mut masses = vec![vec![1.0]];
    let mut normalizers = Vec::new();
    for k in 0..tree.depth {
        let level = &tree.levels[k];
        let mut next = vec![0.0; tree.levels[k + 1].len()];
        let mut norms = Vec::with_capacity(level.len());
        for (i, node) in level.iter().enumerate() {
            let m = compensated_sum(node.children.iter().map(|&c| tree.levels[k + 1][c].volume));
            norms.push(m);
            for &c in &node.children {
                next[c] = masses[k][i] * (tree.levels[k + 1][c].volume / m);
            }
        }
        normalizers.push(norms);
        masses.push(next);
    }
    normalizers.push(vec![0.0; tree.levels[tree.depth].len()]);
    MeasureDistribution { masses, normalizers }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub max_constant: f64,
    pub worst: Ball,
}

/// max over balls B(x, δ^k R), x a leaf center, of
/// ν(B) · μ(B₀) · (r/R)^q / μ(B), with ν(B) the total mass of leaves
/// whose centers lie in B.
pub fn growth_check(tree: &PackingTree, nu: &MeasureDistribution, q: f64) -> Result<GrowthReport> {
    if !(q > 0.0) {
        return invalid(format!("growth exponent must be positive, got {q}"));
    }
    let leaves = tree.leaves();
    let masses = nu.leaf_masses();
    let n = tree.ambient_dim as f64;
    let big = tree.root.radius;
    let radii: Vec<f64> = (0..=tree.depth).map(|k| tree.level_radius(k)).collect();
    let best = leaves
        .par_iter()
        .flat_map_iter(|leaf| radii.iter().map(move |&r| (leaf, r)))
        .map(|(leaf, r)| {
            let mass = compensated_sum(
                leaves
                    .iter()
                    .zip(masses)
                    .filter(|(l, _)| dist2(&l.center, &leaf.center) <= r * r)
                    .map(|(_, &m)| m),
            );
            (mass * (big / r).powf(n - q), Ball::new(leaf.center.clone(), r))
        })
        .reduce_with(|a, b| {
            // Ties go to the smaller radius, then the lexicographically
            // smaller center, so the answer does not depend on scheduling.
            let ord = a
                .0
                .total_cmp(&b.0)
                .then(b.1.radius.total_cmp(&a.1.radius))
                .then(lex_cmp_pub(&b.1.center, &a.1.center));
            if ord.is_ge() {
                a
            } else {
                b
            }
        })
        .expect("a tree has at least one leaf");
    Ok(GrowthReport {
        max_constant: best.0,
        worst: best.1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentBound {
    /// min over covers of Σ rad_i^{-q} μ(B_i).
    pub value: f64,
    /// R^{-q} μ(B₀) / (C · (2/δ)^{n-q}).
    pub bound: f64,
    pub per_cover: Vec<f64>,
    /// C from [`growth_check`].
    pub max_constant: f64,
    pub holds: bool,
}

/// Evaluates Σ rad^{-q} μ(B) for each candidate cover of the leaf set and
/// checks it against the lower bound implied by the growth constant.
///
/// [`growth_check`] only tests balls centered at leaves with level radii. A
/// cover ball B(x, r) that holds a leaf y sits inside B(y, r_k), where r_k is
/// the smallest level radius ≥ 2r, and r_k ≤ 2r/δ. Hence the constant for
/// arbitrary balls is at most C · (2/δ)^{n-q}, which is what the bound uses.
/// Cover balls must therefore have radius at least δ^depth R / 2.
pub fn content_lower_bound(
    tree: &PackingTree,
    nu: &MeasureDistribution,
    q: f64,
    covers: &[Vec<Ball>],
) -> Result<ContentBound> {
    let big = tree.root.radius;
    let n = tree.ambient_dim;
    let finest = tree.level_radius(tree.depth) / 2.0;
    if covers.is_empty() {
        return invalid("no candidate covers");
    }
    let mut per_cover = Vec::with_capacity(covers.len());
    for cover in covers {
        if let Some(b) = cover.iter().find(|b| !(b.radius >= finest && b.radius <= big)) {
            return invalid(format!("cover ball radius {} not in [{finest}, {big}]", b.radius));
        }
        for (i, leaf) in tree.leaves().iter().enumerate() {
            if !cover.iter().any(|b| b.contains(&leaf.center)) {
                return Err(LabError::NotACover {
                    leaf: i,
                    point: leaf.center.clone(),
                });
            }
        }
        per_cover.push(compensated_sum(
            cover.iter().map(|b| b.radius.powf(-q) * ball_volume(n, b.radius)),
        ));
    }
    let growth = growth_check(tree, nu, q)?;
    let spread = (2.0 / tree.delta).powf(n as f64 - q).max(1.0);
    let bound = big.powf(-q) * ball_volume(n, big) / (growth.max_constant * spread);
    let value = per_cover.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ContentBound {
        value,
        bound,
        holds: value >= bound * (1.0 - 1e-12),
        per_cover,
        max_constant: growth.max_constant,
    })
}

/// Flat node list: id, level, parent id, center, radius, mass.
pub fn tree_json(tree: &PackingTree, nu: &MeasureDistribution) -> Value {
    let mut offsets = vec![0usize];
    for level in &tree.levels {
        offsets.push(offsets.last().unwrap() + level.len());
    }
    let mut nodes = Vec::new();
    for (k, level) in tree.levels.iter().enumerate() {
        for (i, node) in level.iter().enumerate() {
            nodes.push(json!({
                "id": offsets[k] + i,
                "level": k,
                "parent": node.parent.map(|p| offsets[k - 1] + p),
                "center": node.center,
                "radius": node.radius,
                "mass": nu.masses[k][i],
            }));
        }
    }
    json!({
        "delta": tree.delta,
        "depth": tree.depth,
        "region": tree.region,
        "root": tree.root,
        "nodes": nodes,
    })
}

/// Covers of [0,1] by the 2^k closed balls circumscribing the level-k
/// middle-thirds intervals. Radii carry a 1e-9 relative margin so interval
/// endpoints survive rounding.
pub fn triadic_cover(level: u32) -> Vec<Ball> {
    let len = 3f64.powi(-(level as i32));
    (0..1u64 << level)
        .map(|w| {
            let left: f64 = (0..level)
                .map(|j| ((w >> (level - 1 - j)) & 1) as f64 * 2.0 * 3f64.powi(-(j as i32) - 1))
                .sum();
            Ball::new(vec![left + len / 2.0], len / 2.0 * (1.0 + 1e-9))
        })
        .collect()
}
