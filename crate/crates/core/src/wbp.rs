//! Materialized weighted branching trees.
//!
//! Nodes are addressed the usual way: the root is the empty word, and a child
//! extends its parent's word by the child's original index in the drawn step.
//! Each node `v` carries the product weight `L(v)` of the edge weights along
//! its path, the position `S(v) = -ln L(v)` of the associated branching random
//! walk, and the toll `C(v)` drawn at `v` itself.
//!
//! Sub-seeds are derived per node by hashing (parent seed, child index), so a
//! node's subtree depends only on the model, the tree seed and the node's
//! path, never on traversal order. Growing a prefix of a tree and growing a
//! deeper version of it therefore produce bit-identical overlapping nodes,
//! and first-exit lines are consistent with fully grown trees for the same
//! seed.
//!
//! Growth is guarded by a node budget instead of a depth heuristic: stopping
//! lines are almost surely finite under the standing assumptions, but nothing
//! stops a caller from asking for the exit line of a supercritical drift-free
//! walk, and the budget turns that into a reportable error carrying the
//! partial tree.

use std::io;

use crate::models::BasicSequenceModel;
use crate::rng::SeedNode;
use crate::{Error, Result};

/// Default cap on materialized nodes per tree.
pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

/// Marker for the root's parent slot.
pub const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
pub struct GrowthLimits {
    pub node_budget: u64,
}

impl Default for GrowthLimits {
    fn default() -> Self {
        GrowthLimits {
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

/// One materialized node. `first_child..first_child + n_children` indexes the
/// node array; children of one parent are contiguous.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub parent: u32,
    /// Original 1-based index of the edge into this node; 0 for the root.
    pub child_index: u32,
    pub depth: u32,
    /// Weight on the edge from the parent; 1 for the root.
    pub t_own: f64,
    /// `L(v)`, the running product of edge weights.
    pub l: f64,
    /// `S(v) = -ln L(v)`, accumulated additively to survive deep trees.
    pub s: f64,
    /// Toll drawn at this node.
    pub c: f64,
    pub first_child: u32,
    pub n_children: u32,
}

#[derive(Clone, Debug)]
pub struct WeightedTree {
    model: BasicSequenceModel,
    seed: u64,
    nodes: Vec<Node>,
    /// Generation `d` occupies `nodes[gen_offsets[d] as usize..gen_offsets[d + 1] as usize]`.
    gen_offsets: Vec<u32>,
    depth: usize,
}

/// Which stopping rule produced a [`LineSet`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LineKind {
    /// All nodes of one generation.
    Generation(usize),
    /// First passage strictly above `u`: nodes with `S(v) > u` whose proper
    /// ancestors all sit at or below `u`.
    FirstExit(f64),
    /// First strict running-maximum records of the walk (the first-exit line
    /// at level 0).
    Records,
}

/// A set of node ids in one tree, cut out by a stopping rule.
#[derive(Clone, Debug)]
pub struct LineSet {
    pub kind: LineKind,
    pub node_ids: Vec<u32>,
}

impl LineSet {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    /// `Σ L(v)` over the line.
    pub fn weight_sum(&self, tree: &WeightedTree) -> f64 {
        self.node_ids.iter().map(|&i| tree.nodes[i as usize].l).sum()
    }

    /// `Σ L(v)^α = Σ exp(-α S(v))` over the line.
    pub fn alpha_weight_sum(&self, tree: &WeightedTree, alpha: f64) -> f64 {
        self.node_ids
            .iter()
            .map(|&i| (-alpha * tree.nodes[i as usize].s).exp())
            .sum()
    }
}

enum Mode {
    Grow { depth: usize },
    Exit { u: f64, kind: LineKind },
}

/// Grows the full tree of all nodes up to `depth`. Every materialized node has
/// its step `(C, T)` drawn, so tolls are available at the frontier; children
/// are materialized for nodes strictly above the frontier.
pub fn grow_tree(
    model: &BasicSequenceModel,
    depth: usize,
    seed: u64,
    limits: GrowthLimits,
) -> Result<WeightedTree> {
    let (tree, _) = build(model, seed, Mode::Grow { depth }, limits)?;
    Ok(tree)
}

/// The generation line at depth `n` of a grown tree.
pub fn generation(tree: &WeightedTree, n: usize) -> Result<LineSet> {
    if n > tree.depth {
        return Err(Error::DepthNotGrown {
            requested: n,
            depth: tree.depth,
        });
    }
    Ok(LineSet {
        kind: LineKind::Generation(n),
        node_ids: (tree.gen_offsets[n]..tree.gen_offsets[n + 1]).collect(),
    })
}

/// First-exit line above level `u ≥ 0`: grows exactly the nodes with all
/// proper ancestors at or below `u` and returns those that landed strictly
/// above. Branches that die out before exiting simply contribute nothing.
pub fn first_exit_line(
    model: &BasicSequenceModel,
    u: f64,
    seed: u64,
    limits: GrowthLimits,
) -> Result<(WeightedTree, LineSet)> {
    if !(u.is_finite() && u >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "first-exit level must be finite and nonnegative, got {u}"
        )));
    }
    let (tree, line) = build(
        model,
        seed,
        Mode::Exit {
            u,
            kind: LineKind::FirstExit(u),
        },
        limits,
    )?;
    Ok((tree, line.expect("exit mode returns a line")))
}

/// The embedded record set: descendants whose walk position first strictly
/// exceeds the root's, with every intermediate position at or below it. For
/// models with almost surely decreasing weights this is exactly the first
/// generation; in general it is the first-exit line at level 0.
pub fn embedded_records(
    model: &BasicSequenceModel,
    seed: u64,
    limits: GrowthLimits,
) -> Result<(WeightedTree, LineSet)> {
    let (tree, line) = build(
        model,
        seed,
        Mode::Exit {
            u: 0.0,
            kind: LineKind::Records,
        },
        limits,
    )?;
    Ok((tree, line.expect("exit mode returns a line")))
}

fn build(
    model: &BasicSequenceModel,
    seed: u64,
    mode: Mode,
    limits: GrowthLimits,
) -> Result<(WeightedTree, Option<LineSet>)> {
    let budget = limits.node_budget;
    if budget == 0 {
        return Err(Error::InvalidArgument("node budget must be positive".into()));
    }

    let mut nodes: Vec<Node> = Vec::new();
    let mut line_ids: Vec<u32> = Vec::new();

    let root_seed = SeedNode::new(seed, "wbp/tree");
    let root_real = model.draw_with(&mut root_seed.rng());
    nodes.push(Node {
        parent: NO_PARENT,
        child_index: 0,
        depth: 0,
        t_own: 1.0,
        l: 1.0,
        s: 0.0,
        c: root_real.c,
        first_child: 0,
        n_children: 0,
    });

    // level-synchronous growth; seeds and realizations are kept for the
    // previous level only
    let mut level_start = 0usize;
    let mut level_seeds = vec![root_seed];
    let mut level_reals = vec![root_real];
    let mut max_depth = 0usize;

    loop {
        let level_end = nodes.len();
        let mut next_seeds = Vec::new();
        let mut next_reals = Vec::new();

        for offset in 0..(level_end - level_start) {
            let idx = level_start + offset;
            let expand = match mode {
                Mode::Grow { depth } => (nodes[idx].depth as usize) < depth,
                Mode::Exit { u, .. } => {
                    if nodes[idx].s > u {
                        line_ids.push(idx as u32);
                        false
                    } else {
                        true
                    }
                }
            };
            if !expand {
                continue;
            }

            let parent_seed = level_seeds[offset];
            let (parent_l, parent_s, parent_depth) =
                (nodes[idx].l, nodes[idx].s, nodes[idx].depth);
            nodes[idx].first_child = nodes.len() as u32;
            for &(j, w) in level_reals[offset].children() {
                if nodes.len() as u64 >= budget {
                    let visited = nodes.len() as u64;
                    let partial = finish(model, seed, nodes, max_depth);
                    return Err(Error::NodeBudget {
                        visited,
                        budget,
                        partial: Box::new(partial),
                    });
                }
                let child_seed = parent_seed.child(j as u64);
                let child_real = model.draw_with(&mut child_seed.rng());
                nodes.push(Node {
                    parent: idx as u32,
                    child_index: j,
                    depth: parent_depth + 1,
                    t_own: w,
                    l: parent_l * w,
                    s: parent_s - w.ln(),
                    c: child_real.c,
                    first_child: 0,
                    n_children: 0,
                });
                nodes[idx].n_children += 1;
                next_seeds.push(child_seed);
                next_reals.push(child_real);
            }
        }

        if nodes.len() == level_end {
            break; // nothing materialized: frontier reached or all branches stopped
        }
        max_depth += 1;
        level_start = level_end;
        level_seeds = next_seeds;
        level_reals = next_reals;
    }

    // a completed grow determines every generation up to the request, even
    // ones emptied by extinction; exit trees only know their materialized depth
    let (final_depth, line) = match mode {
        Mode::Grow { depth } => (depth, None),
        Mode::Exit { kind, .. } => (
            max_depth,
            Some(LineSet {
                kind,
                node_ids: line_ids,
            }),
        ),
    };
    Ok((finish(model, seed, nodes, final_depth), line))
}

fn finish(
    model: &BasicSequenceModel,
    seed: u64,
    nodes: Vec<Node>,
    depth: usize,
) -> WeightedTree {
    // nodes are in level order, so generation ranges are contiguous; levels
    // past the last materialized node get empty ranges
    let mut gen_offsets = Vec::with_capacity(depth + 2);
    let mut d = 0u32;
    gen_offsets.push(0u32);
    for (i, node) in nodes.iter().enumerate() {
        while node.depth > d {
            gen_offsets.push(i as u32);
            d += 1;
        }
    }
    while gen_offsets.len() < depth + 2 {
        gen_offsets.push(nodes.len() as u32);
    }
    WeightedTree {
        model: model.clone(),
        seed,
        nodes,
        gen_offsets,
        depth,
    }
}

impl WeightedTree {
    pub fn model(&self) -> &BasicSequenceModel {
        &self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Deepest materialized generation.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a tree always has its root
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: u32) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn children(&self, id: u32) -> &[Node] {
        let n = &self.nodes[id as usize];
        &self.nodes[n.first_child as usize..(n.first_child + n.n_children) as usize]
    }

    pub fn child_ids(&self, id: u32) -> std::ops::Range<u32> {
        let n = &self.nodes[id as usize];
        n.first_child..n.first_child + n.n_children
    }

    /// Word address of a node: child indices from the root down.
    pub fn path(&self, id: u32) -> Vec<u32> {
        let mut out = Vec::new();
        let mut cur = id;
        while self.nodes[cur as usize].parent != NO_PARENT {
            out.push(self.nodes[cur as usize].child_index);
            cur = self.nodes[cur as usize].parent;
        }
        out.reverse();
        out
    }

    /// `Σ L(v)` over generation `n`.
    pub fn generation_weight_sum(&self, n: usize) -> Result<f64> {
        Ok(generation(self, n)?.weight_sum(self))
    }

    /// `Σ L(v)^α` over generation `n` (the additive martingale at `α`).
    pub fn generation_alpha_sum(&self, n: usize, alpha: f64) -> Result<f64> {
        Ok(generation(self, n)?.alpha_weight_sum(self, alpha))
    }

    /// `Σ_{|v| ≤ n} L(v) C(v)`, the toll sum up to depth `n`.
    pub fn toll_sum_through(&self, n: usize) -> Result<f64> {
        if n > self.depth {
            return Err(Error::DepthNotGrown {
                requested: n,
                depth: self.depth,
            });
        }
        let end = self.gen_offsets[n + 1] as usize;
        Ok(self.nodes[..end].iter().map(|v| v.l * v.c).sum())
    }

    /// One JSON object per node, in level order. Keys: `path`, `depth`, `L`,
    /// `S`, `C`.
    pub fn dump_jsonl<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        for id in 0..self.nodes.len() {
            let n = &self.nodes[id];
            let rec = serde_json::json!({
                "path": self.path(id as u32),
                "depth": n.depth,
                "L": n.l,
                "S": n.s,
                "C": n.c,
            });
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}
