use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NodeStatus, Side, Termination};
use crate::milp::BipartiteObservation;

const EPISODE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub side: Side,
    pub status: NodeStatus,
    pub lp_objective: Option<f64>,
    pub branch_var: Option<usize>,
    pub children: Option<(usize, usize)>,
    /// Step at which the node was branched.
    pub visit_step: Option<usize>,
    /// Number of completed steps when the node was created.
    pub created_at: usize,
    /// Nodes in the subtree rooted here, once every node in it is closed.
    pub subtree_size: Option<u64>,
}

impl NodeRecord {
    pub fn new(id: usize, parent: Option<usize>, depth: usize, side: Side, created_at: usize) -> Self {
        NodeRecord {
            id,
            parent,
            depth,
            side,
            status: NodeStatus::Open,
            lp_objective: None,
            branch_var: None,
            children: None,
            visit_step: None,
            created_at,
            subtree_size: None,
        }
    }

    /// Branchability label: the node was branched on.
    pub fn branchable(&self) -> bool {
        self.status == NodeStatus::Branched
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub node: usize,
    pub action: usize,
    pub candidates: Vec<usize>,
    /// Policy distribution aligned with `candidates`.
    pub policy: Vec<f64>,
    /// Incumbent objective after this step's transition.
    pub incumbent_objective: Option<f64>,
    /// DFS stack after the transition, bottom first.
    pub open_after: Vec<usize>,
    /// Nodes created so far, including this step's children.
    pub nodes_after: usize,
    pub observation: Option<BipartiteObservation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub version: u32,
    pub instance: String,
    pub policy: String,
    pub nodes: Vec<NodeRecord>,
    pub steps: Vec<StepRecord>,
    pub root_incumbent: Option<f64>,
    pub final_objective: Option<f64>,
    pub complete: bool,
}

impl EpisodeRecord {
    pub fn new(instance: &str, policy: &str) -> Self {
        EpisodeRecord {
            version: EPISODE_VERSION,
            instance: instance.to_string(),
            policy: policy.to_string(),
            nodes: Vec::new(),
            steps: Vec::new(),
            root_incumbent: None,
            final_objective: None,
            complete: false,
        }
    }

    pub fn total_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Step of each node's branching, indexed by step.
    pub fn step_of_node(&self, node: usize) -> Option<usize> {
        self.nodes[node].visit_step
    }

    pub fn is_ancestor(&self, ancestor: usize, mut node: usize) -> bool {
        loop {
            if node == ancestor {
                return true;
            }
            match self.nodes[node].parent {
                Some(p) => node = p,
                None => return false,
            }
        }
    }
}

/// Fill `subtree_size` by postorder accumulation. Subtrees that still contain
/// open nodes are left unlabeled.
pub fn label_subtree_sizes(episode: &mut EpisodeRecord) {
    // children always have larger ids than their parent
    for id in (0..episode.nodes.len()).rev() {
        let node = &episode.nodes[id];
        let size = match (node.status, node.children) {
            (NodeStatus::Open, _) => None,
            (NodeStatus::Branched, Some((l, r))) => {
                match (episode.nodes[l].subtree_size, episode.nodes[r].subtree_size) {
                    (Some(a), Some(b)) => Some(1 + a + b),
                    _ => None,
                }
            }
            (NodeStatus::Branched, None) => None,
            _ => Some(1),
        };
        episode.nodes[id].subtree_size = size;
    }
}

/// Check at every step that the open nodes' final subtree sizes add up to
/// the number of nodes still to be created plus the open nodes themselves.
pub fn audit_open_sizes(episode: &EpisodeRecord) -> Result<(), String> {
    let total = episode.total_nodes() as u64;
    for s in &episode.steps {
        let mut sum = 0u64;
        for &o in &s.open_after {
            sum += episode.nodes[o]
                .subtree_size
                .ok_or_else(|| format!("node {o} unlabeled"))?;
        }
        let remaining = total - s.nodes_after as u64 + s.open_after.len() as u64;
        if sum != remaining {
            return Err(format!("step {}: open subtree sizes sum to {sum}, expected {remaining}", s.step));
        }
    }
    Ok(())
}

/// `(t_d, t_r)`: steps until the incumbent first reaches the final optimum
/// (0 when found at the root) and that count over the total step count.
pub fn discovery_step(episode: &EpisodeRecord) -> (usize, f64) {
    let Some(opt) = episode.final_objective else {
        return (0, 0.0);
    };
    let hit = |v: Option<f64>| v.is_some_and(|v| (v - opt).abs() <= 1e-6);
    let td = if hit(episode.root_incumbent) {
        0
    } else {
        episode
            .steps
            .iter()
            .position(|s| hit(s.incumbent_objective))
            .map_or(episode.steps.len(), |p| p + 1)
    };
    let total = episode.steps.len();
    let tr = if total == 0 { 0.0 } else { td as f64 / total as f64 };
    (td, tr)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Episode {
        version: u32,
        instance: String,
        policy: String,
        root_incumbent: Option<f64>,
        final_objective: Option<f64>,
        complete: bool,
    },
    Step(StepRecord),
    Node(NodeRecord),
}

/// JSON lines: one header, then one line per step, then one per node.
pub fn write_episode(episode: &EpisodeRecord, path: &Path) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = Line::Episode {
        version: episode.version,
        instance: episode.instance.clone(),
        policy: episode.policy.clone(),
        root_incumbent: episode.root_incumbent,
        final_objective: episode.final_objective,
        complete: episode.complete,
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for s in &episode.steps {
        serde_json::to_writer(&mut w, &Line::Step(s.clone()))?;
        writeln!(w)?;
    }
    for n in &episode.nodes {
        serde_json::to_writer(&mut w, &Line::Node(n.clone()))?;
        writeln!(w)?;
    }
    w.flush()
}

pub fn read_episode(path: &Path) -> std::io::Result<EpisodeRecord> {
    let bad = |msg: String| std::io::Error::new(std::io::ErrorKind::InvalidData, msg);
    let reader = BufReader::new(File::open(path)?);
    let mut episode: Option<EpisodeRecord> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", i + 1)))?;
        match (parsed, episode.as_mut()) {
            (
                Line::Episode {
                    version,
                    instance,
                    policy,
                    root_incumbent,
                    final_objective,
                    complete,
                },
                None,
            ) => {
                if version != EPISODE_VERSION {
                    return Err(bad(format!("unsupported episode version {version}")));
                }
                let mut e = EpisodeRecord::new(&instance, &policy);
                e.root_incumbent = root_incumbent;
                e.final_objective = final_objective;
                e.complete = complete;
                episode = Some(e);
            }
            (Line::Step(s), Some(e)) => e.steps.push(s),
            (Line::Node(n), Some(e)) => e.nodes.push(n),
            _ => return Err(bad(format!("line {}: unexpected record", i + 1))),
        }
    }
    episode.ok_or_else(|| bad("empty episode file".into()))
}

/// One CSV row per solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub instance: String,
    pub family: String,
    pub policy: String,
    pub seed: u64,
    pub nodes: usize,
    pub seconds: f64,
    pub t_d: usize,
    pub status: String,
    pub objective: Option<f64>,
    pub dual_gap: f64,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Optimal => "optimal",
            Termination::Infeasible => "infeasible",
            Termination::NodeLimit => "node-limit",
            Termination::TimeLimit => "time-limit",
        }
    }
}
