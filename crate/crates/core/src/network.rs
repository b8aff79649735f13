//! Agent graph, neighborhood queries and dominating sets.
//!
//! Edges are undirected and stored once as `(low, high)` pairs. The closed
//! neighborhood returned by [`Topology::neighbors`] always contains the agent
//! itself, matching how diffusion agents combine their own intermediate
//! estimate together with their neighbors'.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Directed combination weights keyed by `(from, to)`: the value is the weight
/// agent `to` assigns to the message it receives from `from`.
pub type EdgeWeights = BTreeMap<(usize, usize), f64>;

/// Wire shape of a topology: `{"n_agents": .., "edges": [[a,b],..], "compromised": [..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub n_agents: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub compromised: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TopologyFile", into = "TopologyFile")]
pub struct Topology {
    n_agents: usize,
    edges: BTreeSet<(usize, usize)>,
    compromised: BTreeSet<usize>,
    adjacency: Vec<Vec<usize>>,
}

impl TryFrom<TopologyFile> for Topology {
    type Error = Error;

    fn try_from(file: TopologyFile) -> Result<Self> {
        Topology::new(
            file.n_agents,
            file.edges.iter().map(|e| (e[0], e[1])),
            file.compromised,
        )
    }
}

impl From<Topology> for TopologyFile {
    fn from(t: Topology) -> Self {
        TopologyFile {
            n_agents: t.n_agents,
            edges: t.edges.iter().map(|&(a, b)| [a, b]).collect(),
            compromised: t.compromised.iter().copied().collect(),
        }
    }
}

impl Topology {
    pub fn new(
        n_agents: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        compromised: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::EmptyInput("topology needs at least one agent"));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            for v in [a, b] {
                if v >= n_agents {
                    return Err(Error::InvalidAgent { agent: v, n_agents });
                }
            }
            if a == b {
                return Err(Error::Domain(format!("self-loop on agent {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let compromised: BTreeSet<usize> = compromised.into_iter().collect();
        if let Some(&bad) = compromised.iter().find(|&&c| c >= n_agents) {
            return Err(Error::InvalidAgent { agent: bad, n_agents });
        }
        let mut adjacency = vec![Vec::new(); n_agents];
        for &(a, b) in &set {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Topology {
            n_agents,
            edges: set,
            compromised,
            adjacency,
        })
    }

    pub fn complete(n_agents: usize) -> Result<Self> {
        let edges = (0..n_agents).flat_map(|a| (a + 1..n_agents).map(move |b| (a, b)));
        Topology::new(n_agents, edges, [])
    }

    pub fn path(n_agents: usize) -> Result<Self> {
        Topology::new(n_agents, (1..n_agents).map(|b| (b - 1, b)), [])
    }

    pub fn star(n_leaves: usize) -> Result<Self> {
        Topology::new(n_leaves + 1, (1..=n_leaves).map(|b| (0, b)), [])
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serialization is infallible")
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn compromised(&self) -> &BTreeSet<usize> {
        &self.compromised
    }

    pub fn is_compromised(&self, k: usize) -> bool {
        self.compromised.contains(&k)
    }

    /// Same graph with a different compromised set.
    pub fn with_compromised(&self, compromised: impl IntoIterator<Item = usize>) -> Result<Self> {
        Topology::new(self.n_agents, self.edges.iter().copied(), compromised)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    fn check(&self, k: usize) -> Result<()> {
        if k >= self.n_agents {
            Err(Error::InvalidAgent {
                agent: k,
                n_agents: self.n_agents,
            })
        } else {
            Ok(())
        }
    }

    /// Graph neighbors of `k`, excluding `k`, ascending.
    pub fn adjacent(&self, k: usize) -> Result<&[usize]> {
        self.check(k)?;
        Ok(&self.adjacency[k])
    }

    /// Closed neighborhood of `k` (includes `k`), ascending.
    pub fn neighbors(&self, k: usize) -> Result<Vec<usize>> {
        self.check(k)?;
        let adj = &self.adjacency[k];
        let mut out = Vec::with_capacity(adj.len() + 1);
        let split = adj.partition_point(|&l| l < k);
        out.extend_from_slice(&adj[..split]);
        out.push(k);
        out.extend_from_slice(&adj[split..]);
        Ok(out)
    }

    pub fn degree(&self, k: usize) -> Result<usize> {
        self.check(k)?;
        Ok(self.adjacency[k].len())
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n_agents];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n_agents
    }

    /// Largest number of compromised agents in the closed neighborhood of any
    /// normal agent: the smallest `F` for which the network is `F`-local.
    pub fn local_attack_bound(&self) -> usize {
        (0..self.n_agents)
            .filter(|k| !self.is_compromised(*k))
            .map(|k| {
                self.adjacency[k]
                    .iter()
                    .filter(|l| self.is_compromised(**l))
                    .count()
            })
            .max()
            .unwrap_or(0)
    }

    pub fn is_dominating_set(&self, set: &BTreeSet<usize>) -> Result<bool> {
        for &s in set {
            self.check(s)?;
        }
        Ok((0..self.n_agents)
            .all(|v| set.contains(&v) || self.adjacency[v].iter().any(|u| set.contains(u))))
    }

    /// Greedy approximation of a minimum dominating set.
    ///
    /// Repeatedly picks the agent whose closed neighborhood covers the most
    /// still-uncovered agents; ties go to the lowest id.
    pub fn greedy_min_dominating_set(&self) -> DominatingSet {
        let n = self.n_agents;
        let mut covered = vec![false; n];
        let mut remaining = n;
        let mut members = BTreeSet::new();
        while remaining > 0 {
            let gain = |v: usize| {
                usize::from(!covered[v])
                    + self.adjacency[v].iter().filter(|&&u| !covered[u]).count()
            };
            let (best, _) = (0..n)
                .map(|v| (v, gain(v)))
                .fold((0, 0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            members.insert(best);
            for v in std::iter::once(best).chain(self.adjacency[best].iter().copied()) {
                if !covered[v] {
                    covered[v] = true;
                    remaining -= 1;
                }
            }
        }
        DominatingSet { members }
    }

    /// Drops every edge whose weights are below `threshold` in both directions.
    pub fn prune_links(&self, weights: &EdgeWeights, threshold: f64) -> Result<Topology> {
        let mut kept = Vec::with_capacity(self.edges.len());
        for &(a, b) in &self.edges {
            let ab = *weights
                .get(&(a, b))
                .ok_or(Error::IncompleteWeights { from: a, to: b })?;
            let ba = *weights
                .get(&(b, a))
                .ok_or(Error::IncompleteWeights { from: b, to: a })?;
            if !(ab < threshold && ba < threshold) {
                kept.push((a, b));
            }
        }
        Topology::new(self.n_agents, kept, self.compromised.iter().copied())
    }

    /// Picks `count` agents pairwise at least three hops apart, so that no
    /// agent has more than one of them in its closed neighborhood. Candidates
    /// are taken by descending degree, then ascending id.
    pub fn spread_set(&self, count: usize) -> Result<BTreeSet<usize>> {
        let mut order: Vec<usize> = (0..self.n_agents).collect();
        order.sort_by_key(|&v| (std::cmp::Reverse(self.adjacency[v].len()), v));
        let mut blocked = vec![false; self.n_agents];
        let mut chosen = BTreeSet::new();
        for v in order {
            if chosen.len() == count {
                break;
            }
            if blocked[v] {
                continue;
            }
            chosen.insert(v);
            // block the two-hop ball around v
            blocked[v] = true;
            for &u in &self.adjacency[v] {
                blocked[u] = true;
                for &w in &self.adjacency[u] {
                    blocked[w] = true;
                }
            }
        }
        if chosen.len() < count {
            return Err(Error::Generation(format!(
                "only {} agents can be placed three hops apart, {count} requested",
                chosen.len()
            )));
        }
        Ok(chosen)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominatingSet {
    pub members: BTreeSet<usize>,
}

impl DominatingSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Topology generated from agent positions on the unit square.
#[derive(Debug, Clone)]
pub struct GeometricGraph {
    pub topology: Topology,
    pub positions: Vec<[f64; 2]>,
}

/// Random geometric graph on the unit square: agents closer than `radius`
/// are linked. Resamples until the graph is connected.
pub fn random_geometric<R: Rng + ?Sized>(
    n_agents: usize,
    radius: f64,
    max_attempts: usize,
    rng: &mut R,
) -> Result<GeometricGraph> {
    random_geometric_with_gap(n_agents, radius, 0.0, max_attempts, rng)
}

/// Like [`random_geometric`], but no agent is placed in the vertical band of
/// width `gap` around `x = 0.5`. With a positive gap the first `n / 2`
/// agents go to the left cluster and the rest to the right one.
pub fn random_geometric_with_gap<R: Rng + ?Sized>(
    n_agents: usize,
    radius: f64,
    gap: f64,
    max_attempts: usize,
    rng: &mut R,
) -> Result<GeometricGraph> {
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {radius}")));
    }
    if !(0.0..1.0).contains(&gap) {
        return Err(Error::Domain(format!("gap must lie in [0, 1), got {gap}")));
    }
    let half = (1.0 - gap) / 2.0;
    for _ in 0..max_attempts.max(1) {
        let positions: Vec<[f64; 2]> = (0..n_agents)
            .map(|k| {
                let x = if gap > 0.0 {
                    let offset = if k < n_agents / 2 { 0.0 } else { half + gap };
                    offset + rng.random::<f64>() * half
                } else {
                    rng.random::<f64>()
                };
                [x, rng.random::<f64>()]
            })
            .collect();
        let r2 = radius * radius;
        let mut edges = Vec::new();
        for a in 0..n_agents {
            for b in a + 1..n_agents {
                let dx = positions[a][0] - positions[b][0];
                let dy = positions[a][1] - positions[b][1];
                if dx * dx + dy * dy <= r2 {
                    edges.push((a, b));
                }
            }
        }
        let topology = Topology::new(n_agents, edges, [])?;
        if topology.is_connected() {
            return Ok(GeometricGraph {
                topology,
                positions,
            });
        }
    }
    Err(Error::Generation(format!(
        "no connected geometric graph with n={n_agents}, radius={radius} after {max_attempts} attempts"
    )))
}
