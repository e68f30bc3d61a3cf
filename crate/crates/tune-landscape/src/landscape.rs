//! Fitness flow graph construction, PageRank centrality, the
//! proportion-of-centrality difficulty metric, and random-walk arrival
//! frequencies over measured landscapes.

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DeviceDataset;

#[derive(Debug, Error)]
pub enum LandscapeError {
    #[error("dataset has no valid records")]
    EmptyDataset,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which measured configurations count as neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborhoodPolicy {
    /// Differ in exactly one parameter, by any value.
    Hamming1,
    /// Differ in exactly one parameter, by one ordinal position.
    Adjacent1,
}

impl NeighborhoodPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hamming1" => Some(NeighborhoodPolicy::Hamming1),
            "adjacent1" => Some(NeighborhoodPolicy::Adjacent1),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NeighborhoodPolicy::Hamming1 => "hamming1",
            NeighborhoodPolicy::Adjacent1 => "adjacent1",
        }
    }
}

/// Directed graph over measured valid configurations with an edge
/// a -> b whenever b is a neighbor of a with strictly lower fitness.
/// Strictly decreasing edges make the graph a DAG; its sinks are the
/// local minima.
#[derive(Debug, Clone)]
pub struct FitnessFlowGraph {
    /// Config indices, ascending.
    nodes: Vec<u64>,
    fitness: Vec<f64>,
    out: Vec<Vec<u32>>,
}

impl FitnessFlowGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[u64] {
        &self.nodes
    }

    pub fn fitness(&self) -> &[f64] {
        &self.fitness
    }

    pub fn out_edges(&self) -> &[Vec<u32>] {
        &self.out
    }

    /// Positions (into `nodes`) of all sinks, i.e. local minima.
    pub fn sinks(&self) -> Vec<usize> {
        (0..self.out.len()).filter(|&i| self.out[i].is_empty()).collect()
    }

    pub fn min_fitness(&self) -> f64 {
        self.fitness.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Edge-list CSV: `src_index,dst_index` per line.
    pub fn export_edges<W: Write>(&self, mut writer: W) -> Result<(), LandscapeError> {
        writeln!(writer, "src_index,dst_index")?;
        for (i, targets) in self.out.iter().enumerate() {
            for &t in targets {
                writeln!(writer, "{},{}", self.nodes[i], self.nodes[t as usize])?;
            }
        }
        Ok(())
    }
}

/// Builds the fitness flow graph over the valid measured configs of a
/// dataset. Neighbors are computed only among measured valid configs;
/// equal-fitness neighbors produce no edge in either direction.
pub fn build_ffg(
    ds: &DeviceDataset,
    policy: NeighborhoodPolicy,
) -> Result<FitnessFlowGraph, LandscapeError> {
    let entries = ds.valid_entries();
    if entries.is_empty() {
        return Err(LandscapeError::EmptyDataset);
    }
    let space = ds.space();
    let position: HashMap<u64, u32> = entries
        .iter()
        .enumerate()
        .map(|(pos, &(idx, _))| (idx, pos as u32))
        .collect();
    let dims = space.dims();
    let mut nodes = Vec::with_capacity(entries.len());
    let mut fitness = Vec::with_capacity(entries.len());
    let mut out = vec![Vec::new(); entries.len()];
    for (pos, &(idx, obj)) in entries.iter().enumerate() {
        nodes.push(idx);
        fitness.push(obj);
        let ordinals = space.ordinals(idx);
        let mut push_neighbor = |neighbor_index: u64| {
            if let Some(&npos) = position.get(&neighbor_index) {
                if entries[npos as usize].1 < obj {
                    out[pos].push(npos);
                }
            }
        };
        for (p, &ord) in ordinals.iter().enumerate() {
            match policy {
                NeighborhoodPolicy::Adjacent1 => {
                    let mut tmp = ordinals.clone();
                    if ord > 0 {
                        tmp[p] = ord - 1;
                        push_neighbor(space.index_from_ordinals(&tmp));
                    }
                    if ord + 1 < dims[p] {
                        tmp[p] = ord + 1;
                        push_neighbor(space.index_from_ordinals(&tmp));
                    }
                }
                NeighborhoodPolicy::Hamming1 => {
                    let mut tmp = ordinals.clone();
                    for alt in 0..dims[p] {
                        if alt == ord {
                            continue;
                        }
                        tmp[p] = alt;
                        push_neighbor(space.index_from_ordinals(&tmp));
                    }
                }
            }
        }
    }
    Ok(FitnessFlowGraph {
        nodes,
        fitness,
        out,
    })
}

/// Power-iteration PageRank on an out-adjacency list with uniform
/// teleportation; dangling-node mass is redistributed uniformly.
/// Iterates until the L1 change drops below `tol` (or `max_iter`).
pub fn pagerank(out: &[Vec<u32>], damping: f64, tol: f64, max_iter: usize) -> Vec<f64> {
    let n = out.len();
    if n == 0 {
        return Vec::new();
    }
    let uniform = 1.0 / n as f64;
    let mut pr = vec![uniform; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iter {
        let mut dangling = 0.0;
        for (i, targets) in out.iter().enumerate() {
            if targets.is_empty() {
                dangling += pr[i];
            }
        }
        let base = (1.0 - damping) * uniform + damping * dangling * uniform;
        for v in next.iter_mut() {
            *v = base;
        }
        for (i, targets) in out.iter().enumerate() {
            if !targets.is_empty() {
                let share = damping * pr[i] / targets.len() as f64;
                for &t in targets {
                    next[t as usize] += share;
                }
            }
        }
        let delta: f64 = pr.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pr, &mut next);
        if delta < tol {
            break;
        }
    }
    pr
}

pub const DEFAULT_DAMPING: f64 = 0.85;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Which PageRank mass the proportion is taken relative to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProportionDenominator {
    /// Mass of all local minima (default reading).
    AllMinima,
    /// Total mass of every node.
    AllNodes,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentralityResult {
    /// PageRank mass per node, aligned with the graph's node order.
    pub pagerank: Vec<f64>,
    /// Config indices of the local minima.
    pub minima: Vec<u64>,
    /// Mass of minima with fitness < (1+p) * f_opt relative to the
    /// denominator mass.
    pub proportion: f64,
    pub p: f64,
    pub denominator: ProportionDenominator,
}

/// PageRank mass of "suitably good" local minima (fitness below
/// (1+p) * f_opt) relative to the chosen denominator.
pub fn proportion_of_centrality(
    g: &FitnessFlowGraph,
    pr: &[f64],
    p: f64,
    denominator: ProportionDenominator,
) -> CentralityResult {
    assert!(p >= 0.0, "p must be non-negative");
    assert!(g.node_count() > 0, "graph must be non-empty");
    let sinks = g.sinks();
    assert!(!sinks.is_empty(), "a finite DAG always has a sink");
    let f_opt = g.min_fitness();
    let cutoff = (1.0 + p) * f_opt;
    let numerator: f64 = sinks
        .iter()
        .filter(|&&s| g.fitness[s] <= cutoff)
        .map(|&s| pr[s])
        .sum();
    let denom: f64 = match denominator {
        ProportionDenominator::AllMinima => sinks.iter().map(|&s| pr[s]).sum(),
        ProportionDenominator::AllNodes => pr.iter().sum(),
    };
    CentralityResult {
        pagerank: pr.to_vec(),
        minima: sinks.iter().map(|&s| g.nodes[s]).collect(),
        proportion: if denom > 0.0 { numerator / denom } else { 0.0 },
        p,
        denominator,
    }
}

/// Runs `walks` randomized first-improvement descents from uniform
/// random valid starts and reports per-minimum arrival proportions as
/// (config index, frequency) pairs, one per local minimum.
/// Deterministic given `seed` (walk w uses seed + w).
pub fn arrival_frequencies(
    ds: &DeviceDataset,
    policy: NeighborhoodPolicy,
    walks: u64,
    seed: u64,
) -> Result<Vec<(u64, f64)>, LandscapeError> {
    let g = build_ffg(ds, policy)?;
    Ok(arrival_frequencies_on_graph(&g, walks, seed))
}

/// Walk variant that reuses a pre-built graph. A uniform choice among
/// out-edges is exactly a uniform choice among strictly improving
/// neighbors, so each walk mimics first-improvement local search over
/// a shuffled neighbor order.
pub fn arrival_frequencies_on_graph(
    g: &FitnessFlowGraph,
    walks: u64,
    seed: u64,
) -> Vec<(u64, f64)> {
    let n = g.node_count();
    let mut arrivals: HashMap<usize, u64> = HashMap::new();
    for w in 0..walks {
        let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(w));
        let mut node = rng.gen_range(0..n);
        loop {
            let targets = &g.out[node];
            if targets.is_empty() {
                break;
            }
            node = targets[rng.gen_range(0..targets.len())] as usize;
        }
        *arrivals.entry(node).or_insert(0) += 1;
    }
    g.sinks()
        .into_iter()
        .map(|s| {
            let count = arrivals.get(&s).copied().unwrap_or(0);
            (g.nodes[s], count as f64 / walks as f64)
        })
        .collect()
}

/// Summary of the minima of a graph for external visualization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimaSummary {
    pub node_count: usize,
    pub edge_count: usize,
    pub minima: Vec<MinimumInfo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimumInfo {
    pub config_index: u64,
    pub fitness: f64,
    pub pagerank: f64,
}

pub fn minima_summary(g: &FitnessFlowGraph, pr: &[f64]) -> MinimaSummary {
    MinimaSummary {
        node_count: g.node_count(),
        edge_count: g.out.iter().map(Vec::len).sum(),
        minima: g
            .sinks()
            .into_iter()
            .map(|s| MinimumInfo {
                config_index: g.nodes[s],
                fitness: g.fitness[s],
                pagerank: pr[s],
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DeviceDataset, DuplicatePolicy, TuningRecord};
    use crate::space::{Parameter, ParameterSpace, SpaceRef};
    use std::sync::Arc;

    fn chain_space(len: i64) -> SpaceRef {
        Arc::new(
            ParameterSpace::new(
                "chain",
                vec![Parameter {
                    name: "x".into(),
                    values: (0..len).collect(),
                }],
                &[],
            )
            .unwrap(),
        )
    }

    fn chain_dataset(objs: &[f64]) -> DeviceDataset {
        let space = chain_space(objs.len() as i64);
        let mut ds = DeviceDataset::new("dev", space);
        for (i, &o) in objs.iter().enumerate() {
            ds.insert_by_index(i as u64, TuningRecord::ok(o), DuplicatePolicy::KeepFirst);
        }
        ds
    }

    fn grid_dataset(width: i64, height: i64, f: impl Fn(i64, i64) -> f64) -> DeviceDataset {
        let space = Arc::new(
            ParameterSpace::new(
                "grid",
                vec![
                    Parameter {
                        name: "x".into(),
                        values: (0..width).collect(),
                    },
                    Parameter {
                        name: "y".into(),
                        values: (0..height).collect(),
                    },
                ],
                &[],
            )
            .unwrap(),
        );
        let mut ds = DeviceDataset::new("dev", space.clone());
        for x in 0..width {
            for y in 0..height {
                let cfg = crate::space::Configuration { values: vec![x, y] };
                ds.insert(&cfg, TuningRecord::ok(f(x, y)), DuplicatePolicy::KeepFirst)
                    .unwrap();
            }
        }
        ds
    }

    #[test]
    fn monotone_chain_edges() {
        let ds = chain_dataset(&[3.0, 2.0, 1.0]);
        let g = build_ffg(&ds, NeighborhoodPolicy::Adjacent1).unwrap();
        assert_eq!(g.out_edges()[0], vec![1]);
        assert_eq!(g.out_edges()[1], vec![2]);
        assert!(g.out_edges()[2].is_empty());
        assert_eq!(g.sinks(), vec![2]);
    }

    #[test]
    fn valley_pair() {
        let ds = chain_dataset(&[1.0, 2.0, 1.0]);
        let g = build_ffg(&ds, NeighborhoodPolicy::Adjacent1).unwrap();
        assert_eq!(g.sinks(), vec![0, 2]);
        assert_eq!(g.out_edges()[1].len(), 2);
    }

    #[test]
    fn equal_fitness_no_edge() {
        let ds = chain_dataset(&[1.0, 1.0]);
        let g = build_ffg(&ds, NeighborhoodPolicy::Adjacent1).unwrap();
        assert!(g.out_edges()[0].is_empty());
        assert!(g.out_edges()[1].is_empty());
    }

    /// O(n^2) all-pairs neighbor check, independent of build_ffg.
    fn brute_force_edges(
        ds: &DeviceDataset,
        policy: NeighborhoodPolicy,
    ) -> Vec<(u64, u64)> {
        let entries = ds.valid_entries();
        let space = ds.space();
        let mut edges = Vec::new();
        for &(a, fa) in &entries {
            for &(b, fb) in &entries {
                if a == b || fb >= fa {
                    continue;
                }
                let oa = space.ordinals(a);
                let ob = space.ordinals(b);
                let diffs: Vec<usize> =
                    (0..oa.len()).filter(|&i| oa[i] != ob[i]).collect();
                let neighbor = match policy {
                    NeighborhoodPolicy::Hamming1 => diffs.len() == 1,
                    NeighborhoodPolicy::Adjacent1 => {
                        diffs.len() == 1
                            && oa[diffs[0]].abs_diff(ob[diffs[0]]) == 1
                    }
                };
                if neighbor {
                    edges.push((a, b));
                }
            }
        }
        edges.sort_unstable();
        edges
    }

    #[test]
    fn random_landscape_matches_brute_force() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let ds = grid_dataset(20, 20, |x, y| {
            // deterministic pseudo-random fitness
            let _ = (x, y);
            0.0
        });
        // rebuild with random objectives
        let space = ds.space().clone();
        for policy in [NeighborhoodPolicy::Adjacent1, NeighborhoodPolicy::Hamming1] {
            let mut ds = DeviceDataset::new("dev", space.clone());
            for i in 0..400u64 {
                ds.insert_by_index(
                    i,
                    TuningRecord::ok(1.0 + rng.gen::<f64>()),
                    DuplicatePolicy::KeepFirst,
                );
            }
            let g = build_ffg(&ds, policy).unwrap();
            let mut got = Vec::new();
            for (i, targets) in g.out_edges().iter().enumerate() {
                for &t in targets {
                    got.push((g.nodes()[i], g.nodes()[t as usize]));
                }
            }
            got.sort_unstable();
            assert_eq!(got, brute_force_edges(&ds, policy));
        }
    }

    #[test]
    fn ffg_is_acyclic() {
        // Kahn topological sort must consume every node.
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let ds = {
            let mut ds = grid_dataset(15, 15, |_, _| 0.0);
            let space = ds.space().clone();
            ds = DeviceDataset::new("dev", space);
            for i in 0..225u64 {
                ds.insert_by_index(
                    i,
                    TuningRecord::ok(1.0 + rng.gen::<f64>()),
                    DuplicatePolicy::KeepFirst,
                );
            }
            ds
        };
        let g = build_ffg(&ds, NeighborhoodPolicy::Hamming1).unwrap();
        let n = g.node_count();
        let mut indegree = vec![0usize; n];
        for targets in g.out_edges() {
            for &t in targets {
                indegree[t as usize] += 1;
            }
        }
        let mut queue: Vec<usize> =
            (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop() {
            seen += 1;
            for &t in &g.out_edges()[v] {
                indegree[t as usize] -= 1;
                if indegree[t as usize] == 0 {
                    queue.push(t as usize);
                }
            }
        }
        assert_eq!(seen, n);
    }

    #[test]
    fn pagerank_single_node() {
        let pr = pagerank(&[vec![]], 0.85, 1e-12, 1000);
        assert_eq!(pr, vec![1.0]);
    }

    #[test]
    fn pagerank_symmetric_cycle() {
        let pr = pagerank(&[vec![1], vec![0]], 0.85, 1e-12, 10_000);
        assert!((pr[0] - 0.5).abs() < 1e-9);
        assert!((pr[1] - 0.5).abs() < 1e-9);
    }

    /// Dense transition-matrix power iteration, independent of the
    /// sparse implementation.
    fn dense_pagerank(out: &[Vec<u32>], damping: f64, iters: usize) -> Vec<f64> {
        let n = out.len();
        let mut m = vec![vec![0.0f64; n]; n]; // m[to][from]
        for (from, targets) in out.iter().enumerate() {
            if targets.is_empty() {
                for row in m.iter_mut() {
                    row[from] = 1.0 / n as f64;
                }
            } else {
                for &t in targets {
                    m[t as usize][from] = 1.0 / targets.len() as f64;
                }
            }
        }
        let mut pr = vec![1.0 / n as f64; n];
        for _ in 0..iters {
            let mut next = vec![(1.0 - damping) / n as f64; n];
            for to in 0..n {
                for from in 0..n {
                    next[to] += damping * m[to][from] * pr[from];
                }
            }
            pr = next;
        }
        pr
    }

    #[test]
    fn pagerank_matches_dense_oracle_two_nodes() {
        let out = vec![vec![1], vec![]];
        let pr = pagerank(&out, 0.85, 1e-14, 100_000);
        let oracle = dense_pagerank(&out, 0.85, 10_000);
        for (a, b) in pr.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8);
        }
        let sum: f64 = pr.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_minimum_proportion_is_one() {
        let ds = chain_dataset(&[3.0, 2.0, 1.0]);
        let g = build_ffg(&ds, NeighborhoodPolicy::Adjacent1).unwrap();
        let pr = pagerank(g.out_edges(), 0.85, 1e-12, 10_000);
        for p in [0.0, 0.1, 1.0] {
            let res = proportion_of_centrality(&g, &pr, p, ProportionDenominator::AllMinima);
            assert_eq!(res.proportion, 1.0);
        }
    }

    #[test]
    fn two_minima_proportion_hand_graph() {
        // 6-node chain: objectives [1.0, 2.0, 3.0, 2.5, 1.8, 1.5],
        // minima at positions 0 (f=1.0) and 5 (f=1.5).
        let ds = chain_dataset(&[1.0, 2.0, 3.0, 2.5, 1.8, 1.5]);
        let g = build_ffg(&ds, NeighborhoodPolicy::Adjacent1).unwrap();
        let pr = pagerank(g.out_edges(), 0.85, 1e-14, 100_000);
        let oracle = dense_pagerank(g.out_edges(), 0.85, 10_000);
        for (a, b) in pr.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8);
        }
        let res =
            proportion_of_centrality(&g, &pr, 0.2, ProportionDenominator::AllMinima);
        assert_eq!(res.minima, vec![0, 5]);
        // Only the f=1.0 minimum is below (1+0.2)*1.0 = 1.2.
        let expected = pr[0] / (pr[0] + pr[5]);
        assert!((res.proportion - expected).abs() < 1e-12);
        // With p large enough both qualify.
        let all =
            proportion_of_centrality(&g, &pr, 0.6, ProportionDenominator::AllMinima);
        assert!((all.proportion - 1.0).abs() < 1e-12);
    }

    #[test]
    fn proportion_monotone_in_p() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let objs: Vec<f64> = (0..60).map(|_| 1.0 + rng.gen::<f64>()).collect();
        let ds = chain_dataset(&objs);
        let g = build_ffg(&ds, NeighborhoodPolicy::Adjacent1).unwrap();
        let pr = pagerank(g.out_edges(), 0.85, 1e-12, 10_000);
        let mut last = 0.0;
        for p in [0.0, 0.05, 0.1, 0.2, 0.5, 1.0] {
            let res =
                proportion_of_centrality(&g, &pr, p, ProportionDenominator::AllMinima);
            assert!(res.proportion >= last - 1e-15);
            assert!((0.0..=1.0 + 1e-12).contains(&res.proportion));
            last = res.proportion;
        }
    }

    #[test]
    fn arrivals_single_minimum() {
        let ds = chain_dataset(&[5.0, 4.0, 3.0, 2.0, 1.0]);
        let freqs =
            arrival_frequencies(&ds, NeighborhoodPolicy::Adjacent1, 500, 1).unwrap();
        assert_eq!(freqs.len(), 1);
        assert_eq!(freqs[0], (4, 1.0));
    }

    #[test]
    fn arrivals_deterministic() {
        let ds = chain_dataset(&[1.0, 2.0, 3.0, 2.5, 1.8, 1.5]);
        let a = arrival_frequencies(&ds, NeighborhoodPolicy::Adjacent1, 1000, 9).unwrap();
        let b = arrival_frequencies(&ds, NeighborhoodPolicy::Adjacent1, 1000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unimodal_adjacent1_unique_minimum() {
        let ds = grid_dataset(9, 9, |x, y| {
            1.0 + ((x - 4) * (x - 4) + (y - 4) * (y - 4)) as f64
        });
        let g = build_ffg(&ds, NeighborhoodPolicy::Adjacent1).unwrap();
        let sinks = g.sinks();
        assert_eq!(sinks.len(), 1);
        assert_eq!(g.fitness()[sinks[0]], 1.0);
    }
}
