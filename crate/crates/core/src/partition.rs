//! Multilevel k-way graph partitioning and well-location informed
//! aggregation.
//!
//! The partitioner coarsens by heavy-edge matching, partitions the coarsest
//! graph by greedy region growing, then projects back with boundary
//! refinement at every level. A final pass splits off disconnected pieces of
//! a part and attaches them to their most strongly connected neighbor, so all
//! parts are connected whenever the input graph is.

use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::ConnectivityGraph;

/// Relative slack on the average part weight tolerated by refinement.
const BALANCE_TOLERANCE: f64 = 0.2;
const REFINEMENT_PASSES: usize = 8;

/// Assignment of every vertex to an aggregate. Aggregate ids are compact and
/// numbered in order of their smallest vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    num_parts: usize,
}

impl Partition {
    /// Relabels arbitrary part ids compactly in order of first appearance.
    pub fn from_assignment(raw: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let assignment = raw
            .iter()
            .map(|&p| {
                let next = map.len();
                *map.entry(p).or_insert(next)
            })
            .collect();
        Self {
            assignment,
            num_parts: map.len(),
        }
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn part_of(&self, v: usize) -> usize {
        self.assignment[v]
    }

    pub fn num_parts(&self) -> usize {
        self.num_parts
    }

    pub fn num_vertices(&self) -> usize {
        self.assignment.len()
    }

    /// Member vertices of each aggregate, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.num_parts];
        for (v, &p) in self.assignment.iter().enumerate() {
            m[p].push(v);
        }
        m
    }

    /// Whether each aggregate induces a connected subgraph.
    pub fn parts_connected(&self, graph: &ConnectivityGraph) -> bool {
        self.members()
            .iter()
            .all(|m| component_count(graph, &self.assignment, m) == 1)
    }

    /// Total weight of edges between different aggregates.
    pub fn edge_cut(&self, graph: &ConnectivityGraph) -> u64 {
        graph
            .edges()
            .iter()
            .filter(|&&(u, v, _)| self.assignment[u] != self.assignment[v])
            .map(|&(_, _, w)| w)
            .sum()
    }
}

fn component_count(graph: &ConnectivityGraph, part: &[usize], members: &[usize]) -> usize {
    components_of(graph, part, members).len()
}

/// Connected components of the subgraph induced by `members` (all in the
/// same part), each sorted ascending, largest first.
fn components_of(graph: &ConnectivityGraph, part: &[usize], members: &[usize]) -> Vec<Vec<usize>> {
    let Some(&first) = members.first() else {
        return Vec::new();
    };
    let p = part[first];
    let mut seen = std::collections::HashSet::with_capacity(members.len());
    let mut comps = Vec::new();
    for &start in members {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in graph.neighbors(u) {
                if part[v] == p && seen.insert(v) {
                    comp.push(v);
                    queue.push_back(v);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    comps
}

/// Weighted graph used internally during coarsening.
struct WGraph {
    vwgt: Vec<u64>,
    xadj: Vec<usize>,
    adj: Vec<(usize, u64)>,
}

impl WGraph {
    fn from_graph(g: &ConnectivityGraph) -> Self {
        let n = g.num_vertices();
        let mut xadj = Vec::with_capacity(n + 1);
        let mut adj = Vec::new();
        xadj.push(0);
        for v in 0..n {
            adj.extend_from_slice(g.neighbors(v));
            xadj.push(adj.len());
        }
        Self {
            vwgt: vec![1; n],
            xadj,
            adj,
        }
    }

    fn n(&self) -> usize {
        self.vwgt.len()
    }

    fn neighbors(&self, v: usize) -> &[(usize, u64)] {
        &self.adj[self.xadj[v]..self.xadj[v + 1]]
    }

    /// Contracts according to `cmap` (fine vertex → coarse vertex).
    fn contract(&self, cmap: &[usize], nc: usize) -> Self {
        let mut vwgt = vec![0; nc];
        for (v, &c) in cmap.iter().enumerate() {
            vwgt[c] += self.vwgt[v];
        }
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); nc];
        for (v, &c) in cmap.iter().enumerate() {
            members[c].push(v);
        }
        let mut xadj = Vec::with_capacity(nc + 1);
        let mut adj = Vec::new();
        xadj.push(0);
        let mut acc: Vec<u64> = vec![0; nc];
        let mut touched = Vec::new();
        for (c, mem) in members.iter().enumerate() {
            for &v in mem {
                for &(u, w) in self.neighbors(v) {
                    let cu = cmap[u];
                    if cu == c {
                        continue;
                    }
                    if acc[cu] == 0 {
                        touched.push(cu);
                    }
                    acc[cu] += w;
                }
            }
            touched.sort_unstable();
            for &cu in &touched {
                adj.push((cu, acc[cu]));
                acc[cu] = 0;
            }
            touched.clear();
            xadj.push(adj.len());
        }
        Self { vwgt, xadj, adj }
    }
}

/// Global heavy-edge-first matching: edges are visited by decreasing weight
/// (ties in seeded random order) and matched when both ends are free and the
/// merged vertex stays under `max_vwgt`. Returns the coarse map and the
/// coarse vertex count.
fn heavy_edge_matching(g: &WGraph, max_vwgt: u64, rng: &mut ChaCha8Rng) -> (Vec<usize>, usize) {
    let n = g.n();
    let mut edges: Vec<(u64, u64, usize, usize)> = Vec::with_capacity(g.adj.len() / 2);
    for u in 0..n {
        for &(v, w) in g.neighbors(u) {
            if u < v {
                edges.push((w, 0, u, v));
            }
        }
    }
    for e in &mut edges {
        e.1 = rng.random();
    }
    edges.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut mate = vec![usize::MAX; n];
    for &(_, _, u, v) in &edges {
        if mate[u] == usize::MAX && mate[v] == usize::MAX && g.vwgt[u] + g.vwgt[v] <= max_vwgt {
            mate[u] = v;
            mate[v] = u;
        }
    }
    let mut cmap = vec![usize::MAX; n];
    let mut nc = 0;
    for u in 0..n {
        if cmap[u] != usize::MAX {
            continue;
        }
        cmap[u] = nc;
        if mate[u] != usize::MAX {
            cmap[mate[u]] = nc;
        }
        nc += 1;
    }
    (cmap, nc)
}

/// Greedy region growing into `k` parts. Seeds are spread by repeated
/// farthest-vertex BFS; the lightest part grows by its most strongly
/// connected frontier vertex. Vertices unreachable from any seed form
/// additional parts, one per connected component.
fn region_growing(g: &WGraph, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = g.n();
    let mut part = vec![usize::MAX; n];
    if k >= n {
        return (0..n).collect();
    }
    let bfs_dist = |sources: &[usize]| {
        let mut d = vec![usize::MAX; n];
        let mut q = VecDeque::new();
        for &s in sources {
            d[s] = 0;
            q.push_back(s);
        }
        while let Some(u) = q.pop_front() {
            for &(v, _) in g.neighbors(u) {
                if d[v] == usize::MAX {
                    d[v] = d[u] + 1;
                    q.push_back(v);
                }
            }
        }
        d
    };
    let start = {
        let r = rng.random_range(0..n);
        let d = bfs_dist(&[r]);
        (0..n)
            .filter(|&v| d[v] != usize::MAX)
            .max_by_key(|&v| (d[v], std::cmp::Reverse(v)))
            .unwrap()
    };
    let mut seeds = vec![start];
    while seeds.len() < k {
        let d = bfs_dist(&seeds);
        let next = (0..n)
            .filter(|&v| d[v] != usize::MAX && d[v] > 0)
            .max_by_key(|&v| (d[v], std::cmp::Reverse(v)));
        match next {
            Some(v) => seeds.push(v),
            None => break,
        }
    }
    let kk = seeds.len();
    let mut weight = vec![0u64; kk];
    // conn[v] accumulates per-part connection weight for frontier vertices.
    let mut conn: Vec<std::collections::HashMap<usize, u64>> = vec![Default::default(); n];
    let mut frontier: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); kk];
    let assign = |v: usize,
                      p: usize,
                      part: &mut Vec<usize>,
                      weight: &mut Vec<u64>,
                      conn: &mut Vec<std::collections::HashMap<usize, u64>>,
                      frontier: &mut Vec<std::collections::BTreeSet<usize>>| {
        part[v] = p;
        weight[p] += g.vwgt[v];
        for f in frontier.iter_mut() {
            f.remove(&v);
        }
        for &(u, w) in g.neighbors(v) {
            if part[u] == usize::MAX {
                *conn[u].entry(p).or_insert(0) += w;
                frontier[p].insert(u);
            }
        }
    };
    for (p, &s) in seeds.iter().enumerate() {
        assign(s, p, &mut part, &mut weight, &mut conn, &mut frontier);
    }
    let mut active: Vec<bool> = vec![true; kk];
    loop {
        let p = match (0..kk)
            .filter(|&p| active[p])
            .min_by_key(|&p| (weight[p], p))
        {
            Some(p) => p,
            None => break,
        };
        let pick = frontier[p]
            .iter()
            .copied()
            .max_by_key(|&v| (conn[v].get(&p).copied().unwrap_or(0), std::cmp::Reverse(v)));
        match pick {
            Some(v) => assign(v, p, &mut part, &mut weight, &mut conn, &mut frontier),
            None => active[p] = false,
        }
    }
    let mut next = kk;
    for v in 0..n {
        if part[v] != usize::MAX {
            continue;
        }
        let mut q = VecDeque::from([v]);
        part[v] = next;
        while let Some(u) = q.pop_front() {
            for &(w, _) in g.neighbors(u) {
                if part[w] == usize::MAX {
                    part[w] = next;
                    q.push_back(w);
                }
            }
        }
        next += 1;
    }
    part
}

/// Greedy boundary refinement in the spirit of Fiduccia–Mattheyses, without
/// hill climbing: a vertex moves to the neighboring part it is most strongly
/// connected to when that reduces the cut (or keeps it while improving
/// balance) and the balance constraint allows it. Parts never become empty.
fn refine(g: &WGraph, part: &mut [usize], nparts: usize) {
    let n = g.n();
    let mut weight = vec![0u64; nparts];
    let mut count = vec![0usize; nparts];
    for v in 0..n {
        weight[part[v]] += g.vwgt[v];
        count[part[v]] += 1;
    }
    let total: u64 = weight.iter().sum();
    let limit = (1.0 + BALANCE_TOLERANCE) * total as f64 / nparts as f64;
    let mut conn: Vec<(usize, u64)> = Vec::new();
    for _ in 0..REFINEMENT_PASSES {
        let mut moved = false;
        for v in 0..n {
            let from = part[v];
            if count[from] <= 1 {
                continue;
            }
            conn.clear();
            let mut internal = 0;
            for &(u, w) in g.neighbors(v) {
                let pu = part[u];
                if pu == from {
                    internal += w;
                } else if let Some(e) = conn.iter_mut().find(|e| e.0 == pu) {
                    e.1 += w;
                } else {
                    conn.push((pu, w));
                }
            }
            if conn.is_empty() {
                continue;
            }
            conn.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            let vw = g.vwgt[v];
            for &(to, ext) in conn.iter() {
                let new_to = weight[to] + vw;
                let balanced = new_to as f64 <= limit || new_to + vw <= weight[from];
                let ok = if ext > internal {
                    balanced
                } else if ext == internal {
                    new_to < weight[from]
                } else {
                    false
                };
                if ok {
                    part[v] = to;
                    weight[from] -= vw;
                    weight[to] += vw;
                    count[from] -= 1;
                    count[to] += 1;
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            break;
        }
    }
}

/// Splits every part into its connected components and attaches all but the
/// largest component to the adjacent part sharing the heaviest edges. A
/// component with no neighbor at all becomes its own part.
fn repair_connectivity(graph: &ConnectivityGraph, part: &mut [usize]) {
    loop {
        let p = Partition::from_assignment(part);
        part.copy_from_slice(p.assignment());
        let mut changed = false;
        let mut next_id = p.num_parts();
        for members in p.members() {
            let comps = components_of(graph, part, &members);
            for comp in comps.into_iter().skip(1) {
                let own = part[comp[0]];
                let mut links: Vec<(usize, u64)> = Vec::new();
                for &v in &comp {
                    for &(u, w) in graph.neighbors(v) {
                        let pu = part[u];
                        if pu == own {
                            continue;
                        }
                        match links.iter_mut().find(|e| e.0 == pu) {
                            Some(e) => e.1 += w,
                            None => links.push((pu, w)),
                        }
                    }
                }
                let target = links
                    .iter()
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|e| e.0)
                    .unwrap_or_else(|| {
                        next_id += 1;
                        next_id - 1
                    });
                for &v in &comp {
                    part[v] = target;
                }
                changed = true;
            }
        }
        if !changed {
            let p = Partition::from_assignment(part);
            part.copy_from_slice(p.assignment());
            return;
        }
    }
}

/// Partitions `graph` into at most `k` connected parts per connected
/// component, honoring edge weights. Deterministic for a given seed.
pub fn kway_partition(graph: &ConnectivityGraph, k: usize, seed: u64) -> Result<Partition> {
    let n = graph.num_vertices();
    if k == 0 {
        return Err(Error::Partition("k must be >= 1".into()));
    }
    if k > n {
        return Err(Error::Partition(format!("k = {k} exceeds vertex count {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut part: Vec<usize>;
    if k == 1 {
        part = vec![0; n];
    } else {
        let max_vwgt = ((1.5 * n as f64 / k as f64).ceil() as u64).max(2);
        let mut levels: Vec<(WGraph, Vec<usize>)> = Vec::new();
        let mut g = WGraph::from_graph(graph);
        while g.n() > k {
            let (cmap, nc) = heavy_edge_matching(&g, max_vwgt, &mut rng);
            if nc as f64 > 0.95 * g.n() as f64 {
                break;
            }
            let coarse = g.contract(&cmap, nc);
            levels.push((g, cmap));
            g = coarse;
        }
        part = region_growing(&g, k, &mut rng);
        let mut nparts = part.iter().max().map_or(0, |m| m + 1);
        refine(&g, &mut part, nparts);
        while let Some((fine, cmap)) = levels.pop() {
            part = cmap.iter().map(|&c| part[c]).collect();
            nparts = part.iter().max().map_or(0, |m| m + 1);
            refine(&fine, &mut part, nparts);
        }
    }
    repair_connectivity(graph, &mut part);
    Ok(Partition::from_assignment(&part))
}

/// Graph distance from the nearest source vertex (`usize::MAX` if unreachable).
pub fn multi_source_distance(graph: &ConnectivityGraph, sources: &[usize]) -> Vec<usize> {
    let n = graph.num_vertices();
    let mut d = vec![usize::MAX; n];
    let mut q = VecDeque::new();
    for &s in sources {
        if d[s] == usize::MAX {
            d[s] = 0;
            q.push_back(s);
        }
    }
    while let Some(u) = q.pop_front() {
        for &(v, _) in graph.neighbors(u) {
            if d[v] == usize::MAX {
                d[v] = d[u] + 1;
                q.push_back(v);
            }
        }
    }
    d
}

/// Multiplies by `scale` the weight of every edge whose endpoints both lie
/// within `n_lay` graph layers of a well cell.
pub fn reweight_near_wells(
    graph: &ConnectivityGraph,
    well_cells: &[Vec<usize>],
    n_lay: usize,
    scale: f64,
) -> Result<ConnectivityGraph> {
    if !(scale >= 1.0) || !scale.is_finite() {
        return Err(Error::Partition("edge scale must be >= 1".into()));
    }
    let sources: Vec<usize> = well_cells.iter().flatten().copied().collect();
    if let Some(&bad) = sources.iter().find(|&&c| c >= graph.num_vertices()) {
        return Err(Error::Partition(format!("well cell {bad} out of range")));
    }
    let d = multi_source_distance(graph, &sources);
    let near = |v: usize| d[v] <= n_lay;
    Ok(graph.reweighted(|u, v, w| {
        if near(u) && near(v) {
            ((w as f64) * scale).round().min(u64::MAX as f64 / 4.0) as u64
        } else {
            w
        }
    }))
}

/// Well-location informed aggregation: reweight edges around the wells,
/// partition, then merge for every well all aggregates that contain or touch
/// one of its cells. Well vertices are not part of `graph`; each well is its
/// own aggregate and is handled by the caller.
pub fn well_aware_partition(
    graph: &ConnectivityGraph,
    well_cells: &[Vec<usize>],
    n_lay: usize,
    scale: f64,
    k: usize,
    seed: u64,
) -> Result<Partition> {
    let weighted = reweight_near_wells(graph, well_cells, n_lay, scale)?;
    let part = kway_partition(&weighted, k, seed)?;
    let mut uf = UnionFind::new(part.num_parts());
    for cells in well_cells {
        let mut touched = Vec::new();
        for &c in cells {
            touched.push(part.part_of(c));
            touched.extend(graph.neighbors(c).iter().map(|&(u, _)| part.part_of(u)));
        }
        for w in touched.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    let raw: Vec<usize> = part.assignment().iter().map(|&p| uf.find(p)).collect();
    Ok(Partition::from_assignment(&raw))
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins so results do not depend on union order.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}
