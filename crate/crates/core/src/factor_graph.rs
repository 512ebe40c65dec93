//! Bipartite factor graph between state variables and likelihood factors,
//! partitions of the variable set, and the graph quantities derived from
//! them (radius-`m` neighborhoods, boundaries, degree constants and the
//! locality exponents `a(K)` and `b(m, K)`).
//!
//! Variables and factors are indexed separately from zero. A [`Vertex`]
//! tags an index with its side of the graph.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};

/// A vertex of the bipartite graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Vertex {
    Variable(usize),
    Factor(usize),
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vertex::Variable(v) => write!(f, "variable {v}"),
            Vertex::Factor(i) => write!(f, "factor {i}"),
        }
    }
}

/// Factor graph `G = (V, F, E)`.
///
/// Both adjacency lists are kept sorted, and are transposes of each other.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorGraph {
    num_variables: usize,
    variable_to_factors: Vec<Vec<usize>>,
    factor_to_variables: Vec<Vec<usize>>,
}

impl FactorGraph {
    /// Builds a graph from the variable sets of each factor.
    ///
    /// Duplicate indices within a factor are collapsed. Every factor must
    /// touch at least one variable.
    pub fn from_factors(num_variables: usize, factors: Vec<Vec<usize>>) -> Result<Self> {
        if num_variables == 0 {
            return Err(Error::invalid("a factor graph needs at least one variable"));
        }
        let mut factor_to_variables = Vec::with_capacity(factors.len());
        let mut variable_to_factors = vec![Vec::new(); num_variables];
        for (f, mut vars) in factors.into_iter().enumerate() {
            vars.sort_unstable();
            vars.dedup();
            if vars.is_empty() {
                return Err(Error::invalid(format!("factor {f} has no variables")));
            }
            if let Some(&v) = vars.iter().find(|&&v| v >= num_variables) {
                return Err(Error::invalid(format!(
                    "factor {f} references variable {v}, but there are only {num_variables}"
                )));
            }
            for &v in &vars {
                variable_to_factors[v].push(f);
            }
            factor_to_variables.push(vars);
        }
        Ok(Self {
            num_variables,
            variable_to_factors,
            factor_to_variables,
        })
    }

    /// Chain graph with `num_variables` variables where factor `i` touches
    /// variables `i` and `i + 1`.
    pub fn chain(num_variables: usize) -> Result<Self> {
        if num_variables < 2 {
            return Err(Error::invalid(format!(
                "a chain needs at least 2 variables, got {num_variables}"
            )));
        }
        let factors = (0..num_variables - 1).map(|i| vec![i, i + 1]).collect();
        Self::from_factors(num_variables, factors)
    }

    pub fn num_variables(&self) -> usize {
        self.num_variables
    }

    pub fn num_factors(&self) -> usize {
        self.factor_to_variables.len()
    }

    /// `N(v)`: the factors touching variable `v`, sorted.
    pub fn factors_of(&self, v: usize) -> &[usize] {
        &self.variable_to_factors[v]
    }

    /// `N(f)`: the variables touched by factor `f`, sorted.
    pub fn variables_of(&self, f: usize) -> &[usize] {
        &self.factor_to_variables[f]
    }

    /// True when every factor touches exactly variables `{i, i + 1}`.
    pub fn is_chain(&self) -> bool {
        self.num_factors() + 1 == self.num_variables
            && self
                .factor_to_variables
                .iter()
                .enumerate()
                .all(|(i, vars)| vars.as_slice() == [i, i + 1])
    }

    fn check_vertex(&self, w: Vertex) -> Result<()> {
        let ok = match w {
            Vertex::Variable(v) => v < self.num_variables,
            Vertex::Factor(f) => f < self.num_factors(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("{w} is out of range")))
        }
    }

    fn check_variables(&self, set: &[usize]) -> Result<()> {
        match set.iter().find(|&&v| v >= self.num_variables) {
            Some(v) => Err(Error::invalid(format!("variable {v} is out of range"))),
            None => Ok(()),
        }
    }

    /// Multi-source BFS. Returns distances to every variable and every
    /// factor; `None` marks an unreachable vertex.
    fn bfs(&self, sources: &[Vertex]) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
        let mut var_dist = vec![None; self.num_variables];
        let mut fac_dist = vec![None; self.num_factors()];
        let mut queue = VecDeque::new();
        for &s in sources {
            match s {
                Vertex::Variable(v) if var_dist[v].is_none() => {
                    var_dist[v] = Some(0);
                    queue.push_back(s);
                }
                Vertex::Factor(f) if fac_dist[f].is_none() => {
                    fac_dist[f] = Some(0);
                    queue.push_back(s);
                }
                _ => {}
            }
        }
        while let Some(w) = queue.pop_front() {
            match w {
                Vertex::Variable(v) => {
                    let d = var_dist[v].unwrap_or_default();
                    for &f in &self.variable_to_factors[v] {
                        if fac_dist[f].is_none() {
                            fac_dist[f] = Some(d + 1);
                            queue.push_back(Vertex::Factor(f));
                        }
                    }
                }
                Vertex::Factor(f) => {
                    let d = fac_dist[f].unwrap_or_default();
                    for &v in &self.factor_to_variables[f] {
                        if var_dist[v].is_none() {
                            var_dist[v] = Some(d + 1);
                            queue.push_back(Vertex::Variable(v));
                        }
                    }
                }
            }
        }
        (var_dist, fac_dist)
    }

    fn variable_sources(set: &[usize]) -> Vec<Vertex> {
        set.iter().map(|&v| Vertex::Variable(v)).collect()
    }

    /// Shortest-path edge count between two vertices, or `None` when they
    /// lie in different connected components.
    pub fn distance(&self, a: Vertex, b: Vertex) -> Result<Option<usize>> {
        self.check_vertex(a)?;
        self.check_vertex(b)?;
        let (vars, facs) = self.bfs(&[a]);
        Ok(match b {
            Vertex::Variable(v) => vars[v],
            Vertex::Factor(f) => facs[f],
        })
    }

    /// `N_v^m(K)` and `N_f^m(K)`: variables within distance `2m + 2` and
    /// factors within distance `2m + 1` of some variable of `block`.
    pub fn neighborhoods(&self, block: &[usize], m: usize) -> Result<Neighborhood> {
        if block.is_empty() {
            return Err(Error::invalid("neighborhood of an empty variable set"));
        }
        self.check_variables(block)?;
        let (vars, facs) = self.bfs(&Self::variable_sources(block));
        let within = |d: Option<usize>, r: usize| matches!(d, Some(d) if d <= r);
        Ok(Neighborhood {
            variables: (0..self.num_variables)
                .filter(|&v| within(vars[v], 2 * m + 2))
                .collect(),
            factors: (0..self.num_factors())
                .filter(|&f| within(facs[f], 2 * m + 1))
                .collect(),
        })
    }

    /// Interior, boundary and crossing factors of a variable set `J`.
    pub fn boundary_sets(&self, set: &[usize]) -> Result<BoundarySets> {
        self.check_variables(set)?;
        let mut member = vec![false; self.num_variables];
        for &v in set {
            member[v] = true;
        }
        let inside = |f: usize| self.factor_to_variables[f].iter().all(|&w| member[w]);

        let mut sorted: Vec<usize> = set.to_vec();
        sorted.sort_unstable();
        sorted.dedup();

        let (interior, boundary): (Vec<usize>, Vec<usize>) = sorted
            .iter()
            .partition(|&&v| self.variable_to_factors[v].iter().all(|&f| inside(f)));

        let mut crossing: Vec<usize> = sorted
            .iter()
            .flat_map(|&v| self.variable_to_factors[v].iter().copied())
            .filter(|&f| !inside(f))
            .collect();
        crossing.sort_unstable();
        crossing.dedup();

        Ok(BoundarySets {
            interior,
            boundary,
            boundary_factors: crossing,
        })
    }

    /// Largest graph distance from `block` to a reachable variable.
    fn eccentricity(&self, block: &[usize]) -> usize {
        let (vars, _) = self.bfs(&Self::variable_sources(block));
        vars.into_iter().flatten().max().unwrap_or(0)
    }
}

/// Variables and factors within a given radius of a block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhood {
    pub variables: Vec<usize>,
    pub factors: Vec<usize>,
}

/// `J~` (interior), `dJ = J \ J~`, and `dN(J)`, the factors of `N(J)` that
/// also touch a variable outside `J`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySets {
    pub interior: Vec<usize>,
    pub boundary: Vec<usize>,
    pub boundary_factors: Vec<usize>,
}

/// A partition of the variable set into disjoint blocks.
///
/// Blocks keep the order they were given in; block ids are positions in
/// that order. Each block's variables are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl Partition {
    pub fn new(num_variables: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut block_of = vec![usize::MAX; num_variables];
        let mut sorted_blocks = Vec::with_capacity(blocks.len());
        for (b, mut block) in blocks.into_iter().enumerate() {
            if block.is_empty() {
                return Err(Error::invalid(format!("block {b} is empty")));
            }
            block.sort_unstable();
            for &v in &block {
                if v >= num_variables {
                    return Err(Error::invalid(format!(
                        "block {b} references variable {v}, but there are only {num_variables}"
                    )));
                }
                if block_of[v] != usize::MAX {
                    return Err(Error::invalid(format!(
                        "variable {v} appears in more than one block"
                    )));
                }
                block_of[v] = b;
            }
            sorted_blocks.push(block);
        }
        if let Some(v) = block_of.iter().position(|&b| b == usize::MAX) {
            return Err(Error::invalid(format!("variable {v} is not covered by any block")));
        }
        Ok(Self {
            blocks: sorted_blocks,
            block_of,
        })
    }

    /// Every variable in its own block.
    pub fn singleton(num_variables: usize) -> Self {
        Self {
            blocks: (0..num_variables).map(|v| vec![v]).collect(),
            block_of: (0..num_variables).collect(),
        }
    }

    /// One block holding every variable.
    pub fn trivial(num_variables: usize) -> Self {
        Self {
            blocks: vec![(0..num_variables).collect()],
            block_of: vec![0; num_variables],
        }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, id: usize) -> &[usize] {
        &self.blocks[id]
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_variables(&self) -> usize {
        self.block_of.len()
    }

    /// Id of the block owning variable `v`.
    pub fn block_of(&self, v: usize) -> usize {
        self.block_of[v]
    }
}

/// Degree-type constants of a factor graph and the radii `n_K` of a
/// partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphConstants {
    /// Largest number of factors touching one variable.
    pub upsilon: usize,
    /// Largest `card(N_v^0(v))`.
    pub upsilon2: usize,
    /// Largest number of factors shared by two distinct variables.
    pub upsilon_tilde: usize,
    /// Half the largest distance from each block to a reachable variable.
    pub n_per_block: Vec<usize>,
    /// Maximum of `n_per_block`.
    pub n: usize,
}

impl GraphConstants {
    /// Computes every constant by exhaustive enumeration.
    ///
    /// For disconnected graphs `n_K` only ranges over the variables
    /// reachable from `K`.
    pub fn compute(graph: &FactorGraph, partition: &Partition) -> Result<Self> {
        if partition.num_variables() != graph.num_variables() {
            return Err(Error::invalid("partition and graph disagree on the variable count"));
        }
        let m = graph.num_variables();
        let upsilon = (0..m).map(|v| graph.factors_of(v).len()).max().unwrap_or(0);
        let upsilon2 = (0..m)
            .map(|v| graph.neighborhoods(&[v], 0).map(|n| n.variables.len()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .max()
            .unwrap_or(0);
        let mut upsilon_tilde = 0;
        for v in 0..m {
            for w in (v + 1)..m {
                let shared = intersection_len(graph.factors_of(v), graph.factors_of(w));
                upsilon_tilde = upsilon_tilde.max(shared);
            }
        }
        let n_per_block: Vec<usize> = partition
            .blocks()
            .iter()
            .map(|k| graph.eccentricity(k).div_ceil(2))
            .collect();
        let n = n_per_block.iter().copied().max().unwrap_or(0);
        Ok(Self {
            upsilon,
            upsilon2,
            upsilon_tilde,
            n_per_block,
            n,
        })
    }
}

fn intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// The exponents `a(K)` and `b(m, K)` appearing in the error bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalityExponents {
    pub a: usize,
    pub b: usize,
}

/// Computes `a(K)` and `b(m, K)`.
///
/// `N_v^{m-1}(K)` at `m = 0` is taken to be `K` itself. Maxima over empty
/// sets are zero.
pub fn locality_exponents(
    graph: &FactorGraph,
    partition: &Partition,
    m: usize,
) -> Result<LocalityExponents> {
    if partition.num_variables() != graph.num_variables() {
        return Err(Error::invalid("partition and graph disagree on the variable count"));
    }
    let mut a = 0;
    let mut b = 0;
    for block in partition.blocks() {
        let sets = graph.boundary_sets(block)?;
        for &v in &sets.boundary {
            let crossing = intersection_len(graph.factors_of(v), &sets.boundary_factors);
            a = a.max(crossing);
        }

        let inner = if m == 0 {
            block.clone()
        } else {
            graph.neighborhoods(block, m - 1)?.variables
        };
        let mut covered = vec![false; graph.num_variables()];
        for &v in &inner {
            covered[v] = true;
        }
        for v in (0..graph.num_variables()).filter(|&v| !covered[v]) {
            b = b.max(graph.factors_of(v).len());
        }
    }
    Ok(LocalityExponents { a: 2 * a, b: 2 * b })
}

/// Parses the plain-text graph description: a header line `M F`, then one
/// line per factor listing its variable indices.
pub fn parse_graph(text: &str) -> Result<FactorGraph> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty graph description"))?;
    let dims: Vec<usize> = parse_indices(header_line, header)?;
    let [num_variables, num_factors] = dims[..] else {
        return Err(Error::parse(header_line, "header must be `M F`"));
    };
    let mut factors = Vec::with_capacity(num_factors);
    for (line, text) in lines {
        factors.push(parse_indices(line, text)?);
    }
    if factors.len() != num_factors {
        return Err(Error::parse(
            header_line,
            format!("header declares {num_factors} factors, found {}", factors.len()),
        ));
    }
    FactorGraph::from_factors(num_variables, factors)
}

fn parse_indices(line: usize, text: &str) -> Result<Vec<usize>> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<usize>()
                .map_err(|_| Error::parse(line, format!("`{tok}` is not a non-negative integer")))
        })
        .collect()
}

/// Inverse of [`parse_graph`].
pub fn format_graph(graph: &FactorGraph) -> String {
    let mut out = format!("{} {}\n", graph.num_variables(), graph.num_factors());
    for f in 0..graph.num_factors() {
        let vars: Vec<String> = graph.variables_of(f).iter().map(|v| v.to_string()).collect();
        out.push_str(&vars.join(" "));
        out.push('\n');
    }
    out
}
