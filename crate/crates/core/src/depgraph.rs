//! Rely/guarantee dependency graph: provider resolution, entailment report
//! and generation order.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::spec::{RelyItem, SpecDocument};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("dependency cycle: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("`{item}` relied on by `{module}` has several providers: {}", .providers.join(", "))]
    AmbiguousProvider { module: String, item: String, providers: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub consumer: String,
    pub provider: String,
    #[serde(serialize_with = "as_display")]
    pub witness: RelyItem,
}

fn as_display<S: serde::Serializer>(item: &RelyItem, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(item)
}

/// Edges point from consumer to provider.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DependencyGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
}

impl DependencyGraph {
    /// Distinct providers of `module`.
    pub fn providers_of(&self, module: &str) -> BTreeSet<&str> {
        self.edges.iter().filter(|e| e.consumer == module).map(|e| e.provider.as_str()).collect()
    }

    /// `consumer -> provider : witness`, one edge per line.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(out, "{} -> {} : {}", e.consumer, e.provider, e.witness);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GraphOptions {
    /// Resolve an ambiguous rely item to the provider whose name sorts first
    /// instead of failing.
    pub accept_first_provider: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Satisfied {
    pub module: String,
    #[serde(serialize_with = "as_display")]
    pub item: RelyItem,
    pub provider: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Unsatisfied {
    pub module: String,
    #[serde(serialize_with = "as_display")]
    pub item: RelyItem,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Ambiguous {
    pub module: String,
    #[serde(serialize_with = "as_display")]
    pub item: RelyItem,
    pub providers: Vec<String>,
}

/// The three lists partition every rely item of the document. Each list is
/// sorted by module, then item.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EntailmentReport {
    pub satisfied: Vec<Satisfied>,
    pub unsatisfied: Vec<Unsatisfied>,
    pub ambiguous: Vec<Ambiguous>,
}

impl EntailmentReport {
    pub fn is_clean(&self) -> bool {
        self.unsatisfied.is_empty() && self.ambiguous.is_empty()
    }
}

impl fmt::Display for EntailmentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "satisfied: {}, unsatisfied: {}, ambiguous: {}",
            self.satisfied.len(),
            self.unsatisfied.len(),
            self.ambiguous.len()
        )?;
        for u in &self.unsatisfied {
            writeln!(f, "unsatisfied: {} relies on {}", u.module, u.item)?;
        }
        for a in &self.ambiguous {
            writeln!(f, "ambiguous: {} relies on {} from {}", a.module, a.item, a.providers.join(", "))?;
        }
        Ok(())
    }
}

/// Modules (other than the consumer) whose guarantee provides `item`, sorted.
fn providers(doc: &SpecDocument, consumer: &str, item: &RelyItem) -> Vec<String> {
    let mut out: Vec<String> = doc
        .modules
        .iter()
        .filter(|m| m.name != consumer && m.guarantee.provides(item))
        .map(|m| m.name.clone())
        .collect();
    out.sort();
    out.dedup();
    out
}

pub fn check_entailment(doc: &SpecDocument) -> EntailmentReport {
    let mut report = EntailmentReport::default();
    for m in &doc.modules {
        for item in m.rely.items() {
            let mut ps = providers(doc, &m.name, &item);
            match ps.len() {
                0 => report.unsatisfied.push(Unsatisfied { module: m.name.clone(), item }),
                1 => report.satisfied.push(Satisfied { module: m.name.clone(), item, provider: ps.remove(0) }),
                _ => report.ambiguous.push(Ambiguous { module: m.name.clone(), item, providers: ps }),
            }
        }
    }
    report.satisfied.sort_by(|a, b| (&a.module, &a.item).cmp(&(&b.module, &b.item)));
    report.unsatisfied.sort_by(|a, b| (&a.module, &a.item).cmp(&(&b.module, &b.item)));
    report.ambiguous.sort_by(|a, b| (&a.module, &a.item).cmp(&(&b.module, &b.item)));
    report
}

pub fn build_graph(doc: &SpecDocument) -> Result<DependencyGraph, GraphError> {
    build_graph_with(doc, GraphOptions::default())
}

/// Unsatisfied rely items produce no edge; see [`check_entailment`].
pub fn build_graph_with(doc: &SpecDocument, opts: GraphOptions) -> Result<DependencyGraph, GraphError> {
    let mut graph = DependencyGraph { nodes: doc.modules.iter().map(|m| m.name.clone()).collect(), edges: Vec::new() };
    graph.nodes.sort();
    graph.nodes.dedup();
    for m in &doc.modules {
        for item in m.rely.items() {
            let ps = providers(doc, &m.name, &item);
            if ps.len() > 1 && !opts.accept_first_provider {
                return Err(GraphError::AmbiguousProvider {
                    module: m.name.clone(),
                    item: item.to_string(),
                    providers: ps,
                });
            }
            if let Some(p) = ps.into_iter().next() {
                graph.edges.push(Edge { consumer: m.name.clone(), provider: p, witness: item });
            }
        }
    }
    graph.edges.sort_by(|a, b| (&a.consumer, &a.provider, &a.witness).cmp(&(&b.consumer, &b.provider, &b.witness)));
    if let Some(cycle) = find_cycle(&graph) {
        return Err(GraphError::CycleDetected(cycle));
    }
    Ok(graph)
}

/// A cycle as a closed path `[a, b, .., a]`, if any.
pub fn find_cycle(graph: &DependencyGraph) -> Option<Vec<String>> {
    let mut adj: BTreeMap<&str, BTreeSet<&str>> = graph.nodes.iter().map(|n| (n.as_str(), BTreeSet::new())).collect();
    for e in &graph.edges {
        adj.entry(&e.consumer).or_default().insert(&e.provider);
        adj.entry(&e.provider).or_default();
    }
    // 0 unvisited, 1 on stack, 2 done
    let mut color: BTreeMap<&str, u8> = adj.keys().map(|k| (*k, 0)).collect();
    let starts: Vec<&str> = adj.keys().copied().collect();
    for start in starts {
        if color[start] != 0 {
            continue;
        }
        let mut path: Vec<&str> = vec![start];
        let mut iters = vec![adj[start].iter()];
        color.insert(start, 1);
        while let Some(it) = iters.last_mut() {
            match it.next() {
                Some(&next) => match color[next] {
                    0 => {
                        color.insert(next, 1);
                        path.push(next);
                        iters.push(adj[next].iter());
                    }
                    1 => {
                        let pos = path.iter().position(|p| *p == next).expect("on stack");
                        let mut cycle: Vec<String> = path[pos..].iter().map(|s| s.to_string()).collect();
                        cycle.push(next.to_string());
                        return Some(cycle);
                    }
                    _ => {}
                },
                None => {
                    let done = path.pop().expect("non-empty");
                    color.insert(done, 2);
                    iters.pop();
                }
            }
        }
    }
    None
}

/// Providers before consumers; among ready modules the smallest name first.
pub fn topo_order(graph: &DependencyGraph) -> Result<Vec<String>, GraphError> {
    let mut pending: BTreeMap<&str, BTreeSet<&str>> =
        graph.nodes.iter().map(|n| (n.as_str(), BTreeSet::new())).collect();
    let mut consumers: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in &graph.edges {
        pending.entry(&e.consumer).or_default().insert(&e.provider);
        pending.entry(&e.provider).or_default();
        consumers.entry(&e.provider).or_default().insert(&e.consumer);
    }
    let mut ready: BinaryHeap<Reverse<&str>> =
        pending.iter().filter(|(_, p)| p.is_empty()).map(|(n, _)| Reverse(*n)).collect();
    let mut order = Vec::with_capacity(pending.len());
    while let Some(Reverse(n)) = ready.pop() {
        order.push(n.to_string());
        for c in consumers.get(n).into_iter().flatten() {
            let p = pending.get_mut(c).expect("known node");
            p.remove(n);
            if p.is_empty() {
                ready.push(Reverse(c));
            }
        }
    }
    if order.len() < pending.len() {
        return Err(GraphError::CycleDetected(find_cycle(graph).unwrap_or_default()));
    }
    Ok(order)
}
