use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{classify, IdError, UserId, UserIdKind};

/// Why two identifiers are joined.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "via", rename_all = "snake_case")]
pub enum Provenance {
    /// Both ids were found in the same record of this artifact.
    CoOccurrence { artifact: String },
    /// A commsId embeds its directedId.
    Embedded,
    /// personId to directedId pairing from a token store row.
    AccountLink { artifact: String },
}

impl Provenance {
    pub fn artifact(&self) -> &str {
        match self {
            Provenance::CoOccurrence { artifact } | Provenance::AccountLink { artifact } => artifact,
            Provenance::Embedded => "id-grammar",
        }
    }
}

/// Undirected edge; endpoints are stored in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub a: UserId,
    pub b: UserId,
    pub provenance: Provenance,
}

impl Edge {
    pub fn new(x: UserId, y: UserId, provenance: Provenance) -> Self {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        Edge { a, b, provenance }
    }

    pub fn touches(&self, id: &UserId) -> bool {
        &self.a == id || &self.b == id
    }
}

/// One record's worth of raw identifier strings.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IdObservation {
    pub artifact: String,
    pub ids: Vec<String>,
}

impl IdObservation {
    pub fn new(artifact: impl Into<String>, ids: impl IntoIterator<Item = impl Into<String>>) -> Self {
        IdObservation {
            artifact: artifact.into(),
            ids: ids.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityGraph {
    pub nodes: BTreeSet<UserId>,
    pub edges: BTreeSet<Edge>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl IdentityGraph {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn add_node(&mut self, id: UserId) {
        if let Some(d) = id.embedded_directed_id() {
            self.nodes.insert(d.clone());
            self.edges.insert(Edge::new(id.clone(), d, Provenance::Embedded));
        }
        self.nodes.insert(id);
    }

    pub fn add_edge(&mut self, x: UserId, y: UserId, provenance: Provenance) {
        if x == y {
            return;
        }
        self.add_node(x.clone());
        self.add_node(y.clone());
        self.edges.insert(Edge::new(x, y, provenance));
    }

    pub fn neighbours<'a>(&'a self, id: &'a UserId) -> impl Iterator<Item = &'a UserId> + 'a {
        self.edges.iter().filter_map(move |e| {
            if &e.a == id {
                Some(&e.b)
            } else if &e.b == id {
                Some(&e.a)
            } else {
                None
            }
        })
    }

    pub fn nodes_of(&self, kind: UserIdKind) -> impl Iterator<Item = &UserId> {
        self.nodes.iter().filter(move |n| n.kind() == kind)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("graph serializes")
    }
}

/// Join identifiers found across artifacts.
///
/// Edges come from co-occurrence within one observation, from the commsId
/// structure, and from explicit account links. Invalid strings are reported
/// as warnings and left out.
pub fn build_graph(
    observations: &[IdObservation],
    links: &[(UserId, UserId, String)],
) -> IdentityGraph {
    let mut graph = IdentityGraph::default();
    for obs in observations {
        let mut valid = Vec::new();
        for raw in &obs.ids {
            match classify(raw) {
                Ok(id) => {
                    if !valid.contains(&id) {
                        valid.push(id);
                    }
                }
                Err(IdError::NoMatch { hint, .. }) => graph.warnings.push(format!(
                    "{}: ignored {raw:?}{}",
                    obs.artifact,
                    hint.map(|h| format!(" ({h})")).unwrap_or_default()
                )),
                Err(e) => graph.warnings.push(format!("{}: {e}", obs.artifact)),
            }
        }
        for id in &valid {
            graph.add_node(id.clone());
        }
        for (i, x) in valid.iter().enumerate() {
            for y in &valid[i + 1..] {
                graph.add_edge(
                    x.clone(),
                    y.clone(),
                    Provenance::CoOccurrence {
                        artifact: obs.artifact.clone(),
                    },
                );
            }
        }
    }
    for (x, y, artifact) in links {
        graph.add_edge(
            x.clone(),
            y.clone(),
            Provenance::AccountLink {
                artifact: artifact.clone(),
            },
        );
    }
    graph
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(kind: UserIdKind, body: &str) -> UserId {
        UserId::new(kind, format!("{}{}", kind.grammar().prefix, body)).unwrap()
    }

    #[test]
    fn empty_input_gives_empty_graph() {
        let g = build_graph(&[], &[]);
        assert!(g.nodes.is_empty() && g.edges.is_empty());
    }

    #[test]
    fn one_account_link() {
        let p = id(UserIdKind::PersonId, &"A".repeat(72));
        let d = id(UserIdKind::DirectedId, &"B".repeat(28));
        let g = build_graph(&[], &[(p, d, "map_data_storage_v2".into())]);
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(
            g.edges.iter().next().unwrap().provenance.artifact(),
            "map_data_storage_v2"
        );
    }

    #[test]
    fn lone_comms_id_adds_structural_edge() {
        let c = format!("amzn1.comms.id.person.amzn1~amzn1.account.{}", "C".repeat(28));
        let g = build_graph(&[IdObservation::new("x", [c])], &[]);
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges.iter().next().unwrap().provenance, Provenance::Embedded);
    }

    #[test]
    fn invalid_ids_become_warnings() {
        let g = build_graph(&[IdObservation::new("x", ["amzn1.account.nope"])], &[]);
        assert!(g.nodes.is_empty());
        assert_eq!(g.warnings.len(), 1);
    }
}
