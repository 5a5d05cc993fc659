use serde::{Deserialize, Serialize};

use super::{Edge, NetworkError, Node, RoadNetwork};

pub const NETWORK_FORMAT: &str = "mcrts-net/1";

/// On-disk network document (`"format": "mcrts-net/1"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    pub format: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl NetworkDocument {
    pub fn into_network(self) -> Result<RoadNetwork, NetworkError> {
        if self.format != NETWORK_FORMAT {
            return Err(NetworkError::InvalidField {
                path: "format".into(),
                reason: format!("expected {NETWORK_FORMAT:?}, found {:?}", self.format),
            });
        }
        RoadNetwork::new(self.nodes, self.edges)
    }
}

/// Parses and validates a JSON network document.
pub fn load_network(document: &str) -> Result<RoadNetwork, NetworkError> {
    let doc: NetworkDocument =
        serde_json::from_str(document).map_err(|e| NetworkError::MalformedDocument(e.to_string()))?;
    doc.into_network()
}
