use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// `node.port` reference to one port of one node instance.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortRef {
    pub node_id: String,
    pub port: String,
}

impl PortRef {
    pub fn new(node_id: impl Into<String>, port: impl Into<String>) -> Self {
        PortRef {
            node_id: node_id.into(),
            port: port.into(),
        }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.node_id, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortRefParseError(pub String);

impl fmt::Display for PortRefParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}` is not of the form node.port", self.0)
    }
}

impl std::error::Error for PortRefParseError {}

impl FromStr for PortRef {
    type Err = PortRefParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('.') {
            Some((node, port))
                if !node.is_empty() && !port.is_empty() && !port.contains('.') =>
            {
                Ok(PortRef::new(node, port))
            }
            _ => Err(PortRefParseError(s.to_string())),
        }
    }
}

impl Serialize for PortRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PortRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One atomic graph edit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op")]
pub enum GraphEdit {
    AddNode {
        type_name: String,
        #[serde(default)]
        params: BTreeMap<String, Value>,
    },
    AddEdge {
        src: PortRef,
        dst: PortRef,
    },
    RemoveEdge {
        dst: PortRef,
    },
    SetParam {
        node_id: String,
        param: String,
        value: Value,
    },
    Stop,
}

impl GraphEdit {
    pub fn add_node(type_name: impl Into<String>) -> Self {
        GraphEdit::AddNode {
            type_name: type_name.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn add_node_with(
        type_name: impl Into<String>,
        params: impl IntoIterator<Item = (String, Value)>,
    ) -> Self {
        GraphEdit::AddNode {
            type_name: type_name.into(),
            params: params.into_iter().collect(),
        }
    }

    pub fn add_edge(src: PortRef, dst: PortRef) -> Self {
        GraphEdit::AddEdge { src, dst }
    }

    pub fn is_stop(&self) -> bool {
        matches!(self, GraphEdit::Stop)
    }
}
