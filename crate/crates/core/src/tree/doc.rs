//! JSON tree document.
//!
//! ```json
//! {"format":"maptree-tree-v1","n_features":3,
//!  "root":{"split":1,"left":{"leaf":{"c1":0,"c0":4}},"right":{"leaf":{"c1":5,"c0":0}}}}
//! ```

use serde::ser::{Serialize, SerializeMap, Serializer};
use serde_json::{Map, Value};

use super::{DecisionTree, TreeError, TreeNode};
use crate::posterior::LabelCounts;

pub const TREE_FORMAT: &str = "maptree-tree-v1";

impl Serialize for TreeNode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            TreeNode::Leaf(counts) => {
                let mut map = serializer.serialize_map(Some(1))?;
                map.serialize_entry("leaf", counts)?;
                map.end()
            }
            TreeNode::Split {
                feature,
                left,
                right,
            } => {
                let mut map = serializer.serialize_map(Some(3))?;
                map.serialize_entry("split", feature)?;
                map.serialize_entry("left", left.as_ref())?;
                map.serialize_entry("right", right.as_ref())?;
                map.end()
            }
        }
    }
}

impl Serialize for DecisionTree {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(3))?;
        map.serialize_entry("format", TREE_FORMAT)?;
        map.serialize_entry("n_features", &self.n_features)?;
        map.serialize_entry("root", &self.root)?;
        map.end()
    }
}

pub(super) fn to_json(tree: &DecisionTree) -> String {
    serde_json::to_string(tree).expect("tree serialization is infallible")
}

fn schema(path: &str, message: impl Into<String>) -> TreeError {
    TreeError::Schema {
        path: path.to_string(),
        message: message.into(),
    }
}

fn object<'a>(value: &'a Value, path: &str) -> Result<&'a Map<String, Value>, TreeError> {
    value
        .as_object()
        .ok_or_else(|| schema(path, "expected an object"))
}

fn field<'a>(map: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, TreeError> {
    map.get(key)
        .ok_or_else(|| schema(path, format!("missing field {key:?}")))
}

fn uint(value: &Value, path: &str) -> Result<u64, TreeError> {
    value
        .as_u64()
        .ok_or_else(|| schema(path, "expected a non-negative integer"))
}

fn only_keys(map: &Map<String, Value>, keys: &[&str], path: &str) -> Result<(), TreeError> {
    match map.keys().find(|k| !keys.contains(&k.as_str())) {
        Some(k) => Err(schema(path, format!("unexpected field {k:?}"))),
        None => Ok(()),
    }
}

pub(super) fn from_json(text: &str) -> Result<DecisionTree, TreeError> {
    let value: Value = serde_json::from_str(text)?;
    let top = object(&value, "$")?;
    only_keys(top, &["format", "n_features", "root"], "$")?;
    match field(top, "format", "$")?.as_str() {
        Some(TREE_FORMAT) => {}
        Some(other) => return Err(schema("$.format", format!("unsupported format {other:?}"))),
        None => return Err(schema("$.format", "expected a string")),
    }
    let n_features = uint(field(top, "n_features", "$")?, "$.n_features")? as usize;
    let root = node(field(top, "root", "$")?, "$.root", n_features)?;
    Ok(DecisionTree { n_features, root })
}

fn node(value: &Value, path: &str, n_features: usize) -> Result<TreeNode, TreeError> {
    let map = object(value, path)?;
    if let Some(leaf) = map.get("leaf") {
        only_keys(map, &["leaf"], path)?;
        let lpath = format!("{path}.leaf");
        let counts = object(leaf, &lpath)?;
        only_keys(counts, &["c1", "c0"], &lpath)?;
        let c1 = uint(field(counts, "c1", &lpath)?, &format!("{lpath}.c1"))?;
        let c0 = uint(field(counts, "c0", &lpath)?, &format!("{lpath}.c0"))?;
        let to_u32 = |v: u64, key: &str| {
            u32::try_from(v).map_err(|_| schema(&format!("{lpath}.{key}"), "count too large"))
        };
        return Ok(TreeNode::Leaf(LabelCounts::new(
            to_u32(c1, "c1")?,
            to_u32(c0, "c0")?,
        )));
    }
    if map.contains_key("split") {
        only_keys(map, &["split", "left", "right"], path)?;
        let feature = uint(&map["split"], &format!("{path}.split"))? as usize;
        if feature >= n_features {
            return Err(TreeError::FeatureOutOfRange {
                path: format!("{path}.split"),
                feature,
                n_features,
            });
        }
        let left = node(
            field(map, "left", path)?,
            &format!("{path}.left"),
            n_features,
        )?;
        let right = node(
            field(map, "right", path)?,
            &format!("{path}.right"),
            n_features,
        )?;
        return Ok(TreeNode::split(feature, left, right));
    }
    Err(schema(path, "expected a \"leaf\" or \"split\" node"))
}
