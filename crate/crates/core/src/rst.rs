//! RST trees exchanged with external discourse parsers, the relation
//! taxonomy, and extraction of (explanatory, target) EDU pairs.
//!
//! Interchange records are one JSON object per line:
//!
//! ```json
//! {"doc_id": "d1",
//!  "edus": [{"index": 0, "text": "...", "char_start": 0, "char_end": 12}, ...],
//!  "nodes": [{"left_leaf": 0, "right_leaf": 1, "split": 0,
//!             "relation_label": "Elaboration", "nuclearity": "nucleus-satellite"}]}
//! ```
//!
//! `nodes` lists internal nodes in pre-order. A node spans EDUs
//! `left_leaf..=right_leaf`; its left child spans `left_leaf..=split` and its
//! right child `split+1..=right_leaf`. Single-EDU spans are leaves and have
//! no node entry.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edu {
    pub index: usize,
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nuclearity {
    NucleusSatellite,
    SatelliteNucleus,
    NucleusNucleus,
}

impl Nuclearity {
    pub fn as_str(self) -> &'static str {
        match self {
            Nuclearity::NucleusSatellite => "nucleus-satellite",
            Nuclearity::SatelliteNucleus => "satellite-nucleus",
            Nuclearity::NucleusNucleus => "nucleus-nucleus",
        }
    }
}

impl FromStr for Nuclearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nucleus-satellite" | "ns" => Ok(Nuclearity::NucleusSatellite),
            "satellite-nucleus" | "sn" => Ok(Nuclearity::SatelliteNucleus),
            "nucleus-nucleus" | "nn" => Ok(Nuclearity::NucleusNucleus),
            other => Err(Error::schema("nuclearity", format!("unknown value `{other}`"))),
        }
    }
}

/// The four explanatory relation groups plus a catch-all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationCategory {
    Background,
    Elaboration,
    Explanation,
    Comparison,
    Other,
}

impl RelationCategory {
    pub const EXPLANATORY: [RelationCategory; 4] = [
        RelationCategory::Background,
        RelationCategory::Elaboration,
        RelationCategory::Explanation,
        RelationCategory::Comparison,
    ];

    pub fn is_explanatory(self) -> bool {
        self != RelationCategory::Other
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationCategory::Background => "Background",
            RelationCategory::Elaboration => "Elaboration",
            RelationCategory::Explanation => "Explanation",
            RelationCategory::Comparison => "Comparison",
            RelationCategory::Other => "Other",
        }
    }
}

impl fmt::Display for RelationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "background" => Ok(RelationCategory::Background),
            "elaboration" => Ok(RelationCategory::Elaboration),
            "explanation" => Ok(RelationCategory::Explanation),
            "comparison" => Ok(RelationCategory::Comparison),
            "other" => Ok(RelationCategory::Other),
            other => Err(Error::invalid(format!("unknown relation category `{other}`"))),
        }
    }
}

/// Relation labels of each explanatory group, as listed in the taxonomy table.
pub const RELATION_TAXONOMY: &[(RelationCategory, &[&str])] = &[
    (RelationCategory::Background, &["Background", "Circumstance"]),
    (
        RelationCategory::Elaboration,
        &[
            "Elaboration-additional",
            "Elaboration-general-specific",
            "Elaboration-part-whole",
            "Elaboration-process-step",
            "Elaboration-object-attribute",
            "Elaboration-set-member",
            "Example",
            "Definition",
        ],
    ),
    (
        RelationCategory::Explanation,
        &["Evidence", "Explanation-argumentative", "Reason"],
    ),
    (
        RelationCategory::Comparison,
        &["Comparison", "Preference", "Analogy", "Proportion", "Topic-Comment"],
    ),
];

/// Maps a parser relation label to its explanatory group.
///
/// Case-insensitive. Coarse labels ("Elaboration", "Explanation") and the
/// `_`/space spellings some parsers emit are accepted; anything else is
/// [`RelationCategory::Other`].
pub fn map_relation(label: &str) -> RelationCategory {
    let norm: String = label
        .trim()
        .chars()
        .map(|c| if c == '_' || c == ' ' { '-' } else { c.to_ascii_lowercase() })
        .collect();
    for (category, labels) in RELATION_TAXONOMY {
        if labels.iter().any(|l| l.eq_ignore_ascii_case(&norm)) {
            return *category;
        }
    }
    match norm.as_str() {
        "elaboration" => RelationCategory::Elaboration,
        "explanation" => RelationCategory::Explanation,
        _ => RelationCategory::Other,
    }
}

/// One entry of the interchange `nodes` array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub left_leaf: usize,
    pub right_leaf: usize,
    pub split: usize,
    pub relation_label: String,
    pub nuclearity: Nuclearity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RstNode {
    Leaf(usize),
    Internal {
        relation_label: String,
        nuclearity: Nuclearity,
        left: Box<RstNode>,
        right: Box<RstNode>,
    },
}

impl RstNode {
    /// Leftmost leaf reached by following nucleus children (left at multinuclear nodes).
    pub fn head(&self) -> usize {
        match self {
            RstNode::Leaf(i) => *i,
            RstNode::Internal { nuclearity, left, right, .. } => match nuclearity {
                Nuclearity::SatelliteNucleus => right.head(),
                _ => left.head(),
            },
        }
    }

    pub fn span(&self) -> (usize, usize) {
        match self {
            RstNode::Leaf(i) => (*i, *i),
            RstNode::Internal { left, right, .. } => (left.span().0, right.span().1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RstTree {
    pub root: RstNode,
}

impl RstTree {
    pub fn internal_nodes(&self) -> usize {
        fn walk(n: &RstNode) -> usize {
            match n {
                RstNode::Leaf(_) => 0,
                RstNode::Internal { left, right, .. } => 1 + walk(left) + walk(right),
            }
        }
        walk(&self.root)
    }

    /// Pre-order node records, the inverse of tree construction in [`parse_interchange`].
    pub fn node_records(&self) -> Vec<NodeRecord> {
        fn walk(n: &RstNode, out: &mut Vec<NodeRecord>) {
            if let RstNode::Internal { relation_label, nuclearity, left, right } = n {
                out.push(NodeRecord {
                    left_leaf: left.span().0,
                    right_leaf: right.span().1,
                    split: left.span().1,
                    relation_label: relation_label.clone(),
                    nuclearity: *nuclearity,
                });
                walk(left, out);
                walk(right, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }
}

/// A validated interchange record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedDocument {
    pub doc_id: String,
    pub edus: Vec<Edu>,
    pub tree: RstTree,
}

impl ParsedDocument {
    pub fn to_value(&self) -> Value {
        serde_json::json!({
            "doc_id": self.doc_id,
            "edus": self.edus,
            "nodes": self.tree.node_records(),
        })
    }

    pub fn to_line(&self) -> String {
        self.to_value().to_string()
    }
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, name: &str, path: &str) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| Error::schema(format!("{path}{name}"), "missing"))
}

fn as_index(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| Error::schema(path, "expected a non-negative integer"))
}

fn as_string(v: &Value, path: &str) -> Result<String> {
    v.as_str()
        .map(str::to_string)
        .ok_or_else(|| Error::schema(path, "expected a string"))
}

/// Parses one interchange line.
pub fn parse_interchange_line(line: &str) -> Result<ParsedDocument> {
    let value: Value = serde_json::from_str(line).map_err(|e| Error::schema("<record>", e.to_string()))?;
    parse_interchange(&value)
}

/// Validates an interchange record and builds its tree.
pub fn parse_interchange(payload: &Value) -> Result<ParsedDocument> {
    let obj = payload
        .as_object()
        .ok_or_else(|| Error::schema("<record>", "expected an object"))?;
    let doc_id = as_string(field(obj, "doc_id", "")?, "doc_id")?;

    let raw_edus = field(obj, "edus", "")?
        .as_array()
        .ok_or_else(|| Error::schema("edus", "expected an array"))?;
    if raw_edus.is_empty() {
        return Err(Error::schema("edus", "must not be empty"));
    }
    let mut edus = Vec::with_capacity(raw_edus.len());
    for (i, e) in raw_edus.iter().enumerate() {
        let path = format!("edus[{i}].");
        let o = e
            .as_object()
            .ok_or_else(|| Error::schema(format!("edus[{i}]"), "expected an object"))?;
        let edu = Edu {
            index: as_index(field(o, "index", &path)?, &format!("{path}index"))?,
            text: as_string(field(o, "text", &path)?, &format!("{path}text"))?,
            char_start: as_index(field(o, "char_start", &path)?, &format!("{path}char_start"))?,
            char_end: as_index(field(o, "char_end", &path)?, &format!("{path}char_end"))?,
        };
        if edu.index != i {
            return Err(Error::Structural(format!("EDU at position {i} has index {}", edu.index)));
        }
        if edu.char_end < edu.char_start {
            return Err(Error::Structural(format!("EDU {i} ends before it starts")));
        }
        if let Some(prev) = edus.last() {
            let prev: &Edu = prev;
            if edu.char_start < prev.char_end {
                return Err(Error::Structural(format!("EDU {i} overlaps EDU {}", i - 1)));
            }
        }
        edus.push(edu);
    }

    let raw_nodes = field(obj, "nodes", "")?
        .as_array()
        .ok_or_else(|| Error::schema("nodes", "expected an array"))?;
    let mut nodes = Vec::with_capacity(raw_nodes.len());
    for (i, n) in raw_nodes.iter().enumerate() {
        let path = format!("nodes[{i}].");
        let o = n
            .as_object()
            .ok_or_else(|| Error::schema(format!("nodes[{i}]"), "expected an object"))?;
        if let Some(children) = o.get("children") {
            if children.as_array().is_some_and(|c| c.len() != 2) {
                return Err(Error::Structural(format!("node {i} is not binary")));
            }
        }
        let nuclearity_path = format!("{path}nuclearity");
        let nuclearity = as_string(field(o, "nuclearity", &path)?, &nuclearity_path)?
            .parse::<Nuclearity>()
            .map_err(|_| Error::schema(&nuclearity_path, "expected nucleus-satellite, satellite-nucleus or nucleus-nucleus"))?;
        nodes.push(NodeRecord {
            left_leaf: as_index(field(o, "left_leaf", &path)?, &format!("{path}left_leaf"))?,
            right_leaf: as_index(field(o, "right_leaf", &path)?, &format!("{path}right_leaf"))?,
            split: as_index(field(o, "split", &path)?, &format!("{path}split"))?,
            relation_label: as_string(field(o, "relation_label", &path)?, &format!("{path}relation_label"))?,
            nuclearity,
        });
    }

    let tree = build_tree(&nodes, edus.len())?;
    Ok(ParsedDocument { doc_id, edus, tree })
}

/// Rebuilds a tree from pre-order node records covering `0..n_edus`.
pub fn build_tree(nodes: &[NodeRecord], n_edus: usize) -> Result<RstTree> {
    fn build(nodes: &[NodeRecord], pos: &mut usize, lo: usize, hi: usize) -> Result<RstNode> {
        if lo == hi {
            return Ok(RstNode::Leaf(lo));
        }
        let Some(node) = nodes.get(*pos) else {
            return Err(Error::Structural(format!("no node covers EDUs {lo}..={hi}")));
        };
        if node.left_leaf != lo || node.right_leaf != hi {
            return Err(Error::Structural(format!(
                "node {} spans {}..={} where {lo}..={hi} was expected (leaf ranges must partition the EDUs)",
                *pos, node.left_leaf, node.right_leaf
            )));
        }
        if node.split < lo || node.split >= hi {
            return Err(Error::Structural(format!(
                "node {} has split {} outside {lo}..{hi}",
                *pos, node.split
            )));
        }
        *pos += 1;
        let left = build(nodes, pos, lo, node.split)?;
        let right = build(nodes, pos, node.split + 1, hi)?;
        Ok(RstNode::Internal {
            relation_label: node.relation_label.clone(),
            nuclearity: node.nuclearity,
            left: Box::new(left),
            right: Box::new(right),
        })
    }

    if n_edus == 0 {
        return Err(Error::Structural("tree has no EDUs".into()));
    }
    let mut pos = 0;
    let root = build(nodes, &mut pos, 0, n_edus - 1)?;
    if pos != nodes.len() {
        return Err(Error::Structural(format!(
            "{} node(s) left over after the tree was complete",
            nodes.len() - pos
        )));
    }
    Ok(RstTree { root })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExplanatoryPair {
    pub explanatory_edu: usize,
    pub target_edu: usize,
    pub category: RelationCategory,
    pub appearance_position: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub pairs: Vec<ExplanatoryPair>,
    /// Explanatory relations on multinuclear nodes, which have no direction.
    pub skipped_multinuclear: usize,
}

/// Extracts (satellite, nucleus) pairs from every explanatory relation.
///
/// Multi-EDU children are represented by their nucleus head (see
/// [`RstNode::head`]). Output is sorted by explanatory EDU index.
pub fn extract_explanatory_pairs(tree: &RstTree, edus: &[Edu]) -> Result<Extraction> {
    let (lo, hi) = tree.root.span();
    if lo != 0 || hi + 1 != edus.len() {
        return Err(Error::invalid(format!(
            "tree spans EDUs {lo}..={hi} but {} EDUs were given",
            edus.len()
        )));
    }

    fn walk(n: &RstNode, out: &mut Extraction) {
        let RstNode::Internal { relation_label, nuclearity, left, right } = n else {
            return;
        };
        let category = map_relation(relation_label);
        if category.is_explanatory() {
            let sides = match nuclearity {
                Nuclearity::NucleusSatellite => Some((right, left)),
                Nuclearity::SatelliteNucleus => Some((left, right)),
                Nuclearity::NucleusNucleus => None,
            };
            match sides {
                Some((satellite, nucleus)) => out.pairs.push(ExplanatoryPair {
                    explanatory_edu: satellite.head(),
                    target_edu: nucleus.head(),
                    category,
                    appearance_position: 0,
                }),
                None => out.skipped_multinuclear += 1,
            }
        }
        walk(left, out);
        walk(right, out);
    }

    let mut out = Extraction::default();
    walk(&tree.root, &mut out);
    out.pairs
        .sort_by_key(|p| (p.explanatory_edu, p.target_edu));
    for (i, p) in out.pairs.iter_mut().enumerate() {
        p.appearance_position = i;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn edus(n: usize) -> Vec<Value> {
        (0..n)
            .map(|i| json!({"index": i, "text": format!("e{i}"), "char_start": i * 3, "char_end": i * 3 + 2}))
            .collect()
    }

    fn node(l: usize, r: usize, s: usize, rel: &str, nuc: &str) -> Value {
        json!({"left_leaf": l, "right_leaf": r, "split": s, "relation_label": rel, "nuclearity": nuc})
    }

    #[test]
    fn minimal_tree() {
        let doc = parse_interchange(&json!({
            "doc_id": "d", "edus": edus(2),
            "nodes": [node(0, 1, 0, "Elaboration-additional", "nucleus-satellite")]
        }))
        .unwrap();
        assert_eq!(doc.tree.internal_nodes(), 1);
        let ex = extract_explanatory_pairs(&doc.tree, &doc.edus).unwrap();
        assert_eq!(
            ex.pairs,
            vec![ExplanatoryPair {
                explanatory_edu: 1,
                target_edu: 0,
                category: RelationCategory::Elaboration,
                appearance_position: 0
            }]
        );
    }

    #[test]
    fn leaf_gap_is_structural() {
        let err = parse_interchange(&json!({
            "doc_id": "d", "edus": edus(3),
            "nodes": [node(0, 2, 0, "Joint", "nucleus-nucleus"), node(2, 2, 2, "Joint", "nucleus-nucleus")]
        }))
        .unwrap_err();
        assert!(matches!(err, Error::Structural(_)), "{err}");
    }

    #[test]
    fn schema_errors_name_the_field() {
        let err = parse_interchange(&json!({"doc_id": "d", "edus": edus(2), "nodes": [
            {"left_leaf": 0, "right_leaf": 1, "split": 0, "nuclearity": "nucleus-satellite"}
        ]}))
        .unwrap_err();
        match err {
            Error::Schema { field, .. } => assert_eq!(field, "nodes[0].relation_label"),
            other => panic!("{other}"),
        }
        let err = parse_interchange(&json!({"edus": edus(1), "nodes": []})).unwrap_err();
        assert!(matches!(err, Error::Schema { ref field, .. } if field == "doc_id"));
    }

    #[test]
    fn overlapping_spans_and_non_binary() {
        let mut e = edus(2);
        e[1]["char_start"] = json!(1);
        let err = parse_interchange(&json!({"doc_id": "d", "edus": e, "nodes": [node(0, 1, 0, "Joint", "nn")]}))
            .unwrap_err();
        assert!(matches!(err, Error::Structural(_)));

        let mut n = node(0, 1, 0, "Joint", "nn");
        n["children"] = json!([1, 2, 3]);
        let err = parse_interchange(&json!({"doc_id": "d", "edus": edus(2), "nodes": [n]})).unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
    }

    #[test]
    fn relation_mapping() {
        assert_eq!(map_relation("Evidence"), RelationCategory::Explanation);
        assert_eq!(map_relation("Analogy"), RelationCategory::Comparison);
        assert_eq!(map_relation("Joint"), RelationCategory::Other);
        assert_eq!(map_relation("elaboration_additional"), RelationCategory::Elaboration);
        assert_eq!(map_relation("  CIRCUMSTANCE "), RelationCategory::Background);
    }

    #[test]
    fn only_other_relations() {
        let doc = parse_interchange(&json!({
            "doc_id": "d", "edus": edus(3),
            "nodes": [node(0, 2, 1, "Joint", "nn"), node(0, 1, 0, "Contrast", "ns")]
        }))
        .unwrap();
        assert!(extract_explanatory_pairs(&doc.tree, &doc.edus).unwrap().pairs.is_empty());
    }

    #[test]
    fn multinuclear_explanatory_is_tallied() {
        let doc = parse_interchange(&json!({
            "doc_id": "d", "edus": edus(2),
            "nodes": [node(0, 1, 0, "Comparison", "nucleus-nucleus")]
        }))
        .unwrap();
        let ex = extract_explanatory_pairs(&doc.tree, &doc.edus).unwrap();
        assert!(ex.pairs.is_empty());
        assert_eq!(ex.skipped_multinuclear, 1);
    }

    #[test]
    fn span_head_follows_nucleus() {
        // ((0 <-Reason- 1) -Elaboration-> (2 nn 3)) with SN root: satellite is 0..=1.
        let doc = parse_interchange(&json!({
            "doc_id": "d", "edus": edus(4),
            "nodes": [
                node(0, 3, 1, "Background", "satellite-nucleus"),
                node(0, 1, 0, "Reason", "satellite-nucleus"),
                node(2, 3, 2, "Sequence", "nucleus-nucleus"),
            ]
        }))
        .unwrap();
        let ex = extract_explanatory_pairs(&doc.tree, &doc.edus).unwrap();
        let got: Vec<_> = ex.pairs.iter().map(|p| (p.explanatory_edu, p.target_edu, p.category)).collect();
        assert_eq!(
            got,
            vec![
                (0, 1, RelationCategory::Explanation),
                (1, 2, RelationCategory::Background),
            ]
        );
    }
}
