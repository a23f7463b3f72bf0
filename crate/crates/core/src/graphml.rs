//! Minimal GraphML writer for undirected attributed graphs.

use std::io::{self, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrType {
    String,
    Double,
    Int,
    Boolean,
}

impl AttrType {
    fn as_str(self) -> &'static str {
        match self {
            AttrType::String => "string",
            AttrType::Double => "double",
            AttrType::Int => "int",
            AttrType::Boolean => "boolean",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttrValue {
    String(String),
    Double(f64),
    Int(i64),
    Boolean(bool),
}

impl AttrValue {
    fn render(&self) -> String {
        match self {
            AttrValue::String(s) => escape(s),
            AttrValue::Double(v) => v.to_string(),
            AttrValue::Int(v) => v.to_string(),
            AttrValue::Boolean(v) => v.to_string(),
        }
    }
}

#[derive(Debug, Default)]
pub struct GraphMlDocument {
    node_keys: Vec<(String, AttrType)>,
    edge_keys: Vec<(String, AttrType)>,
    nodes: Vec<(String, Vec<AttrValue>)>,
    edges: Vec<(String, String, Vec<AttrValue>)>,
}

impl GraphMlDocument {
    pub fn new(node_keys: &[(&str, AttrType)], edge_keys: &[(&str, AttrType)]) -> Self {
        GraphMlDocument {
            node_keys: node_keys.iter().map(|(n, t)| (n.to_string(), *t)).collect(),
            edge_keys: edge_keys.iter().map(|(n, t)| (n.to_string(), *t)).collect(),
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    /// `attrs` must follow the node key order.
    pub fn add_node(&mut self, id: impl Into<String>, attrs: Vec<AttrValue>) {
        debug_assert_eq!(attrs.len(), self.node_keys.len());
        self.nodes.push((id.into(), attrs));
    }

    pub fn add_edge(&mut self, source: impl Into<String>, target: impl Into<String>, attrs: Vec<AttrValue>) {
        debug_assert_eq!(attrs.len(), self.edge_keys.len());
        self.edges.push((source.into(), target.into(), attrs));
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
        writeln!(
            out,
            r#"<graphml xmlns="http://graphml.graphdrawing.org/xmlns" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" xsi:schemaLocation="http://graphml.graphdrawing.org/xmlns http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd">"#
        )?;
        for (i, (name, ty)) in self.node_keys.iter().enumerate() {
            writeln!(
                out,
                r#"  <key id="n{i}" for="node" attr.name="{}" attr.type="{}"/>"#,
                escape(name),
                ty.as_str()
            )?;
        }
        for (i, (name, ty)) in self.edge_keys.iter().enumerate() {
            writeln!(
                out,
                r#"  <key id="e{i}" for="edge" attr.name="{}" attr.type="{}"/>"#,
                escape(name),
                ty.as_str()
            )?;
        }
        writeln!(out, r#"  <graph id="G" edgedefault="undirected">"#)?;
        for (id, attrs) in &self.nodes {
            writeln!(out, r#"    <node id="{}">"#, escape(id))?;
            for (i, a) in attrs.iter().enumerate() {
                writeln!(out, r#"      <data key="n{i}">{}</data>"#, a.render())?;
            }
            writeln!(out, "    </node>")?;
        }
        for (s, t, attrs) in &self.edges {
            writeln!(out, r#"    <edge source="{}" target="{}">"#, escape(s), escape(t))?;
            for (i, a) in attrs.iter().enumerate() {
                writeln!(out, r#"      <data key="e{i}">{}</data>"#, a.render())?;
            }
            writeln!(out, "    </edge>")?;
        }
        writeln!(out, "  </graph>")?;
        writeln!(out, "</graphml>")
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}
