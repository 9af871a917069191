use std::collections::BTreeSet;
use std::fmt::Write;

use super::{BayesianNetwork, Role};

/// Rendering options for [`to_dot`].
#[derive(Clone, Debug, Default)]
pub struct DotOptions {
    pub graph_name: String,
    /// Node drawn with a double circle; roles are computed relative to it.
    pub target: Option<usize>,
    /// Nodes highlighted in red (e.g. sensitive attributes).
    pub highlight: BTreeSet<usize>,
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::Target => "target",
        Role::Parent => "parent",
        Role::Child => "child",
        Role::Spouse => "spouse",
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering. Spouse → child edges are dashed.
pub fn to_dot(bn: &BayesianNetwork, opts: &DotOptions) -> String {
    let dag = bn.dag();
    let roles = opts
        .target
        .map(|t| dag.roles(t))
        .unwrap_or_else(|| vec![None; bn.n_nodes()]);
    let name = if opts.graph_name.is_empty() {
        "network"
    } else {
        &opts.graph_name
    };
    let mut out = String::new();
    writeln!(out, "digraph \"{}\" {{", escape(name)).unwrap();
    writeln!(out, "  rankdir=TB;").unwrap();
    writeln!(out, "  node [shape=ellipse, fontname=\"Helvetica\"];").unwrap();
    for (v, var) in bn.variables().iter().enumerate() {
        let mut attrs = Vec::new();
        match roles[v] {
            Some(Role::Target) => {
                attrs.push(format!("label=\"{}\"", escape(var.name())));
                attrs.push("shape=doublecircle".into());
                attrs.push("role=\"target\"".into());
            }
            Some(role) => {
                attrs.push(format!(
                    "label=\"{}\\n({})\"",
                    escape(var.name()),
                    role_name(role)
                ));
                attrs.push(format!("role=\"{}\"", role_name(role)));
            }
            None => attrs.push(format!("label=\"{}\"", escape(var.name()))),
        }
        if opts.highlight.contains(&v) {
            attrs.push("color=red".into());
            attrs.push("penwidth=2".into());
            attrs.push("sensitive=\"true\"".into());
        }
        writeln!(out, "  n{v} [{}];", attrs.join(", ")).unwrap();
    }
    for (p, c) in dag.edges() {
        let dashed = roles[p] == Some(Role::Spouse) && roles[c] == Some(Role::Child);
        if dashed {
            writeln!(out, "  n{p} -> n{c} [style=dashed];").unwrap();
        } else {
            writeln!(out, "  n{p} -> n{c};").unwrap();
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::oracle::random_network;

    #[test]
    fn target_and_spouse_styling() {
        let bn = random_network(6, 3, 0.6, (0.1, 0.9), 2);
        let t = (0..6).find(|&v| !bn.dag().children(v).is_empty()).unwrap();
        let dot = to_dot(
            &bn,
            &DotOptions {
                target: Some(t),
                ..Default::default()
            },
        );
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains(&format!("n{t} [label=\"X{t}\", shape=doublecircle")));
        assert_eq!(dot.matches("->").count(), bn.dag().n_edges());
    }
}
