use std::fmt::Write as _;

use hsgd_core::classifier::{Predicate, Scale};
use hsgd_core::diagram::ArcKind;
use hsgd_core::hierarchy::Quorum;
use hsgd_core::planner::NodeRule;
use hsgd_core::scenario::SymbolClass;

use super::ModelDocument;

/// Canonical source text. Parsing the result yields an equal document, and
/// equal documents always produce identical text.
pub fn write_model(doc: &ModelDocument) -> String {
    let mut out = String::new();
    let w = &mut out;
    line(w, format_args!("model {}", doc.name));
    match doc.default_quorum {
        Quorum::All => line(w, format_args!("quorum all")),
        Quorum::AtLeast(k) => line(w, format_args!("quorum {k}")),
    }

    for d in &doc.diagrams {
        blank(w);
        line(w, format_args!("diagram {}", d.id));
        line(w, format_args!("  boundaries {}", joined(d.partition.boundaries.iter())));
        line(w, format_args!("  population {}", d.population));
        for s in &d.states {
            let dwell = s.dwell_limit.map(|k| format!(" dwell {k}")).unwrap_or_default();
            line(w, format_args!("  state {} rank {} level {}{dwell}", s.id, s.rank, s.level));
        }
        line(w, format_args!("  initial {}", d.initial));
        line(w, format_args!("  final {}", d.final_state));
        for a in &d.arcs {
            match a.kind {
                ArcKind::Forward => {
                    line(w, format_args!("  arc {} forward {} {} theta {}", a.id, a.source, a.target, a.theta))
                }
                ArcKind::Backstep => line(w, format_args!("  arc {} backstep {} {}", a.id, a.source, a.target)),
            }
        }
        for (i, mu) in d.mu.iter().enumerate() {
            let parts: Vec<String> = mu.iter().map(|(s, p)| format!("{s}={p}")).collect();
            if parts.is_empty() {
                // an empty distribution has no textual form; validation rejects it anyway
                continue;
            }
            line(w, format_args!("  mu {i} {}", parts.join(" ")));
        }
        line(w, format_args!("end"));
    }

    for (id, c) in &doc.classifiers {
        blank(w);
        line(w, format_args!("scale {id} dim {}", c.dimension));
        scale_body(w, &c.root);
        line(w, format_args!("end"));
        for (parent, scale) in &c.refinements {
            blank(w);
            line(w, format_args!("scale {id} refines {parent}"));
            scale_body(w, scale);
            line(w, format_args!("end"));
        }
    }

    if !doc.topology.edges.is_empty() {
        blank(w);
        line(w, format_args!("topology"));
        for (parent, child) in &doc.topology.edges {
            line(w, format_args!("  {parent} {child}"));
        }
        line(w, format_args!("end"));
    }

    for (parent, map) in &doc.aggregations {
        blank(w);
        line(w, format_args!("aggregation {parent} children {}", joined(map.children.iter())));
        for b in &map.blocks {
            let combos: Vec<String> =
                b.combos.iter().map(|c| c.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(",")).collect();
            line(w, format_args!("  block {} {}", b.parent_state, combos.join(" ")));
        }
        line(w, format_args!("end"));
    }

    if !doc.couplings.is_empty() {
        blank(w);
        line(w, format_args!("coupling"));
        for c in &doc.couplings {
            let quorum = c.quorum.map(|k| format!(" quorum {k}")).unwrap_or_default();
            line(w, format_args!("  {} <- {}{quorum}", c.parent, joined(c.children.iter())));
        }
        line(w, format_args!("end"));
    }

    if !doc.symbols.is_empty() {
        blank(w);
        line(w, format_args!("symbols"));
        for s in &doc.symbols {
            let class = match s.class {
                SymbolClass::Individual => "individual",
                SymbolClass::General => "general",
            };
            line(w, format_args!("  {class} {} {} cost {}", s.id, s.arc, s.cost));
        }
        line(w, format_args!("end"));
    }

    for (diagram, rules) in &doc.rules {
        blank(w);
        line(w, format_args!("rules {diagram}"));
        for r in rules {
            let forbid = r.forbidden.as_ref().map(|s| format!(" forbid {s}")).unwrap_or_default();
            line(
                w,
                format_args!(
                    "  rule {} {} -> {} control {} resource {} time {}{forbid}",
                    r.id, r.from, r.to, r.control, r.resource, r.duration
                ),
            );
        }
        line(w, format_args!("end"));
    }

    if let Some(tree) = &doc.objectives {
        blank(w);
        line(w, format_args!("objectives {}", tree.root));
        for n in &tree.nodes {
            match (&n.goal, n.children.is_empty()) {
                (Some(g), true) => line(w, format_args!("  goal {} {} {}", n.id, g.diagram, g.state)),
                _ => {
                    let rule = match n.rule {
                        NodeRule::All => "all".to_owned(),
                        NodeRule::Any => "any".to_owned(),
                        NodeRule::KOfN(k) => format!("at-least {k}"),
                    };
                    line(w, format_args!("  node {} {rule} {}", n.id, joined(n.children.iter())));
                }
            }
        }
        line(w, format_args!("end"));
    }

    for s in &doc.scenarios {
        blank(w);
        line(
            w,
            format_args!(
                "scenario {} horizon {} priority {} weights {} {}",
                s.id, s.horizon, s.priority, s.criterion.rank_weight, s.criterion.cost_weight
            ),
        );
        for (tick, symbols) in &s.schedule.0 {
            if !symbols.is_empty() {
                line(w, format_args!("  at {tick} {}", joined(symbols.iter())));
            }
        }
        for g in &s.guards {
            line(w, format_args!("  guard {} {} from {} until {}", g.diagram, g.state, g.from, g.until));
        }
        if let Some(p) = &s.partial {
            for sup in &p.supports {
                let within = sup.diagram.as_ref().map(|d| format!(" in {d}")).unwrap_or_default();
                line(w, format_args!("  support {} by {}{within}", sup.state, sup.deadline));
            }
            if let Some(r) = p.resource_budget {
                line(w, format_args!("  budget resource {r}"));
            }
            if let Some(t) = p.time_budget {
                line(w, format_args!("  budget time {t}"));
            }
        }
        line(w, format_args!("end"));
    }
    out
}

fn line(out: &mut String, args: std::fmt::Arguments<'_>) {
    out.write_fmt(args).expect("writing to a string");
    out.push('\n');
}

fn blank(out: &mut String) {
    out.push('\n');
}

fn joined<T: std::fmt::Display>(items: impl Iterator<Item = T>) -> String {
    items.map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

fn predicate(p: &Predicate<f64>) -> String {
    let bound = |b: Option<f64>| b.map(|v| v.to_string()).unwrap_or_default();
    format!("p{}=[{},{})", p.param, bound(p.lower), bound(p.upper))
}

fn scale_body(out: &mut String, scale: &Scale<f64>) {
    for e in &scale.entries {
        let preds: Vec<String> = e.proposition.predicates.iter().map(predicate).collect();
        let tail = if preds.is_empty() { String::new() } else { format!(" {}", preds.join(" ")) };
        line(out, format_args!("  prop {} {}{tail}", e.proposition.id, e.state));
    }
}
