use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use hsgd_core::classifier::{Classifier, Predicate, Proposition, Scale, ScaleEntry};
use hsgd_core::diagram::{Arc, CanonicalDiagram, Distribution, StateNode, TimePartition};
use hsgd_core::hierarchy::{AggregationBlock, AggregationMap, CoupledArc, Quorum};
use hsgd_core::planner::{Goal, NodeRule, ObjectiveNode, ObjectivesTree, TransitionRule};
use hsgd_core::scenario::{
    BackstepGuard, ControlSymbol, CriterionConfig, PartialCriterion, SupportState, SymbolClass, TimeDiagram,
};
use hsgd_core::{DiagramId, PropositionId, StateId, SymbolId, Tick};

use super::{Diagnostic, Location, ModelDocument, ScenarioSpec};

const BLOCKS: [&str; 9] =
    ["diagram", "scale", "topology", "aggregation", "coupling", "symbols", "rules", "objectives", "scenario"];

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    at: Location,
}

struct Line<'a> {
    tokens: Vec<Token<'a>>,
}

impl<'a> Line<'a> {
    fn head(&self) -> &'a str {
        self.tokens[0].text
    }

    fn at(&self) -> Location {
        self.tokens[0].at
    }
}

fn lex(text: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = Vec::new();
        let mut start: Option<(usize, usize)> = None;
        for (col, (byte, ch)) in content.char_indices().enumerate() {
            match (ch.is_whitespace(), start) {
                (false, None) => start = Some((byte, col)),
                (true, Some((b, c))) => {
                    tokens.push(Token { text: &content[b..byte], at: Location { line: i + 1, column: c + 1 } });
                    start = None;
                }
                _ => {}
            }
        }
        if let Some((b, c)) = start {
            tokens.push(Token { text: &content[b..], at: Location { line: i + 1, column: c + 1 } });
        }
        if !tokens.is_empty() {
            out.push(Line { tokens });
        }
    }
    out
}

enum RefKind {
    Diagram,
    State(DiagramId),
    /// A state of any diagram.
    AnyState,
    Arc,
    Symbol,
}

struct Ref {
    kind: RefKind,
    name: String,
    at: Location,
}

struct Refinement {
    diagram: DiagramId,
    parent: PropositionId,
    scale: Scale<f64>,
    at: Location,
}

struct Parser {
    doc: ModelDocument,
    diags: Vec<Diagnostic>,
    refs: Vec<Ref>,
    refinements: Vec<Refinement>,
    named: bool,
    quorum_set: bool,
}

/// Parses model source. Any diagnostic rejects the whole document.
pub fn parse_model(text: &str) -> Result<ModelDocument, Vec<Diagnostic>> {
    let lines = lex(text);
    if lines.is_empty() {
        return Err(vec![Diagnostic::new("E_EMPTY", Location::START, "no declarations")]);
    }
    let mut p = Parser {
        doc: ModelDocument::empty("model"),
        diags: Vec::new(),
        refs: Vec::new(),
        refinements: Vec::new(),
        named: false,
        quorum_set: false,
    };
    let mut i = 0;
    while i < lines.len() {
        let line = &lines[i];
        let head = line.head();
        if BLOCKS.contains(&head) {
            let mut j = i + 1;
            while j < lines.len() && lines[j].head() != "end" && !starts_top_level(&lines[j]) {
                j += 1;
            }
            let body = &lines[i + 1..j];
            if j < lines.len() && lines[j].head() == "end" {
                if let Some(extra) = lines[j].tokens.get(1) {
                    p.err("E_SYNTAX", extra.at, "unexpected text after `end`");
                }
                p.block(line, body);
                i = j + 1;
            } else {
                p.err("E_UNCLOSED", line.at(), format!("`{head}` block is not closed by `end`"));
                p.block(line, body);
                i = j;
            }
            continue;
        }
        match head {
            "model" => p.model_directive(line),
            "quorum" => p.quorum_directive(line),
            "end" => p.err("E_SYNTAX", line.at(), "`end` outside a block"),
            other => p.err("E_UNKNOWN_BLOCK", line.at(), format!("unknown block `{other}`")),
        }
        i += 1;
    }
    p.resolve();
    if p.diags.is_empty() {
        Ok(p.doc)
    } else {
        p.diags.sort_by_key(|d| (d.line, d.column));
        Err(p.diags)
    }
}

fn starts_top_level(line: &Line<'_>) -> bool {
    let h = line.head();
    BLOCKS.contains(&h) || h == "model" || h == "quorum"
}

/// `p<i>=[lo,hi)` with either bound optionally empty.
fn predicate(text: &str) -> Option<Predicate<f64>> {
    let rest = text.strip_prefix('p')?;
    let (index, range) = rest.split_once("=[")?;
    let range = range.strip_suffix(')')?;
    let (lo, hi) = range.split_once(',')?;
    let bound = |s: &str| -> Option<Option<f64>> {
        if s.is_empty() {
            Some(None)
        } else {
            s.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some)
        }
    };
    Some(Predicate { param: index.parse().ok()?, lower: bound(lo)?, upper: bound(hi)? })
}

impl Parser {
    fn err(&mut self, code: &'static str, at: Location, message: impl Into<String>) {
        self.diags.push(Diagnostic::new(code, at, message));
    }

    /// Records a declaration; a second one with the same key is a duplicate.
    fn declare(&mut self, key: String, at: Location) -> bool {
        if let Some(first) = self.doc.locations.get(&key) {
            self.err("E_DUPLICATE", at, format!("`{key}` already declared at line {}", first.line));
            return false;
        }
        self.doc.locations.0.insert(key, at);
        true
    }

    fn refer(&mut self, kind: RefKind, tok: Token<'_>) {
        self.refs.push(Ref { kind, name: tok.text.to_owned(), at: tok.at });
    }

    fn num<T: FromStr>(&mut self, tok: Token<'_>, what: &str) -> Option<T> {
        match tok.text.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.err("E_NUMBER", tok.at, format!("expected {what}, found `{}`", tok.text));
                None
            }
        }
    }

    fn real(&mut self, tok: Token<'_>) -> Option<f64> {
        match tok.text.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                self.err("E_NUMBER", tok.at, format!("expected a finite number, found `{}`", tok.text));
                None
            }
        }
    }

    fn arity(&mut self, line: &Line<'_>, min: usize, max: usize, shape: &str) -> bool {
        let n = line.tokens.len();
        if n < min || n > max {
            let at = line.tokens.get(max).map_or(line.at(), |t| t.at);
            self.err("E_SYNTAX", at, format!("expected `{shape}`"));
            return false;
        }
        true
    }

    /// `key value` pairs after position `from`. Unknown or repeated keys
    /// and dangling keys are diagnosed.
    fn options<'a>(&mut self, line: &Line<'a>, from: usize, allowed: &[&str]) -> Option<BTreeMap<&'a str, Token<'a>>> {
        let mut out = BTreeMap::new();
        let mut ok = true;
        let mut k = from;
        while k < line.tokens.len() {
            let key = line.tokens[k];
            if !allowed.contains(&key.text) {
                self.err(
                    "E_SYNTAX",
                    key.at,
                    format!("unexpected `{}`, expected one of {}", key.text, allowed.join(", ")),
                );
                return None;
            }
            let Some(value) = line.tokens.get(k + 1) else {
                self.err("E_SYNTAX", key.at, format!("`{}` needs a value", key.text));
                return None;
            };
            if out.insert(key.text, *value).is_some() {
                self.err("E_DUPLICATE", key.at, format!("`{}` given twice", key.text));
                ok = false;
            }
            k += 2;
        }
        ok.then_some(out)
    }

    fn model_directive(&mut self, line: &Line<'_>) {
        if !self.arity(line, 2, 2, "model <name>") {
            return;
        }
        if self.named {
            self.err("E_DUPLICATE", line.at(), "model name given twice");
            return;
        }
        self.named = true;
        self.doc.name = line.tokens[1].text.to_owned();
        self.doc.locations.0.insert("model".into(), line.at());
    }

    fn quorum_directive(&mut self, line: &Line<'_>) {
        if !self.arity(line, 2, 2, "quorum all|<k>") {
            return;
        }
        if self.quorum_set {
            self.err("E_DUPLICATE", line.at(), "default quorum given twice");
            return;
        }
        self.quorum_set = true;
        let tok = line.tokens[1];
        if tok.text == "all" {
            self.doc.default_quorum = Quorum::All;
        } else if let Some(k) = self.num(tok, "`all` or a count") {
            self.doc.default_quorum = Quorum::AtLeast(k);
        }
    }

    fn block(&mut self, header: &Line<'_>, body: &[Line<'_>]) {
        match header.head() {
            "diagram" => self.diagram(header, body),
            "scale" => self.scale(header, body),
            "topology" => self.topology(header, body),
            "aggregation" => self.aggregation(header, body),
            "coupling" => self.coupling(header, body),
            "symbols" => self.symbols(header, body),
            "rules" => self.rules(header, body),
            "objectives" => self.objectives(header, body),
            "scenario" => self.scenario(header, body),
            _ => unreachable!("caller matched a block keyword"),
        }
    }

    fn no_header_args(&mut self, header: &Line<'_>) {
        if let Some(extra) = header.tokens.get(1) {
            self.err("E_SYNTAX", extra.at, format!("`{}` takes no arguments", header.head()));
        }
    }

    fn diagram(&mut self, header: &Line<'_>, body: &[Line<'_>]) {
        if !self.arity(header, 2, 2, "diagram <id>") {
            return;
        }
        let id = header.tokens[1].text;
        self.declare(format!("diagram:{id}"), header.tokens[1].at);
        let mut boundaries: Option<Vec<Tick>> = None;
        let mut population: Option<u64> = None;
        let mut states: Vec<StateNode> = Vec::new();
        let mut arcs: Vec<Arc> = Vec::new();
        let mut initial: Option<Token<'_>> = None;
        let mut final_state: Option<Token<'_>> = None;
        let mut mu: BTreeMap<usize, Distribution<f64>> = BTreeMap::new();
        let mut local: Vec<Token<'_>> = Vec::new();

        for line in body {
            let t = &line.tokens;
            match line.head() {
                "boundaries" => {
                    if !self.arity(line, 2, usize::MAX, "boundaries <tick>...") || self.once(&boundaries, line) {
                        continue;
                    }
                    let ticks: Vec<Option<Tick>> = t[1..].iter().map(|&tok| self.num(tok, "a tick")).collect();
                    boundaries = ticks.into_iter().collect();
                }
                "population" => {
                    if self.arity(line, 2, 2, "population <n>") && !self.once(&population, line) {
                        population = self.num(t[1], "a population");
                    }
                }
                "state" => {
                    if !self.arity(line, 2, 8, "state <id> rank <r> level <l> [dwell <k>]") {
                        continue;
                    }
                    let Some(opts) = self.options(line, 2, &["rank", "level", "dwell"]) else { continue };
                    let (Some(&rank), Some(&level)) = (opts.get("rank"), opts.get("level")) else {
                        self.err("E_MISSING", line.at(), "state needs `rank` and `level`");
                        continue;
                    };
                    let (Some(rank), Some(level)) = (self.num(rank, "a rank"), self.num(level, "a level")) else {
                        continue;
                    };
                    let dwell = match opts.get("dwell") {
                        Some(&d) => match self.num(d, "a dwell limit") {
                            Some(v) => Some(v),
                            None => continue,
                        },
                        None => None,
                    };
                    if self.declare(format!("state:{id}/{}", t[1].text), t[1].at) {
                        states.push(StateNode { id: t[1].text.into(), rank, level, dwell_limit: dwell });
                    }
                }
                "initial" | "final" => {
                    if !self.arity(line, 2, 2, "initial|final <state>") {
                        continue;
                    }
                    let slot = if line.head() == "initial" { &mut initial } else { &mut final_state };
                    if slot.is_some() {
                        self.err("E_DUPLICATE", line.at(), format!("`{}` given twice", line.head()));
                        continue;
                    }
                    *slot = Some(t[1]);
                    local.push(t[1]);
                }
                "arc" => {
                    if t.len() < 5 {
                        self.err("E_SYNTAX", line.at(), "expected `arc <id> forward|backstep <source> <target> ...`");
                        continue;
                    }
                    let arc = match t[2].text {
                        "forward" => {
                            if !self.arity(line, 7, 7, "arc <id> forward <source> <target> theta <t>") {
                                continue;
                            }
                            if t[5].text != "theta" {
                                self.err("E_SYNTAX", t[5].at, "expected `theta`");
                                continue;
                            }
                            let Some(theta) = self.num(t[6], "a transit time") else { continue };
                            Arc::forward(t[1].text, t[3].text, t[4].text, theta)
                        }
                        "backstep" => {
                            if !self.arity(line, 5, 5, "arc <id> backstep <source> <target>") {
                                continue;
                            }
                            Arc::backstep(t[1].text, t[3].text, t[4].text)
                        }
                        other => {
                            self.err(
                                "E_SYNTAX",
                                t[2].at,
                                format!("arc kind must be `forward` or `backstep`, found `{other}`"),
                            );
                            continue;
                        }
                    };
                    local.push(t[3]);
                    local.push(t[4]);
                    if self.declare(format!("arc:{}", t[1].text), t[1].at) {
                        arcs.push(arc);
                    }
                }
                "mu" => {
                    if !self.arity(line, 3, usize::MAX, "mu <boundary index> <state>=<fraction>...") {
                        continue;
                    }
                    let Some(index) = self.num::<usize>(t[1], "a boundary index") else { continue };
                    if mu.contains_key(&index) {
                        self.err("E_DUPLICATE", t[1].at, format!("mu {index} given twice"));
                        continue;
                    }
                    let mut dist = BTreeMap::new();
                    for &tok in &t[2..] {
                        let Some((state, p)) = tok.text.split_once('=') else {
                            self.err("E_SYNTAX", tok.at, "expected `<state>=<fraction>`");
                            continue;
                        };
                        let value = Token { text: p, at: tok.at };
                        let Some(p) = self.real(value) else { continue };
                        local.push(Token { text: state, at: tok.at });
                        if dist.insert(StateId::from(state), p).is_some() {
                            self.err("E_DUPLICATE", tok.at, format!("state `{state}` listed twice in mu {index}"));
                        }
                    }
                    mu.insert(index, Distribution(dist));
                }
                other => self.err("E_SYNTAX", line.at(), format!("unexpected `{other}` in diagram block")),
            }
        }

        let declared: BTreeSet<&str> = states.iter().map(|s| s.id.as_str()).collect();
        for tok in &local {
            if !declared.contains(tok.text) {
                self.err("E_UNDEF_STATE", tok.at, format!("state `{}` is not declared in diagram `{id}`", tok.text));
            }
        }
        let mut missing = Vec::new();
        if boundaries.is_none() {
            missing.push("boundaries");
        }
        if population.is_none() {
            missing.push("population");
        }
        if initial.is_none() {
            missing.push("initial");
        }
        if final_state.is_none() {
            missing.push("final");
        }
        if !missing.is_empty() {
            self.err("E_MISSING", header.at(), format!("diagram `{id}` lacks {}", missing.join(", ")));
            return;
        }
        if let Some(gap) = (0..mu.len()).find(|i| !mu.contains_key(i)) {
            self.err("E_MISSING", header.at(), format!("diagram `{id}` has no mu {gap}"));
            return;
        }
        self.doc.diagrams.push(CanonicalDiagram {
            id: id.into(),
            partition: TimePartition { boundaries: boundaries.unwrap_or_default() },
            states,
            arcs,
            initial: initial.map(|t| t.text.into()).unwrap_or_else(|| StateId::from("")),
            final_state: final_state.map(|t| t.text.into()).unwrap_or_else(|| StateId::from("")),
            mu: mu.into_values().collect(),
            population: population.unwrap_or_default(),
        });
    }

    /// Diagnoses a repeated single-valued field.
    fn once<T>(&mut self, slot: &Option<T>, line: &Line<'_>) -> bool {
        if slot.is_some() {
            self.err("E_DUPLICATE", line.at(), format!("`{}` given twice", line.head()));
            return true;
        }
        false
    }

    fn scale(&mut self, header: &Line<'_>, body: &[Line<'_>]) {
        if !self.arity(header, 4, 4, "scale <diagram> dim <n> | scale <diagram> refines <proposition>") {
            return;
        }
        let diagram = DiagramId::from(header.tokens[1].text);
        self.refer(RefKind::Diagram, header.tokens[1]);
        let mut entries = Vec::new();
        for line in body {
            let t = &line.tokens;
            if line.head() != "prop" {
                self.err("E_SYNTAX", line.at(), format!("unexpected `{}` in scale block", line.head()));
                continue;
            }
            if !self.arity(line, 3, usize::MAX, "prop <id> <state> p<i>=[lo,hi)...") {
                continue;
            }
            let mut predicates = Vec::new();
            for tok in &t[3..] {
                match predicate(tok.text) {
                    Some(p) => predicates.push(p),
                    None => self.err("E_SYNTAX", tok.at, format!("expected `p<i>=[lo,hi)`, found `{}`", tok.text)),
                }
            }
            self.declare(format!("prop:{diagram}/{}", t[1].text), t[1].at);
            self.refer(RefKind::State(diagram.clone()), t[2]);
            entries.push(ScaleEntry {
                proposition: Proposition::new(t[1].text, predicates),
                state: t[2].text.into(),
                state_rank: 0,
            });
        }
        let scale = Scale::new(entries);
        let arg = header.tokens[3];
        match header.tokens[2].text {
            "dim" => {
                let Some(dim) = self.num(arg, "a dimension") else { return };
                if self.declare(format!("scale:{diagram}"), header.tokens[1].at) {
                    self.doc.classifiers.insert(diagram, Classifier::single(dim, scale));
                }
            }
            "refines" => {
                self.refinements.push(Refinement { diagram, parent: arg.text.into(), scale, at: arg.at });
            }
            other => self.err("E_SYNTAX", header.tokens[2].at, format!("expected `dim` or `refines`, found `{other}`")),
        }
    }

    fn topology(&mut self, header: &Line<'_>, body: &[Line<'_>]) {
        self.no_header_args(header);
        for line in body {
            if !self.arity(line, 2, usize::MAX, "<parent> <child>...") {
                continue;
            }
            for &tok in &line.tokens {
                self.refer(RefKind::Diagram, tok);
            }
            let parent = line.tokens[0].text;
            for child in &line.tokens[1..] {
                self.doc.topology.edges.push((parent.into(), child.text.into()));
            }
        }
    }

    fn aggregation(&mut self, header: &Line<'_>, body: &[Line<'_>]) {
        if !self.arity(header, 4, usize::MAX, "aggregation <parent> children <child>...") {
            return;
        }
        if header.tokens[2].text != "children" {
            self.err("E_SYNTAX", header.tokens[2].at, "expected `children`");
            return;
        }
        let parent = DiagramId::from(header.tokens[1].text);
        self.refer(RefKind::Diagram, header.tokens[1]);
        let children: Vec<DiagramId> = header.tokens[3..].iter().map(|t| DiagramId::from(t.text)).collect();
        for &tok in &header.tokens[3..] {
            self.refer(RefKind::Diagram, tok);
        }
        let mut map = AggregationMap::new(children.clone());
        for line in body {
            let t = &line.tokens;
            if line.head() != "block" {
                self.err("E_SYNTAX", line.at(), format!("unexpected `{}` in aggregation block", line.head()));
                continue;
            }
            if !self.arity(line, 3, usize::MAX, "block <parent state> <child state>,<child state>...") {
                continue;
            }
            self.refer(RefKind::State(parent.clone()), t[1]);
            let mut combos = Vec::new();
            for tok in &t[2..] {
                let parts: Vec<&str> = tok.text.split(',').collect();
                if parts.len() != children.len() {
                    self.err(
                        "E_SYNTAX",
                        tok.at,
                        format!("combination needs {} states, found {}", children.len(), parts.len()),
                    );
                    continue;
                }
                for (child, part) in children.iter().zip(&parts) {
                    self.refer(RefKind::State(child.clone()), Token { text: part, at: tok.at });
                }
                combos.push(parts.iter().map(|&s| StateId::from(s)).collect());
            }
            map.blocks.push(AggregationBlock { parent_state: t[1].text.into(), combos });
        }
        if self.declare(format!("aggregation:{parent}"), header.tokens[1].at) {
            self.doc.aggregations.insert(parent, map);
        }
    }

    fn coupling(&mut self, header: &Line<'_>, body: &[Line<'_>]) {
        self.no_header_args(header);
        for line in body {
            let t = &line.tokens;
            if t.len() < 3 || t[1].text != "<-" {
                self.err("E_SYNTAX", line.at(), "expected `<parent arc> <- <child arc>... [quorum <k>]`");
                continue;
            }
            let (arcs, quorum) = match t.iter().position(|tok| tok.text == "quorum") {
                Some(q) => {
                    if q + 2 != t.len() {
                        self.err("E_SYNTAX", t[q].at, "`quorum <k>` must end the line");
                        continue;
                    }
                    let Some(k) = self.num(t[q + 1], "a quorum") else { continue };
                    (&t[2..q], Some(k))
                }
                None => (&t[2..], None),
            };
            if arcs.is_empty() {
                self.err("E_SYNTAX", line.at(), "a coupling needs at least one child arc");
                continue;
            }
            self.refer(RefKind::Arc, t[0]);
            for &tok in arcs {
                self.refer(RefKind::Arc, tok);
            }
            self.doc.couplings.push(CoupledArc {
                parent: t[0].text.into(),
                children: arcs.iter().map(|tok| tok.text.into()).collect(),
                quorum,
            });
        }
    }

    fn symbols(&mut self, header: &Line<'_>, body: &[Line<'_>]) {
        self.no_header_args(header);
        for line in body {
            let t = &line.tokens;
            let class = match line.head() {
                "individual" => SymbolClass::Individual,
                "general" => SymbolClass::General,
                other => {
                    self.err(
                        "E_SYNTAX",
                        line.at(),
                        format!("symbol class must be `individual` or `general`, found `{other}`"),
                    );
                    continue;
                }
            };
            if !self.arity(line, 5, 5, "individual|general <id> <arc> cost <c>") {
                continue;
            }
            if t[3].text != "cost" {
                self.err("E_SYNTAX", t[3].at, "expected `cost`");
                continue;
            }
            let Some(cost) = self.real(t[4]) else { continue };
            self.refer(RefKind::Arc, t[2]);
            if self.declare(format!("symbol:{}", t[1].text), t[1].at) {
                self.doc.symbols.push(ControlSymbol { id: t[1].text.into(), class, arc: t[2].text.into(), cost });
            }
        }
    }

    fn rules(&mut self, header: &Line<'_>, body: &[Line<'_>]) {
        if !self.arity(header, 2, 2, "rules <diagram>") {
            return;
        }
        let diagram = DiagramId::from(header.tokens[1].text);
        self.refer(RefKind::Diagram, header.tokens[1]);
        let mut rules = Vec::new();
        for line in body {
            let t = &line.tokens;
            if line.head() != "rule" {
                self.err("E_SYNTAX", line.at(), format!("unexpected `{}` in rules block", line.head()));
                continue;
            }
            let shape = "rule <id> <from> -> <to> control <u> resource <r> time <t> [forbid <state>]";
            if !self.arity(line, 11, 13, shape) {
                continue;
            }
            if t[3].text != "->" {
                self.err("E_SYNTAX", t[3].at, "expected `->`");
                continue;
            }
            let Some(opts) = self.options(line, 5, &["control", "resource", "time", "forbid"]) else { continue };
            let (Some(&control), Some(&resource), Some(&time)) =
                (opts.get("control"), opts.get("resource"), opts.get("time"))
            else {
                self.err("E_MISSING", line.at(), "rule needs `control`, `resource` and `time`");
                continue;
            };
            let (Some(resource), Some(duration)) = (self.real(resource), self.num(time, "a duration")) else {
                continue;
            };
            self.refer(RefKind::State(diagram.clone()), t[2]);
            self.refer(RefKind::State(diagram.clone()), t[4]);
            let forbidden = opts.get("forbid").map(|&tok| {
                self.refer(RefKind::State(diagram.clone()), tok);
                StateId::from(tok.text)
            });
            if self.declare(format!("rule:{}", t[1].text), t[1].at) {
                rules.push(TransitionRule {
                    id: t[1].text.into(),
                    from: t[2].text.into(),
                    to: t[4].text.into(),
                    forbidden,
                    control: control.text.into(),
                    resource,
                    duration,
                });
            }
        }
        if self.declare(format!("rules:{diagram}"), header.tokens[1].at) {
            self.doc.rules.insert(diagram, rules);
        }
    }

    fn objectives(&mut self, header: &Line<'_>, body: &[Line<'_>]) {
        if !self.arity(header, 2, 2, "objectives <root>") {
            return;
        }
        if !self.declare("objectives".into(), header.at()) {
            return;
        }
        let mut nodes = Vec::new();
        for line in body {
            let t = &line.tokens;
            match line.head() {
                "goal" => {
                    if !self.arity(line, 4, 4, "goal <id> <diagram> <state>") {
                        continue;
                    }
                    self.refer(RefKind::Diagram, t[2]);
                    self.refer(RefKind::State(t[2].text.into()), t[3]);
                    if self.declare(format!("node:{}", t[1].text), t[1].at) {
                        nodes.push(ObjectiveNode {
                            id: t[1].text.into(),
                            goal: Some(Goal { diagram: t[2].text.into(), state: t[3].text.into() }),
                            rule: NodeRule::All,
                            children: Vec::new(),
                        });
                    }
                }
                "node" => {
                    if !self.arity(line, 4, usize::MAX, "node <id> all|any|at-least <k> <child>...") {
                        continue;
                    }
                    let (rule, first) = match t[2].text {
                        "all" => (NodeRule::All, 3),
                        "any" => (NodeRule::Any, 3),
                        "at-least" => {
                            let Some(k) = self.num(t[3], "a count") else { continue };
                            (NodeRule::KOfN(k), 4)
                        }
                        other => {
                            self.err(
                                "E_SYNTAX",
                                t[2].at,
                                format!("expected `all`, `any` or `at-least`, found `{other}`"),
                            );
                            continue;
                        }
                    };
                    if first >= t.len() {
                        self.err("E_SYNTAX", line.at(), "an internal node needs children");
                        continue;
                    }
                    if self.declare(format!("node:{}", t[1].text), t[1].at) {
                        nodes.push(ObjectiveNode {
                            id: t[1].text.into(),
                            goal: None,
                            rule,
                            children: t[first..].iter().map(|tok| tok.text.into()).collect(),
                        });
                    }
                }
                other => self.err("E_SYNTAX", line.at(), format!("unexpected `{other}` in objectives block")),
            }
        }
        self.doc.objectives = Some(ObjectivesTree { root: header.tokens[1].text.into(), nodes });
    }

    fn scenario(&mut self, header: &Line<'_>, body: &[Line<'_>]) {
        let h = &header.tokens;
        if h.len() < 4 {
            self.err(
                "E_SYNTAX",
                header.at(),
                "expected `scenario <id> horizon <h> [priority <p>] [weights <rank> <cost>]`",
            );
            return;
        }
        let mut horizon = None;
        let mut priority = 1;
        let mut criterion = CriterionConfig::default();
        let mut k = 2;
        while k < h.len() {
            let need = if h[k].text == "weights" { 2 } else { 1 };
            if k + need >= h.len() {
                self.err("E_SYNTAX", h[k].at, format!("`{}` needs {need} value(s)", h[k].text));
                return;
            }
            match h[k].text {
                "horizon" => horizon = self.num(h[k + 1], "a horizon"),
                "priority" => priority = self.num(h[k + 1], "a priority").unwrap_or(priority),
                "weights" => {
                    if let (Some(a), Some(b)) = (self.real(h[k + 1]), self.real(h[k + 2])) {
                        criterion = CriterionConfig { rank_weight: a, cost_weight: b };
                    }
                }
                other => {
                    self.err(
                        "E_SYNTAX",
                        h[k].at,
                        format!("unexpected `{other}`, expected horizon, priority or weights"),
                    );
                    return;
                }
            }
            k += need + 1;
        }
        let Some(horizon) = horizon else {
            self.err("E_MISSING", header.at(), "scenario needs `horizon`");
            return;
        };
        let mut schedule = TimeDiagram::new();
        let mut guards = Vec::new();
        let mut partial = PartialCriterion::default();
        let mut has_partial = false;
        for line in body {
            let t = &line.tokens;
            match line.head() {
                "at" => {
                    if !self.arity(line, 3, usize::MAX, "at <tick> <symbol>...") {
                        continue;
                    }
                    let Some(tick) = self.num(t[1], "a tick") else { continue };
                    for &tok in &t[2..] {
                        self.refer(RefKind::Symbol, tok);
                    }
                    schedule.add(tick, t[2..].iter().map(|tok| SymbolId::from(tok.text)));
                }
                "guard" => {
                    if !self.arity(line, 7, 7, "guard <diagram> <state> from <t> until <t>") {
                        continue;
                    }
                    let Some(opts) = self.options(line, 3, &["from", "until"]) else { continue };
                    let (Some(&from), Some(&until)) = (opts.get("from"), opts.get("until")) else {
                        self.err("E_MISSING", line.at(), "guard needs `from` and `until`");
                        continue;
                    };
                    let (Some(from), Some(until)) = (self.num(from, "a tick"), self.num(until, "a tick")) else {
                        continue;
                    };
                    self.refer(RefKind::Diagram, t[1]);
                    self.refer(RefKind::State(t[1].text.into()), t[2]);
                    guards.push(BackstepGuard { diagram: t[1].text.into(), state: t[2].text.into(), from, until });
                }
                "support" => {
                    if !self.arity(line, 4, 6, "support <state> by <deadline> [in <diagram>]") {
                        continue;
                    }
                    let Some(opts) = self.options(line, 2, &["by", "in"]) else { continue };
                    let Some(&by) = opts.get("by") else {
                        self.err("E_MISSING", line.at(), "support needs `by`");
                        continue;
                    };
                    let Some(deadline) = self.num(by, "a deadline") else { continue };
                    let diagram = opts.get("in").map(|&tok| {
                        self.refer(RefKind::Diagram, tok);
                        self.refer(RefKind::State(tok.text.into()), t[1]);
                        DiagramId::from(tok.text)
                    });
                    if diagram.is_none() {
                        self.refer(RefKind::AnyState, t[1]);
                    }
                    partial.supports.push(SupportState { diagram, state: t[1].text.into(), deadline });
                    has_partial = true;
                }
                "budget" => {
                    if !self.arity(line, 3, 3, "budget resource <r> | budget time <t>") {
                        continue;
                    }
                    match t[1].text {
                        "resource" if partial.resource_budget.is_none() => partial.resource_budget = self.real(t[2]),
                        "time" if partial.time_budget.is_none() => partial.time_budget = self.num(t[2], "a tick"),
                        "resource" | "time" => {
                            self.err("E_DUPLICATE", t[1].at, format!("`budget {}` given twice", t[1].text))
                        }
                        other => {
                            self.err("E_SYNTAX", t[1].at, format!("expected `resource` or `time`, found `{other}`"))
                        }
                    }
                    has_partial = true;
                }
                other => self.err("E_SYNTAX", line.at(), format!("unexpected `{other}` in scenario block")),
            }
        }
        if self.declare(format!("scenario:{}", h[1].text), h[1].at) {
            self.doc.scenarios.push(ScenarioSpec {
                id: h[1].text.into(),
                horizon,
                priority,
                criterion,
                schedule,
                guards,
                partial: has_partial.then_some(partial),
            });
        }
    }

    /// Checks cross-block references and fills in what depends on them.
    fn resolve(&mut self) {
        let ranks: BTreeMap<DiagramId, BTreeMap<StateId, u32>> = self
            .doc
            .diagrams
            .iter()
            .map(|d| (d.id.clone(), d.states.iter().map(|s| (s.id.clone(), s.rank)).collect()))
            .collect();
        let arcs: BTreeSet<&str> =
            self.doc.diagrams.iter().flat_map(|d| d.arcs.iter().map(|a| a.id.as_str())).collect();
        let symbols: BTreeSet<&str> = self.doc.symbols.iter().map(|s| s.id.as_str()).collect();
        let mut found = Vec::new();
        for r in &self.refs {
            let missing = match &r.kind {
                RefKind::Diagram => (!ranks.contains_key(r.name.as_str()))
                    .then(|| ("E_UNDEF_DIAGRAM", format!("diagram `{}` is not declared", r.name))),
                // an undeclared diagram is reported by its own reference
                RefKind::State(d) => ranks
                    .get(d)
                    .filter(|states| !states.contains_key(r.name.as_str()))
                    .map(|_| ("E_UNDEF_STATE", format!("state `{}` is not declared in diagram `{d}`", r.name))),
                RefKind::AnyState => (!ranks.values().any(|states| states.contains_key(r.name.as_str())))
                    .then(|| ("E_UNDEF_STATE", format!("state `{}` is not declared in any diagram", r.name))),
                RefKind::Arc => (!arcs.contains(r.name.as_str()))
                    .then(|| ("E_UNDEF_ARC", format!("arc `{}` is not declared", r.name))),
                RefKind::Symbol => (!symbols.contains(r.name.as_str()))
                    .then(|| ("E_UNDEF_SYMBOL", format!("symbol `{}` is not declared", r.name))),
            };
            if let Some((code, message)) = missing {
                found.push(Diagnostic::new(code, r.at, message));
            }
        }
        self.diags.extend(found);

        let rank_of = |d: &DiagramId, s: &StateId| ranks.get(d).and_then(|m| m.get(s)).copied().unwrap_or(0);
        for (id, c) in self.doc.classifiers.iter_mut() {
            for e in &mut c.root.entries {
                e.state_rank = rank_of(id, &e.state);
            }
        }
        let mut attached = Vec::new();
        for mut refinement in std::mem::take(&mut self.refinements) {
            let Some(c) = self.doc.classifiers.get_mut(&refinement.diagram) else {
                self.diags.push(Diagnostic::new(
                    "E_UNDEF_PROP",
                    refinement.at,
                    format!("diagram `{}` has no root scale to refine", refinement.diagram),
                ));
                continue;
            };
            for e in &mut refinement.scale.entries {
                e.state_rank = rank_of(&refinement.diagram, &e.state);
            }
            if c.refinements.contains_key(&refinement.parent) {
                self.diags.push(Diagnostic::new(
                    "E_DUPLICATE",
                    refinement.at,
                    format!("proposition `{}` is refined twice", refinement.parent),
                ));
                continue;
            }
            c.refinements.insert(refinement.parent.clone(), refinement.scale);
            attached.push((refinement.diagram, refinement.parent, refinement.at));
        }
        for (diagram, parent, at) in attached {
            let c = &self.doc.classifiers[&diagram];
            if !c.entries().any(|e| e.proposition.id == parent) {
                let message = format!("proposition `{parent}` is not declared for `{diagram}`");
                self.diags.push(Diagnostic::new("E_UNDEF_PROP", at, message));
            }
        }
    }
}
