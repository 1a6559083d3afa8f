//! The XML program-specification format.
//!
//! Parsing is two-phase: a small element tree is read with `quick-xml`, then a
//! checker walks it, collecting every structural and semantic problem with its
//! location before any model is handed out. Serialization writes one canonical
//! form (fixed attribute order, two-space indent, LF endings), so
//! `serialize(parse(serialize(parse(x))))` equals `serialize(parse(x))`.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use indexmap::IndexMap;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::Serialize;
use thiserror::Error;

use crate::model::{
    first_non_xml_char, validate_value, Choice, ModelError, OptionDef, OptionGroup, OptionKind,
    OptionValue, ProgramSpec, Range, RenderStyle, SessionState,
};

pub const FORMAT_VERSION: &str = "1.0";

/// A parsed spec file: the program description plus any saved option values.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecDocument {
    pub format_version: String,
    pub spec: ProgramSpec,
    /// Saved raw values keyed by option id, in document order.
    pub embedded_values: IndexMap<String, Vec<String>>,
}

impl SpecDocument {
    pub fn new(spec: ProgramSpec) -> Self {
        SpecDocument {
            format_version: FORMAT_VERSION.to_string(),
            spec,
            embedded_values: IndexMap::new(),
        }
    }

    /// A session with the embedded values applied.
    pub fn session(&self, working_dir: impl Into<PathBuf>) -> Result<SessionState, ModelError> {
        let fresh = SessionState::new(self.spec.clone(), working_dir)?;
        fresh.apply_values(
            self.embedded_values
                .iter()
                .flat_map(|(id, raws)| raws.iter().map(move |r| (id.as_str(), r.as_str()))),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    /// Element path such as `/guiliner/group[2]/option[1]`.
    pub location: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}: {}", self.line, self.column, self.location, self.message)
    }
}

/// Outcome of checking a document. It is loadable iff `errors` is empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.errors {
            writeln!(f, "error: {e}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum XmlError {
    #[error("XML syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("spec document has {count} error(s):\n{report}", count = .0.errors.len(), report = .0)]
    Schema(ValidationReport),
    #[error("session belongs to a different program spec")]
    SpecMismatch,
}

/// Parses and fully validates a spec document.
pub fn parse_spec(xml: &[u8]) -> Result<SpecDocument, XmlError> {
    let (doc, report) = analyze(xml)?;
    match doc {
        Some(doc) if report.is_valid() => Ok(doc),
        _ => Err(XmlError::Schema(report)),
    }
}

/// Lists every problem in the document. Syntax errors become a single error
/// entry.
pub fn validate_document(xml: &[u8]) -> ValidationReport {
    match analyze(xml) {
        Ok((_, report)) => report,
        Err(XmlError::Syntax { line, column, message }) => ValidationReport {
            errors: vec![Issue {
                location: "/".to_string(),
                line,
                column,
                message: format!("XML syntax error: {message}"),
            }],
            warnings: Vec::new(),
        },
        Err(other) => ValidationReport {
            errors: vec![Issue {
                location: "/".to_string(),
                line: 1,
                column: 1,
                message: other.to_string(),
            }],
            warnings: Vec::new(),
        },
    }
}

/// Embeds the session's set values, replacing any previously embedded ones.
pub fn attach_values(doc: &SpecDocument, session: &SessionState) -> Result<SpecDocument, XmlError> {
    if session.spec() != &doc.spec {
        return Err(XmlError::SpecMismatch);
    }
    let embedded_values = session
        .states()
        .filter_map(|(id, state)| state.value().map(|v| (id.to_string(), v.rendered())))
        .collect();
    Ok(SpecDocument {
        format_version: doc.format_version.clone(),
        spec: doc.spec.clone(),
        embedded_values,
    })
}

// ---------------------------------------------------------------------------
// Element tree

#[derive(Debug)]
struct Element {
    name: String,
    attrs: Vec<(String, String)>,
    children: Vec<Element>,
    text: String,
    offset: usize,
}

impl Element {
    fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }
}

struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    fn new(text: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(text.match_indices('\n').map(|(i, _)| i + 1));
        LineIndex { starts }
    }

    fn locate(&self, text: &str, offset: usize) -> (usize, usize) {
        let offset = offset.min(text.len());
        let line = self.starts.partition_point(|&s| s <= offset);
        let start = self.starts[line - 1];
        let column = text
            .get(start..offset)
            .map(|s| s.chars().count())
            .unwrap_or(offset - start);
        (line, column + 1)
    }
}

fn syntax_error(text: &str, lines: &LineIndex, offset: usize, message: impl Into<String>) -> XmlError {
    let (line, column) = lines.locate(text, offset);
    XmlError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn read_tree(text: &str, lines: &LineIndex) -> Result<Element, XmlError> {
    let mut reader = Reader::from_str(text);
    let config = reader.config_mut();
    config.trim_text(false);
    config.check_end_names = true;
    config.expand_empty_elements = false;

    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;

    loop {
        let before = reader.buffer_position() as usize;
        let event = reader
            .read_event()
            .map_err(|e| syntax_error(text, lines, reader.error_position() as usize, e.to_string()))?;
        match event {
            Event::Start(start) => {
                let el = open_element(&start, before, text, lines)?;
                if root.is_some() && stack.is_empty() {
                    return Err(syntax_error(text, lines, before, "more than one root element"));
                }
                stack.push(el);
            }
            Event::Empty(start) => {
                let el = open_element(&start, before, text, lines)?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None if root.is_none() => root = Some(el),
                    None => return Err(syntax_error(text, lines, before, "more than one root element")),
                }
            }
            Event::End(_) => {
                let el = stack.pop().expect("quick-xml checks end names");
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None => root = Some(el),
                }
            }
            Event::Text(t) => {
                let s = t
                    .unescape()
                    .map_err(|e| syntax_error(text, lines, before, e.to_string()))?;
                match stack.last_mut() {
                    Some(el) => el.text.push_str(&s),
                    None if s.trim().is_empty() => {}
                    None => return Err(syntax_error(text, lines, before, "text outside the root element")),
                }
            }
            Event::CData(c) => {
                let raw = c.into_inner();
                let s = std::str::from_utf8(&raw)
                    .map_err(|e| syntax_error(text, lines, before, e.to_string()))?;
                match stack.last_mut() {
                    Some(el) => el.text.push_str(s),
                    None => return Err(syntax_error(text, lines, before, "CDATA outside the root element")),
                }
            }
            Event::DocType(d) => {
                if String::from_utf8_lossy(&d).contains("<!ENTITY") {
                    return Err(syntax_error(text, lines, before, "entity declarations are not supported"));
                }
            }
            Event::Decl(_) | Event::PI(_) | Event::Comment(_) => {}
            Event::Eof => break,
        }
    }
    if let Some(open) = stack.last() {
        return Err(syntax_error(
            text,
            lines,
            text.len(),
            format!("element <{}> is never closed", open.name),
        ));
    }
    root.ok_or_else(|| syntax_error(text, lines, 0, "document has no root element"))
}

fn open_element(start: &BytesStart<'_>, offset: usize, text: &str, lines: &LineIndex) -> Result<Element, XmlError> {
    let name = String::from_utf8_lossy(start.name().as_ref()).into_owned();
    let mut attrs = Vec::new();
    for attr in start.attributes().with_checks(true) {
        let attr = attr.map_err(|e| syntax_error(text, lines, offset, e.to_string()))?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
        let value = attr
            .unescape_value()
            .map_err(|e| syntax_error(text, lines, offset, e.to_string()))?
            .into_owned();
        attrs.push((key, value));
    }
    Ok(Element {
        name,
        attrs,
        children: Vec::new(),
        text: String::new(),
        offset,
    })
}

// ---------------------------------------------------------------------------
// Checking and model construction

struct Checker<'t> {
    text: &'t str,
    lines: LineIndex,
    report: ValidationReport,
}

impl<'t> Checker<'t> {
    fn issue(&self, el: &Element, path: &str, message: String) -> Issue {
        let (line, column) = self.lines.locate(self.text, el.offset);
        Issue {
            location: path.to_string(),
            line,
            column,
            message,
        }
    }

    fn error(&mut self, el: &Element, path: &str, message: impl Into<String>) {
        let issue = self.issue(el, path, message.into());
        self.report.errors.push(issue);
    }

    fn warn(&mut self, el: &Element, path: &str, message: impl Into<String>) {
        let issue = self.issue(el, path, message.into());
        self.report.warnings.push(issue);
    }

    fn position(&self, el: &Element) -> String {
        let (line, column) = self.lines.locate(self.text, el.offset);
        format!("line {line}, column {column}")
    }

    /// Rejects attributes outside `allowed` and returns the values of `allowed`
    /// in order.
    fn attrs<'e, const N: usize>(&mut self, el: &'e Element, path: &str, allowed: [&str; N]) -> [Option<&'e str>; N] {
        for (k, _) in &el.attrs {
            if !allowed.contains(&k.as_str()) {
                self.error(el, path, format!("unknown attribute `{k}` on <{}>", el.name));
            }
        }
        allowed.map(|a| el.attr(a))
    }

    fn required_attr<'e>(&mut self, el: &'e Element, path: &str, name: &str, value: Option<&'e str>) -> &'e str {
        match value {
            Some(v) => v,
            None => {
                self.error(el, path, format!("<{}> is missing required attribute `{name}`", el.name));
                ""
            }
        }
    }

    fn no_text(&mut self, el: &Element, path: &str) {
        if !el.text.trim().is_empty() {
            self.error(el, path, format!("<{}> must not contain text", el.name));
        }
    }

    fn text_child(&mut self, el: &Element, path: &str) -> String {
        for (k, _) in &el.attrs {
            self.error(el, path, format!("unknown attribute `{k}` on <{}>", el.name));
        }
        for c in &el.children {
            self.error(c, &format!("{path}/{}", c.name), format!("<{}> may only contain text", el.name));
        }
        el.text.clone()
    }

    fn xml_chars(&mut self, el: &Element, path: &str, what: &str, s: &str) {
        if let Some(c) = first_non_xml_char(s) {
            self.error(el, path, format!("{what} contains character U+{:04X} which XML cannot carry", c as u32));
        }
    }

    fn bool_attr(&mut self, el: &Element, path: &str, name: &str, value: Option<&str>) -> bool {
        match value {
            None | Some("false") => false,
            Some("true") => true,
            Some(other) => {
                self.error(el, path, format!("attribute `{name}` must be `true` or `false`, not `{other}`"));
                false
            }
        }
    }
}

/// Child elements grouped by name with their per-name 1-based index path.
fn indexed_children<'e>(el: &'e Element, parent: &str) -> Vec<(String, &'e Element)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    el.children
        .iter()
        .map(|c| {
            let n = counts.entry(c.name.as_str()).or_insert(0);
            *n += 1;
            (format!("{parent}/{}[{n}]", c.name), c)
        })
        .collect()
}

fn analyze(xml: &[u8]) -> Result<(Option<SpecDocument>, ValidationReport), XmlError> {
    let text = match std::str::from_utf8(xml) {
        Ok(t) => t,
        Err(e) => {
            let valid = &xml[..e.valid_up_to()];
            let prefix = std::str::from_utf8(valid).unwrap_or_default();
            let lines = LineIndex::new(prefix);
            return Err(syntax_error(prefix, &lines, prefix.len(), "input is not valid UTF-8"));
        }
    };
    // XML end-of-line handling.
    let normalized;
    let text = if text.contains('\r') {
        normalized = text.replace("\r\n", "\n").replace('\r', "\n");
        normalized.as_str()
    } else {
        text
    };
    let lines = LineIndex::new(text);
    let root = read_tree(text, &lines)?;
    let mut checker = Checker {
        text,
        lines,
        report: ValidationReport::default(),
    };
    let doc = check_root(&mut checker, &root);
    Ok((doc, checker.report))
}

fn check_root(ck: &mut Checker<'_>, root: &Element) -> Option<SpecDocument> {
    let path = "/guiliner";
    if root.name != "guiliner" {
        ck.error(root, "/", format!("root element must be <guiliner>, found <{}>", root.name));
        return None;
    }
    let [version] = ck.attrs(root, path, ["version"]);
    let version = ck.required_attr(root, path, "version", version);
    if !version.is_empty() && version != FORMAT_VERSION {
        ck.error(root, path, format!("unsupported format version `{version}` (expected {FORMAT_VERSION})"));
    }
    ck.no_text(root, path);

    let mut spec = ProgramSpec::new("", "");
    let mut program_seen: Option<&Element> = None;
    let mut display_seen: Option<&Element> = None;
    let mut embedded = IndexMap::new();
    let mut option_sites: HashMap<String, &Element> = HashMap::new();
    let mut flag_sites: HashMap<String, &Element> = HashMap::new();
    let mut group_sites: HashMap<String, &Element> = HashMap::new();

    for (cpath, child) in indexed_children(root, path) {
        match child.name.as_str() {
            "program" => {
                if let Some(first) = program_seen {
                    let msg = format!("duplicate <program> (first at {})", ck.position(first));
                    ck.error(child, &cpath, msg);
                    continue;
                }
                program_seen = Some(child);
                check_program(ck, child, &cpath, &mut spec);
            }
            "display" => {
                if let Some(first) = display_seen {
                    let msg = format!("duplicate <display> (first at {})", ck.position(first));
                    ck.error(child, &cpath, msg);
                    continue;
                }
                display_seen = Some(child);
                let [title] = ck.attrs(child, &cpath, ["title"]);
                spec.display_title = title.unwrap_or_default().to_string();
                ck.xml_chars(child, &cpath, "display title", &spec.display_title.clone());
                ck.no_text(child, &cpath);
                for (p, c) in indexed_children(child, &cpath) {
                    ck.error(c, &p, format!("unknown element <{}> in <display>", c.name));
                }
            }
            "group" => {
                let group = check_group(ck, child, &cpath, &mut embedded, &mut option_sites, &mut flag_sites);
                if !group.name.is_empty() {
                    if let Some(first) = group_sites.get(&group.name) {
                        let msg = format!("duplicate group name `{}` (first at {})", group.name, ck.position(first));
                        ck.error(child, &cpath, msg);
                    } else {
                        group_sites.insert(group.name.clone(), child);
                    }
                }
                spec.groups.push(group);
            }
            other => ck.error(child, &cpath, format!("unknown element <{other}> in <guiliner>")),
        }
    }
    if program_seen.is_none() {
        ck.error(root, path, "missing <program> element");
    }

    let doc = SpecDocument {
        format_version: version.to_string(),
        spec,
        embedded_values: embedded,
    };
    ck.report.is_valid().then_some(doc)
}

fn check_program(ck: &mut Checker<'_>, el: &Element, path: &str, spec: &mut ProgramSpec) {
    let [name, executable, version] = ck.attrs(el, path, ["name", "executable", "version"]);
    spec.name = ck.required_attr(el, path, "name", name).to_string();
    let executable = ck.required_attr(el, path, "executable", executable).to_string();
    if executable.is_empty() && el.attr("executable").is_some() {
        ck.error(el, path, "program executable must not be empty");
    }
    spec.executable = executable;
    spec.version = version.unwrap_or_default().to_string();
    ck.no_text(el, path);
    let mut description_seen = false;
    for (cpath, c) in indexed_children(el, path) {
        match c.name.as_str() {
            "description" if !description_seen => {
                description_seen = true;
                spec.description = ck.text_child(c, &cpath);
            }
            "description" => ck.error(c, &cpath, "duplicate <description>"),
            other => ck.error(c, &cpath, format!("unknown element <{other}> in <program>")),
        }
    }
    if spec.description.trim().is_empty() {
        ck.warn(el, path, "program has no description");
    }
    for (what, s) in [
        ("program name", spec.name.clone()),
        ("executable", spec.executable.clone()),
        ("version", spec.version.clone()),
        ("description", spec.description.clone()),
    ] {
        ck.xml_chars(el, path, what, &s);
    }
}

fn check_group<'e>(
    ck: &mut Checker<'_>,
    el: &'e Element,
    path: &str,
    embedded: &mut IndexMap<String, Vec<String>>,
    option_sites: &mut HashMap<String, &'e Element>,
    flag_sites: &mut HashMap<String, &'e Element>,
) -> OptionGroup {
    let [name] = ck.attrs(el, path, ["name"]);
    let name = ck.required_attr(el, path, "name", name).to_string();
    if name.is_empty() && el.attr("name").is_some() {
        ck.error(el, path, "group name must not be empty");
    }
    ck.no_text(el, path);
    let mut group = OptionGroup::new(name, "");
    let mut doc_seen = false;
    for (cpath, c) in indexed_children(el, path) {
        match c.name.as_str() {
            "doc" if !doc_seen => {
                doc_seen = true;
                group.doc = ck.text_child(c, &cpath);
            }
            "doc" => ck.error(c, &cpath, "duplicate <doc>"),
            "option" => {
                let Some((def, values)) = check_option(ck, c, &cpath) else {
                    continue;
                };
                if !def.id.is_empty() {
                    if let Some(first) = option_sites.get(&def.id) {
                        let msg = format!("duplicate option id `{}` (first defined at {})", def.id, ck.position(first));
                        ck.error(c, &cpath, msg);
                    } else {
                        option_sites.insert(def.id.clone(), c);
                    }
                }
                if !def.flag.is_empty() {
                    if let Some(first) = flag_sites.get(&def.flag) {
                        let msg = format!("duplicate flag `{}` (first used at {})", def.flag, ck.position(first));
                        ck.error(c, &cpath, msg);
                    } else {
                        flag_sites.insert(def.flag.clone(), c);
                    }
                }
                if !values.is_empty() {
                    embedded.insert(def.id.clone(), values);
                }
                group.options.push(def);
            }
            other => ck.error(c, &cpath, format!("unknown element <{other}> in <group>")),
        }
    }
    ck.xml_chars(el, path, "group name", &group.name.clone());
    ck.xml_chars(el, path, "group doc", &group.doc.clone());
    group
}

fn check_option(ck: &mut Checker<'_>, el: &Element, path: &str) -> Option<(OptionDef, Vec<String>)> {
    let [id, flag, kind, required, repeatable, style] =
        ck.attrs(el, path, ["id", "flag", "kind", "required", "repeatable", "style"]);
    let id = ck.required_attr(el, path, "id", id).to_string();
    let flag = flag.unwrap_or_default().to_string();
    let kind_raw = ck.required_attr(el, path, "kind", kind);
    let kind = match kind_raw.parse::<OptionKind>() {
        Ok(k) => Some(k),
        Err(e) if el.attr("kind").is_some() => {
            ck.error(el, path, format!("option `{id}`: {e}"));
            None
        }
        Err(_) => None,
    };
    let required = ck.bool_attr(el, path, "required", required);
    let repeatable = ck.bool_attr(el, path, "repeatable", repeatable);
    let style = match style.map(str::parse::<RenderStyle>) {
        Some(Ok(s)) => Some(s),
        Some(Err(e)) => {
            ck.error(el, path, format!("option `{id}`: {e}"));
            None
        }
        None => None,
    };
    ck.no_text(el, path);

    let mut label = String::new();
    let mut doc = String::new();
    let mut default_raw: Option<(String, &Element, String)> = None;
    let mut range_el: Option<(&Element, String)> = None;
    let mut choices: Vec<Choice> = Vec::new();
    let mut choices_seen = false;
    let mut values: Vec<(String, &Element, String)> = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();

    for (cpath, c) in indexed_children(el, path) {
        let name = c.name.as_str();
        let count = seen.entry(name).or_insert(0);
        *count += 1;
        if *count > 1 && name != "value" {
            ck.error(c, &cpath, format!("duplicate <{name}> in option `{id}`"));
            continue;
        }
        match name {
            "label" => label = ck.text_child(c, &cpath),
            "doc" => doc = ck.text_child(c, &cpath),
            "default" => {
                let raw = ck.text_child(c, &cpath);
                default_raw = Some((raw, c, cpath));
            }
            "range" => range_el = Some((c, cpath)),
            "choices" => {
                choices_seen = true;
                ck.attrs(c, &cpath, []);
                ck.no_text(c, &cpath);
                for (chpath, ch) in indexed_children(c, &cpath) {
                    if ch.name != "choice" {
                        ck.error(ch, &chpath, format!("unknown element <{}> in <choices>", ch.name));
                        continue;
                    }
                    let [value, label] = ck.attrs(ch, &chpath, ["value", "label"]);
                    let value = ck.required_attr(ch, &chpath, "value", value).to_string();
                    ck.no_text(ch, &chpath);
                    for (p, x) in indexed_children(ch, &chpath) {
                        ck.error(x, &p, format!("unknown element <{}> in <choice>", x.name));
                    }
                    choices.push(Choice::new(value, label.unwrap_or_default()));
                }
            }
            "value" => {
                let raw = ck.text_child(c, &cpath);
                values.push((raw, c, cpath));
            }
            other => ck.error(c, &cpath, format!("unknown element <{other}> in <option>")),
        }
    }

    let kind = kind?;
    let style = style.unwrap_or(if kind == OptionKind::Flag {
        RenderStyle::FlagOnly
    } else if flag.is_empty() {
        RenderStyle::Positional
    } else {
        RenderStyle::SeparateToken
    });

    let mut def = OptionDef {
        id: id.clone(),
        label,
        flag,
        kind,
        required,
        repeatable,
        style,
        default: None,
        choices,
        range: None,
        doc,
    };
    if choices_seen && kind != OptionKind::Choice && def.choices.is_empty() {
        ck.error(el, path, format!("option `{id}`: choices are only allowed on choice options, not {kind}"));
    }

    if let Some((rel, rpath)) = range_el {
        let [min, max] = ck.attrs(rel, &rpath, ["min", "max"]);
        let min = ck.required_attr(rel, &rpath, "min", min);
        let max = ck.required_attr(rel, &rpath, "max", max);
        ck.no_text(rel, &rpath);
        match kind {
            OptionKind::Int => match (min.parse::<i64>(), max.parse::<i64>()) {
                (Ok(min), Ok(max)) => def.range = Some(Range::Int { min, max }),
                _ if !min.is_empty() && !max.is_empty() => {
                    ck.error(rel, &rpath, format!("option `{id}`: range bounds must be int values"))
                }
                _ => {}
            },
            OptionKind::Float => match (min.parse::<f64>(), max.parse::<f64>()) {
                (Ok(min), Ok(max)) => def.range = Some(Range::Float { min, max }),
                _ if !min.is_empty() && !max.is_empty() => {
                    ck.error(rel, &rpath, format!("option `{id}`: range bounds must be float values"))
                }
                _ => {}
            },
            _ => ck.error(
                rel,
                &rpath,
                format!("option `{id}`: range is only allowed on int or float options, not {kind}"),
            ),
        }
    }

    // Structural invariants; the default is checked separately below so its
    // report points at the <default> element.
    for v in def.violations() {
        ck.error(el, path, format!("option `{id}`: {v}"));
    }

    if let Some((raw, del, dpath)) = default_raw {
        match validate_value(&def, &raw) {
            Ok(v) => def.default = Some(v),
            Err(e) => ck.error(del, &dpath, format!("option `{id}`: default value is invalid: {e}")),
        }
    }

    if !def.repeatable && values.len() > 1 {
        ck.error(
            el,
            path,
            format!("option `{id}` is not repeatable but has {} saved values", values.len()),
        );
    }
    let mut raws = Vec::new();
    for (raw, vel, vpath) in values {
        if let Err(e) = validate_value(&def, &raw) {
            ck.error(vel, &vpath, format!("saved value is invalid: {e}"));
        }
        raws.push(raw);
    }

    if def.label.trim().is_empty() {
        ck.warn(el, path, format!("option `{id}` has no label"));
    }
    if def.doc.trim().is_empty() {
        ck.warn(el, path, format!("option `{id}` has no documentation"));
    }
    Some((def, raws))
}

// ---------------------------------------------------------------------------
// Serialization

fn escape_text(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
}

fn escape_attr(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\t' => out.push_str("&#9;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
}

struct Writer {
    out: String,
}

impl Writer {
    fn indent(&mut self, depth: usize) {
        for _ in 0..depth {
            self.out.push_str("  ");
        }
    }

    fn open(&mut self, depth: usize, name: &str, attrs: &[(&str, &str)], empty: bool) {
        self.indent(depth);
        self.out.push('<');
        self.out.push_str(name);
        for (k, v) in attrs {
            self.out.push(' ');
            self.out.push_str(k);
            self.out.push_str("=\"");
            escape_attr(v, &mut self.out);
            self.out.push('"');
        }
        self.out.push_str(if empty { "/>\n" } else { ">\n" });
    }

    fn close(&mut self, depth: usize, name: &str) {
        self.indent(depth);
        self.out.push_str("</");
        self.out.push_str(name);
        self.out.push_str(">\n");
    }

    fn text_element(&mut self, depth: usize, name: &str, text: &str) {
        self.indent(depth);
        self.out.push('<');
        self.out.push_str(name);
        self.out.push('>');
        escape_text(text, &mut self.out);
        self.out.push_str("</");
        self.out.push_str(name);
        self.out.push_str(">\n");
    }
}

/// Canonical UTF-8 serialization with LF line endings.
pub fn serialize_spec(doc: &SpecDocument) -> Vec<u8> {
    let spec = &doc.spec;
    let mut w = Writer { out: String::new() };
    w.out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    w.open(0, "guiliner", &[("version", &doc.format_version)], false);
    w.open(
        1,
        "program",
        &[
            ("name", &spec.name),
            ("executable", &spec.executable),
            ("version", &spec.version),
        ],
        false,
    );
    w.text_element(2, "description", &spec.description);
    w.close(1, "program");
    w.open(1, "display", &[("title", &spec.display_title)], true);

    for group in &spec.groups {
        w.open(1, "group", &[("name", &group.name)], false);
        w.text_element(2, "doc", &group.doc);
        for def in &group.options {
            write_option(&mut w, def, doc.embedded_values.get(&def.id));
        }
        w.close(1, "group");
    }
    w.close(0, "guiliner");
    w.out.into_bytes()
}

fn write_option(w: &mut Writer, def: &OptionDef, values: Option<&Vec<String>>) {
    let bool_str = |b: bool| if b { "true" } else { "false" };
    w.open(
        2,
        "option",
        &[
            ("id", &def.id),
            ("flag", &def.flag),
            ("kind", def.kind.as_str()),
            ("required", bool_str(def.required)),
            ("repeatable", bool_str(def.repeatable)),
            ("style", def.style.as_str()),
        ],
        false,
    );
    w.text_element(3, "label", &def.label);
    w.text_element(3, "doc", &def.doc);
    if let Some(default) = &def.default {
        w.text_element(3, "default", &default.render());
    }
    if let Some(range) = &def.range {
        let (min, max) = range.render();
        w.open(3, "range", &[("min", &min), ("max", &max)], true);
    }
    if def.kind == OptionKind::Choice || !def.choices.is_empty() {
        w.open(3, "choices", &[], false);
        for c in &def.choices {
            w.open(4, "choice", &[("value", &c.value), ("label", &c.label)], true);
        }
        w.close(3, "choices");
    }
    for raw in values.into_iter().flatten() {
        w.text_element(3, "value", raw);
    }
    w.close(2, "option");
}

/// Typed form of the values embedded for `id`.
pub fn typed_values(doc: &SpecDocument, id: &str) -> Option<Vec<OptionValue>> {
    let def = doc.spec.option(id)?;
    let raws = doc.embedded_values.get(id)?;
    raws.iter().map(|r| validate_value(def, r).ok()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"<?xml version="1.0"?>
<guiliner version="1.0">
  <program name="tiny" executable="tiny"/>
  <group name="main">
    <option id="verbose" flag="-v" kind="flag"/>
  </group>
</guiliner>
"#;

    #[test]
    fn minimal_document() {
        let doc = parse_spec(MINIMAL.as_bytes()).unwrap();
        assert_eq!(doc.spec.options().count(), 1);
        let v = doc.spec.option("verbose").unwrap();
        assert_eq!(v.kind, OptionKind::Flag);
        assert_eq!(v.style, RenderStyle::FlagOnly);
        let report = validate_document(MINIMAL.as_bytes());
        assert!(report.errors.is_empty());
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn unknown_kind_names_the_option() {
        let xml = MINIMAL.replace(r#"kind="flag""#, r#"kind="color""#);
        let Err(XmlError::Schema(report)) = parse_spec(xml.as_bytes()) else {
            panic!("expected schema error");
        };
        assert_eq!(report.errors.len(), 1);
        assert!(report.errors[0].message.contains("verbose"));
        assert!(report.errors[0].message.contains("color"));
        assert_eq!(report.errors[0].location, "/guiliner/group[1]/option[1]");
        assert_eq!(report.errors[0].line, 5);
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_spec(b"<guiliner version=\"1.0\">\n  <program>\n</guiliner>").unwrap_err();
        let XmlError::Syntax { line, .. } = err else {
            panic!("expected syntax error, got {err:?}");
        };
        assert_eq!(line, 3);
        assert!(!validate_document(b"<a").is_valid());
    }

    #[test]
    fn entity_declarations_rejected() {
        let xml = "<!DOCTYPE guiliner [<!ENTITY x SYSTEM \"file:///etc/passwd\">]>\n<guiliner version=\"1.0\"/>";
        assert!(matches!(parse_spec(xml.as_bytes()), Err(XmlError::Syntax { .. })));
        let undefined = MINIMAL.replace("tiny\"/>", "&x;\"/>");
        assert!(parse_spec(undefined.as_bytes()).is_err());
    }

    #[test]
    fn collects_every_error() {
        let xml = r#"<guiliner version="1.0">
  <program name="p" executable=""/>
  <group name="g">
    <option id="a" flag="-a" kind="choice"/>
    <option id="a" flag="-b" kind="int"><range min="3" max="1"/></option>
    <bogus/>
  </group>
</guiliner>"#;
        let report = validate_document(xml.as_bytes());
        let msgs: Vec<_> = report.errors.iter().map(|e| e.message.as_str()).collect();
        assert_eq!(report.errors.len(), 5, "{msgs:#?}");
        assert!(msgs.iter().any(|m| m.contains("executable must not be empty")));
        assert!(msgs.iter().any(|m| m.contains("Choice requires at least one choice")));
        assert!(msgs.iter().any(|m| m.contains("duplicate option id `a` (first defined at line 4")));
        assert!(msgs.iter().any(|m| m.contains("min 3 must not exceed max 1")));
        assert!(msgs.iter().any(|m| m.contains("unknown element <bogus>")));
    }

    #[test]
    fn canonical_layout() {
        let doc = parse_spec(MINIMAL.as_bytes()).unwrap();
        let out = String::from_utf8(serialize_spec(&doc)).unwrap();
        let expected = r#"<?xml version="1.0" encoding="UTF-8"?>
<guiliner version="1.0">
  <program name="tiny" executable="tiny" version="">
    <description></description>
  </program>
  <display title=""/>
  <group name="main">
    <doc></doc>
    <option id="verbose" flag="-v" kind="flag" required="false" repeatable="false" style="flagonly">
      <label></label>
      <doc></doc>
    </option>
  </group>
</guiliner>
"#;
        assert_eq!(out, expected);
    }

    #[test]
    fn escapes_survive_round_trip() {
        let mut doc = parse_spec(MINIMAL.as_bytes()).unwrap();
        doc.spec.description = "a < b & \"c\" > d\r\nline\ttab".to_string();
        doc.spec.display_title = "tab\there\nnewline \"q\"".to_string();
        let again = parse_spec(&serialize_spec(&doc)).unwrap();
        assert_eq!(again, doc);
    }

    #[test]
    fn crlf_input_is_normalized() {
        let xml = MINIMAL.replace('\n', "\r\n");
        assert!(parse_spec(xml.as_bytes()).is_ok());
    }

    #[test]
    fn embedded_values_attach_and_reload() {
        let xml = r#"<guiliner version="1.0">
  <program name="p" executable="p"/>
  <group name="g">
    <option id="theta" flag="-t" kind="float"/>
    <option id="inc" flag="-I" kind="dir" repeatable="true"/>
  </group>
</guiliner>"#;
        let doc = parse_spec(xml.as_bytes()).unwrap();
        let empty = attach_values(&doc, &doc.session(".").unwrap()).unwrap();
        assert!(empty.embedded_values.is_empty());

        let session = doc
            .session(".")
            .unwrap()
            .set_option("theta", "4.0")
            .unwrap()
            .set_option("inc", "a")
            .unwrap()
            .set_option("inc", "b")
            .unwrap();
        let saved = attach_values(&doc, &session).unwrap();
        assert_eq!(saved.embedded_values["theta"], vec!["4".to_string()]);
        let text = String::from_utf8(serialize_spec(&saved)).unwrap();
        assert_eq!(text.matches("<value>4</value>").count(), 1);
        let reloaded = parse_spec(text.as_bytes()).unwrap();
        assert_eq!(reloaded.session(".").unwrap(), session);
        assert_eq!(typed_values(&reloaded, "theta"), Some(vec![OptionValue::Float(4.0)]));
    }

    #[test]
    fn attach_rejects_other_spec() {
        let doc = parse_spec(MINIMAL.as_bytes()).unwrap();
        let mut other = doc.spec.clone();
        other.name = "other".into();
        let session = SessionState::new(other, ".").unwrap();
        assert_eq!(attach_values(&doc, &session), Err(XmlError::SpecMismatch));
    }

    #[test]
    fn multiple_values_on_non_repeatable() {
        let xml = MINIMAL.replace(
            r#"<option id="verbose" flag="-v" kind="flag"/>"#,
            r#"<option id="verbose" flag="-v" kind="flag"><value>true</value><value>false</value></option>"#,
        );
        let report = validate_document(xml.as_bytes());
        assert_eq!(report.errors.len(), 1);
        assert!(report.errors[0].message.contains("not repeatable"));
    }
}
