//! Option definitions with embedded documentation, for programs that want to
//! parse their own command line and print help from the same source.
//!
//! An [`ArgSpec`] is written once in the program. [`parse_argv`] checks a
//! command line against it and [`emit`] renders short help, long help, a roff
//! man page, or the XML spec document the host reads.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use thiserror::Error;

use crate::model::{
    validate_value, ModelError, OptionDef, OptionGroup, OptionKind, ProgramSpec, RenderStyle, SetValue,
};
use crate::xml::{serialize_spec, SpecDocument};

const HELP_WIDTH: usize = 80;
const DOC_WIDTH: usize = 78;
const MAX_SYNOPSIS_COLUMN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmitFormat {
    ShortHelp,
    LongHelp,
    ManPage,
    GuilinerXml,
}

impl EmitFormat {
    pub const ALL: [EmitFormat; 4] = [
        EmitFormat::ShortHelp,
        EmitFormat::LongHelp,
        EmitFormat::ManPage,
        EmitFormat::GuilinerXml,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmitFormat::ShortHelp => "short-help",
            EmitFormat::LongHelp => "long-help",
            EmitFormat::ManPage => "man",
            EmitFormat::GuilinerXml => "guiliner-xml",
        }
    }
}

impl fmt::Display for EmitFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmitFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "short-help" | "short" => Ok(EmitFormat::ShortHelp),
            "long-help" | "long" => Ok(EmitFormat::LongHelp),
            "man" | "man-page" => Ok(EmitFormat::ManPage),
            "guiliner-xml" | "xml" => Ok(EmitFormat::GuilinerXml),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArgError {
    #[error("unknown flag `{0}`")]
    UnknownFlag(String),
    #[error("flag `{0}` needs a value")]
    MissingValue(String),
    #[error("required options not given: {}", .0.join(", "))]
    MissingRequired(Vec<String>),
    #[error("invalid value for `{id}`: {reason}")]
    Value { id: String, reason: String },
    #[error("option `{0}` given more than once")]
    DuplicateFlag(String),
    #[error("unexpected arguments: {}", .0.join(" "))]
    UnexpectedArguments(Vec<String>),
    #[error("invalid argument spec: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),
}

/// A program's options plus the metadata its help and man page need.
#[derive(Debug, Clone, PartialEq)]
pub struct ArgSpec {
    pub name: String,
    pub version: String,
    /// One line, used in the man page NAME section and as the window title.
    pub summary: String,
    pub description: String,
    pub groups: Vec<OptionGroup>,
    /// Man page section, 1 through 8.
    pub man_section: u8,
    /// Date shown in the man page header.
    pub date: String,
}

impl ArgSpec {
    pub fn new(name: impl Into<String>, version: impl Into<String>) -> Self {
        ArgSpec {
            name: name.into(),
            version: version.into(),
            summary: String::new(),
            description: String::new(),
            groups: Vec::new(),
            man_section: 1,
            date: String::new(),
        }
    }

    pub fn summary(mut self, s: impl Into<String>) -> Self {
        self.summary = s.into();
        self
    }

    pub fn description(mut self, s: impl Into<String>) -> Self {
        self.description = s.into();
        self
    }

    pub fn man_section(mut self, section: u8) -> Self {
        self.man_section = section;
        self
    }

    pub fn date(mut self, date: impl Into<String>) -> Self {
        self.date = date.into();
        self
    }

    pub fn group(mut self, group: OptionGroup) -> Self {
        self.groups.push(group);
        self
    }

    pub fn options(&self) -> impl Iterator<Item = &OptionDef> {
        self.groups.iter().flat_map(|g| g.options.iter())
    }

    /// The program spec the host sees for this program.
    pub fn to_program_spec(&self) -> ProgramSpec {
        ProgramSpec {
            name: self.name.clone(),
            executable: self.name.clone(),
            description: self.description.clone(),
            version: self.version.clone(),
            display_title: self.summary.clone(),
            groups: self.groups.clone(),
        }
    }

    /// Treats a host spec as the program's own option set.
    pub fn from_program_spec(spec: &ProgramSpec) -> Self {
        ArgSpec {
            name: spec.name.clone(),
            version: spec.version.clone(),
            summary: spec.display_title.clone(),
            description: spec.description.clone(),
            groups: spec.groups.clone(),
            man_section: 1,
            date: String::new(),
        }
    }

    /// Program-spec invariants plus what unambiguous parsing needs: flag
    /// options are never required, and positional options are the required
    /// single-value ones followed by at most one optional or repeatable one.
    pub fn violations(&self) -> Vec<String> {
        let mut out = self.to_program_spec().violations();
        if !(1..=8).contains(&self.man_section) {
            out.push(format!("man section {} is not in 1..8", self.man_section));
        }
        for def in self.options() {
            if def.kind == OptionKind::Flag && def.required {
                out.push(format!("flag option `{}` cannot be required", def.id));
            }
        }
        let mut tail_seen: Option<&str> = None;
        for def in self.options().filter(|d| d.is_positional()) {
            if let Some(tail) = tail_seen {
                out.push(format!(
                    "positional `{}` follows optional or repeatable positional `{tail}`",
                    def.id
                ));
            } else if !def.required || def.repeatable {
                tail_seen = Some(&def.id);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ArgError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ArgError::InvalidSpec(v))
        }
    }
}

/// Result of parsing a command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedArgs {
    /// Values by option id, in the order options were first seen.
    pub values: IndexMap<String, SetValue>,
    /// Raw positional tokens, in order.
    pub positionals: Vec<String>,
    /// Tokens nothing claimed. [`parse_argv`] rejects these.
    pub leftover: Vec<String>,
}

impl ParsedArgs {
    pub fn get(&self, id: &str) -> Option<&SetValue> {
        self.values.get(id)
    }

    pub fn is_present(&self, id: &str) -> bool {
        self.values.contains_key(id)
    }
}

/// Parses `argv` (without the program name) against `spec`.
///
/// Recognizes `flag value`, `flag=value`, bare flags and positional values;
/// `--` ends flag parsing. Unknown flags, missing values, repeated
/// non-repeatable options, missing required options and unclaimed tokens are
/// all errors.
pub fn parse_argv<S: AsRef<str>>(spec: &ArgSpec, argv: &[S]) -> Result<ParsedArgs, ArgError> {
    let parsed = parse_known_argv(spec, argv)?;
    if !parsed.leftover.is_empty() {
        return Err(ArgError::UnexpectedArguments(parsed.leftover));
    }
    Ok(parsed)
}

/// Like [`parse_argv`] but returns unclaimed positional tokens in
/// [`ParsedArgs::leftover`] instead of failing.
pub fn parse_known_argv<S: AsRef<str>>(spec: &ArgSpec, argv: &[S]) -> Result<ParsedArgs, ArgError> {
    spec.validate()?;
    let flags: HashMap<&str, &OptionDef> = spec
        .options()
        .filter(|d| !d.is_positional())
        .map(|d| (d.flag.as_str(), d))
        .collect();

    let mut parsed = ParsedArgs::default();
    let mut tokens = argv.iter().map(AsRef::as_ref);
    let mut only_positionals = false;
    while let Some(tok) = tokens.next() {
        if only_positionals {
            parsed.positionals.push(tok.to_string());
            continue;
        }
        if tok == "--" {
            only_positionals = true;
            continue;
        }
        if let Some(def) = flags.get(tok) {
            if def.style == RenderStyle::FlagOnly {
                record(&mut parsed, def, "true")?;
            } else {
                let value = tokens.next().ok_or_else(|| ArgError::MissingValue(def.flag.clone()))?;
                record(&mut parsed, def, value)?;
            }
            continue;
        }
        if let Some((flag, value)) = tok.split_once('=') {
            if let Some(def) = flags.get(flag) {
                if def.style == RenderStyle::FlagOnly {
                    return Err(ArgError::Value {
                        id: def.id.clone(),
                        reason: format!("`{flag}` takes no value"),
                    });
                }
                record(&mut parsed, def, value)?;
                continue;
            }
        }
        if tok.starts_with('-') && tok != "-" && tok.parse::<f64>().is_err() {
            return Err(ArgError::UnknownFlag(tok.to_string()));
        }
        parsed.positionals.push(tok.to_string());
    }

    assign_positionals(spec, &mut parsed)?;

    let missing: Vec<String> = spec
        .options()
        .filter(|d| d.required && !parsed.values.contains_key(&d.id))
        .map(|d| d.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(ArgError::MissingRequired(missing));
    }
    Ok(parsed)
}

fn record(parsed: &mut ParsedArgs, def: &OptionDef, raw: &str) -> Result<(), ArgError> {
    let value = validate_value(def, raw).map_err(|e| match e {
        ModelError::Value { id, reason } => ArgError::Value { id, reason },
        other => ArgError::Value {
            id: def.id.clone(),
            reason: other.to_string(),
        },
    })?;
    match parsed.values.get_mut(&def.id) {
        Some(SetValue::Repeated(list)) => list.push(value),
        Some(SetValue::Single(_)) => return Err(ArgError::DuplicateFlag(def.id.clone())),
        None => {
            let v = if def.repeatable {
                SetValue::Repeated(vec![value])
            } else {
                SetValue::Single(value)
            };
            parsed.values.insert(def.id.clone(), v);
        }
    }
    Ok(())
}

fn assign_positionals(spec: &ArgSpec, parsed: &mut ParsedArgs) -> Result<(), ArgError> {
    let mut tokens = parsed.positionals.clone().into_iter();
    for def in spec.options().filter(|d| d.is_positional()) {
        if def.repeatable {
            for tok in tokens.by_ref() {
                record(parsed, def, &tok)?;
            }
        } else if let Some(tok) = tokens.next() {
            record(parsed, def, &tok)?;
        }
    }
    parsed.leftover.extend(tokens);
    Ok(())
}

/// If `argv` is a single help request (`--help`, `--help-long`, `--help-man`
/// or `--help-xml`) that `spec` does not claim as its own flag, the format to
/// print.
pub fn help_request<S: AsRef<str>>(spec: &ArgSpec, argv: &[S]) -> Option<EmitFormat> {
    let [only] = argv else { return None };
    let format = match only.as_ref() {
        "--help" | "-h" => EmitFormat::ShortHelp,
        "--help-long" => EmitFormat::LongHelp,
        "--help-man" => EmitFormat::ManPage,
        "--help-xml" => EmitFormat::GuilinerXml,
        _ => return None,
    };
    let claimed = spec.options().any(|d| d.flag == only.as_ref());
    (!claimed).then_some(format)
}

/// Renders `spec` in the requested format. Output is byte-deterministic.
pub fn emit(spec: &ArgSpec, format: EmitFormat) -> Vec<u8> {
    match format {
        EmitFormat::ShortHelp => short_help(spec).into_bytes(),
        EmitFormat::LongHelp => long_help(spec).into_bytes(),
        EmitFormat::ManPage => man_page(spec).into_bytes(),
        EmitFormat::GuilinerXml => serialize_spec(&SpecDocument::new(spec.to_program_spec())),
    }
}

// ---------------------------------------------------------------------------
// Help text

fn value_placeholder(def: &OptionDef) -> String {
    match def.kind {
        OptionKind::Flag => String::new(),
        OptionKind::String => "<text>".into(),
        OptionKind::Int => "<int>".into(),
        OptionKind::Float => "<float>".into(),
        OptionKind::Choice => {
            let keys: Vec<&str> = def.choices.iter().map(|c| c.value.as_str()).collect();
            format!("{{{}}}", keys.join("|"))
        }
        OptionKind::InFile | OptionKind::OutFile => "<file>".into(),
        OptionKind::Dir => "<dir>".into(),
    }
}

/// How the option is written on a command line, e.g. `-t <float>`.
fn synopsis(def: &OptionDef) -> String {
    let mut s = match def.style {
        RenderStyle::SeparateToken => format!("{} {}", def.flag, value_placeholder(def)),
        RenderStyle::EqualsJoined => format!("{}={}", def.flag, value_placeholder(def)),
        RenderStyle::FlagOnly => def.flag.clone(),
        RenderStyle::Positional => format!("<{}>", def.id),
    };
    if def.repeatable {
        s.push_str("...");
    }
    s
}

fn usage_words(spec: &ArgSpec) -> Vec<String> {
    let mut words = Vec::new();
    let mut any_optional = false;
    for def in spec.options().filter(|d| !d.is_positional()) {
        if def.required {
            words.push(synopsis(def));
        } else {
            any_optional = true;
        }
    }
    if any_optional {
        words.push("[OPTIONS]".to_string());
    }
    for def in spec.options().filter(|d| d.is_positional()) {
        let s = synopsis(def);
        words.push(if def.required { s } else { format!("[{s}]") });
    }
    words
}

/// Greedy fill that never splits a word.
fn fill_words(words: &[String], first: &str, indent: &str, width: usize) -> String {
    let mut out = String::new();
    let mut line = first.to_string();
    let mut line_has_word = !first.trim().is_empty();
    for w in words {
        if line_has_word && line.chars().count() + 1 + w.chars().count() > width {
            out.push_str(line.trim_end());
            out.push('\n');
            line = indent.to_string();
            line_has_word = false;
        }
        if line_has_word {
            line.push(' ');
        }
        line.push_str(w);
        line_has_word = true;
    }
    out.push_str(line.trim_end());
    out.push('\n');
    out
}

fn label_of(def: &OptionDef) -> String {
    let mut label = if def.label.trim().is_empty() {
        def.id.clone()
    } else {
        normalize(&def.label)
    };
    if def.required {
        label.push_str(" (required)");
    }
    label
}

fn normalize(paragraph: &str) -> String {
    paragraph.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(normalize(&current.join(" ")));
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        out.push(normalize(&current.join(" ")));
    }
    out
}

fn wrap_indented(text: &str, indent: &str, width: usize) -> String {
    let mut out = String::new();
    for (i, p) in paragraphs(text).iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let opts = textwrap::Options::new(width)
            .initial_indent(indent)
            .subsequent_indent(indent)
            .break_words(false);
        for line in textwrap::wrap(p, opts) {
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

fn short_help(spec: &ArgSpec) -> String {
    let first = format!("Usage: {}", spec.name);
    let indent = " ".repeat(first.chars().count() + 1);
    let mut out = fill_words(&usage_words(spec), &first, &indent, HELP_WIDTH);

    let defs: Vec<&OptionDef> = spec.options().collect();
    if defs.is_empty() {
        return out;
    }
    out.push_str("\nOptions:\n");
    let column = defs
        .iter()
        .map(|d| synopsis(d).chars().count())
        .max()
        .unwrap_or(0)
        .min(MAX_SYNOPSIS_COLUMN);
    let label_col = 2 + column + 2;
    let label_indent = " ".repeat(label_col);
    let label_width = HELP_WIDTH.saturating_sub(label_col).max(20);
    for def in defs {
        let syn = synopsis(def);
        let label = label_of(def);
        let lines = textwrap::wrap(&label, textwrap::Options::new(label_width).break_words(false));
        let mut lines = lines.iter();
        if syn.chars().count() <= column {
            let head = format!("  {syn:<column$}  {}", lines.next().map(|l| l.as_ref()).unwrap_or(""));
            out.push_str(head.trim_end());
        } else {
            out.push_str(&format!("  {syn}"));
        }
        out.push('\n');
        for line in lines {
            out.push_str(&label_indent);
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

fn long_help(spec: &ArgSpec) -> String {
    let mut out = short_help(spec);
    let title = if spec.summary.is_empty() {
        format!("{} {}", spec.name, spec.version)
    } else {
        format!("{} {} - {}", spec.name, spec.version, spec.summary)
    };
    out.push('\n');
    out.push_str(title.trim_end());
    out.push('\n');
    if !spec.description.trim().is_empty() {
        out.push('\n');
        out.push_str(&wrap_indented(&spec.description, "  ", DOC_WIDTH));
    }
    for group in &spec.groups {
        if group.options.is_empty() {
            continue;
        }
        out.push_str(&format!("\n{}:\n", group.name));
        if !group.doc.trim().is_empty() {
            out.push_str(&wrap_indented(&group.doc, "  ", DOC_WIDTH));
        }
        for def in &group.options {
            out.push('\n');
            out.push_str(&format!("  {}\n", synopsis(def)));
            out.push_str(&wrap_indented(&label_of(def), "      ", DOC_WIDTH));
            if !def.doc.trim().is_empty() {
                out.push_str(&wrap_indented(&def.doc, "      ", DOC_WIDTH));
            }
            for fact in option_facts(def) {
                out.push_str(&wrap_indented(&fact, "      ", DOC_WIDTH));
            }
        }
    }
    out
}

fn option_facts(def: &OptionDef) -> Vec<String> {
    let mut facts = Vec::new();
    if let Some(range) = &def.range {
        let (min, max) = range.render();
        facts.push(format!("Range: {min} to {max}."));
    }
    if let Some(default) = &def.default {
        facts.push(format!("Default: {}.", default.render()));
    }
    if !def.choices.is_empty() {
        let list: Vec<String> = def
            .choices
            .iter()
            .map(|c| {
                if c.label.is_empty() {
                    c.value.clone()
                } else {
                    format!("{} ({})", c.value, c.label)
                }
            })
            .collect();
        facts.push(format!("Choices: {}.", list.join(", ")));
    }
    if def.repeatable {
        facts.push("May be given more than once.".to_string());
    }
    facts
}

// ---------------------------------------------------------------------------
// roff

fn roff_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\e"),
            '-' => out.push_str("\\-"),
            c => out.push(c),
        }
    }
    out
}

/// Escapes and guards against a leading control character.
fn roff_line(s: &str) -> String {
    let escaped = roff_escape(s);
    if escaped.starts_with('.') || escaped.starts_with('\'') {
        format!("\\&{escaped}")
    } else {
        escaped
    }
}

fn roff_quoted(s: &str) -> String {
    format!("\"{}\"", roff_escape(s).replace('"', "\\(dq"))
}

fn roff_synopsis(def: &OptionDef) -> String {
    let placeholder = value_placeholder(def);
    let placeholder = placeholder.trim_start_matches('<').trim_end_matches('>');
    let mut s = match def.style {
        RenderStyle::SeparateToken => format!(
            "\\fB{}\\fR \\fI{}\\fR",
            roff_escape(&def.flag),
            roff_escape(placeholder)
        ),
        RenderStyle::EqualsJoined => format!(
            "\\fB{}\\fR=\\fI{}\\fR",
            roff_escape(&def.flag),
            roff_escape(placeholder)
        ),
        RenderStyle::FlagOnly => format!("\\fB{}\\fR", roff_escape(&def.flag)),
        RenderStyle::Positional => format!("\\fI{}\\fR", roff_escape(&def.id)),
    };
    if def.repeatable {
        s.push_str("...");
    }
    s
}

fn man_page(spec: &ArgSpec) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        ".TH {} {} {} {} {}\n",
        roff_quoted(&spec.name.to_uppercase()),
        spec.man_section,
        roff_quoted(&spec.date),
        roff_quoted(&format!("{} {}", spec.name, spec.version).trim_end().to_string()),
        roff_quoted("User Commands"),
    ));
    out.push_str(".SH NAME\n");
    if spec.summary.is_empty() {
        out.push_str(&format!("{}\n", roff_line(&spec.name)));
    } else {
        out.push_str(&format!("{} \\- {}\n", roff_line(&spec.name), roff_escape(&spec.summary)));
    }

    out.push_str(".SH SYNOPSIS\n");
    out.push_str(&format!(".B {}\n", roff_escape(&spec.name)));
    let mut any_optional = false;
    for def in spec.options().filter(|d| !d.is_positional()) {
        if def.required {
            out.push_str(&format!("{}\n", roff_synopsis(def)));
        } else {
            any_optional = true;
        }
    }
    if any_optional {
        out.push_str("[\\fIOPTIONS\\fR]\n");
    }
    for def in spec.options().filter(|d| d.is_positional()) {
        if def.required {
            out.push_str(&format!("{}\n", roff_synopsis(def)));
        } else {
            out.push_str(&format!("[{}]\n", roff_synopsis(def)));
        }
    }

    if !spec.description.trim().is_empty() {
        out.push_str(".SH DESCRIPTION\n");
        for (i, p) in paragraphs(&spec.description).iter().enumerate() {
            if i > 0 {
                out.push_str(".PP\n");
            }
            out.push_str(&roff_line(p));
            out.push('\n');
        }
    }

    if spec.options().next().is_some() {
        out.push_str(".SH OPTIONS\n");
    }
    for group in spec.groups.iter().filter(|g| !g.options.is_empty()) {
        out.push_str(&format!(".SS {}\n", roff_quoted(&group.name)));
        for p in paragraphs(&group.doc) {
            out.push_str(&roff_line(&p));
            out.push('\n');
        }
        for def in &group.options {
            out.push_str(".TP\n");
            out.push_str(&roff_synopsis(def));
            out.push('\n');
            let mut body: Vec<String> = vec![label_of(def)];
            body.extend(paragraphs(&def.doc));
            body.extend(option_facts(def));
            for (i, line) in body.iter().enumerate() {
                if i > 0 {
                    out.push_str(".br\n");
                }
                out.push_str(&roff_line(line));
                out.push('\n');
            }
        }
    }
    out
}
