//! Program specifications and the per-option state machine.
//!
//! A [`ProgramSpec`] describes a hosted command-line program: its executable,
//! documentation and an ordered tree of option groups. A [`SessionState`]
//! tracks which options the user has set. Every mutating operation returns the
//! successor state and leaves the receiver untouched.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

/// Errors raised by the model operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid spec: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),
    #[error("unknown option `{0}`")]
    UnknownOption(String),
    #[error("invalid value for `{id}`: {reason}")]
    Value { id: String, reason: String },
    #[error("cannot modify options while run {0} is active")]
    MutationDuringRun(String),
}

/// The closed set of option types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Flag,
    String,
    Int,
    Float,
    Choice,
    InFile,
    OutFile,
    Dir,
}

impl OptionKind {
    pub const ALL: [OptionKind; 8] = [
        OptionKind::Flag,
        OptionKind::String,
        OptionKind::Int,
        OptionKind::Float,
        OptionKind::Choice,
        OptionKind::InFile,
        OptionKind::OutFile,
        OptionKind::Dir,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OptionKind::Flag => "flag",
            OptionKind::String => "string",
            OptionKind::Int => "int",
            OptionKind::Float => "float",
            OptionKind::Choice => "choice",
            OptionKind::InFile => "infile",
            OptionKind::OutFile => "outfile",
            OptionKind::Dir => "dir",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, OptionKind::Int | OptionKind::Float)
    }

    pub fn is_path(self) -> bool {
        matches!(self, OptionKind::InFile | OptionKind::OutFile | OptionKind::Dir)
    }
}

impl fmt::Display for OptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OptionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown option kind `{s}`"))
    }
}

/// How an option and its value are rendered into argv.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderStyle {
    /// `--flag value` as two argv entries.
    SeparateToken,
    /// `--flag=value` as one entry.
    EqualsJoined,
    /// The flag token alone.
    FlagOnly,
    /// The value alone.
    Positional,
}

impl RenderStyle {
    pub const ALL: [RenderStyle; 4] = [
        RenderStyle::SeparateToken,
        RenderStyle::EqualsJoined,
        RenderStyle::FlagOnly,
        RenderStyle::Positional,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RenderStyle::SeparateToken => "separate",
            RenderStyle::EqualsJoined => "equals",
            RenderStyle::FlagOnly => "flagonly",
            RenderStyle::Positional => "positional",
        }
    }
}

impl fmt::Display for RenderStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RenderStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RenderStyle::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown render style `{s}`"))
    }
}

/// Inclusive numeric bounds. The variant must match the option kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Range {
    Int { min: i64, max: i64 },
    Float { min: f64, max: f64 },
}

impl Range {
    pub fn kind(&self) -> OptionKind {
        match self {
            Range::Int { .. } => OptionKind::Int,
            Range::Float { .. } => OptionKind::Float,
        }
    }

    pub fn is_ordered(&self) -> bool {
        match *self {
            Range::Int { min, max } => min <= max,
            Range::Float { min, max } => min.is_finite() && max.is_finite() && min <= max,
        }
    }

    /// `(min, max)` rendered in the same form as values.
    pub fn render(&self) -> (String, String) {
        match *self {
            Range::Int { min, max } => (min.to_string(), max.to_string()),
            Range::Float { min, max } => (render_float(min), render_float(max)),
        }
    }
}

/// One entry of a choice option.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Choice {
    pub value: String,
    pub label: String,
}

impl Choice {
    pub fn new(value: impl Into<String>, label: impl Into<String>) -> Self {
        Choice {
            value: value.into(),
            label: label.into(),
        }
    }
}

/// A single typed option value.
#[derive(Debug, Clone, PartialEq)]
pub enum OptionValue {
    Bool(bool),
    Text(String),
    Int(i64),
    Float(f64),
    Choice(String),
    Path(String),
}

impl OptionValue {
    /// Canonical raw rendering; feeding it back through [`validate_value`]
    /// yields an equal value.
    pub fn render(&self) -> String {
        match self {
            OptionValue::Bool(b) => b.to_string(),
            OptionValue::Text(s) | OptionValue::Choice(s) | OptionValue::Path(s) => s.clone(),
            OptionValue::Int(i) => i.to_string(),
            OptionValue::Float(f) => render_float(*f),
        }
    }

    fn matches_kind(&self, kind: OptionKind) -> bool {
        matches!(
            (self, kind),
            (OptionValue::Bool(_), OptionKind::Flag)
                | (OptionValue::Text(_), OptionKind::String)
                | (OptionValue::Int(_), OptionKind::Int)
                | (OptionValue::Float(_), OptionKind::Float)
                | (OptionValue::Choice(_), OptionKind::Choice)
                | (
                    OptionValue::Path(_),
                    OptionKind::InFile | OptionKind::OutFile | OptionKind::Dir
                )
        )
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn render_float(f: f64) -> String {
    // `Display` for f64 is the shortest round-trip form and never uses exponents.
    format!("{f}")
}

/// The value held by a set option: one scalar, or an ordered list for
/// repeatable options.
#[derive(Debug, Clone, PartialEq)]
pub enum SetValue {
    Single(OptionValue),
    Repeated(Vec<OptionValue>),
}

impl SetValue {
    pub fn values(&self) -> &[OptionValue] {
        match self {
            SetValue::Single(v) => std::slice::from_ref(v),
            SetValue::Repeated(vs) => vs,
        }
    }

    pub fn rendered(&self) -> Vec<String> {
        self.values().iter().map(OptionValue::render).collect()
    }
}

/// Static definition of one option.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionDef {
    pub id: String,
    pub label: String,
    pub flag: String,
    pub kind: OptionKind,
    pub required: bool,
    pub repeatable: bool,
    pub style: RenderStyle,
    pub default: Option<OptionValue>,
    pub choices: Vec<Choice>,
    pub range: Option<Range>,
    pub doc: String,
}

impl OptionDef {
    /// A new optional, non-repeatable option. Flags get [`RenderStyle::FlagOnly`],
    /// everything else [`RenderStyle::Positional`] until a flag is assigned.
    pub fn new(id: impl Into<String>, kind: OptionKind) -> Self {
        OptionDef {
            id: id.into(),
            label: String::new(),
            flag: String::new(),
            kind,
            required: false,
            repeatable: false,
            style: if kind == OptionKind::Flag {
                RenderStyle::FlagOnly
            } else {
                RenderStyle::Positional
            },
            default: None,
            choices: Vec::new(),
            range: None,
            doc: String::new(),
        }
    }

    /// Sets the flag token; for value-taking kinds this also switches the style
    /// to [`RenderStyle::SeparateToken`] unless one was chosen explicitly.
    pub fn flag(mut self, flag: impl Into<String>) -> Self {
        self.flag = flag.into();
        if self.style == RenderStyle::Positional {
            self.style = RenderStyle::SeparateToken;
        }
        self
    }

    pub fn style(mut self, style: RenderStyle) -> Self {
        self.style = style;
        self
    }

    pub fn label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn doc(mut self, doc: impl Into<String>) -> Self {
        self.doc = doc.into();
        self
    }

    pub fn required(mut self, required: bool) -> Self {
        self.required = required;
        self
    }

    pub fn repeatable(mut self, repeatable: bool) -> Self {
        self.repeatable = repeatable;
        self
    }

    pub fn default_value(mut self, value: OptionValue) -> Self {
        self.default = Some(value);
        self
    }

    pub fn choice(mut self, value: impl Into<String>, label: impl Into<String>) -> Self {
        self.choices.push(Choice::new(value, label));
        self
    }

    pub fn range(mut self, range: Range) -> Self {
        self.range = Some(range);
        self
    }

    /// Every per-option invariant this definition breaks.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.id.is_empty() {
            out.push("option id must not be empty".to_string());
        } else if self.id.chars().any(char::is_whitespace) {
            out.push(format!("option id `{}` must not contain whitespace", self.id));
        }

        if self.kind == OptionKind::Choice {
            if self.choices.is_empty() {
                out.push("Choice requires at least one choice".to_string());
            }
            let mut seen = HashSet::new();
            for c in &self.choices {
                if !seen.insert(c.value.as_str()) {
                    out.push(format!("duplicate choice value `{}`", c.value));
                }
            }
        } else if !self.choices.is_empty() {
            out.push(format!("choices are only allowed on choice options, not {}", self.kind));
        }

        if let Some(range) = &self.range {
            if !self.kind.is_numeric() {
                out.push(format!("range is only allowed on int or float options, not {}", self.kind));
            } else if range.kind() != self.kind {
                out.push(format!("range bounds must be {} values", self.kind));
            } else if !range.is_ordered() {
                let (min, max) = range.render();
                out.push(format!("range min {min} must not exceed max {max}"));
            }
        }

        if self.kind == OptionKind::Flag && self.style != RenderStyle::FlagOnly {
            out.push(format!("flag options must use style flagonly, not {}", self.style));
        }
        if self.style == RenderStyle::FlagOnly && self.kind != OptionKind::Flag {
            out.push(format!("style flagonly is only valid for flag options, not {}", self.kind));
        }

        if self.style == RenderStyle::Positional {
            if !self.flag.is_empty() {
                out.push(format!("positional option must not declare flag `{}`", self.flag));
            }
        } else if let Err(reason) = check_flag_token(&self.flag) {
            out.push(reason);
        }

        if let Some(default) = &self.default {
            if let Err(reason) = self.check_value(default) {
                out.push(format!("default value is invalid: {reason}"));
            }
        }

        for (what, text) in self.text_fields() {
            if let Some(c) = first_non_xml_char(text) {
                out.push(format!("{what} contains character U+{:04X} which XML cannot carry", c as u32));
            }
        }
        out
    }

    fn text_fields(&self) -> Vec<(&'static str, &str)> {
        let mut fields = vec![
            ("id", self.id.as_str()),
            ("label", self.label.as_str()),
            ("flag", self.flag.as_str()),
            ("doc", self.doc.as_str()),
        ];
        for c in &self.choices {
            fields.push(("choice value", c.value.as_str()));
            fields.push(("choice label", c.label.as_str()));
        }
        fields
    }

    /// Checks an already-typed value against kind, range and choices.
    pub fn check_value(&self, value: &OptionValue) -> Result<(), String> {
        if !value.matches_kind(self.kind) {
            return Err(format!("value type does not match kind {}", self.kind));
        }
        match (value, &self.range) {
            (OptionValue::Int(v), Some(Range::Int { min, max })) if v < min || v > max => {
                return Err(format!("{v} is outside the range [{min}, {max}]"));
            }
            (OptionValue::Float(v), _) if !v.is_finite() => {
                return Err(format!("{v} is not a finite number"));
            }
            (OptionValue::Float(v), Some(Range::Float { min, max })) if v < min || v > max => {
                return Err(format!(
                    "{} is outside the range [{}, {}]",
                    render_float(*v),
                    render_float(*min),
                    render_float(*max)
                ));
            }
            (OptionValue::Choice(key), _) if !self.choices.iter().any(|c| &c.value == key) => {
                return Err(format!("`{key}` is not one of the declared choices"));
            }
            (OptionValue::Path(p), _) if p.is_empty() => {
                return Err("path must not be empty".to_string());
            }
            _ => {}
        }
        if let OptionValue::Text(s) | OptionValue::Path(s) | OptionValue::Choice(s) = value {
            if let Some(c) = first_non_xml_char(s) {
                return Err(format!("character U+{:04X} cannot be passed or saved", c as u32));
            }
        }
        Ok(())
    }

    pub fn is_positional(&self) -> bool {
        self.style == RenderStyle::Positional
    }
}

/// Flag tokens start with `-`, are not `-` or `--`, and contain no whitespace
/// or `=`.
pub fn check_flag_token(flag: &str) -> Result<(), String> {
    if flag.is_empty() {
        return Err("non-positional option requires a flag".to_string());
    }
    if !flag.starts_with('-') || flag == "-" || flag == "--" {
        return Err(format!("flag `{flag}` must start with `-` and name an option"));
    }
    if flag.chars().any(|c| c.is_whitespace() || c == '=') {
        return Err(format!("flag `{flag}` must not contain whitespace or `=`"));
    }
    Ok(())
}

/// First character outside the XML 1.0 `Char` production, if any.
pub fn first_non_xml_char(s: &str) -> Option<char> {
    s.chars().find(|&c| {
        !matches!(c,
            '\t' | '\n' | '\r'
            | '\u{20}'..='\u{D7FF}'
            | '\u{E000}'..='\u{FFFD}'
            | '\u{10000}'..='\u{10FFFF}')
    })
}

/// Parses and coerces `raw` according to the option's kind and constraints.
///
/// Integers are 64-bit signed and floats 64-bit binary; non-finite floats are
/// rejected. Flags accept exactly `true` or `false`. Paths are checked only
/// syntactically here.
pub fn validate_value(def: &OptionDef, raw: &str) -> Result<OptionValue, ModelError> {
    let err = |reason: String| ModelError::Value {
        id: def.id.clone(),
        reason,
    };
    let value = match def.kind {
        OptionKind::Flag => match raw {
            "true" => OptionValue::Bool(true),
            "false" => OptionValue::Bool(false),
            _ => return Err(err(format!("expected `true` or `false`, got `{raw}`"))),
        },
        OptionKind::String => OptionValue::Text(raw.to_string()),
        OptionKind::Int => raw
            .parse::<i64>()
            .map(OptionValue::Int)
            .map_err(|e| err(format!("`{raw}` is not a 64-bit integer: {e}")))?,
        OptionKind::Float => {
            if !looks_decimal(raw) {
                return Err(err(format!("`{raw}` is not a number")));
            }
            raw.parse::<f64>()
                .map(OptionValue::Float)
                .map_err(|e| err(format!("`{raw}` is not a number: {e}")))?
        }
        OptionKind::Choice => OptionValue::Choice(raw.to_string()),
        OptionKind::InFile | OptionKind::OutFile | OptionKind::Dir => OptionValue::Path(raw.to_string()),
    };
    def.check_value(&value).map_err(err)?;
    Ok(value)
}

// Rust's f64 parser also accepts "inf", "NaN" and friends; only plain
// decimal notation is allowed here.
fn looks_decimal(raw: &str) -> bool {
    !raw.is_empty()
        && raw
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptionGroup {
    pub name: String,
    pub doc: String,
    /// Document order; this is also the assembly order.
    pub options: Vec<OptionDef>,
}

impl OptionGroup {
    pub fn new(name: impl Into<String>, doc: impl Into<String>) -> Self {
        OptionGroup {
            name: name.into(),
            doc: doc.into(),
            options: Vec::new(),
        }
    }

    pub fn option(mut self, def: OptionDef) -> Self {
        self.options.push(def);
        self
    }
}

/// Full description of a hosted program.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramSpec {
    pub name: String,
    pub executable: String,
    pub description: String,
    pub version: String,
    pub display_title: String,
    pub groups: Vec<OptionGroup>,
}

impl ProgramSpec {
    pub fn new(name: impl Into<String>, executable: impl Into<String>) -> Self {
        ProgramSpec {
            name: name.into(),
            executable: executable.into(),
            description: String::new(),
            version: String::new(),
            display_title: String::new(),
            groups: Vec::new(),
        }
    }

    /// All options in document order.
    pub fn options(&self) -> impl Iterator<Item = &OptionDef> {
        self.groups.iter().flat_map(|g| g.options.iter())
    }

    pub fn option(&self, id: &str) -> Option<&OptionDef> {
        self.options().find(|d| d.id == id)
    }

    /// Name of the group holding `id`.
    pub fn group_of(&self, id: &str) -> Option<&str> {
        self.groups
            .iter()
            .find(|g| g.options.iter().any(|d| d.id == id))
            .map(|g| g.name.as_str())
    }

    /// Every invariant violation, spec-wide and per option.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.executable.is_empty() {
            out.push("program executable must not be empty".to_string());
        }
        for (what, text) in [
            ("program name", &self.name),
            ("executable", &self.executable),
            ("description", &self.description),
            ("version", &self.version),
            ("display title", &self.display_title),
        ] {
            if let Some(c) = first_non_xml_char(text) {
                out.push(format!("{what} contains character U+{:04X} which XML cannot carry", c as u32));
            }
        }

        let mut group_names = HashSet::new();
        for g in &self.groups {
            if g.name.is_empty() {
                out.push("group name must not be empty".to_string());
            } else if !group_names.insert(g.name.as_str()) {
                out.push(format!("duplicate group name `{}`", g.name));
            }
            for (what, text) in [("group name", &g.name), ("group doc", &g.doc)] {
                if let Some(c) = first_non_xml_char(text) {
                    out.push(format!("{what} contains character U+{:04X} which XML cannot carry", c as u32));
                }
            }
        }

        let mut ids = HashSet::new();
        let mut flags = HashSet::new();
        for def in self.options() {
            for v in def.violations() {
                out.push(format!("option `{}`: {v}", def.id));
            }
            if !ids.insert(def.id.as_str()) {
                out.push(format!("duplicate option id `{}`", def.id));
            }
            if !def.flag.is_empty() && !flags.insert(def.flag.as_str()) {
                out.push(format!("duplicate flag `{}` (option `{}`)", def.flag, def.id));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidSpec(v))
        }
    }
}

/// Display color of an option in the option tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Black,
    Blue,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptionState {
    /// Required, no value yet (red).
    RequiredUnset,
    /// Optional, no value yet (black).
    OptionalUnset,
    /// User-specified value (blue).
    Set(SetValue),
}

impl OptionState {
    pub fn unset_for(def: &OptionDef) -> Self {
        if def.required {
            OptionState::RequiredUnset
        } else {
            OptionState::OptionalUnset
        }
    }

    pub fn color(&self) -> Color {
        match self {
            OptionState::RequiredUnset => Color::Red,
            OptionState::OptionalUnset => Color::Black,
            OptionState::Set(_) => Color::Blue,
        }
    }

    /// Wire name used by the service.
    pub fn wire_name(&self) -> &'static str {
        match self {
            OptionState::RequiredUnset => "required-unset",
            OptionState::OptionalUnset => "optional-unset",
            OptionState::Set(_) => "set",
        }
    }

    pub fn value(&self) -> Option<&SetValue> {
        match self {
            OptionState::Set(v) => Some(v),
            _ => None,
        }
    }
}

/// Live option states for one hosted program.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    spec: Arc<ProgramSpec>,
    states: IndexMap<String, OptionState>,
    working_dir: PathBuf,
    active_run: Option<String>,
}

impl SessionState {
    /// Fresh session: every option unset. Defaults are editor pre-fill only and
    /// are not applied.
    pub fn new(spec: impl Into<Arc<ProgramSpec>>, working_dir: impl Into<PathBuf>) -> Result<Self, ModelError> {
        let spec = spec.into();
        spec.validate()?;
        let states = spec
            .options()
            .map(|d| (d.id.clone(), OptionState::unset_for(d)))
            .collect();
        Ok(SessionState {
            spec,
            states,
            working_dir: working_dir.into(),
            active_run: None,
        })
    }

    pub fn spec(&self) -> &ProgramSpec {
        &self.spec
    }

    pub fn spec_arc(&self) -> &Arc<ProgramSpec> {
        &self.spec
    }

    pub fn working_dir(&self) -> &Path {
        &self.working_dir
    }

    pub fn active_run(&self) -> Option<&str> {
        self.active_run.as_deref()
    }

    pub fn state(&self, id: &str) -> Option<&OptionState> {
        self.states.get(id)
    }

    /// `(id, state)` pairs in document order.
    pub fn states(&self) -> impl Iterator<Item = (&str, &OptionState)> {
        self.states.iter().map(|(k, v)| (k.as_str(), v))
    }

    fn def(&self, id: &str) -> Result<&OptionDef, ModelError> {
        self.spec
            .option(id)
            .ok_or_else(|| ModelError::UnknownOption(id.to_string()))
    }

    fn ensure_idle(&self) -> Result<(), ModelError> {
        match &self.active_run {
            Some(run) => Err(ModelError::MutationDuringRun(run.clone())),
            None => Ok(()),
        }
    }

    /// Validates `raw` and stores it. Repeatable options append.
    pub fn set_option(&self, id: &str, raw: &str) -> Result<Self, ModelError> {
        let def = self.def(id)?;
        self.ensure_idle()?;
        let value = validate_value(def, raw)?;
        let new_state = if def.repeatable {
            let mut list = match self.states.get(id) {
                Some(OptionState::Set(SetValue::Repeated(vs))) => vs.clone(),
                _ => Vec::new(),
            };
            list.push(value);
            OptionState::Set(SetValue::Repeated(list))
        } else {
            OptionState::Set(SetValue::Single(value))
        };
        let mut next = self.clone();
        next.states.insert(id.to_string(), new_state);
        Ok(next)
    }

    /// Returns the option to its unset state. Clearing an unset option is a
    /// no-op.
    pub fn clear_option(&self, id: &str) -> Result<Self, ModelError> {
        let def = self.def(id)?;
        self.ensure_idle()?;
        let mut next = self.clone();
        next.states.insert(id.to_string(), OptionState::unset_for(def));
        Ok(next)
    }

    pub fn reset_all(&self) -> Result<Self, ModelError> {
        self.ensure_idle()?;
        let mut next = self.clone();
        for def in self.spec.options() {
            next.states.insert(def.id.clone(), OptionState::unset_for(def));
        }
        Ok(next)
    }

    /// Ids of required options without a value, in document order.
    pub fn unmet_required(&self) -> Vec<String> {
        self.states
            .iter()
            .filter(|(_, s)| matches!(s, OptionState::RequiredUnset))
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Applies saved raw values, e.g. the `<value>` elements of a loaded spec
    /// document.
    pub fn apply_values<'a, I>(&self, values: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut next = self.clone();
        for (id, raw) in values {
            next = next.set_option(id, raw)?;
        }
        Ok(next)
    }

    /// Marks `run_id` as the active run; mutations fail until it is cleared.
    pub fn begin_run(&self, run_id: impl Into<String>) -> Self {
        let mut next = self.clone();
        next.active_run = Some(run_id.into());
        next
    }

    pub fn end_run(&self) -> Self {
        let mut next = self.clone();
        next.active_run = None;
        next
    }

    pub fn with_working_dir(&self, dir: impl Into<PathBuf>) -> Self {
        let mut next = self.clone();
        next.working_dir = dir.into();
        next
    }

    /// Set values with presence semantics: `false` flag entries are dropped and
    /// options left with nothing to emit are omitted. This is exactly what the
    /// assembled command line carries.
    pub fn effective_values(&self) -> IndexMap<String, SetValue> {
        let mut out = IndexMap::new();
        for def in self.spec.options() {
            let Some(OptionState::Set(v)) = self.states.get(&def.id) else {
                continue;
            };
            if let Some(v) = effective(v) {
                out.insert(def.id.clone(), v);
            }
        }
        out
    }
}

fn effective(v: &SetValue) -> Option<SetValue> {
    match v {
        SetValue::Single(OptionValue::Bool(false)) => None,
        SetValue::Single(x) => Some(SetValue::Single(x.clone())),
        SetValue::Repeated(vs) => {
            let kept: Vec<_> = vs
                .iter()
                .filter(|x| !matches!(x, OptionValue::Bool(false)))
                .cloned()
                .collect();
            (!kept.is_empty()).then_some(SetValue::Repeated(kept))
        }
    }
}

/// Index of options by id, for callers doing many lookups.
pub fn index_by_id(spec: &ProgramSpec) -> HashMap<&str, &OptionDef> {
    spec.options().map(|d| (d.id.as_str(), d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn float_def() -> OptionDef {
        OptionDef::new("theta", OptionKind::Float)
            .flag("-t")
            .range(Range::Float { min: 0.0, max: 10.0 })
    }

    fn two_option_spec() -> ProgramSpec {
        let mut spec = ProgramSpec::new("demo", "demo");
        spec.groups.push(
            OptionGroup::new("main", "")
                .option(OptionDef::new("a", OptionKind::Int).flag("-a").required(true))
                .option(OptionDef::new("b", OptionKind::String).flag("-b"))
                .option(OptionDef::new("c", OptionKind::Int).flag("-c").required(true))
                .option(OptionDef::new("inc", OptionKind::Dir).flag("-I").repeatable(true)),
        );
        spec
    }

    #[test]
    fn new_session_marks_required_red_and_optional_black() {
        let s = SessionState::new(two_option_spec(), "/tmp").unwrap();
        assert_eq!(s.state("a"), Some(&OptionState::RequiredUnset));
        assert_eq!(s.state("b"), Some(&OptionState::OptionalUnset));
        assert_eq!(s.state("a").unwrap().color(), Color::Red);
        assert_eq!(s.state("b").unwrap().color(), Color::Black);
        assert!(s.active_run().is_none());
    }

    #[test]
    fn new_session_on_empty_spec() {
        let s = SessionState::new(ProgramSpec::new("x", "x"), ".").unwrap();
        assert_eq!(s.states().count(), 0);
    }

    #[test]
    fn duplicate_ids_are_invalid() {
        let mut spec = ProgramSpec::new("x", "x");
        spec.groups.push(
            OptionGroup::new("g", "")
                .option(OptionDef::new("x", OptionKind::Flag).flag("-x"))
                .option(OptionDef::new("x", OptionKind::Flag).flag("-y")),
        );
        assert!(matches!(SessionState::new(spec, "."), Err(ModelError::InvalidSpec(_))));
    }

    #[test]
    fn defaults_are_not_applied() {
        let mut spec = ProgramSpec::new("x", "x");
        spec.groups.push(
            OptionGroup::new("g", "")
                .option(float_def().default_value(OptionValue::Float(1.5))),
        );
        let s = SessionState::new(spec, ".").unwrap();
        assert_eq!(s.state("theta"), Some(&OptionState::OptionalUnset));
    }

    #[test]
    fn validate_float_in_range() {
        assert_eq!(validate_value(&float_def(), "4.5").unwrap(), OptionValue::Float(4.5));
        assert!(validate_value(&float_def(), "10.5").is_err());
        assert!(validate_value(&float_def(), "abc").is_err());
        assert!(validate_value(&float_def(), "NaN").is_err());
        assert!(validate_value(&float_def(), "inf").is_err());
    }

    #[test]
    fn validate_rejects_unknown_choice() {
        let def = OptionDef::new("model", OptionKind::Choice)
            .flag("--model")
            .choice("hky", "HKY")
            .choice("jc", "Jukes-Cantor");
        let err = validate_value(&def, "gtr").unwrap_err();
        assert!(matches!(err, ModelError::Value { ref id, .. } if id == "model"));
        // case-sensitive
        assert!(validate_value(&def, "HKY").is_err());
        assert_eq!(validate_value(&def, "jc").unwrap(), OptionValue::Choice("jc".into()));
    }

    #[test]
    fn validate_flag_only_true_false() {
        let def = OptionDef::new("v", OptionKind::Flag).flag("-v");
        assert_eq!(validate_value(&def, "true").unwrap(), OptionValue::Bool(true));
        assert_eq!(validate_value(&def, "false").unwrap(), OptionValue::Bool(false));
        assert!(validate_value(&def, "yes").is_err());
        assert!(validate_value(&def, "TRUE").is_err());
    }

    #[test]
    fn int_width_boundaries() {
        let def = OptionDef::new("n", OptionKind::Int).flag("-n");
        // 2^31 fits comfortably in 64 bits.
        assert_eq!(validate_value(&def, "2147483648").unwrap(), OptionValue::Int(2147483648));
        assert_eq!(validate_value(&def, "9223372036854775807").unwrap(), OptionValue::Int(i64::MAX));
        assert_eq!(validate_value(&def, "-9223372036854775808").unwrap(), OptionValue::Int(i64::MIN));
        assert!(validate_value(&def, "9223372036854775808").is_err());
        assert!(validate_value(&def, "-9223372036854775809").is_err());
    }

    #[test]
    fn paths_accepted_without_existence_check() {
        let def = OptionDef::new("in", OptionKind::InFile).flag("-i");
        assert_eq!(
            validate_value(&def, "/definitely/not/here").unwrap(),
            OptionValue::Path("/definitely/not/here".into())
        );
        assert!(validate_value(&def, "").is_err());
        assert!(validate_value(&def, "a\0b").is_err());
    }

    #[test]
    fn set_and_clear() {
        let s = SessionState::new(two_option_spec(), ".").unwrap();
        let s2 = s.set_option("a", "4").unwrap();
        assert_eq!(s2.state("a").unwrap().color(), Color::Blue);
        assert_eq!(s2.state("b"), s.state("b"));
        assert_eq!(s2.clear_option("a").unwrap(), s);
        assert_eq!(s.clear_option("b").unwrap(), s);
        assert!(matches!(s.set_option("zz", "1"), Err(ModelError::UnknownOption(_))));
        assert!(matches!(s.clear_option("zz"), Err(ModelError::UnknownOption(_))));
    }

    #[test]
    fn repeatable_appends_in_order() {
        let s = SessionState::new(two_option_spec(), ".").unwrap();
        let s = s.set_option("inc", "a").unwrap().set_option("inc", "b").unwrap();
        assert_eq!(
            s.state("inc").unwrap().value().unwrap().rendered(),
            vec!["a".to_string(), "b".to_string()]
        );
    }

    #[test]
    fn unmet_required_in_document_order() {
        let s = SessionState::new(two_option_spec(), ".").unwrap();
        assert_eq!(s.unmet_required(), vec!["a", "c"]);
        assert_eq!(s.set_option("a", "1").unwrap().unmet_required(), vec!["c"]);
        let mut spec = ProgramSpec::new("x", "x");
        spec.groups.push(OptionGroup::new("g", "").option(OptionDef::new("o", OptionKind::Flag).flag("-o")));
        assert!(SessionState::new(spec, ".").unwrap().unmet_required().is_empty());
    }

    #[test]
    fn mutation_during_run_is_refused() {
        let s = SessionState::new(two_option_spec(), ".").unwrap().begin_run("r1");
        assert!(matches!(s.set_option("a", "1"), Err(ModelError::MutationDuringRun(_))));
        assert!(matches!(s.clear_option("a"), Err(ModelError::MutationDuringRun(_))));
        assert!(matches!(s.reset_all(), Err(ModelError::MutationDuringRun(_))));
        assert!(s.end_run().set_option("a", "1").is_ok());
    }

    #[test]
    fn reset_returns_to_fresh_session() {
        let fresh = SessionState::new(two_option_spec(), ".").unwrap();
        let s = fresh
            .set_option("a", "1")
            .unwrap()
            .set_option("b", "x")
            .unwrap()
            .set_option("inc", "d")
            .unwrap();
        assert_eq!(s.reset_all().unwrap(), fresh);
        assert_eq!(fresh.reset_all().unwrap(), fresh);
    }

    #[test]
    fn def_invariants() {
        let bad_choice = OptionDef::new("c", OptionKind::Choice).flag("-c");
        assert!(bad_choice
            .violations()
            .iter()
            .any(|v| v == "Choice requires at least one choice"));
        let bad_range = OptionDef::new("s", OptionKind::String)
            .flag("-s")
            .range(Range::Int { min: 0, max: 1 });
        assert_eq!(bad_range.violations().len(), 1);
        let inverted = OptionDef::new("n", OptionKind::Int)
            .flag("-n")
            .range(Range::Int { min: 5, max: 1 });
        assert_eq!(inverted.violations().len(), 1);
        let flag_style = OptionDef::new("v", OptionKind::Flag)
            .flag("-v")
            .style(RenderStyle::SeparateToken);
        assert_eq!(flag_style.violations().len(), 1);
        let bad_default = float_def().default_value(OptionValue::Float(11.0));
        assert_eq!(bad_default.violations().len(), 1);
        let spaced = OptionDef::new("a b", OptionKind::Flag).flag("-a");
        assert_eq!(spaced.violations().len(), 1);
        assert!(float_def().violations().is_empty());
    }

    #[test]
    fn kind_and_style_names_round_trip() {
        for k in OptionKind::ALL {
            assert_eq!(k.as_str().parse::<OptionKind>().unwrap(), k);
        }
        for s in RenderStyle::ALL {
            assert_eq!(s.as_str().parse::<RenderStyle>().unwrap(), s);
        }
        assert!("color".parse::<OptionKind>().is_err());
    }

    #[test]
    fn float_rendering_is_shortest() {
        assert_eq!(render_float(4.0), "4");
        assert_eq!(render_float(0.1), "0.1");
        assert_eq!(render_float(-2.5), "-2.5");
        let x = 1.0e-7_f64;
        assert_eq!(render_float(x).parse::<f64>().unwrap(), x);
    }
}
