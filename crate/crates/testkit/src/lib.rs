//! Test support: proptest strategies for valid specs and sessions, and an
//! independent POSIX word splitter used as an oracle for preview strings.

use guiliner_core::model::{
    Choice, OptionDef, OptionGroup, OptionKind, OptionValue, ProgramSpec, Range, RenderStyle, SessionState,
};
use guiliner_core::ArgSpec;
use proptest::prelude::*;
use proptest::sample::Index;

/// Free text that exercises XML escaping: markup characters, quotes,
/// whitespace control characters and non-ASCII letters.
pub fn arb_text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 &<>\"'=\t\n\r\u{e9}\u{4e2d}\u{1f600}-]{0,16}"
}

/// Text for option values, including shell metacharacters.
pub fn arb_value_text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ;&|<>\"'`$*?()\\\\=\u{e9}.,/_-]{0,12}"
}

fn arb_path_text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ._/'-]{1,12}"
}

fn arb_choices() -> impl Strategy<Value = Vec<Choice>> {
    proptest::collection::btree_set("[a-z][a-z0-9_-]{0,5}", 1..5).prop_flat_map(|values| {
        let n = values.len();
        (Just(values), proptest::collection::vec(arb_text(), n)).prop_map(|(values, labels)| {
            values
                .into_iter()
                .zip(labels)
                .map(|(v, l)| Choice::new(v, l))
                .collect()
        })
    })
}

fn arb_int_range() -> impl Strategy<Value = Option<Range>> {
    prop_oneof![
        2 => Just(None),
        1 => (-1000i64..1000, 0i64..5000).prop_map(|(min, w)| Some(Range::Int { min, max: min + w })),
        1 => Just(Some(Range::Int { min: i64::MIN, max: i64::MAX })),
    ]
}

fn arb_float_range() -> impl Strategy<Value = Option<Range>> {
    prop_oneof![
        2 => Just(None),
        2 => (-1000.0f64..1000.0, 0.0f64..5000.0).prop_map(|(min, w)| Some(Range::Float { min, max: min + w })),
    ]
}

/// A value accepted by `def`. Ints and floats stay inside the range.
pub fn arb_value_for(def: &OptionDef) -> BoxedStrategy<OptionValue> {
    match def.kind {
        OptionKind::Flag => any::<bool>().prop_map(OptionValue::Bool).boxed(),
        OptionKind::String => arb_value_text().prop_map(OptionValue::Text).boxed(),
        OptionKind::Int => match def.range {
            Some(Range::Int { min, max }) => (min..=max).prop_map(OptionValue::Int).boxed(),
            _ => any::<i64>().prop_map(OptionValue::Int).boxed(),
        },
        OptionKind::Float => match def.range {
            Some(Range::Float { min, max }) => (min..=max).prop_map(OptionValue::Float).boxed(),
            _ => prop_oneof![
                proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO,
                (-1e6f64..1e6),
            ]
            .prop_map(OptionValue::Float)
            .boxed(),
        },
        OptionKind::Choice => {
            let values: Vec<String> = def.choices.iter().map(|c| c.value.clone()).collect();
            proptest::sample::select(values).prop_map(OptionValue::Choice).boxed()
        }
        OptionKind::InFile | OptionKind::OutFile | OptionKind::Dir => {
            arb_path_text().prop_map(OptionValue::Path).boxed()
        }
    }
}

/// Shape of one generated option before ids and flags are assigned.
#[derive(Debug, Clone)]
struct Shape {
    kind: OptionKind,
    positional: bool,
    equals: bool,
    long_flag: bool,
    required: bool,
    repeatable: bool,
    label: String,
    doc: String,
}

fn arb_shape() -> impl Strategy<Value = Shape> {
    (
        proptest::sample::select(OptionKind::ALL.to_vec()),
        prop::bool::weighted(0.25),
        any::<bool>(),
        any::<bool>(),
        any::<bool>(),
        prop::bool::weighted(0.25),
        arb_text(),
        arb_text(),
    )
        .prop_map(|(kind, positional, equals, long_flag, required, repeatable, label, doc)| Shape {
            kind,
            positional: positional && kind != OptionKind::Flag,
            equals,
            long_flag,
            required,
            repeatable,
            label,
            doc,
        })
}

fn build_def(i: usize, shape: Shape) -> BoxedStrategy<OptionDef> {
    let mut def = OptionDef::new(format!("opt{i}"), shape.kind)
        .label(shape.label)
        .doc(shape.doc)
        .required(shape.required)
        .repeatable(shape.repeatable);
    if !shape.positional {
        let flag = if shape.long_flag || shape.kind != OptionKind::Flag && shape.equals {
            format!("--opt-{i}")
        } else {
            format!("-o{i}")
        };
        def = def.flag(flag);
        if shape.kind != OptionKind::Flag && shape.equals {
            def = def.style(RenderStyle::EqualsJoined);
        }
    }
    let with_constraints: BoxedStrategy<OptionDef> = match shape.kind {
        OptionKind::Int => arb_int_range()
            .prop_map(move |r| OptionDef { range: r, ..def.clone() })
            .boxed(),
        OptionKind::Float => arb_float_range()
            .prop_map(move |r| OptionDef { range: r, ..def.clone() })
            .boxed(),
        OptionKind::Choice => arb_choices()
            .prop_map(move |c| OptionDef { choices: c, ..def.clone() })
            .boxed(),
        _ => Just(def).boxed(),
    };
    with_constraints
        .prop_flat_map(|def| {
            let value = proptest::option::weighted(0.4, arb_value_for(&def));
            (Just(def), value)
        })
        .prop_map(|(def, default)| OptionDef { default, ..def })
        .boxed()
}

fn arb_defs(max: usize) -> impl Strategy<Value = Vec<OptionDef>> {
    proptest::collection::vec(arb_shape(), 0..=max).prop_flat_map(|shapes| {
        shapes
            .into_iter()
            .enumerate()
            .map(|(i, s)| build_def(i, s))
            .collect::<Vec<_>>()
    })
}

fn split_into_groups(defs: Vec<OptionDef>, cuts: Vec<Index>, docs: Vec<String>) -> Vec<OptionGroup> {
    let mut bounds: Vec<usize> = cuts.iter().map(|c| c.index(defs.len() + 1)).collect();
    bounds.sort_unstable();
    let mut groups = Vec::new();
    let mut rest = defs.into_iter();
    let mut start = 0;
    for (g, end) in bounds.into_iter().chain(std::iter::once(usize::MAX)).enumerate() {
        let take = end.saturating_sub(start);
        let end = start + take;
        let options: Vec<OptionDef> = rest.by_ref().take(take).collect();
        let doc = docs.get(g).cloned().unwrap_or_default();
        groups.push(OptionGroup {
            name: format!("Group {g}"),
            doc,
            options,
        });
        start = end;
    }
    groups
}

/// Valid program specs covering every kind, style and constraint, with
/// awkward text in labels and docs.
pub fn arb_program_spec() -> impl Strategy<Value = ProgramSpec> {
    (
        arb_defs(12),
        proptest::collection::vec(any::<Index>(), 0..3),
        proptest::collection::vec(arb_text(), 4),
        "[a-z][a-z0-9-]{0,8}",
        "[a-z][a-z0-9./-]{0,8}",
        arb_text(),
        "[0-9.a-z]{0,5}",
        arb_text(),
    )
        .prop_map(|(defs, cuts, docs, name, exe, description, version, title)| ProgramSpec {
            name,
            executable: exe,
            description,
            version,
            display_title: title,
            groups: split_into_groups(defs, cuts, docs),
        })
}

/// Reorders and adjusts options so the spec also satisfies the argument
/// parser's rules: flags are never required, positionals are required
/// single-value ones followed by at most one optional or repeatable one.
pub fn make_parseable(mut spec: ProgramSpec) -> ProgramSpec {
    let mut tail_taken = false;
    for group in &mut spec.groups {
        for def in &mut group.options {
            if def.kind == OptionKind::Flag {
                def.required = false;
            }
            if def.is_positional() {
                if tail_taken {
                    *def = OptionDef {
                        flag: format!("--{}", def.id),
                        style: RenderStyle::SeparateToken,
                        ..def.clone()
                    };
                } else if !def.required || def.repeatable {
                    tail_taken = true;
                }
            }
        }
    }
    // The tail positional must come after every required positional.
    let tail = spec
        .groups
        .iter()
        .flat_map(|g| g.options.iter())
        .find(|d| d.is_positional() && (!d.required || d.repeatable))
        .map(|d| d.id.clone());
    if let Some(tail) = tail {
        let mut moved = None;
        for group in &mut spec.groups {
            if let Some(pos) = group.options.iter().position(|d| d.id == tail) {
                moved = Some(group.options.remove(pos));
            }
        }
        if let (Some(def), Some(last)) = (moved, spec.groups.last_mut()) {
            last.options.push(def);
        }
    }
    spec
}

/// Program specs that are also valid [`ArgSpec`]s.
pub fn arb_parseable_spec() -> impl Strategy<Value = ProgramSpec> {
    arb_program_spec().prop_map(make_parseable)
}

pub fn arb_arg_spec() -> impl Strategy<Value = ArgSpec> {
    (arb_parseable_spec(), 1u8..=8, "[0-9]{4}-[0-9]{2}-[0-9]{2}")
        .prop_map(|(spec, section, date)| ArgSpec::from_program_spec(&spec).man_section(section).date(date))
}

/// Raw values to set, per option in document order. Repeatable options get
/// zero or more values, others zero or one.
pub fn arb_assignments(spec: &ProgramSpec, fill_required: bool) -> BoxedStrategy<Vec<(String, Vec<String>)>> {
    let per_option: Vec<BoxedStrategy<(String, Vec<String>)>> = spec
        .options()
        .map(|def| {
            let id = def.id.clone();
            let min = usize::from(fill_required && def.required);
            let max = if def.repeatable { 4 } else { 1 };
            proptest::collection::vec(arb_value_for(def).prop_map(|v| v.render()), min..=max)
                .prop_map(move |vals| (id.clone(), vals))
                .boxed()
        })
        .collect();
    per_option.boxed()
}

/// Session over `spec` with the given raw values applied in order.
pub fn session_with(spec: &ProgramSpec, assignments: &[(String, Vec<String>)]) -> SessionState {
    let mut session = SessionState::new(spec.clone(), "/work").expect("generated spec is valid");
    for (id, values) in assignments {
        for raw in values {
            session = session.set_option(id, raw).expect("generated value is valid");
        }
    }
    session
}

/// Complete sessions (every required option set) over parseable specs.
pub fn arb_complete_session() -> impl Strategy<Value = SessionState> {
    arb_parseable_spec()
        .prop_flat_map(|spec| {
            let values = arb_assignments(&spec, true);
            (Just(spec), values)
        })
        .prop_map(|(spec, values)| session_with(&spec, &values))
}

/// Splits a POSIX `sh` command line into words, handling single quotes,
/// double quotes and backslash escapes. Expansions are not performed; words
/// containing unquoted `$`, backquote or glob characters are rejected.
pub fn posix_split(line: &str) -> Result<Vec<String>, String> {
    let mut words = Vec::new();
    let mut word = String::new();
    let mut in_word = false;
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        match c {
            ' ' | '\t' | '\n' => {
                if in_word {
                    words.push(std::mem::take(&mut word));
                    in_word = false;
                }
            }
            '\'' => {
                in_word = true;
                loop {
                    match chars.next() {
                        Some('\'') => break,
                        Some(x) => word.push(x),
                        None => return Err("unterminated single quote".into()),
                    }
                }
            }
            '"' => {
                in_word = true;
                loop {
                    match chars.next() {
                        Some('"') => break,
                        Some('\\') => match chars.next() {
                            Some(x @ ('$' | '`' | '"' | '\\')) => word.push(x),
                            Some('\n') => {}
                            Some(x) => {
                                word.push('\\');
                                word.push(x);
                            }
                            None => return Err("unterminated double quote".into()),
                        },
                        Some(x @ ('$' | '`')) => return Err(format!("expansion `{x}` inside double quotes")),
                        Some(x) => word.push(x),
                        None => return Err("unterminated double quote".into()),
                    }
                }
            }
            '\\' => match chars.next() {
                Some('\n') => {}
                Some(x) => {
                    in_word = true;
                    word.push(x);
                }
                None => return Err("trailing backslash".into()),
            },
            ';' | '&' | '|' | '<' | '>' | '(' | ')' | '$' | '`' | '*' | '?' | '[' | '#' | '~' => {
                return Err(format!("unquoted shell metacharacter `{c}`"));
            }
            x => {
                in_word = true;
                word.push(x);
            }
        }
    }
    if in_word {
        words.push(word);
    }
    Ok(words)
}
