//! Builds the argv vector and preview string from a session.

use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::model::{OptionState, OptionValue, RenderStyle, SessionState, SetValue};
use crate::quote::shell_join;

/// Prefix of the marker line appended to previews of incomplete sessions.
pub const MISSING_MARKER: &str = "MISSING REQUIRED: ";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssembleError {
    #[error("required options not set: {}", .0.join(", "))]
    MissingRequired(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssembledCommand {
    /// `argv[0]` is the spec's executable.
    pub argv: Vec<String>,
    /// Shell-quoted display form of `argv`. Never executed.
    pub preview: String,
    pub cwd: PathBuf,
}

/// Assembles the command for a complete session.
///
/// Flagged options come first in document order, then positional values in
/// document order. If any positional value starts with `-`, a `--` separator
/// is placed before the positionals so it cannot be read as a flag.
pub fn assemble(session: &SessionState) -> Result<AssembledCommand, AssembleError> {
    let missing = session.unmet_required();
    if !missing.is_empty() {
        return Err(AssembleError::MissingRequired(missing));
    }
    let argv = render_argv(session);
    Ok(AssembledCommand {
        preview: shell_join(&argv),
        argv,
        cwd: session.working_dir().to_path_buf(),
    })
}

/// Preview for display. Incomplete sessions get the partial command followed
/// by a line naming the missing required options.
pub fn preview_text(session: &SessionState) -> String {
    let missing = session.unmet_required();
    let partial = shell_join(&render_argv(session));
    if missing.is_empty() {
        partial
    } else {
        format!("{partial}\n{MISSING_MARKER}{}", missing.join(", "))
    }
}

fn render_argv(session: &SessionState) -> Vec<String> {
    let spec = session.spec();
    let mut argv = vec![spec.executable.clone()];
    let mut positionals = Vec::new();
    for def in spec.options() {
        let Some(OptionState::Set(value)) = session.state(&def.id) else {
            continue;
        };
        let values = match value {
            SetValue::Single(v) => std::slice::from_ref(v),
            SetValue::Repeated(vs) => vs.as_slice(),
        };
        for v in values {
            match def.style {
                RenderStyle::SeparateToken => {
                    argv.push(def.flag.clone());
                    argv.push(v.render());
                }
                RenderStyle::EqualsJoined => argv.push(format!("{}={}", def.flag, v.render())),
                RenderStyle::FlagOnly => {
                    if matches!(v, OptionValue::Bool(true)) {
                        argv.push(def.flag.clone());
                    }
                }
                RenderStyle::Positional => positionals.push(v.render()),
            }
        }
    }
    if positionals.iter().any(|p| p.starts_with('-')) {
        argv.push("--".to_string());
    }
    argv.extend(positionals);
    argv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{OptionDef, OptionGroup, OptionKind, ProgramSpec};

    fn session(defs: Vec<OptionDef>) -> SessionState {
        let mut spec = ProgramSpec::new("mysim", "mysim");
        let mut g = OptionGroup::new("g", "");
        g.options = defs;
        spec.groups.push(g);
        SessionState::new(spec, "/work").unwrap()
    }

    #[test]
    fn empty_command() {
        let cmd = assemble(&session(vec![OptionDef::new("v", OptionKind::Flag).flag("-v")])).unwrap();
        assert_eq!(cmd.argv, vec!["mysim"]);
        assert_eq!(cmd.preview, "mysim");
        assert_eq!(cmd.cwd, PathBuf::from("/work"));
    }

    #[test]
    fn separate_float_uses_shortest_form() {
        let s = session(vec![OptionDef::new("t", OptionKind::Float).flag("-t")])
            .set_option("t", "4.0")
            .unwrap();
        let cmd = assemble(&s).unwrap();
        assert_eq!(cmd.argv, vec!["mysim", "-t", "4"]);
        assert_eq!(cmd.preview, "mysim -t 4");
    }

    #[test]
    fn string_with_space_stays_one_element() {
        let s = session(vec![OptionDef::new("name", OptionKind::String).flag("--name")])
            .set_option("name", "two words")
            .unwrap();
        let cmd = assemble(&s).unwrap();
        assert_eq!(cmd.argv, vec!["mysim", "--name", "two words"]);
        assert_eq!(cmd.preview, "mysim --name 'two words'");
    }

    #[test]
    fn styles_and_order() {
        let defs = vec![
            OptionDef::new("input", OptionKind::InFile),
            OptionDef::new("mode", OptionKind::Choice)
                .flag("--mode")
                .style(RenderStyle::EqualsJoined)
                .choice("fast", "")
                .choice("slow", ""),
            OptionDef::new("v", OptionKind::Flag).flag("-v"),
            OptionDef::new("q", OptionKind::Flag).flag("-q"),
            OptionDef::new("inc", OptionKind::Dir).flag("-I").repeatable(true),
        ];
        // Set in reverse document order; output follows document order.
        let s = session(defs)
            .set_option("inc", "b")
            .unwrap()
            .set_option("q", "false")
            .unwrap()
            .set_option("v", "true")
            .unwrap()
            .set_option("mode", "fast")
            .unwrap()
            .set_option("input", "data.txt")
            .unwrap()
            .set_option("inc", "a")
            .unwrap();
        let cmd = assemble(&s).unwrap();
        assert_eq!(
            cmd.argv,
            vec!["mysim", "--mode=fast", "-v", "-I", "b", "-I", "a", "data.txt"]
        );
    }

    #[test]
    fn dash_positional_gets_separator() {
        let s = session(vec![OptionDef::new("n", OptionKind::Int)])
            .set_option("n", "-5")
            .unwrap();
        assert_eq!(assemble(&s).unwrap().argv, vec!["mysim", "--", "-5"]);
    }

    #[test]
    fn missing_required() {
        let s = session(vec![
            OptionDef::new("seed", OptionKind::Int).flag("--seed").required(true),
            OptionDef::new("t", OptionKind::Float).flag("-t"),
        ])
        .set_option("t", "1.5")
        .unwrap();
        assert_eq!(
            assemble(&s),
            Err(AssembleError::MissingRequired(vec!["seed".to_string()]))
        );
        let text = preview_text(&s);
        assert!(text.ends_with("MISSING REQUIRED: seed"), "{text}");
        assert!(text.starts_with("mysim -t 1.5\n"));
        let done = s.set_option("seed", "7").unwrap();
        assert_eq!(preview_text(&done), assemble(&done).unwrap().preview);
    }
}
