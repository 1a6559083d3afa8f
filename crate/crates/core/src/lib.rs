//! Core of the guiliner host: the option model, the XML spec format, command
//! assembly, process execution and the embeddable argument/doc library.

pub mod argdoc;
pub mod assemble;
pub mod fixtures;
pub mod model;
pub mod quote;
pub mod runner;
pub mod xml;

pub use argdoc::{emit, parse_argv, ArgError, ArgSpec, EmitFormat, ParsedArgs};
pub use assemble::{assemble, preview_text, AssembleError, AssembledCommand};
pub use model::{
    Choice, Color, ModelError, OptionDef, OptionGroup, OptionKind, OptionState, OptionValue, ProgramSpec, Range,
    RenderStyle, SessionState, SetValue,
};
pub use runner::{launch, start_run, RunError, RunHandle, RunOptions, RunRecord, RunStatus, Stream};
pub use xml::{parse_spec, serialize_spec, validate_document, SpecDocument, ValidationReport, XmlError};
