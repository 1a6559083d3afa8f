use guiliner_core::argdoc::{parse_argv, ArgSpec};
use guiliner_core::assemble::{assemble, preview_text, AssembleError, MISSING_MARKER};
use guiliner_testkit::{arb_assignments, arb_complete_session, arb_parseable_spec, posix_split, session_with};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn preview_splits_back_to_argv(s in arb_complete_session()) {
        let cmd = assemble(&s).unwrap();
        let words = posix_split(&cmd.preview).map_err(TestCaseError::fail)?;
        prop_assert_eq!(words, cmd.argv.clone());
        prop_assert_eq!(preview_text(&s), cmd.preview);
    }

    #[test]
    fn parsing_assembled_argv_recovers_the_session(s in arb_complete_session()) {
        let cmd = assemble(&s).unwrap();
        let arg_spec = ArgSpec::from_program_spec(s.spec());
        let parsed = parse_argv(&arg_spec, &cmd.argv[1..])
            .map_err(|e| TestCaseError::fail(format!("{e}: {:?}", cmd.argv)))?;
        let mut got: Vec<_> = parsed.values.into_iter().collect();
        let mut want: Vec<_> = s.effective_values().into_iter().collect();
        got.sort_by(|a, b| a.0.cmp(&b.0));
        want.sort_by(|a, b| a.0.cmp(&b.0));
        prop_assert_eq!(got, want);
    }

    #[test]
    fn incomplete_sessions_are_refused_with_a_marker(
        (spec, values) in arb_parseable_spec().prop_flat_map(|s| { let v = arb_assignments(&s, false); (Just(s), v) })
    ) {
        let s = session_with(&spec, &values);
        let missing = s.unmet_required();
        let text = preview_text(&s);
        if missing.is_empty() {
            prop_assert!(!text.contains(MISSING_MARKER));
        } else {
            prop_assert_eq!(assemble(&s), Err(AssembleError::MissingRequired(missing.clone())));
            let marker = format!("\n{MISSING_MARKER}{}", missing.join(", "));
            prop_assert!(text.ends_with(&marker));
        }
    }
}
