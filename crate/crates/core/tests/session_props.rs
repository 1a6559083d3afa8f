//! The session is checked against a plain reference model: a map from option
//! id to the list of accepted values.

use std::collections::HashMap;

use guiliner_core::model::{validate_value, Color, ModelError, OptionDef, OptionState, ProgramSpec, SessionState};
use guiliner_core::OptionValue;
use guiliner_testkit::{arb_program_spec, arb_value_for};
use proptest::prelude::*;
use proptest::sample::Index;

#[derive(Debug, Clone)]
enum Op {
    Set(Index, String),
    SetValid(Index, Index),
    Clear(Index),
    Reset,
    BeginRun,
    EndRun,
}

fn arb_op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (any::<Index>(), "[-a-z0-9. ]{0,6}").prop_map(|(i, s)| Op::Set(i, s)),
        5 => (any::<Index>(), any::<Index>()).prop_map(|(i, v)| Op::SetValid(i, v)),
        2 => any::<Index>().prop_map(Op::Clear),
        1 => Just(Op::Reset),
        1 => Just(Op::BeginRun),
        1 => Just(Op::EndRun),
    ]
}

fn sample_value(def: &OptionDef, pick: &Index) -> String {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
    let seed = [pick.index(251) as u8; 32];
    let mut runner = TestRunner::new_with_rng(Config::default(), TestRng::from_seed(RngAlgorithm::ChaCha, &seed));
    arb_value_for(def).new_tree(&mut runner).unwrap().current().render()
}

fn expected_color(def: &OptionDef, values: Option<&Vec<OptionValue>>) -> Color {
    match (values, def.required) {
        (Some(_), _) => Color::Blue,
        (None, true) => Color::Red,
        (None, false) => Color::Black,
    }
}

fn check(spec: &ProgramSpec, s: &SessionState, model: &HashMap<String, Vec<OptionValue>>) -> Result<(), TestCaseError> {
    for def in spec.options() {
        let state = s.state(&def.id).unwrap();
        prop_assert_eq!(state.color(), expected_color(def, model.get(&def.id)));
        match (state, model.get(&def.id)) {
            (OptionState::Set(v), Some(vals)) => prop_assert_eq!(v.values(), vals.as_slice()),
            (OptionState::Set(_), None) => prop_assert!(false, "{} set but model says unset", def.id),
            (_, Some(_)) => prop_assert!(false, "{} unset but model says set", def.id),
            _ => {}
        }
    }
    let unmet: Vec<String> = spec
        .options()
        .filter(|d| d.required && !model.contains_key(&d.id))
        .map(|d| d.id.clone())
        .collect();
    prop_assert_eq!(s.unmet_required(), unmet);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn session_follows_reference_model(spec in arb_program_spec(), ops in proptest::collection::vec(arb_op(), 0..40)) {
        let defs: Vec<OptionDef> = spec.options().cloned().collect();
        let mut s = SessionState::new(spec.clone(), "/work").unwrap();
        let mut model: HashMap<String, Vec<OptionValue>> = HashMap::new();
        let mut running = false;
        check(&spec, &s, &model)?;
        for op in ops {
            match op {
                Op::BeginRun => { s = s.begin_run("r"); running = true; }
                Op::EndRun => { s = s.end_run(); running = false; }
                Op::Reset => match s.reset_all() {
                    Ok(next) => { prop_assert!(!running); s = next; model.clear(); }
                    Err(e) => prop_assert!(running && matches!(e, ModelError::MutationDuringRun(_))),
                },
                Op::Clear(_) | Op::Set(..) | Op::SetValid(..) if defs.is_empty() => {
                    prop_assert!(matches!(s.clear_option("nope"), Err(ModelError::UnknownOption(_))));
                }
                Op::Clear(i) => {
                    let def = &defs[i.index(defs.len())];
                    match s.clear_option(&def.id) {
                        Ok(next) => { prop_assert!(!running); s = next; model.remove(&def.id); }
                        Err(e) => prop_assert!(running && matches!(e, ModelError::MutationDuringRun(_))),
                    }
                }
                Op::Set(i, raw) => apply_set(&mut s, &mut model, &defs[i.index(defs.len())], &raw, running)?,
                Op::SetValid(i, v) => {
                    let def = &defs[i.index(defs.len())];
                    let raw = sample_value(def, &v);
                    apply_set(&mut s, &mut model, def, &raw, running)?;
                }
            }
            check(&spec, &s, &model)?;
        }
    }
}

fn apply_set(
    s: &mut SessionState,
    model: &mut HashMap<String, Vec<OptionValue>>,
    def: &OptionDef,
    raw: &str,
    running: bool,
) -> Result<(), TestCaseError> {
    let expected = validate_value(def, raw);
    match s.set_option(&def.id, raw) {
        Ok(next) => {
            prop_assert!(!running);
            let v = expected.map_err(|e| TestCaseError::fail(format!("accepted invalid {raw:?}: {e}")))?;
            let entry = model.entry(def.id.clone()).or_default();
            if def.repeatable {
                entry.push(v);
            } else {
                *entry = vec![v];
            }
            *s = next;
        }
        Err(ModelError::MutationDuringRun(_)) => prop_assert!(running),
        Err(ModelError::Value { .. }) => prop_assert!(expected.is_err()),
        Err(e) => prop_assert!(false, "unexpected error {e}"),
    }
    Ok(())
}

fn arb_spec_and_session() -> impl Strategy<Value = (ProgramSpec, SessionState)> {
    arb_program_spec()
        .prop_flat_map(|spec| {
            let values = guiliner_testkit::arb_assignments(&spec, false);
            (Just(spec), values)
        })
        .prop_map(|(spec, values)| {
            let s = guiliner_testkit::session_with(&spec, &values);
            (spec, s)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn set_then_clear_equals_clear((spec, s) in arb_spec_and_session(), pick in any::<Index>(), v in any::<Index>()) {
        let defs: Vec<&OptionDef> = spec.options().collect();
        prop_assume!(!defs.is_empty());
        let def = defs[pick.index(defs.len())];
        let raw = sample_value(def, &v);
        let via_set = s.set_option(&def.id, &raw).unwrap().clear_option(&def.id).unwrap();
        prop_assert_eq!(via_set, s.clear_option(&def.id).unwrap());
    }

    #[test]
    fn reset_equals_clearing_every_option((spec, s) in arb_spec_and_session()) {
        let folded = spec.options().try_fold(s.clone(), |acc, d| acc.clear_option(&d.id)).unwrap();
        prop_assert_eq!(s.reset_all().unwrap(), folded);
    }
}
