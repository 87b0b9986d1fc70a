use std::sync::Arc;

use super::*;
use crate::llm::Gateway;
use crate::registry::Library;
use crate::reference::{seed_library, ScriptedLlm};
use crate::synthesis::SynthesisConfig;
use crate::tools::vocab::{singularize, CATEGORIES};
use crate::tools::{SharedBackend, SyntheticBackend};

fn backend() -> SharedBackend {
    Arc::new(SyntheticBackend)
}

fn scripted() -> Arc<Gateway> {
    Arc::new(Gateway::live(Arc::new(ScriptedLlm::default()), "scripted"))
}

#[test]
fn datasets_are_deterministic_and_prefix_stable() {
    for task in TaskKind::ALL {
        let a = generate_dataset(&DatasetSpec::new(task, 5, 12)).unwrap();
        let b = generate_dataset(&DatasetSpec::new(task, 5, 12)).unwrap();
        let short = generate_dataset(&DatasetSpec::new(task, 5, 4)).unwrap();
        assert_eq!(a, b, "{task}");
        assert_eq!(&a[..4], short.as_slice(), "{task}");
        let other = generate_dataset(&DatasetSpec::new(task, 6, 12)).unwrap();
        assert_ne!(a, other, "{task}");
    }
}

#[test]
fn unknown_forms_are_rejected() {
    let err = generate_dataset(&DatasetSpec::new(TaskKind::Vqa, 0, 3).with_forms(&["tag"])).unwrap_err();
    assert_eq!(err.code(), "DATASET_ERROR");
    assert!(generate_dataset(&DatasetSpec::new(TaskKind::Raven, 0, 3).with_forms(&["up-down"])).is_ok());
}

#[test]
fn plurals_singularize_back() {
    for w in CATEGORIES {
        assert_eq!(singularize(&plural(w)), *w, "{w}");
    }
}

#[test]
fn every_form_gets_its_planned_query_type() {
    for task in TaskKind::ALL {
        let forms = default_forms(task);
        let data = generate_dataset(&DatasetSpec::new(task, 1, forms.len() * 2)).unwrap();
        for (i, inst) in data.iter().enumerate() {
            let expected = forms[i % forms.len()];
            let got = inst.spec.form();
            assert!(got == expected || (task == TaskKind::Raven && got == "raven"), "{expected} vs {got}");
            assert_eq!(inst.query, inst.spec.text());
            assert!(plan_query(&inst.query).is_some(), "{}", inst.query);
        }
    }
}

/// Canonical programs, run over the tool backend with the shipped modules,
/// agree with answers computed from the scene graphs alone.
#[test]
fn canonical_programs_match_the_oracle() {
    let lib = seed_library();
    let matcher = TagMatcher::default();
    let mut checked = 0;
    for task in TaskKind::ALL {
        let mut specs = vec![DatasetSpec::new(task, 21, 40)];
        if task == TaskKind::Raven {
            specs.push(DatasetSpec::new(task, 22, 10).with_forms(&["left-right", "up-down"]));
        }
        for spec in specs {
            for inst in generate_dataset(&spec).unwrap() {
                let plan = plan_query(&inst.query).unwrap();
                let res = run_program(&inst, &plan.program, &lib, &backend()).unwrap();
                assert!(res.error.is_none(), "{}: {:?}", inst.id, res.error);
                assert!(
                    judge(&inst.gold, &res.final_value, &matcher),
                    "{} {}: got {} want {}",
                    inst.id,
                    inst.query,
                    res.final_value.summary(),
                    inst.gold.summary()
                );
                checked += 1;
            }
        }
    }
    assert!(checked >= 200);
}

#[test]
fn raven_instances_are_well_formed() {
    for layout in ["center", "left-right", "up-down"] {
        for inst in generate_dataset(&DatasetSpec::new(TaskKind::Raven, 3, 8).with_forms(&[layout])).unwrap() {
            let Inputs::Raven(p) = &inst.inputs else { panic!() };
            assert_eq!((p.panels.len(), p.candidates.len()), (8, 8));
            assert!((1..=8).contains(&p.answer_index));
            assert_eq!(inst.gold, Gold::Index { index: p.answer_index });
            let Some(Gold::Answer { text }) = inst.labels.get("DETECT_SHAPE") else {
                panic!("no reader label")
            };
            assert_eq!(text.split(", ").count(), 8);
            let keys = if layout == "center" { 3 } else { 6 };
            assert_eq!(p.rules.len(), keys);
        }
    }
}

#[test]
fn mewl_words_bind_one_value() {
    for inst in generate_dataset(&DatasetSpec::new(TaskKind::MewlAnalog, 4, 10)).unwrap() {
        let (Inputs::Mewl { examples, words, query }, QuerySpec::Word { word }) = (&inst.inputs, &inst.spec) else {
            panic!()
        };
        assert_eq!(examples.len(), words.len());
        let (key, v) = oracle::bound_value(examples, words, word).unwrap();
        assert_eq!(query.objects.iter().filter(|o| o.attr(key) == Some(v.as_str())).count(), 1);
    }
}

#[test]
fn datasets_survive_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    for task in TaskKind::ALL {
        let data = generate_dataset(&DatasetSpec::new(task, 9, 5)).unwrap();
        save_dataset(&path, &data).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), data);
    }
    std::fs::write(&path, "").unwrap();
    assert_eq!(load_dataset(&path).unwrap_err().code(), "DATASET_ERROR");
}

#[test]
fn evaluation_reports_are_reproducible() {
    let data = generate_dataset(&DatasetSpec::new(TaskKind::Grounding, 2, 9)).unwrap();
    let lib = seed_library();
    let a = evaluate(&data, &lib, &scripted(), &backend(), &TagMatcher::default());
    let b = evaluate(&data, &lib, &scripted(), &backend(), &TagMatcher::default());
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.metrics.accuracy, 1.0, "{}", a.to_table());
    assert!(a.outcomes.windows(2).all(|w| w[0].id < w[1].id));
}

#[test]
fn builtins_alone_tag_poorly() {
    let data = generate_dataset(&DatasetSpec::new(TaskKind::Tagging, 3, 10)).unwrap();
    let r = evaluate(&data, &Library::with_builtins(), &scripted(), &backend(), &TagMatcher::default());
    assert!(r.metrics.f1.unwrap() <= 0.5, "{}", r.to_table());
    let r = evaluate(&data, &seed_library(), &scripted(), &backend(), &TagMatcher::default());
    assert_eq!(r.metrics.f1, Some(1.0), "{}", r.to_table());
}

#[test]
fn ablation_grid_fills_every_cell() {
    let grid = AblationGrid::from_json(r#"{"task":"vqa","seed":3,"test_size":12,"train_sizes":[3,12]}"#).unwrap();
    let factory = |_: &str| Ok((scripted(), backend()));
    let cfg = SynthesisConfig {
        parallel: false,
        ..SynthesisConfig::default()
    };
    let t = run_ablation(&grid, &Library::with_builtins(), &factory, &cfg).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert!(t.rows.iter().all(|r| r.cells.len() == 2));
    let wo = &t.rows[0];
    assert_eq!(wo.cells[0].score, wo.cells[1].score);
    assert!(t.non_decreasing, "{}", t.render());
    assert!(t.rows[1].cells[1].score >= wo.cells[1].score);
    assert!(t.render().contains("n=12"));
}

#[test]
fn empty_grids_are_refused() {
    let err = AblationGrid::from_json(r#"{"task":"vqa","test_size":5,"train_sizes":[]}"#).unwrap_err();
    assert_eq!(err.code(), "EMPTY_GRID");
}
