use super::*;
use crate::dsl::{Param, SemanticType};
use crate::geometry::BBox;
use crate::tools::{SceneGraph, SceneObject, SyntheticBackend};

fn backend() -> SharedBackend {
    Arc::new(SyntheticBackend)
}

fn sig(name: &str, params: &[(&str, SemanticType)], out: SemanticType) -> ModuleSignature {
    ModuleSignature {
        name: name.into(),
        params: params.iter().map(|(n, t)| Param::new(n, *t, "")).collect(),
        output: Param::new("output", out, ""),
        doc: String::new(),
        usage_examples: Vec::new(),
    }
}

fn image() -> Value {
    let scene = SceneGraph::new(200, 100)
        .with_object(SceneObject::new("a", "cup", BBox::new(10, 10, 40, 40), 0.3).with_attr("color", "red"))
        .with_object(SceneObject::new("b", "cup", BBox::new(100, 10, 160, 70), 0.6).with_attr("color", "blue"));
    Value::Image(ImageHandle::new(scene))
}

fn count_sig() -> ModuleSignature {
    sig("COUNT_OF", &[("image", SemanticType::Image), ("object", SemanticType::Text)], SemanticType::Number)
}

#[test]
fn loads_and_runs() {
    let src = "const step_name = \"COUNT_OF\";\nfn execute(img, obj) { locate(img, obj).len() }";
    let h = load_candidate(src, &count_sig()).unwrap();
    let out = invoke_candidate(&h, &[image(), Value::text("cup")], &backend(), &Limits::default()).unwrap();
    assert_eq!(out, Value::Number(2.0));
}

#[test]
fn unbalanced_delimiters_are_compile_errors() {
    let src = "const step_name = \"COUNT_OF\";\nfn execute(img, obj) {\n  let b = locate(img, obj;\n  b.len()\n}";
    let e = load_candidate(src, &count_sig()).unwrap_err();
    assert_eq!(e.kind, CapturedErrorKind::Compile);
    assert!(e.location.is_some());
}

#[test]
fn name_and_arity_are_checked() {
    let wrong_name = "const step_name = \"OTHER\";\nfn execute(img, obj) { 0 }";
    assert_eq!(load_candidate(wrong_name, &count_sig()).unwrap_err().kind, CapturedErrorKind::Compile);
    let wrong_arity = "const step_name = \"COUNT_OF\";\nfn execute(img) { 0 }";
    let e = load_candidate(wrong_arity, &count_sig()).unwrap_err();
    assert!(e.message.contains("parameters"), "{e}");
    let no_entry = "const step_name = \"COUNT_OF\";\nfn run(img, obj) { 0 }";
    assert_eq!(load_candidate(no_entry, &count_sig()).unwrap_err().kind, CapturedErrorKind::Compile);
}

#[test]
fn file_access_is_forbidden() {
    let src = "const step_name = \"COUNT_OF\";\nfn execute(img, obj) {\n  let s = open(\"/etc/passwd\");\n  0\n}";
    let e = load_candidate(src, &count_sig()).unwrap_err();
    assert_eq!(e.kind, CapturedErrorKind::ForbiddenAccess);
    assert_eq!(e.location, Some(3));
    // mentioned only in a comment: fine
    let ok = "const step_name = \"COUNT_OF\";\n// never open(files)\nfn execute(img, obj) { 0 }";
    assert!(load_candidate(ok, &count_sig()).is_ok());
}

#[test]
fn indirect_forbidden_call_is_caught_at_runtime() {
    let src = "const step_name = \"COUNT_OF\";\nfn execute(img, obj) { let f = Fn(\"getenv\"); f.call(\"HOME\") }";
    let h = load_candidate(src, &count_sig()).unwrap();
    let e = invoke_candidate(&h, &[image(), Value::text("cup")], &backend(), &Limits::default()).unwrap_err();
    assert_eq!(e.kind, CapturedErrorKind::ForbiddenAccess, "{e}");
}

#[test]
fn import_is_forbidden() {
    let src = "import \"os\" as os;\nconst step_name = \"COUNT_OF\";\nfn execute(img, obj) { 0 }";
    assert_eq!(load_candidate(src, &count_sig()).unwrap_err().kind, CapturedErrorKind::ForbiddenAccess);
}

#[test]
fn infinite_loop_times_out() {
    let src = "const step_name = \"COUNT_OF\";\nfn execute(img, obj) { let x = 0; loop { x += 1; } }";
    let h = load_candidate(src, &count_sig()).unwrap();
    let limits = Limits { wall_time_ms: 100, max_operations: u64::MAX };
    let t = Instant::now();
    let e = invoke_candidate(&h, &[image(), Value::text("cup")], &backend(), &limits).unwrap_err();
    assert_eq!(e.kind, CapturedErrorKind::Timeout);
    assert!(t.elapsed() < Duration::from_secs(5));
    let ops = Limits { wall_time_ms: 60_000, max_operations: 10_000 };
    assert_eq!(
        invoke_candidate(&h, &[image(), Value::text("cup")], &backend(), &ops).unwrap_err().kind,
        CapturedErrorKind::Timeout
    );
}

#[test]
fn wrong_output_type() {
    let s = sig("ANSWER", &[("image", SemanticType::Image)], SemanticType::Text);
    let src = "const step_name = \"ANSWER\";\nfn execute(img) { img }";
    let h = load_candidate(src, &s).unwrap();
    let e = invoke_candidate(&h, &[image()], &backend(), &Limits::default()).unwrap_err();
    assert_eq!(e.kind, CapturedErrorKind::WrongOutput);
    assert_eq!(e.expected.as_deref(), Some("text"));
    assert_eq!(e.actual.as_deref(), Some("image"));
}

#[test]
fn runtime_throw_carries_message() {
    let src = "const step_name = \"COUNT_OF\";\nfn execute(img, obj) {\n  throw \"MULTI_OBJECT\";\n}";
    let h = load_candidate(src, &count_sig()).unwrap();
    let e = invoke_candidate(&h, &[image(), Value::text("cup")], &backend(), &Limits::default()).unwrap_err();
    assert_eq!(e.kind, CapturedErrorKind::Runtime);
    assert!(e.message.contains("MULTI_OBJECT"));
    assert_eq!(e.location, Some(3));
}

#[test]
fn api_surface_round_trip() {
    let s = sig(
        "PROBE",
        &[("image", SemanticType::Image)],
        SemanticType::Any,
    );
    let src = r#"const step_name = "PROBE";
fn execute(img) {
    let boxes = locate(img, "cup");
    let sub = img.crop(boxes[0]);
    let col = answer_question(sub, "what color is the cup?");
    let d = depth_of(img);
    let s = score_alignment(img, ["red cup", "green frog"]);
    let edited = inpaint_region(img, [[0, 0, 200, 100]], "green");
    let after = answer_question(edited.crop(boxes[1]), "what color is the cup?");
    [col, after, d.median(boxes[0]), s[1], img.size[0], median([3, 1, 2])]
}"#;
    let h = load_candidate(src, &s).unwrap();
    let out = invoke_candidate(&h, &[image()], &backend(), &Limits::default()).unwrap();
    assert_eq!(
        out,
        Value::List(vec![
            Value::text("blue"),
            Value::text("green"),
            Value::Number(0.6),
            Value::Number(0.0),
            Value::Number(200.0),
            Value::Number(2.0),
        ])
    );
}

#[test]
fn any_output_infers_box_list() {
    let s = sig("FIND", &[("image", SemanticType::Image)], SemanticType::Any);
    let h = load_candidate("const step_name = \"FIND\";\nfn execute(img) { locate(img, \"cup\") }", &s).unwrap();
    let out = invoke_candidate(&h, &[image()], &backend(), &Limits::default()).unwrap();
    assert_eq!(out, Value::BoxList(vec![BBox::new(100, 10, 160, 70), BBox::new(10, 10, 40, 40)]));
}

#[test]
fn deterministic_across_invocations() {
    let src = "const step_name = \"COUNT_OF\";\nfn execute(img, obj) { let b = locate(img, obj); b[0][0] * 3 + b.len() }";
    let h = load_candidate(src, &count_sig()).unwrap();
    let args = [image(), Value::text("cup")];
    let a = invoke_candidate(&h, &args, &backend(), &Limits::default());
    for _ in 0..5 {
        assert_eq!(invoke_candidate(&h, &args, &backend(), &Limits::default()), a);
    }
}

#[test]
fn unit_result_is_null() {
    let h = load_candidate("const step_name = \"COUNT_OF\";\nfn execute(a, b) { }", &count_sig()).unwrap();
    assert_eq!(
        invoke_candidate(&h, &[image(), Value::text("x")], &backend(), &Limits::default()).unwrap(),
        Value::Null
    );
}

#[test]
fn display_form() {
    let mut e = CapturedError::new(CapturedErrorKind::Runtime, "boom");
    e.location = Some(4);
    assert_eq!(e.to_string(), "runtime (line 4): boom");
}
