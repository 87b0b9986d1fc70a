use modsynth::dsl::{parse_program, serialize_program};
use modsynth::executor::{eval_template, Environment, Value};
use modsynth::geometry::{iou, BBox};
use modsynth::harness::Prf;
use modsynth::reference::oracle::sort_spatial;
use modsynth::tools::{ImageHandle, SceneGraph, SyntheticBackend};
use proptest::prelude::*;

fn ident() -> impl Strategy<Value = String> {
    "[A-Z][A-Z0-9_]{0,6}"
}

fn arg_text() -> impl Strategy<Value = String> {
    prop_oneof![
        ident(),
        "[a-z ]{0,10}".prop_map(|s| format!("'{s}'")),
        "[a-z {}A-Z0-9+<>]{0,12}".prop_map(|s| format!("f\"{s}\"")),
        "-?[0-9]{1,3}(\\.[0-9]{1,2})?",
    ]
}

fn statement() -> impl Strategy<Value = String> {
    (ident(), ident(), prop::collection::vec(arg_text(), 0..4)).prop_map(|(t, m, args)| {
        let args: Vec<String> = args.iter().enumerate().map(|(i, a)| format!("k{i}={a}")).collect();
        format!("{t}={m}({})", args.join(","))
    })
}

fn program() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(statement(), 0..5).prop_map(|mut v| {
        let last = v.last().map(|s| s.split('=').next().unwrap().to_string()).unwrap_or_else(|| "IMAGE".into());
        v.push(format!("FINAL_RESULT=RESULT(var={last})"));
        v
    })
}

fn bbox() -> impl Strategy<Value = BBox> {
    (0i64..200, 0i64..200, 1i64..120, 1i64..120).prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h))
}

fn blank(w: i64, h: i64) -> ImageHandle {
    ImageHandle::new(SceneGraph {
        width: w,
        height: h,
        caption: None,
        objects: Vec::new(),
    })
}

proptest! {
    #[test]
    fn programs_round_trip_through_text(lines in program()) {
        let src = lines.join("\n");
        let p = parse_program(&src).unwrap();
        let text = serialize_program(&p);
        prop_assert_eq!(&text, &src);
        let q = parse_program(&text).unwrap();
        prop_assert_eq!(p.statements, q.statements);
    }

    #[test]
    fn padded_programs_normalize(lines in program()) {
        let padded: Vec<String> = lines.iter().map(|l| format!("  {}  ", l.replacen('=', " = ", 1))).collect();
        let p = parse_program(&padded.join("\n\n")).unwrap();
        prop_assert_eq!(serialize_program(&p), lines.join("\n"));
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, iou(&b, &a));
        prop_assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_matches_pixel_counting(a in bbox(), b in bbox()) {
        let inside = |r: &BBox, x: i64, y: i64| r.x1 <= x && x < r.x2 && r.y1 <= y && y < r.y2;
        let (mut inter, mut union) = (0u64, 0u64);
        for x in 0..320 {
            for y in 0..320 {
                let (ia, ib) = (inside(&a, x, y), inside(&b, x, y));
                inter += (ia && ib) as u64;
                union += (ia || ib) as u64;
            }
        }
        prop_assert!((iou(&a, &b) - inter as f64 / union as f64).abs() < 1e-12);
    }

    #[test]
    fn f1_is_twice_tp_over_sizes(pred in 0usize..30, gold in 0usize..30, seed in 0usize..1000) {
        let tp = if pred.min(gold) == 0 { 0 } else { seed % (pred.min(gold) + 1) };
        let f1 = Prf::new(tp, pred, gold).f1();
        let expected = if pred + gold == 0 || tp == 0 { 0.0 } else { 2.0 * tp as f64 / (pred + gold) as f64 };
        prop_assert!((f1 - expected).abs() < 1e-12, "{} vs {}", f1, expected);
        prop_assert!((0.0..=1.0).contains(&f1));
    }

    #[test]
    fn crops_stay_inside_and_map_back(b in bbox(), p in bbox(), w in 50i64..300, h in 50i64..300) {
        let img = blank(w, h);
        let c = img.crop(&b);
        prop_assert!(img.viewport.contains_box(&c.viewport) || c.width() == 0 || c.height() == 0);
        prop_assert!(c.width() <= w && c.height() <= h);
        prop_assert_eq!(c.to_absolute(&c.to_local(&p)), p);
        let nested = c.crop(&c.local_bounds());
        prop_assert_eq!(nested.viewport, c.viewport);
        prop_assert_eq!(img.crop(&img.local_bounds()).viewport, img.viewport);
    }

    #[test]
    fn templates_evaluate_integer_arithmetic(a in -500i64..500, b in -500i64..500) {
        let env = Environment::new()
            .with("A", Value::Number(a as f64))
            .with("B", Value::Number(b as f64));
        prop_assert_eq!(eval_template("{A} + {B} * 2", &env).unwrap(), Value::Number((a + 2 * b) as f64));
        prop_assert_eq!(eval_template("{A} > {B}", &env).unwrap(), Value::Boolean(a > b));
        prop_assert_eq!(
            eval_template("'yes' if {A} == {B} else 'no'", &env).unwrap(),
            Value::text(if a == b { "yes" } else { "no" })
        );
    }

    #[test]
    fn kth_from_left_is_last_but_k_from_right(
        xs in prop::collection::btree_set(0i64..400, 1..8),
        width in 5i64..40,
        k in 1usize..8,
    ) {
        let boxes: Vec<BBox> = xs.iter().rev().map(|x| BBox::new(*x, 10, x + width, 40)).collect();
        let n = boxes.len();
        prop_assume!(k <= n);
        let img = blank(500, 100);
        let left = sort_spatial(&SyntheticBackend, &img, &boxes, "left", k as i64).unwrap();
        let right = sort_spatial(&SyntheticBackend, &img, &boxes, "right", (n + 1 - k) as i64).unwrap();
        prop_assert_eq!(left.len(), 1);
        prop_assert_eq!(left, right);
        prop_assert!(sort_spatial(&SyntheticBackend, &img, &boxes, "left", n as i64 + 1).unwrap().is_empty());
    }
}
