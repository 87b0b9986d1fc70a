//! Canonical programs for every query form the dataset generators emit.
//!
//! The scripted model answers stage-1/3 prompts from these plans, and the
//! harness runs them directly as the reference program of an instance.

use std::sync::OnceLock;

use regex::{Captures, Regex};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryPlan {
    /// Non-builtin modules the canonical program calls, in first-use order.
    pub needs: Vec<&'static str>,
    pub program: String,
    /// Builtins-only program used when some of `needs` is unavailable.
    pub fallback: Option<String>,
}

pub const ORDINALS: &[&str] = &["first", "second", "third", "fourth", "fifth"];

pub fn ordinal_index(word: &str) -> Option<usize> {
    ORDINALS.iter().position(|o| *o == word).map(|i| i + 1)
}

type Builder = fn(&Captures, &str) -> QueryPlan;

fn rules() -> &'static [(Regex, Builder)] {
    static RULES: OnceLock<Vec<(Regex, Builder)>> = OnceLock::new();
    RULES.get_or_init(|| {
        let r = |p: &str| Regex::new(p).unwrap();
        vec![
            (r(r"^Is the ([a-z ]+) to the left or to the right of the ([a-z ]+)\?$"), side as Builder),
            (r(r"^Is the ([a-z ]+?) (\w+) or (\w+)\?$"), choose),
            (r(r"^Do the ([a-z ]+) and the ([a-z ]+) have (the same color|different colors)\?$"), color),
            (r(r"^Are the ([a-z ]+) and the ([a-z ]+) made of (the same material|different materials)\?$"), material),
            (r(r"^How many ([a-z ]+) are there\?$"), count),
            (r(r"^What color is the ([a-z ]+)\?$"), what_color),
            (r(r"^the (\w+) ([a-z]+) from the (left|right|top|bottom) on the (left|right|top|bottom)$"), ordinal_chain),
            (r(r"^the (\w+) ([a-z]+) from the (left|right|top|bottom)$"), ordinal),
            (r(r"^the ([a-z]+) (in the front|at the back)$"), depth),
            (r(r"^Tag the (\w+) ([a-z]+) from the (left|right) with its name$"), tag),
            (r(r"^Replace the (\w+) ([a-z]+) from the (left|right) with an? ([a-z ]+)$"), replace_ordinal),
            (r(r"^Replace the ([a-z]+) with an? ([a-z ]+)$"), replace_single),
            (r(r"^Which candidate completes the (center|left-right|up-down) matrix\?$"), raven),
            (r(r"^Which object is the ([a-z]+)\?$"), word),
        ]
    })
}

/// The plan for `query`, or `None` for an unrecognised form.
pub fn plan_query(query: &str) -> Option<QueryPlan> {
    let q = query.trim();
    rules().iter().find_map(|(re, build)| {
        let c = re.captures(q)?;
        let plan = build(&c, q);
        // ordinal words outside the table fall through as unknown
        (!plan.program.is_empty()).then_some(plan)
    })
}

fn lines(stmts: &[String]) -> String {
    stmts.join("\n")
}

fn vqa_fallback(q: &str) -> Option<String> {
    Some(format!(
        "ANSWER0=VQA(image=IMAGE,question='{q}')\nFINAL_RESULT=RESULT(var=ANSWER0)"
    ))
}

fn builtin(program: String) -> QueryPlan {
    QueryPlan {
        needs: Vec::new(),
        program,
        fallback: None,
    }
}

fn unknown() -> QueryPlan {
    QueryPlan {
        needs: Vec::new(),
        program: String::new(),
        fallback: None,
    }
}

fn side(c: &Captures, _q: &str) -> QueryPlan {
    builtin(lines(&[
        format!("BOX0=LOC(image=IMAGE,object='{}')", &c[2]),
        "IMAGE0=CROP_LEFTOF(image=IMAGE,box=BOX0)".into(),
        format!("BOX1=LOC(image=IMAGE0,object='{}')", &c[1]),
        "ANSWER0=COUNT(box=BOX1)".into(),
        "ANSWER1=EVAL(expr=f\"'left' if {ANSWER0} > 0 else 'right'\")".into(),
        "FINAL_RESULT=RESULT(var=ANSWER1)".into(),
    ]))
}

fn choose(c: &Captures, q: &str) -> QueryPlan {
    let obj = &c[1];
    QueryPlan {
        needs: vec!["CHOOSE_ATTRIBUTE"],
        program: lines(&[
            format!("BOX0=LOC(image=IMAGE,object='{obj}')"),
            format!(
                "ANSWER0=CHOOSE_ATTRIBUTE(image=IMAGE,box=BOX0,object='{obj}',attribute1='{}',attribute2='{}')",
                &c[2], &c[3]
            ),
            "FINAL_RESULT=RESULT(var=ANSWER0)".into(),
        ]),
        fallback: vqa_fallback(q),
    }
}

fn color(c: &Captures, q: &str) -> QueryPlan {
    let kind = if c[3].starts_with("different") { "different" } else { "same" };
    QueryPlan {
        needs: vec!["COMPARE_COLOR"],
        program: lines(&[
            format!("BOX0=LOC(image=IMAGE,object='{}')", &c[1]),
            format!("BOX1=LOC(image=IMAGE,object='{}')", &c[2]),
            format!(
                "ANSWER0=COMPARE_COLOR(image=IMAGE,box1=BOX0,box2=BOX1,object1='{}',object2='{}',compare_type='{kind}')",
                &c[1], &c[2]
            ),
            "FINAL_RESULT=RESULT(var=ANSWER0)".into(),
        ]),
        fallback: vqa_fallback(q),
    }
}

fn material(c: &Captures, q: &str) -> QueryPlan {
    QueryPlan {
        needs: vec!["COMPARE_ATTRIBUTE"],
        program: lines(&[
            format!("BOX0=LOC(image=IMAGE,object='{}')", &c[1]),
            format!("BOX1=LOC(image=IMAGE,object='{}')", &c[2]),
            format!(
                "ANSWER0=COMPARE_ATTRIBUTE(image=IMAGE,box1=BOX0,box2=BOX1,object1='{}',object2='{}',attribute='material',question=QUESTION)",
                &c[1], &c[2]
            ),
            "FINAL_RESULT=RESULT(var=ANSWER0)".into(),
        ]),
        fallback: vqa_fallback(q),
    }
}

fn count(c: &Captures, _q: &str) -> QueryPlan {
    builtin(lines(&[
        format!("BOX0=LOC(image=IMAGE,object='{}')", &c[1]),
        "ANSWER0=COUNT(box=BOX0)".into(),
        "FINAL_RESULT=RESULT(var=ANSWER0)".into(),
    ]))
}

fn what_color(c: &Captures, q: &str) -> QueryPlan {
    builtin(lines(&[
        format!("BOX0=LOC(image=IMAGE,object='{}')", &c[1]),
        "IMAGE0=CROP(image=IMAGE,box=BOX0)".into(),
        format!("ANSWER0=VQA(image=IMAGE0,question='{q}')"),
        "FINAL_RESULT=RESULT(var=ANSWER0)".into(),
    ]))
}

fn located(obj: &str) -> String {
    format!("BOX0=LOC(image=IMAGE,object='{obj}')")
}

fn loc_only(obj: &str) -> Option<String> {
    Some(lines(&[located(obj), "FINAL_RESULT=RESULT(var=BOX0)".into()]))
}

fn ordinal(c: &Captures, _q: &str) -> QueryPlan {
    let Some(k) = ordinal_index(&c[1]) else { return unknown() };
    QueryPlan {
        needs: vec!["SORT_SPATIAL"],
        program: lines(&[
            located(&c[2]),
            format!("BOX1=SORT_SPATIAL(image=IMAGE,box_list=BOX0,location='{}',index={k})", &c[3]),
            "FINAL_RESULT=RESULT(var=BOX1)".into(),
        ]),
        fallback: loc_only(&c[2]),
    }
}

fn ordinal_chain(c: &Captures, _q: &str) -> QueryPlan {
    let Some(k) = ordinal_index(&c[1]) else { return unknown() };
    QueryPlan {
        needs: vec!["SORT_SPATIAL"],
        program: lines(&[
            located(&c[2]),
            format!("BOX1=SORT_SPATIAL(image=IMAGE,box_list=BOX0,location='{}',index={k})", &c[3]),
            format!("BOX2=SORT_SPATIAL(image=IMAGE,box_list=BOX1,location='{}',index=1)", &c[4]),
            "FINAL_RESULT=RESULT(var=BOX2)".into(),
        ]),
        fallback: loc_only(&c[2]),
    }
}

fn depth(c: &Captures, _q: &str) -> QueryPlan {
    let loc = if c[2].contains("front") { "front" } else { "behind" };
    QueryPlan {
        needs: vec!["SORT_SPATIAL"],
        program: lines(&[
            located(&c[1]),
            format!("BOX1=SORT_SPATIAL(image=IMAGE,box_list=BOX0,location='{loc}',index=1)"),
            "FINAL_RESULT=RESULT(var=BOX1)".into(),
        ]),
        fallback: loc_only(&c[1]),
    }
}

fn tag(c: &Captures, _q: &str) -> QueryPlan {
    let Some(k) = ordinal_index(&c[1]) else { return unknown() };
    let obj = &c[2];
    let ask = format!("ANSWER0=VQA(image=IMAGE0,question='Who is the {obj}?')");
    QueryPlan {
        needs: vec!["SORT_SPATIAL"],
        program: lines(&[
            located(obj),
            format!("BOX1=SORT_SPATIAL(image=IMAGE,box_list=BOX0,location='{}',index={k})", &c[3]),
            "IMAGE0=CROP(image=IMAGE,box=BOX1)".into(),
            ask.clone(),
            "IMAGE1=TAG(image=IMAGE,box=BOX1,label=ANSWER0)".into(),
            "FINAL_RESULT=RESULT(var=IMAGE1)".into(),
        ]),
        fallback: Some(lines(&[
            located(obj),
            "IMAGE0=CROP(image=IMAGE,box=BOX0)".into(),
            ask,
            "IMAGE1=TAG(image=IMAGE,box=BOX0,label=ANSWER0)".into(),
            "FINAL_RESULT=RESULT(var=IMAGE1)".into(),
        ])),
    }
}

fn replace_ordinal(c: &Captures, _q: &str) -> QueryPlan {
    let Some(k) = ordinal_index(&c[1]) else { return unknown() };
    let prompt = &c[4];
    QueryPlan {
        needs: vec!["SORT_SPATIAL"],
        program: lines(&[
            located(&c[2]),
            format!("BOX1=SORT_SPATIAL(image=IMAGE,box_list=BOX0,location='{}',index={k})", &c[3]),
            format!("IMAGE0=REPLACE(image=IMAGE,mask=BOX1,prompt='{prompt}')"),
            "FINAL_RESULT=RESULT(var=IMAGE0)".into(),
        ]),
        fallback: Some(lines(&[
            located(&c[2]),
            format!("IMAGE0=REPLACE(image=IMAGE,mask=BOX0,prompt='{prompt}')"),
            "FINAL_RESULT=RESULT(var=IMAGE0)".into(),
        ])),
    }
}

fn replace_single(c: &Captures, _q: &str) -> QueryPlan {
    builtin(lines(&[
        located(&c[1]),
        format!("IMAGE0=REPLACE(image=IMAGE,mask=BOX0,prompt='{}')", &c[2]),
        "FINAL_RESULT=RESULT(var=IMAGE0)".into(),
    ]))
}

fn raven(c: &Captures, _q: &str) -> QueryPlan {
    let layout = &c[1];
    QueryPlan {
        needs: vec!["DETECT_SHAPE", "SOLVER"],
        program: lines(&[
            format!("ATTRS0=DETECT_SHAPE(images=PANELS,layout='{layout}')"),
            format!("ATTRS1=DETECT_SHAPE(images=CANDIDATES,layout='{layout}')"),
            "ANSWER0=SOLVER(panels=ATTRS0,candidates=ATTRS1)".into(),
            "FINAL_RESULT=RESULT(var=ANSWER0)".into(),
        ]),
        fallback: None,
    }
}

fn word(c: &Captures, _q: &str) -> QueryPlan {
    QueryPlan {
        needs: vec!["WORD_MATCH"],
        program: lines(&[
            format!("BOX0=WORD_MATCH(images=EXAMPLES,words=WORDS,image=IMAGE,word='{}')", &c[1]),
            "FINAL_RESULT=RESULT(var=BOX0)".into(),
        ]),
        fallback: None,
    }
}
