//! Programs and fragments printed in the prompt figures, with the extra
//! headers needed to validate them.

use crate::dsl::{parse_signature_block, ModuleSignature};
use crate::executor::builtin_signatures;

use super::fixture_signature;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    /// Ends in `FINAL_RESULT=RESULT(...)`.
    Program,
    /// A lone example statement.
    Fragment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub id: &'static str,
    pub kind: CorpusKind,
    /// Canonical single-line-per-statement text.
    pub text: &'static str,
    /// Diagnostic codes validation is expected to raise.
    pub expected_codes: &'static [&'static str],
}

const fn program(id: &'static str, text: &'static str) -> CorpusEntry {
    CorpusEntry {
        id,
        kind: CorpusKind::Program,
        text,
        expected_codes: &[],
    }
}

const fn fragment(id: &'static str, text: &'static str) -> CorpusEntry {
    CorpusEntry {
        id,
        kind: CorpusKind::Fragment,
        text,
        expected_codes: &[],
    }
}

const CORPUS: &[CorpusEntry] = &[
    program(
        "purse",
        "BOX0=LOC(image=IMAGE,object='person')\nIMAGE0=CROP_LEFTOF(image=IMAGE,box=BOX0)\nBOX1=LOC(image=IMAGE0,object='purse')\nANSWER0=COUNT(box=BOX1)\nANSWER1=EVAL(expr=f\"'left' if {ANSWER0} > 0 else 'right'\")\nFINAL_RESULT=RESULT(var=ANSWER1)",
    ),
    CorpusEntry {
        id: "compare_size",
        kind: CorpusKind::Program,
        // the printed example returns ANSWER although it binds ANSWER2
        text: "BOX0=LOC(image=IMAGE,object='sphere')\nBOX1=LOC(image=IMAGE,object='blue cube')\nFLAG0=COMPARE_SIZE(image=IMAGE,box0=BOX0,box1=BOX1)\nANSWER2=EVAL(expr=f\"'sphere' if {FLAG0} else 'blue cube'\")\nFINAL_RESULT=RESULT(var=ANSWER)",
        expected_codes: &["UNDEFINED_VAR"],
    },
    program(
        "vehicle_top",
        "BOX0=LOC(image=IMAGE,object='TOP')\nIMAGE0=CROP(image=IMAGE,box=BOX0)\nBOX1=LOC(image=IMAGE0,object='vehicle')\nANSWER0=COUNT(box=BOX1)\nANSWER1=EVAL(expr=f\"'yes' if {ANSWER0} > 0 else 'no'\")\nFINAL_RESULT=RESULT(var=ANSWER1)",
    ),
    program(
        "umbrella",
        "BOX0=LOC(image=IMAGE,object='umbrella')\nIMAGE0=CROP(image=IMAGE,box=BOX0)\nANSWER0=VQA(image=IMAGE0,question='Who is carrying the umbrella?')\nFINAL_RESULT=RESULT(var=ANSWER0)",
    ),
    program(
        "towel",
        "BOX0=LOC(image=IMAGE,object='towel')\nBOX1=LOC(image=IMAGE,object='box')\nANSWER0=COMPARE_ATTRIBUTE(image=IMAGE,box1=BOX0,box2=BOX1,object1='towel',object2='box',attribute='color',question=QUESTION)\nFINAL_RESULT=RESULT(var=ANSWER0)",
    ),
    program(
        "knife",
        "BOX0=LOC(image=IMAGE,object='knife')\nANSWER0=VERIFY_MATERIAL(image=IMAGE,box=BOX0,material='ceramic',object='knife',question=QUESTION)\nANSWER1=EVAL(expr=f\"'yes' if {ANSWER0} else 'no'\")\nFINAL_RESULT=RESULT(var=ANSWER1)",
    ),
    program(
        "coat",
        "BOX0=LOC(image=IMAGE,object='coat')\nANSWER0=CHOOSE_ATTRIBUTE(image=IMAGE,box=BOX0,object='coat',attribute1='thick',attribute2='thin')\nFINAL_RESULT=RESULT(var=ANSWER0)",
    ),
    program(
        "coat_header_example",
        "BOX0=LOC(image=IMAGE,object='coat')\nANSWER0=CHOOSE_ATTRIBUTE(image=IMAGE,box=BOX0,object='coat',attribute1='thick',attribute2='thin')\nFINAL_RESULT=RESULT(var=ANSWER0)",
    ),
    program(
        "sandwich",
        "BOXLIST0=LOC(image=IMAGE,object='sandwich')\nBOXLIST1=SORT_SPATIAL(image=IMAGE,box_list=BOXLIST0,location='right',index=2)\nBOXLIST2=SORT_SPATIAL(image=IMAGE,box_list=BOXLIST1,location='bottom',index=1)\nFINAL_RESULT=RESULT(var=BOXLIST2)",
    ),
    fragment("loc_camel", "BOX0=LOC(image=IMAGE,object='camel')"),
    fragment("count", "ANSWER0=COUNT(box=BOX1)"),
    fragment("loc_food", "BOX1=LOC(image=IMAGE0,object='food')"),
];

pub fn corpus() -> &'static [CorpusEntry] {
    CORPUS
}

const VERIFY_MATERIAL: &str = r#"class VERIFY_MATERIAL():
    """
    Check whether an object is made of a material.
    Input:
        image: an image object
        box: a list of bounding boxes
        material: a string
        object: a string
        question: a string
    Output:
        result: return True if the object is made of the material else False
    """
"#;

const COMPARE_SIZE: &str = r#"class COMPARE_SIZE():
    """
    Compare the size of two objects in the image.
    Input:
        image: an image object
        box0: a list of bounding boxes
        box1: a list of bounding boxes
    Output:
        flag: return True if first object is larger else False
    """
"#;

/// Builtins plus every header the corpus programs call.
pub fn corpus_signatures() -> Vec<ModuleSignature> {
    let mut sigs = builtin_signatures().to_vec();
    for name in ["CHOOSE_ATTRIBUTE", "SORT_SPATIAL", "COMPARE_ATTRIBUTE", "COMPARE_COLOR"] {
        sigs.push(fixture_signature(name).unwrap());
    }
    sigs.push(parse_signature_block(COMPARE_SIZE).unwrap());
    sigs.push(parse_signature_block(VERIFY_MATERIAL).unwrap());
    sigs
}
