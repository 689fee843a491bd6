use std::collections::BTreeSet;
use std::path::PathBuf;

use genfs::spec::*;
use proptest::prelude::*;

fn fixture(p: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(p)
}

fn read(p: &str) -> String {
    std::fs::read_to_string(fixture(p)).unwrap()
}

#[test]
fn ins_fixture_shape() {
    let doc = parse_spec(&read("ins.gspec")).unwrap();
    assert!(check_wellformed(&doc).is_empty(), "{:?}", check_wellformed(&doc));
    let m = doc.module("ins").unwrap();
    assert_eq!(m.rely.imported_functions.len(), 6);
    assert_eq!(m.rely.imported_types.len(), 1);
    assert_eq!(m.rely.imported_globals[0].name, "root_inum");
    assert_eq!(m.guarantee.exported_functions.len(), 1);
    let f = m.function("atomfs_ins").unwrap();
    assert_eq!(f.post.len(), 2);
    assert_eq!(f.post[0].returns.as_deref(), Some("0"));
    assert_eq!(f.post[1].returns.as_deref(), Some("-1"));
    assert_eq!(f.invariants.len(), 1);
    let c = f.concurrency.as_ref().unwrap();
    assert_eq!(c.lock_pre, vec![LockAssertion { subject: String::new(), state: LockState::NoneHeld }]);
    assert_eq!(c.lock_post.len(), 1);
    assert_eq!(c.lock_post[0].condition, "always");
}

#[test]
fn traversal_lock_contracts() {
    let doc = load_dir(&fixture("fs_base")).unwrap();
    let m = doc.module("traversal").unwrap();
    let locate = m.function("locate").unwrap().concurrency.as_ref().unwrap();
    assert_eq!(locate.lock_pre[0].to_string(), "cur held");
    assert_eq!(locate.lock_post.len(), 2);
    assert_eq!(locate.lock_post[1].assertions[0].to_string(), "result only_this_held");
    let ci = m.function("check_ins").unwrap().concurrency.as_ref().unwrap();
    assert_eq!(ci.lock_post[1].assertions[0].state, LockState::NoneHeld);
}

#[test]
fn dentry_lookup_fixture() {
    let doc = parse_spec(&read("dentry_lookup.gspec")).unwrap();
    assert!(check_wellformed(&doc).is_empty(), "{:?}", check_wellformed(&doc));
    let f = doc.module("dentry_lookup").unwrap().function("dentry_lookup").unwrap();
    let c = f.concurrency.as_ref().unwrap();
    assert_eq!(c.mechanisms, vec![Mechanism::Exclusive, Mechanism::SharedReadSection, Mechanism::AtomicCounter]);
    assert_eq!(f.algorithm.as_ref().unwrap().len(), 7);
    assert_eq!(f.pre[0].tag, Some(PredicateTag::Nullness));
}

#[test]
fn base_fixture_is_wellformed() {
    let doc = load_dir(&fixture("fs_base")).unwrap();
    assert_eq!(doc.modules.len(), 45);
    assert_eq!(doc.version_id, "fs-base-1");
    let diags = check_wellformed(&doc);
    assert!(diags.is_empty(), "{diags:?}");
}

#[test]
fn fixtures_round_trip() {
    for name in ["ins.gspec", "dentry_lookup.gspec"] {
        let doc = parse_spec(&read(name)).unwrap();
        let text = serialize_spec(&doc);
        assert_eq!(parse_spec(&text).unwrap(), doc);
        assert_eq!(serialize_spec(&parse_spec(&text).unwrap()), text);
    }
    let doc = load_dir(&fixture("fs_base")).unwrap();
    assert_eq!(parse_spec(&serialize_spec(&doc)).unwrap(), doc);
}

#[test]
fn deleting_a_rely_line_flags_that_symbol() {
    let src = read("ins.gspec");
    for victim in ["insert", "malloc_inode", "check_ins", "locate"] {
        let edited: String = src
            .lines()
            .filter(|l| !l.starts_with(&format!("fn {victim}(")) && *l != format!("lock_protocol {victim}"))
            .map(|l| format!("{l}\n"))
            .collect();
        match parse_spec(&edited) {
            Err(SpecError::UnresolvedSymbol { module, symbol }) => {
                assert_eq!(module, "ins");
                assert_eq!(symbol, victim);
            }
            other => panic!("expected unresolved `{victim}`, got {other:?}"),
        }
        let doc = parse_document_unchecked(&edited).unwrap();
        let flagged: Vec<_> = check_wellformed(&doc)
            .into_iter()
            .filter(|d| d.rule == Rule::UnresolvedSymbol)
            .map(|d| d.symbol.unwrap())
            .collect();
        assert_eq!(flagged, vec![victim.to_string()]);
    }
}

#[test]
fn undeclared_call_in_post_condition() {
    let src = read("ins.gspec").replace("    - Return -1", "    - foo() was called\n    - Return -1");
    assert!(matches!(
        parse_spec(&src),
        Err(SpecError::UnresolvedSymbol { symbol, .. }) if symbol == "foo"
    ));
}

#[test]
fn duplicate_module_rejected() {
    let src = read("ins.gspec");
    let twice = format!("{src}\n{src}");
    assert!(matches!(parse_spec(&twice), Err(SpecError::DuplicateModule(m)) if m == "ins"));
}

#[test]
fn syntax_error_reports_line() {
    let src = "[MODULE] m level=1\n[GUARANTEE]\nfn broken(\n";
    match parse_spec(src) {
        Err(SpecError::Syntax { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn signature_equivalence_ignores_param_names_and_spacing() {
    let a = parse_signature("fn f(a: struct  inode*, b: int) -> int", 1).unwrap();
    let b = parse_signature("fn f(x: struct inode*, y: int)  ->  int", 1).unwrap();
    let c = parse_signature("fn f(a: struct inode*, b: unsigned) -> int", 1).unwrap();
    assert!(a.equivalent(&b));
    assert_ne!(a, b);
    assert!(!a.equivalent(&c));
}

#[test]
fn wellformedness_rules_fire() {
    let src = "\
[MODULE] m level=2
[RELY]
fn g() -> int
fn g() -> int
lock_protocol h
[GUARANTEE]
fn f(a: int, a: int) -> int
fn missing() -> int
[SPEC] fn f(a: int, a: int) -> int
[CONCURRENCY] f
Pre-condition:
  - ghost held
";
    let mut doc = parse_document_unchecked(src).unwrap();
    // the parser refuses empty bullets, so build one directly
    doc.modules[0].functions[0].pre.push(Predicate::new("  "));
    let rules: BTreeSet<_> = check_wellformed(&doc).into_iter().map(|d| d.rule).collect();
    for r in [
        Rule::DuplicateRely,
        Rule::DuplicateParam,
        Rule::GuaranteeNotDefined,
        Rule::MissingPostCase,
        Rule::EmptyPredicate,
        Rule::UnknownLockProtocol,
        Rule::UnresolvedLock,
        Rule::Level2NeedsIntent,
    ] {
        assert!(rules.contains(&r), "{r} not reported: {rules:?}");
    }
}

#[test]
fn dir_save_and_load() {
    let doc = load_dir(&fixture("fs_base")).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    save_dir(&doc, tmp.path()).unwrap();
    let back = load_dir(tmp.path()).unwrap();
    let mut a = doc.modules.clone();
    let mut b = back.modules.clone();
    a.sort_by(|x, y| x.name.cmp(&y.name));
    b.sort_by(|x, y| x.name.cmp(&y.name));
    assert_eq!(a, b);
    assert_eq!(back.version_id, doc.version_id);
}

#[path = "common/spec_gen.rs"]
mod spec_gen;

use spec_gen::document;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn serialize_then_parse_is_identity(doc in document()) {
        let text = serialize_spec(&doc);
        let back = parse_document_unchecked(&text).unwrap();
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(serialize_spec(&back), text);
    }
}
