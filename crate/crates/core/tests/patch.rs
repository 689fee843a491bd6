use std::collections::BTreeSet;
use std::path::PathBuf;

use genfs::depgraph::check_entailment;
use genfs::patch::*;
use genfs::spec::*;
use proptest::prelude::*;

fn fixture(p: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(p)
}

fn base() -> SpecDocument {
    load_dir(&fixture("fs_base")).unwrap()
}

fn patch_file(name: &str) -> SpecPatch {
    parse_patch(&std::fs::read_to_string(fixture(&format!("patches/{name}.patch.gspec"))).unwrap()).unwrap()
}

fn ids(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn extent_plans_leaves_first() {
    let p = patch_file("extent");
    assert_eq!(p.nodes.len(), 3);
    assert_eq!(plan(&p, &base()).unwrap(), ids(&["common", "lowlevel_file", "inode_management"]));
}

#[test]
fn extent_applies_cleanly() {
    let b = base();
    let out = apply(&patch_file("extent"), &b).unwrap();
    assert!(check_wellformed(&out.document).is_empty());
    let report = check_entailment(&out.document);
    assert!(report.unsatisfied.is_empty() && report.ambiguous.is_empty());
    let lf = out.document.module("lowlevel_file").unwrap();
    assert!(lf.guarantee.exported_functions.iter().any(|s| s.name == "file_extent_read"));
    let im = out.document.module("inode_management").unwrap();
    let read = im.function("inode_read").unwrap();
    assert!(read.algorithm.as_ref().unwrap().iter().any(|s| s.contains("file_extent_read()")));
    assert_eq!(out.substitutions.len(), 1);
    assert_eq!(out.substitutions[0].new_provider, "inode_management");
    assert_eq!(out.substitutions[0].old_providers, vec!["inode_management"]);
}

#[test]
fn consumers_of_replaced_guarantee_follow_the_root() {
    let b = base();
    let p = patch_file("extent");
    let sig = p.node("inode_management").unwrap().replaces_guarantee.clone().unwrap();
    let bound = |d: &SpecDocument| -> BTreeSet<(String, String)> {
        check_entailment(d)
            .satisfied
            .into_iter()
            .filter(|s| matches!(&s.item, RelyItem::Function(f) if f.equivalent(&sig)))
            .map(|s| (s.module, s.provider))
            .collect()
    };
    let before = bound(&b);
    let after = bound(&apply(&p, &b).unwrap().document);
    assert!(!before.is_empty());
    let consumers = |s: &BTreeSet<(String, String)>| s.iter().map(|(c, _)| c.clone()).collect::<BTreeSet<_>>();
    assert_eq!(consumers(&before), consumers(&after));
    assert!(after.iter().all(|(_, p)| p == "inode_management"));
}

#[test]
fn untouched_modules_are_byte_identical() {
    let b = base();
    let out = apply(&patch_file("extent"), &b).unwrap();
    for m in &b.modules {
        if m.name == "lowlevel_file" || m.name == "inode_management" {
            continue;
        }
        assert_eq!(render_module(m), render_module(out.document.module(&m.name).unwrap()), "{}", m.name);
    }
}

#[test]
fn every_valid_order_gives_the_same_document() {
    let b = base();
    let p = patch_file("extent");
    let reference = apply(&p, &b).unwrap().document;
    let names = ["common", "lowlevel_file", "inode_management"];
    let mut tried = 0;
    for perm in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
        let order: Vec<String> = perm.iter().map(|&i| names[i].to_string()).collect();
        if is_valid_order(&p, &order) {
            tried += 1;
            assert_eq!(apply_in_order(&p, &b, &order).unwrap().document, reference);
        } else {
            assert!(apply_in_order(&p, &b, &order).is_err());
        }
    }
    assert_eq!(tried, 2);
}

#[test]
fn root_signature_mutation_rejected() {
    let b = base();
    let before = serialize_spec(&b);
    match apply(&patch_file("mut_root_signature"), &b) {
        Err(PatchError::CommitPointMismatch { root, expected, found }) => {
            assert_eq!(root, "inode_management");
            assert!(expected.contains("off: unsigned"));
            assert!(found.contains("off: u64"));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(serialize_spec(&b), before);
}

#[test]
fn cycle_mutation_rejected() {
    let err = plan(&patch_file("mut_cycle"), &base()).unwrap_err();
    match err {
        PatchError::CycleDetected(path) => {
            assert_eq!(path.first(), path.last());
            assert!(path.contains(&"common".to_string()));
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(apply(&patch_file("mut_cycle"), &base()), Err(PatchError::CycleDetected(_))));
}

#[test]
fn dangling_mutation_rejected() {
    match apply(&patch_file("mut_dangling"), &base()) {
        Err(PatchError::DanglingDependency { node, missing }) => {
            assert_eq!(node, "inode_management");
            assert_eq!(missing, "journal");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn empty_patch_rejected() {
    let p = parse_patch("[PATCH] nothing\n").unwrap();
    assert!(matches!(validate(&p), Err(PatchError::InvalidPatch(_))));
}

const SMALL: &str = "\
[MODULE] core level=1
[GUARANTEE]
fn op(x: int) -> int
[SPEC] fn op(x: int) -> int
Post-condition:
  Case 1: always
    - Return 0
[MODULE] user level=1
[RELY]
fn op(x: int) -> int
[GUARANTEE]
fn use_op() -> int
[SPEC] fn use_op() -> int
Post-condition:
  Case 1: always
    - calls op()
    - Return 0
";

fn small() -> SpecDocument {
    parse_spec(SMALL).unwrap()
}

const OP_V2: &str = "[SPEC] fn op(y: int) -> int\nPost-condition:\n  Case 1: always\n    - Return 1\n";

#[test]
fn leaf_then_root_chain() {
    let src = format!(
        "[PATCH] chain\n[NODE] b leaf\n[CHANGE] AddGuarantee core\nfn helper() -> int\n[CHANGE] AddFunction core\n[SPEC] fn helper() -> int\nPost-condition:\n  Case 1: always\n    - Return 0\n[NODE] a root depends=b replaces=fn op(x: int) -> int\n[CHANGE] ReplaceFunction core\n{OP_V2}"
    );
    let p = parse_patch(&src).unwrap();
    assert_eq!(plan(&p, &small()).unwrap(), ids(&["b", "a"]));
    let out = apply(&p, &small()).unwrap();
    assert_eq!(out.document.module("core").unwrap().function("op").unwrap().signature.params[0].name, "y");
}

#[test]
fn self_dependency_is_a_cycle() {
    let src = format!("[PATCH] selfish\n[NODE] r root depends=r replaces=fn op(x: int) -> int\n[CHANGE] ReplaceFunction core\n{OP_V2}");
    let p = parse_patch(&src).unwrap();
    assert!(matches!(plan(&p, &small()), Err(PatchError::CycleDetected(c)) if c == ids(&["r", "r"])));
}

#[test]
fn unordered_replacements_conflict() {
    let src = format!(
        "[PATCH] clash\n[NODE] l1 leaf\n[CHANGE] ReplaceFunction user\n[SPEC] fn use_op() -> int\nPost-condition:\n  Case 1: x\n    - Return 1\n[NODE] l2 leaf\n[CHANGE] ReplaceFunction user\n[SPEC] fn use_op() -> int\nPost-condition:\n  Case 1: y\n    - Return 2\n[NODE] r root depends=l1,l2 replaces=fn op(x: int) -> int\n[CHANGE] ReplaceFunction core\n{OP_V2}"
    );
    let p = parse_patch(&src).unwrap();
    assert!(matches!(
        plan(&p, &small()),
        Err(PatchError::ConflictingChange { module, function }) if module == "user" && function == "use_op"
    ));
}

#[test]
fn relying_on_an_unordered_node_is_rejected() {
    let src = format!(
        "[PATCH] undeclared\n[NODE] l1 leaf\n[CHANGE] AddGuarantee core\nfn helper() -> int\n[CHANGE] AddFunction core\n[SPEC] fn helper() -> int\nPost-condition:\n  Case 1: always\n    - Return 0\n[NODE] l2 leaf\n[CHANGE] AddRely user\nfn helper() -> int\n[NODE] r root depends=l1,l2 replaces=fn op(x: int) -> int\n[CHANGE] ReplaceFunction core\n{OP_V2}"
    );
    let p = parse_patch(&src).unwrap();
    assert!(matches!(
        plan(&p, &small()),
        Err(PatchError::UndeclaredDependency { node, item, provider }) if node == "l2" && item == "helper" && provider == "l1"
    ));
}

#[test]
fn new_provider_module_takes_over_export() {
    let src = "\
[PATCH] move
[NODE] l leaf
[NODE] r root depends=l replaces=fn op(x: int) -> int
[CHANGE] AddModule fast_core
[MODULE] fast_core level=1
[SPEC] fn op(x: int) -> int
Post-condition:
  Case 1: always
    - Return 0
";
    let p = parse_patch(src).unwrap();
    let out = apply(&p, &small()).unwrap();
    let core = out.document.module("core").unwrap();
    assert!(core.guarantee.exported_functions.is_empty());
    let r = check_entailment(&out.document);
    let s = r.satisfied.iter().find(|s| s.module == "user").unwrap();
    assert_eq!(s.provider, "fast_core");
    assert_eq!(out.substitutions[0].old_providers, vec!["core"]);
    let manifest = serde_json::to_value(out.manifest(&p)).unwrap();
    assert_eq!(manifest["substitution_policy"], "strict_replacement");
}

#[test]
fn diff_identical_is_empty() {
    assert!(diff(&base(), &base()).is_empty());
}

#[test]
fn diff_single_added_function() {
    let b = small();
    let mut a = b.clone();
    let mut f = a.module("user").unwrap().functions[0].clone();
    f.signature.name = "local_helper".into();
    a.module_mut("user").unwrap().functions.push(f);
    let d = diff(&b, &a);
    assert_eq!(d.len(), 1);
    assert!(matches!(&d[0], ModuleChange::AddFunction { target, .. } if target == "user"));
    assert_eq!(apply_changes(&b, &d).unwrap(), a);
}

#[test]
fn diff_of_extent_touches_two_modules() {
    let b = base();
    let after = apply(&patch_file("extent"), &b).unwrap().document;
    let d = diff(&b, &after);
    let targets: BTreeSet<&str> = d.iter().map(|c| c.target()).collect();
    assert_eq!(targets, ["inode_management", "lowlevel_file"].into());
    assert!(d.iter().all(|c| !matches!(c, ModuleChange::ReplaceModule { .. })));
    assert_eq!(apply_changes(&b, &d).unwrap(), after);
}

#[test]
fn patch_text_round_trips() {
    let p = patch_file("extent");
    let text = render_patch(&p);
    assert_eq!(parse_patch(&text).unwrap(), p);
}

#[test]
fn payload_syntax_error_has_file_line() {
    let src =
        "[PATCH] x\n[NODE] a leaf\n[CHANGE] AddFunction core\n[SPEC] fn f() -> int\nPost-condition:\n  Bogus line\n";
    match parse_patch(src) {
        Err(PatchError::Syntax { line, .. }) => assert_eq!(line, 6),
        other => panic!("{other:?}"),
    }
}

fn sorted_modules(d: &SpecDocument) -> Vec<ModuleSpec> {
    let mut m = d.modules.clone();
    m.sort_by(|a, b| a.name.cmp(&b.name));
    m
}

proptest! {
    #[test]
    fn diff_then_apply_reproduces(drop_fn in 0usize..45, add_rely in any::<bool>(), retype in any::<bool>()) {
        let b = base();
        let mut a = b.clone();
        let idx = drop_fn % a.modules.len();
        let m = &mut a.modules[idx];
        if let Some(f) = m.functions.first_mut() {
            f.intent = Some("revised".into());
        }
        if add_rely {
            m.rely.imported_lock_protocols.push("nothing_real".into());
        }
        if retype {
            m.level = Level::L3;
        }
        let d = diff(&b, &a);
        prop_assert_eq!(sorted_modules(&apply_changes(&b, &d).unwrap()), sorted_modules(&a));
    }

    #[test]
    fn random_dag_patches_are_order_insensitive(
        n in 1usize..6,
        edges in prop::collection::vec(any::<bool>(), 15),
        seeds in prop::collection::vec(any::<u32>(), 4),
    ) {
        // node i may depend on any j < i; every node also adds to `user`
        let mut src = String::from("[PATCH] rnd\n");
        let mut k = 0;
        let mut deps: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let mut d = Vec::new();
            for j in 0..i {
                if edges[k % edges.len()] {
                    d.push(j);
                }
                k += 1;
            }
            let kind = if d.is_empty() { "leaf" } else { "intermediate" };
            let dep = if d.is_empty() { String::new() } else {
                format!(" depends={}", d.iter().map(|j| format!("n{j}")).collect::<Vec<_>>().join(","))
            };
            src.push_str(&format!("[NODE] n{i} {kind}{dep}\n[CHANGE] AddModule m{i}\n[MODULE] m{i} level=1\n"));
            if !d.is_empty() {
                src.push_str("[RELY]\n");
                for j in &d {
                    src.push_str(&format!("fn g{j}() -> int\n"));
                }
            }
            src.push_str(&format!("[GUARANTEE]\nfn g{i}() -> int\n[SPEC] fn g{i}() -> int\nPost-condition:\n  Case 1: always\n    - Return 0\n"));
            src.push_str(&format!("[CHANGE] AddRely user\nfn g{i}() -> int\n"));
            deps.push(d);
        }
        let all: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
        src.push_str(&format!("[NODE] root root depends={} replaces=fn op(x: int) -> int\n[CHANGE] ReplaceFunction core\n{OP_V2}", all.join(",")));
        let p = parse_patch(&src).unwrap();
        let b = small();
        let reference = apply(&p, &b).unwrap().document;
        for seed in seeds {
            // random topological order: repeatedly pick a ready node
            let mut done: Vec<usize> = Vec::new();
            let mut s = seed as u64;
            while done.len() < n {
                let ready: Vec<usize> = (0..n).filter(|i| !done.contains(i) && deps[*i].iter().all(|j| done.contains(j))).collect();
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                done.push(ready[(s >> 33) as usize % ready.len()]);
            }
            let mut order: Vec<String> = done.iter().map(|i| format!("n{i}")).collect();
            order.push("root".into());
            prop_assert_eq!(&apply_in_order(&p, &b, &order).unwrap().document, &reference);
        }
    }
}
