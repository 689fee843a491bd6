//! Random well-formed spec documents for round-trip properties.

use std::collections::BTreeSet;

use genfs::spec::*;
use proptest::prelude::*;

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "alpha", "inode", "lock", "held", "path", "free", "block", "zero", "entry", "dir", "name", "size",
    ])
    .prop_map(String::from)
}

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..6).prop_map(|w| w.join(" "))
}

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,7}"
}

fn ty() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["int", "unsigned", "struct inode*", "char*[]", "char*", "void", "u64"])
        .prop_map(String::from)
}

fn signature() -> impl Strategy<Value = Signature> {
    (ident(), prop::collection::vec((ident(), ty()), 0..4), ty()).prop_map(|(name, ps, ret)| Signature {
        name,
        params: ps.into_iter().map(|(name, ty)| Param { name, ty }).collect(),
        return_type: ret,
    })
}

fn predicate() -> impl Strategy<Value = Predicate> {
    (
        text(),
        prop::option::of(prop::sample::select(vec![
            PredicateTag::Nullness,
            PredicateTag::Range,
            PredicateTag::Membership,
            PredicateTag::LockState,
        ])),
    )
        .prop_map(|(text, tag)| Predicate { text, tag })
}

fn lock_assertion() -> impl Strategy<Value = LockAssertion> {
    prop_oneof![
        Just(LockAssertion { subject: String::new(), state: LockState::NoneHeld }),
        (ident(), prop::sample::select(vec![LockState::Held, LockState::NotHeld, LockState::OnlyThisHeld]))
            .prop_map(|(subject, state)| LockAssertion { subject, state }),
    ]
}

fn concurrency() -> impl Strategy<Value = ConcurrencySpec> {
    (
        prop::collection::btree_set(
            prop::sample::select(vec![Mechanism::Exclusive, Mechanism::SharedReadSection, Mechanism::AtomicCounter]),
            0..3,
        ),
        prop::collection::vec(lock_assertion(), 0..3),
        prop::collection::vec(
            (prop_oneof![Just("always".to_string()), text()], prop::collection::vec(lock_assertion(), 1..3))
                .prop_map(|(condition, assertions)| LockPostCase { condition, assertions }),
            0..3,
        ),
        prop::collection::vec(text(), 0..3),
    )
        .prop_map(|(m, lock_pre, lock_post, algorithm)| ConcurrencySpec {
            mechanisms: m.into_iter().collect(),
            lock_pre,
            lock_post,
            algorithm,
        })
}

fn function() -> impl Strategy<Value = FunctionSpec> {
    (
        signature(),
        prop::collection::vec(predicate(), 0..3),
        prop::collection::vec(
            (
                prop_oneof![Just(String::new()), text()],
                prop::collection::vec(predicate(), 0..3),
                prop::option::of(prop::sample::select(vec!["0", "-1", "NULL"])),
            ),
            0..3,
        ),
        prop::collection::vec(predicate(), 0..2),
        prop::option::of(prop::collection::vec(text(), 0..4)),
        prop::option::of(text()),
        prop::option::of(concurrency()),
    )
        .prop_map(|(signature, pre, post, invariants, algorithm, intent, concurrency)| FunctionSpec {
            signature,
            pre,
            post: post
                .into_iter()
                .enumerate()
                .map(|(i, (condition, outcomes, ret))| PostCase {
                    label: format!("Case {}", i + 1),
                    condition,
                    outcomes,
                    returns: ret.map(String::from),
                })
                .collect(),
            invariants,
            algorithm,
            intent,
            concurrency,
        })
}

fn type_decl() -> impl Strategy<Value = TypeDecl> {
    (ident(), text()).prop_map(|(name, definition)| TypeDecl { name, definition })
}

fn global() -> impl Strategy<Value = GlobalDecl> {
    (ident(), ty()).prop_map(|(name, ty)| GlobalDecl { name, ty })
}

fn module() -> impl Strategy<Value = ModuleSpec> {
    (
        ident(),
        1u8..=3,
        1u32..2000,
        (
            prop::collection::vec(type_decl(), 0..2),
            prop::collection::vec(global(), 0..2),
            prop::collection::vec(signature(), 0..3),
            prop::collection::vec(ident(), 0..2),
        ),
        (
            prop::collection::vec(type_decl(), 0..2),
            prop::collection::vec(global(), 0..2),
            prop::collection::vec(signature(), 0..3),
        ),
        prop::collection::vec(type_decl(), 0..2),
        prop::collection::vec(predicate(), 0..2),
        prop::collection::vec(function(), 0..3),
    )
        .prop_map(|(name, level, loc_budget, (rt, rg, rf, rl), (gt, gg, gf), local_types, inv, functions)| {
            let mut functions: Vec<FunctionSpec> = functions;
            // concurrency blocks are addressed by name, so names must be unique
            let mut seen = BTreeSet::new();
            functions.retain(|f| seen.insert(f.signature.name.clone()));
            ModuleSpec {
                name,
                level: Level::from_number(level).unwrap(),
                loc_budget,
                rely: RelyClause {
                    imported_types: rt,
                    imported_globals: rg,
                    imported_functions: rf,
                    imported_lock_protocols: rl,
                },
                guarantee: GuaranteeClause { exported_types: gt, exported_globals: gg, exported_functions: gf },
                local_types,
                module_invariants: inv,
                functions,
            }
        })
}

pub fn document() -> impl Strategy<Value = SpecDocument> {
    (prop::option::of("[a-z0-9.-]{1,8}"), prop::collection::vec(module(), 0..4))
        .prop_map(|(v, modules)| SpecDocument { version_id: v.unwrap_or_default(), modules })
}
