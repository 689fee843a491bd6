//! Applying a planned patch with commit-point substitution.

use std::collections::BTreeSet;

use serde::Serialize;

use super::model::*;
use super::plan::{is_valid_order, order, validate_against};
use super::PatchError;
use crate::depgraph::{check_entailment, EntailmentReport};
use crate::spec::{check_wellformed, InterfaceLine, ModuleSpec, SpecDocument};

/// How a root's replaced guarantee was rebound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Substitution {
    pub root: String,
    pub signature: String,
    pub old_providers: Vec<String>,
    pub new_provider: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApplyOutcome {
    pub document: SpecDocument,
    pub order: Vec<String>,
    pub substitutions: Vec<Substitution>,
    pub entailment: EntailmentReport,
}

/// JSON summary written next to an applied spec directory.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub patch_id: &'a str,
    pub order: &'a [String],
    /// The replaced export is removed from its old provider.
    pub substitution_policy: &'static str,
    pub substitutions: &'a [Substitution],
    pub changes: Vec<ManifestChange>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestChange {
    pub node: String,
    pub change: String,
}

impl ApplyOutcome {
    pub fn manifest<'a>(&'a self, patch: &'a SpecPatch) -> Manifest<'a> {
        let changes = self
            .order
            .iter()
            .filter_map(|id| patch.node(id))
            .flat_map(|n| n.changes.iter().map(|c| ManifestChange { node: n.id.clone(), change: c.to_string() }))
            .collect();
        Manifest {
            patch_id: &patch.patch_id,
            order: &self.order,
            substitution_policy: "strict_replacement",
            substitutions: &self.substitutions,
            changes,
        }
    }
}

/// Applies in the planned order. `base` is never modified.
pub fn apply(patch: &SpecPatch, base: &SpecDocument) -> Result<ApplyOutcome, PatchError> {
    validate_against(patch, base)?;
    let plan = order(patch);
    apply_planned(patch, base, plan)
}

/// Applies in a caller-chosen order, which must be a valid topological order.
pub fn apply_in_order(patch: &SpecPatch, base: &SpecDocument, plan: &[String]) -> Result<ApplyOutcome, PatchError> {
    validate_against(patch, base)?;
    if !is_valid_order(patch, plan) {
        return Err(PatchError::InvalidPatch(format!("`{}` is not a valid node order", plan.join(", "))));
    }
    apply_planned(patch, base, plan.to_vec())
}

fn apply_planned(patch: &SpecPatch, base: &SpecDocument, plan: Vec<String>) -> Result<ApplyOutcome, PatchError> {
    let mut doc = base.clone();
    let mut touched = BTreeSet::new();
    let mut substitutions = Vec::new();
    for id in &plan {
        let node = patch.node(id).expect("plan ids come from the patch");
        for c in &node.changes {
            apply_change(&mut doc, c).map_err(|message| PatchError::InvalidChange { node: id.clone(), message })?;
            touched.insert(c.target().to_string());
        }
        if let Some(expected) = &node.replaces_guarantee {
            let s = commit(&mut doc, base, node, expected)?;
            touched.extend(s.old_providers.iter().cloned());
            touched.insert(s.new_provider.clone());
            substitutions.push(s);
        }
    }
    let added = added_modules(plan.iter().filter_map(|id| patch.node(id)).flat_map(|n| &n.changes));
    normalize(base, &added, &mut doc, &touched);
    let diags = check_wellformed(&doc);
    if !diags.is_empty() {
        return Err(PatchError::NotWellFormed(diags));
    }
    let entailment = check_entailment(&doc);
    if !entailment.is_clean() {
        return Err(PatchError::EntailmentBroken(entailment));
    }
    Ok(ApplyOutcome { document: doc, order: plan, substitutions, entailment })
}

fn commit(
    doc: &mut SpecDocument,
    base: &SpecDocument,
    node: &PatchNode,
    expected: &crate::spec::Signature,
) -> Result<Substitution, PatchError> {
    let mismatch = |found: String| PatchError::CommitPointMismatch {
        root: node.id.clone(),
        expected: expected.to_string(),
        found,
    };
    let (provider, sig) = node
        .changes
        .iter()
        .find_map(|c| match c {
            ModuleChange::AddFunction { target, function } | ModuleChange::ReplaceFunction { target, function }
                if function.signature.name == expected.name =>
            {
                Some((target.clone(), function.signature.clone()))
            }
            ModuleChange::AddModule { module } | ModuleChange::ReplaceModule { module } => {
                module.function(&expected.name).map(|f| (module.name.clone(), f.signature.clone()))
            }
            _ => None,
        })
        .ok_or_else(|| mismatch(format!("no `{}` defined by the root node", expected.name)))?;
    if !sig.equivalent(expected) {
        return Err(mismatch(sig.to_string()));
    }
    let old_providers: Vec<String> = base
        .modules
        .iter()
        .filter(|m| m.guarantee.exported_functions.iter().any(|s| s.equivalent(expected)))
        .map(|m| m.name.clone())
        .collect();
    for m in doc.modules.iter_mut().filter(|m| m.name != provider && old_providers.contains(&m.name)) {
        m.guarantee.exported_functions.retain(|s| !s.equivalent(expected));
    }
    let target = doc.module_mut(&provider).expect("root change target exists");
    if !target.guarantee.exported_functions.iter().any(|s| s.equivalent(expected)) {
        target.guarantee.exported_functions.push(sig);
    }
    Ok(Substitution { root: node.id.clone(), signature: expected.to_string(), old_providers, new_provider: provider })
}

/// Applies `changes` in order and normalizes, without any validation.
pub fn apply_changes(base: &SpecDocument, changes: &[ModuleChange]) -> Result<SpecDocument, PatchError> {
    let mut doc = base.clone();
    let mut touched = BTreeSet::new();
    for c in changes {
        apply_change(&mut doc, c).map_err(|message| PatchError::InvalidChange { node: String::new(), message })?;
        touched.insert(c.target().to_string());
    }
    normalize(base, &added_modules(changes), &mut doc, &touched);
    Ok(doc)
}

fn module<'a>(doc: &'a mut SpecDocument, name: &str) -> Result<&'a mut ModuleSpec, String> {
    doc.module_mut(name).ok_or_else(|| format!("module `{name}` does not exist"))
}

fn apply_change(doc: &mut SpecDocument, c: &ModuleChange) -> Result<(), String> {
    match c {
        ModuleChange::AddModule { module: m } => {
            if doc.module(&m.name).is_some() {
                return Err(format!("module `{}` already exists", m.name));
            }
            doc.modules.push(m.clone());
        }
        ModuleChange::ReplaceModule { module: m } => *module(doc, &m.name)? = m.clone(),
        ModuleChange::RemoveModule { target } => {
            module(doc, target)?;
            doc.modules.retain(|m| &m.name != target);
        }
        ModuleChange::AddFunction { target, function } => {
            let m = module(doc, target)?;
            if m.function(&function.signature.name).is_some() {
                return Err(format!("`{}` already specified in `{target}`", function.signature.name));
            }
            m.functions.push(function.clone());
        }
        ModuleChange::ReplaceFunction { target, function } => {
            let m = module(doc, target)?;
            let slot = m
                .functions
                .iter_mut()
                .find(|f| f.signature.name == function.signature.name)
                .ok_or_else(|| format!("`{}` not specified in `{target}`", function.signature.name))?;
            *slot = function.clone();
        }
        ModuleChange::AddGuarantee { target, items } => {
            let m = module(doc, target)?;
            let g = &mut m.guarantee;
            for i in items {
                let exists = match i {
                    InterfaceLine::Type(t) => g.exported_types.iter().any(|x| x.name == t.name),
                    InterfaceLine::Global(x) => g.exported_globals.iter().any(|y| y.name == x.name),
                    InterfaceLine::Function(s) => g.exported_functions.iter().any(|y| y.name == s.name),
                    InterfaceLine::LockProtocol(_) => return Err("lock_protocol in a guarantee".into()),
                };
                if exists {
                    return Err(format!("`{}` already exported by `{target}`", super::plan::line_name(i)));
                }
                match i {
                    InterfaceLine::Type(t) => g.exported_types.push(t.clone()),
                    InterfaceLine::Global(x) => g.exported_globals.push(x.clone()),
                    InterfaceLine::Function(s) => g.exported_functions.push(s.clone()),
                    InterfaceLine::LockProtocol(_) => unreachable!(),
                }
            }
        }
        ModuleChange::AddRely { target, items } => {
            let r = &mut module(doc, target)?.rely;
            // an item with the same name is updated in place
            for i in items {
                match i {
                    InterfaceLine::Type(t) => upsert(&mut r.imported_types, t.clone(), |x| x.name == t.name),
                    InterfaceLine::Global(g) => upsert(&mut r.imported_globals, g.clone(), |x| x.name == g.name),
                    InterfaceLine::Function(s) => upsert(&mut r.imported_functions, s.clone(), |x| x.name == s.name),
                    InterfaceLine::LockProtocol(p) => upsert(&mut r.imported_lock_protocols, p.clone(), |x| x == p),
                }
            }
        }
        ModuleChange::ModifyType { target, types } => {
            let m = module(doc, target)?;
            for t in types {
                let mut hit = false;
                let lists = [&mut m.local_types, &mut m.guarantee.exported_types, &mut m.rely.imported_types];
                for list in lists {
                    for x in list.iter_mut().filter(|x| x.name == t.name) {
                        x.definition = t.definition.clone();
                        hit = true;
                    }
                }
                if !hit {
                    return Err(format!("type `{}` not declared in `{target}`", t.name));
                }
            }
        }
    }
    Ok(())
}

fn upsert<T>(list: &mut Vec<T>, item: T, same: impl Fn(&T) -> bool) {
    match list.iter_mut().find(|x| same(x)) {
        Some(slot) => *slot = item,
        None => list.push(item),
    }
}

fn added_modules<'a>(changes: impl IntoIterator<Item = &'a ModuleChange>) -> Vec<ModuleSpec> {
    changes
        .into_iter()
        .filter_map(|c| match c {
            ModuleChange::AddModule { module } | ModuleChange::ReplaceModule { module } => Some(module.clone()),
            _ => None,
        })
        .collect()
}

/// Items already present in the base (or in the payload of the last
/// AddModule/ReplaceModule for that module) keep their order; added items follow, sorted by
/// name. New modules follow the base modules, sorted by name. This makes the
/// result independent of which valid plan was used.
fn normalize(base: &SpecDocument, added: &[ModuleSpec], doc: &mut SpecDocument, touched: &BTreeSet<String>) {
    fn settle<T>(base: &[T], list: &mut Vec<T>, key: impl Fn(&T) -> String) {
        let known: BTreeSet<String> = base.iter().map(&key).collect();
        let (mut old, mut new): (Vec<T>, Vec<T>) = list.drain(..).partition(|x| known.contains(&key(x)));
        new.sort_by_key(|x| key(x));
        old.append(&mut new);
        *list = old;
    }
    let empty = ModuleSpec::new("");
    for m in doc.modules.iter_mut().filter(|m| touched.contains(&m.name)) {
        let b = added.iter().rev().find(|a| a.name == m.name).or_else(|| base.module(&m.name)).unwrap_or(&empty);
        settle(&b.rely.imported_types, &mut m.rely.imported_types, |t| t.name.clone());
        settle(&b.rely.imported_globals, &mut m.rely.imported_globals, |g| g.name.clone());
        settle(&b.rely.imported_functions, &mut m.rely.imported_functions, |s| s.name.clone());
        settle(&b.rely.imported_lock_protocols, &mut m.rely.imported_lock_protocols, |p| p.clone());
        settle(&b.guarantee.exported_types, &mut m.guarantee.exported_types, |t| t.name.clone());
        settle(&b.guarantee.exported_globals, &mut m.guarantee.exported_globals, |g| g.name.clone());
        settle(&b.guarantee.exported_functions, &mut m.guarantee.exported_functions, |s| s.name.clone());
        settle(&b.local_types, &mut m.local_types, |t| t.name.clone());
        settle(&b.functions, &mut m.functions, |f| f.signature.name.clone());
    }
    settle(&base.modules, &mut doc.modules, |m| m.name.clone());
}
