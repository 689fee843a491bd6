//! Inverse of apply: the changes that turn one document into another.

use super::apply::apply_changes;
use super::model::ModuleChange;
use crate::spec::{InterfaceLine, ModuleSpec, SpecDocument};

/// Fine-grained changes where they reproduce `after` exactly, otherwise a
/// whole-module replacement. Module order is not represented.
pub fn diff(before: &SpecDocument, after: &SpecDocument) -> Vec<ModuleChange> {
    let mut out = Vec::new();
    for a in &after.modules {
        match before.module(&a.name) {
            None => out.push(ModuleChange::AddModule { module: a.clone() }),
            Some(b) if b == a => {}
            Some(b) => out.extend(module_diff(b, a)),
        }
    }
    for b in &before.modules {
        if after.module(&b.name).is_none() {
            out.push(ModuleChange::RemoveModule { target: b.name.clone() });
        }
    }
    out
}

fn module_diff(b: &ModuleSpec, a: &ModuleSpec) -> Vec<ModuleChange> {
    let whole = || vec![ModuleChange::ReplaceModule { module: a.clone() }];
    if let Some(fine) = fine_changes(b, a) {
        let single = SpecDocument { version_id: String::new(), modules: vec![b.clone()] };
        if let Ok(d) = apply_changes(&single, &fine) {
            if d.modules.len() == 1 && &d.modules[0] == a {
                return fine;
            }
        }
    }
    whole()
}

fn fine_changes(b: &ModuleSpec, a: &ModuleSpec) -> Option<Vec<ModuleChange>> {
    if a.level != b.level || a.loc_budget != b.loc_budget || a.module_invariants != b.module_invariants {
        return None;
    }
    let target = a.name.clone();
    let mut out = Vec::new();

    let mut types = Vec::new();
    for t in &a.local_types {
        match b.local_types.iter().find(|x| x.name == t.name) {
            Some(x) if x == t => {}
            Some(_) => types.push(t.clone()),
            None => return None,
        }
    }
    if b.local_types.len() != a.local_types.len() {
        return None;
    }
    if !types.is_empty() {
        out.push(ModuleChange::ModifyType { target: target.clone(), types });
    }

    let mut rely = Vec::new();
    let ar = &a.rely;
    let br = &b.rely;
    rely.extend(ar.imported_types.iter().filter(|t| !br.imported_types.contains(t)).cloned().map(InterfaceLine::Type));
    rely.extend(
        ar.imported_globals.iter().filter(|g| !br.imported_globals.contains(g)).cloned().map(InterfaceLine::Global),
    );
    rely.extend(
        ar.imported_functions
            .iter()
            .filter(|s| !br.imported_functions.contains(s))
            .cloned()
            .map(InterfaceLine::Function),
    );
    rely.extend(
        ar.imported_lock_protocols
            .iter()
            .filter(|p| !br.imported_lock_protocols.contains(p))
            .cloned()
            .map(InterfaceLine::LockProtocol),
    );
    if !rely.is_empty() {
        out.push(ModuleChange::AddRely { target: target.clone(), items: rely });
    }

    let ag = &a.guarantee;
    let bg = &b.guarantee;
    let mut guar = Vec::new();
    guar.extend(ag.exported_types.iter().filter(|t| !bg.exported_types.contains(t)).cloned().map(InterfaceLine::Type));
    guar.extend(
        ag.exported_globals.iter().filter(|g| !bg.exported_globals.contains(g)).cloned().map(InterfaceLine::Global),
    );
    guar.extend(
        ag.exported_functions
            .iter()
            .filter(|s| !bg.exported_functions.contains(s))
            .cloned()
            .map(InterfaceLine::Function),
    );
    if !guar.is_empty() {
        out.push(ModuleChange::AddGuarantee { target: target.clone(), items: guar });
    }

    for f in &a.functions {
        match b.function(&f.signature.name) {
            Some(x) if x == f => {}
            Some(_) => out.push(ModuleChange::ReplaceFunction { target: target.clone(), function: f.clone() }),
            None => out.push(ModuleChange::AddFunction { target: target.clone(), function: f.clone() }),
        }
    }
    Some(out)
}
