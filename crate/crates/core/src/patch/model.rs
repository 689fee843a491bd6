use std::fmt;

use serde::Serialize;

use crate::spec::{FunctionSpec, InterfaceLine, ModuleSpec, Signature, TypeDecl};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Leaf,
    Intermediate,
    Root,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Leaf => "leaf",
            NodeKind::Intermediate => "intermediate",
            NodeKind::Root => "root",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "leaf" => NodeKind::Leaf,
            "intermediate" => NodeKind::Intermediate,
            "root" => NodeKind::Root,
            _ => return None,
        })
    }
}

/// One edit to one module. Payloads use the module grammar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind")]
pub enum ModuleChange {
    AddModule {
        module: ModuleSpec,
    },
    /// Whole-module rewrite; produced by [`super::diff`] when finer changes
    /// cannot express the edit.
    ReplaceModule {
        module: ModuleSpec,
    },
    RemoveModule {
        target: String,
    },
    AddFunction {
        target: String,
        function: FunctionSpec,
    },
    ReplaceFunction {
        target: String,
        function: FunctionSpec,
    },
    AddGuarantee {
        target: String,
        items: Vec<InterfaceLine>,
    },
    AddRely {
        target: String,
        items: Vec<InterfaceLine>,
    },
    ModifyType {
        target: String,
        types: Vec<TypeDecl>,
    },
}

impl ModuleChange {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModuleChange::AddModule { .. } => "AddModule",
            ModuleChange::ReplaceModule { .. } => "ReplaceModule",
            ModuleChange::RemoveModule { .. } => "RemoveModule",
            ModuleChange::AddFunction { .. } => "AddFunction",
            ModuleChange::ReplaceFunction { .. } => "ReplaceFunction",
            ModuleChange::AddGuarantee { .. } => "AddGuarantee",
            ModuleChange::AddRely { .. } => "AddRely",
            ModuleChange::ModifyType { .. } => "ModifyType",
        }
    }

    pub fn target(&self) -> &str {
        match self {
            ModuleChange::AddModule { module } | ModuleChange::ReplaceModule { module } => &module.name,
            ModuleChange::RemoveModule { target }
            | ModuleChange::AddFunction { target, .. }
            | ModuleChange::ReplaceFunction { target, .. }
            | ModuleChange::AddGuarantee { target, .. }
            | ModuleChange::AddRely { target, .. }
            | ModuleChange::ModifyType { target, .. } => target,
        }
    }
}

impl fmt::Display for ModuleChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind_name(), self.target())?;
        match self {
            ModuleChange::AddFunction { function, .. } | ModuleChange::ReplaceFunction { function, .. } => {
                write!(f, " {}", function.signature.name)
            }
            ModuleChange::ModifyType { types, .. } => {
                let names: Vec<_> = types.iter().map(|t| t.name.as_str()).collect();
                write!(f, " {}", names.join(","))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PatchNode {
    pub id: String,
    pub kind: NodeKind,
    pub depends_on: Vec<String>,
    pub changes: Vec<ModuleChange>,
    /// Root only: the existing export this node substitutes.
    pub replaces_guarantee: Option<Signature>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpecPatch {
    pub patch_id: String,
    pub nodes: Vec<PatchNode>,
}

impl SpecPatch {
    pub fn node(&self, id: &str) -> Option<&PatchNode> {
        self.nodes.iter().find(|n| n.id == id)
    }
}
