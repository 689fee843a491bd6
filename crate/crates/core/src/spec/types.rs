//! Data model of the specification language.
//!
//! A document is an ordered list of modules. Each module carries its
//! rely/guarantee interface, local type declarations, per-function
//! Hoare-style contracts and an optional concurrency contract per function.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const DEFAULT_LOC_BUDGET: u32 = 500;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SpecDocument {
    pub version_id: String,
    pub modules: Vec<ModuleSpec>,
}

impl SpecDocument {
    pub fn module(&self, name: &str) -> Option<&ModuleSpec> {
        self.modules.iter().find(|m| m.name == name)
    }

    pub fn module_mut(&mut self, name: &str) -> Option<&mut ModuleSpec> {
        self.modules.iter_mut().find(|m| m.name == name)
    }
}

/// Detail level of a module. Level 2 asks for an intent, level 3 for an
/// explicit algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    L1,
    L2,
    L3,
}

impl Level {
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Level::L1),
            2 => Some(Level::L2),
            3 => Some(Level::L3),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Level::L1 => 1,
            Level::L2 => 2,
            Level::L3 => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleSpec {
    pub name: String,
    pub level: Level,
    pub loc_budget: u32,
    pub rely: RelyClause,
    pub guarantee: GuaranteeClause,
    pub local_types: Vec<TypeDecl>,
    pub module_invariants: Vec<Predicate>,
    pub functions: Vec<FunctionSpec>,
}

impl ModuleSpec {
    pub fn new(name: impl Into<String>) -> Self {
        ModuleSpec {
            name: name.into(),
            level: Level::L1,
            loc_budget: DEFAULT_LOC_BUDGET,
            rely: RelyClause::default(),
            guarantee: GuaranteeClause::default(),
            local_types: Vec::new(),
            module_invariants: Vec::new(),
            functions: Vec::new(),
        }
    }

    pub fn function(&self, name: &str) -> Option<&FunctionSpec> {
        self.functions.iter().find(|f| f.signature.name == name)
    }
}

/// A named type with its structural definition kept as text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeDecl {
    pub name: String,
    pub definition: String,
}

/// A named global variable shared across modules (e.g. the root inode pointer).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalDecl {
    pub name: String,
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RelyClause {
    pub imported_types: Vec<TypeDecl>,
    pub imported_globals: Vec<GlobalDecl>,
    pub imported_functions: Vec<Signature>,
    /// Names of imported functions whose locking contract this module depends on.
    pub imported_lock_protocols: Vec<String>,
}

impl RelyClause {
    pub fn is_empty(&self) -> bool {
        self.imported_types.is_empty()
            && self.imported_globals.is_empty()
            && self.imported_functions.is_empty()
            && self.imported_lock_protocols.is_empty()
    }

    /// Every imported item as a [`RelyItem`], in declaration order.
    pub fn items(&self) -> Vec<RelyItem> {
        let mut out = Vec::new();
        out.extend(self.imported_types.iter().map(|t| RelyItem::Type(t.name.clone())));
        out.extend(self.imported_globals.iter().map(|g| RelyItem::Global(g.name.clone())));
        out.extend(self.imported_functions.iter().cloned().map(RelyItem::Function));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GuaranteeClause {
    pub exported_types: Vec<TypeDecl>,
    pub exported_globals: Vec<GlobalDecl>,
    pub exported_functions: Vec<Signature>,
}

impl GuaranteeClause {
    pub fn is_empty(&self) -> bool {
        self.exported_types.is_empty() && self.exported_globals.is_empty() && self.exported_functions.is_empty()
    }

    /// True if this guarantee can satisfy `item`.
    pub fn provides(&self, item: &RelyItem) -> bool {
        match item {
            RelyItem::Type(n) => self.exported_types.iter().any(|t| &t.name == n),
            RelyItem::Global(n) => self.exported_globals.iter().any(|g| &g.name == n),
            RelyItem::Function(sig) => self.exported_functions.iter().any(|s| s.equivalent(sig)),
        }
    }
}

/// One imported thing a module relies on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelyItem {
    Type(String),
    Global(String),
    Function(Signature),
}

impl RelyItem {
    pub fn name(&self) -> &str {
        match self {
            RelyItem::Type(n) | RelyItem::Global(n) => n,
            RelyItem::Function(s) => &s.name,
        }
    }
}

impl fmt::Display for RelyItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelyItem::Type(n) => write!(f, "type {n}"),
            RelyItem::Global(n) => write!(f, "global {n}"),
            RelyItem::Function(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub ty: String,
}

/// Function signature. `PartialEq` is structural (parameter names included);
/// interface compatibility uses [`Signature::equivalent`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub name: String,
    pub params: Vec<Param>,
    pub return_type: String,
}

pub(crate) fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl Signature {
    /// Name, parameter type list and return type, whitespace-normalized.
    pub fn key(&self) -> (String, Vec<String>, String) {
        (self.name.clone(), self.params.iter().map(|p| normalize_ws(&p.ty)).collect(), normalize_ws(&self.return_type))
    }

    pub fn equivalent(&self, other: &Signature) -> bool {
        self.key() == other.key()
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fn {}(", self.name)?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}: {}", p.name, p.ty)?;
        }
        write!(f, ") -> {}", self.return_type)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredicateTag {
    Nullness,
    Range,
    Membership,
    LockState,
}

impl PredicateTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PredicateTag::Nullness => "nullness",
            PredicateTag::Range => "range",
            PredicateTag::Membership => "membership",
            PredicateTag::LockState => "lock_state",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "nullness" => PredicateTag::Nullness,
            "range" => PredicateTag::Range,
            "membership" => PredicateTag::Membership,
            "lock_state" => PredicateTag::LockState,
            _ => return None,
        })
    }
}

/// Structured natural-language condition with an optional checkable kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub text: String,
    pub tag: Option<PredicateTag>,
}

impl Predicate {
    pub fn new(text: impl Into<String>) -> Self {
        Predicate { text: text.into(), tag: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostCase {
    /// "Case 1", "Case 2", ...
    pub label: String,
    pub condition: String,
    pub outcomes: Vec<Predicate>,
    /// Text after `Return`, e.g. `0` or `-1`.
    pub returns: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub signature: Signature,
    pub pre: Vec<Predicate>,
    pub post: Vec<PostCase>,
    pub invariants: Vec<Predicate>,
    pub algorithm: Option<Vec<String>>,
    pub intent: Option<String>,
    pub concurrency: Option<ConcurrencySpec>,
}

impl FunctionSpec {
    pub fn new(signature: Signature) -> Self {
        FunctionSpec {
            signature,
            pre: Vec::new(),
            post: Vec::new(),
            invariants: Vec::new(),
            algorithm: None,
            intent: None,
            concurrency: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    Exclusive,
    SharedReadSection,
    AtomicCounter,
}

impl Mechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Exclusive => "exclusive",
            Mechanism::SharedReadSection => "shared_read_section",
            Mechanism::AtomicCounter => "atomic_counter",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "exclusive" => Mechanism::Exclusive,
            "shared_read_section" => Mechanism::SharedReadSection,
            "atomic_counter" => Mechanism::AtomicCounter,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LockState {
    Held,
    NotHeld,
    OnlyThisHeld,
    NoneHeld,
}

impl LockState {
    pub fn as_str(self) -> &'static str {
        match self {
            LockState::Held => "held",
            LockState::NotHeld => "not_held",
            LockState::OnlyThisHeld => "only_this_held",
            LockState::NoneHeld => "none_held",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "held" => LockState::Held,
            "not_held" => LockState::NotHeld,
            "only_this_held" => LockState::OnlyThisHeld,
            "none_held" => LockState::NoneHeld,
            _ => return None,
        })
    }
}

/// `subject` is empty for `none_held`, which speaks about all locks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockAssertion {
    pub subject: String,
    pub state: LockState,
}

impl fmt::Display for LockAssertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.subject.is_empty() {
            f.write_str(self.state.as_str())
        } else {
            write!(f, "{} {}", self.subject, self.state.as_str())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockPostCase {
    pub condition: String,
    pub assertions: Vec<LockAssertion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConcurrencySpec {
    pub mechanisms: Vec<Mechanism>,
    pub lock_pre: Vec<LockAssertion>,
    pub lock_post: Vec<LockPostCase>,
    pub algorithm: Vec<String>,
}

impl ConcurrencySpec {
    pub fn is_empty(&self) -> bool {
        self.mechanisms.is_empty() && self.lock_pre.is_empty() && self.lock_post.is_empty() && self.algorithm.is_empty()
    }
}
