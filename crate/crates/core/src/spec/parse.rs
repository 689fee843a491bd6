//! Line-oriented parser for `.gspec` text.
//!
//! Layout of one module (sections are optional, order is fixed):
//!
//! ```text
//! [MODULE] ins level=1 loc_budget=500
//! [RELY]
//! type inode = struct inode { ... }
//! global root_inum: struct inode*
//! fn locate(cur: struct inode*, path: char*[]) -> struct inode*
//! lock_protocol locate
//! [GUARANTEE]
//! fn atomfs_ins(path: char*[], name: char*, mode: int) -> int
//! [TYPES]
//! [INVARIANTS]
//! [SPEC] fn atomfs_ins(path: char*[], name: char*, mode: int) -> int
//! Pre-condition:
//!   - path: a NULL-terminated string array
//! Post-condition:
//!   Case 1: Successful traversal and insertion
//!     - New inode created
//!     - Return 0
//! [CONCURRENCY] atomfs_ins
//! Pre-condition:
//!   - none_held
//! ```

use super::types::*;
use super::SpecError;

pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn syntax(line: usize, expected: impl Into<String>) -> SpecError {
    SpecError::Syntax { line, expected: expected.into() }
}

/// Parses `fn name(a: T, b: U) -> R`.
pub fn parse_signature(text: &str, line: usize) -> Result<Signature, SpecError> {
    let rest = text.trim().strip_prefix("fn ").ok_or_else(|| syntax(line, "`fn <name>(<params>) -> <type>`"))?;
    let open = rest.find('(').ok_or_else(|| syntax(line, "`(` after function name"))?;
    let name = rest[..open].trim();
    if !is_ident(name) {
        return Err(syntax(line, "function identifier"));
    }
    let close = rest.rfind(')').ok_or_else(|| syntax(line, "`)` closing parameter list"))?;
    if close < open {
        return Err(syntax(line, "`)` closing parameter list"));
    }
    let inner = rest[open + 1..close].trim();
    let mut params = Vec::new();
    if !inner.is_empty() {
        for part in inner.split(',') {
            let (pname, pty) = part.split_once(':').ok_or_else(|| syntax(line, "parameter `<name>: <type>`"))?;
            let (pname, pty) = (pname.trim(), normalize_ws(pty));
            if !is_ident(pname) || pty.is_empty() {
                return Err(syntax(line, "parameter `<name>: <type>`"));
            }
            params.push(Param { name: pname.to_string(), ty: pty });
        }
    }
    let ret = rest[close + 1..].trim().strip_prefix("->").ok_or_else(|| syntax(line, "`-> <return type>`"))?;
    let ret = normalize_ws(ret);
    if ret.is_empty() {
        return Err(syntax(line, "return type"));
    }
    Ok(Signature { name: name.to_string(), params, return_type: ret })
}

fn parse_type_decl(text: &str, line: usize) -> Result<TypeDecl, SpecError> {
    let rest = text.strip_prefix("type ").ok_or_else(|| syntax(line, "`type <name> = <definition>`"))?;
    let (name, def) = rest.split_once('=').ok_or_else(|| syntax(line, "`=` in type declaration"))?;
    let (name, def) = (name.trim(), normalize_ws(def));
    if !is_ident(name) || def.is_empty() {
        return Err(syntax(line, "`type <name> = <definition>`"));
    }
    Ok(TypeDecl { name: name.to_string(), definition: def })
}

fn parse_global(text: &str, line: usize) -> Result<GlobalDecl, SpecError> {
    let rest = text.strip_prefix("global ").ok_or_else(|| syntax(line, "`global <name>: <type>`"))?;
    let (name, ty) = rest.split_once(':').ok_or_else(|| syntax(line, "`:` in global declaration"))?;
    let (name, ty) = (name.trim(), normalize_ws(ty));
    if !is_ident(name) || ty.is_empty() {
        return Err(syntax(line, "`global <name>: <type>`"));
    }
    Ok(GlobalDecl { name: name.to_string(), ty })
}

/// An interface line inside RELY / GUARANTEE / TYPES / patch payloads.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum InterfaceLine {
    Type(TypeDecl),
    Global(GlobalDecl),
    Function(Signature),
    LockProtocol(String),
}

pub fn parse_interface_line(text: &str, line: usize) -> Result<InterfaceLine, SpecError> {
    if text.starts_with("type ") {
        parse_type_decl(text, line).map(InterfaceLine::Type)
    } else if text.starts_with("global ") {
        parse_global(text, line).map(InterfaceLine::Global)
    } else if text.starts_with("fn ") {
        parse_signature(text, line).map(InterfaceLine::Function)
    } else if let Some(name) = text.strip_prefix("lock_protocol ") {
        let name = name.trim();
        if !is_ident(name) {
            return Err(syntax(line, "`lock_protocol <function>`"));
        }
        Ok(InterfaceLine::LockProtocol(name.to_string()))
    } else {
        Err(syntax(line, "`type`, `global`, `fn` or `lock_protocol` declaration"))
    }
}

fn parse_predicate(text: &str, line: usize) -> Result<Predicate, SpecError> {
    let text = text.trim();
    if let Some(rest) = text.strip_prefix('[') {
        if let Some((tag, body)) = rest.split_once(']') {
            if let Some(tag) = PredicateTag::parse(tag.trim()) {
                let body = body.trim();
                if body.is_empty() {
                    return Err(syntax(line, "predicate text after tag"));
                }
                return Ok(Predicate { text: body.to_string(), tag: Some(tag) });
            }
        }
    }
    if text.is_empty() {
        return Err(syntax(line, "non-empty predicate"));
    }
    Ok(Predicate::new(text))
}

fn parse_lock_assertion(text: &str, line: usize) -> Result<LockAssertion, SpecError> {
    let text = text.trim();
    if text == "none_held" {
        return Ok(LockAssertion { subject: String::new(), state: LockState::NoneHeld });
    }
    let (subject, state) = text
        .rsplit_once(char::is_whitespace)
        .ok_or_else(|| syntax(line, "lock assertion `<subject> <state>` or `none_held`"))?;
    let state = LockState::parse(state.trim())
        .filter(|s| *s != LockState::NoneHeld)
        .ok_or_else(|| syntax(line, "lock state held|not_held|only_this_held"))?;
    let subject = subject.trim();
    if subject.is_empty() || subject.contains(char::is_whitespace) {
        return Err(syntax(line, "lock subject path"));
    }
    Ok(LockAssertion { subject: subject.to_string(), state })
}

fn parse_lock_list(text: &str, line: usize) -> Result<Vec<LockAssertion>, SpecError> {
    text.split(';').map(|p| parse_lock_assertion(p, line)).collect()
}

fn strip_bullet(text: &str) -> Option<&str> {
    text.strip_prefix("- ").or_else(|| (text == "-").then_some(""))
}

fn strip_step_number(text: &str) -> Option<&str> {
    let digits = text.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 {
        return None;
    }
    text[digits..].strip_prefix('.').map(str::trim)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    Header,
    Rely,
    Guarantee,
    Types,
    Invariants,
    Spec,
    Concurrency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SpecPart {
    None,
    Pre,
    Post,
    Invariant,
    Algorithm,
}

struct Cursor {
    section: Section,
    part: SpecPart,
}

/// Syntax-only parse: no duplicate or symbol checks.
pub fn parse_document_unchecked(source: &str) -> Result<SpecDocument, SpecError> {
    let mut doc = SpecDocument::default();
    let mut cur = Cursor { section: Section::Header, part: SpecPart::None };
    let mut saw_module = false;

    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let text = raw.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }

        if let Some(rest) = text.strip_prefix("[DOCUMENT]") {
            if saw_module || !doc.version_id.is_empty() {
                return Err(syntax(line_no, "[DOCUMENT] only before the first module"));
            }
            let v = rest.trim().strip_prefix("version=").ok_or_else(|| syntax(line_no, "`version=<id>`"))?;
            if v.is_empty() || v.contains(char::is_whitespace) {
                return Err(syntax(line_no, "non-empty version id"));
            }
            doc.version_id = v.to_string();
            continue;
        }

        if let Some(rest) = text.strip_prefix("[MODULE]") {
            doc.modules.push(parse_module_header(rest, line_no)?);
            saw_module = true;
            cur = Cursor { section: Section::Header, part: SpecPart::None };
            continue;
        }

        let module = doc.modules.last_mut().ok_or_else(|| syntax(line_no, "[MODULE] header"))?;

        if text.starts_with('[') {
            let (tag, rest) = match text.find(']') {
                Some(end) => (&text[..=end], text[end + 1..].trim()),
                None => return Err(syntax(line_no, "closing `]` of section header")),
            };
            let next = match tag {
                "[RELY]" => Section::Rely,
                "[GUARANTEE]" => Section::Guarantee,
                "[TYPES]" => Section::Types,
                "[INVARIANTS]" => Section::Invariants,
                "[SPEC]" => Section::Spec,
                "[CONCURRENCY]" => Section::Concurrency,
                _ => return Err(syntax(line_no, "section header")),
            };
            let repeatable = matches!(next, Section::Spec | Section::Concurrency);
            if next < cur.section || (next == cur.section && !repeatable) {
                return Err(syntax(line_no, "sections in order RELY, GUARANTEE, TYPES, INVARIANTS, SPEC, CONCURRENCY"));
            }
            match next {
                Section::Spec => {
                    let sig = parse_signature(rest, line_no)?;
                    module.functions.push(FunctionSpec::new(sig));
                }
                Section::Concurrency => {
                    let f = module
                        .functions
                        .iter_mut()
                        .find(|f| f.signature.name == rest)
                        .ok_or_else(|| syntax(line_no, "[CONCURRENCY] naming a function with a [SPEC] block"))?;
                    if f.concurrency.is_some() {
                        return Err(syntax(line_no, "one [CONCURRENCY] block per function"));
                    }
                    f.concurrency = Some(ConcurrencySpec::default());
                }
                _ if !rest.is_empty() => return Err(syntax(line_no, "end of line after section header")),
                _ => {}
            }
            cur = Cursor { section: next, part: SpecPart::None };
            continue;
        }

        match cur.section {
            Section::Header => return Err(syntax(line_no, "section header")),
            Section::Rely => match parse_interface_line(text, line_no)? {
                InterfaceLine::Type(t) => module.rely.imported_types.push(t),
                InterfaceLine::Global(g) => module.rely.imported_globals.push(g),
                InterfaceLine::Function(s) => module.rely.imported_functions.push(s),
                InterfaceLine::LockProtocol(p) => module.rely.imported_lock_protocols.push(p),
            },
            Section::Guarantee => match parse_interface_line(text, line_no)? {
                InterfaceLine::Type(t) => module.guarantee.exported_types.push(t),
                InterfaceLine::Global(g) => module.guarantee.exported_globals.push(g),
                InterfaceLine::Function(s) => module.guarantee.exported_functions.push(s),
                InterfaceLine::LockProtocol(_) => return Err(syntax(line_no, "lock_protocol only inside [RELY]")),
            },
            Section::Types => module.local_types.push(parse_type_decl(text, line_no)?),
            Section::Invariants => {
                let body = strip_bullet(text).ok_or_else(|| syntax(line_no, "`- <invariant>`"))?;
                module.module_invariants.push(parse_predicate(body, line_no)?);
            }
            Section::Spec => {
                let f = module.functions.last_mut().expect("spec section implies a function");
                parse_spec_line(f, &mut cur.part, text, line_no)?;
            }
            Section::Concurrency => {
                let f = module
                    .functions
                    .iter_mut()
                    .rev()
                    .find(|f| f.concurrency.is_some())
                    .expect("concurrency section implies a block");
                let c = f.concurrency.as_mut().expect("checked above");
                parse_concurrency_line(c, &mut cur.part, text, line_no)?;
            }
        }
    }
    Ok(doc)
}

fn parse_module_header(rest: &str, line: usize) -> Result<ModuleSpec, SpecError> {
    let mut words = rest.split_whitespace();
    let name = words.next().ok_or_else(|| syntax(line, "module name"))?;
    if !is_ident(name) {
        return Err(syntax(line, "module identifier"));
    }
    let mut module = ModuleSpec::new(name);
    for w in words {
        if let Some(v) = w.strip_prefix("level=") {
            module.level =
                v.parse::<u8>().ok().and_then(Level::from_number).ok_or_else(|| syntax(line, "level=1|2|3"))?;
        } else if let Some(v) = w.strip_prefix("loc_budget=") {
            module.loc_budget =
                v.parse::<u32>().ok().filter(|n| *n > 0).ok_or_else(|| syntax(line, "positive loc_budget"))?;
        } else {
            return Err(syntax(line, "`level=` or `loc_budget=`"));
        }
    }
    Ok(module)
}

fn parse_spec_line(f: &mut FunctionSpec, part: &mut SpecPart, text: &str, line: usize) -> Result<(), SpecError> {
    if let Some(rest) = text.strip_prefix("Pre-condition:") {
        *part = SpecPart::Pre;
        if !rest.trim().is_empty() {
            f.pre.push(parse_predicate(rest, line)?);
        }
        return Ok(());
    }
    if text == "Post-condition:" {
        *part = SpecPart::Post;
        return Ok(());
    }
    if let Some(rest) = text.strip_prefix("Invariant:") {
        *part = SpecPart::Invariant;
        if !rest.trim().is_empty() {
            f.invariants.push(parse_predicate(rest, line)?);
        }
        return Ok(());
    }
    if text == "Algorithm:" {
        *part = SpecPart::Algorithm;
        f.algorithm.get_or_insert_with(Vec::new);
        return Ok(());
    }
    if let Some(rest) = text.strip_prefix("Intent:") {
        *part = SpecPart::None;
        let rest = rest.trim();
        if rest.is_empty() {
            return Err(syntax(line, "intent text"));
        }
        f.intent = Some(rest.to_string());
        return Ok(());
    }
    match *part {
        SpecPart::Pre => {
            let body = strip_bullet(text).ok_or_else(|| syntax(line, "`- <pre-condition>`"))?;
            f.pre.push(parse_predicate(body, line)?);
        }
        SpecPart::Invariant => {
            let body = strip_bullet(text).ok_or_else(|| syntax(line, "`- <invariant>`"))?;
            f.invariants.push(parse_predicate(body, line)?);
        }
        SpecPart::Algorithm => {
            let body = strip_step_number(text)
                .or_else(|| strip_bullet(text))
                .ok_or_else(|| syntax(line, "numbered algorithm step"))?;
            if body.is_empty() {
                return Err(syntax(line, "non-empty algorithm step"));
            }
            f.algorithm.get_or_insert_with(Vec::new).push(body.to_string());
        }
        SpecPart::Post => {
            if let Some(rest) = text.strip_prefix("Case ") {
                let (num, cond) = match rest.find(|c: char| c == ':' || c.is_whitespace()) {
                    Some(i) => (&rest[..i], rest[i..].trim_start_matches(':').trim()),
                    None => (rest, ""),
                };
                if num.is_empty() {
                    return Err(syntax(line, "case label `Case <n>`"));
                }
                f.post.push(PostCase {
                    label: format!("Case {num}"),
                    condition: cond.to_string(),
                    outcomes: Vec::new(),
                    returns: None,
                });
            } else {
                let body = strip_bullet(text).ok_or_else(|| syntax(line, "`Case <n>` or `- <outcome>`"))?;
                let case = f.post.last_mut().ok_or_else(|| syntax(line, "`Case <n>` before outcomes"))?;
                if let Some(ret) = body.strip_prefix("Return ") {
                    if case.returns.is_some() {
                        return Err(syntax(line, "a single `Return` per case"));
                    }
                    let ret = ret.trim();
                    if ret.is_empty() {
                        return Err(syntax(line, "returned value"));
                    }
                    case.returns = Some(ret.to_string());
                } else {
                    case.outcomes.push(parse_predicate(body, line)?);
                }
            }
        }
        SpecPart::None => {
            return Err(syntax(line, "`Pre-condition:`, `Post-condition:`, `Invariant:`, `Algorithm:` or `Intent:`"))
        }
    }
    Ok(())
}

fn parse_concurrency_line(
    c: &mut ConcurrencySpec,
    part: &mut SpecPart,
    text: &str,
    line: usize,
) -> Result<(), SpecError> {
    if let Some(rest) = text.strip_prefix("Mechanisms:") {
        *part = SpecPart::None;
        for m in rest.split(',').map(str::trim).filter(|m| !m.is_empty()) {
            let m = Mechanism::parse(m)
                .ok_or_else(|| syntax(line, "mechanism exclusive|shared_read_section|atomic_counter"))?;
            if !c.mechanisms.contains(&m) {
                c.mechanisms.push(m);
            }
        }
        c.mechanisms.sort();
        return Ok(());
    }
    match text {
        "Pre-condition:" => *part = SpecPart::Pre,
        "Post-condition:" => *part = SpecPart::Post,
        "Algorithm:" => *part = SpecPart::Algorithm,
        _ => match *part {
            SpecPart::Pre => {
                let body = strip_bullet(text).ok_or_else(|| syntax(line, "`- <lock assertion>`"))?;
                c.lock_pre.extend(parse_lock_list(body, line)?);
            }
            SpecPart::Post => {
                let body = strip_bullet(text).ok_or_else(|| syntax(line, "`- when <cond>: <assertions>`"))?;
                let (cond, list) = body.rsplit_once(':').ok_or_else(|| syntax(line, "`:` before lock assertions"))?;
                let cond = cond.trim();
                let condition = if cond == "always" {
                    "always".to_string()
                } else {
                    cond.strip_prefix("when ")
                        .map(str::trim)
                        .filter(|c| !c.is_empty())
                        .ok_or_else(|| syntax(line, "`when <condition>` or `always`"))?
                        .to_string()
                };
                c.lock_post.push(LockPostCase { condition, assertions: parse_lock_list(list, line)? });
            }
            SpecPart::Algorithm => {
                let body = strip_step_number(text)
                    .or_else(|| strip_bullet(text))
                    .filter(|b| !b.is_empty())
                    .ok_or_else(|| syntax(line, "numbered algorithm step"))?;
                c.algorithm.push(body.to_string());
            }
            _ => return Err(syntax(line, "`Mechanisms:`, `Pre-condition:`, `Post-condition:` or `Algorithm:`")),
        },
    }
    Ok(())
}

/// Parses standalone `[SPEC]` (and optional `[CONCURRENCY]`) blocks, as used
/// by patch payloads.
pub fn parse_function_blocks(source: &str, first_line: usize) -> Result<Vec<FunctionSpec>, SpecError> {
    let wrapped = format!("[MODULE] __payload\n{source}");
    let doc = parse_document_unchecked(&wrapped).map_err(|e| shift_line(e, first_line))?;
    Ok(doc.modules.into_iter().next().map(|m| m.functions).unwrap_or_default())
}

fn shift_line(e: SpecError, first_line: usize) -> SpecError {
    match e {
        // the synthetic header occupies line 1
        SpecError::Syntax { line, expected } => {
            SpecError::Syntax { line: line.saturating_sub(2) + first_line, expected }
        }
        other => other,
    }
}
