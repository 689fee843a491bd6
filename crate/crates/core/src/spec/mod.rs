//! Specification language: model, parser, canonical serializer and
//! well-formedness checker.

mod check;
mod parse;
mod render;
mod types;

use std::fs;
use std::path::Path;

use thiserror::Error;

pub use check::{called_symbols, check_document, check_module, unresolved_symbols, Diagnostic, Rule};
pub(crate) use parse::is_ident;
pub use parse::{
    parse_document_unchecked, parse_function_blocks, parse_interface_line, parse_signature, InterfaceLine,
};
pub use render::{render_concurrency, render_function, render_module, render_type};
pub use types::*;

pub const SPEC_EXTENSION: &str = "gspec";
const VERSION_FILE: &str = "VERSION";

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("syntax error at line {line}: expected {expected}")]
    Syntax { line: usize, expected: String },
    #[error("duplicate module `{0}`")]
    DuplicateModule(String),
    #[error("unresolved symbol `{symbol}` in module `{module}`")]
    UnresolvedSymbol { module: String, symbol: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: {inner}")]
    InFile { file: String, inner: Box<SpecError> },
}

/// Parses a document and rejects duplicate modules and unresolved symbols.
/// Other well-formedness rules are left to [`check_wellformed`].
pub fn parse_spec(source: &str) -> Result<SpecDocument, SpecError> {
    let doc = parse_document_unchecked(source)?;
    reject_structural(&doc)?;
    Ok(doc)
}

fn reject_structural(doc: &SpecDocument) -> Result<(), SpecError> {
    let mut seen = std::collections::HashSet::new();
    for m in &doc.modules {
        if !seen.insert(m.name.as_str()) {
            return Err(SpecError::DuplicateModule(m.name.clone()));
        }
    }
    for m in &doc.modules {
        if let Some((_, symbol)) = unresolved_symbols(m).into_iter().next() {
            return Err(SpecError::UnresolvedSymbol { module: m.name.clone(), symbol });
        }
    }
    Ok(())
}

pub fn check_wellformed(doc: &SpecDocument) -> Vec<Diagnostic> {
    check_document(doc)
}

pub fn serialize_spec(doc: &SpecDocument) -> String {
    render::render_document(doc)
}

/// Loads a spec directory: every `*.gspec` file in file-name order, plus an
/// optional `VERSION` file. Syntax only; see [`check_wellformed`].
pub fn load_dir_unchecked(dir: &Path) -> Result<SpecDocument, SpecError> {
    let io = |source| SpecError::Io { path: dir.display().to_string(), source };
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == SPEC_EXTENSION))
        .collect();
    files.sort();
    let mut doc = SpecDocument::default();
    let vpath = dir.join(VERSION_FILE);
    if vpath.exists() {
        doc.version_id = fs::read_to_string(&vpath)
            .map_err(|source| SpecError::Io { path: vpath.display().to_string(), source })?
            .trim()
            .to_string();
    }
    for f in files {
        let text = fs::read_to_string(&f).map_err(|source| SpecError::Io { path: f.display().to_string(), source })?;
        let part = parse_document_unchecked(&text)
            .map_err(|e| SpecError::InFile { file: f.display().to_string(), inner: Box::new(e) })?;
        doc.modules.extend(part.modules);
    }
    Ok(doc)
}

pub fn load_dir(dir: &Path) -> Result<SpecDocument, SpecError> {
    let doc = load_dir_unchecked(dir)?;
    reject_structural(&doc)?;
    Ok(doc)
}

/// Writes one `<module>.gspec` per module. Existing spec files in `dir`
/// that do not belong to the document are removed.
pub fn save_dir(doc: &SpecDocument, dir: &Path) -> Result<(), SpecError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| SpecError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    for entry in fs::read_dir(dir).map_err(io(dir))?.filter_map(Result::ok) {
        let p = entry.path();
        if p.extension().is_some_and(|e| e == SPEC_EXTENSION) {
            fs::remove_file(&p).map_err(io(&p))?;
        }
    }
    for m in &doc.modules {
        let p = dir.join(format!("{}.{SPEC_EXTENSION}", m.name));
        fs::write(&p, render_module(m)).map_err(io(&p))?;
    }
    let vpath = dir.join(VERSION_FILE);
    if doc.version_id.is_empty() {
        if vpath.exists() {
            fs::remove_file(&vpath).map_err(io(&vpath))?;
        }
    } else {
        fs::write(&vpath, format!("{}\n", doc.version_id)).map_err(io(&vpath))?;
    }
    Ok(())
}
