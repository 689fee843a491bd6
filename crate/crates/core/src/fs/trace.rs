//! Line-oriented operation traces and their runner.
//!
//! ```text
//! ins /a/b name=f kind=file
//! write /a/b/f off=0 hex=616263
//! read /a/b/f off=0 len=3
//! expect hex=616263
//! rename /a/b f /a g
//! remove /a name=g
//! expect ret=0
//! lock /a
//! unlock /a
//! ```
//!
//! `lock`/`unlock` drive the monitor directly and exist to test it.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::monitor::{MonitorReport, Subject};
use super::state::{split_path, FsState, InodeKind};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum FsOp {
    Ins {
        path: String,
        name: String,
        kind: InodeKind,
    },
    Remove {
        path: String,
        name: String,
    },
    Rename {
        src: String,
        src_name: String,
        dst: String,
        dst_name: String,
    },
    Write {
        path: String,
        off: u64,
        data: Vec<u8>,
    },
    Read {
        path: String,
        off: u64,
        len: u64,
    },
    Sync,
    /// Raw monitor-level acquire of the inode at `path`, for exercising the
    /// lock monitor; the inode mutex itself is not taken.
    Lock {
        path: String,
    },
    Unlock {
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpResult {
    Ret(i32),
    Data(Vec<u8>),
}

impl fmt::Display for OpResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpResult::Ret(r) => write!(f, "ret={r}"),
            OpResult::Data(d) => write!(f, "ret=0 hex={}", hex::encode(d)),
        }
    }
}

fn parts(p: &str) -> Vec<String> {
    split_path(p)
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

impl FsOp {
    pub fn apply(&self, fs: &FsState) -> OpResult {
        match self {
            FsOp::Ins { path, name, kind } => OpResult::Ret(fs.ins(&refs(&parts(path)), name, *kind)),
            FsOp::Remove { path, name } => OpResult::Ret(fs.remove(&refs(&parts(path)), name)),
            FsOp::Rename { src, src_name, dst, dst_name } => {
                OpResult::Ret(fs.rename(&refs(&parts(src)), src_name, &refs(&parts(dst)), dst_name))
            }
            FsOp::Write { path, off, data } => OpResult::Ret(fs.write(&refs(&parts(path)), *off, data)),
            FsOp::Read { path, off, len } => match fs.read(&refs(&parts(path)), *off, *len) {
                Some(d) => OpResult::Data(d),
                None => OpResult::Ret(-1),
            },
            FsOp::Sync => {
                fs.sync();
                OpResult::Ret(0)
            }
            FsOp::Lock { path } | FsOp::Unlock { path } => match fs.resolve(&refs(&parts(path))) {
                Some(id) => {
                    if matches!(self, FsOp::Lock { .. }) {
                        fs.monitor().acquire(Subject::Inode(id));
                    } else {
                        fs.monitor().release(Subject::Inode(id));
                    }
                    OpResult::Ret(0)
                }
                None => OpResult::Ret(-1),
            },
        }
    }
}

impl fmt::Display for FsOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FsOp::Ins { path, name, kind } => {
                let k = if *kind == InodeKind::Dir { "dir" } else { "file" };
                write!(f, "ins {path} name={name} kind={k}")
            }
            FsOp::Remove { path, name } => write!(f, "remove {path} name={name}"),
            FsOp::Rename { src, src_name, dst, dst_name } => write!(f, "rename {src} {src_name} {dst} {dst_name}"),
            FsOp::Write { path, off, data } => write!(f, "write {path} off={off} hex={}", hex::encode(data)),
            FsOp::Read { path, off, len } => write!(f, "read {path} off={off} len={len}"),
            FsOp::Sync => f.write_str("sync"),
            FsOp::Lock { path } => write!(f, "lock {path}"),
            FsOp::Unlock { path } => write!(f, "unlock {path}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceLine {
    Op(FsOp),
    /// Expected result of the preceding operation.
    Expect(OpResult),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct TraceError {
    pub line: usize,
    pub message: String,
}

fn kv<'a>(line: usize, args: &[&'a str]) -> Result<BTreeMap<&'a str, &'a str>, TraceError> {
    args.iter()
        .map(|a| {
            a.split_once('=').ok_or_else(|| TraceError { line, message: format!("expected key=value, found `{a}`") })
        })
        .collect()
}

fn need<'a>(line: usize, m: &BTreeMap<&str, &'a str>, key: &str) -> Result<&'a str, TraceError> {
    m.get(key).copied().ok_or_else(|| TraceError { line, message: format!("missing `{key}=`") })
}

fn num<T: std::str::FromStr>(line: usize, m: &BTreeMap<&str, &str>, key: &str) -> Result<T, TraceError> {
    need(line, m, key)?.parse().map_err(|_| TraceError { line, message: format!("`{key}` is not a number") })
}

fn bytes(line: usize, s: &str) -> Result<Vec<u8>, TraceError> {
    hex::decode(s).map_err(|e| TraceError { line, message: format!("bad hex: {e}") })
}

pub fn parse_trace(text: &str) -> Result<Vec<(usize, TraceLine)>, TraceError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let words: Vec<&str> = l.split_whitespace().collect();
        let err = |m: &str| TraceError { line: n, message: m.to_string() };
        let item = match words[0] {
            "ins" if words.len() >= 2 => {
                let m = kv(n, &words[2..])?;
                let kind = match m.get("kind").copied().unwrap_or("file") {
                    "file" => InodeKind::File,
                    "dir" => InodeKind::Dir,
                    k => return Err(err(&format!("unknown kind `{k}`"))),
                };
                TraceLine::Op(FsOp::Ins { path: words[1].into(), name: need(n, &m, "name")?.into(), kind })
            }
            "remove" if words.len() >= 2 => {
                let m = kv(n, &words[2..])?;
                TraceLine::Op(FsOp::Remove { path: words[1].into(), name: need(n, &m, "name")?.into() })
            }
            "rename" if words.len() == 5 => TraceLine::Op(FsOp::Rename {
                src: words[1].into(),
                src_name: words[2].into(),
                dst: words[3].into(),
                dst_name: words[4].into(),
            }),
            "write" if words.len() >= 2 => {
                let m = kv(n, &words[2..])?;
                TraceLine::Op(FsOp::Write {
                    path: words[1].into(),
                    off: num(n, &m, "off")?,
                    data: bytes(n, need(n, &m, "hex")?)?,
                })
            }
            "read" if words.len() >= 2 => {
                let m = kv(n, &words[2..])?;
                TraceLine::Op(FsOp::Read { path: words[1].into(), off: num(n, &m, "off")?, len: num(n, &m, "len")? })
            }
            "sync" => TraceLine::Op(FsOp::Sync),
            "lock" if words.len() == 2 => TraceLine::Op(FsOp::Lock { path: words[1].into() }),
            "unlock" if words.len() == 2 => TraceLine::Op(FsOp::Unlock { path: words[1].into() }),
            "expect" => {
                let m = kv(n, &words[1..])?;
                match m.get("hex") {
                    Some(h) => TraceLine::Expect(OpResult::Data(bytes(n, h)?)),
                    None => TraceLine::Expect(OpResult::Ret(num(n, &m, "ret")?)),
                }
            }
            w => return Err(err(&format!("unknown or malformed command `{w}`"))),
        };
        out.push((n, item));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineResult {
    pub line: usize,
    pub text: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceReport {
    pub lines: Vec<LineResult>,
    pub failed_expectations: usize,
    pub monitor: MonitorReport,
}

impl TraceReport {
    pub fn passed(&self) -> bool {
        self.failed_expectations == 0 && self.monitor.is_clean()
    }
}

/// Runs a parsed trace; `expect` lines compare against the previous result.
pub fn run_trace(fs: &FsState, trace: &[(usize, TraceLine)]) -> TraceReport {
    let mut lines = Vec::new();
    let mut last: Option<OpResult> = None;
    let mut failed = 0;
    for (n, item) in trace {
        match item {
            TraceLine::Op(op) => {
                let r = op.apply(fs);
                lines.push(LineResult { line: *n, text: format!("{op} -> {r}"), ok: true });
                last = Some(r);
            }
            TraceLine::Expect(want) => {
                let ok = match (&last, want) {
                    (Some(got), OpResult::Ret(w)) => match got {
                        OpResult::Ret(g) => g == w,
                        OpResult::Data(_) => *w == 0,
                    },
                    (Some(got), want) => got == want,
                    (None, _) => false,
                };
                if !ok {
                    failed += 1;
                }
                let got = last.as_ref().map_or("nothing".to_string(), ToString::to_string);
                let text = if ok { format!("expect {want}: ok") } else { format!("expect {want}: FAILED (got {got})") };
                lines.push(LineResult { line: *n, text, ok });
            }
        }
    }
    TraceReport { lines, failed_expectations: failed, monitor: fs.monitor().report() }
}
