//! The `genfs` command line. [`run`] parses arguments and returns the exit
//! code: 0 success, 1 domain failure, 2 environment failure. Data goes to
//! the `out` writer, logs and errors to `err`.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

pub use config::{CliConfig, DEFAULT_CACHE_DIR, DEFAULT_SEED};

use crate::agents::{
    assist, compile_module, resolve_rely, validate_system, AgentError, AssistOptions, CacheStore, Clients,
    GeneratedModule, GenerationTask, HttpClient, MockClient, ModelClient, Role,
};
use crate::blockdev::{run_workload, MetricsReport, WorkloadConfig, WorkloadKind};
use crate::depgraph::{build_graph, check_entailment, topo_order};
use crate::features::FeatureConfig;
use crate::fs::{parse_trace, run_trace, FsState};
use crate::patch::{apply, parse_patch, plan, PatchError};
use crate::spec::{check_wellformed, load_dir, load_dir_unchecked, save_dir, SpecDocument, SpecError};

#[derive(Debug, Parser)]
#[command(name = "genfs", version, about = "Specification-driven file-system workbench")]
struct Cli {
    /// JSON settings file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Suppress informational logs.
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Seed for everything random (default 42).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Check or graph a spec directory.
    #[command(subcommand)]
    Spec(SpecCmd),
    /// Plan or apply a spec patch.
    #[command(subcommand)]
    Patch(PatchCmd),
    /// Generate code from a spec through a model client.
    #[command(subcommand)]
    Gen(GenCmd),
    /// Run operation traces against the reference file system.
    #[command(subcommand)]
    Fs(FsCmd),
    /// Run a block I/O workload and write its metrics report.
    Bench(BenchArgs),
}

#[derive(Debug, Subcommand)]
enum SpecCmd {
    /// Print well-formedness and rely diagnostics; exit 1 if any.
    Validate {
        dir: Option<PathBuf>,
    },
    /// Print dependency edges, build order and the entailment report.
    Graph {
        dir: Option<PathBuf>,
        /// Emit nodes, edges, order and entailment as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
enum PatchCmd {
    /// Print the leaves-first node order.
    Plan {
        patch: Option<PathBuf>,
        spec_dir: Option<PathBuf>,
    },
    /// Apply atomically and write the result plus manifest.json to `--out`.
    Apply {
        patch: Option<PathBuf>,
        spec_dir: Option<PathBuf>,
        /// Output directory; written only when the apply succeeds.
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct GenArgs {
    spec_dir: Option<PathBuf>,
    /// `mock:<script.json>` or `http:<profile>`.
    #[arg(long)]
    model: String,
    /// Generation cache; also receives generated code and transcripts.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Attempts per phase before giving up (default 3).
    #[arg(long)]
    attempt_limit: Option<u32>,
    /// Only these modules (repeatable).
    #[arg(long = "module")]
    modules: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum GenCmd {
    /// Two-phase generation of every module, leaves first.
    Compile(GenArgs),
    /// Generate, review every module and run the test command.
    Validate {
        #[command(flatten)]
        gen: GenArgs,
        /// Test command, run through `sh -c`.
        #[arg(long)]
        tests: Option<String>,
    },
    /// Refine a draft spec until its code passes review.
    Assist {
        draft: PathBuf,
        /// `mock:<script.json>` or `http:<profile>`.
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 3)]
        max_rounds: u32,
        #[arg(long)]
        attempt_limit: Option<u32>,
        /// Where to write the refined (or annotated) spec.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum FsCmd {
    /// Run a trace script under the lock monitor; exit 1 on failed
    /// expectations or violations.
    Exec {
        trace: PathBuf,
        /// Feature switches as a JSON file.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Print the report as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// small_file, large_file, random_then_range, pool_stress or append_batch.
    kind: String,
    /// Feature switches as a JSON file.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Workload parameters as JSON, replacing the defaults for `kind`.
    #[arg(long)]
    workload: Option<PathBuf>,
    /// Earlier report to compute ratios against.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Why a command failed; selects the exit code.
enum Fail {
    Domain(String),
    Env(String),
}

type CmdResult = Result<(), Fail>;

fn env<E: std::fmt::Display>(e: E) -> Fail {
    Fail::Env(e.to_string())
}

fn domain<E: std::fmt::Display>(e: E) -> Fail {
    Fail::Domain(e.to_string())
}

fn spec_fail(e: SpecError) -> Fail {
    match e {
        SpecError::Io { .. } => env(e),
        SpecError::InFile { ref inner, .. } if matches!(**inner, SpecError::Io { .. }) => env(e),
        other => domain(other),
    }
}

fn agent_fail(e: AgentError) -> Fail {
    if e.is_environmental() {
        env(e)
    } else {
        domain(e)
    }
}

struct Ctx<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    quiet: bool,
    seed: u64,
    cfg: CliConfig,
}

impl Ctx<'_> {
    fn log(&mut self, msg: impl std::fmt::Display) {
        if !self.quiet {
            let _ = writeln!(self.err, "{msg}");
        }
    }

    fn print(&mut self, msg: impl std::fmt::Display) {
        let _ = writeln!(self.out, "{msg}");
    }

    fn spec_dir(&self, flag: Option<PathBuf>) -> Result<PathBuf, Fail> {
        flag.or_else(|| self.cfg.spec_dir.clone()).ok_or_else(|| Fail::Env("no spec directory given".into()))
    }

    fn features(&self, flag: Option<PathBuf>) -> Result<FeatureConfig, Fail> {
        match flag.or_else(|| self.cfg.features.clone()) {
            None => Ok(FeatureConfig::default()),
            Some(p) => {
                let text = read(&p)?;
                FeatureConfig::from_json(&text).map_err(|e| Fail::Domain(format!("{}: {e}", p.display())))
            }
        }
    }
}

fn read(p: &Path) -> Result<String, Fail> {
    std::fs::read_to_string(p).map_err(|e| Fail::Env(format!("{}: {e}", p.display())))
}

fn write_file(p: &Path, text: &str) -> CmdResult {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Fail::Env(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(p, text).map_err(|e| Fail::Env(format!("{}: {e}", p.display())))
}

/// Runs the command line with process stdout and stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let (mut out, mut err) = (std::io::stdout().lock(), std::io::stderr().lock());
    run(args, &mut out, &mut err)
}

pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let cfg = match &cli.config {
        Some(p) => match CliConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                let _ = writeln!(err, "error: config {e}");
                return 2;
            }
        },
        None => CliConfig::default(),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let mut ctx = Ctx { out, err, quiet: cli.quiet, seed, cfg };
    let result = match cli.cmd {
        Cmd::Spec(c) => cmd_spec(&mut ctx, c),
        Cmd::Patch(c) => cmd_patch(&mut ctx, c),
        Cmd::Gen(c) => cmd_gen(&mut ctx, c),
        Cmd::Fs(c) => cmd_fs(&mut ctx, c),
        Cmd::Bench(a) => cmd_bench(&mut ctx, a),
    };
    match result {
        Ok(()) => 0,
        Err(Fail::Domain(m)) => {
            let _ = writeln!(ctx.err, "error: {m}");
            1
        }
        Err(Fail::Env(m)) => {
            let _ = writeln!(ctx.err, "error: {m}");
            2
        }
    }
}

/// Well-formedness diagnostics plus rely items nobody provides.
fn spec_problems(doc: &SpecDocument) -> Vec<String> {
    let mut out: Vec<String> = check_wellformed(doc).iter().map(ToString::to_string).collect();
    let report = check_entailment(doc);
    for u in &report.unsatisfied {
        out.push(format!("{}: UNRESOLVED_SYMBOL: rely item `{}` has no provider", u.module, u.item));
    }
    for a in &report.ambiguous {
        out.push(format!("{}: AMBIGUOUS_PROVIDER: `{}` from {}", a.module, a.item, a.providers.join(", ")));
    }
    out
}

fn cmd_spec(ctx: &mut Ctx<'_>, cmd: SpecCmd) -> CmdResult {
    match cmd {
        SpecCmd::Validate { dir } => {
            let dir = ctx.spec_dir(dir)?;
            let doc = load_dir_unchecked(&dir).map_err(spec_fail)?;
            let problems = match load_dir(&dir) {
                Ok(_) => spec_problems(&doc),
                Err(e) => {
                    let mut p = vec![format!("{e}")];
                    p.extend(spec_problems(&doc));
                    p
                }
            };
            for p in &problems {
                ctx.print(p);
            }
            if problems.is_empty() {
                ctx.log(format!("ok: {} modules", doc.modules.len()));
                Ok(())
            } else {
                Err(Fail::Domain(format!("{} problem(s)", problems.len())))
            }
        }
        SpecCmd::Graph { dir, json } => {
            let doc = load_dir_unchecked(&ctx.spec_dir(dir)?).map_err(spec_fail)?;
            let graph = build_graph(&doc).map_err(domain)?;
            let order = topo_order(&graph).map_err(domain)?;
            let report = check_entailment(&doc);
            if json {
                let v = serde_json::json!({ "nodes": graph.nodes, "edges": graph.edges, "order": order, "entailment": report });
                ctx.print(serde_json::to_string_pretty(&v).expect("graph serializes"));
            } else {
                let lines = graph.to_lines();
                let _ = write!(ctx.out, "{lines}");
                let _ = write!(ctx.out, "{report}");
            }
            if report.is_clean() {
                Ok(())
            } else {
                Err(Fail::Domain("entailment is not clean".into()))
            }
        }
    }
}

fn load_patch(ctx: &Ctx<'_>, flag: Option<PathBuf>) -> Result<crate::patch::SpecPatch, Fail> {
    let p = flag.or_else(|| ctx.cfg.patch.clone()).ok_or_else(|| Fail::Env("no patch file given".into()))?;
    parse_patch(&read(&p)?).map_err(|e| Fail::Domain(format!("{}: {e}", p.display())))
}

fn patch_fail(e: PatchError) -> Fail {
    match e {
        PatchError::Spec(s) => spec_fail(s),
        other => domain(other),
    }
}

fn cmd_patch(ctx: &mut Ctx<'_>, cmd: PatchCmd) -> CmdResult {
    match cmd {
        PatchCmd::Plan { patch, spec_dir } => {
            let p = load_patch(ctx, patch)?;
            let base = load_dir(&ctx.spec_dir(spec_dir)?).map_err(spec_fail)?;
            let order = plan(&p, &base).map_err(patch_fail)?;
            ctx.print(order.join(", "));
            Ok(())
        }
        PatchCmd::Apply { patch, spec_dir, out } => {
            let p = load_patch(ctx, patch)?;
            let base = load_dir(&ctx.spec_dir(spec_dir)?).map_err(spec_fail)?;
            let outcome = apply(&p, &base).map_err(patch_fail)?;
            save_dir(&outcome.document, &out).map_err(spec_fail)?;
            let manifest = serde_json::to_string_pretty(&outcome.manifest(&p)).expect("manifest serializes");
            write_file(&out.join("manifest.json"), &manifest)?;
            ctx.print(outcome.order.join(", "));
            ctx.log(format!("applied `{}` to {}", p.patch_id, out.display()));
            Ok(())
        }
    }
}

/// Counts calls, so a warm cache can be shown to make none.
struct Counting {
    inner: Arc<dyn ModelClient>,
    calls: AtomicUsize,
}

impl ModelClient for Counting {
    fn complete(&self, prompt: &str, role: Role) -> Result<String, AgentError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.complete(prompt, role)
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
}

fn make_client(ctx: &Ctx<'_>, spec: &str) -> Result<Counting, Fail> {
    let inner: Arc<dyn ModelClient> = match spec.split_once(':') {
        Some(("mock", path)) => Arc::new(MockClient::from_file(Path::new(path)).map_err(agent_fail)?),
        Some(("http", name)) => {
            let profile =
                ctx.cfg.profiles.get(name).ok_or_else(|| Fail::Env(format!("no model profile `{name}` in config")))?;
            Arc::new(HttpClient::from_profile(name, profile).map_err(agent_fail)?)
        }
        _ => return Err(Fail::Env(format!("model `{spec}` is neither mock:<script> nor http:<profile>"))),
    };
    Ok(Counting { inner, calls: AtomicUsize::new(0) })
}

fn compile_all(
    ctx: &mut Ctx<'_>,
    args: &GenArgs,
    client: &Counting,
) -> Result<(SpecDocument, Vec<GeneratedModule>), Fail> {
    let doc = load_dir(&ctx.spec_dir(args.spec_dir.clone())?).map_err(spec_fail)?;
    let order = topo_order(&build_graph(&doc).map_err(domain)?).map_err(domain)?;
    for m in &args.modules {
        if doc.module(m).is_none() {
            return Err(Fail::Domain(format!("no module `{m}`")));
        }
    }
    let cache_dir = args
        .cache_dir
        .clone()
        .or_else(|| ctx.cfg.cache_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR));
    let cache = CacheStore::on_disk(&cache_dir).map_err(agent_fail)?;
    let limit = args.attempt_limit.unwrap_or(ctx.cfg.agent_config().attempt_limit);
    let gen_dir = cache_dir.join("generated");
    let mut done = Vec::new();
    for name in order.iter().filter(|n| args.modules.is_empty() || args.modules.contains(n)) {
        let m = doc.module(name).expect("graph node").clone();
        let mut task = match resolve_rely(&doc, &m) {
            Ok(ctx_text) => GenerationTask::new(m, ctx_text),
            Err(AgentError::MissingRely(item)) => {
                ctx.log(format!("module {name}: `{item}` has no provider; using the rely declarations"));
                GenerationTask::standalone(m)
            }
            Err(e) => return Err(agent_fail(e)),
        };
        task.attempt_limit = limit;
        match compile_module(&task, client, client, &cache) {
            Ok(g) => {
                if g.cache_hits == (true, true) {
                    ctx.print(format!("module {name}: cache: hit"));
                } else {
                    ctx.print(format!("module {name}: attempts {}+{}", g.attempts_used.0, g.attempts_used.1));
                }
                write_file(&gen_dir.join(format!("{name}.phase1.c")), &g.phase1_code)?;
                write_file(&gen_dir.join(format!("{name}.c")), &g.final_code)?;
                let t = serde_json::to_string_pretty(&g.transcript).expect("transcript serializes");
                write_file(&gen_dir.join(format!("{name}.transcript.json")), &t)?;
                done.push(g);
            }
            Err(AgentError::AttemptLimitExceeded { phase, transcript, .. }) => {
                let t = serde_json::to_string_pretty(&transcript).expect("transcript serializes");
                write_file(&gen_dir.join(format!("{name}.failed.json")), &t)?;
                ctx.print(format!("module {name}: attempt limit reached in {phase} phase"));
                if let Some(last) = transcript.last() {
                    for f in &last.verdict.feedback {
                        ctx.print(format!("  - {f}"));
                    }
                }
                return Err(Fail::Domain(format!("module {name} did not pass review")));
            }
            Err(e) => return Err(agent_fail(e)),
        }
    }
    Ok((doc, done))
}

fn cmd_gen(ctx: &mut Ctx<'_>, cmd: GenCmd) -> CmdResult {
    match cmd {
        GenCmd::Compile(args) => {
            let client = make_client(ctx, &args.model)?;
            let r = compile_all(ctx, &args, &client);
            ctx.log(format!("client calls: {}", client.calls.load(Ordering::Relaxed)));
            r.map(|_| ())
        }
        GenCmd::Validate { gen, tests } => {
            let client = make_client(ctx, &gen.model)?;
            let (doc, modules) = compile_all(ctx, &gen, &client)?;
            let cmd = tests.map(|t| vec!["sh".to_string(), "-c".to_string(), t]);
            let report = validate_system(&modules, &doc, cmd.as_deref(), &client).map_err(agent_fail)?;
            let text = report.render();
            let _ = write!(ctx.out, "{text}");
            ctx.log(format!("client calls: {}", client.calls.load(Ordering::Relaxed)));
            if report.pass {
                Ok(())
            } else {
                Err(Fail::Domain("validation failed".into()))
            }
        }
        GenCmd::Assist { draft, model, max_rounds, attempt_limit, out } => {
            let client = make_client(ctx, &model)?;
            let text = read(&draft)?;
            let opts = AssistOptions {
                max_rounds,
                attempt_limit: attempt_limit.unwrap_or(ctx.cfg.agent_config().attempt_limit),
            };
            let clients = Clients { codegen: &client, speceval: &client, specfine: &client };
            let (spec, result) = match assist(&text, clients, opts, &CacheStore::in_memory()) {
                Ok(o) => {
                    ctx.log(format!("converged after {} round(s)", o.rounds));
                    (o.refined_spec, Ok(()))
                }
                Err(AgentError::AttemptLimitExceeded { annotated_spec: Some(a), .. }) => {
                    (a, Err(Fail::Domain("refinement did not converge; spec annotated with the debug log".into())))
                }
                Err(e) => return Err(agent_fail(e)),
            };
            match out {
                Some(p) => write_file(&p, &spec)?,
                None => {
                    let _ = write!(ctx.out, "{spec}");
                }
            }
            result
        }
    }
}

fn cmd_fs(ctx: &mut Ctx<'_>, cmd: FsCmd) -> CmdResult {
    let FsCmd::Exec { trace, features, json } = cmd;
    let text = read(&trace)?;
    let parsed = parse_trace(&text).map_err(|e| Fail::Domain(format!("{}: {e}", trace.display())))?;
    let fs = FsState::new(ctx.features(features)?);
    let report = run_trace(&fs, &parsed);
    if json {
        ctx.print(serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        for l in &report.lines {
            ctx.print(format!("{}: {}", l.line, l.text));
        }
        let m = &report.monitor;
        ctx.print(format!(
            "monitor: {} events, {} violations, peak coupling {}, {} thread(s) holding locks",
            m.events,
            m.violations.len(),
            m.peak_coupling,
            m.held.len()
        ));
        for v in &m.violations {
            ctx.print(format!("violation: thread {} event {}: {}", v.thread, v.seq, v.message));
        }
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Fail::Domain(format!(
            "{} failed expectation(s), {} monitor violation(s)",
            report.failed_expectations,
            report.monitor.violations.len()
        )))
    }
}

fn cmd_bench(ctx: &mut Ctx<'_>, args: BenchArgs) -> CmdResult {
    let kind =
        WorkloadKind::parse(&args.kind).ok_or_else(|| Fail::Domain(format!("unknown workload `{}`", args.kind)))?;
    let workload = match &args.workload {
        Some(p) => serde_json::from_str::<WorkloadConfig>(&read(p)?)
            .map_err(|e| Fail::Domain(format!("{}: {e}", p.display())))?,
        None => ctx.cfg.bench.get(&args.kind).cloned().unwrap_or_else(|| WorkloadConfig::default_for(kind)),
    };
    if workload.kind != kind {
        return Err(Fail::Domain(format!("workload file is for `{:?}`, not `{}`", workload.kind, args.kind)));
    }
    workload.validate().map_err(Fail::Domain)?;
    let features = ctx.features(args.features)?;
    let mut report = run_workload(&workload, &features, ctx.seed).map_err(Fail::Domain)?;
    if let Some(b) = &args.baseline {
        let base = MetricsReport::from_json(&read(b)?).map_err(|e| Fail::Domain(format!("{}: {e}", b.display())))?;
        report = report.with_baseline(&base).map_err(domain)?;
    }
    let json = report.to_json();
    match &args.out {
        Some(p) => {
            write_file(p, &json)?;
            ctx.log(format!("wrote {}", p.display()));
        }
        None => ctx.print(&json),
    }
    if report.disk_full {
        return Err(Fail::Domain("disk filled before the workload finished".into()));
    }
    Ok(())
}
