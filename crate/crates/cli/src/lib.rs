//! The `spage` command line: validation, graph inspection, SQL compilation,
//! execution, LLM planning and summarization, evaluation and cycle
//! benchmarks.
//!
//! Exit codes: 0 on success, 1 on operational failures (with a one-line JSON
//! diagnostic on stderr), 2 on usage errors.

mod settings;
mod taskfile;

use std::collections::HashMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use spage_core::engine::{execute_plan_with, ExecOptions, ExecutionReport};
use spage_core::graph::{build_graph, cycle_stats, execution_cycles, CycleMode, PlanGraph};
use spage_core::metrics::{evaluate_batch, TaskOutput};
use spage_core::plan::{parse_plan, serialize_plan, Plan};
use spage_core::sql::{emit_plan_sql, emit_plan_steps, execute_plan_sql, Dialect, Emitted};
use spage_core::table::{load_catalog, write_csv, Catalog};
use spage_core::validate::validate_plan;
use spage_llm::http::HttpBackend;
use spage_llm::{
    builtin_demos, builtin_sql_demos, request_plan, run_task, Backend, Executor, LlmConfig,
    MockBackend, MockPlanner, MockSqlExecutor, PipelineOptions,
};

pub use settings::{BackendKind, DialectArg, ExecutorKind, Mode, Settings};
pub use taskfile::{load_outputs, load_taskfile, OutputRecord, TaskEntry, TaskFileError};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "spage",
    version,
    about = "Plan, execute and summarize queries over tables"
)]
struct Cli {
    /// Worker threads for wavefront execution and per-task batches.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    /// Time budget per plan step, in milliseconds.
    #[arg(long, global = true)]
    step_timeout_ms: Option<u64>,
    /// TOML or JSON file supplying defaults for any flag, plus an `llm` section.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Tsv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a plan against its tables; exits 1 when it has errors.
    Validate {
        plan: PathBuf,
        /// A table file or a directory of .csv/.json tables.
        #[arg(long)]
        tables: PathBuf,
    },
    /// Print a plan's wavefronts and execution cycles.
    Graph {
        plan: PathBuf,
        /// Emit Graphviz DOT instead of JSON.
        #[arg(long)]
        dot: bool,
    },
    /// Emit SQL for a plan, one statement per step or a single CTE query.
    Compile {
        plan: PathBuf,
        #[arg(long, conflicts_with = "cte")]
        per_step: bool,
        #[arg(long)]
        cte: bool,
        #[arg(long, value_enum)]
        dialect: Option<DialectArg>,
        /// Type-check against these tables before emitting.
        #[arg(long)]
        tables: Option<PathBuf>,
    },
    /// Execute a plan and print its report and terminal table.
    Run {
        plan: PathBuf,
        #[arg(long)]
        tables: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long, value_enum, default_value = "json")]
        out: OutFormat,
        /// `native` or `sql`.
        #[arg(long, value_enum)]
        executor: Option<ExecutorKind>,
        #[arg(long, value_enum)]
        dialect: Option<DialectArg>,
        /// With `--out csv`, also write the report JSON to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Ask the planner for a plan per task.
    Plan {
        taskfile: PathBuf,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        /// Write `<id>.json` per task instead of JSON lines on stdout.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Plan, execute and summarize every task.
    Summarize {
        taskfile: PathBuf,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        #[arg(long, value_enum)]
        executor: Option<ExecutorKind>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long, value_enum)]
        dialect: Option<DialectArg>,
        /// Write the JSON-lines output here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score `summarize` outputs against the task references.
    Eval {
        taskfile: PathBuf,
        #[arg(long)]
        outputs: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
    },
    /// Average sequential and graph cycles over a task file's gold plans or
    /// a directory of plan files.
    BenchCycles {
        input: PathBuf,
        /// Also list every plan's cycles.
        #[arg(long)]
        per_plan: bool,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{message}")]
    Failed { kind: &'static str, message: String },
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        failed("io", e)
    }
}

fn failed(kind: &'static str, e: impl Display) -> CliError {
    CliError::Failed {
        kind,
        message: e.to_string(),
    }
}

fn diagnostic(err: &mut dyn Write, kind: &str, message: impl Display) {
    let _ = writeln!(
        err,
        "{}",
        json!({"error": kind, "message": message.to_string()})
    );
}

/// Runs one command line, writing results to `out` and diagnostics to `err`.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return e.exit_code();
        }
    };
    match dispatch(cli, out, err) {
        Ok(code) => code,
        Err(CliError::Usage(m)) => {
            diagnostic(err, "usage", m);
            EXIT_USAGE
        }
        Err(CliError::Failed { kind, message }) => {
            diagnostic(err, kind, message);
            EXIT_FAILURE
        }
    }
}

struct Ctx {
    settings: Settings,
    jobs: Option<usize>,
    step_timeout_ms: Option<u64>,
}

impl Ctx {
    fn exec(&self, mode: Option<Mode>) -> ExecOptions {
        let mut options =
            ExecOptions::with(mode.or(self.settings.mode).unwrap_or(Mode::Graph).into());
        if let Some(ms) = self.step_timeout_ms {
            options.step_timeout = Some(Duration::from_millis(ms));
        }
        options.jobs = self.jobs;
        options
    }

    fn dialect(&self, flag: Option<DialectArg>) -> Dialect {
        flag.or(self.settings.dialect)
            .map_or(Dialect::default(), Dialect::from)
    }

    fn llm_config(&self, backend: BackendKind) -> LlmConfig {
        match backend {
            BackendKind::Live => self.settings.llm.clone().with_env_model(),
            BackendKind::Mock => self.settings.llm.clone(),
        }
    }

    fn backend_kind(&self, flag: Option<BackendKind>) -> BackendKind {
        flag.or(self.settings.backend).unwrap_or(BackendKind::Mock)
    }

    /// The mock planner answers each task's query with its gold plan.
    fn backend(
        &self,
        kind: BackendKind,
        entries: &[TaskEntry],
    ) -> Result<Box<dyn Backend>, CliError> {
        match kind {
            BackendKind::Mock => {
                let planner = entries
                    .iter()
                    .filter_map(|e| e.gold_plan.clone().map(|p| (e.task.query.clone(), p)))
                    .fold(MockPlanner::new(), |m, (q, p)| m.with_plan(q, p));
                Ok(Box::new(MockBackend::new(
                    planner,
                    MockSqlExecutor::faithful(),
                )))
            }
            BackendKind::Live => {
                let slots = self.settings.llm.max_concurrent_requests;
                Ok(Box::new(
                    HttpBackend::from_env(slots).map_err(|e| failed("backend", e))?,
                ))
            }
        }
    }

    /// Maps `f` over `items` in parallel, bounded by `--jobs` when given.
    fn batch<T: Sync, R: Send>(
        &self,
        items: &[T],
        f: impl Fn(&T) -> R + Sync + Send,
    ) -> Result<Vec<R>, CliError> {
        match self.jobs {
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| failed("threads", e))?;
                Ok(pool.install(|| items.par_iter().map(&f).collect()))
            }
            None => Ok(items.par_iter().map(&f).collect()),
        }
    }
}

fn read_plan(path: &Path) -> Result<Plan, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| failed("io", format!("{}: {e}", path.display())))?;
    parse_plan(&text).map_err(|e| failed("plan", format!("{}: {e}", path.display())))
}

fn read_catalog(path: &Path) -> Result<Catalog, CliError> {
    load_catalog(path).map_err(|e| failed("tables", e))
}

fn read_tasks(path: &Path) -> Result<Vec<TaskEntry>, CliError> {
    load_taskfile(path).map_err(|e| failed("taskfile", e))
}

fn plan_json(plan: &Plan) -> serde_json::Value {
    serde_json::from_str(&serialize_plan(plan)).expect("serialized plans are JSON")
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let settings = match &cli.config {
        Some(path) => Settings::load(path).map_err(CliError::Usage)?,
        None => Settings::default(),
    };
    let ctx = Ctx {
        jobs: cli.jobs.map(|n| n as usize).or(settings.jobs),
        step_timeout_ms: cli.step_timeout_ms.or(settings.step_timeout_ms),
        settings,
    };
    match cli.command {
        Command::Validate { plan, tables } => {
            validate(&read_plan(&plan)?, &read_catalog(&tables)?, out, err)
        }
        Command::Graph { plan, dot } => graph(&read_plan(&plan)?, dot, out),
        Command::Compile {
            plan,
            per_step: _,
            cte,
            dialect,
            tables,
        } => {
            let catalog = tables.as_deref().map(read_catalog).transpose()?;
            compile(
                &read_plan(&plan)?,
                cte,
                ctx.dialect(dialect),
                catalog.as_ref(),
                out,
            )
        }
        Command::Run {
            plan,
            tables,
            mode,
            out: format,
            executor,
            dialect,
            report,
        } => {
            let plan = read_plan(&plan)?;
            let catalog = read_catalog(&tables)?;
            let options = ctx.exec(mode);
            let report_data =
                match executor
                    .or(ctx.settings.executor)
                    .unwrap_or(ExecutorKind::Native)
                {
                    ExecutorKind::Native => execute_plan_with(&plan, &catalog, &options),
                    ExecutorKind::Sql => {
                        execute_plan_sql(&plan, &catalog, &options, &Emitted(ctx.dialect(dialect)))
                            .map_err(|e| failed("sql", e))?
                    }
                    ExecutorKind::LlmSql => return Err(CliError::Usage(
                        "`run` supports the native and sql executors; use `summarize` for llm-sql"
                            .into(),
                    )),
                };
            run_report(&report_data, format, report.as_deref(), out, err)
        }
        Command::Plan {
            taskfile,
            backend,
            out_dir,
        } => {
            let entries = read_tasks(&taskfile)?;
            plan_tasks(
                &ctx,
                &entries,
                ctx.backend_kind(backend),
                out_dir.as_deref(),
                out,
                err,
            )
        }
        Command::Summarize {
            taskfile,
            backend,
            executor,
            mode,
            dialect,
            out: target,
        } => {
            let entries = read_tasks(&taskfile)?;
            let kind = ctx.backend_kind(backend);
            let options = PipelineOptions {
                config: ctx.llm_config(kind),
                exec: ctx.exec(mode),
                executor: match executor
                    .or(ctx.settings.executor)
                    .unwrap_or(ExecutorKind::Native)
                {
                    ExecutorKind::Native => Executor::Native,
                    ExecutorKind::Sql => Executor::EmittedSql(ctx.dialect(dialect)),
                    ExecutorKind::LlmSql => Executor::LlmSql,
                },
                demos: builtin_demos(),
                sql_demos: builtin_sql_demos(),
            };
            summarize(&ctx, &entries, kind, &options, target.as_deref(), out, err)
        }
        Command::Eval {
            taskfile,
            outputs,
            format,
        } => eval(&ctx, &read_tasks(&taskfile)?, &outputs, format, out),
        Command::BenchCycles {
            input,
            per_plan,
            format,
        } => bench_cycles(&input, per_plan, format, out),
    }
}

fn validate(
    plan: &Plan,
    catalog: &Catalog,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let report = validate_plan(plan, catalog);
    writeln!(
        out,
        "{}",
        serde_json::to_string_pretty(&report).map_err(|e| failed("json", e))?
    )?;
    if report.is_executable() {
        return Ok(0);
    }
    let codes: Vec<String> = report.error_codes().iter().map(|c| c.to_string()).collect();
    diagnostic(
        err,
        "validation",
        format!("plan has errors: {}", codes.join(", ")),
    );
    Ok(EXIT_FAILURE)
}

fn graph(plan: &Plan, dot: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let g = build_graph(plan);
    if dot {
        write!(out, "{}", g.to_dot())?;
    } else {
        let doc = json!({
            "nodes": g.nodes,
            "edges": g.edges,
            "wavefronts": g.wavefronts,
            "cycles_sequential": execution_cycles(&g, CycleMode::Sequential),
            "cycles_graph": execution_cycles(&g, CycleMode::Graph),
        });
        writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&doc).map_err(|e| failed("json", e))?
        )?;
    }
    Ok(0)
}

fn compile(
    plan: &Plan,
    cte: bool,
    dialect: Dialect,
    catalog: Option<&Catalog>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    if cte {
        writeln!(
            out,
            "{};",
            emit_plan_sql(plan, dialect, catalog).map_err(|e| failed("emit", e))?
        )?;
    } else {
        for step in emit_plan_steps(plan, dialect, catalog).map_err(|e| failed("emit", e))? {
            writeln!(out, "-- step_{}\n{};", step.step_id, step.sql)?;
        }
    }
    Ok(0)
}

fn run_report(
    report: &ExecutionReport,
    format: OutFormat,
    report_path: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let doc = serde_json::to_string_pretty(&report.to_json()).map_err(|e| failed("json", e))?;
    match format {
        OutFormat::Json => writeln!(out, "{doc}")?,
        OutFormat::Csv => {
            if let Some(path) = report_path {
                std::fs::write(path, format!("{doc}\n"))
                    .map_err(|e| failed("io", format!("{}: {e}", path.display())))?;
            }
            if let Some(t) = &report.terminal_table {
                write!(out, "{}", write_csv(t))?;
            }
        }
    }
    match &report.terminal_table {
        Some(_) => Ok(0),
        None => {
            let cause = report
                .results
                .values()
                .find(|r| !r.is_success())
                .map(|r| format!("step {} failed", r.step_id))
                .unwrap_or_default();
            diagnostic(err, "execution", format!("no terminal table: {cause}"));
            Ok(EXIT_FAILURE)
        }
    }
}

fn plan_tasks(
    ctx: &Ctx,
    entries: &[TaskEntry],
    kind: BackendKind,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let backend = ctx.backend(kind, entries)?;
    let config = ctx.llm_config(kind);
    let demos = builtin_demos();
    let plans = ctx.batch(entries, |e| {
        request_plan(&e.task, &config, &demos, backend.as_ref())
    })?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| failed("io", format!("{}: {e}", dir.display())))?;
    }
    let mut code = 0;
    for (entry, plan) in entries.iter().zip(plans) {
        let id = &entry.task.id;
        match plan {
            Ok(plan) => match out_dir {
                Some(dir) => {
                    let path = dir.join(format!("{id}.json"));
                    std::fs::write(&path, format!("{}\n", serialize_plan(&plan)))
                        .map_err(|e| failed("io", format!("{}: {e}", path.display())))?;
                }
                None => writeln!(out, "{}", json!({"id": id, "plan": plan_json(&plan)}))?,
            },
            Err(e) => {
                diagnostic(err, "planning", format!("task `{id}`: {e}"));
                code = EXIT_FAILURE;
            }
        }
    }
    Ok(code)
}

fn summarize(
    ctx: &Ctx,
    entries: &[TaskEntry],
    kind: BackendKind,
    options: &PipelineOptions,
    target: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let backend = ctx.backend(kind, entries)?;
    let results = ctx.batch(entries, |e| run_task(&e.task, backend.as_ref(), options))?;
    let mut code = 0;
    let mut lines = String::new();
    for (entry, result) in entries.iter().zip(results) {
        let id = entry.task.id.clone();
        let record = match result {
            Ok(o) => OutputRecord {
                id,
                summary: Some(o.summary),
                plan: Some(plan_json(&o.plan)),
                esr: Some(o.report.esr),
                cycles_used: Some(o.report.cycles_used),
                error: None,
            },
            Err(e) => {
                diagnostic(err, "pipeline", format!("task `{id}`: {e}"));
                code = EXIT_FAILURE;
                OutputRecord {
                    id,
                    summary: None,
                    plan: None,
                    esr: None,
                    cycles_used: None,
                    error: Some(e.to_string()),
                }
            }
        };
        lines.push_str(&serde_json::to_string(&record).map_err(|e| failed("json", e))?);
        lines.push('\n');
    }
    match target {
        Some(path) => std::fs::write(path, lines)
            .map_err(|e| failed("io", format!("{}: {e}", path.display())))?,
        None => write!(out, "{lines}")?,
    }
    Ok(code)
}

fn eval(
    ctx: &Ctx,
    entries: &[TaskEntry],
    outputs_path: &Path,
    format: ReportFormat,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let records = load_outputs(outputs_path).map_err(|e| failed("outputs", e))?;
    let mut by_id: HashMap<&str, &OutputRecord> = HashMap::new();
    for r in &records {
        if by_id.insert(&r.id, r).is_some() {
            return Err(failed(
                "outputs",
                format!("duplicate output for task `{}`", r.id),
            ));
        }
    }
    let options = ctx.exec(None);
    let mut tasks = Vec::with_capacity(entries.len());
    let mut outputs = Vec::with_capacity(entries.len());
    for entry in entries {
        let id = entry.task.id.as_str();
        let record = by_id
            .get(id)
            .ok_or_else(|| failed("eval", format!("no output for task `{id}`")))?;
        let summary = record.summary.clone().ok_or_else(|| {
            failed(
                "eval",
                format!(
                    "task `{id}` has no summary: {}",
                    record.error.as_deref().unwrap_or("missing")
                ),
            )
        })?;
        let plan = match &record.plan {
            Some(p) => parse_plan(&p.to_string())
                .map_err(|e| failed("plan", format!("task `{id}`: {e}")))?,
            None => entry.gold_plan.clone().ok_or_else(|| {
                failed(
                    "eval",
                    format!("task `{id}` has neither an output plan nor a gold plan"),
                )
            })?,
        };
        let report = execute_plan_with(&plan, &entry.task.catalog, &options);
        outputs.push(TaskOutput {
            summary,
            report,
            graph: build_graph(&plan),
        });
        tasks.push(entry.task.clone());
    }
    let result = evaluate_batch(&tasks, &outputs).map_err(|e| failed("eval", e))?;
    match format {
        ReportFormat::Json => writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&result).map_err(|e| failed("json", e))?
        )?,
        ReportFormat::Tsv => write!(out, "{}", result.to_tsv())?,
    }
    Ok(0)
}

fn bench_cycles(
    input: &Path,
    per_plan: bool,
    format: ReportFormat,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let named: Vec<(String, Plan)> = if input.is_dir() {
        taskfile::plan_files(input)
            .map_err(|e| failed("io", e))?
            .into_iter()
            .map(|p| {
                let name = p
                    .file_stem()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned();
                read_plan(&p).map(|plan| (name, plan))
            })
            .collect::<Result<_, _>>()?
    } else {
        read_tasks(input)?
            .into_iter()
            .filter_map(|e| e.gold_plan.map(|p| (e.task.id, p)))
            .collect()
    };
    let graphs: Vec<PlanGraph> = named.iter().map(|(_, p)| build_graph(p)).collect();
    let stats =
        cycle_stats(&graphs).map_err(|e| failed("bench", format!("{}: {e}", input.display())))?;
    let rows: Vec<(&str, usize, usize)> = named
        .iter()
        .zip(&graphs)
        .map(|((name, _), g)| {
            (
                name.as_str(),
                execution_cycles(g, CycleMode::Sequential),
                execution_cycles(g, CycleMode::Graph),
            )
        })
        .collect();
    match format {
        ReportFormat::Json => {
            let mut doc = json!({
                "plans": graphs.len(),
                "avg_sequential": stats.avg_sequential,
                "avg_graph": stats.avg_graph,
                "reduction": stats.reduction,
            });
            if per_plan {
                doc["per_plan"] = rows
                    .iter()
                    .map(|(name, s, g)| {
                        json!({"name": name, "sequential": s, "graph": g, "reduction": 1.0 - *g as f64 / *s as f64})
                    })
                    .collect();
            }
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&doc).map_err(|e| failed("json", e))?
            )?;
        }
        ReportFormat::Tsv => {
            writeln!(out, "plans\tavg_sequential\tavg_graph\treduction")?;
            writeln!(
                out,
                "{}\t{:.4}\t{:.4}\t{:.4}",
                graphs.len(),
                stats.avg_sequential,
                stats.avg_graph,
                stats.reduction
            )?;
            if per_plan {
                writeln!(out, "\nname\tsequential\tgraph\treduction")?;
                for (name, s, g) in rows {
                    writeln!(out, "{name}\t{s}\t{g}\t{:.4}", 1.0 - g as f64 / s as f64)?;
                }
            }
        }
    }
    Ok(0)
}
