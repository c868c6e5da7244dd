use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use gridops_core::accounting::GroupBy;
use gridops_core::incidents::{StepAction, TicketKind, TicketStatus};
use gridops_core::storage_ops::{PlanOptions, Placement, SortMode};
use gridops_core::Timestamp;

use crate::config::ScenarioConfig;
use crate::engine::{Command, Engine, EngineError, Outcome};
use crate::reports::{parse_ratio_mode, render, Format, Report, WindowArg};

pub const DATA_DIR_ENV: &str = "GRIDOPS_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "gridops", version, about = "Operations tooling for a simulated grid VO")]
pub struct Cli {
    /// State directory holding the journal and derived logs.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = "gridops-data")]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Load a scenario into the store (or resume it) and run it to the end.
    Run { scenario: PathBuf },
    /// Print a report.
    Report(ReportArgs),
    #[command(subcommand)]
    Ticket(TicketCmd),
    #[command(subcommand)]
    Decommission(DecommissionCmd),
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Require this value in the x-gridops-token header.
        #[arg(long, env = "GRIDOPS_API_TOKEN")]
        token: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportKind {
    Filling,
    Reconcile,
    Metrics,
    Whitelist,
    Topology,
    Findings,
    HeavyUsers,
    Alarms,
    Availability,
    Tickets,
    Takeover,
    Accounting,
    Trend,
    Plans,
    Summary,
}

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    pub kind: ReportKind,
    #[arg(long, default_value = "json")]
    pub format: Format,
    /// Filling order: rate, id or free.
    #[arg(long, default_value = "rate")]
    pub sort: SortMode,
    #[arg(long)]
    pub start: Option<Timestamp>,
    #[arg(long)]
    pub end: Option<Timestamp>,
    /// Accounting grouping: user, site, subgroup or vo.
    #[arg(long, default_value = "vo")]
    pub group_by: GroupBy,
    /// Queue ratio: sum or mean.
    #[arg(long = "mode", default_value = "sum", value_parser = parse_ratio_mode)]
    pub ratio_mode: gridops_core::accounting::RatioMode,
}

impl ReportArgs {
    pub fn report(&self) -> Report {
        let window = WindowArg {
            start: self.start,
            end: self.end,
        };
        match self.kind {
            ReportKind::Filling => Report::Filling { sort: self.sort },
            ReportKind::Reconcile => Report::Reconciliation,
            ReportKind::Metrics => Report::SupportMetrics { window },
            ReportKind::Whitelist => Report::Whitelist,
            ReportKind::Topology => Report::Topology,
            ReportKind::Findings => Report::Findings,
            ReportKind::HeavyUsers => Report::HeavyUsers,
            ReportKind::Alarms => Report::Alarms,
            ReportKind::Availability => Report::Availability { window },
            ReportKind::Tickets => Report::Tickets,
            ReportKind::Takeover => Report::Takeover,
            ReportKind::Accounting => Report::Accounting {
                group_by: self.group_by,
                mode: self.ratio_mode,
                window,
            },
            ReportKind::Trend => Report::Trend,
            ReportKind::Plans => Report::Plans,
            ReportKind::Summary => Report::Summary,
        }
    }
}

fn parse_kind(s: &str) -> Result<TicketKind, String> {
    TicketKind::ALL
        .into_iter()
        .find(|k| k.to_string().eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown ticket kind {s:?} (expected SE, CE, WMS, User or Other)"))
}

fn parse_status(s: &str) -> Result<TicketStatus, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|_| {
        format!("unknown status {s:?} (expected Open, InProgress, OnHold, Solved or Closed)")
    })
}

fn parse_action(s: &str) -> Result<StepAction, String> {
    match s {
        "comment" => Ok(StepAction::Comment),
        "assign" => Ok(StepAction::Assign),
        "link-alarm" => Ok(StepAction::LinkAlarm),
        other => Err(format!("unknown action {other:?} (expected comment, assign or link-alarm)")),
    }
}

#[derive(Debug, Subcommand)]
pub enum TicketCmd {
    /// Open a ticket; prints it as JSON.
    Open {
        #[arg(long, value_parser = parse_kind)]
        kind: TicketKind,
        #[arg(long)]
        resource: Option<String>,
        #[arg(long)]
        author: String,
        #[arg(long, default_value = "")]
        payload: String,
        #[arg(long)]
        at: Option<Timestamp>,
        /// Alarm to link at creation.
        #[arg(long)]
        alarm: Option<String>,
    },
    /// Add a non-status step.
    Step {
        ticket_id: String,
        #[arg(long)]
        author: String,
        #[arg(long, default_value = "comment", value_parser = parse_action)]
        action: StepAction,
        #[arg(long, default_value = "")]
        payload: String,
        #[arg(long)]
        at: Option<Timestamp>,
        #[arg(long)]
        expected_version: Option<usize>,
    },
    /// Change the status of a ticket.
    Transition {
        ticket_id: String,
        #[arg(long, value_parser = parse_status)]
        to: TicketStatus,
        #[arg(long)]
        author: String,
        #[arg(long)]
        at: Option<Timestamp>,
        #[arg(long)]
        expected_version: Option<usize>,
    },
    /// Solve an active ticket and close it; closes a solved one.
    Close {
        ticket_id: String,
        #[arg(long)]
        author: String,
        #[arg(long)]
        at: Option<Timestamp>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlacementArg {
    MostFree,
    RoundRobin,
}

#[derive(Debug, Subcommand)]
pub enum DecommissionCmd {
    /// Plan the migration of every file off a storage element.
    Plan {
        source: String,
        #[arg(long, value_enum, default_value = "most-free")]
        placement: PlacementArg,
        /// Drop source replicas of files replicated elsewhere instead of moving them.
        #[arg(long)]
        skip_replicated: bool,
    },
    /// Execute a plan.
    Execute { plan_id: String },
}

fn print_json<T: serde::Serialize>(out: &mut dyn Write, value: &T) -> std::io::Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("outputs serialize");
    s.push('\n');
    out.write_all(s.as_bytes())
}

fn ticket_commands(cmd: TicketCmd, engine: &Engine) -> Result<Vec<Command>, EngineError> {
    Ok(match cmd {
        TicketCmd::Open {
            kind,
            resource,
            author,
            payload,
            at,
            alarm,
        } => vec![Command::OpenTicket {
            kind,
            resource_id: resource.map(Into::into),
            author,
            payload,
            at,
            alarm_id: alarm,
        }],
        TicketCmd::Step {
            ticket_id,
            author,
            action,
            payload,
            at,
            expected_version,
        } => vec![Command::AddStep {
            ticket_id,
            author,
            action,
            payload,
            at,
            expected_version,
        }],
        TicketCmd::Transition {
            ticket_id,
            to,
            author,
            at,
            expected_version,
        } => vec![Command::Transition {
            ticket_id,
            to,
            author,
            at,
            expected_version,
        }],
        TicketCmd::Close { ticket_id, author, at } => {
            let status = engine
                .state()
                .tickets
                .get(&ticket_id)
                .map(|t| t.status)
                .ok_or_else(|| gridops_core::incidents::IncidentError::UnknownTicket(ticket_id.clone()))?;
            let mut steps = Vec::new();
            if status.is_active() {
                steps.push(Command::Transition {
                    ticket_id: ticket_id.clone(),
                    to: TicketStatus::Solved,
                    author: author.clone(),
                    at,
                    expected_version: None,
                });
            }
            steps.push(Command::Transition {
                ticket_id,
                to: TicketStatus::Closed,
                author,
                at,
                expected_version: None,
            });
            steps
        }
    })
}

fn execute_all(engine: &mut Engine, commands: Vec<Command>) -> Result<Option<Outcome>, EngineError> {
    let mut last = None;
    for c in commands {
        last = Some(engine.execute(c)?);
    }
    Ok(last)
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    match cli.command {
        Cmd::Run { scenario } => {
            let config = ScenarioConfig::load(&scenario)?;
            let mut engine = Engine::open(&cli.data_dir)?;
            let summary = engine.run(&config)?;
            print_json(out, &summary)?;
        }
        Cmd::Report(args) => {
            let engine = Engine::open(&cli.data_dir)?;
            let body = render(engine.state(), &args.report(), args.format)?;
            out.write_all(body.as_bytes())?;
        }
        Cmd::Ticket(cmd) => {
            let mut engine = Engine::open(&cli.data_dir)?;
            let commands = ticket_commands(cmd, &engine)?;
            if let Some(outcome) = execute_all(&mut engine, commands)? {
                print_json(out, &outcome)?;
            }
        }
        Cmd::Decommission(cmd) => {
            let mut engine = Engine::open(&cli.data_dir)?;
            let command = match cmd {
                DecommissionCmd::Plan {
                    source,
                    placement,
                    skip_replicated,
                } => Command::PlanDecommission {
                    source: source.into(),
                    options: PlanOptions {
                        placement: match placement {
                            PlacementArg::MostFree => Placement::MostFreeFirst,
                            PlacementArg::RoundRobin => Placement::RoundRobin,
                        },
                        skip_replicated,
                        eligible: None,
                    },
                },
                DecommissionCmd::Execute { plan_id } => Command::ExecuteDecommission { plan_id },
            };
            let outcome = engine.execute(command)?;
            print_json(out, &outcome)?;
        }
        Cmd::Serve { port, token } => {
            let engine = Engine::open(&cli.data_dir)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(crate::api::serve(engine, port, token))?;
        }
    }
    Ok(())
}

/// Runs the CLI and returns the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
