//! `popv`: command-line front end for the population-protocol verification toolkit.
//!
//! Exit codes: 0 success or correct, 1 incorrect, invalid or negative answer,
//! 2 parse or usage error, 3 inconclusive (budget or sound under-approximation).

mod report;

use clap::{Args, Parser, Subcommand, ValueEnum};
use popv_core::counting::{parse_constraint, post_star, post_star_zm, pre_star, pre_star_zm, print_constraint, Constraint, Method};
use popv_core::format::{parse_config, parse_protocol, parse_run, print_config, print_protocol, print_run};
use popv_core::gen::{circuit_to_do, parse_circuit, parse_tm, parse_vass, pm1_to_dt, qbf_holds, tm_to_io, vass_to_pm1, TmOutcome};
use popv_core::histories::{prune, prune_do, prune_mfdo_linear, shorten};
use popv_core::stochastic::{estimate_convergence, mc_run, Scheduler};
use popv_core::verify::{
    check_correct, check_instance_capped, check_instance_do_sigma2, parse_predicate, CheckMethod, Status, Verdict,
};
use popv_core::{catalog, reach_graph, support_set, Model, Protocol, Run};
use report::Report;
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "popv", version, about = "Verification toolkit for population protocols")]
struct Cli {
    /// Print one JSON object instead of key=value lines.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a protocol file and check the model restrictions.
    Validate {
        file: PathBuf,
        /// Check against this model instead of the declared one.
        #[arg(long = "as")]
        as_model: Option<String>,
    },
    /// Backward closure pre* of a counting constraint (IO, MFDO; zero-message DO).
    Prestar(Closure),
    /// Forward closure post* of a counting constraint (IO, MFDO; zero-message DO).
    Poststar(Closure),
    /// Decide whether the protocol computes a predicate on all inputs.
    Check {
        file: PathBuf,
        /// Predicate over the input symbols: a constraint file, an inline constraint, `true` or `false`.
        #[arg(long)]
        pred: String,
        #[arg(long, default_value = "symbolic")]
        mode: String,
        /// Largest population size for the kernel sweep.
        #[arg(long)]
        max_size: Option<u64>,
        /// Write the witness run here instead of printing it.
        #[arg(long)]
        witness_out: Option<PathBuf>,
    },
    /// Decide whether every fair run from one configuration stabilizes to a value.
    CheckInstance {
        file: PathBuf,
        #[arg(long)]
        config: String,
        #[arg(long)]
        expect: u8,
        /// Cap on messages in transit for DT and QT searches.
        #[arg(long)]
        msg_cap: Option<u64>,
        /// Use the saturation and flow decider (DO only).
        #[arg(long)]
        sigma2: bool,
        #[arg(long)]
        witness_out: Option<PathBuf>,
    },
    /// Prune a covering run to few agents.
    Prune {
        file: PathBuf,
        #[arg(long)]
        run: PathBuf,
        /// Agents that must stay at the start.
        #[arg(long)]
        keep: Option<String>,
        /// Agents that must be covered at the end.
        #[arg(long)]
        cover: Option<String>,
        /// Linear pruning (MFDO only).
        #[arg(long)]
        linear: bool,
        #[arg(short = 'o', long)]
        out: Option<PathBuf>,
    },
    /// Shorten an MFDO or DO run while keeping its endpoints.
    Shorten {
        file: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(short = 'o', long)]
        out: Option<PathBuf>,
    },
    /// Generate reduction protocols.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Monte Carlo simulation under the model's probabilistic scheduler.
    Mc {
        file: PathBuf,
        #[arg(long)]
        config: String,
        /// Send probability for delayed models.
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 1)]
        runs: u64,
        #[arg(long, default_value_t = 10_000)]
        steps: u64,
        /// Final window used for convergence statistics.
        #[arg(long, default_value_t = 1000)]
        window: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the message-count series of a single run as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Search for a run between two configurations.
    Reach {
        file: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        msg_cap: Option<u64>,
        #[arg(short = 'o', long)]
        out: Option<PathBuf>,
    },
    /// Fire a transition, or list the enabled ones.
    Step {
        file: PathBuf,
        #[arg(long)]
        config: String,
        #[arg(long)]
        trans: Option<String>,
        #[arg(long, default_value_t = 1)]
        times: u64,
    },
    /// List or print the built-in example protocols.
    Catalog {
        name: Option<String>,
        #[arg(short = 'o', long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Closure {
    file: PathBuf,
    /// Constraint file, or inline text such as `{q0 in [0,0]}`.
    #[arg(long)]
    constraint: String,
    #[arg(long, value_enum, default_value_t = MethodArg::Fixpoint)]
    method: MethodArg,
    #[arg(short = 'o', long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Fixpoint,
    Witness,
}

#[derive(Subcommand)]
enum GenKind {
    /// Bounded Turing machine to IO protocol.
    Tm {
        input: PathBuf,
        #[arg(short = 'o', long)]
        out: Option<PathBuf>,
    },
    /// Quantified circuit to DO protocol.
    Circuit {
        input: PathBuf,
        #[arg(short = 'o', long)]
        out: Option<PathBuf>,
    },
    /// VASS reachability query to DT protocol.
    Vass {
        input: PathBuf,
        #[arg(long)]
        determinize: bool,
        #[arg(short = 'o', long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] popv_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use popv_core::Error as E;
        match self {
            CliError::Core(E::Budget { .. } | E::SoundUnderapprox(_)) => 3,
            CliError::Core(E::Model(_) | E::Invalid(_) | E::NotEnabled { .. } | E::HistoryTooLong { .. }) => 1,
            _ => 2,
        }
    }
}

type Res<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Res<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn write(path: &Path, text: &str) -> Res<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn load(path: &Path) -> Res<Protocol> {
    Ok(parse_protocol(&read(path)?)?)
}

/// Reads a constraint argument: an existing file, or inline text where each
/// `{...}` group is one cube.
fn constraint_text(arg: &str) -> Res<String> {
    let path = Path::new(arg);
    if path.is_file() {
        return read(path);
    }
    let t = arg.trim();
    if !t.contains('{') {
        return Ok(t.replace(';', "\n"));
    }
    let mut out = String::new();
    for part in t.split('}') {
        let part = part.trim().trim_start_matches([',', ';']).trim();
        if part.is_empty() {
            continue;
        }
        let body = part
            .strip_prefix('{')
            .ok_or_else(|| CliError::Usage(format!("bad inline constraint `{arg}`")))?;
        out.push_str("cube: ");
        out.push_str(body.trim());
        out.push('\n');
    }
    Ok(out)
}

/// Stores a file payload: written to `out` when given, otherwise put in the report.
fn emit(r: &mut Report, key: &str, text: String, out: Option<&Path>) -> Res<()> {
    match out {
        Some(path) => {
            write(path, &text)?;
            r.put("output", path.display().to_string());
        }
        None => {
            r.put(key, text);
        }
    }
    Ok(())
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Correct => "correct",
        Status::Incorrect => "incorrect",
        Status::Inconclusive => "inconclusive",
    }
}

fn verdict_report(p: &Protocol, v: &Verdict, witness_out: Option<&Path>) -> Res<Report> {
    let mut r = Report::new();
    r.put("status", status_name(v.status))
        .put("method", v.method.to_string())
        .put("bound_used", v.bound_used)
        .put("worst_case_bound", v.worst_case_bound.map(|b| Value::String(b.to_string())))
        .put("largest_size_checked", v.largest_size_checked)
        .put("bounded", v.bounded)
        .put("note", v.note.clone());
    if let Some(w) = &v.witness {
        let input = w.input.as_ref().map(|d| {
            let parts: Vec<String> = d.support().map(|i| format!("{}:{}", p.inputs[i], d.get(i))).collect();
            format!("{{{}}}", parts.join(", "))
        });
        r.put("witness_input", input)
            .put("witness_expected", w.expected)
            .put("witness_length", w.run.total_len())
            .put("witness_bad", print_config(p, &w.bad));
        emit(&mut r, "witness_run", print_run(p, &w.run), witness_out)?;
    }
    Ok(r)
}

fn closure(c: &Closure, backward: bool) -> Res<(Report, u8)> {
    let p = load(&c.file)?;
    let g = parse_constraint(&p, &constraint_text(&c.constraint)?)?;
    let method = match c.method {
        MethodArg::Fixpoint => Method::Fixpoint,
        MethodArg::Witness => Method::Witness,
    };
    let res: Constraint = match (p.model, backward) {
        (Model::DO, true) => pre_star_zm(&p, &g, method)?,
        (Model::DO, false) => post_star_zm(&p, &g, method)?,
        (_, true) => pre_star(&p, &g, method)?,
        (_, false) => post_star(&p, &g, method)?,
    };
    let q = p.num_states() as u64;
    let bound = g.lnorm() + q.pow(3);
    let ok = res.lnorm() <= bound && res.unorm() <= g.unorm();
    let mut r = Report::new();
    r.put("model", p.model.to_string())
        .put("direction", if backward { "pre*" } else { "post*" })
        .put("cubes_in", g.len())
        .put("lnorm_in", g.lnorm())
        .put("unorm_in", g.unorm())
        .put("cubes_out", res.len())
        .put("lnorm_out", res.lnorm())
        .put("unorm_out", res.unorm())
        .put("lnorm_bound", bound)
        .put("norm_bounds_hold", ok);
    emit(&mut r, "constraint", print_constraint(&p, &res), c.out.as_deref())?;
    Ok((r, 0))
}

fn agents_arg(p: &Protocol, arg: Option<&str>) -> Res<popv_core::Multiset> {
    Ok(match arg {
        Some(t) => parse_config(p, t)?.agents,
        None => popv_core::Multiset::zeros(p.num_states()),
    })
}

fn run(cmd: &Cmd) -> Res<(Report, u8)> {
    match cmd {
        Cmd::Validate { file, as_model } => {
            let p = load(file)?;
            let violations = match as_model {
                Some(m) => {
                    let model = Model::ALL
                        .into_iter()
                        .find(|x| x.to_string().eq_ignore_ascii_case(m))
                        .ok_or_else(|| CliError::Usage(format!("unknown model `{m}`")))?;
                    p.validate_as(model)
                }
                None => p.validate(),
            };
            let mut r = Report::new();
            r.put("model", p.model.to_string())
                .put("states", p.num_states())
                .put("messages", p.num_messages())
                .put("transitions", p.transitions.iter().filter(|t| !t.implicit).count())
                .put("implicit_receives", p.transitions.iter().filter(|t| t.implicit).count())
                .put("valid", violations.is_empty())
                .put_ser("violations", &violations)
                .put_ser("notes", &p.notes());
            let code = u8::from(!violations.is_empty());
            Ok((r, code))
        }
        Cmd::Prestar(c) => closure(c, true),
        Cmd::Poststar(c) => closure(c, false),
        Cmd::Check { file, pred, mode, max_size, witness_out } => {
            let p = load(file)?;
            let phi = parse_predicate(&p, &constraint_text(pred)?)?;
            let method: CheckMethod = mode.parse()?;
            let v = check_correct(&p, &phi, method, *max_size)?;
            let code = v.exit_code() as u8;
            Ok((verdict_report(&p, &v, witness_out.as_deref())?, code))
        }
        Cmd::CheckInstance { file, config, expect, msg_cap, sigma2, witness_out } => {
            let p = load(file)?;
            let c0 = parse_config(&p, config)?;
            if *expect > 1 {
                return Err(CliError::Usage("--expect takes 0 or 1".into()));
            }
            let v = if *sigma2 {
                check_instance_do_sigma2(&p, &c0, *expect)?
            } else {
                check_instance_capped(&p, &c0, *expect, *msg_cap)?
            };
            let code = v.exit_code() as u8;
            Ok((verdict_report(&p, &v, witness_out.as_deref())?, code))
        }
        Cmd::Prune { file, run, keep, cover, linear, out } => {
            let p = load(file)?;
            let r0 = parse_run(&p, &read(run)?)?;
            let l_init = agents_arg(&p, keep.as_deref())?;
            let l_final = agents_arg(&p, cover.as_deref())?;
            let pruned = match (p.model, linear) {
                (Model::MFDO, true) => prune_mfdo_linear(&p, &r0, &l_init, &l_final)?,
                (_, true) => return Err(CliError::Usage("--linear needs an MFDO protocol".into())),
                (Model::DO, false) => prune_do(&p, &r0, &l_init, &l_final)?,
                _ => prune(&p, &r0, &l_init, &l_final)?,
            };
            let q = p.num_states() as u64;
            let extra = if *linear { q } else { q.pow(3) };
            let bound = l_init.size() + l_final.size() + extra;
            let end = p.apply_run(&pruned)?;
            let new_size = pruned.start.num_agents();
            let mut r = Report::new();
            r.put("old_size", r0.start.num_agents())
                .put("new_size", new_size)
                .put("bound", bound)
                .put("within_bound", new_size <= bound)
                .put("covers", l_final.le(&end.agents))
                .put("old_length", r0.total_len())
                .put("new_length", pruned.total_len())
                .put("new_start", print_config(&p, &pruned.start))
                .put("new_end", print_config(&p, &end));
            emit(&mut r, "run", print_run(&p, &pruned), out.as_deref())?;
            Ok((r, 0))
        }
        Cmd::Shorten { file, run, out } => {
            let p = load(file)?;
            let r0 = parse_run(&p, &read(run)?)?;
            let s = shorten(&p, &r0)?;
            let q = p.num_states() as u64;
            let bound = q.pow(4) + if p.model == Model::DO { q } else { 0 };
            let same = p.apply_run(&r0)? == p.apply_run(&s)? && s.start == r0.start;
            let mut r = Report::new();
            r.put("old_length", r0.aggregated_len())
                .put("new_length", s.aggregated_len())
                .put("bound", bound)
                .put("within_bound", s.aggregated_len() as u64 <= bound)
                .put("same_endpoints", same);
            emit(&mut r, "run", print_run(&p, &s), out.as_deref())?;
            Ok((r, 0))
        }
        Cmd::Gen { kind } => gen(kind),
        Cmd::Mc { file, config, p: prob, runs, steps, window, seed, csv } => {
            let p = load(file)?;
            let c0 = parse_config(&p, config)?;
            let sched = Scheduler::for_model(p.model, *prob, *seed)?;
            let mut r = Report::new();
            r.put("scheduler", sched.to_string()).put("runs", *runs).put("steps", *steps);
            if *runs <= 1 {
                let s = mc_run(&p, &c0, &sched, *steps)?;
                r.put("noops", s.noops)
                    .put("zero_message_visits", s.zero_message_visits)
                    .put("max_messages", s.message_counts.iter().copied().max().unwrap_or(0))
                    .put("final_consensus", s.consensus.last().copied().flatten())
                    .put("final_config", print_config(&p, &s.final_config));
                if let Some(path) = csv {
                    write(path, &s.messages_csv())?;
                    r.put("csv", path.display().to_string());
                }
            } else {
                let st = estimate_convergence(&p, &c0, &sched, *runs, *steps, *window)?;
                r.put("window", st.window);
                for (key, e) in [
                    ("stable0", st.stable[0]),
                    ("stable1", st.stable[1]),
                    ("zero_message_rate", st.zero_message_rate),
                    ("windows_with_zero", st.windows_with_zero),
                    ("noop_rate", st.noop_rate),
                ] {
                    r.put(key, e.value).put(&format!("{key}_ci_lo"), e.lo).put(&format!("{key}_ci_hi"), e.hi);
                }
                r.put("max_zero_gap", st.max_zero_gap);
            }
            Ok((r, 0))
        }
        Cmd::Reach { file, from, to, msg_cap, out } => {
            let p = load(file)?;
            let c0 = parse_config(&p, from)?;
            let c1 = parse_config(&p, to)?;
            let cap = match (p.model.is_delayed(), msg_cap) {
                (true, None) => Some(2 * c0.num_agents() + c0.messages.size()),
                (_, c) => *c,
            };
            let g = reach_graph(&p, &[c0.clone()], cap)?;
            let path = g.find_config(&c1).and_then(|t| g.path(g.roots[0], t));
            let mut r = Report::new();
            r.put("nodes", g.len()).put("msg_cap", cap).put("reachable", path.is_some());
            let code = match path {
                Some(labels) => {
                    let mut run = Run::new(c0);
                    for t in labels {
                        run.push(t, 1);
                    }
                    r.put("length", run.total_len());
                    emit(&mut r, "run", print_run(&p, &run.normalized()), out.as_deref())?;
                    0
                }
                None => 1,
            };
            Ok((r, code))
        }
        Cmd::Step { file, config, trans, times } => {
            let p = load(file)?;
            let mut c = parse_config(&p, config)?;
            let mut seen = (p.model == Model::MFDO).then(|| support_set(&c.agents));
            let mut r = Report::new();
            match trans {
                None => {
                    let names: Vec<&str> = (0..p.transitions.len())
                        .filter(|&t| p.is_enabled(t, &c, seen.as_ref()))
                        .map(|t| p.transitions[t].name.as_str())
                        .collect();
                    r.put_ser("enabled", &names);
                    Ok((r, 0))
                }
                Some(name) => {
                    let t = p.trans_id(name)?;
                    let mut fired = 0;
                    while fired < *times && p.fire(t, &mut c, seen.as_mut()) {
                        fired += 1;
                    }
                    r.put("fired", fired).put("config", print_config(&p, &c));
                    Ok((r, u8::from(fired < *times)))
                }
            }
        }
        Cmd::Catalog { name, out } => {
            let all: [(&str, fn() -> Protocol); 6] = [
                ("io_example", catalog::io_example),
                ("two_state", catalog::two_state),
                ("mfdo_ab", catalog::mfdo_ab),
                ("do_ab", catalog::do_ab),
                ("more_than_half", catalog::more_than_half),
                ("qt_example", catalog::qt_example),
            ];
            let mut r = Report::new();
            match name {
                None => {
                    let names: Vec<&str> = all.iter().map(|x| x.0).collect();
                    r.put_ser("protocols", &names);
                }
                Some(n) => {
                    let f = all
                        .iter()
                        .find(|x| x.0 == n)
                        .ok_or_else(|| CliError::Usage(format!("unknown catalog protocol `{n}`")))?;
                    emit(&mut r, "protocol", print_protocol(&(f.1)()), out.as_deref())?;
                }
            }
            Ok((r, 0))
        }
    }
}

fn gen(kind: &GenKind) -> Res<(Report, u8)> {
    let mut r = Report::new();
    match kind {
        GenKind::Tm { input, out } => {
            let tm = parse_tm(&read(input)?)?;
            let enc = tm_to_io(&tm)?;
            let (outcome, trace) = tm.run();
            let outcome_name = match outcome {
                TmOutcome::Accept => "accept",
                TmOutcome::Reject => "reject",
                TmOutcome::Blocked => "blocked",
                TmOutcome::Loop => "loop",
            };
            r.put("states", enc.protocol.num_states())
                .put("transitions", enc.protocol.transitions.len())
                .put("tm_outcome", outcome_name)
                .put("tm_steps", trace.len().saturating_sub(1))
                .put("expected_output", u8::from(outcome == TmOutcome::Accept))
                .put("initial_config", print_config(&enc.protocol, &enc.initial_config()));
            emit(&mut r, "protocol", print_protocol(&enc.protocol), out.as_deref())?;
        }
        GenKind::Circuit { input, out } => {
            let c = parse_circuit(&read(input)?)?;
            let cp = circuit_to_do(&c)?;
            let holds = qbf_holds(&c);
            r.put("states", cp.protocol.num_states())
                .put("messages", cp.protocol.num_messages())
                .put("qbf_holds", holds)
                .put("computes_constant_0", !holds)
                .put("one_per_node", print_config(&cp.protocol, &cp.one_per_node()));
            emit(&mut r, "protocol", print_protocol(&cp.protocol), out.as_deref())?;
        }
        GenKind::Vass { input, determinize, out } => {
            let (v, q) = parse_vass(&read(input)?)?;
            let (pm1, r0, rr) = vass_to_pm1(&v, &q)?;
            let pp = pm1_to_dt(&pm1, r0, rr, *determinize)?;
            r.put("vass_states", v.states.len())
                .put("pm1_states", pm1.states.len())
                .put("states", pp.protocol.num_states())
                .put("messages", pp.protocol.num_messages())
                .put("transitions", pp.protocol.transitions.len())
                .put("oracle_reachable_cap5", v.reachable_capped(&q, 5))
                .put("initial_config", print_config(&pp.protocol, &pp.c0));
            emit(&mut r, "protocol", print_protocol(&pp.protocol), out.as_deref())?;
        }
    }
    Ok((r, 0))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.cmd) {
        Ok((r, code)) => {
            print!("{}", if cli.json { r.json() } else { r.text() });
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_constraints() {
        assert_eq!(constraint_text("{q0 in [0,0]}").unwrap(), "cube: q0 in [0,0]\n");
        assert_eq!(constraint_text("{a in [1,inf]}; {b in [2,2]}").unwrap(), "cube: a in [1,inf]\ncube: b in [2,2]\n");
        assert_eq!(constraint_text("").unwrap(), "");
        assert_eq!(constraint_text("true").unwrap(), "true");
    }
}
