use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use secgames::audit::audit_rps;
use secgames::equilibrium::{fictitious_play_with, solve_bimatrix, solve_zero_sum, EquilibriumResult};
use secgames::game::{is_epsilon_nash, ActionSpace, Distribution, Player};
use secgames::interdiction::solve_minmax_interdiction;
use secgames::markov::{shapley_value_iteration_with, MarkovGame, MarkovPolicy, SHAPLEY_MAX_ITER, SHAPLEY_TOL};
use secgames::prompt::external::ResponseCache;
use secgames::prompt::{llm_nash_equilibria, stability_profile, PromptSpaceGame, StubConfig, StubMode, StubServer};
use secgames::signaling::{enumerate_pure_pbne, SignalingGame};
use secgames::spec::{kind_mismatch, load_game_spec, LoadOptions, LoadedSpec, LoadedStackelberg, LoadedWorkflow, SpecKind};
use secgames::stackelberg::{run_deception_episode, solve_leader_commitment};
use secgames::workflow::{run_workflow_with_failures, FailurePlan, Outcome};
use secgames::{BimatrixGame, GameError};
use serde_json::{json, Value};

use crate::report::{grid, probs, Report};
use crate::{Cli, Command, Mode};

/// Tolerance for checking a supplied matrix profile when `--epsilon` is absent.
const PROFILE_EPSILON: f64 = 1e-9;

pub fn run(cli: &Cli) -> Result<Report> {
    match &cli.command {
        Command::Solve { spec } => solve(cli, spec),
        Command::AuditRps => audit(),
        Command::RunWorkflow { spec, failures } => match load(cli, spec)? {
            LoadedSpec::Workflow(w) => workflow(cli, w, failures.as_deref()),
            other => Err(kind_mismatch(&[SpecKind::Workflow], other.kind()).into()),
        },
        Command::Stability { spec } => match load(cli, spec)? {
            LoadedSpec::PromptGame(g) => stability(cli, &g),
            other => Err(kind_mismatch(&[SpecKind::PromptGame], other.kind()).into()),
        },
        Command::StubServer { bind, labels, probs, mode } => stub_server(bind, labels, probs, *mode),
    }
}

fn load(cli: &Cli, path: &Path) -> Result<LoadedSpec> {
    let cache = match &cli.cache {
        Some(p) => Some(Arc::new(ResponseCache::open(p)?)),
        None => None,
    };
    let opts = LoadOptions {
        policy_url: cli.policy_url.clone(),
        timeout: Duration::from_millis(cli.policy_timeout_ms),
        retries: cli.retries,
        cache,
    };
    Ok(load_game_spec(path, &opts)?.1)
}

fn solve(cli: &Cli, path: &Path) -> Result<Report> {
    match load(cli, path)? {
        LoadedSpec::Matrix { game, profile } => matrix(cli, &game, profile),
        LoadedSpec::Markov(g) => markov(cli, &g),
        LoadedSpec::Signaling(g) => signaling(&g),
        LoadedSpec::Stackelberg(s) => stackelberg(cli, &s),
        LoadedSpec::Interdiction(inst) => {
            let s = solve_minmax_interdiction(&inst)?;
            let mut r = Report::new(json!({ "kind": "interdiction", "solution": s }));
            let arc = |i: &usize| {
                let e = &inst.edges()[*i];
                format!("{}->{}", e.from, e.to)
            };
            r.line(format!("protected: [{}]", s.defender_set.iter().map(arc).collect::<Vec<_>>().join(", ")))
                .line(format!("attacked:  [{}]", s.attacker_set.iter().map(arc).collect::<Vec<_>>().join(", ")))
                .line(format!(
                    "objective: {}{}",
                    s.objective,
                    if s.disconnected { " (source and sink disconnected)" } else { "" }
                ));
            Ok(r)
        }
        LoadedSpec::PromptGame(g) => prompt_game(&g),
        LoadedSpec::Workflow(w) => workflow(cli, w, None),
    }
}

fn labelled(d: &Distribution) -> Value {
    d.space()
        .labels()
        .iter()
        .zip(d.probs())
        .map(|(l, p)| (l.clone(), json!(p)))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

fn equilibrium_json(e: &EquilibriumResult) -> Value {
    json!({
        "row": labelled(&e.row_strategy),
        "col": labelled(&e.col_strategy),
        "row_value": e.value.row(),
        "method": format!("{:?}", e.method),
    })
}

fn matrix(cli: &Cli, game: &BimatrixGame, profile: Option<(Distribution, Distribution)>) -> Result<Report> {
    let mut r;
    if game.is_zero_sum() {
        let e = match cli.max_iter {
            Some(n) => fictitious_play_with(game, n)?,
            None => solve_zero_sum(game)?,
        };
        r = Report::new(json!({ "kind": "matrix", "zero_sum": true, "equilibrium": equilibrium_json(&e) }));
        r.line(format!("value {:+.6} ({:?})", e.value.row() + 0.0, e.method))
            .line(format!("row {}", probs(e.row_strategy.probs())))
            .line(format!("col {}", probs(e.col_strategy.probs())));
    } else {
        let all = solve_bimatrix(game)?;
        r = Report::new(json!({
            "kind": "matrix",
            "zero_sum": false,
            "degenerate": all.degenerate,
            "equilibria": all.equilibria.iter().map(equilibrium_json).collect::<Vec<_>>(),
        }));
        r.line(format!("{} equilibria{}", all.equilibria.len(), if all.degenerate { " (degenerate game)" } else { "" }));
        for e in &all.equilibria {
            let (ur, uc) = game.expected_payoffs(&e.row_strategy, &e.col_strategy)?;
            r.line(format!("row {} col {} payoffs ({:+.4}, {:+.4})", probs(e.row_strategy.probs()), probs(e.col_strategy.probs()), ur + 0.0, uc + 0.0));
        }
    }
    if let Some((row, col)) = profile {
        let eps = cli.epsilon.unwrap_or(PROFILE_EPSILON);
        let check = is_epsilon_nash(&game.to_tensor(), &[row, col], eps)?;
        r.json["profile_check"] = json!({ "epsilon": eps, "is_nash": check.is_equilibrium, "gains": check.gains });
        r.line(format!(
            "supplied profile: {} at epsilon {eps:e} (gains {})",
            if check.is_equilibrium { "equilibrium" } else { "not an equilibrium" },
            probs(&check.gains)
        ));
    }
    Ok(r)
}

fn policy_json(g: &MarkovGame, p: &MarkovPolicy) -> Value {
    let stage = |dists: &[Distribution]| -> Value {
        dists
            .iter()
            .enumerate()
            .map(|(s, d)| (g.states()[s].clone(), labelled(d)))
            .collect::<serde_json::Map<_, _>>()
            .into()
    };
    if p.is_stationary() {
        stage(&p.stages()[0])
    } else {
        Value::Array(p.stages().iter().map(|st| stage(st)).collect())
    }
}

fn markov(cli: &Cli, g: &MarkovGame) -> Result<Report> {
    let sol = shapley_value_iteration_with(g, cli.epsilon.unwrap_or(SHAPLEY_TOL), cli.max_iter.unwrap_or(SHAPLEY_MAX_ITER))
        .map_err(|e| match e {
            GameError::InvalidInput(m) if m.contains("zero-sum") => GameError::validation(
                "/body/utilities",
                "solve handles zero-sum Markov games only; general-sum policies can be checked with the library's verify_markov_perfect",
            ),
            other => other,
        })?;
    let mut r = Report::new(json!({
        "kind": "markov",
        "values": g.states().iter().cloned().zip(sol.values.iter().copied()).collect::<std::collections::BTreeMap<_, _>>(),
        "iterations": sol.iterations,
        "policies": [policy_json(g, &sol.policies[0]), policy_json(g, &sol.policies[1])],
    }));
    r.line(format!("converged after {} sweeps", sol.iterations));
    let header = vec!["state".to_string(), "value".into(), "player 1".into(), "player 2".into()];
    let rows: Vec<Vec<String>> = (0..g.state_count())
        .map(|s| {
            vec![
                g.states()[s].clone(),
                format!("{:+.6}", sol.values[s]),
                probs(sol.policies[0].at(0, s).probs()),
                probs(sol.policies[1].at(0, s).probs()),
            ]
        })
        .collect();
    r.table.push_str(&grid(&header, &rows));
    Ok(r)
}

fn signaling(g: &SignalingGame) -> Result<Report> {
    let all = enumerate_pure_pbne(g)?;
    let label = |s: &ActionSpace, i: usize| s.label(i).to_string();
    let items: Vec<Value> = all
        .iter()
        .map(|a| {
            json!({
                "sender": a.sender.iter().enumerate().map(|(t, s)| (label(g.types(), t), json!(label(g.signals(), *s)))).collect::<serde_json::Map<_, _>>(),
                "receiver": a.receiver.iter().enumerate().map(|(s, x)| (label(g.signals(), s), json!(label(g.actions(), *x)))).collect::<serde_json::Map<_, _>>(),
                "beliefs": a.beliefs.beliefs.iter().enumerate().map(|(s, b)| (label(g.signals(), s), labelled(b))).collect::<serde_json::Map<_, _>>(),
                "on_path": a.beliefs.on_path,
                "classification": a.classification,
            })
        })
        .collect();
    let mut r = Report::new(json!({ "kind": "signaling", "equilibria": items }));
    r.line(format!("{} pure PBNE", all.len()));
    for a in &all {
        let sender: Vec<String> = a.sender.iter().enumerate().map(|(t, s)| format!("{}->{}", label(g.types(), t), label(g.signals(), *s))).collect();
        let receiver: Vec<String> = a.receiver.iter().enumerate().map(|(s, x)| format!("{}->{}", label(g.signals(), s), label(g.actions(), *x))).collect();
        r.line(format!("{:?}: sender [{}] receiver [{}]", a.classification, sender.join(", "), receiver.join(", ")));
    }
    Ok(r)
}

fn stackelberg(cli: &Cli, s: &LoadedStackelberg) -> Result<Report> {
    let sol = solve_leader_commitment(&s.game)?;
    let g = s.game.game();
    let leader = s.game.leader();
    let actions: Vec<String> = sol
        .leader_actions
        .iter()
        .enumerate()
        .map(|(st, a)| g.action_space(leader, st).label(*a).to_string())
        .collect();
    let mut r = Report::new(json!({
        "kind": "stackelberg",
        "leader_actions": g.states().iter().cloned().zip(actions.iter().cloned()).collect::<std::collections::BTreeMap<_, _>>(),
        "leader_value": sol.leader_value,
        "follower_value": sol.follower_value,
        "follower_policy": policy_json(g, &sol.follower_policy),
        "policies_evaluated": sol.policies_evaluated,
        "scope": sol.scope,
    }));
    r.line(format!("leader commits to [{}]", actions.join(", ")))
        .line(format!("leader value {:+.6}, follower value {:+.6}", sol.leader_value + 0.0, sol.follower_value + 0.0))
        .line(format!("{} leader policies evaluated ({})", sol.policies_evaluated, sol.scope));
    if let Some(ep) = &s.episode {
        let seed = if cli.seed != 0 { cli.seed } else { ep.seed };
        let (lp, fp) = (&sol.leader_policy, &sol.follower_policy);
        let trace = run_deception_episode(&s.game, lp, fp, s.game.start_state(), ep.horizon, seed)?;
        r.line(format!(
            "episode seed {seed}: leader return {:+.4}, follower return {:+.4}, final state {}",
            trace.leader_return + 0.0, trace.follower_return + 0.0, trace.final_state
        ));
        r.json["episode"] = serde_json::to_value(&trace)?;
    }
    Ok(r)
}

fn prompt_game(g: &PromptSpaceGame) -> Result<Report> {
    let nash = llm_nash_equilibria(g)?;
    let rows: Vec<String> = g.row_prompts.iter().map(|p| p.id.clone()).collect();
    let cols: Vec<String> = g.col_prompts.iter().map(|p| p.id.clone()).collect();
    let to_rows = |m: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
        (0..rows.len()).map(|i| (0..cols.len()).map(|j| m(i, j) + 0.0).collect()).collect()
    };
    let row_payoffs = to_rows(&|i, j| nash.row_payoffs[(i, j)]);
    let col_payoffs = to_rows(&|i, j| nash.col_payoffs[(i, j)]);
    let eq: Vec<Value> = nash
        .equilibria
        .iter()
        .zip(&nash.behavioral)
        .map(|(&(i, j), (x, y))| json!({ "row_prompt": rows[i], "col_prompt": cols[j], "row": labelled(x), "col": labelled(y) }))
        .collect();
    let mut r = Report::new(json!({
        "kind": "promptGame",
        "row_prompts": rows,
        "col_prompts": cols,
        "row_payoffs": row_payoffs,
        "col_payoffs": col_payoffs,
        "equilibria": eq,
    }));
    r.line("row player utility by prompt pair");
    let header: Vec<String> = std::iter::once(String::new()).chain(cols.iter().cloned()).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .zip(&row_payoffs)
        .map(|(name, vals)| std::iter::once(name.clone()).chain(vals.iter().map(|v| format!("{v:+.4}"))).collect())
        .collect();
    r.table.push_str(&grid(&header, &body));
    let names: Vec<String> = nash.equilibria.iter().map(|&(i, j)| format!("({}, {})", rows[i], cols[j])).collect();
    r.line(format!("equilibria: {}", if names.is_empty() { "none".to_string() } else { names.join(" ") }));
    Ok(r)
}

fn workflow(cli: &Cli, w: LoadedWorkflow, failures: Option<&Path>) -> Result<Report> {
    let plan = match failures {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading failure plan {}", p.display()))?;
            serde_json::from_str::<FailurePlan>(&text)
                .map_err(|e| GameError::validation(format!("failure plan {}", p.display()), e.to_string()))?
        }
        None => w.failures.clone(),
    };
    let trace = run_workflow_with_failures(&w.graph, &w.initial_inputs, cli.seed, &plan)?;
    let mut r = Report::new(serde_json::to_value(&trace)?);
    r.line(format!("{:?} after {} round(s), seed {}", trace.termination, trace.rounds, trace.seed));
    let header: Vec<String> = ["round", "node", "outcome", "emitted"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = trace
        .firings
        .iter()
        .map(|f| {
            let outcome = match f.outcome {
                Outcome::Rerouted => format!("rerouted to {}", f.executed_by),
                o => format!("{o:?}").to_lowercase(),
            };
            vec![f.round.to_string(), f.node.clone(), outcome, f.emitted.clone().unwrap_or_else(|| "-".into())]
        })
        .collect();
    r.table.push_str(&grid(&header, &rows));
    Ok(r)
}

fn stability(cli: &Cli, g: &PromptSpaceGame) -> Result<Report> {
    let sampling = secgames::prompt::Sampling { seed: cli.seed, ..g.sampling };
    let mut json_sides = serde_json::Map::new();
    let mut r = Report::new(Value::Null);
    for (name, player, info) in [("row", Player::Row, &g.row_info), ("col", Player::Col, &g.col_info)] {
        let prompts = g.prompts(player);
        let policy = match player {
            Player::Row => g.row_policy.as_ref(),
            Player::Col => g.col_policy.as_ref(),
        };
        let prof = stability_profile(policy, prompts, info, sampling)?;
        r.line(format!(
            "{name} prompts: Lipschitz ratio {}",
            prof.lipschitz_ratio.map_or("n/a (all pairs at distance 0)".to_string(), |x| format!("{x:.4}"))
        ));
        let header: Vec<String> = ["a", "b", "distance", "L1 gap"].iter().map(|s| s.to_string()).collect();
        let rows: Vec<Vec<String>> = prof
            .pairs
            .iter()
            .map(|p| vec![prompts[p.a].id.clone(), prompts[p.b].id.clone(), format!("{:.4}", p.distance), format!("{:.4}", p.output_gap)])
            .collect();
        r.table.push_str(&grid(&header, &rows));
        json_sides.insert(name.to_string(), serde_json::to_value(&prof)?);
    }
    r.json = Value::Object(json_sides);
    Ok(r)
}

fn audit() -> Result<Report> {
    let a = audit_rps()?;
    Ok(Report {
        table: a.render_table(),
        json: serde_json::to_value(&a)?,
    })
}

fn stub_server(bind: &str, labels: &[String], probs: &[f64], mode: Mode) -> Result<Report> {
    let space = ActionSpace::new(labels.iter().cloned())?;
    let dist = if probs.is_empty() {
        Distribution::uniform(space)
    } else {
        Distribution::named("--probs", space, probs.to_vec())?
    };
    let mode = match mode {
        Mode::Quota => StubMode::Quota,
        Mode::Multinomial => StubMode::Multinomial,
    };
    let server = StubServer::bind(bind, StubConfig::new(dist, mode))?;
    println!("stub policy server listening on {}", server.url());
    std::io::stdout().flush()?;
    server.join();
    Ok(Report::new(Value::Null))
}
