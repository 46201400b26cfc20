//! One function per subcommand. Each reads prior artifacts from the run
//! directory, writes its own, and finishes with a manifest.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use daxt::events::{generate_with_config, parse_spadl_csv, write_spadl_csv, GameStream, PlayerId, SynthConfig};
use daxt::fingerprint::corpus_fingerprint;
use daxt::net::{fit_model, load_model, save_model, split_indices, TrainedModel};
use daxt::render::{assign_bins, pitch_scatter_svg, scatter_regression_svg, write_svg, PitchMarker};
use daxt::scoring::{
    compute_cxt_pxt, correlate_market_value, rank, raw_features, read_market_values, read_matches, read_positions,
    score_players, write_ranking, write_scores, DefenderScore, Position,
};
use daxt::sequences::{build_da_sets, build_training_set, read_table, write_table, DefensiveKind, FeatureTable};
use daxt::stats::{fraction_within, ks_two_sample, levene_median, mae, pearson, qq_data, write_qq_csv};
use daxt::valuation::{
    aggregate_players, read_valued_actions, value_defensive_actions, write_leaderboard, write_player_stats,
    write_valued_actions, ValuedAction,
};
use daxt::xt::{fit_grid, read_surface, solve_xt, write_surface, XtSurface};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::rundir::*;

pub struct Ctx {
    pub cfg: RunConfig,
    pub dir: RunDir,
}

impl Ctx {
    pub fn new(cfg: RunConfig) -> Result<Self, CliError> {
        let dir = RunDir::create(&cfg.out)?;
        Ok(Self { cfg, dir })
    }

    fn events(&self) -> Result<(PathBuf, Vec<GameStream>), CliError> {
        let p = self.dir.require(EVENTS, "ingest` or `daxt synth")?;
        let parsed = parse_spadl_csv(&p)?;
        if parsed.games.is_empty() {
            return Err(CliError::contract(format!("{} holds no valid actions", p.display())));
        }
        Ok((p, parsed.games))
    }

    fn surface(&self) -> Result<(PathBuf, XtSurface, String), CliError> {
        let p = self.dir.require(XT_SURFACE, "xt")?;
        self.dir.require(XT_META, "xt")?;
        let (s, meta) = read_surface(&p)?;
        Ok((p, s, meta.corpus_fingerprint))
    }

    fn model(&self) -> Result<(PathBuf, TrainedModel), CliError> {
        let p = self.dir.require(MODEL, "train")?;
        let m = load_model(&p)?;
        Ok((p, m))
    }

    fn table(&self, name: &str) -> Result<(PathBuf, FeatureTable), CliError> {
        let p = self.dir.require(name, "datasets")?;
        let t = read_table(&p)?;
        if t.a != self.cfg.a {
            return Err(CliError::contract(format!(
                "{} was built with a = {}, but this run uses a = {}",
                p.display(),
                t.a,
                self.cfg.a
            )));
        }
        Ok((p, t))
    }
}

pub fn ingest(ctx: &Ctx) -> Result<(), CliError> {
    let input = ctx
        .cfg
        .input
        .clone()
        .ok_or_else(|| CliError::contract("ingest needs --input <events.csv>"))?;
    let parsed = parse_spadl_csv(&input)?;
    if parsed.games.is_empty() {
        return Err(CliError::contract(format!("{}: no valid actions", input.display())));
    }
    write_spadl_csv(ctx.dir.path(EVENTS), &parsed.games)?;
    ctx.dir.write(INGEST_REPORT, &format!("{}\n", parsed.diagnostics))?;
    println!("ingest: {} games, {}", parsed.games.len(), parsed.diagnostics);
    ctx.dir.manifest("ingest", &ctx.cfg, &[input], &[EVENTS, INGEST_REPORT])
}

pub fn synth(ctx: &Ctx) -> Result<(), CliError> {
    let league = generate_with_config(ctx.cfg.synth_games, ctx.cfg.seed, &SynthConfig::default())?;
    write_spadl_csv(ctx.dir.path(EVENTS), &league.games)?;
    let mut positions = String::from("player_id,position\n");
    let mut values = String::from("player_id,player_name,market_value_millions\n");
    for p in &league.players {
        writeln!(positions, "{},{}", p.player_id, p.role.position_label()).unwrap();
        writeln!(values, "{},{},{}", p.player_id, p.name, p.market_value_millions).unwrap();
    }
    let mut matches = String::from("player_id,goals_conceded,appearances\n");
    for (id, gc, apps) in league.match_records() {
        writeln!(matches, "{id},{gc},{apps}").unwrap();
    }
    ctx.dir.write(POSITIONS, &positions)?;
    ctx.dir.write(MARKET_VALUES, &values)?;
    ctx.dir.write(MATCHES, &matches)?;
    let n_actions: usize = league.games.iter().map(GameStream::len).sum();
    println!("synth: {} games, {} actions, {} players", league.games.len(), n_actions, league.players.len());
    ctx.dir.manifest("synth", &ctx.cfg, &[], &[EVENTS, POSITIONS, MARKET_VALUES, MATCHES])
}

pub fn xt(ctx: &Ctx) -> Result<(), CliError> {
    let (events, games) = ctx.events()?;
    let model = fit_grid(&games)?;
    let surface = solve_xt(&model, ctx.cfg.xt_tol, ctx.cfg.xt_max_iter)?;
    write_surface(&ctx.dir.path(XT_SURFACE), &surface, &corpus_fingerprint(&games))?;
    if surface.converged {
        println!(
            "xt: converged in {} iterations (residual {:e})",
            surface.iterations_used, surface.final_residual
        );
    } else {
        eprintln!(
            "warning: xT did not converge within {} iterations (last change {:e})",
            surface.iterations_used, surface.final_residual
        );
    }
    ctx.dir.manifest("xt", &ctx.cfg, &[events], &[XT_SURFACE, XT_META])
}

pub fn datasets(ctx: &Ctx) -> Result<(), CliError> {
    let (events, games) = ctx.events()?;
    let (surface_path, surface, _) = ctx.surface()?;
    let training = build_training_set(&games, &surface, ctx.cfg.a)?;
    let da = build_da_sets(&games, &surface, ctx.cfg.a)?;
    write_table(&ctx.dir.path(TRAINING), &training)?;
    write_table(&ctx.dir.path(INTERCEPTIONS), &da.interceptions)?;
    write_table(&ctx.dir.path(TACKLES), &da.tackles)?;
    println!(
        "datasets: a = {}, {} training rows, {} interceptions, {} tackles",
        ctx.cfg.a,
        training.len(),
        da.interceptions.len(),
        da.tackles.len()
    );
    ctx.dir
        .manifest("datasets", &ctx.cfg, &[events, surface_path], &[TRAINING, INTERCEPTIONS, TACKLES])
}

pub fn train(ctx: &Ctx) -> Result<(), CliError> {
    let (table_path, table) = ctx.table(TRAINING)?;
    let (surface_path, _, fingerprint) = ctx.surface()?;
    let model = fit_model(&table, &ctx.cfg.train_config(), &fingerprint)?;
    save_model(&model, ctx.dir.path(MODEL))?;
    let mut history = String::from("epoch,train_mae,val_mae\n");
    for h in &model.history {
        writeln!(history, "{},{},{}", h.epoch, h.train_mae, h.val_mae).unwrap();
    }
    ctx.dir.write(HISTORY, &history)?;
    let last = model.final_stats().expect("at least one epoch");
    println!(
        "train: {} rows ({} validation), val MAE {:.6} vs zero baseline {:.6}",
        model.train_rows + model.val_rows,
        model.val_rows,
        last.val_mae,
        model.zero_baseline_mae
    );
    ctx.dir.manifest("train", &ctx.cfg, &[table_path, surface_path], &[MODEL, HISTORY])
}

fn leaderboard_name(kind: DefensiveKind, view: &str) -> String {
    format!("{}s_{view}.csv", kind.name())
}

pub fn value(ctx: &Ctx) -> Result<(), CliError> {
    let (model_path, model) = ctx.model()?;
    let (events, games) = ctx.events()?;
    let (surface_path, _, fingerprint) = ctx.surface()?;
    if model.corpus_fingerprint != fingerprint {
        return Err(CliError::contract(format!(
            "{} was trained on corpus {}, but the xT surface belongs to corpus {}",
            model_path.display(),
            model.corpus_fingerprint,
            fingerprint
        )));
    }
    let mut inputs = vec![model_path, events, surface_path];
    let mut valued: Vec<ValuedAction> = Vec::new();
    for (kind, name) in [(DefensiveKind::Interception, INTERCEPTIONS), (DefensiveKind::Tackle, TACKLES)] {
        let (p, mut table) = ctx.table(name)?;
        table.attach_locations(&games);
        valued.extend(value_defensive_actions(&model, &table, kind)?);
        inputs.push(p);
    }
    write_valued_actions(&ctx.dir.path(VALUED), &valued)?;
    let agg = aggregate_players(&valued, ctx.cfg.min_interceptions, ctx.cfg.min_tackles);
    write_player_stats(&ctx.dir.path(PLAYER_STATS), &agg)?;
    let mut outputs = vec![VALUED.to_owned(), PLAYER_STATS.to_owned()];
    for kind in [DefensiveKind::Interception, DefensiveKind::Tackle] {
        for (view, rows) in [("total", agg.totals_view(kind)), ("avg", agg.averages_view(kind))] {
            let name = leaderboard_name(kind, view);
            write_leaderboard(&ctx.dir.path(&name), &rows)?;
            outputs.push(name);
        }
    }
    println!("value: {} defensive actions valued for {} players", valued.len(), agg.players.len());
    let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    ctx.dir.manifest("value", &ctx.cfg, &inputs, &outputs)
}

fn ranking_name(p: Position) -> String {
    format!("ranking_{}.csv", p.name())
}

pub fn score(ctx: &Ctx) -> Result<(), CliError> {
    let valued_path = ctx.dir.require(VALUED, "value")?;
    let valued = read_valued_actions(&valued_path)?;
    let (events, games) = ctx.events()?;
    let (surface_path, surface, _) = ctx.surface()?;
    let mut inputs = vec![valued_path, events, surface_path];

    let agg = aggregate_players(&valued, ctx.cfg.min_interceptions, ctx.cfg.min_tackles);
    let pool = raw_features(&agg, &compute_cxt_pxt(&games, &surface)?);
    let positions = match ctx.dir.side_input(&ctx.cfg.positions, POSITIONS)? {
        Some(p) => {
            let map = read_positions(&p)?;
            inputs.push(p);
            map
        }
        None => {
            eprintln!("warning: no positions file; every player is scored in the `other` group");
            HashMap::new()
        }
    };
    let matches = match ctx.dir.side_input(&ctx.cfg.matches, MATCHES)? {
        Some(p) => {
            let m = read_matches(&p)?;
            inputs.push(p);
            Some(m)
        }
        None => None,
    };
    let scores = score_players(&pool, &positions, matches.as_ref(), ctx.cfg.min_appearances, &ctx.cfg.weights)?;
    write_scores(&ctx.dir.path(SCORES), &scores)?;
    let mut outputs = vec![SCORES.to_owned()];
    for p in Position::ALL {
        let name = ranking_name(p);
        write_ranking(&ctx.dir.path(&name), &rank(&scores, Some(p)), matches.as_ref())?;
        outputs.push(name);
    }

    if let Some(p) = ctx.dir.side_input(&ctx.cfg.market_values, MARKET_VALUES)? {
        let values = read_market_values(&p)?;
        inputs.push(p);
        let defenders: Vec<DefenderScore> =
            scores.iter().filter(|s| s.position != Position::Other).cloned().collect();
        let overlap = |pool: &[DefenderScore]| pool.iter().filter(|s| values.contains_key(&s.player_id)).count();
        let (label, pool) = if overlap(&defenders) >= 3 { ("defenders", &defenders) } else { ("all", &scores) };
        let (r, pairs) = correlate_market_value(pool, &values)?;
        let mut report = String::from("name,statistic,p_value,n\n");
        writeln!(report, "{}", r.line("pearson_score_market_value")).unwrap();
        writeln!(report, "pool,{label},,{}", pool.len()).unwrap();
        ctx.dir.write(MARKET_REPORT, &report)?;
        let mut csv = String::from("player_id,score,market_value_millions\n");
        let ids: Vec<&PlayerId> = pool.iter().filter(|s| values.contains_key(&s.player_id)).map(|s| &s.player_id).collect();
        for (id, (s, v)) in ids.iter().zip(&pairs) {
            writeln!(csv, "{id},{s},{v}").unwrap();
        }
        ctx.dir.write(MARKET_PAIRS, &csv)?;
        outputs.push(MARKET_REPORT.to_owned());
        outputs.push(MARKET_PAIRS.to_owned());
        println!("score: {} players scored; r = {:.4} (p = {:.3e}) with market value", scores.len(), r.statistic, r.p_value);
    } else {
        println!("score: {} players scored", scores.len());
    }
    let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    ctx.dir.manifest("score", &ctx.cfg, &inputs, &outputs)
}

pub fn validate(ctx: &Ctx) -> Result<(), CliError> {
    let (model_path, model) = ctx.model()?;
    let (table_path, table) = ctx.table(TRAINING)?;
    let (_, val_idx) = split_indices(table.len(), model.config.split, model.config.seed)?;
    let mut preds = Vec::with_capacity(val_idx.len());
    let mut actual = Vec::with_capacity(val_idx.len());
    for &i in &val_idx {
        let row = &table.rows[i];
        preds.push(model.predict(&row.features)?);
        actual.push(row.target.ok_or_else(|| CliError::contract(format!("training row {i} has no target")))?);
    }
    let residuals: Vec<f64> = actual.iter().zip(&preds).map(|(a, p)| a - p).collect();
    let n = val_idx.len();
    let zeros = vec![0.0; n];
    let mut text = String::from("name,statistic,p_value,n\n");
    writeln!(text, "mae,{},,{n}", mae(&preds, &actual)?).unwrap();
    writeln!(text, "zero_baseline_mae,{},,{n}", mae(&zeros, &actual)?).unwrap();
    writeln!(text, "{}", levene_median(&preds, &actual)?.line("levene_median")).unwrap();
    writeln!(text, "{}", ks_two_sample(&preds, &actual)?.line("ks_two_sample")).unwrap();
    writeln!(text, "{}", pearson(&preds, &actual)?.line("pearson")).unwrap();
    writeln!(text, "residuals_within_0.05,{},,{n}", fraction_within(&residuals, 0.05)?).unwrap();
    ctx.dir.write(VALIDATION, &text)?;
    write_qq_csv(&ctx.dir.path(QQ), &qq_data(&residuals)?)?;
    print!("validate:\n{text}");
    ctx.dir.manifest("validate", &ctx.cfg, &[model_path, table_path], &[VALIDATION, QQ])
}

/// The player with the most actions of `kind`, ties broken by id.
fn busiest(valued: &[ValuedAction], kind: DefensiveKind) -> Option<PlayerId> {
    let mut counts: HashMap<&PlayerId, usize> = HashMap::new();
    for v in valued.iter().filter(|v| v.kind == kind) {
        *counts.entry(&v.player_id).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(p, _)| p.clone())
}

pub fn render(ctx: &Ctx) -> Result<(), CliError> {
    let valued_path = ctx.dir.require(VALUED, "value")?;
    let valued = read_valued_actions(&valued_path)?;
    let mut inputs = vec![valued_path];
    let mut outputs: Vec<String> = Vec::new();
    for kind in [DefensiveKind::Interception, DefensiveKind::Tackle] {
        let name = format!("pitch_{}s.svg", kind.name());
        let of_kind: Vec<&ValuedAction> = valued.iter().filter(|v| v.kind == kind).collect();
        let (markers, title) = match busiest(&valued, kind) {
            Some(player) => {
                let population: Vec<f64> = of_kind.iter().map(|v| v.daxt).collect();
                let mine: Vec<&ValuedAction> = of_kind
                    .iter()
                    .copied()
                    .filter(|v| v.player_id == player && v.location.0.is_finite() && v.location.1.is_finite())
                    .collect();
                let bins = assign_bins(&population, &mine.iter().map(|v| v.daxt).collect::<Vec<_>>())?;
                let markers: Vec<PitchMarker> = mine
                    .iter()
                    .zip(bins)
                    .map(|(v, bin)| PitchMarker { x: v.location.0, y: v.location.1, bin })
                    .collect();
                (markers, format!("{}s committed by {player}", capitalized(kind.name())))
            }
            None => (Vec::new(), format!("No {}s", kind.name())),
        };
        write_svg(&ctx.dir.path(&name), &pitch_scatter_svg(&markers, &title))?;
        outputs.push(name);
    }
    let pairs_path = ctx.dir.path(MARKET_PAIRS);
    if pairs_path.is_file() {
        let text = std::fs::read_to_string(&pairs_path).map_err(|e| CliError::io(&pairs_path, e))?;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| CliError::contract(format!("{}:{}: bad number", pairs_path.display(), n + 1)))
            };
            if cols.len() != 3 {
                return Err(CliError::contract(format!("{}:{}: expected 3 columns", pairs_path.display(), n + 1)));
            }
            x.push(parse(cols[1])?);
            y.push(parse(cols[2])?);
        }
        let svg = scatter_regression_svg(&x, &y, "Defender score against market value")?;
        write_svg(&ctx.dir.path("market_value.svg"), &svg)?;
        inputs.push(pairs_path);
        outputs.push("market_value.svg".into());
    }
    println!("render: {}", outputs.join(", "));
    let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    ctx.dir.manifest("render", &ctx.cfg, &inputs, &outputs)
}

fn capitalized(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

pub fn sweep_a(ctx: &Ctx) -> Result<(), CliError> {
    let (events, games) = ctx.events()?;
    let (surface_path, surface, fingerprint) = ctx.surface()?;
    let mut csv = String::from("a,train_mae,val_mae,zero_baseline_mae,training_rows,interception_rows,tackle_rows\n");
    for a in 1..=3 {
        let training = build_training_set(&games, &surface, a)?;
        let da = build_da_sets(&games, &surface, a)?;
        let model = fit_model(&training, &ctx.cfg.train_config(), &fingerprint)?;
        let last = model.final_stats().expect("at least one epoch");
        writeln!(
            csv,
            "{a},{},{},{},{},{},{}",
            last.train_mae,
            last.val_mae,
            model.zero_baseline_mae,
            training.len(),
            da.interceptions.len(),
            da.tackles.len()
        )
        .unwrap();
    }
    ctx.dir.write(SWEEP, &csv)?;
    print!("sweep-a:\n{csv}");
    ctx.dir.manifest("sweep-a", &ctx.cfg, &[events, surface_path], &[SWEEP])
}

pub fn run_all(ctx: &Ctx) -> Result<(), CliError> {
    if ctx.cfg.input.is_some() {
        ingest(ctx)?;
    } else {
        synth(ctx)?;
    }
    xt(ctx)?;
    datasets(ctx)?;
    train(ctx)?;
    value(ctx)?;
    score(ctx)?;
    validate(ctx)?;
    render(ctx)
}
