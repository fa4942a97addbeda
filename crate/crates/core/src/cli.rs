//! The `v2i` command-line front end.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::array_channel::RoadGeometry;
use crate::codebook::{build_multiresolution, DesignParams};
use crate::error::{validation, Error, Result};
use crate::harness::{
    bundled_scenario, run_experiment, run_trial, summary_csv, ExperimentResult, RunOptions, Scenario, TrialContext,
    BUNDLED_SCENARIOS, CSV_HEADER,
};

#[derive(Debug, Parser)]
#[command(
    name = "v2i",
    version,
    about = "Vehicle tracking and beam codebook tools for mmWave V2I links",
    after_help = "Exit codes: 0 success, 2 invalid input, 3 numerical failure. Errors are printed to stderr as one JSON line.\nV2I_THREADS caps the number of worker threads."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Design a road-aware beam codebook and write it as JSON
    DesignCodebook(DesignArgs),
    /// Run a Monte-Carlo scenario and write per-step and summary results
    Simulate(SimulateArgs),
    /// Print a single-trial tracking trace as CSV
    TrackDemo(TrackDemoArgs),
    /// Tabulate one or more summary CSV files
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// Number of RSU antennas
    #[arg(long, default_value_t = 64)]
    pub antennas: usize,
    /// Number of RF chains
    #[arg(long, default_value_t = 4)]
    pub rf_chains: usize,
    /// Codewords per resolution; repeat for a multiresolution codebook
    #[arg(long = "codewords", required = true)]
    pub codewords: Vec<usize>,
    /// Lateral lane offset from the RSU (m)
    #[arg(long, default_value_t = 8.5)]
    pub lane_offset: f64,
    /// RSU antenna height (m)
    #[arg(long, default_value_t = 7.5)]
    pub rsu_height: f64,
    /// Half-length of the served road segment (m)
    #[arg(long, default_value_t = 75.0)]
    pub range: f64,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output JSON file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Svg,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON file or bundled scenario name
    pub scenario: String,
    /// Override the trial count
    #[arg(long)]
    pub trials: Option<usize>,
    /// Override the master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Outputs to write besides the summary (repeatable); a transmit-power sweep writes one CSV per power
    #[arg(long, value_enum, default_values_t = [OutputFormat::Csv])]
    pub format: Vec<OutputFormat>,
    /// Directory for the output files
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrackDemoArgs {
    /// Scenario JSON file or bundled scenario name
    #[arg(long, default_value = "track-demo")]
    pub scenario: String,
    /// Override the master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trial index within the seed
    #[arg(long, default_value_t = 0)]
    pub trial: usize,
    /// Transmit power (dBm)
    #[arg(long)]
    pub tx_power: Option<f64>,
    /// Override the number of steps
    #[arg(long)]
    pub steps: Option<usize>,
    /// Write the trace here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Summary CSV files written by `simulate`
    #[arg(required = true)]
    pub summaries: Vec<PathBuf>,
}

/// Resolve a scenario argument: an existing file first, then a bundled name.
pub fn resolve_scenario(arg: &str) -> Result<Scenario> {
    let path = Path::new(arg);
    if path.is_file() {
        return Scenario::load(path);
    }
    if BUNDLED_SCENARIOS.iter().any(|(n, _)| *n == arg) {
        return bundled_scenario(arg);
    }
    Err(validation(format!("no scenario file or bundled scenario named '{arg}'")))
}

fn design(args: &DesignArgs, out: &mut dyn Write) -> Result<()> {
    let geometry = RoadGeometry {
        rsu_height_m: args.rsu_height,
        lane_offset_m: args.lane_offset,
        range_lb_m: -args.range,
        range_ub_m: args.range,
    };
    let params = DesignParams::new(args.antennas, args.rf_chains, args.lane_offset, args.seed);
    let cb = build_multiresolution(&geometry, &params, &args.codewords)?;
    let checks = cb.check_patterns();
    let target = 2.0 * std::f64::consts::PI / args.antennas as f64;
    let worst_integral = checks.iter().map(|c| ((c.integral - target) / target).abs()).fold(0.0, f64::max);
    let max_peak = checks.iter().map(|c| c.peak).fold(0.0, f64::max);
    let failed = checks.iter().filter(|c| !c.ok).count();
    cb.save(&args.out)?;
    writeln!(out, "codewords={} antennas={} rf_chains={} out={}", cb.len(), cb.m, cb.n, args.out.display())?;
    writeln!(out, "parseval: max_rel_error={worst_integral:.3e} max_peak={max_peak:.6} failed={failed}")?;
    if failed > 0 {
        return Err(Error::Numerical(format!("{failed} codeword patterns failed the Parseval check")));
    }
    Ok(())
}

fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let scenario = resolve_scenario(&args.scenario)?;
    let keep_csv = args.format.contains(&OutputFormat::Csv);
    let results = run_experiment(&scenario, &RunOptions { trials: args.trials, seed: args.seed, keep_csv })?;
    std::fs::create_dir_all(&args.out_dir)?;
    let name = &scenario.name;
    if keep_csv {
        let sweep = results.len() > 1;
        for r in &results {
            let file =
                if sweep { format!("{name}_tx{}dBm.csv", r.summary.tx_power_dbm) } else { format!("{name}.csv") };
            let path = args.out_dir.join(file);
            std::fs::write(&path, r.csv.as_deref().unwrap_or(CSV_HEADER))?;
            writeln!(out, "wrote {}", path.display())?;
        }
    }
    if args.format.contains(&OutputFormat::Svg) {
        let path = args.out_dir.join(format!("{name}.svg"));
        std::fs::write(&path, svg_report(&scenario, &results))?;
        writeln!(out, "wrote {}", path.display())?;
    }
    let summary = summary_csv(&results);
    let path = args.out_dir.join(format!("{name}-summary.csv"));
    std::fs::write(&path, &summary)?;
    writeln!(out, "wrote {}", path.display())?;
    out.write_all(summary.as_bytes())?;
    Ok(())
}

fn track_demo(args: &TrackDemoArgs, out: &mut dyn Write) -> Result<()> {
    let mut scenario = resolve_scenario(&args.scenario)?;
    if let Some(s) = args.seed {
        scenario.seed = s;
    }
    if let Some(n) = args.steps {
        scenario.horizon = n;
    }
    scenario.trials = scenario.trials.max(args.trial + 1);
    scenario.validate()?;
    let tx = args.tx_power.unwrap_or(scenario.array.tx_power_dbm);
    let codebook = scenario.codebook()?.map(std::sync::Arc::new);
    let ctx = TrialContext::new(&scenario, tx, codebook)?;
    let records = run_trial(&ctx, args.trial)?;
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for r in &records {
        r.csv_line(&mut text);
    }
    match &args.out {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn report(args: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    let mut rows: Vec<[String; 3]> = Vec::new();
    for path in &args.summaries {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        if lines.next() != Some("metric,scenario,value") {
            return Err(validation(format!("{} is not a summary CSV", path.display())));
        }
        for line in lines.filter(|l| !l.is_empty()) {
            let parts: Vec<&str> = line.splitn(3, ',').collect();
            if parts.len() != 3 || parts[2].parse::<f64>().is_err() {
                return Err(validation(format!("malformed summary row '{line}' in {}", path.display())));
            }
            rows.push([parts[1].to_string(), parts[0].to_string(), parts[2].to_string()]);
        }
    }
    let header = ["scenario".to_string(), "metric".to_string(), "value".to_string()];
    let widths: Vec<usize> =
        (0..3).map(|i| rows.iter().chain([&header]).map(|r| r[i].len()).max().unwrap_or(0)).collect();
    for r in std::iter::once(&header).chain(rows.iter()) {
        writeln!(out, "{:<w0$}  {:<w1$}  {:>w2$}", r[0], r[1], r[2], w0 = widths[0], w1 = widths[1], w2 = widths[2])?;
    }
    Ok(())
}

/// Line plot of the per-step series: gains when beams were chosen, NMSE_x otherwise.
pub fn svg_report(scenario: &Scenario, results: &[ExperimentResult]) -> String {
    let beams = results.iter().any(|r| r.summary.mean_gain.is_some());
    let (label, log) = if beams { ("normalized gain", false) } else { ("NMSE x (log10)", true) };
    let series: Vec<(String, Vec<f64>)> = results
        .iter()
        .map(|r| {
            let s = if beams { &r.summary.gain_series } else { &r.summary.nmse_x_series };
            let v = s.iter().map(|&x| if log { x.log10() } else { x }).collect();
            (format!("{} dBm", r.summary.tx_power_dbm), v)
        })
        .collect();
    svg_lines(&scenario.name, label, scenario.motion.ts_s, &series)
}

fn svg_lines(title: &str, ylabel: &str, ts: f64, series: &[(String, Vec<f64>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let finite = series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|x| x.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0) };
    let n = series.iter().map(|(_, v)| v.len()).max().unwrap_or(1).max(2);
    let px = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (n - 1) as f64;
    let py = |y: f64| H - PAD - (H - 2.0 * PAD) * (y - lo) / (hi - lo);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let _ = writeln!(s, r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black"/>"#, H - PAD, W - PAD);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">time (s), 0 to {:.2}</text>"#,
        W / 2.0,
        H - 15.0,
        n as f64 * ts
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" font-size="12" transform="rotate(-90 15 {})" text-anchor="middle">{ylabel}</text>"#,
        H / 2.0,
        H / 2.0
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{hi:.3}</text>"#, PAD - 4.0, PAD + 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{lo:.3}</text>"#, PAD - 4.0, H - PAD);
    for (k, (name, v)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut d = String::new();
        let mut pen_down = false;
        for (i, &y) in v.iter().enumerate() {
            if !y.is_finite() {
                pen_down = false;
                continue;
            }
            let _ = write!(d, "{}{:.2} {:.2} ", if pen_down { "L" } else { "M" }, px(i), py(y));
            pen_down = true;
        }
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.2"/>"#, d.trim_end());
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{name}</text>"#,
            W - PAD - 80.0,
            PAD + 14.0 * (k + 1) as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

/// Parse `args` (including the program name), run the command and return the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let msg = e.render().to_string();
                    let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
                    let _ = writeln!(err, "{}", error_json("usage", &first));
                    2
                }
            };
        }
    };
    let result = match &cli.command {
        Command::DesignCodebook(a) => design(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::TrackDemo(a) => track_demo(a, out),
        Command::Report(a) => report(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", error_json(e.kind(), &e.to_string()));
            e.exit_code()
        }
    }
}
