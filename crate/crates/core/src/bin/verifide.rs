use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use verifide_core::cache::ResultCache;
use verifide_core::orchestrator::Config;
use verifide_core::prover::Bounds;
use verifide_core::replay::{run_session, RunOptions, SessionScript};
use verifide_core::service;

#[derive(Parser)]
#[command(name = "verifide", version, about = "Incremental MiniSpec verifier")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay an edit-session script and print a JSON report.
    Replay(ReplayArgs),
    /// Serve the editor protocol.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ReplayArgs {
    script: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    debounce_ms: Option<u64>,
    #[arg(long)]
    timeout_ms: Option<u64>,
    /// intLow,intHigh,maxArrayLen
    #[arg(long, value_parser = parse_bounds)]
    bounds: Option<Bounds>,
    /// Persistent cache, loaded before and saved after the replay.
    #[arg(long)]
    cache_file: Option<PathBuf>,
    #[arg(long)]
    no_cache: bool,
    /// Use real sleeps and wall time instead of the virtual clock.
    #[arg(long)]
    real_time: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, conflicts_with = "port")]
    stdio: bool,
    #[arg(long, default_value_t = service::DEFAULT_PORT)]
    port: u16,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    timeout_ms: Option<u64>,
}

fn parse_bounds(s: &str) -> Result<Bounds, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [lo, hi, len] = parts[..] else {
        return Err("expected lo,hi,len".into());
    };
    let b = Bounds {
        int_low: lo.parse().map_err(|e| format!("lo: {e}"))?,
        int_high: hi.parse().map_err(|e| format!("hi: {e}"))?,
        max_array_len: len.parse().map_err(|e| format!("len: {e}"))?,
        ..Bounds::default()
    };
    b.validate()?;
    Ok(b)
}

fn replay(a: ReplayArgs) -> Result<ExitCode, String> {
    let script = SessionScript::load(&a.script).map_err(|e| e.to_string())?;
    let mut config = Config::default();
    script.config.apply(&mut config);
    if let Some(w) = a.workers {
        config.max_workers = w;
    }
    if let Some(d) = a.debounce_ms {
        config.debounce_ms = d;
    }
    if let Some(t) = a.timeout_ms {
        config.timeout_ms = t;
    }
    if let Some(b) = a.bounds {
        config.bounds = b;
    }
    if a.no_cache {
        config.use_cache = false;
    }
    config.validate()?;
    let cache = match (&a.cache_file, config.use_cache) {
        (Some(p), true) => ResultCache::load(p, config.cache_capacity).map_err(|e| format!("{}: {e}", p.display()))?,
        _ => ResultCache::new(config.cache_capacity),
    };
    let cache = Arc::new(cache);
    let opts = RunOptions {
        real_time: a.real_time,
        cache: Some(cache.clone()),
    };
    let report = run_session(&script, &config, &opts);
    if let (Some(p), true) = (&a.cache_file, config.use_cache) {
        cache.save(p).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
    match &a.out {
        Some(p) => std::fs::write(p, json + "\n").map_err(|e| format!("{}: {e}", p.display()))?,
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{json}") {
                // A closed pipe (`| head`) is not an error worth reporting.
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.to_string()),
                _ => {}
            }
        }
    }
    Ok(if report.has_resolution_errors() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn serve(a: ServeArgs) -> Result<ExitCode, String> {
    let mut config = Config::default();
    if let Some(w) = a.workers {
        config.max_workers = w;
    }
    if let Some(t) = a.timeout_ms {
        config.timeout_ms = t;
    }
    config.validate()?;
    let cache = Arc::new(ResultCache::new(config.cache_capacity));
    let r = if a.stdio {
        service::serve_stdio(config, cache)
    } else {
        let listener = TcpListener::bind(("127.0.0.1", a.port)).map_err(|e| format!("port {}: {e}", a.port))?;
        eprintln!("listening on {}", listener.local_addr().map_err(|e| e.to_string())?);
        service::serve_tcp(listener, config, cache)
    };
    r.map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // Exit code 2 means resolution errors, so usage errors exit with 1.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::from(e.use_stderr()));
        }
    };
    let r = match cli.cmd {
        Cmd::Replay(a) => replay(a),
        Cmd::Serve(a) => serve(a),
    };
    r.unwrap_or_else(|e| {
        eprintln!("verifide: {e}");
        ExitCode::from(1)
    })
}
