use std::fs;
use std::path::{Path, PathBuf};

use tore_core::baselines::{event_count, event_frame, sae_with_sentinel, voxel_grid, WindowSpec};
use tore_core::bench::{run_bench, BenchOptions, THROUGHPUT_TARGET};
use tore_core::io::{
    read_events_binary_with_policy, read_events_csv, write_events_binary, write_events_csv, write_tensor, Dtype,
};
use tore_core::render::{check_sorted, render_unclamped};
use tore_core::simulator::{simulate, IntensitySignal, NoiseConfig, SignalField, SignalKind, SimConfig, Step};
use tore_core::verify::{run_verification, VerifyOptions};
use tore_core::{
    extract_patches, render_volume, EventStream, PolarityConvention, SensorGeometry, SensorState, TimestampPolicy,
    ToreConfig,
};

use crate::manifest::{ensure_writable, sidecar_for, RunManifest};
use crate::{
    BaselineArgs, BenchArgs, Cli, CliError, Command, CsvPolarity, DtypeArg, InputArgs, PatchArgs, Policy, RenderArgs,
    Representation, SimulateArgs, ToreArgs, VerifyArgs,
};

pub fn dispatch(cli: Cli, args: &[String]) -> Result<(), CliError> {
    let force = cli.force;
    match cli.command {
        Command::Simulate(a) => simulate_cmd(a, args, force),
        Command::Render(a) => render_cmd(a, args, force),
        Command::Patch(a) => patch_cmd(a, args, force),
        Command::Baseline(a) => baseline_cmd(a, args, force),
        Command::Bench(a) => bench_cmd(a, args, force),
        Command::Verify(a) => verify_cmd(a, args, force),
        Command::Rerun { manifest } => {
            let m = RunManifest::read(&manifest)?;
            let mut again = m.args.clone();
            again.push("--force".into());
            crate::run(again)
        }
    }
}

fn parse_geometry(s: &str) -> Result<SensorGeometry, CliError> {
    Ok(s.parse()?)
}

fn dtype(d: DtypeArg) -> Dtype {
    match d {
        DtypeArg::F64 => Dtype::F64,
        DtypeArg::F32 => Dtype::F32,
    }
}

fn policy(p: Policy) -> TimestampPolicy {
    match p {
        Policy::Reject => TimestampPolicy::Reject,
        Policy::Clamp => TimestampPolicy::Clamp,
    }
}

fn load_events(input: &InputArgs) -> Result<EventStream, CliError> {
    let policy = policy(input.policy);
    let is_csv = input.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let convention = match input.csv_polarity {
            CsvPolarity::Binary => PolarityConvention::Binary,
            CsvPolarity::Signed => PolarityConvention::Signed,
        };
        let geometry = input.size.as_deref().map(parse_geometry).transpose()?;
        Ok(read_events_csv(&input.input, convention, geometry, policy)?)
    } else {
        Ok(read_events_binary_with_policy(&input.input, policy)?)
    }
}

fn record_input(m: &mut RunManifest, input: &InputArgs, stream: &EventStream) {
    m.set("input", input.input.display())
        .set("policy", format!("{:?}", input.policy).to_lowercase())
        .set("csv_polarity", format!("{:?}", input.csv_polarity).to_lowercase())
        .set("geometry", stream.geometry())
        .set("events", stream.len());
}

fn tore_config(depth: usize, tore: &ToreArgs) -> Result<ToreConfig, CliError> {
    let cfg = ToreConfig {
        depth,
        tau_us: tore.tau_us,
        tau_prime_us: tore.tau_prime_us,
        policy: TimestampPolicy::Reject,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn record_config(m: &mut RunManifest, cfg: &ToreConfig) {
    m.set("k", cfg.depth)
        .set("tau_us", cfg.tau_us)
        .set("tau_prime_us", cfg.tau_prime_us);
}

fn prepare_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() && !force && fs::read_dir(dir)?.next().is_some() {
        return Err(CliError::Usage(format!(
            "{} is not empty; pass --force to overwrite",
            dir.display()
        )));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn parse_pair(s: &str, what: &str) -> Result<(u64, u64), CliError> {
    let bad = || CliError::Usage(format!("{what} `{s}` is not START:END"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

fn simulate_cmd(a: SimulateArgs, args: &[String], force: bool) -> Result<(), CliError> {
    let signal = match a.signal.as_str() {
        "constant" => IntensitySignal::constant(a.offset),
        other => match other.parse::<SignalKind>()? {
            SignalKind::LinearRamp => IntensitySignal::LinearRamp {
                offset: a.offset,
                slope: a.slope,
            },
            SignalKind::Sinusoid => IntensitySignal::Sinusoid {
                offset: a.offset,
                amplitude: a.amplitude,
                period_us: a.period_us,
                phase: a.phase,
            },
            SignalKind::StepTrain => {
                let spec = a
                    .steps
                    .as_deref()
                    .ok_or_else(|| CliError::Usage("--signal steps needs --steps t:h,...".into()))?;
                IntensitySignal::step_train(a.offset, parse_steps(spec)?)
            }
        },
    };
    let geometry = parse_geometry(&a.size)?;
    let t_end = a
        .t_start_us
        .checked_add(a.dur_us)
        .ok_or_else(|| CliError::Usage("start + duration overflows".into()))?;
    let config = SimConfig {
        epsilon: a.eps,
        t_start: a.t_start_us,
        t_end,
        geometry,
        tick_us: a.tick_us,
        noise: (a.noise_events > 0).then_some(NoiseConfig {
            events: a.noise_events,
            seed: a.seed,
        }),
    };
    config.validate()?;

    let sidecar = sidecar_for(&a.output);
    ensure_writable(&a.output, force)?;
    ensure_writable(&sidecar, force)?;
    let stream = simulate(&SignalField::Uniform(signal.clone()), &config)?;
    if a.output.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        write_events_csv(&stream, &a.output, PolarityConvention::Binary)?;
    } else {
        write_events_binary(&stream, &a.output)?;
    }

    let mut m = RunManifest::new("simulate", args);
    m.set("signal", format!("{signal:?}"))
        .set("eps", a.eps)
        .set("t_start_us", a.t_start_us)
        .set("t_end_us", t_end)
        .set("tick_us", a.tick_us)
        .set("geometry", geometry)
        .set("noise_events", a.noise_events)
        .set("seed", a.seed)
        .set("output", a.output.display())
        .set("events", stream.len());
    m.write(&sidecar, force)?;
    println!("wrote {} events to {}", stream.len(), a.output.display());
    Ok(())
}

fn parse_steps(spec: &str) -> Result<Vec<Step>, CliError> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let bad = || CliError::Usage(format!("step `{item}` is not T_US:HEIGHT"));
            let (t, h) = item.split_once(':').ok_or_else(bad)?;
            Ok(Step {
                t: t.trim().parse().map_err(|_| bad())?,
                height: h.trim().parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Query grid `t0, t0 + 1/rate, ...` up to and including `t1`.
pub fn rate_grid(rate_hz: f64, t0: u64, t1: u64) -> Result<Vec<u64>, CliError> {
    if !rate_hz.is_finite() || rate_hz <= 0.0 {
        return Err(CliError::Usage(format!("rate must be positive, got {rate_hz}")));
    }
    if t1 < t0 {
        return Err(CliError::Usage(format!("span end {t1} before start {t0}")));
    }
    let period = 1e6 / rate_hz;
    let mut times = Vec::new();
    for i in 0u64.. {
        let t = t0 + (i as f64 * period).round() as u64;
        if t > t1 {
            break;
        }
        if times.last() != Some(&t) {
            times.push(t);
        }
    }
    Ok(times)
}

fn render_cmd(a: RenderArgs, args: &[String], force: bool) -> Result<(), CliError> {
    let times = match (&a.rate_hz, &a.span_us, a.at_us.is_empty()) {
        (None, None, false) => a.at_us.clone(),
        (Some(rate), Some(span), true) => {
            let (t0, t1) = parse_pair(span, "span")?;
            rate_grid(*rate, t0, t1)?
        }
        _ => {
            return Err(CliError::Usage(
                "give either --at-us (repeatable) or both --rate-hz and --span-us".into(),
            ))
        }
    };
    check_sorted(&times)?;
    let cfg = tore_config(a.k, &a.tore)?;
    let stream = load_events(&a.input)?;
    prepare_dir(&a.out_dir, force)?;

    // one pass over the stream, rendering at each query time
    let mut state = SensorState::new(stream.geometry(), cfg)?;
    let events = stream.events();
    let mut next = 0;
    let mut written = Vec::with_capacity(times.len());
    for &t in &times {
        let end = next + events[next..].partition_point(|e| e.t <= t);
        state.ingest_events(&events[next..end])?;
        next = end;
        let volume = if a.unclamped {
            render_unclamped(&state, t)?
        } else {
            render_volume(&state, t)?
        };
        let path = a.out_dir.join(format!("tore_t{t:012}us.tor"));
        write_tensor(&volume.into_tensor(), &path, dtype(a.dtype))?;
        written.push(path);
    }

    let mut m = RunManifest::new("render", args);
    record_input(&mut m, &a.input, &stream);
    record_config(&mut m, &cfg);
    m.set("unclamped", a.unclamped)
        .set("dtype", format!("{:?}", a.dtype).to_lowercase())
        .set(
            "query_times_us",
            times.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
        )
        .set("out_dir", a.out_dir.display());
    m.write(&a.out_dir.join("manifest.toml"), force)?;
    println!("wrote {} volumes to {}", written.len(), a.out_dir.display());
    Ok(())
}

fn patch_cmd(a: PatchArgs, args: &[String], force: bool) -> Result<(), CliError> {
    if a.m.is_multiple_of(2) {
        return Err(tore_core::Error::EvenPatchSize(a.m).into());
    }
    let cfg = tore_config(a.k, &a.tore)?;
    let mut indices = a.index.clone();
    if let Some(range) = &a.range {
        let (lo, hi) = parse_pair(range, "range")?;
        indices.extend(lo as usize..hi as usize);
    }
    if indices.is_empty() {
        return Err(CliError::Usage("select events with --index or --range".into()));
    }
    let stream = load_events(&a.input)?;
    let patches = extract_patches(&stream, cfg, a.m, &indices, !a.exclude_self)?;
    prepare_dir(&a.out_dir, force)?;
    for (index, patch) in &patches {
        let path = a.out_dir.join(format!("patch_e{index:010}.tor"));
        write_tensor(&patch.to_tensor(), &path, dtype(a.dtype))?;
    }

    let mut m = RunManifest::new("patch", args);
    record_input(&mut m, &a.input, &stream);
    record_config(&mut m, &cfg);
    m.set("m", a.m)
        .set("include_self", !a.exclude_self)
        .set("dtype", format!("{:?}", a.dtype).to_lowercase())
        .set(
            "indices",
            patches.iter().map(|(i, _)| i.to_string()).collect::<Vec<_>>().join(","),
        )
        .set("out_dir", a.out_dir.display());
    m.write(&a.out_dir.join("manifest.toml"), force)?;
    println!("wrote {} patches to {}", patches.len(), a.out_dir.display());
    Ok(())
}

fn mask_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().unwrap_or_default().to_string_lossy();
    output.with_file_name(format!("{stem}_mask.tor"))
}

fn baseline_cmd(a: BaselineArgs, args: &[String], force: bool) -> Result<(), CliError> {
    let window = || -> Result<WindowSpec, CliError> {
        let duration = a
            .window_us
            .ok_or_else(|| CliError::Usage("this representation needs --window-us".into()))?;
        Ok(WindowSpec::new(a.end_us, duration)?)
    };
    if a.representation == Representation::Voxel && a.bins < 2 {
        return Err(tore_core::Error::InvalidBinCount(a.bins).into());
    }
    if a.representation != Representation::Sae {
        window()?;
    }
    let sidecar = sidecar_for(&a.output);
    ensure_writable(&a.output, force)?;
    ensure_writable(&sidecar, force)?;
    let stream = load_events(&a.input)?;

    let mut m = RunManifest::new("baseline", args);
    record_input(&mut m, &a.input, &stream);
    let name = format!("{:?}", a.representation).to_lowercase();
    m.set("representation", &name).set("end_us", a.end_us);
    let tensor = match a.representation {
        Representation::Frame => event_frame(&stream, window()?),
        Representation::Count => event_count(&stream, window()?),
        Representation::Voxel => {
            m.set("bins", a.bins);
            voxel_grid(&stream, window()?, a.bins)?
        }
        Representation::Sae => {
            let surface = sae_with_sentinel(&stream, a.end_us, a.sentinel);
            let mask = mask_path(&a.output);
            ensure_writable(&mask, force)?;
            write_tensor(&surface.mask_tensor(), &mask, dtype(a.dtype))?;
            m.set("sentinel", a.sentinel).set("mask", mask.display());
            surface.to_tensor()
        }
    };
    if let Some(w) = a.window_us {
        m.set("window_us", w);
    }
    write_tensor(&tensor, &a.output, dtype(a.dtype))?;
    m.set("dtype", format!("{:?}", a.dtype).to_lowercase())
        .set("dims", format!("{:?}", tensor.dims()))
        .set("output", a.output.display());
    m.write(&sidecar, force)?;
    println!("wrote {name} {:?} to {}", tensor.dims(), a.output.display());
    Ok(())
}

fn bench_cmd(a: BenchArgs, args: &[String], force: bool) -> Result<(), CliError> {
    let opts = BenchOptions {
        geometry: parse_geometry(&a.size)?,
        events: a.events,
        reps: a.reps,
        ingest_depth: a.ingest_k,
        depth_sweep: a.k_sweep.clone(),
        seed: a.seed,
        window_us: a.window_us,
        bins: a.bins,
    };
    if opts.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    for &k in std::iter::once(&opts.ingest_depth).chain(&opts.depth_sweep) {
        ToreConfig::with_depth(k).validate()?;
    }
    let input = match &a.input {
        Some(path) => Some(read_events_binary_with_policy(path, TimestampPolicy::Reject)?),
        None => None,
    };
    if let Some(out) = &a.output {
        ensure_writable(out, force)?;
        ensure_writable(&sidecar_for(out), force)?;
    }
    let report = run_bench(&opts, input.as_ref())?;
    let csv = report.to_csv();
    match &a.output {
        Some(out) => {
            fs::write(out, &csv)?;
            let mut m = RunManifest::new("bench", args);
            m.set("geometry", opts.geometry)
                .set("events", input.as_ref().map_or(opts.events, EventStream::len))
                .set("reps", opts.reps)
                .set("ingest_k", opts.ingest_depth)
                .set("k_sweep", format!("{:?}", opts.depth_sweep))
                .set("seed", opts.seed)
                .set("output", out.display());
            m.write(&sidecar_for(out), force)?;
        }
        None => print!("{csv}"),
    }
    if let Some(rate) = report.ingest_rate() {
        if rate < THROUGHPUT_TARGET {
            eprintln!("performance flag: ingestion {rate:.3e} events/s is below {THROUGHPUT_TARGET:.0e}");
        }
    }
    Ok(())
}

fn verify_cmd(a: VerifyArgs, args: &[String], force: bool) -> Result<(), CliError> {
    let g = parse_geometry(&a.size)?;
    let opts = VerifyOptions {
        seed: a.seed,
        cases: a.cases,
        width: g.width(),
        height: g.height(),
        events: a.events,
        inject_fault: a.inject_fault,
        ..Default::default()
    };
    if let Some(out) = &a.output {
        ensure_writable(out, force)?;
        ensure_writable(&sidecar_for(out), force)?;
    }
    let report = run_verification(&opts)?;
    let text = report.to_string();
    print!("{text}");
    if let Some(out) = &a.output {
        fs::write(out, &text)?;
        let mut m = RunManifest::new("verify", args);
        m.set("seed", a.seed)
            .set("cases", a.cases)
            .set("geometry", g)
            .set("events", a.events)
            .set("output", out.display());
        m.write(&sidecar_for(out), force)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::VerifyFailed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_grid_includes_both_ends() {
        let g = rate_grid(1000.0, 0, 10_000).unwrap();
        assert_eq!(g, (0..=10).map(|i| i * 1000).collect::<Vec<_>>());
        assert_eq!(
            rate_grid(3.0, 0, 1_000_000).unwrap(),
            vec![0, 333_333, 666_667, 1_000_000]
        );
        assert!(rate_grid(0.0, 0, 1).is_err());
        assert!(rate_grid(10.0, 5, 1).is_err());
    }

    #[test]
    fn step_parsing() {
        let steps = parse_steps("10:0.5, 20:-1").unwrap();
        assert_eq!(steps, vec![Step { t: 10, height: 0.5 }, Step { t: 20, height: -1.0 }]);
        assert!(parse_steps("10").is_err());
    }
}
