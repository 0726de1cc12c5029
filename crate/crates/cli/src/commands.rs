use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dband_core::io::{
    save_rd_dump, save_rd_png, EventCsvWriter, EventNdjsonWriter, FileSource, PulseWriter,
};
use dband_core::pipeline::{
    bench, run_pipeline, FrameError, FrameEvent, FrameSource, ScenarioSource,
};
use dband_core::rd::RangeDopplerMap;
use dband_core::scene::load_scenario;
use dband_core::{DerivedParams, PipelineConfig, Real};
use dband_gateway::{Gateway, GatewayError, GatewayOptions, LiveSceneConfig};

use crate::args::{
    BenchArgs, Cli, Command, DetectionArgs, Precision, RunArgs, ServeArgs, SimulateArgs,
};

/// Floor of the exported PNG grayscale, dB.
const PNG_FLOOR_DB: f64 = -60.0;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<dband_core::Error> for CliError {
    fn from(e: dband_core::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<FrameError> for CliError {
    fn from(e: FrameError) -> Self {
        if e.source.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Core(e) => e.into(),
            GatewayError::Pipeline(e) => e.into(),
            GatewayError::Scene(e) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn runtime_io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

type CliResult<T = ()> = Result<T, CliError>;

pub fn dispatch(cli: Cli) -> CliResult {
    let config = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| CliError::Config(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::DeriveParams => derive_params(&config, cli.json),
        Command::Simulate(ref a) => simulate(&config, cli.seed, cli.json, a),
        Command::Run(ref a) => {
            let config = with_detection(config, &a.detection)?;
            match a.precision {
                Precision::F32 => run::<f32>(&config, cli.seed, cli.json, a),
                Precision::F64 => run::<f64>(&config, cli.seed, cli.json, a),
            }
        }
        Command::Bench(ref a) => bench_cmd(&with_detection(config, &a.detection)?, cli.json, a),
        Command::Serve(ref a) => {
            let config = with_detection(config, &a.detection)?;
            match a.precision {
                Precision::F32 => serve::<f32>(&config, cli.seed, a),
                Precision::F64 => serve::<f64>(&config, cli.seed, a),
            }
        }
    }
}

fn with_detection(mut config: PipelineConfig, flags: &DetectionArgs) -> CliResult<PipelineConfig> {
    let d = &mut config.detection;
    if let Some(v) = flags.thr_up {
        d.upper_db = v;
    }
    if let Some(v) = flags.thr_down {
        d.lower_db = v;
    }
    if let Some(v) = flags.scope_min_m {
        d.scope_min_m = v;
    }
    if let Some(v) = flags.scope_max_m {
        d.scope_max_m = v;
    }
    if let Some(v) = flags.guard_bins {
        d.guard_bins = v;
        config.microdoppler.zero_doppler_guard = v;
    }
    config
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}

fn print_json(value: &impl serde::Serialize) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("report serializes")
    );
}

fn derive_params(config: &PipelineConfig, json: bool) -> CliResult {
    let p = config.validate()?;
    if json {
        print_json(&p);
        return Ok(());
    }
    let mut rows: Vec<(String, String)> = vec![
        (
            "carrier_frequency".into(),
            format!("{} Hz", p.carrier_frequency),
        ),
        ("sample_rate".into(), format!("{} Hz", p.sample_rate)),
        ("sequence_length".into(), p.sequence_length.to_string()),
        ("cpi_pulses".into(), p.cpi_pulses.to_string()),
        ("speed_of_light".into(), format!("{} m/s", p.speed_of_light)),
    ];
    rows.extend(
        p.entries()
            .into_iter()
            .map(|(name, value, unit)| (name.to_string(), format!("{value:.9e} {unit}"))),
    );
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in rows {
        println!("{k:<width$}  {v}");
    }
    Ok(())
}

fn scenario_source<T: Real>(
    config: &PipelineConfig,
    params: &DerivedParams,
    path: &Path,
    seed: Option<u64>,
) -> CliResult<ScenarioSource<T>> {
    let mut script = load_scenario(path, params).map_err(|e| match e {
        dband_core::Error::Io(io) => CliError::Config(format!("{}: {io}", path.display())),
        other => CliError::Config(other.to_string()),
    })?;
    if let Some(seed) = seed {
        script.seed = seed;
    }
    Ok(ScenarioSource::new(script, params, config.system.zc_root)?)
}

fn simulate(config: &PipelineConfig, seed: Option<u64>, json: bool, a: &SimulateArgs) -> CliResult {
    let params = config.validate()?;
    let source = scenario_source::<f64>(config, &params, &a.scenario, seed)?;
    let mut writer = PulseWriter::create(&a.out, &params).map_err(|e| runtime(&a.out, e))?;
    for index in 0..source.frames() {
        for pulse in source.synthesize_frame(index).pulses {
            writer
                .write_pulse(&pulse.samples)
                .map_err(|e| runtime(&a.out, e))?;
        }
    }
    writer.finish().map_err(|e| runtime(&a.out, e))?;
    let pulses = source.frames() * params.cpi_pulses as u64;
    if json {
        print_json(&serde_json::json!({
            "out": a.out,
            "frames": source.frames(),
            "pulses": pulses,
            "seed": source.script().seed,
        }));
    } else {
        println!(
            "wrote {} frames ({pulses} pulses) to {}",
            source.frames(),
            a.out.display()
        );
    }
    Ok(())
}

fn runtime(path: &Path, e: dband_core::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

struct EventSinks {
    csv: EventCsvWriter<Box<dyn Write>>,
    ndjson: Option<(PathBuf, EventNdjsonWriter<BufWriter<File>>)>,
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(runtime_io(path))
}

fn run<T: Real>(config: &PipelineConfig, seed: Option<u64>, json: bool, a: &RunArgs) -> CliResult {
    let params = config.validate()?;
    match (&a.scenario, &a.input) {
        (Some(path), _) => {
            let source = scenario_source::<T>(config, &params, path, seed)?;
            process(source, config, &params, json, a)
        }
        (None, Some(path)) => {
            let source = FileSource::open(path, &params).map_err(|e| match e {
                dband_core::Error::Io(io) => CliError::Config(format!("{}: {io}", path.display())),
                other => CliError::Config(format!("{}: {other}", path.display())),
            })?;
            process::<T, _>(source, config, &params, json, a)
        }
        (None, None) => unreachable!("clap requires --scenario or --input"),
    }
}

fn process<T: Real, S: FrameSource<T>>(
    source: S,
    config: &PipelineConfig,
    params: &DerivedParams,
    json: bool,
    a: &RunArgs,
) -> CliResult {
    if let Some(dir) = &a.dump_rd {
        std::fs::create_dir_all(dir).map_err(runtime_io(dir))?;
    }
    let csv_out: Box<dyn Write> = match &a.events {
        Some(path) => Box::new(create(path)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut sinks = EventSinks {
        csv: EventCsvWriter::new(csv_out, a.timing)?,
        ndjson: match &a.ndjson {
            Some(path) => Some((
                path.clone(),
                EventNdjsonWriter::new(create(path)?, a.timing),
            )),
            None => None,
        },
    };
    let scope = config.detection.scope(params)?;

    let summary = run_pipeline(
        source,
        config,
        |event: &FrameEvent, map: &RangeDopplerMap<T>| {
            sinks.csv.write(event)?;
            if let Some((_, w)) = &mut sinks.ndjson {
                w.write(event)?;
            }
            if let Some(dir) = &a.dump_rd {
                let stem = dir.join(format!("frame_{:06}", event.frame_index));
                save_rd_dump(map, stem.with_extension("rdmap"))?;
                if a.png {
                    save_rd_png(
                        map,
                        stem.with_extension("png"),
                        scope.min_range_bin,
                        scope.max_range_bin,
                        PNG_FLOOR_DB,
                    )?;
                }
            }
            Ok(())
        },
    )?;

    sinks
        .csv
        .finish()?
        .flush()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    if let Some((path, w)) = sinks.ndjson {
        w.finish()?.flush().map_err(runtime_io(&path))?;
    }
    if json {
        eprintln!(
            "{}",
            serde_json::json!({ "frames": summary.frames, "noise_floor_db": summary.noise_floor_db })
        );
    } else {
        eprintln!(
            "processed {} frames, noise floor {:.2} dB",
            summary.frames, summary.noise_floor_db
        );
    }
    Ok(())
}

fn bench_cmd(config: &PipelineConfig, json: bool, a: &BenchArgs) -> CliResult {
    let report = match a.precision {
        Precision::F32 => bench::<f32>(config, a.frames)?,
        Precision::F64 => bench::<f64>(config, a.frames)?,
    };
    if json {
        print_json(&report);
        return Ok(());
    }
    let ms = |v: Option<f64>| v.map_or("-".to_string(), |s| format!("{:.2} ms", s * 1e3));
    println!("precision          {}", report.precision);
    println!("frames             {}", report.frames);
    println!("threads            {}", report.threads);
    println!("cpi                {:.2} ms", report.cpi_s * 1e3);
    println!("mean               {}", ms(report.mean_s));
    println!("p95                {}", ms(report.p95_s));
    println!("min                {}", ms(report.min_s));
    println!("max                {}", ms(report.max_s));
    println!(
        "real_time_factor   {}",
        report
            .real_time_factor
            .map_or("-".to_string(), |r| format!("{r:.3}"))
    );
    Ok(())
}

fn serve<T: Real>(config: &PipelineConfig, seed: Option<u64>, a: &ServeArgs) -> CliResult {
    if a.max_clients == 0 {
        return Err(CliError::Config("--max-clients must be at least 1".into()));
    }
    if let Some(dir) = &a.ui_dir {
        if !dir.is_dir() {
            return Err(CliError::Config(format!(
                "--ui-dir {} is not a directory",
                dir.display()
            )));
        }
    }
    let options = GatewayOptions {
        addr: (a.host, a.port).into(),
        max_clients: a.max_clients,
        ui_dir: a.ui_dir.clone(),
        paced: !a.unpaced,
        scene: LiveSceneConfig {
            seed: seed.unwrap_or(0),
            ..LiveSceneConfig::default()
        },
        ..GatewayOptions::default()
    };
    let gateway = Gateway::start::<T>(config, options)?;
    eprintln!("listening on ws://{}/ws", gateway.local_addr());
    let report = gateway.run_until_interrupted()?;
    eprintln!("stopped after {} frames", report.frames);
    Ok(())
}
