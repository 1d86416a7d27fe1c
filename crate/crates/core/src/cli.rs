//! Command-line front end: simulate, profile, train, detect, eval.
//!
//! Exit codes: 0 success, 1 runtime or data failure, 2 usage error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::artifact::{load_json, save_json, to_json_string, SCHEMA_VERSION};
use crate::autoencoder::{Optimizer, TrainConfig};
use crate::ensemble::{Ensemble, Metrics, ThresholdConfig, Verdict};
use crate::error::Error;
use crate::features::featurize;
use crate::pipeline::{
    cluster_quality, detect_trace, evaluate_against, flow_labels, flows_for, profile_trace, train_trace,
    ClusterQuality, RunConfig, PIPELINE_EPOCHS,
};
use crate::synth::{generate, inject_attack, AttackKind, AttackSpec, DeviceSpec, Fixture};
use crate::traffic::{read_packets, write_packets, FlowKey, Ipv4Net, PacketRecord};
use crate::tree::{ActivityProfile, MergeConfig};

#[derive(Debug, Parser)]
#[command(
    name = "atrellis",
    version,
    about = "Per-activity anomaly detection for IoT device traffic"
)]
pub struct Cli {
    /// Reject unknown fields in packet records instead of ignoring them.
    #[arg(long, global = true)]
    pub strict: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic trace and its manifest.
    Simulate(SimulateArgs),
    /// Cluster a benign trace into an activity profile.
    Profile(ProfileArgs),
    /// Train one autoencoder per activity key.
    Train(TrainArgs),
    /// Score every flow of a trace.
    Detect(DetectArgs),
    /// Compare verdicts with the labels in a trace.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FixtureArg {
    Camera,
    Plug,
    Speaker,
    Hub,
}

impl From<FixtureArg> for Fixture {
    fn from(f: FixtureArg) -> Fixture {
        match f {
            FixtureArg::Camera => Fixture::Camera,
            FixtureArg::Plug => Fixture::Plug,
            FixtureArg::Speaker => Fixture::Speaker,
            FixtureArg::Hub => Fixture::Hub,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackArg {
    All,
    PortScan,
    TelnetBrute,
    Flood,
    HttpMasqCnc,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub fixture: Option<FixtureArg>,
    /// Device spec as JSON.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Seconds of traffic.
    #[arg(long, default_value_t = 7200.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Inject the fixture's canned attacks of this kind; repeatable.
    #[arg(long, requires = "fixture")]
    pub attack: Vec<AttackArg>,
    /// JSON list of attack specs to inject.
    #[arg(long)]
    pub attack_spec: Option<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Monitored device; read from the trace manifest when omitted.
    #[arg(long)]
    pub device_ip: Option<Ipv4Addr>,
    /// Local network in CIDR form; repeatable. Defaults to the device's /24.
    #[arg(long)]
    pub local_prefix: Vec<Ipv4Net>,
    #[arg(long, default_value_t = MergeConfig::default().h_s)]
    pub h_s: f64,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub profile: PathBuf,
    /// Packets kept from the head of each flow.
    #[arg(long, default_value_t = 10)]
    pub r: usize,
    #[arg(long, default_value_t = ThresholdConfig::default().quantile)]
    pub quantile: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = PIPELINE_EPOCHS)]
    pub epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long)]
    pub sgd: bool,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub ensemble: PathBuf,
    /// Profile the ensemble must have been trained on.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Also write each flow's feature vector as JSON lines.
    #[arg(long)]
    pub dump_features: Option<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub verdicts: PathBuf,
    #[arg(long)]
    pub ensemble: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
}

/// Sidecar written next to every simulated trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<Fixture>,
    pub spec: DeviceSpec,
    pub seed: u64,
    pub duration: f64,
    pub attacks: Vec<AttackSpec>,
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: String,
    #[serde(flatten)]
    pub metrics: Metrics,
    #[serde(flatten)]
    pub clustering: ClusterQuality,
}

#[derive(Serialize)]
struct FeatureDump<'a> {
    flow_key: &'a FlowKey,
    features: &'a [f64],
    valid_count: usize,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult = std::result::Result<(), Failure>;

pub fn manifest_path(trace: &Path) -> PathBuf {
    trace.with_extension("manifest.json")
}

fn read_trace(path: &Path, strict: bool) -> Result<Vec<PacketRecord>, Failure> {
    let file =
        File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(read_packets(BufReader::new(file), strict)?)
}

fn write_trace(path: &Path, packets: &[PacketRecord]) -> CmdResult {
    let mut w = BufWriter::new(File::create(path)?);
    write_packets(&mut w, packets)?;
    w.flush()?;
    Ok(())
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> CmdResult {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_verdicts(path: &Path) -> Result<Vec<Verdict>, Failure> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut de = serde_json::Deserializer::from_str(line);
        let v = serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Schema {
            path: format!("line {}: {}", i + 1, e.path()),
            reason: e.inner().to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

fn cmd_simulate(args: &SimulateArgs) -> CmdResult {
    if !(args.duration > 0.0) {
        return Err(Failure::Usage(format!(
            "--duration must be positive, got {}",
            args.duration
        )));
    }
    let fixture = args.fixture.map(Fixture::from);
    let spec = match (&fixture, &args.spec) {
        (Some(f), _) => f.spec(),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            let mut de = serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Schema {
                path: e.path().to_string(),
                reason: e.inner().to_string(),
            })?
        }
        (None, None) => return Err(Failure::Usage("one of --fixture or --spec is required".into())),
    };

    let mut attacks = Vec::new();
    if let Some(f) = fixture {
        let canned = f.attacks(args.duration);
        for a in &args.attack {
            let kinds: &[AttackKind] = match a {
                AttackArg::All => &AttackKind::ALL,
                AttackArg::PortScan => &[AttackKind::PortScan],
                AttackArg::TelnetBrute => &[AttackKind::TelnetBrute],
                AttackArg::Flood => &[AttackKind::Flood],
                AttackArg::HttpMasqCnc => &[AttackKind::HttpMasqCnc],
            };
            attacks.extend(canned.iter().filter(|s| kinds.contains(&s.kind)).cloned());
        }
    }
    if let Some(path) = &args.attack_spec {
        let text = std::fs::read_to_string(path)?;
        let extra: Vec<AttackSpec> = serde_json::from_str(&text).map_err(|e| Error::Schema {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        attacks.extend(extra);
    }

    let mut packets = generate(&spec, args.duration, args.seed)?;
    for (i, atk) in attacks.iter().enumerate() {
        packets = inject_attack(&packets, atk, args.seed.wrapping_add(i as u64 + 1))?;
    }
    let mut counts = BTreeMap::new();
    for p in &packets {
        let key = p
            .label
            .as_ref()
            .map_or_else(|| "unlabeled".to_string(), |l| l.to_string());
        *counts.entry(key).or_insert(0) += 1;
    }
    write_trace(&args.out, &packets)?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION.to_string(),
        fixture,
        spec,
        seed: args.seed,
        duration: args.duration,
        attacks,
        counts,
    };
    save_json(&manifest_path(&args.out), &manifest)?;
    println!("wrote {} packets to {}", packets.len(), args.out.display());
    Ok(())
}

fn cmd_profile(args: &ProfileArgs, strict: bool) -> CmdResult {
    let merge = MergeConfig::new(args.h_s).map_err(|e| Failure::Usage(e.to_string()))?;
    let device_ip = match args.device_ip {
        Some(ip) => ip,
        None => {
            let path = manifest_path(&args.trace);
            if !path.exists() {
                return Err(Failure::Usage(format!(
                    "--device-ip is required when {} does not exist",
                    path.display()
                )));
            }
            load_json::<Manifest>(&path)?.spec.device_ip
        }
    };
    let packets = read_trace(&args.trace, strict)?;
    let mut cfg = RunConfig::for_device(device_ip);
    cfg.merge = merge;
    if !args.local_prefix.is_empty() {
        cfg.local_prefixes = args.local_prefix.clone();
    }
    let profile = profile_trace(&packets, &cfg)?;
    save_json(&args.out, &profile)?;

    let mut report = format!(
        "{} activity keys for {} (h_s = {})\n",
        profile.len(),
        device_ip,
        merge.h_s
    );
    for a in &profile.activities {
        let _ = writeln!(report, "  {:>5}  {}", a.member_flows.len(), a.key);
    }
    print!("{report}");
    Ok(())
}

fn cmd_train(args: &TrainArgs, strict: bool) -> CmdResult {
    let threshold = ThresholdConfig::new(args.quantile).map_err(|e| Failure::Usage(e.to_string()))?;
    let train = TrainConfig {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        batch_size: args.batch_size,
        optimizer: if args.sgd { Optimizer::Sgd } else { Optimizer::Adam },
        ..Default::default()
    };
    train.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if args.r == 0 {
        return Err(Failure::Usage("--r must be at least 1".into()));
    }
    let profile: ActivityProfile = load_json(&args.profile)?;
    let packets = read_trace(&args.trace, strict)?;
    let mut cfg = RunConfig::for_device(profile.device_ip);
    cfg.local_prefixes = profile.local_prefixes.clone();
    cfg.r = args.r;
    cfg.threshold = threshold;
    cfg.train = train;
    cfg.seed = args.seed;
    let ensemble = train_trace(&profile, &packets, &cfg)?;
    save_json(&args.out, &ensemble)?;
    println!("trained {} submodels", ensemble.submodels.len());
    for s in &ensemble.submodels {
        println!("  epsilon {:.4e}  {}", s.epsilon, s.key);
    }
    Ok(())
}

fn load_ensemble(path: &Path) -> Result<Ensemble, Failure> {
    let ensemble: Ensemble = load_json(path)?;
    ensemble.validate()?;
    Ok(ensemble)
}

fn cmd_detect(args: &DetectArgs, strict: bool) -> CmdResult {
    let ensemble = load_ensemble(&args.ensemble)?;
    if let Some(path) = &args.profile {
        let profile: ActivityProfile = load_json(path)?;
        if profile != ensemble.profile {
            return Err(Error::Mismatch(format!(
                "ensemble {} was not trained on profile {}",
                args.ensemble.display(),
                path.display()
            ))
            .into());
        }
    }
    let packets = read_trace(&args.trace, strict)?;
    let (flows, verdicts) = detect_trace(&ensemble, &packets)?;
    write_lines(&args.out, &verdicts)?;

    if let Some(path) = &args.dump_features {
        let features = flows
            .iter()
            .map(|f| featurize(&f.packets, &ensemble.feature_config))
            .collect::<crate::Result<Vec<_>>>()?;
        let rows: Vec<FeatureDump> = flows
            .iter()
            .zip(&features)
            .map(|(f, v)| FeatureDump {
                flow_key: &f.key,
                features: &v.values,
                valid_count: v.valid_count,
            })
            .collect();
        write_lines(path, &rows)?;
    }
    let flagged = verdicts.iter().filter(|v| v.is_flagged()).count();
    println!("{} flows, {} flagged", verdicts.len(), flagged);
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

pub fn summary_table(m: &Metrics) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<14} {:>6} {:>6} {:>7} {:>7}",
        "class", "flows", "TPR", "stage1", "AUC"
    );
    for (kind, a) in &m.per_attack {
        let _ = writeln!(
            s,
            "{:<14} {:>6} {:>6.3} {:>7.3} {:>7}",
            kind,
            a.flows,
            a.tpr,
            a.stage1_rate,
            fmt_opt(a.auc)
        );
    }
    let _ = writeln!(
        s,
        "{:<14} {:>6} {:>6} {:>7} {:>7}",
        "all attacks",
        m.attacks,
        fmt_opt(m.tpr),
        "",
        fmt_opt(m.auc)
    );
    let _ = writeln!(s, "{:<14} {:>6} FPR {}", "benign", m.benign, fmt_opt(m.fpr));
    s
}

fn cmd_eval(args: &EvalArgs, strict: bool) -> CmdResult {
    let ensemble = load_ensemble(&args.ensemble)?;
    let packets = read_trace(&args.trace, strict)?;
    let flows = flows_for(&ensemble.profile, &packets);
    if flow_labels(&flows).is_none() {
        return Err(Failure::Usage(format!(
            "{} has unlabeled flows; eval needs ground-truth labels",
            args.trace.display()
        )));
    }
    let verdicts = read_verdicts(&args.verdicts)?;
    let metrics = evaluate_against(&verdicts, &flows)?;
    let clustering = cluster_quality(&ensemble, &flows, &verdicts)?;
    let report = MetricsReport {
        schema_version: SCHEMA_VERSION.to_string(),
        metrics,
        clustering,
    };
    std::fs::write(&args.out, to_json_string(&report))?;
    print!("{}", summary_table(&report.metrics));
    let c = &report.clustering;
    println!(
        "{} stage-2 flows in {} activities: Dunn {}, k-means objective {}, purity {}",
        c.clustered_flows,
        c.clusters,
        fmt_opt(c.dunn_index),
        fmt_opt(c.kmeans_objective),
        fmt_opt(c.purity)
    );
    Ok(())
}

/// Parses `args` and runs one command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Profile(a) => cmd_profile(a, cli.strict),
        Command::Train(a) => cmd_train(a, cli.strict),
        Command::Detect(a) => cmd_detect(a, cli.strict),
        Command::Eval(a) => cmd_eval(a, cli.strict),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}
