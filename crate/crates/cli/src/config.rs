//! Line-oriented `key=value` experiment configs.
//!
//! ```text
//! # DDPG with CrossNorm on three seeds
//! experiment=train
//! preset=ddpg-crossnorm
//! seeds=0,1,2
//! agent.total_steps=20000
//! ```
//!
//! A preset supplies every agent default; the remaining keys override it.
//! [`ExperimentConfig::to_text`] writes every resolved value, so its output
//! parses back to an equal config.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crossnorm::agents::{AgentConfig, Algorithm};
use crossnorm::linlab::{PolicyEvalConfig, SweepConfig};
use crossnorm::norm::{NormKind, NormSpec, VarianceMode};
use crossnorm::numcore::OptimizerKind;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Train,
    FixedBuffer,
    PhaseDiagram,
    NormTest,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Train,
        ExperimentKind::FixedBuffer,
        ExperimentKind::PhaseDiagram,
        ExperimentKind::NormTest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Train => "train",
            ExperimentKind::FixedBuffer => "fixed-buffer",
            ExperimentKind::PhaseDiagram => "phase-diagram",
            ExperimentKind::NormTest => "norm-test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// Where a fixed-buffer experiment gets its transitions.
#[derive(Clone, Debug, PartialEq)]
pub enum BufferSource {
    /// A uniformly random policy rolled out on the pendulum.
    Random {
        steps: usize,
        seed: u64,
    },
    File(PathBuf),
}

/// The linear evaluation problem of a phase-diagram sweep. The random and
/// frozen-feature problems are drawn from the experiment seed.
#[derive(Clone, Debug, PartialEq)]
pub enum MdpSource {
    Baird,
    Random {
        states: usize,
        features: usize,
    },
    /// Penultimate features of a random critic on a random-policy buffer.
    Frozen {
        buffer_steps: usize,
        hidden: Vec<usize>,
    },
}

impl MdpSource {
    fn name(&self) -> &'static str {
        match self {
            MdpSource::Baird => "baird",
            MdpSource::Random { .. } => "random",
            MdpSource::Frozen { .. } => "frozen",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormTestConfig {
    /// Finite-difference cases per seed.
    pub cases: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Train(AgentConfig),
    FixedBuffer {
        agent: AgentConfig,
        buffer: BufferSource,
    },
    PhaseDiagram {
        sweep: SweepConfig,
        mdp: MdpSource,
    },
    NormTest(NormTestConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Agent preset the values were resolved from, kept for the record.
    pub preset: Option<String>,
    pub payload: Payload,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub kind: Option<ExperimentKind>,
    pub preset: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub buffer: Option<PathBuf>,
}

const DEFAULT_OUT: &str = "results";
const DEFAULT_FIXED_BUFFER_STEPS: usize = 50_000;

/// Parses a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config_with(path, &Overrides::default())
}

pub fn parse_config_with(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentConfig::parse_with(&text, overrides)
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

struct Entries(HashMap<String, Entry>);

impl Entries {
    fn read(text: &str) -> Result<Self> {
        let mut map: HashMap<String, Entry> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(line_err(
                    line,
                    format!("expected key=value, got '{}'", trimmed),
                ));
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(line_err(line, "empty key"));
            }
            if let Some(prev) = map.get(key) {
                return Err(line_err(
                    line,
                    format!("duplicate key '{}' (first set on line {})", key, prev.line),
                ));
            }
            map.insert(
                key.to_string(),
                Entry {
                    line,
                    value: value.trim().to_string(),
                    used: false,
                },
            );
        }
        Ok(Entries(map))
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.0.get_mut(key).map(|e| {
            e.used = true;
            (e.line, e.value.clone())
        })
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.0.get(key).map(|e| e.line)
    }

    /// Applies `key` through `set` when present.
    fn apply<T: Value>(&mut self, key: &str, set: impl FnOnce(T)) -> Result<()> {
        if let Some((line, raw)) = self.take(key) {
            set(T::parse_value(&raw).map_err(|m| line_err(line, format!("{}: {}", key, m)))?);
        }
        Ok(())
    }

    /// First unused key, by line.
    fn leftover(&self) -> Option<(&str, usize)> {
        self.0
            .iter()
            .filter(|(_, e)| !e.used)
            .map(|(k, e)| (k.as_str(), e.line))
            .min_by_key(|(_, l)| *l)
    }
}

fn line_err(line: usize, msg: impl Into<String>) -> ConfigError {
    ConfigError::Line {
        line,
        msg: msg.into(),
    }
}

/// A config value type with its textual form.
trait Value: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
}

fn parse_num<T: FromStr>(s: &str, what: &str) -> std::result::Result<T, String> {
    s.parse()
        .map_err(|_| format!("expected {}, got '{}'", what, s))
}

impl Value for f64 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        parse_num(s, "a number")
    }
}

impl Value for usize {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        parse_num(s, "a non-negative integer")
    }
}

impl Value for u64 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        parse_num(s, "a non-negative integer")
    }
}

impl Value for bool {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        parse_num(s, "true or false")
    }
}

impl Value for String {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        Ok(s.to_string())
    }
}

impl Value for PathBuf {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            return Err("empty path".into());
        }
        Ok(PathBuf::from(s))
    }
}

impl<T: Value> Value for Vec<T> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            return Err("empty list".into());
        }
        s.split(',').map(|p| T::parse_value(p.trim())).collect()
    }
}

/// `none` or a value.
impl<T: Value> Value for Option<T> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s == "none" {
            Ok(None)
        } else {
            T::parse_value(s).map(Some)
        }
    }
}

macro_rules! named_value {
    ($t:ty, $what:literal) => {
        impl Value for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                <$t>::parse(s).ok_or_else(|| format!("expected {}, got '{}'", $what, s))
            }
        }
    };
}

named_value!(Algorithm, "ddpg or td3");
named_value!(OptimizerKind, "adam or rmsprop");
named_value!(NormKind, "none, batch, layer, cross or cross_renorm");
named_value!(VarianceMode, "population, bessel or stream_means");

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn fmt_f64(v: f64) -> String {
    // Debug is the shortest form that parses back to the same bits
    format!("{:?}", v)
}

impl ExperimentConfig {
    pub fn kind(&self) -> ExperimentKind {
        match self.payload {
            Payload::Train(_) => ExperimentKind::Train,
            Payload::FixedBuffer { .. } => ExperimentKind::FixedBuffer,
            Payload::PhaseDiagram { .. } => ExperimentKind::PhaseDiagram,
            Payload::NormTest(_) => ExperimentKind::NormTest,
        }
    }

    /// Defaults of an experiment kind.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let payload = match kind {
            ExperimentKind::Train => Payload::Train(AgentConfig::default()),
            ExperimentKind::FixedBuffer => Payload::FixedBuffer {
                agent: AgentConfig::default(),
                buffer: BufferSource::Random {
                    steps: DEFAULT_FIXED_BUFFER_STEPS,
                    seed: 0,
                },
            },
            ExperimentKind::PhaseDiagram => Payload::PhaseDiagram {
                sweep: SweepConfig::default(),
                mdp: MdpSource::Baird,
            },
            ExperimentKind::NormTest => Payload::NormTest(NormTestConfig { cases: 200 }),
        };
        ExperimentConfig {
            preset: None,
            payload,
            seeds: vec![0],
            out: PathBuf::from(DEFAULT_OUT),
            jobs: 0,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, &Overrides::default())
    }

    pub fn parse_with(text: &str, ov: &Overrides) -> Result<Self> {
        let mut e = Entries::read(text)?;

        let file_kind = match e.take("experiment") {
            Some((line, raw)) => Some((
                line,
                ExperimentKind::parse(&raw)
                    .ok_or_else(|| line_err(line, format!("unknown experiment '{}'", raw)))?,
            )),
            None => None,
        };
        let kind = match (file_kind, ov.kind) {
            (Some((line, f)), Some(k)) if f != k => {
                return Err(line_err(
                    line,
                    format!(
                        "config is a {} experiment, command is {}",
                        f.as_str(),
                        k.as_str()
                    ),
                ))
            }
            (_, Some(k)) | (Some((_, k)), None) => k,
            (None, None) => {
                return Err(ConfigError::Invalid(
                    "missing required key 'experiment'".into(),
                ))
            }
        };
        let mut cfg = Self::defaults(kind);

        let file_preset = e.take("preset");
        let preset = match (&ov.preset, file_preset) {
            (Some(p), _) => Some((None, p.clone())),
            (None, Some((line, p))) => Some((Some(line), p)),
            (None, None) => None,
        };
        if let Some((line, name)) = preset {
            let at = |msg: String| match line {
                Some(l) => line_err(l, msg),
                None => ConfigError::Invalid(msg),
            };
            let agent = match &mut cfg.payload {
                Payload::Train(a) | Payload::FixedBuffer { agent: a, .. } => a,
                _ => {
                    return Err(at(format!(
                        "presets apply to agent experiments, not {}",
                        kind.as_str()
                    )))
                }
            };
            *agent = AgentConfig::preset(&name).map_err(|err| at(err.to_string()))?;
            cfg.preset = Some(name);
        }

        e.apply("seeds", |v| cfg.seeds = v)?;
        e.apply("out", |v| cfg.out = v)?;
        e.apply("jobs", |v| cfg.jobs = v)?;

        match &mut cfg.payload {
            Payload::Train(agent) => apply_agent(&mut e, agent)?,
            Payload::FixedBuffer { agent, buffer } => {
                apply_agent(&mut e, agent)?;
                apply_buffer(&mut e, buffer)?;
            }
            Payload::PhaseDiagram { sweep, mdp } => apply_sweep(&mut e, sweep, mdp)?,
            Payload::NormTest(nt) => e.apply("normtest.cases", |v| nt.cases = v)?,
        }

        if let Some((key, line)) = e.leftover() {
            return Err(line_err(
                line,
                format!("unknown key '{}' for a {} experiment", key, kind.as_str()),
            ));
        }

        if let Some(s) = &ov.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(o) = &ov.out {
            cfg.out = o.clone();
        }
        if let Some(j) = ov.jobs {
            cfg.jobs = j;
        }
        if let Some(b) = &ov.buffer {
            match &mut cfg.payload {
                Payload::FixedBuffer { buffer, .. } => *buffer = BufferSource::File(b.clone()),
                _ => {
                    return Err(ConfigError::Invalid(
                        "a buffer file applies to fixed-buffer experiments only".into(),
                    ))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| ConfigError::Invalid(m);
        if self.seeds.is_empty() {
            return Err(invalid("at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(invalid("seeds must be distinct".into()));
        }
        match &self.payload {
            Payload::Train(a) => a.validate().map_err(|e| invalid(e.to_string())),
            Payload::FixedBuffer { agent, buffer } => {
                agent.validate().map_err(|e| invalid(e.to_string()))?;
                if let BufferSource::Random { steps, .. } = buffer {
                    if *steps < agent.batch_size {
                        return Err(invalid(format!(
                            "buffer of {} steps is smaller than the batch size {}",
                            steps, agent.batch_size
                        )));
                    }
                }
                Ok(())
            }
            Payload::PhaseDiagram { sweep, mdp } => {
                sweep.validate().map_err(|e| invalid(e.to_string()))?;
                match mdp {
                    MdpSource::Random { states, features } if *states == 0 || *features == 0 => {
                        Err(invalid(
                            "random MDP needs at least one state and feature".into(),
                        ))
                    }
                    MdpSource::Frozen {
                        buffer_steps,
                        hidden,
                    } if *buffer_steps == 0 || hidden.is_empty() || hidden.contains(&0) => {
                        Err(invalid(
                            "frozen-feature MDP needs a non-empty buffer and hidden sizes".into(),
                        ))
                    }
                    _ => Ok(()),
                }
            }
            Payload::NormTest(nt) if nt.cases == 0 => {
                Err(invalid("norm test needs at least one case".into()))
            }
            Payload::NormTest(_) => Ok(()),
        }
    }

    /// Every resolved value, in a form [`ExperimentConfig::parse`] reads back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{}={}", k, v);
        };
        kv("experiment", self.kind().as_str().into());
        if let Some(p) = &self.preset {
            kv("preset", p.clone());
        }
        kv("seeds", join(&self.seeds));
        kv("out", self.out.display().to_string());
        kv("jobs", self.jobs.to_string());
        match &self.payload {
            Payload::Train(a) => write_agent(&mut kv, a),
            Payload::FixedBuffer { agent, buffer } => {
                write_agent(&mut kv, agent);
                match buffer {
                    BufferSource::Random { steps, seed } => {
                        kv("buffer.steps", steps.to_string());
                        kv("buffer.seed", seed.to_string());
                    }
                    BufferSource::File(p) => kv("buffer.path", p.display().to_string()),
                }
            }
            Payload::PhaseDiagram { sweep, mdp } => {
                kv("sweep.mdp", mdp.name().into());
                match mdp {
                    MdpSource::Baird => {}
                    MdpSource::Random { states, features } => {
                        kv("sweep.states", states.to_string());
                        kv("sweep.features", features.to_string());
                    }
                    MdpSource::Frozen {
                        buffer_steps,
                        hidden,
                    } => {
                        kv("sweep.buffer_steps", buffer_steps.to_string());
                        kv("sweep.hidden", join(hidden));
                    }
                }
                kv("sweep.alpha_min", fmt_f64(sweep.alpha_range.0));
                kv("sweep.alpha_max", fmt_f64(sweep.alpha_range.1));
                kv("sweep.beta_min", fmt_f64(sweep.beta_range.0));
                kv("sweep.beta_max", fmt_f64(sweep.beta_range.1));
                kv("sweep.resolution", sweep.resolution.to_string());
                let ev = &sweep.eval;
                kv("sweep.iterations", ev.iterations.to_string());
                kv("sweep.eta", fmt_f64(ev.eta));
                kv("sweep.gamma", ev.gamma.map_or("none".into(), fmt_f64));
                kv("sweep.cap", fmt_f64(ev.cap));
                kv("sweep.log_interval", ev.log_interval.to_string());
            }
            Payload::NormTest(nt) => kv("normtest.cases", nt.cases.to_string()),
        }
        s
    }
}

fn apply_agent(e: &mut Entries, a: &mut AgentConfig) -> Result<()> {
    // the kind decides the defaults of the other norm fields
    e.apply("agent.norm", |k: NormKind| {
        a.norm = match k {
            NormKind::None => NormSpec::none(),
            NormKind::Batch => NormSpec::batch(),
            NormKind::Layer => NormSpec::layer(),
            NormKind::Cross => NormSpec::cross(a.norm.alpha),
            NormKind::CrossRenorm => NormSpec::cross_renorm(a.norm.alpha),
        }
    })?;
    e.apply("agent.algorithm", |v| a.algorithm = v)?;
    e.apply("agent.actor_lr", |v| a.actor_lr = v)?;
    e.apply("agent.critic_lr", |v| a.critic_lr = v)?;
    e.apply("agent.tau", |v| a.tau = v)?;
    e.apply("agent.batch_size", |v| a.batch_size = v)?;
    e.apply("agent.optimizer", |v| a.optimizer = v)?;
    e.apply("agent.target_networks", |v| a.use_target_networks = v)?;
    e.apply("agent.alpha", |v| a.norm.alpha = v)?;
    e.apply("agent.mean_only", |v| a.norm.mean_only = v)?;
    e.apply("agent.momentum", |v| a.norm.momentum = v)?;
    e.apply("agent.renorm_switch", |v| a.norm.renorm_switch_step = v)?;
    e.apply("agent.norm_epsilon", |v| a.norm.epsilon = v)?;
    e.apply("agent.norm_affine", |v| a.norm.affine = v)?;
    e.apply("agent.variance", |v| a.norm.variance = v)?;
    e.apply("agent.gamma", |v| a.gamma = v)?;
    e.apply("agent.expl_noise", |v| a.expl_noise = v)?;
    e.apply("agent.policy_noise", |v| a.policy_noise = v)?;
    e.apply("agent.noise_clip", |v| a.noise_clip = v)?;
    e.apply("agent.policy_delay", |v| a.policy_delay = v)?;
    e.apply("agent.warmup", |v| a.warmup = v)?;
    e.apply("agent.total_steps", |v| a.total_steps = v)?;
    e.apply("agent.hidden", |v| a.hidden = v)?;
    e.apply("agent.late_action", |v| a.late_action = v)?;
    e.apply("agent.moment_batch", |v| a.moment_batch = v)?;
    e.apply("agent.eval_interval", |v| a.eval_interval = v)?;
    e.apply("agent.eval_episodes", |v| a.eval_episodes = v)?;
    e.apply("agent.buffer_capacity", |v| a.buffer_capacity = v)?;
    Ok(())
}

fn write_agent(kv: &mut impl FnMut(&str, String), a: &AgentConfig) {
    kv("agent.algorithm", a.algorithm.as_str().into());
    kv("agent.actor_lr", fmt_f64(a.actor_lr));
    kv("agent.critic_lr", fmt_f64(a.critic_lr));
    kv("agent.tau", fmt_f64(a.tau));
    kv("agent.batch_size", a.batch_size.to_string());
    kv("agent.optimizer", a.optimizer.as_str().into());
    kv("agent.target_networks", a.use_target_networks.to_string());
    kv("agent.norm", a.norm.kind.as_str().into());
    kv("agent.alpha", fmt_f64(a.norm.alpha));
    kv("agent.mean_only", a.norm.mean_only.to_string());
    kv("agent.momentum", fmt_f64(a.norm.momentum));
    kv("agent.renorm_switch", a.norm.renorm_switch_step.to_string());
    kv("agent.norm_epsilon", fmt_f64(a.norm.epsilon));
    kv("agent.norm_affine", a.norm.affine.to_string());
    kv("agent.variance", a.norm.variance.as_str().into());
    kv("agent.gamma", fmt_f64(a.gamma));
    kv("agent.expl_noise", fmt_f64(a.expl_noise));
    kv("agent.policy_noise", fmt_f64(a.policy_noise));
    kv("agent.noise_clip", fmt_f64(a.noise_clip));
    kv("agent.policy_delay", a.policy_delay.to_string());
    kv("agent.warmup", a.warmup.to_string());
    kv("agent.total_steps", a.total_steps.to_string());
    kv("agent.hidden", join(&a.hidden));
    kv("agent.late_action", a.late_action.to_string());
    kv(
        "agent.moment_batch",
        a.moment_batch.map_or("none".into(), |m| m.to_string()),
    );
    kv("agent.eval_interval", a.eval_interval.to_string());
    kv("agent.eval_episodes", a.eval_episodes.to_string());
    kv("agent.buffer_capacity", a.buffer_capacity.to_string());
}

fn apply_buffer(e: &mut Entries, b: &mut BufferSource) -> Result<()> {
    if let Some((line, raw)) = e.take("buffer.path") {
        for k in ["buffer.steps", "buffer.seed"] {
            if e.line_of(k).is_some() {
                return Err(line_err(line, format!("buffer.path excludes {}", k)));
            }
        }
        *b = BufferSource::File(
            PathBuf::parse_value(&raw)
                .map_err(|m| line_err(line, format!("buffer.path: {}", m)))?,
        );
        return Ok(());
    }
    if let BufferSource::Random { steps, seed } = b {
        e.apply("buffer.steps", |v| *steps = v)?;
        e.apply("buffer.seed", |v| *seed = v)?;
    }
    Ok(())
}

fn apply_sweep(e: &mut Entries, s: &mut SweepConfig, mdp: &mut MdpSource) -> Result<()> {
    if let Some((line, raw)) = e.take("sweep.mdp") {
        *mdp = match raw.as_str() {
            "baird" => MdpSource::Baird,
            "random" => MdpSource::Random {
                states: 7,
                features: 8,
            },
            "frozen" => MdpSource::Frozen {
                buffer_steps: 1000,
                hidden: vec![64, 64],
            },
            other => {
                return Err(line_err(
                    line,
                    format!(
                        "sweep.mdp: expected baird, random or frozen, got '{}'",
                        other
                    ),
                ))
            }
        };
    }
    match mdp {
        MdpSource::Baird => {}
        MdpSource::Random { states, features } => {
            e.apply("sweep.states", |v| *states = v)?;
            e.apply("sweep.features", |v| *features = v)?;
        }
        MdpSource::Frozen {
            buffer_steps,
            hidden,
        } => {
            e.apply("sweep.buffer_steps", |v| *buffer_steps = v)?;
            e.apply("sweep.hidden", |v| *hidden = v)?;
        }
    }
    e.apply("sweep.alpha_min", |v| s.alpha_range.0 = v)?;
    e.apply("sweep.alpha_max", |v| s.alpha_range.1 = v)?;
    e.apply("sweep.beta_min", |v| s.beta_range.0 = v)?;
    e.apply("sweep.beta_max", |v| s.beta_range.1 = v)?;
    e.apply("sweep.resolution", |v| s.resolution = v)?;
    let ev: &mut PolicyEvalConfig = &mut s.eval;
    e.apply("sweep.iterations", |v| ev.iterations = v)?;
    e.apply("sweep.eta", |v| ev.eta = v)?;
    e.apply("sweep.gamma", |v| ev.gamma = v)?;
    e.apply("sweep.cap", |v| ev.cap = v)?;
    e.apply("sweep.log_interval", |v| ev.log_interval = v)?;
    Ok(())
}
