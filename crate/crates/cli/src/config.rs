//! Pipeline configuration read from TOML.

use std::path::{Path, PathBuf};

use flowrecon::observer::{Variant, DEFAULT_MAX_ITER};
use flowrecon::sensors::{NoiseModel, SensorKind, SensorSpec};
use flowrecon::synth::{Dynamics, ModeFamily, DEFAULT_PERIOD};
use flowrecon::FileFormat;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed of the synthetic scenario and of measurement noise.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub pod: PodConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub sensors: Vec<SensorSpec>,
    #[serde(default)]
    pub estimators: EstimatorsConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Training snapshots from elsewhere; defaults to the synth output.
    pub snapshots: Option<PathBuf>,
    /// Snapshots of the estimation interval; defaults to the synth output.
    pub stream: Option<PathBuf>,
    /// Format of snapshot and basis files.
    #[serde(default)]
    pub format: FileFormat,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            output_dir: default_output_dir(),
            snapshots: None,
            stream: None,
            format: FileFormat::default(),
        }
    }
}

/// Uniform sampling of `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    pub start: f64,
    pub end: f64,
    pub samples: usize,
}

impl Sampling {
    pub fn times(&self) -> Vec<f64> {
        let n = self.samples;
        (0..n)
            .map(|i| self.start + (self.end - self.start) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub dims: Vec<usize>,
    pub extents: Vec<[f64; 2]>,
    pub n_modes: usize,
    #[serde(default)]
    pub n_unresolved: usize,
    pub dynamics: Dynamics,
    #[serde(default = "default_family")]
    pub family: ModeFamily,
    #[serde(default = "default_period")]
    pub period: f64,
    /// Integration step; a two-hundredth of the period when absent.
    pub dt: Option<f64>,
    pub unresolved_amplitude: Option<f64>,
    pub training: Sampling,
    pub stream: Sampling,
}

fn default_family() -> ModeFamily {
    ModeFamily::Trigonometric
}

fn default_period() -> f64 {
    DEFAULT_PERIOD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PodConfig {
    pub n_retained: usize,
}

impl Default for PodConfig {
    fn default() -> Self {
        PodConfig { n_retained: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub n_nodes: usize,
    /// Sub-interval of the training span; the whole span when absent.
    pub window: Option<[f64; 2]>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { n_nodes: 161, window: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Lsq,
    Lse,
    Qse,
    Slse,
    KLsq,
    KLse,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Lsq, Method::Lse, Method::Qse, Method::Slse, Method::KLsq, Method::KLse];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lsq => "LSQ",
            Method::Lse => "LSE",
            Method::Qse => "QSE",
            Method::Slse => "SLSE",
            Method::KLsq => "K-LSQ",
            Method::KLse => "K-LSE",
        }
    }

    /// File stem of the method's outputs.
    pub fn slug(self) -> &'static str {
        match self {
            Method::Lsq => "lsq",
            Method::Lse => "lse",
            Method::Qse => "qse",
            Method::Slse => "slse",
            Method::KLsq => "k-lsq",
            Method::KLse => "k-lse",
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            Method::KLsq => Some(Variant::KLsq),
            Method::KLse => Some(Variant::KLse),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverConfig {
    /// Residual weight; the variant's default when absent.
    pub c_r: Option<f64>,
    /// Measurement samples per window.
    pub window: usize,
    pub stride: usize,
    pub n_nodes: usize,
    /// Gradient-norm tolerance; the Newton-decrement test when absent.
    pub tol: Option<f64>,
    pub max_iter: usize,
    pub warm_start: bool,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        ObserverConfig {
            c_r: None,
            window: 101,
            stride: 5,
            n_nodes: 61,
            tol: None,
            max_iter: DEFAULT_MAX_ITER,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorsConfig {
    pub methods: Vec<Method>,
    /// SLSE block length in samples.
    pub slse_segment: Option<usize>,
    /// Additive noise on every measurement record; off when absent.
    pub noise_std: Option<f64>,
    #[serde(default)]
    pub k_lsq: ObserverConfig,
    #[serde(default)]
    pub k_lse: ObserverConfig,
}

impl Default for EstimatorsConfig {
    fn default() -> Self {
        EstimatorsConfig {
            methods: Method::ALL.to_vec(),
            slse_segment: None,
            noise_std: None,
            k_lsq: ObserverConfig::default(),
            k_lse: ObserverConfig::default(),
        }
    }
}

impl EstimatorsConfig {
    pub fn observer(&self, m: Method) -> &ObserverConfig {
        match m {
            Method::KLse => &self.k_lse,
            _ => &self.k_lsq,
        }
    }

    pub fn noise(&self, seed: u64) -> Option<NoiseModel> {
        self.noise_std.filter(|&s| s > 0.0).map(|std_dev| NoiseModel { std_dev, seed })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Averaging interval; all common estimate times when absent.
    pub window: Option<[f64; 2]>,
}

/// Collects `key: message` problems.
#[derive(Default)]
struct Problems(Vec<String>);

impl Problems {
    fn check(&mut self, ok: bool, key: &str, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(format!("{key}: {}", msg()));
        }
    }

    fn positive(&mut self, key: &str, v: f64) {
        self.check(v.is_finite() && v > 0.0, key, || format!("must be positive and finite, got {v}"));
    }

    fn interval(&mut self, key: &str, w: [f64; 2]) {
        self.check(w[0].is_finite() && w[1].is_finite() && w[1] > w[0], key, || {
            format!("needs finite start < end, got [{}, {}]", w[0], w[1])
        });
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| e.context(&format!("config {}", path.display())))
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::validation(e.to_string()))
    }

    /// Checks every parameter range; all problems are reported together.
    pub fn validate(&self) -> CliResult<()> {
        let mut p = Problems::default();
        if let Some(s) = &self.synth {
            let nd = s.dims.len();
            p.check(nd == 2 || nd == 3, "synth.dims", || format!("needs 2 or 3 axes, got {nd}"));
            for (i, &d) in s.dims.iter().enumerate() {
                p.check(d >= 4, &format!("synth.dims[{i}]"), || format!("needs at least 4 points, got {d}"));
            }
            p.check(s.extents.len() == nd, "synth.extents", || {
                format!("needs one [lo, hi] per axis ({nd}), got {}", s.extents.len())
            });
            for (i, &e) in s.extents.iter().enumerate() {
                p.interval(&format!("synth.extents[{i}]"), e);
            }
            p.check(s.n_modes >= 2, "synth.n_modes", || format!("needs at least 2, got {}", s.n_modes));
            p.positive("synth.period", s.period);
            if let Some(dt) = s.dt {
                p.positive("synth.dt", dt);
            }
            if let Some(a) = s.unresolved_amplitude {
                p.check(a.is_finite() && a >= 0.0, "synth.unresolved_amplitude", || {
                    format!("must be non-negative, got {a}")
                });
            }
            for (key, smp) in [("synth.training", &s.training), ("synth.stream", &s.stream)] {
                p.interval(key, [smp.start, smp.end]);
                p.check(smp.start >= 0.0, &format!("{key}.start"), || {
                    format!("must be non-negative, got {}", smp.start)
                });
                p.check(smp.samples >= 2, &format!("{key}.samples"), || {
                    format!("needs at least 2, got {}", smp.samples)
                });
            }
            p.check(self.pod.n_retained <= s.n_modes + s.n_unresolved, "pod.n_retained", || {
                format!(
                    "exceeds the {} modes present in the synthetic flow",
                    s.n_modes + s.n_unresolved
                )
            });
        }
        p.check(self.pod.n_retained >= 1, "pod.n_retained", || "must be at least 1".into());
        p.check(self.calibration.n_nodes > self.pod.n_retained + 1, "calibration.n_nodes", || {
            format!(
                "needs more than n_retained + 1 = {} nodes, got {}",
                self.pod.n_retained + 1,
                self.calibration.n_nodes
            )
        });
        if let Some(w) = self.calibration.window {
            p.interval("calibration.window", w);
        }
        for (i, s) in self.sensors.iter().enumerate() {
            let key = format!("sensors[{i}]");
            p.check(s.weight.is_finite() && s.weight != 0.0, &format!("{key}.weight"), || {
                format!("must be finite and non-zero, got {}", s.weight)
            });
            p.check(s.location.iter().all(|v| v.is_finite()), &format!("{key}.location"), || {
                "must be finite".into()
            });
            if let Some(s2) = &self.synth {
                p.check(s.location.len() == s2.dims.len(), &format!("{key}.location"), || {
                    format!("needs {} coordinates, got {}", s2.dims.len(), s.location.len())
                });
                p.check(s.component < s2.dims.len(), &format!("{key}.component"), || {
                    format!("must be below {}, got {}", s2.dims.len(), s.component)
                });
            }
            match s.kind {
                SensorKind::BoxAverage => p.check(
                    s.half_width.as_ref().is_some_and(|h| h.iter().all(|v| v.is_finite() && *v > 0.0)),
                    &format!("{key}.half_width"),
                    || "box sensors need positive half widths".into(),
                ),
                _ => p.check(s.half_width.is_none(), &format!("{key}.half_width"), || {
                    "only box sensors take half widths".into()
                }),
            }
        }
        let e = &self.estimators;
        p.check(!e.methods.is_empty(), "estimators.methods", || "must name at least one method".into());
        for (i, m) in e.methods.iter().enumerate() {
            p.check(!e.methods[..i].contains(m), &format!("estimators.methods[{i}]"), || {
                format!("{} listed twice", m.name())
            });
        }
        if let Some(l) = e.slse_segment {
            p.check(l >= 2, "estimators.slse_segment", || format!("needs at least 2, got {l}"));
        }
        if let Some(s) = e.noise_std {
            p.check(s.is_finite() && s >= 0.0, "estimators.noise_std", || format!("must be non-negative, got {s}"));
        }
        for (name, o) in [("k_lsq", &e.k_lsq), ("k_lse", &e.k_lse)] {
            let key = |f: &str| format!("estimators.{name}.{f}");
            if let Some(c) = o.c_r {
                p.positive(&key("c_r"), c);
            }
            if let Some(t) = o.tol {
                p.positive(&key("tol"), t);
            }
            p.check(o.window >= 2, &key("window"), || format!("needs at least 2 samples, got {}", o.window));
            p.check(o.stride >= 1, &key("stride"), || "must be at least 1".into());
            p.check(o.n_nodes >= 2, &key("n_nodes"), || format!("needs at least 2, got {}", o.n_nodes));
            p.check(o.max_iter >= 1, &key("max_iter"), || "must be at least 1".into());
            if let Some(s) = &self.synth {
                p.check(o.window <= s.stream.samples, &key("window"), || {
                    format!("exceeds the {} stream samples", s.stream.samples)
                });
            }
        }
        if let Some(w) = self.metrics.window {
            p.interval("metrics.window", w);
        }
        if p.0.is_empty() {
            Ok(())
        } else {
            Err(CliError::validation(format!("invalid configuration:\n  {}", p.0.join("\n  "))))
        }
    }
}
