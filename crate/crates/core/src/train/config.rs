//! Run configuration files.
//!
//! The format is line oriented: `[section]` headers followed by `key = value`
//! lines. `#` starts a comment line. Unknown sections and keys are errors, as
//! are repeated keys. Relative paths are resolved against the directory of the
//! file they appear in.
//!
//! ```text
//! [model]
//! architecture = 784-400-10
//! n_steps = 5
//!
//! [data]
//! format = idx
//! train_images = data/train-images-idx3-ubyte
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::optim::{OptimConfig, OptimKind};
use crate::backprop::{BackpropConfig, PscTiming};
use crate::data::{load_cifar_batch, load_event_dir, load_idx, DatasetHandle, EventBinning};
use crate::error::{Error, Result};
use crate::layers::Geometry;
use crate::loss::{Readout, TargetSpec};
use crate::network::{InitConfig, NetworkSpec};
use crate::neuron::NeuronConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub architecture: String,
    pub input_shape: Option<Geometry>,
    pub n_steps: usize,
    pub neuron: NeuronConfig,
    pub init: InitConfig,
}

/// Target rasters. By default the neuron of the true class fires at every
/// step and all others stay silent; `true_steps` and `other_steps` change
/// that rule and `classes` overrides whole rasters per class.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetConfig {
    /// Loss kernel time constant; `None` uses the output layer's `tau_s`.
    pub kernel_tau: Option<f64>,
    pub readout: Readout,
    pub true_steps: Option<Vec<usize>>,
    pub other_steps: Vec<usize>,
    /// `class -> [neuron][step]` rasters.
    pub classes: BTreeMap<usize, Vec<Vec<u8>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    Idx,
    Events,
    Cifar,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub format: DataFormat,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Event datasets: directories with an `index.txt`.
    pub train_dir: Option<PathBuf>,
    pub test_dir: Option<PathBuf>,
    /// CIFAR-10 binary batch files.
    pub train_file: Option<PathBuf>,
    pub test_file: Option<PathBuf>,
    pub sensor_width: usize,
    pub sensor_height: usize,
    pub window_us: u64,
    pub n_classes: usize,
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
    pub subset_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optim: OptimConfig,
    pub eps_slope: Option<f64>,
    pub dead_kappa: f64,
    pub psc_timing: PscTiming,
    pub serial: bool,
    pub output_dir: PathBuf,
}

/// A complete, resolved run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub target: TargetConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                architecture: String::new(),
                input_shape: None,
                n_steps: 5,
                neuron: NeuronConfig::default(),
                init: InitConfig::default(),
            },
            target: TargetConfig {
                kernel_tau: None,
                readout: Readout::SummedPsc,
                true_steps: None,
                other_steps: Vec::new(),
                classes: BTreeMap::new(),
            },
            data: DataConfig {
                format: DataFormat::Idx,
                train_images: None,
                train_labels: None,
                test_images: None,
                test_labels: None,
                train_dir: None,
                test_dir: None,
                train_file: None,
                test_file: None,
                sensor_width: 34,
                sensor_height: 34,
                window_us: 300_000,
                n_classes: 10,
                train_subset: None,
                test_subset: None,
                subset_seed: 0,
            },
            train: TrainConfig {
                epochs: 20,
                batch_size: 16,
                seed: 0,
                optim: OptimConfig::default(),
                eps_slope: None,
                dead_kappa: 0.0,
                psc_timing: PscTiming::Onset,
                serial: false,
                output_dir: PathBuf::from("run"),
            },
        }
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse {v:?}"))
}

fn parse_steps(v: &str) -> std::result::Result<Vec<usize>, String> {
    v.split_whitespace().map(parse_num).collect()
}

fn parse_raster(v: &str) -> std::result::Result<Vec<Vec<u8>>, String> {
    v.split_whitespace()
        .map(|row| {
            row.chars()
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    _ => Err(format!("raster rows use 0 and 1, found {c:?}")),
                })
                .collect()
        })
        .collect()
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, found {v:?}")),
    }
}

impl RunConfig {
    /// Reads and validates a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let cfg = Self::parse(&text, path, base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses config text without validating it. `origin` names the text in
    /// errors; relative paths are joined onto `base`.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.train.output_dir = base.join(&cfg.train.output_dir);
        let mut section: Option<String> = None;
        let mut seen = std::collections::HashSet::new();
        let mut have_arch = false;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let err = |message: String| Error::ConfigFile {
                path: origin.to_path_buf(),
                line: line_no,
                message,
            };
            let line = raw.split_once('#').map_or(raw, |(content, _)| content).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err("unterminated section header".into()))?
                    .trim();
                if !["model", "target", "data", "train"].contains(&name) {
                    return Err(err(format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let sec = section
                .as_deref()
                .ok_or_else(|| err(format!("key {key:?} outside any section")))?;
            if !seen.insert(format!("{sec}.{key}")) {
                return Err(err(format!("duplicate key {key:?} in [{sec}]")));
            }
            let path = || base.join(value);
            let m = &mut cfg;
            let r: std::result::Result<(), String> = match (sec, key) {
                ("model", "architecture") => {
                    have_arch = true;
                    m.model.architecture = value.to_string();
                    Ok(())
                }
                ("model", "input_shape") => value
                    .parse::<Geometry>()
                    .map(|g| m.model.input_shape = Some(g))
                    .map_err(|e| e.to_string()),
                ("model", "n_steps") => parse_num(value).map(|v| m.model.n_steps = v),
                ("model", "tau_m") => parse_num(value).map(|v| m.model.neuron.tau_m = v),
                ("model", "tau_s") => parse_num(value).map(|v| m.model.neuron.tau_s = v),
                ("model", "v_th") => parse_num(value).map(|v| m.model.neuron.v_th = v),
                ("model", "init_gain") => parse_num(value).map(|v| m.model.init.gain = v),
                ("target", "kernel_tau") => parse_num(value).map(|v| m.target.kernel_tau = Some(v)),
                ("target", "readout") => choice(
                    value,
                    "readout",
                    &[("psc", Readout::SummedPsc), ("count", Readout::SpikeCount)],
                )
                .map(|v| m.target.readout = v),
                ("target", "true_steps") => parse_steps(value).map(|v| m.target.true_steps = Some(v)),
                ("target", "other_steps") => parse_steps(value).map(|v| m.target.other_steps = v),
                ("target", k) if k.starts_with("class.") => parse_num::<usize>(&k["class.".len()..])
                    .and_then(|class| parse_raster(value).map(|r| (class, r)))
                    .map(|(class, r)| {
                        m.target.classes.insert(class, r);
                    }),
                ("data", "format") => choice(
                    value,
                    "format",
                    &[
                        ("idx", DataFormat::Idx),
                        ("events", DataFormat::Events),
                        ("cifar", DataFormat::Cifar),
                    ],
                )
                .map(|v| m.data.format = v),
                ("data", "train_images") => {
                    m.data.train_images = Some(path());
                    Ok(())
                }
                ("data", "train_labels") => {
                    m.data.train_labels = Some(path());
                    Ok(())
                }
                ("data", "test_images") => {
                    m.data.test_images = Some(path());
                    Ok(())
                }
                ("data", "test_labels") => {
                    m.data.test_labels = Some(path());
                    Ok(())
                }
                ("data", "train_dir") => {
                    m.data.train_dir = Some(path());
                    Ok(())
                }
                ("data", "test_dir") => {
                    m.data.test_dir = Some(path());
                    Ok(())
                }
                ("data", "train_file") => {
                    m.data.train_file = Some(path());
                    Ok(())
                }
                ("data", "test_file") => {
                    m.data.test_file = Some(path());
                    Ok(())
                }
                ("data", "sensor_width") => parse_num(value).map(|v| m.data.sensor_width = v),
                ("data", "sensor_height") => parse_num(value).map(|v| m.data.sensor_height = v),
                ("data", "window_us") => parse_num(value).map(|v| m.data.window_us = v),
                ("data", "n_classes") => parse_num(value).map(|v| m.data.n_classes = v),
                ("data", "train_subset") => parse_num(value).map(|v| m.data.train_subset = Some(v)),
                ("data", "test_subset") => parse_num(value).map(|v| m.data.test_subset = Some(v)),
                ("data", "subset_seed") => parse_num(value).map(|v| m.data.subset_seed = v),
                ("train", "epochs") => parse_num(value).map(|v| m.train.epochs = v),
                ("train", "batch_size") => parse_num(value).map(|v| m.train.batch_size = v),
                ("train", "seed") => parse_num(value).map(|v| m.train.seed = v),
                ("train", "optimizer") => choice(
                    value,
                    "optimizer",
                    &[("adam", OptimKind::Adam), ("sgd", OptimKind::Sgd)],
                )
                .map(|v| m.train.optim.kind = v),
                ("train", "lr") => parse_num(value).map(|v| m.train.optim.lr = v),
                ("train", "beta1") => parse_num(value).map(|v| m.train.optim.beta1 = v),
                ("train", "beta2") => parse_num(value).map(|v| m.train.optim.beta2 = v),
                ("train", "adam_eps") => parse_num(value).map(|v| m.train.optim.eps = v),
                ("train", "eps_slope") => parse_num(value).map(|v| m.train.eps_slope = Some(v)),
                ("train", "dead_kappa") => parse_num(value).map(|v| m.train.dead_kappa = v),
                ("train", "psc_timing") => choice(
                    value,
                    "psc_timing",
                    &[("onset", PscTiming::Onset), ("decay", PscTiming::Decay)],
                )
                .map(|v| m.train.psc_timing = v),
                ("train", "serial") => parse_bool(value).map(|v| m.train.serial = v),
                ("train", "output_dir") => {
                    m.train.output_dir = path();
                    Ok(())
                }
                (s, k) => Err(format!("unknown key {k:?} in [{s}]")),
            };
            r.map_err(err)?;
        }
        if !have_arch {
            return Err(Error::ConfigFile {
                path: origin.to_path_buf(),
                line: 0,
                message: "[model] architecture is required".into(),
            });
        }
        Ok(cfg)
    }

    /// Checks ranges and that every referenced input file exists.
    pub fn validate(&self) -> Result<()> {
        let net = self.network()?;
        let bad = |m: String| Err(Error::Config(m));
        if let Some(tau) = self.target.kernel_tau {
            if !(tau > 1.0) {
                return bad(format!("kernel_tau must be > 1, got {tau}"));
            }
        }
        let t = &self.train;
        if t.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        let o = &t.optim;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", o.lr));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and adam_eps must be positive".into());
        }
        if let Some(e) = t.eps_slope {
            if !(e > 0.0) {
                return bad(format!("eps_slope must be positive, got {e}"));
            }
        }
        if !(t.dead_kappa >= 0.0 && t.dead_kappa.is_finite()) {
            return bad(format!("dead_kappa must be non-negative, got {}", t.dead_kappa));
        }
        if !(self.model.init.gain > 0.0) {
            return bad("init_gain must be positive".into());
        }
        self.target_spec(&net)?;
        let d = &self.data;
        let required: Vec<(&str, &Option<PathBuf>)> = match d.format {
            DataFormat::Idx => vec![
                ("train_images", &d.train_images),
                ("train_labels", &d.train_labels),
                ("test_images", &d.test_images),
                ("test_labels", &d.test_labels),
            ],
            DataFormat::Events => vec![("train_dir", &d.train_dir), ("test_dir", &d.test_dir)],
            DataFormat::Cifar => vec![("train_file", &d.train_file), ("test_file", &d.test_file)],
        };
        for (key, p) in required {
            match p {
                None => return bad(format!("[data] {key} is required for this format")),
                Some(p) if !p.exists() => return bad(format!("[data] {key}: {} does not exist", p.display())),
                Some(_) => {}
            }
        }
        if d.format == DataFormat::Events && (d.window_us == 0 || d.sensor_width == 0 || d.sensor_height == 0) {
            return bad("event sensor size and window must be positive".into());
        }
        Ok(())
    }

    /// The network described by `[model]`, with zero weights.
    pub fn network(&self) -> Result<NetworkSpec> {
        let m = &self.model;
        NetworkSpec::from_arch(&m.architecture, m.input_shape, m.neuron, m.n_steps)
    }

    pub fn kernel_tau(&self, net: &NetworkSpec) -> f64 {
        self.target
            .kernel_tau
            .unwrap_or_else(|| net.neuron_config(net.layers.len() - 1).tau_s)
    }

    /// Target rasters for every class the output layer can represent.
    pub fn target_spec(&self, net: &NetworkSpec) -> Result<TargetSpec> {
        let n_out = net.output_size();
        let steps = net.n_steps;
        let tc = &self.target;
        let all: Vec<usize> = (0..steps).collect();
        let true_steps = tc.true_steps.as_ref().unwrap_or(&all);
        if let Some(&s) = true_steps.iter().chain(&tc.other_steps).find(|&&s| s >= steps) {
            return Err(Error::Config(format!(
                "target step {s} outside the {steps}-step window"
            )));
        }
        let mut pattern = vec![0u8; n_out * n_out * steps];
        for class in 0..n_out {
            let block = &mut pattern[class * n_out * steps..(class + 1) * n_out * steps];
            if let Some(rows) = tc.classes.get(&class) {
                if rows.len() != n_out || rows.iter().any(|r| r.len() != steps) {
                    return Err(Error::Config(format!(
                        "target class.{class} must have {n_out} rows of {steps} steps"
                    )));
                }
                block.copy_from_slice(&rows.concat());
                continue;
            }
            for n in 0..n_out {
                let steps_on = if n == class { true_steps } else { &tc.other_steps };
                for &s in steps_on {
                    block[n * steps + s] = 1;
                }
            }
        }
        if let Some(&c) = tc.classes.keys().find(|&&c| c >= n_out) {
            return Err(Error::Config(format!("target class.{c} exceeds the {n_out} outputs")));
        }
        TargetSpec::custom(n_out, n_out, steps, pattern, self.kernel_tau(net))
    }

    pub fn backprop(&self) -> BackpropConfig {
        BackpropConfig {
            eps_slope: self.train.eps_slope,
            dead_kappa: self.train.dead_kappa,
            psc_timing: self.train.psc_timing,
        }
    }

    fn binning(&self) -> EventBinning {
        EventBinning {
            width: self.data.sensor_width,
            height: self.data.sensor_height,
            n_steps: self.model.n_steps,
            window_us: self.data.window_us,
            tau_s: self.model.neuron.tau_s,
        }
    }

    fn required(p: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        p.clone()
            .ok_or_else(|| Error::Config(format!("[data] {key} is not set")))
    }

    /// Loads the training set, applying the configured subset selection.
    pub fn load_train(&self) -> Result<DatasetHandle> {
        let d = &self.data;
        let full = match d.format {
            DataFormat::Idx => load_idx(
                Self::required(&d.train_images, "train_images")?,
                Self::required(&d.train_labels, "train_labels")?,
            )?,
            DataFormat::Events => {
                load_event_dir(Self::required(&d.train_dir, "train_dir")?, &self.binning(), d.n_classes)?
            }
            DataFormat::Cifar => load_cifar_batch(Self::required(&d.train_file, "train_file")?)?,
        };
        Ok(match d.train_subset {
            Some(n) => full.subset(n, d.subset_seed),
            None => full,
        })
    }

    /// Loads the test set, applying the configured subset selection.
    pub fn load_test(&self) -> Result<DatasetHandle> {
        let d = &self.data;
        let full = match d.format {
            DataFormat::Idx => load_idx(
                Self::required(&d.test_images, "test_images")?,
                Self::required(&d.test_labels, "test_labels")?,
            )?,
            DataFormat::Events => {
                load_event_dir(Self::required(&d.test_dir, "test_dir")?, &self.binning(), d.n_classes)?
            }
            DataFormat::Cifar => load_cifar_batch(Self::required(&d.test_file, "test_file")?)?,
        };
        Ok(match d.test_subset {
            Some(n) => full.subset(n, d.subset_seed),
            None => full,
        })
    }

    /// Loads a test set from a directory holding the usual file names:
    /// `index.txt` for events, `t10k-images-idx3-ubyte` and
    /// `t10k-labels-idx1-ubyte` for IDX, or `test_batch.bin` for CIFAR-10.
    pub fn load_dir(&self, dir: &Path) -> Result<DatasetHandle> {
        if dir.join("index.txt").exists() {
            return load_event_dir(dir, &self.binning(), self.data.n_classes);
        }
        if dir.join("test_batch.bin").exists() {
            return load_cifar_batch(dir.join("test_batch.bin"));
        }
        load_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"))
    }

    /// Renders the config in the file format; parsing the result gives back
    /// an equal config (paths are written as stored).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let m = &self.model;
        let _ = writeln!(s, "[model]");
        let _ = writeln!(s, "architecture = {}", m.architecture);
        if let Some(g) = m.input_shape {
            let _ = writeln!(s, "input_shape = {}x{}x{}", g.channels, g.height, g.width);
        }
        let _ = writeln!(s, "n_steps = {}", m.n_steps);
        let _ = writeln!(s, "tau_m = {:?}", m.neuron.tau_m);
        let _ = writeln!(s, "tau_s = {:?}", m.neuron.tau_s);
        let _ = writeln!(s, "v_th = {:?}", m.neuron.v_th);
        let _ = writeln!(s, "init_gain = {:?}", m.init.gain);

        let t = &self.target;
        let _ = writeln!(s, "\n[target]");
        if let Some(k) = t.kernel_tau {
            let _ = writeln!(s, "kernel_tau = {k:?}");
        }
        let readout = match t.readout {
            Readout::SummedPsc => "psc",
            Readout::SpikeCount => "count",
        };
        let _ = writeln!(s, "readout = {readout}");
        let steps = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        if let Some(ts) = &t.true_steps {
            let _ = writeln!(s, "true_steps = {}", steps(ts));
        }
        if !t.other_steps.is_empty() {
            let _ = writeln!(s, "other_steps = {}", steps(&t.other_steps));
        }
        for (c, rows) in &t.classes {
            let rows: Vec<String> = rows
                .iter()
                .map(|r| r.iter().map(|b| char::from(b'0' + b)).collect())
                .collect();
            let _ = writeln!(s, "class.{c} = {}", rows.join(" "));
        }

        let d = &self.data;
        let _ = writeln!(s, "\n[data]");
        let format = match d.format {
            DataFormat::Idx => "idx",
            DataFormat::Events => "events",
            DataFormat::Cifar => "cifar",
        };
        let _ = writeln!(s, "format = {format}");
        for (key, p) in [
            ("train_images", &d.train_images),
            ("train_labels", &d.train_labels),
            ("test_images", &d.test_images),
            ("test_labels", &d.test_labels),
            ("train_dir", &d.train_dir),
            ("test_dir", &d.test_dir),
            ("train_file", &d.train_file),
            ("test_file", &d.test_file),
        ] {
            if let Some(p) = p {
                let _ = writeln!(s, "{key} = {}", p.display());
            }
        }
        if d.format == DataFormat::Events {
            let _ = writeln!(s, "sensor_width = {}", d.sensor_width);
            let _ = writeln!(s, "sensor_height = {}", d.sensor_height);
            let _ = writeln!(s, "window_us = {}", d.window_us);
            let _ = writeln!(s, "n_classes = {}", d.n_classes);
        }
        if let Some(n) = d.train_subset {
            let _ = writeln!(s, "train_subset = {n}");
        }
        if let Some(n) = d.test_subset {
            let _ = writeln!(s, "test_subset = {n}");
        }
        let _ = writeln!(s, "subset_seed = {}", d.subset_seed);

        let t = &self.train;
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "epochs = {}", t.epochs);
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "seed = {}", t.seed);
        let kind = match t.optim.kind {
            OptimKind::Adam => "adam",
            OptimKind::Sgd => "sgd",
        };
        let _ = writeln!(s, "optimizer = {kind}");
        let _ = writeln!(s, "lr = {:?}", t.optim.lr);
        let _ = writeln!(s, "beta1 = {:?}", t.optim.beta1);
        let _ = writeln!(s, "beta2 = {:?}", t.optim.beta2);
        let _ = writeln!(s, "adam_eps = {:?}", t.optim.eps);
        if let Some(e) = t.eps_slope {
            let _ = writeln!(s, "eps_slope = {e:?}");
        }
        let _ = writeln!(s, "dead_kappa = {:?}", t.dead_kappa);
        let timing = match t.psc_timing {
            PscTiming::Onset => "onset",
            PscTiming::Decay => "decay",
        };
        let _ = writeln!(s, "psc_timing = {timing}");
        let _ = writeln!(s, "serial = {}", t.serial);
        let _ = writeln!(s, "output_dir = {}", t.output_dir.display());
        s
    }
}

/// Maps a keyword to its value, listing the accepted words on failure.
fn choice<T: Copy>(value: &str, key: &str, options: &[(&str, T)]) -> std::result::Result<T, String> {
    options
        .iter()
        .find(|(name, _)| *name == value)
        .map(|&(_, v)| v)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(name, _)| *name).collect();
            format!("{key} must be one of {}, found {value:?}", names.join(", "))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "
# toy run
[model]
architecture = 4-3-2
n_steps = 3  # per sample

[target]
other_steps = 2
class.1 = 000 111

[data]
format = idx
train_images = a
train_labels = b

[train]
lr = 0.001
seed = 9
";

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("toy.cfg"), Path::new("/base"))
    }

    #[test]
    fn parses_and_resolves_paths() {
        let c = parse(TOY).unwrap();
        assert_eq!(c.model.architecture, "4-3-2");
        assert_eq!(c.model.n_steps, 3);
        assert_eq!(c.train.optim.lr, 0.001);
        assert_eq!(c.train.seed, 9);
        assert_eq!(c.data.train_images.as_deref(), Some(Path::new("/base/a")));
        assert_eq!(c.target.classes[&1], vec![vec![0, 0, 0], vec![1, 1, 1]]);
    }

    #[test]
    fn text_round_trip() {
        let c = parse(TOY).unwrap();
        let again = RunConfig::parse(&c.to_text(), Path::new("x"), Path::new("/elsewhere")).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn target_table() {
        let c = parse(TOY).unwrap();
        let net = c.network().unwrap();
        let t = c.target_spec(&net).unwrap();
        assert_eq!(t.encode(0).unwrap().row(0), &[1, 1, 1]);
        assert_eq!(t.encode(0).unwrap().row(1), &[0, 0, 1]);
        assert_eq!(t.encode(1).unwrap().row(0), &[0, 0, 0]);
        assert_eq!(t.encode(1).unwrap().row(1), &[1, 1, 1]);
        assert_eq!(t.kernel_tau, NeuronConfig::default().tau_s);
    }

    #[test]
    fn rejects_unknown_and_malformed_lines() {
        let cases = [
            ("[model]\narchitecture = 4-2\nwidth = 3\n", 3),
            ("[model]\narchitecture = 4-2\n[extra]\n", 3),
            ("architecture = 4-2\n", 1),
            ("[model]\narchitecture = 4-2\nn_steps = five\n", 3),
            ("[model]\narchitecture = 4-2\narchitecture = 4-3\n", 3),
            ("[model]\narchitecture 4-2\n", 2),
            ("[train]\noptimizer = rmsprop\n", 2),
        ];
        for (text, line) in cases {
            match parse(text) {
                Err(Error::ConfigFile { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(
            parse("[train]\nlr = 0.1\n"),
            Err(Error::ConfigFile { line: 0, .. })
        ));
    }

    #[test]
    fn validation_checks_files_and_ranges() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["a", "b", "c", "d"] {
            std::fs::write(dir.path().join(f), b"").unwrap();
        }
        let text = "[model]\narchitecture = 4-2\n[data]\ntrain_images = a\ntrain_labels = b\ntest_images = c\ntest_labels = d\n";
        let ok = RunConfig::parse(text, Path::new("t"), dir.path()).unwrap();
        ok.validate().unwrap();
        let missing = RunConfig::parse(&text.replace("= d", "= nope"), Path::new("t"), dir.path()).unwrap();
        assert!(matches!(missing.validate(), Err(Error::Config(_))));
        let mut bad = ok.clone();
        bad.train.optim.lr = -1.0;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.target.other_steps = vec![7];
        assert!(bad.validate().is_err());
    }
}
