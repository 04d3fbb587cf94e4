//! Checkpoint directory:
//!
//! ```text
//! manifest.txt        parameter names, shapes and a sha256 over their MRFA bytes
//! params/<name>.mrfa  one file per parameter array
//! optimizer/          Adam step count, hyperparameters and moments (optional)
//! basis/              the fixed projection basis
//! model.cfg           model section in config syntax
//! training.txt        epochs, seed, steps
//! loss_curve.csv      epoch,train_loss,val_loss
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::network::{Model, ModelConfig};
use crate::config::{model_section_text, parse_model_section};
use crate::error::{domain, format_err, Result};
use crate::mrfa::MrfaArray;
use crate::nn::{AdamConfig, AdamState};
use crate::subspace::SubspaceBasis;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingMetadata {
    pub epochs: usize,
    pub seed: u64,
    pub steps: u64,
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Validation loss per epoch, NaN when no validation set was given.
    pub val_loss: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub basis: SubspaceBasis,
    pub metadata: TrainingMetadata,
    pub optimizer: Option<AdamState>,
}

const MANIFEST_HEADER: &str = "mrf-checkpoint 1";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn read_text(path: &Path, field: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| format_err(field, format!("{}: {e}", path.display())))
}

fn parse_num<T: std::str::FromStr>(s: &str, field: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| format_err(field, format!("cannot parse `{s}`")))
}

impl Checkpoint {
    pub fn new(model: Model, basis: SubspaceBasis, metadata: TrainingMetadata) -> Result<Self> {
        let c = Self {
            model,
            basis,
            metadata,
            optimizer: None,
        };
        c.check()?;
        Ok(c)
    }

    fn check(&self) -> Result<()> {
        if self.basis.d1() != self.model.config.input_channels {
            return domain(format!(
                "basis dimension {} does not match model input channels {}",
                self.basis.d1(),
                self.model.config.input_channels
            ));
        }
        Ok(())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        self.check()?;
        let dir = dir.as_ref();
        fs::create_dir_all(dir.join("params"))?;
        let mut manifest = format!("{MANIFEST_HEADER}\n");
        let mut hasher = Sha256::new();
        for p in self.model.params() {
            let bytes = MrfaArray::real(p.shape.clone(), p.values.to_vec())?.to_bytes();
            hasher.update(&bytes);
            fs::write(dir.join("params").join(format!("{}.mrfa", p.name)), &bytes)?;
            let dims: Vec<String> = p.shape.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(manifest, "param {} {}", p.name, dims.join(" "));
        }
        let _ = writeln!(manifest, "checksum sha256 {}", hex(&hasher.finalize()));
        fs::write(dir.join("manifest.txt"), manifest)?;

        let opt_dir = dir.join("optimizer");
        if opt_dir.exists() {
            fs::remove_dir_all(&opt_dir)?;
        }
        if let Some(opt) = &self.optimizer {
            fs::create_dir_all(&opt_dir)?;
            let c = opt.config;
            fs::write(
                opt_dir.join("state.txt"),
                format!(
                    "step {}\nlearning_rate {}\nbeta1 {}\nbeta2 {}\nepsilon {}\n",
                    opt.step, c.learning_rate, c.beta1, c.beta2, c.epsilon
                ),
            )?;
            for (k, p) in self.model.params().iter().enumerate() {
                for (tag, moments) in [("m", &opt.first_moment), ("v", &opt.second_moment)] {
                    let arr = MrfaArray::real(p.shape.clone(), moments[k].clone())?;
                    fs::write(
                        opt_dir.join(format!("{tag}.{}.mrfa", p.name)),
                        arr.to_bytes(),
                    )?;
                }
            }
        }

        self.basis.save(dir.join("basis"))?;
        fs::write(
            dir.join("model.cfg"),
            model_section_text(&self.model.config),
        )?;
        let m = &self.metadata;
        fs::write(
            dir.join("training.txt"),
            format!("epochs {}\nseed {}\nsteps {}\n", m.epochs, m.seed, m.steps),
        )?;
        let mut csv = String::from("epoch,train_loss,val_loss\n");
        for (e, t) in m.train_loss.iter().enumerate() {
            let v = m.val_loss.get(e).copied().unwrap_or(f64::NAN);
            let _ = writeln!(csv, "{},{t:e},{v:e}", e + 1);
        }
        fs::write(dir.join("loss_curve.csv"), csv)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let config: ModelConfig =
            parse_model_section(&read_text(&dir.join("model.cfg"), "model.cfg")?)?;
        let mut model = Model::zeros(&config)?;

        let manifest = read_text(&dir.join("manifest.txt"), "manifest")?;
        let mut lines = manifest.lines();
        if lines.next() != Some(MANIFEST_HEADER) {
            return Err(format_err("manifest", "missing header"));
        }
        let expected: Vec<(String, Vec<usize>)> = model
            .params()
            .iter()
            .map(|p| (p.name.clone(), p.shape.clone()))
            .collect();
        let mut hasher = Sha256::new();
        let mut values = Vec::with_capacity(expected.len());
        let mut checksum = None;
        let mut seen = 0;
        for line in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["param", name, dims @ ..] => {
                    let (ename, eshape) = expected.get(seen).ok_or_else(|| {
                        format_err("manifest", format!("unexpected parameter {name}"))
                    })?;
                    let shape: Vec<usize> = dims
                        .iter()
                        .map(|d| parse_num(d, "manifest"))
                        .collect::<Result<_>>()?;
                    if name != ename || &shape != eshape {
                        return Err(format_err(
                            "manifest",
                            format!(
                                "entry {seen} is {name} {shape:?}, model needs {ename} {eshape:?}"
                            ),
                        ));
                    }
                    let bytes = fs::read(dir.join("params").join(format!("{name}.mrfa")))?;
                    hasher.update(&bytes);
                    let (dims, v) = MrfaArray::from_bytes(&bytes)?.into_real(name)?;
                    if dims != shape {
                        return Err(format_err(
                            name.to_string(),
                            format!("dims {dims:?}, expected {shape:?}"),
                        ));
                    }
                    values.push(v);
                    seen += 1;
                }
                ["checksum", "sha256", sum] => checksum = Some(sum.to_string()),
                [] => {}
                _ => {
                    return Err(format_err(
                        "manifest",
                        format!("unrecognized line `{line}`"),
                    ))
                }
            }
        }
        if seen != expected.len() {
            return Err(format_err(
                "manifest",
                format!("{seen} parameters listed, {} expected", expected.len()),
            ));
        }
        let actual = hex(&hasher.finalize());
        match checksum {
            Some(sum) if sum == actual => {}
            Some(sum) => {
                return Err(format_err(
                    "checksum",
                    format!("manifest says {sum}, files hash to {actual}"),
                ))
            }
            None => return Err(format_err("checksum", "missing from manifest")),
        }
        for (dst, src) in model.params_mut().into_iter().zip(values) {
            dst.copy_from_slice(&src);
        }

        let opt_dir = dir.join("optimizer");
        let optimizer = if opt_dir.exists() {
            let state = read_text(&opt_dir.join("state.txt"), "optimizer")?;
            let mut kv = std::collections::HashMap::new();
            for line in state.lines().filter(|l| !l.trim().is_empty()) {
                let (k, v) = line
                    .split_once(' ')
                    .ok_or_else(|| format_err("optimizer", format!("bad line `{line}`")))?;
                kv.insert(k.to_string(), v.to_string());
            }
            let get = |k: &str| {
                kv.get(k)
                    .ok_or_else(|| format_err("optimizer", format!("missing {k}")))
            };
            let config = AdamConfig {
                learning_rate: parse_num(get("learning_rate")?, "optimizer")?,
                beta1: parse_num(get("beta1")?, "optimizer")?,
                beta2: parse_num(get("beta2")?, "optimizer")?,
                epsilon: parse_num(get("epsilon")?, "optimizer")?,
            };
            let sizes: Vec<usize> = expected.iter().map(|(_, s)| s.iter().product()).collect();
            let mut st = AdamState::new(config, &sizes);
            st.step = parse_num(get("step")?, "optimizer")?;
            for (k, (name, shape)) in expected.iter().enumerate() {
                for (tag, target) in [
                    ("m", &mut st.first_moment[k]),
                    ("v", &mut st.second_moment[k]),
                ] {
                    let bytes = fs::read(opt_dir.join(format!("{tag}.{name}.mrfa")))?;
                    let (dims, v) = MrfaArray::from_bytes(&bytes)?.into_real("optimizer")?;
                    if &dims != shape {
                        return Err(format_err(
                            "optimizer",
                            format!("{tag}.{name} has dims {dims:?}"),
                        ));
                    }
                    *target = v;
                }
            }
            Some(st)
        } else {
            None
        };

        let basis = SubspaceBasis::load(dir.join("basis"))?;
        let training = read_text(&dir.join("training.txt"), "training")?;
        let mut meta = TrainingMetadata {
            epochs: 0,
            seed: 0,
            steps: 0,
            train_loss: Vec::new(),
            val_loss: Vec::new(),
        };
        for line in training.lines().filter(|l| !l.trim().is_empty()) {
            match line.split_once(' ') {
                Some(("epochs", v)) => meta.epochs = parse_num(v, "training")?,
                Some(("seed", v)) => meta.seed = parse_num(v, "training")?,
                Some(("steps", v)) => meta.steps = parse_num(v, "training")?,
                _ => return Err(format_err("training", format!("bad line `{line}`"))),
            }
        }
        let csv = read_text(&dir.join("loss_curve.csv"), "loss_curve")?;
        for line in csv.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(format_err("loss_curve", format!("bad row `{line}`")));
            }
            meta.train_loss.push(parse_num(cols[1], "loss_curve")?);
            meta.val_loss.push(parse_num(cols[2], "loss_curve")?);
        }

        let c = Self {
            model,
            basis,
            metadata: meta,
            optimizer,
        };
        c.check().map_err(|e| format_err("basis", e.to_string()))?;
        Ok(c)
    }
}
