//! Training state, the one-to-one critic/generator loop, and checkpoints.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use hg_autodiff::checkpoint::{read_tensors, write_tensors};
use hg_autodiff::{Graph, Tensor, Var};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::loss::{critic_loss, generator_loss, LossConfig, Objective};
use super::nets::{
    discriminator_layers, generator_forward, generator_layers, pnet_layers, ParamSet, ScaleConfig,
};
use crate::error::{HairError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch: usize,
    pub objective: Objective,
    pub loss: LossConfig,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            lr_g: 1e-4,
            lr_d: 3e-4,
            beta1: 0.0,
            beta2: 0.9,
            adam_eps: 1e-8,
            batch: 4,
            objective: Objective::FeatureMatch,
            loss: LossConfig::default(),
        }
    }
}

impl Hyper {
    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

/// One training pair as network tensors: `X: [R, R, 4]`, `Y: [r, r, D, 3]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: Tensor,
    pub y: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanState {
    pub scale: ScaleConfig,
    pub hyper: Hyper,
    pub seed: u64,
    pub iter: u64,
    pub d_updates: u64,
    pub g_updates: u64,
    pub gen: ParamSet,
    pub pnet: ParamSet,
    pub disc: ParamSet,
    pub adam_g: Adam,
    pub adam_d: Adam,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterMetrics {
    pub iter: u64,
    pub loss_d: f64,
    pub loss_g: f64,
    pub content: f64,
    pub style: f64,
    pub content0: f64,
    pub wall_ms: f64,
}

impl GanState {
    pub fn new(scale: ScaleConfig, hyper: Hyper, seed: u64) -> Result<Self> {
        scale.validate()?;
        if hyper.batch == 0 {
            return Err(HairError::InvalidArgument("batch size must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = ParamSet::init(&generator_layers(&scale), &mut rng);
        let pnet = ParamSet::init(&pnet_layers(&scale), &mut rng);
        let disc = ParamSet::init(&discriminator_layers(&scale), &mut rng);
        Ok(Self {
            adam_g: Adam::new(hyper.adam(hyper.lr_g)),
            adam_d: Adam::new(hyper.adam(hyper.lr_d)),
            scale,
            hyper,
            seed,
            iter: 0,
            d_updates: 0,
            g_updates: 0,
            gen,
            pnet,
            disc,
        })
    }

    pub fn check_sample(&self, s: &Sample) -> Result<()> {
        let r = self.scale.img_res();
        let [a, b, c] = self.scale.vol_shape();
        if s.x.shape() != [r, r, 4] || s.y.shape() != [a, b, c, 3] {
            return Err(HairError::Dataset(format!(
                "sample shapes X {:?} / Y {:?} do not match scale k={} (X [{r}, {r}, 4], Y [{a}, {b}, {c}, 3])",
                s.x.shape(),
                s.y.shape(),
                self.scale.k
            )));
        }
        Ok(())
    }

    /// Raw generator output for one input.
    pub fn generate_raw(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.gen.bind(&mut g, false)?;
        let xv = g.constant(x.clone())?;
        let y = generator_forward(&mut g, &self.scale, &p, xv)?;
        Ok(g.value(y).clone())
    }

    /// Inference output, clamped to `[0, 1]`.
    pub fn generate(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.generate_raw(x)?.map(|v| v.clamp(0.0, 1.0)))
    }

    /// Mean layer-0 content loss `½ Σ (Y − Ỹ)²` of the raw output over `data`.
    pub fn content0(&self, data: &[Sample]) -> Result<f64> {
        let mut total = 0.0;
        for s in data {
            let out = self.generate_raw(&s.x)?;
            total += 0.5
                * out
                    .data()
                    .iter()
                    .zip(s.y.data())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
        }
        Ok(total / data.len().max(1) as f64)
    }

    fn iteration_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.iter);
        rng
    }

    /// One critic update followed by one generator update.
    pub fn step(&mut self, data: &[Sample]) -> Result<IterMetrics> {
        if data.is_empty() {
            return Err(HairError::Dataset("training set is empty".into()));
        }
        let start = Instant::now();
        let mut rng = self.iteration_rng();
        let b = self.hyper.batch;
        let idx: Vec<usize> = if b <= data.len() {
            sample(&mut rng, data.len(), b).into_vec()
        } else {
            (0..b).map(|_| rng.random_range(0..data.len())).collect()
        };
        let eps: Vec<f64> = (0..b).map(|_| rng.random::<f64>()).collect();
        let s = self.scale;

        // generator forward, reused for the generator step
        let mut gg = Graph::new();
        let pg = self.gen.bind(&mut gg, true)?;
        let mut xs = Vec::with_capacity(b);
        let mut fakes = Vec::with_capacity(b);
        for &i in &idx {
            self.check_sample(&data[i])?;
            let x = gg.constant(data[i].x.clone())?;
            fakes.push(generator_forward(&mut gg, &s, &pg, x)?);
            xs.push(x);
        }

        // critic step: θ_D and θ_P
        let mut gd = Graph::new();
        let pd = self.disc.bind(&mut gd, true)?;
        let pp = self.pnet.bind(&mut gd, true)?;
        let mut terms = Vec::with_capacity(b);
        for (k, &i) in idx.iter().enumerate() {
            let x = gd.constant(data[i].x.clone())?;
            let real = gd.constant(data[i].y.clone())?;
            let fake = gd.constant(gg.value(fakes[k]).clone())?;
            terms.push(critic_loss(
                &mut gd,
                &s,
                &pd,
                &pp,
                x,
                real,
                fake,
                eps[k],
                self.hyper.loss.lambda,
            )?);
        }
        let loss_d = mean_of(&mut gd, &terms)?;
        let loss_d_val = gd.value(loss_d).item();
        let gd_grads = grads_by_name(&mut gd, loss_d, &[&pd.vars, &pp.vars])?;
        self.adam_d.advance();
        self.adam_d.update("D.", &mut self.disc, &gd_grads[0])?;
        self.adam_d.update("P.", &mut self.pnet, &gd_grads[1])?;
        self.d_updates += 1;

        // generator step with the updated critic frozen
        let pd = self.disc.bind(&mut gg, false)?;
        let pp = self.pnet.bind(&mut gg, false)?;
        let mut totals = Vec::with_capacity(b);
        let (mut content, mut style, mut content0) = (0.0, 0.0, 0.0);
        for (k, &i) in idx.iter().enumerate() {
            let real = gg.constant(data[i].y.clone())?;
            let t = generator_loss(
                &mut gg,
                &s,
                &self.hyper.loss,
                self.hyper.objective,
                &pd,
                &pp,
                xs[k],
                real,
                fakes[k],
            )?;
            content += gg.value(t.content).item();
            style += gg.value(t.style).item();
            content0 += gg.value(t.content0).item();
            totals.push(t.total);
        }
        let loss_g = mean_of(&mut gg, &totals)?;
        let loss_g_val = gg.value(loss_g).item();
        let g_grads = grads_by_name(&mut gg, loss_g, &[&pg.vars])?;
        self.adam_g.advance();
        self.adam_g.update("G.", &mut self.gen, &g_grads[0])?;
        self.g_updates += 1;
        self.iter += 1;

        let bf = b as f64;
        Ok(IterMetrics {
            iter: self.iter,
            loss_d: loss_d_val,
            loss_g: loss_g_val,
            content: content / bf,
            style: style / bf,
            content0: content0 / bf,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Runs `n_iter` iterations, handing each iteration's metrics and the
    /// state to `on_iter`.
    pub fn train(
        &mut self,
        data: &[Sample],
        n_iter: u64,
        mut on_iter: impl FnMut(&IterMetrics, &GanState) -> Result<()>,
    ) -> Result<Vec<IterMetrics>> {
        for s in data {
            self.check_sample(s)?;
        }
        let mut log = Vec::with_capacity(n_iter as usize);
        for _ in 0..n_iter {
            let m = self.step(data)?;
            on_iter(&m, self)?;
            log.push(m);
        }
        Ok(log)
    }
}

fn mean_of(g: &mut Graph, terms: &[Var]) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    Ok(g.scale(acc, 1.0 / terms.len() as f64)?)
}

fn grads_by_name(
    g: &mut Graph,
    root: Var,
    sets: &[&BTreeMap<String, Var>],
) -> Result<Vec<BTreeMap<String, Tensor>>> {
    let wrt: Vec<Var> = sets.iter().flat_map(|m| m.values().copied()).collect();
    let grads = g.backward(root, &wrt)?;
    let mut it = grads.into_iter();
    Ok(sets
        .iter()
        .map(|m| {
            m.keys()
                .map(|k| (k.clone(), g.value(it.next().expect("one grad per var")).clone()))
                .collect()
        })
        .collect())
}

/// Header stored next to a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub k: usize,
    pub chan_div: usize,
    pub seed: u64,
    pub iter: u64,
    pub d_updates: u64,
    pub g_updates: u64,
    pub adam_g_t: u64,
    pub adam_d_t: u64,
    pub hyper: Hyper,
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(suffix);
    PathBuf::from(p)
}

/// Sidecar header path: `<checkpoint>.toml`.
pub fn header_path(path: &Path) -> PathBuf {
    with_suffix(path, ".toml")
}

pub fn read_header(path: &Path) -> Result<CheckpointHeader> {
    let hp = header_path(path);
    let text = std::fs::read_to_string(&hp).map_err(|e| HairError::io(&hp, e))?;
    toml::from_str(&text).map_err(|e| HairError::format(&hp, e.to_string()))
}

impl GanState {
    fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (prefix, set) in [("G.", &self.gen), ("P.", &self.pnet), ("D.", &self.disc)] {
            for (k, t) in &set.tensors {
                out.push((format!("{prefix}{k}"), t.clone()));
            }
        }
        for (prefix, opt) in [("adam_g", &self.adam_g), ("adam_d", &self.adam_d)] {
            for (k, t) in &opt.m {
                out.push((format!("{prefix}.m.{k}"), t.clone()));
            }
            for (k, t) in &opt.v {
                out.push((format!("{prefix}.v.{k}"), t.clone()));
            }
        }
        out
    }

    /// Writes the tensors to `path` and the header to `<path>.toml`, each via
    /// a temporary file and rename so an interrupted save leaves the previous
    /// checkpoint intact.
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            format: "hairgan-checkpoint-1".into(),
            k: self.scale.k,
            chan_div: self.scale.chan_div,
            seed: self.seed,
            iter: self.iter,
            d_updates: self.d_updates,
            g_updates: self.g_updates,
            adam_g_t: self.adam_g.t,
            adam_d_t: self.adam_d.t,
            hyper: self.hyper.clone(),
        };
        let text = toml::to_string(&header).map_err(|e| HairError::format(path, e.to_string()))?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| HairError::io(dir, e))?;
        }
        let tmp = with_suffix(path, ".tmp");
        {
            let f = File::create(&tmp).map_err(|e| HairError::io(&tmp, e))?;
            let mut w = BufWriter::new(f);
            write_tensors(&mut w, &self.named_tensors())
                .map_err(|e| HairError::format(path, e.to_string()))?;
            w.flush().map_err(|e| HairError::io(&tmp, e))?;
        }
        let hp = header_path(path);
        let htmp = with_suffix(&hp, ".tmp");
        std::fs::write(&htmp, text).map_err(|e| HairError::io(&htmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| HairError::io(path, e))?;
        std::fs::rename(&htmp, &hp).map_err(|e| HairError::io(&hp, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let header = read_header(path)?;
        let scale = ScaleConfig::new(header.k, header.chan_div)?;
        let f = File::open(path).map_err(|e| HairError::io(path, e))?;
        let tensors =
            read_tensors(BufReader::new(f)).map_err(|e| HairError::format(path, e.to_string()))?;
        let mut state = Self::new(scale, header.hyper.clone(), header.seed)?;
        let mut sets: [ParamSet; 3] = Default::default();
        let mut moments: [BTreeMap<String, Tensor>; 4] = Default::default();
        for (name, t) in tensors {
            let slot = |p: &str| name.strip_prefix(p).map(str::to_string);
            if let Some(k) = slot("G.") {
                sets[0].tensors.insert(k, t);
            } else if let Some(k) = slot("P.") {
                sets[1].tensors.insert(k, t);
            } else if let Some(k) = slot("D.") {
                sets[2].tensors.insert(k, t);
            } else if let Some(k) = slot("adam_g.m.") {
                moments[0].insert(k, t);
            } else if let Some(k) = slot("adam_g.v.") {
                moments[1].insert(k, t);
            } else if let Some(k) = slot("adam_d.m.") {
                moments[2].insert(k, t);
            } else if let Some(k) = slot("adam_d.v.") {
                moments[3].insert(k, t);
            } else {
                return Err(HairError::format(path, format!("unknown tensor {name}")));
            }
        }
        let [gen, pnet, disc] = sets;
        let tag = |e: HairError| HairError::format(path, e.to_string());
        gen.check(&generator_layers(&scale)).map_err(tag)?;
        pnet.check(&pnet_layers(&scale)).map_err(tag)?;
        disc.check(&discriminator_layers(&scale)).map_err(tag)?;
        let [gm, gv, dm, dv] = moments;
        state.gen = gen;
        state.pnet = pnet;
        state.disc = disc;
        state.adam_g.m = gm;
        state.adam_g.v = gv;
        state.adam_g.t = header.adam_g_t;
        state.adam_d.m = dm;
        state.adam_d.v = dv;
        state.adam_d.t = header.adam_d_t;
        state.iter = header.iter;
        state.d_updates = header.d_updates;
        state.g_updates = header.g_updates;
        Ok(state)
    }
}

/// CSV metrics log with one row per iteration.
pub struct MetricsLog {
    path: PathBuf,
    w: csv::Writer<File>,
}

impl MetricsLog {
    pub const HEADER: [&'static str; 6] = ["iter", "L_D", "L*_G", "content", "style", "wall_ms"];

    /// Creates a new log, or appends to an existing one when `append`.
    pub fn open(path: &Path, append: bool) -> Result<Self> {
        let exists = path.exists();
        let f = std::fs::OpenOptions::new()
            .create(true)
            .append(append)
            .write(true)
            .truncate(!append)
            .open(path)
            .map_err(|e| HairError::io(path, e))?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(f);
        if !(append && exists) {
            w.write_record(Self::HEADER)
                .map_err(|e| HairError::format(path, e.to_string()))?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            w,
        })
    }

    pub fn record(&mut self, m: &IterMetrics) -> Result<()> {
        self.w
            .write_record([
                m.iter.to_string(),
                m.loss_d.to_string(),
                m.loss_g.to_string(),
                m.content.to_string(),
                m.style.to_string(),
                format!("{:.3}", m.wall_ms),
            ])
            .and_then(|_| self.w.flush().map_err(csv::Error::from))
            .map_err(|e| HairError::format(&self.path, e.to_string()))
    }
}
