use std::path::Path;

use rand::{Rng, SeedableRng};
use serde_json::{json, Value};
use thiserror::Error;

use super::{Dist, DistGrad, ExtractorPreset, PolicyConfig, METRIC_SCALES};
use crate::autodiff::{read_checkpoint, write_checkpoint, AdError, Cache, LayerSpec, Network, Real, Tensor};
use crate::sensor::Observation;
use crate::world::Command;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error("architecture mismatch: checkpoint has {found}, expected {expected}")]
    Arch { expected: String, found: String },
}

/// Network input for one step: `[C, H, W]` image planes, scaled car
/// metrics, and the route command.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyInput<T> {
    pub image: Tensor<T>,
    pub metrics: [T; 3],
    pub command: Command,
}

impl<T: Real> PolicyInput<T> {
    /// Photometric plane (unless `semseg_only`) followed by the three
    /// semantic one-hot planes.
    pub fn from_observation(obs: &Observation, semseg_only: bool) -> Self {
        let n = obs.width * obs.height;
        let mut data = Vec::with_capacity(4 * n);
        if !semseg_only {
            data.extend(obs.photometric.iter().map(|&v| T::lit(v as f64)));
        }
        data.extend(obs.semantic.one_hot().into_iter().map(|v| T::lit(v as f64)));
        let c = if semseg_only { 3 } else { 4 };
        PolicyInput {
            image: Tensor { shape: vec![c, obs.height, obs.width], data },
            metrics: [
                T::lit(obs.speed / METRIC_SCALES[0]),
                T::lit(obs.accel / METRIC_SCALES[1]),
                T::lit(obs.steering_angle / METRIC_SCALES[2]),
            ],
            command: obs.command,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput<T> {
    pub dist: Dist<T>,
    pub value: T,
    pub depth: Option<Vec<T>>,
    /// Hidden state after this step (recurrent policies).
    pub hidden: Option<Vec<T>>,
}

/// Gradient of a scalar loss w.r.t. the policy outputs.
#[derive(Debug, Clone)]
pub struct OutputGrad<T> {
    pub dist: Option<DistGrad<T>>,
    pub value: T,
    pub depth: Option<Vec<T>>,
    pub hidden: Option<Vec<T>>,
}

impl<T: Real> OutputGrad<T> {
    pub fn zero() -> Self {
        OutputGrad { dist: None, value: T::zero(), depth: None, hidden: None }
    }
}

#[derive(Debug, Clone)]
pub struct PolicyCache<T> {
    extractor: Cache<T>,
    trunk: Cache<T>,
    gru: Option<Cache<T>>,
    head: usize,
    head_cache: Cache<T>,
    value: Cache<T>,
    depth: Option<Cache<T>>,
    feature_len: usize,
}

/// Index of each sub-network inside `parts`.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    gru: Option<usize>,
    heads: std::ops::Range<usize>,
    value: usize,
    depth: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Policy<T> {
    pub cfg: PolicyConfig,
    pub width: usize,
    pub height: usize,
    parts: Vec<Network<T>>,
    layout: Layout,
    log_std: Tensor<T>,
}

const EXTRACTOR: usize = 0;
const TRUNK: usize = 1;

fn extractor_layers(preset: ExtractorPreset, c: usize, h: usize, w: usize) -> Result<(Vec<LayerSpec>, usize), AdError> {
    let mut layers = match preset {
        ExtractorPreset::ImpalaSmall => vec![
            LayerSpec::Conv2d { in_channels: c, out_channels: 16, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::Relu,
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::Conv2d { in_channels: 16, out_channels: 32, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::Relu,
            LayerSpec::MaxPool { size: 2 },
        ],
        ExtractorPreset::Desk => vec![
            LayerSpec::Conv2d { in_channels: c, out_channels: 8, kernel: 4, stride: 4, padding: 0 },
            LayerSpec::Relu,
            LayerSpec::MaxPool { size: 2 },
        ],
    };
    let mut shape = vec![c, h, w];
    for (index, l) in layers.iter().enumerate() {
        shape = l.output_shape(&shape).map_err(|message| AdError::Layer { index, message })?;
    }
    let units = trunk_units(preset);
    layers.push(LayerSpec::Dense { inputs: shape.iter().product(), units });
    layers.push(LayerSpec::Relu);
    Ok((layers, units))
}

fn trunk_units(preset: ExtractorPreset) -> usize {
    match preset {
        ExtractorPreset::ImpalaSmall => 256,
        ExtractorPreset::Desk => 64,
    }
}

impl<T: Real> Policy<T> {
    pub fn new<R: Rng + ?Sized>(cfg: &PolicyConfig, width: usize, height: usize, rng: &mut R) -> Result<Self, PolicyError> {
        let channels = if cfg.semseg_only { 3 } else { 4 };
        let (ext_layers, feat) = extractor_layers(cfg.extractor, channels, height, width)?;
        let units = trunk_units(cfg.extractor);
        let trunk_in = feat + 3 + if cfg.branched { 0 } else { 4 };
        let mut parts = vec![
            Network::init(&[channels, height, width], ext_layers, rng)?,
            Network::init(&[trunk_in], vec![LayerSpec::Dense { inputs: trunk_in, units }, LayerSpec::Relu], rng)?,
        ];
        let gru = if cfg.recurrent {
            parts.push(Network::init(&[2 * units], vec![LayerSpec::GruCell { inputs: units, units }], rng)?);
            Some(parts.len() - 1)
        } else {
            None
        };
        let n_heads = if cfg.branched { 4 } else { 1 };
        let head_start = parts.len();
        for _ in 0..n_heads {
            let mut head = Network::init(&[units], vec![LayerSpec::Dense { inputs: units, units: cfg.head_outputs() }], rng)?;
            head.params_mut()[0].data.iter_mut().for_each(|v| *v *= T::lit(0.01));
            parts.push(head);
        }
        let heads = head_start..parts.len();
        let mut value_net = Network::init(&[units], vec![LayerSpec::Dense { inputs: units, units: 1 }], rng)?;
        value_net.params_mut()[0].data.iter_mut().for_each(|v| *v *= T::lit(0.1));
        parts.push(value_net);
        let value = parts.len() - 1;
        let depth = if cfg.aux_depth {
            let mut d = Network::init(&[units], vec![LayerSpec::Dense { inputs: units, units: cfg.depth_rays }], rng)?;
            d.params_mut()[0].data.iter_mut().for_each(|v| *v *= T::lit(0.1));
            parts.push(d);
            Some(parts.len() - 1)
        } else {
            None
        };
        let log_std = Tensor::vector(if cfg.action_space.is_categorical() { vec![] } else { vec![T::lit(cfg.init_log_std)] });
        Ok(Policy { cfg: cfg.clone(), width, height, parts, layout: Layout { gru, heads, value, depth }, log_std })
    }

    pub fn hidden_size(&self) -> Option<usize> {
        self.layout.gru.map(|_| trunk_units(self.cfg.extractor))
    }

    pub fn initial_hidden(&self) -> Option<Vec<T>> {
        self.hidden_size().map(|n| vec![T::zero(); n])
    }

    pub fn head_count(&self) -> usize {
        self.layout.heads.len()
    }

    /// All parameter tensors: sub-networks in order, then log_std.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.parts.iter().flat_map(|n| n.params().iter()).chain(std::iter::once(&self.log_std)).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = self.parts.iter_mut().flat_map(|n| n.params_mut().iter_mut()).collect();
        out.push(&mut self.log_std);
        out
    }

    pub fn set_params(&mut self, values: &[Tensor<T>]) -> Result<(), PolicyError> {
        let mut dst = self.params_mut();
        if dst.len() != values.len() {
            return Err(AdError::Shape { expected: vec![dst.len()], got: vec![values.len()] }.into());
        }
        for (d, v) in dst.iter_mut().zip(values) {
            if d.shape != v.shape {
                return Err(AdError::Shape { expected: d.shape.clone(), got: v.shape.clone() }.into());
            }
            d.data.clone_from(&v.data);
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Zeroed gradient buffers in [`Policy::params`] order.
    pub fn zero_grads(&self) -> Vec<Tensor<T>> {
        self.params().iter().map(|p| Tensor::zeros(&p.shape)).collect()
    }

    /// Index range of sub-network `part` inside the flat parameter list.
    fn span(&self, part: usize) -> std::ops::Range<usize> {
        let start: usize = self.parts[..part].iter().map(|n| n.params().len()).sum();
        start..start + self.parts[part].params().len()
    }

    /// Flat index range of head `k`'s parameters.
    pub fn head_param_span(&self, k: usize) -> std::ops::Range<usize> {
        self.span(self.layout.heads.start + k)
    }

    fn log_std_index(&self) -> usize {
        self.parts.iter().map(|n| n.params().len()).sum()
    }

    pub fn cast<U: Real>(&self) -> Policy<U> {
        Policy {
            cfg: self.cfg.clone(),
            width: self.width,
            height: self.height,
            parts: self.parts.iter().map(|n| n.cast()).collect(),
            layout: self.layout.clone(),
            log_std: self.log_std.cast(),
        }
    }

    pub fn forward(&self, inp: &PolicyInput<T>, hidden: Option<&[T]>) -> Result<(PolicyOutput<T>, PolicyCache<T>), PolicyError> {
        let (feat, c_ext) = self.parts[EXTRACTOR].forward(&inp.image)?;
        let feature_len = feat.len();
        let mut x = feat.data;
        x.extend_from_slice(&inp.metrics);
        if !self.cfg.branched {
            x.extend(inp.command.one_hot().iter().map(|&v| T::lit(v as f64)));
        }
        let (mut z, c_trunk) = self.parts[TRUNK].forward(&Tensor::vector(x))?;
        let (mut c_gru, mut new_hidden) = (None, None);
        if let Some(g) = self.layout.gru {
            let n = z.len();
            let mut xh = z.data.clone();
            match hidden {
                Some(h) if h.len() == n => xh.extend_from_slice(h),
                Some(h) => return Err(AdError::Shape { expected: vec![n], got: vec![h.len()] }.into()),
                None => xh.extend(std::iter::repeat_n(T::zero(), n)),
            }
            let (h2, c) = self.parts[g].forward(&Tensor::vector(xh))?;
            c_gru = Some(c);
            new_hidden = Some(h2.data.clone());
            z = h2;
        }
        let head = if self.cfg.branched { inp.command.index() } else { 0 };
        let (ho, head_cache) = self.parts[self.layout.heads.start + head].forward(&z)?;
        let dist = if self.cfg.action_space.is_categorical() {
            Dist::Categorical { logits: ho.data }
        } else {
            Dist::Gaussian { mean: ho.data[0], log_std: self.log_std.data[0] }
        };
        let (v, c_val) = self.parts[self.layout.value].forward(&z)?;
        let (depth, c_depth) = match self.layout.depth {
            Some(d) => {
                let (y, c) = self.parts[d].forward(&z)?;
                (Some(y.data), Some(c))
            }
            None => (None, None),
        };
        Ok((
            PolicyOutput { dist, value: v.data[0], depth, hidden: new_hidden },
            PolicyCache { extractor: c_ext, trunk: c_trunk, gru: c_gru, head, head_cache, value: c_val, depth: c_depth, feature_len },
        ))
    }

    /// Accumulates parameter gradients into `grads` and returns the
    /// gradients w.r.t. the image and the incoming hidden state.
    pub fn backward(
        &self,
        cache: &PolicyCache<T>,
        g: &OutputGrad<T>,
        grads: &mut [Tensor<T>],
    ) -> Result<(Tensor<T>, Option<Vec<T>>), PolicyError> {
        self.backward_impl(cache, g, grads, true).map(|(d, h)| (d.expect("image gradient requested"), h))
    }

    /// [`Policy::backward`] without the image gradient; returns the
    /// gradient w.r.t. the incoming hidden state.
    pub fn backward_params(
        &self,
        cache: &PolicyCache<T>,
        g: &OutputGrad<T>,
        grads: &mut [Tensor<T>],
    ) -> Result<Option<Vec<T>>, PolicyError> {
        self.backward_impl(cache, g, grads, false).map(|(_, h)| h)
    }

    #[allow(clippy::type_complexity)]
    fn backward_impl(
        &self,
        cache: &PolicyCache<T>,
        g: &OutputGrad<T>,
        grads: &mut [Tensor<T>],
        image_grad: bool,
    ) -> Result<(Option<Tensor<T>>, Option<Vec<T>>), PolicyError> {
        let units = trunk_units(self.cfg.extractor);
        let mut dz = vec![T::zero(); units];
        let add = |dz: &mut Vec<T>, t: Tensor<T>| dz.iter_mut().zip(t.data).for_each(|(a, b)| *a += b);
        if let Some(dg) = &g.dist {
            let head_out = match dg {
                DistGrad::Gaussian { mean, log_std } => {
                    grads[self.log_std_index()].data[0] += *log_std;
                    vec![*mean]
                }
                DistGrad::Categorical { logits } => logits.clone(),
            };
            let part = self.layout.heads.start + cache.head;
            let span = self.span(part);
            let d = self.parts[part].backward(&cache.head_cache, &Tensor::vector(head_out), &mut grads[span])?;
            add(&mut dz, d);
        }
        if g.value != T::zero() {
            let span = self.span(self.layout.value);
            let d = self.parts[self.layout.value].backward(&cache.value, &Tensor::vector(vec![g.value]), &mut grads[span])?;
            add(&mut dz, d);
        }
        if let (Some(part), Some(c), Some(dd)) = (self.layout.depth, &cache.depth, &g.depth) {
            let span = self.span(part);
            let d = self.parts[part].backward(c, &Tensor::vector(dd.clone()), &mut grads[span])?;
            add(&mut dz, d);
        }
        let mut d_hidden = None;
        let d_trunk_out = match (self.layout.gru, &cache.gru) {
            (Some(part), Some(c)) => {
                if let Some(h) = &g.hidden {
                    dz.iter_mut().zip(h).for_each(|(a, b)| *a += *b);
                }
                let span = self.span(part);
                let d = self.parts[part].backward(c, &Tensor::vector(dz), &mut grads[span])?;
                d_hidden = Some(d.data[units..].to_vec());
                Tensor::vector(d.data[..units].to_vec())
            }
            _ => Tensor::vector(dz),
        };
        let span = self.span(TRUNK);
        let d_in = self.parts[TRUNK].backward(&cache.trunk, &d_trunk_out, &mut grads[span])?;
        let d_feat = Tensor::vector(d_in.data[..cache.feature_len].to_vec());
        let span = self.span(EXTRACTOR);
        if !image_grad {
            self.parts[EXTRACTOR].backward_params(&cache.extractor, &d_feat, &mut grads[span])?;
            return Ok((None, d_hidden));
        }
        let d_image = self.parts[EXTRACTOR].backward(&cache.extractor, &d_feat, &mut grads[span])?;
        Ok((Some(d_image), d_hidden))
    }

    /// Header identifying the architecture inside checkpoints.
    pub fn arch_json(&self) -> Value {
        Self::arch_json_for(&self.cfg, self.width, self.height)
    }

    pub fn arch_string(&self) -> String {
        Self::arch_string_for(&self.cfg, self.width, self.height)
    }

    /// [`Policy::arch_json`] of the policy `cfg` would build at this size.
    pub fn arch_json_for(cfg: &PolicyConfig, width: usize, height: usize) -> Value {
        json!({ "policy": cfg, "width": width, "height": height })
    }

    pub fn arch_string_for(cfg: &PolicyConfig, width: usize, height: usize) -> String {
        format!("{} {}x{} {:?}", cfg.arch_name(), width, height, cfg.extractor)
    }

    /// Writes the parameters with `meta` (model id, update counter, ...) in
    /// the header.
    pub fn save(&self, path: &Path, meta: Value) -> Result<(), PolicyError> {
        let header = json!({ "arch": self.arch_json(), "arch_string": self.arch_string(), "meta": meta });
        write_checkpoint(path, &header, &self.params())?;
        Ok(())
    }
}

impl Policy<f32> {
    /// Loads any checkpoint, rebuilding the architecture from its header.
    pub fn load(path: &Path) -> Result<(Self, Value), PolicyError> {
        let (header, tensors) = read_checkpoint(path)?;
        let bad = |m: &str| PolicyError::Ad(AdError::Format(format!("{}: {m}", path.display())));
        let cfg: PolicyConfig = serde_json::from_value(header["arch"]["policy"].clone()).map_err(|e| bad(&e.to_string()))?;
        let width = header["arch"]["width"].as_u64().ok_or_else(|| bad("missing width"))? as usize;
        let height = header["arch"]["height"].as_u64().ok_or_else(|| bad("missing height"))? as usize;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut p = Policy::new(&cfg, width, height, &mut rng)?;
        p.set_params(&tensors)?;
        Ok((p, header["meta"].clone()))
    }

    /// Loads a checkpoint and requires it to match `expected`.
    pub fn load_matching(path: &Path, expected: &Policy<f32>) -> Result<(Self, Value), PolicyError> {
        let (p, meta) = Self::load(path)?;
        if p.arch_json() != expected.arch_json() {
            return Err(PolicyError::Arch { expected: expected.arch_string(), found: p.arch_string() });
        }
        Ok((p, meta))
    }
}

impl PartialEq for Policy<f32> {
    fn eq(&self, o: &Self) -> bool {
        self.arch_json() == o.arch_json() && self.params() == o.params()
    }
}
