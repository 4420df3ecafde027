//! The three-branch fusion classifier: a 3-D CNN over gray-matter volumes,
//! a message-passing graph branch over signed functional connectivity, a
//! Chebyshev spectral branch over structural connectivity, and a dense
//! classification head over the concatenated latents.

mod checkpoint;

pub use checkpoint::{load_model, save_model, AnyModel, MODEL_MANIFEST_FILE};

use rand::Rng;

use crate::error::{Error, Result};
use crate::gnn::LambdaMax;
use crate::graph::ConnGraph;
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::{NodeId, ReluMode, Tape, Tensor};

/// Convolution kernel edge length; stride 1, padding 1 keep spatial dims.
pub const CONV_KERNEL: usize = 3;
pub const CONV_STRIDE: usize = 1;
pub const CONV_PAD: usize = 1;
/// Max-pool window and stride: halves each axis (floor).
pub const POOL_WINDOW: usize = 2;
pub const POOL_STRIDE: usize = 2;

/// Volume branch: six conv layers, three pools, four dense layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VolumeConfig {
    pub input_shape: (usize, usize, usize),
    pub conv_channels: [usize; 6],
    /// Widths of the first three dense layers; the fourth emits the latent.
    pub dense_widths: [usize; 3],
    pub latent_dim: usize,
}

impl VolumeConfig {
    /// Spatial extent after the three pool stages.
    pub fn pooled_shape(&self) -> (usize, usize, usize) {
        let pool = |mut n: usize| {
            for _ in 0..3 {
                n = (n - POOL_WINDOW) / POOL_STRIDE + 1;
            }
            n
        };
        let (d, h, w) = self.input_shape;
        (pool(d), pool(h), pool(w))
    }

    pub fn flatten_len(&self) -> usize {
        let (d, h, w) = self.pooled_shape();
        self.conv_channels[5] * d * h * w
    }

    fn validate(&self) -> Result<()> {
        let (d, h, w) = self.input_shape;
        if d.min(h).min(w) < 8 {
            return Err(Error::Config(format!("volume input {:?} too small for three pool stages", self.input_shape)));
        }
        if self.conv_channels.iter().any(|&c| c == 0) || self.dense_widths.iter().any(|&v| v == 0) || self.latent_dim == 0 {
            return Err(Error::Config("volume branch widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    Functional,
    Structural,
}

/// Graph branch: two graph layers, one dense reduction to the latent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphBranchConfig {
    pub kind: GraphKind,
    pub n_nodes: usize,
    pub hidden: [usize; 2],
    /// Chebyshev order; used by structural branches only.
    pub cheb_k: usize,
    pub latent_dim: usize,
}

impl GraphBranchConfig {
    fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 || self.hidden.iter().any(|&h| h == 0) || self.latent_dim == 0 {
            return Err(Error::Config("graph branch widths must be positive".into()));
        }
        if self.kind == GraphKind::Structural && self.cheb_k == 0 {
            return Err(Error::Config("Chebyshev order must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub volume: VolumeConfig,
    pub fnc: GraphBranchConfig,
    pub sc: GraphBranchConfig,
    pub classifier_hidden: [usize; 2],
    pub n_classes: usize,
    pub lambda_max: LambdaMax,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            volume: VolumeConfig {
                input_shape: (32, 32, 32),
                conv_channels: [8, 8, 16, 16, 32, 32],
                dense_widths: [512, 256, 128],
                latent_dim: 100,
            },
            fnc: GraphBranchConfig { kind: GraphKind::Functional, n_nodes: 53, hidden: [16, 32], cheb_k: 0, latent_dim: 100 },
            sc: GraphBranchConfig { kind: GraphKind::Structural, n_nodes: 84, hidden: [16, 32], cheb_k: 3, latent_dim: 100 },
            classifier_hidden: [128, 32],
            n_classes: 2,
            lambda_max: LambdaMax::Fixed(2.0),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.volume.validate()?;
        self.fnc.validate()?;
        self.sc.validate()?;
        if self.fnc.kind != GraphKind::Functional || self.sc.kind != GraphKind::Structural {
            return Err(Error::Config("branch kinds are swapped".into()));
        }
        if self.volume.latent_dim != self.fnc.latent_dim || self.fnc.latent_dim != self.sc.latent_dim {
            return Err(Error::Config("latent_dim must be identical across branches".into()));
        }
        if self.n_classes != 2 {
            return Err(Error::Config(format!("classifier is binary, got {} classes", self.n_classes)));
        }
        if self.classifier_hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("classifier widths must be positive".into()));
        }
        Ok(())
    }

    pub fn fused_dim(&self) -> usize {
        3 * self.volume.latent_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Volume,
    Functional,
    Structural,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Volume => "volume",
            Modality::Functional => "functional",
            Modality::Structural => "structural",
        }
    }

    pub const ALL: [Modality; 3] = [Modality::Volume, Modality::Functional, Modality::Structural];
}

// ---------------------------------------------------------------------------
// layer enumeration: shared by init, forward, and the count formula
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum LayerSpec {
    /// Conv3d weight (cout, cin, k, k, k) + bias (cout)
    Conv { cin: usize, cout: usize },
    /// Dense weight (nout, nin) + bias (nout)
    Dense { nin: usize, nout: usize },
    /// Message passing: w1, w2 (fin, fout) + bias (fout)
    Graph { fin: usize, fout: usize },
    /// Chebyshev bank: k theta matrices (fin, fout), no bias
    Cheb { fin: usize, fout: usize, k: usize },
}

impl LayerSpec {
    fn tensors(&self, layer: &str) -> Vec<(String, Vec<usize>, usize)> {
        // (name, shape, fan_in)
        match *self {
            LayerSpec::Conv { cin, cout } => {
                let fan = cin * CONV_KERNEL * CONV_KERNEL * CONV_KERNEL;
                vec![
                    (format!("{layer}.weight"), vec![cout, cin, CONV_KERNEL, CONV_KERNEL, CONV_KERNEL], fan),
                    (format!("{layer}.bias"), vec![cout], 0),
                ]
            }
            LayerSpec::Dense { nin, nout } => vec![
                (format!("{layer}.weight"), vec![nout, nin], nin),
                (format!("{layer}.bias"), vec![nout], 0),
            ],
            LayerSpec::Graph { fin, fout } => vec![
                (format!("{layer}.w1"), vec![fin, fout], fin),
                (format!("{layer}.w2"), vec![fin, fout], fin),
                (format!("{layer}.bias"), vec![fout], 0),
            ],
            LayerSpec::Cheb { fin, fout, k } => (0..k)
                .map(|i| (format!("{layer}.theta{i}"), vec![fin, fout], fin))
                .collect(),
        }
    }
}

fn volume_layers(cfg: &VolumeConfig) -> Vec<(String, LayerSpec)> {
    let c = &cfg.conv_channels;
    let mut layers = Vec::new();
    let mut cin = 1;
    for (i, &cout) in c.iter().enumerate() {
        layers.push((format!("vol.conv{}", i + 1), LayerSpec::Conv { cin, cout }));
        cin = cout;
    }
    let mut nin = cfg.flatten_len();
    for (i, &nout) in cfg.dense_widths.iter().enumerate() {
        layers.push((format!("vol.dense{}", i + 1), LayerSpec::Dense { nin, nout }));
        nin = nout;
    }
    layers.push(("vol.dense4".to_string(), LayerSpec::Dense { nin, nout: cfg.latent_dim }));
    layers
}

fn graph_layers(cfg: &GraphBranchConfig, prefix: &str) -> Vec<(String, LayerSpec)> {
    let mut layers = Vec::new();
    let mut fin = 1;
    for (i, &fout) in cfg.hidden.iter().enumerate() {
        let spec = match cfg.kind {
            GraphKind::Functional => LayerSpec::Graph { fin, fout },
            GraphKind::Structural => LayerSpec::Cheb { fin, fout, k: cfg.cheb_k },
        };
        layers.push((format!("{prefix}.g{}", i + 1), spec));
        fin = fout;
    }
    layers.push((format!("{prefix}.dense"), LayerSpec::Dense { nin: cfg.n_nodes * fin, nout: cfg.latent_dim }));
    layers
}

fn head_layers(input_dim: usize, hidden: [usize; 2], n_classes: usize, prefix: &str) -> Vec<(String, LayerSpec)> {
    vec![
        (format!("{prefix}.dense1"), LayerSpec::Dense { nin: input_dim, nout: hidden[0] }),
        (format!("{prefix}.dense2"), LayerSpec::Dense { nin: hidden[0], nout: hidden[1] }),
        (format!("{prefix}.dense3"), LayerSpec::Dense { nin: hidden[1], nout: n_classes }),
    ]
}

fn fusion_layers(cfg: &ModelConfig) -> Vec<(String, LayerSpec)> {
    let mut layers = volume_layers(&cfg.volume);
    layers.extend(graph_layers(&cfg.fnc, "fnc"));
    layers.extend(graph_layers(&cfg.sc, "sc"));
    layers.extend(head_layers(cfg.fused_dim(), cfg.classifier_hidden, cfg.n_classes, "cls"));
    layers
}

fn unimodal_layers(cfg: &ModelConfig, kind: Modality) -> Vec<(String, LayerSpec)> {
    let mut layers = match kind {
        Modality::Volume => volume_layers(&cfg.volume),
        Modality::Functional => graph_layers(&cfg.fnc, "fnc"),
        Modality::Structural => graph_layers(&cfg.sc, "sc"),
    };
    layers.extend(head_layers(cfg.volume.latent_dim, cfg.classifier_hidden, cfg.n_classes, "cls"));
    layers
}

// ---------------------------------------------------------------------------
// parameter storage
// ---------------------------------------------------------------------------

/// Named parameter tensors in a fixed construction order.
#[derive(Debug, Clone)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    fn from_layers(layers: &[(String, LayerSpec)], seed: u64) -> Self {
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (layer, spec) in layers {
            for (name, shape, fan_in) in spec.tensors(layer) {
                let t = if fan_in == 0 {
                    Tensor::zeros(&shape)
                } else {
                    kaiming_uniform(&shape, fan_in, seed, &name)
                };
                names.push(name);
                tensors.push(t);
            }
        }
        ParamSet { names, tensors }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn total_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }
}

/// Kaiming-uniform fan-in initialization: U(-b, b) with b = sqrt(6 / fan_in),
/// giving sample variance 2 / fan_in. Each tensor gets its own stream keyed
/// by parameter name, so layouts can change without reshuffling neighbors.
fn kaiming_uniform<T: Scalar>(shape: &[usize], fan_in: usize, seed: u64, name: &str) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let mut rng = rng::stream(seed, name, 0);
    let n: usize = shape.iter().product();
    let data: Vec<T> = (0..n).map(|_| T::c(rng.gen_range(-bound..bound))).collect();
    Tensor::from_vec(shape.to_vec(), data)
}

// ---------------------------------------------------------------------------
// staged forward passes
// ---------------------------------------------------------------------------

/// Tape node ids of staged parameters, parallel to the ParamSet order.
pub struct StagedParams {
    pub ids: Vec<NodeId>,
}

/// One subject's model inputs. `sc_lhat` is the rescaled Laplacian of the
/// unit-max-rescaled structural graph, precomputed once per subject.
pub struct SubjectInput<'a, T> {
    pub vol: &'a Tensor<T>,
    pub fnc: &'a ConnGraph<T>,
    pub sc_lhat: &'a [T],
}

/// Node ids produced by one recorded forward pass.
pub struct ModelPass {
    pub logits: NodeId,
    pub probs: NodeId,
    pub latents: Vec<NodeId>,
    pub vol_input: Option<NodeId>,
    pub fnc_features: Option<NodeId>,
    pub sc_features: Option<NodeId>,
}

struct Cursor<'a> {
    ids: &'a [NodeId],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn next(&mut self) -> NodeId {
        let id = self.ids[self.pos];
        self.pos += 1;
        id
    }

    fn finish(self) {
        assert_eq!(self.pos, self.ids.len(), "forward consumed {} of {} staged parameters", self.pos, self.ids.len());
    }
}

fn volume_branch<T: Scalar>(
    tape: &mut Tape<T>,
    cur: &mut Cursor,
    cfg: &VolumeConfig,
    vol: &Tensor<T>,
    requires_grad: bool,
) -> Result<(NodeId, NodeId)> {
    let (d, h, w) = cfg.input_shape;
    let shape_ok = vol.shape() == [d, h, w] || vol.shape() == [1, d, h, w];
    if !shape_ok {
        return Err(Error::BranchShape {
            branch: "volume",
            detail: format!("expected ({d}, {h}, {w}) volume, got {:?}", vol.shape()),
        });
    }
    let input = tape.leaf(vol.clone().reshaped(vec![1, d, h, w]), requires_grad);
    let mut x = input;
    for i in 0..6 {
        let weight = cur.next();
        let bias = cur.next();
        x = tape.conv3d(x, weight, bias, CONV_STRIDE, CONV_PAD)?;
        x = tape.relu(x)?;
        if i % 2 == 1 {
            x = tape.maxpool3d(x, POOL_WINDOW, POOL_STRIDE)?;
        }
    }
    x = tape.flatten(x)?;
    for _ in 0..4 {
        let weight = cur.next();
        let bias = cur.next();
        x = tape.dense(x, weight, bias)?;
        x = tape.relu(x)?;
    }
    Ok((input, x))
}

fn fnc_branch<T: Scalar>(
    tape: &mut Tape<T>,
    cur: &mut Cursor,
    cfg: &GraphBranchConfig,
    g: &ConnGraph<T>,
    requires_grad: bool,
) -> Result<(NodeId, NodeId)> {
    if g.n_nodes() != cfg.n_nodes {
        return Err(Error::BranchShape {
            branch: "functional",
            detail: format!("expected {} nodes, got {}", cfg.n_nodes, g.n_nodes()),
        });
    }
    g.check_correlation_range().map_err(|e| Error::BranchShape { branch: "functional", detail: e.to_string() })?;
    let input = tape.leaf(g.unit_features(), requires_grad);
    let mut x = input;
    for _ in 0..2 {
        let w1 = cur.next();
        let w2 = cur.next();
        let b = cur.next();
        x = tape.graph_conv(x, g.weights(), w1, w2, b)?;
        x = tape.relu(x)?;
    }
    x = tape.flatten(x)?;
    let weight = cur.next();
    let bias = cur.next();
    x = tape.dense(x, weight, bias)?;
    x = tape.relu(x)?;
    Ok((input, x))
}

fn sc_branch<T: Scalar>(
    tape: &mut Tape<T>,
    cur: &mut Cursor,
    cfg: &GraphBranchConfig,
    lhat: &[T],
    requires_grad: bool,
) -> Result<(NodeId, NodeId)> {
    if lhat.len() != cfg.n_nodes * cfg.n_nodes {
        let got = (lhat.len() as f64).sqrt().round() as usize;
        return Err(Error::BranchShape {
            branch: "structural",
            detail: format!("expected {} nodes, got {got}", cfg.n_nodes),
        });
    }
    let input = tape.leaf(Tensor::ones(&[cfg.n_nodes, 1]), requires_grad);
    let mut x = input;
    for _ in 0..2 {
        let thetas: Vec<NodeId> = (0..cfg.cheb_k).map(|_| cur.next()).collect();
        x = tape.cheb_conv(x, lhat, &thetas)?;
        x = tape.relu(x)?;
    }
    x = tape.flatten(x)?;
    let weight = cur.next();
    let bias = cur.next();
    x = tape.dense(x, weight, bias)?;
    x = tape.relu(x)?;
    Ok((input, x))
}

fn classifier_head<T: Scalar>(tape: &mut Tape<T>, cur: &mut Cursor, x: NodeId) -> Result<(NodeId, NodeId)> {
    let mut x = x;
    for i in 0..3 {
        let weight = cur.next();
        let bias = cur.next();
        x = tape.dense(x, weight, bias)?;
        if i < 2 {
            x = tape.relu(x)?;
        }
    }
    let probs = tape.softmax(x)?;
    Ok((x, probs))
}

// ---------------------------------------------------------------------------
// models
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FusionModel<T> {
    config: ModelConfig,
    params: ParamSet<T>,
    seed: u64,
    relu_mode: ReluMode,
}

impl<T: Scalar> FusionModel<T> {
    /// Seed-initialized model: Kaiming-uniform weights, zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ParamSet::from_layers(&fusion_layers(&config), seed);
        Ok(FusionModel { config, params, seed, relu_mode: ReluMode::Standard })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn relu_mode(&self) -> ReluMode {
        self.relu_mode
    }

    pub fn set_relu_mode(&mut self, mode: ReluMode) {
        self.relu_mode = mode;
    }

    /// Total trainable scalar count. Equals the sum over layers of the
    /// closed-form counts: conv cout*(cin*k^3)+cout, dense nout*nin+nout,
    /// graph 2*fin*fout+fout, cheb k*fin*fout.
    pub fn parameter_count(config: &ModelConfig) -> usize {
        fusion_layers(config)
            .iter()
            .flat_map(|(layer, spec)| spec.tensors(layer))
            .map(|(_, shape, _)| shape.iter().product::<usize>())
            .sum()
    }

    pub fn make_tape(&self) -> Tape<T> {
        Tape::with_relu_mode(self.relu_mode)
    }

    /// Rescaled Laplacian for a structural graph under this model's
    /// lambda_max strategy; weights are first mapped to [0, 1] by the
    /// subject's max streamline count.
    pub fn prepare_sc_lhat(&self, sc: &ConnGraph<T>) -> Result<Vec<T>> {
        crate::gnn::scaled_laplacian(&sc.rescaled_to_unit_max(), self.config.lambda_max)
    }

    /// Add parameter leaves to a tape, in ParamSet order.
    pub fn stage(&self, tape: &mut Tape<T>, trainable: bool) -> StagedParams {
        let ids = self.params.tensors.iter().map(|t| tape.leaf(t.clone(), trainable)).collect();
        StagedParams { ids }
    }

    /// Record one subject's forward pass against already-staged parameters.
    pub fn forward_staged(
        &self,
        tape: &mut Tape<T>,
        staged: &StagedParams,
        input: &SubjectInput<'_, T>,
        inputs_require_grad: bool,
    ) -> Result<ModelPass> {
        let mut cur = Cursor { ids: &staged.ids, pos: 0 };
        let (vol_in, vol_latent) = volume_branch(tape, &mut cur, &self.config.volume, input.vol, inputs_require_grad)?;
        let (fnc_in, fnc_latent) = fnc_branch(tape, &mut cur, &self.config.fnc, input.fnc, inputs_require_grad)?;
        let (sc_in, sc_latent) = sc_branch(tape, &mut cur, &self.config.sc, input.sc_lhat, inputs_require_grad)?;
        let fused = tape.concat(&[vol_latent, fnc_latent, sc_latent])?;
        let (logits, probs) = classifier_head(tape, &mut cur, fused)?;
        cur.finish();
        Ok(ModelPass {
            logits,
            probs,
            latents: vec![vol_latent, fnc_latent, sc_latent],
            vol_input: Some(vol_in),
            fnc_features: Some(fnc_in),
            sc_features: Some(sc_in),
        })
    }

    /// Convenience inference: fresh tape, frozen parameters.
    pub fn predict(&self, input: &SubjectInput<'_, T>) -> Result<Tensor<T>> {
        let mut tape = self.make_tape();
        let staged = self.stage(&mut tape, false);
        let pass = self.forward_staged(&mut tape, &staged, input, false)?;
        Ok(tape.value(pass.probs).clone())
    }
}

/// A single branch plus its own classification head; the unimodal baseline.
#[derive(Debug, Clone)]
pub struct UnimodalModel<T> {
    kind: Modality,
    config: ModelConfig,
    params: ParamSet<T>,
    seed: u64,
    relu_mode: ReluMode,
}

impl<T: Scalar> UnimodalModel<T> {
    pub fn init(kind: Modality, config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ParamSet::from_layers(&unimodal_layers(&config, kind), seed);
        Ok(UnimodalModel { kind, config, params, seed, relu_mode: ReluMode::Standard })
    }

    pub fn kind(&self) -> Modality {
        self.kind
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn relu_mode(&self) -> ReluMode {
        self.relu_mode
    }

    pub fn set_relu_mode(&mut self, mode: ReluMode) {
        self.relu_mode = mode;
    }

    pub fn parameter_count(config: &ModelConfig, kind: Modality) -> usize {
        unimodal_layers(config, kind)
            .iter()
            .flat_map(|(layer, spec)| spec.tensors(layer))
            .map(|(_, shape, _)| shape.iter().product::<usize>())
            .sum()
    }

    pub fn make_tape(&self) -> Tape<T> {
        Tape::with_relu_mode(self.relu_mode)
    }

    pub fn prepare_sc_lhat(&self, sc: &ConnGraph<T>) -> Result<Vec<T>> {
        crate::gnn::scaled_laplacian(&sc.rescaled_to_unit_max(), self.config.lambda_max)
    }

    pub fn stage(&self, tape: &mut Tape<T>, trainable: bool) -> StagedParams {
        let ids = self.params.tensors.iter().map(|t| tape.leaf(t.clone(), trainable)).collect();
        StagedParams { ids }
    }

    pub fn forward_staged(
        &self,
        tape: &mut Tape<T>,
        staged: &StagedParams,
        input: &SubjectInput<'_, T>,
        inputs_require_grad: bool,
    ) -> Result<ModelPass> {
        let mut cur = Cursor { ids: &staged.ids, pos: 0 };
        let mut pass = ModelPass { logits: 0, probs: 0, latents: Vec::new(), vol_input: None, fnc_features: None, sc_features: None };
        let latent = match self.kind {
            Modality::Volume => {
                let (input_id, latent) = volume_branch(tape, &mut cur, &self.config.volume, input.vol, inputs_require_grad)?;
                pass.vol_input = Some(input_id);
                latent
            }
            Modality::Functional => {
                let (input_id, latent) = fnc_branch(tape, &mut cur, &self.config.fnc, input.fnc, inputs_require_grad)?;
                pass.fnc_features = Some(input_id);
                latent
            }
            Modality::Structural => {
                let (input_id, latent) = sc_branch(tape, &mut cur, &self.config.sc, input.sc_lhat, inputs_require_grad)?;
                pass.sc_features = Some(input_id);
                latent
            }
        };
        let (logits, probs) = classifier_head(tape, &mut cur, latent)?;
        cur.finish();
        pass.logits = logits;
        pass.probs = probs;
        pass.latents = vec![latent];
        Ok(pass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            volume: VolumeConfig {
                input_shape: (8, 8, 8),
                conv_channels: [2, 2, 3, 3, 4, 4],
                dense_widths: [16, 12, 8],
                latent_dim: 6,
            },
            fnc: GraphBranchConfig { kind: GraphKind::Functional, n_nodes: 5, hidden: [3, 4], cheb_k: 0, latent_dim: 6 },
            sc: GraphBranchConfig { kind: GraphKind::Structural, n_nodes: 6, hidden: [3, 4], cheb_k: 3, latent_dim: 6 },
            classifier_hidden: [8, 4],
            n_classes: 2,
            lambda_max: LambdaMax::Fixed(2.0),
        }
    }

    fn tiny_inputs() -> (Tensor<f64>, ConnGraph<f64>, ConnGraph<f64>) {
        let vol = Tensor::filled(&[8, 8, 8], 0.5);
        let fnc = ConnGraph::from_upper(5, &[0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.6, -0.1, 0.3, 0.2]).unwrap();
        let sc_upper: Vec<f64> = (0..15).map(|i| (i % 4) as f64 + 1.0).collect();
        let sc = ConnGraph::from_upper(6, &sc_upper).unwrap();
        (vol, fnc, sc)
    }

    #[test]
    fn forward_probs_sum_to_one() {
        let model: FusionModel<f64> = FusionModel::init(tiny_config(), 11).unwrap();
        let (vol, fnc, sc) = tiny_inputs();
        let lhat = model.prepare_sc_lhat(&sc).unwrap();
        let input = SubjectInput { vol: &vol, fnc: &fnc, sc_lhat: &lhat };
        let probs = model.predict(&input).unwrap();
        assert_eq!(probs.numel(), 2);
        let s: f64 = probs.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        assert!(probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn latent_dims_match_config() {
        let model: FusionModel<f64> = FusionModel::init(tiny_config(), 11).unwrap();
        let (vol, fnc, sc) = tiny_inputs();
        let lhat = model.prepare_sc_lhat(&sc).unwrap();
        let input = SubjectInput { vol: &vol, fnc: &fnc, sc_lhat: &lhat };
        let mut tape = model.make_tape();
        let staged = model.stage(&mut tape, false);
        let pass = model.forward_staged(&mut tape, &staged, &input, false).unwrap();
        for &l in &pass.latents {
            assert_eq!(tape.value(l).numel(), 6);
        }
        assert_eq!(tape.value(pass.logits).numel(), 2);
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a: FusionModel<f32> = FusionModel::init(tiny_config(), 5).unwrap();
        let b: FusionModel<f32> = FusionModel::init(tiny_config(), 5).unwrap();
        let c: FusionModel<f32> = FusionModel::init(tiny_config(), 6).unwrap();
        for (x, y) in a.params().tensors().iter().zip(b.params().tensors()) {
            assert_eq!(x.as_slice(), y.as_slice());
        }
        let differs = a
            .params()
            .tensors()
            .iter()
            .zip(c.params().tensors())
            .any(|(x, y)| x.as_slice() != y.as_slice());
        assert!(differs);
    }

    #[test]
    fn parameter_count_matches_instantiated_model() {
        let cfg = tiny_config();
        let model: FusionModel<f64> = FusionModel::init(cfg.clone(), 1).unwrap();
        assert_eq!(FusionModel::<f64>::parameter_count(&cfg), model.params().total_scalars());
        for kind in Modality::ALL {
            let um: UnimodalModel<f64> = UnimodalModel::init(kind, cfg.clone(), 1).unwrap();
            assert_eq!(UnimodalModel::<f64>::parameter_count(&cfg, kind), um.params().total_scalars());
        }
    }

    #[test]
    fn default_config_counts() {
        // volume: conv stack + dense stack on 32^3 input (flatten 32*4^3 = 2048)
        let cfg = ModelConfig::default();
        let count = FusionModel::<f32>::parameter_count(&cfg);
        let conv: usize = [(1, 8), (8, 8), (8, 16), (16, 16), (16, 32), (32, 32)]
            .iter()
            .map(|&(i, o): &(usize, usize)| o * i * 27 + o)
            .sum();
        let vol_dense = 512 * 2048 + 512 + 256 * 512 + 256 + 128 * 256 + 128 + 100 * 128 + 100;
        let fnc = (2 * 16 + 16) + (16 * 2 * 32 + 32) + (53 * 32 * 100 + 100);
        let sc = 3 * 16 + 3 * 16 * 32 + (84 * 32 * 100 + 100);
        let cls = 128 * 300 + 128 + 32 * 128 + 32 + 2 * 32 + 2;
        assert_eq!(count, conv + vol_dense + fnc + sc + cls);
    }

    #[test]
    fn branch_shape_errors_name_the_branch() {
        let model: FusionModel<f64> = FusionModel::init(tiny_config(), 11).unwrap();
        let (vol, fnc, sc) = tiny_inputs();
        let lhat = model.prepare_sc_lhat(&sc).unwrap();
        let bad_vol = Tensor::<f64>::zeros(&[4, 4, 4]);
        let input = SubjectInput { vol: &bad_vol, fnc: &fnc, sc_lhat: &lhat };
        match model.predict(&input) {
            Err(Error::BranchShape { branch, .. }) => assert_eq!(branch, "volume"),
            other => panic!("expected volume branch error, got {other:?}"),
        }
        let bad_fnc = ConnGraph::from_upper(4, &[0.1; 6]).unwrap();
        let input = SubjectInput { vol: &vol, fnc: &bad_fnc, sc_lhat: &lhat };
        match model.predict(&input) {
            Err(Error::BranchShape { branch, .. }) => assert_eq!(branch, "functional"),
            other => panic!("expected functional branch error, got {other:?}"),
        }
    }

    #[test]
    fn weight_variance_tracks_kaiming_target() {
        let cfg = ModelConfig::default();
        let model: FusionModel<f64> = FusionModel::init(cfg, 42).unwrap();
        for (name, t) in model.params().names().iter().zip(model.params().tensors()) {
            if t.numel() < 1000 || name.ends_with(".bias") {
                continue;
            }
            let fan_in = match t.shape() {
                [_, cin, k, _, _] => cin * k * k * k,
                [a, b] => {
                    if name.contains("dense") {
                        *b // dense weights are (out, in)
                    } else {
                        *a // graph weights are (in, out)
                    }
                }
                _ => continue,
            };
            let target = 2.0 / fan_in as f64;
            let mean: f64 = t.iter().sum::<f64>() / t.numel() as f64;
            let var: f64 = t.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / t.numel() as f64;
            assert!(
                var > 0.5 * target && var < 1.5 * target,
                "{name}: var {var:.3e} vs target {target:.3e}"
            );
        }
    }

    #[test]
    fn unimodal_has_no_foreign_parameters() {
        let cfg = tiny_config();
        let um: UnimodalModel<f64> = UnimodalModel::init(Modality::Volume, cfg, 3).unwrap();
        assert!(um.params().names().iter().all(|n| n.starts_with("vol.") || n.starts_with("cls.")));
        let (vol, fnc, sc) = tiny_inputs();
        let lhat = um.prepare_sc_lhat(&sc).unwrap();
        let input = SubjectInput { vol: &vol, fnc: &fnc, sc_lhat: &lhat };
        let mut tape = um.make_tape();
        let staged = um.stage(&mut tape, false);
        let pass = um.forward_staged(&mut tape, &staged, &input, false).unwrap();
        let s: f64 = tape.value(pass.probs).iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
}
