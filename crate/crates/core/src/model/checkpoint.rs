//! Model checkpoints: one kv manifest plus one MMT1 file per parameter
//! tensor, named by parameter name. Loads are bit-exact at the stored
//! precision; a checkpoint saved at f32 cannot be opened at f64 or vice
//! versa.

use std::path::Path;

use super::{
    FusionModel, GraphBranchConfig, GraphKind, Modality, ModelConfig, UnimodalModel, VolumeConfig,
};
use crate::error::{Error, Result};
use crate::gnn::LambdaMax;
use crate::manifest::{read_kv, write_kv, KvMap};
use crate::mmt1;
use crate::scalar::Scalar;
use crate::tensor::{ReluMode, Tensor};

pub const MODEL_MANIFEST_FILE: &str = "model.manifest";
const CHECKPOINT_SCHEMA: u32 = 1;

#[derive(Debug, Clone)]
pub enum AnyModel<T> {
    Fusion(FusionModel<T>),
    Unimodal(UnimodalModel<T>),
}

impl<T: Scalar> AnyModel<T> {
    pub fn kind_name(&self) -> &'static str {
        match self {
            AnyModel::Fusion(_) => "fusion",
            AnyModel::Unimodal(m) => m.kind().name(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            AnyModel::Fusion(m) => m.config(),
            AnyModel::Unimodal(m) => m.config(),
        }
    }
}

fn relu_mode_name(mode: ReluMode) -> &'static str {
    match mode {
        ReluMode::Standard => "standard",
        ReluMode::Guided => "guided",
        ReluMode::GuidedGradientOnly => "guided-gradient-only",
    }
}

fn relu_mode_from(name: &str, path: &Path) -> Result<ReluMode> {
    match name {
        "standard" => Ok(ReluMode::Standard),
        "guided" => Ok(ReluMode::Guided),
        "guided-gradient-only" => Ok(ReluMode::GuidedGradientOnly),
        other => Err(Error::BadManifest {
            path: path.to_path_buf(),
            detail: format!("unknown relu_mode {other:?}"),
        }),
    }
}

fn lambda_max_from(name: &str, path: &Path) -> Result<LambdaMax> {
    LambdaMax::parse(name).ok_or_else(|| Error::BadManifest {
        path: path.to_path_buf(),
        detail: format!("unknown lambda_max {name:?}"),
    })
}

fn list(values: &[usize]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn config_pairs(config: &ModelConfig) -> Vec<(String, String)> {
    let (d, h, w) = config.volume.input_shape;
    vec![
        ("volume.input_shape".into(), format!("{d},{h},{w}")),
        ("volume.conv_channels".into(), list(&config.volume.conv_channels)),
        ("volume.dense_widths".into(), list(&config.volume.dense_widths)),
        ("latent_dim".into(), config.volume.latent_dim.to_string()),
        ("fnc.n_nodes".into(), config.fnc.n_nodes.to_string()),
        ("fnc.hidden".into(), list(&config.fnc.hidden)),
        ("sc.n_nodes".into(), config.sc.n_nodes.to_string()),
        ("sc.hidden".into(), list(&config.sc.hidden)),
        ("sc.cheb_k".into(), config.sc.cheb_k.to_string()),
        ("classifier_hidden".into(), list(&config.classifier_hidden)),
        ("n_classes".into(), config.n_classes.to_string()),
        ("lambda_max".into(), config.lambda_max.render()),
    ]
}

fn fixed_array<const N: usize>(v: Vec<usize>, key: &str, path: &Path) -> Result<[usize; N]> {
    <[usize; N]>::try_from(v).map_err(|v| Error::BadManifest {
        path: path.to_path_buf(),
        detail: format!("key {key:?}: expected {N} values, got {}", v.len()),
    })
}

fn config_from(kv: &mut KvMap, path: &Path) -> Result<ModelConfig> {
    let shape: [usize; 3] = fixed_array(kv.parse_list("volume.input_shape")?, "volume.input_shape", path)?;
    let conv_channels: [usize; 6] =
        fixed_array(kv.parse_list("volume.conv_channels")?, "volume.conv_channels", path)?;
    let dense_widths: [usize; 3] =
        fixed_array(kv.parse_list("volume.dense_widths")?, "volume.dense_widths", path)?;
    let latent_dim: usize = kv.parse("latent_dim")?;
    let fnc_hidden: [usize; 2] = fixed_array(kv.parse_list("fnc.hidden")?, "fnc.hidden", path)?;
    let sc_hidden: [usize; 2] = fixed_array(kv.parse_list("sc.hidden")?, "sc.hidden", path)?;
    let classifier_hidden: [usize; 2] =
        fixed_array(kv.parse_list("classifier_hidden")?, "classifier_hidden", path)?;
    Ok(ModelConfig {
        volume: VolumeConfig {
            input_shape: (shape[0], shape[1], shape[2]),
            conv_channels,
            dense_widths,
            latent_dim,
        },
        fnc: GraphBranchConfig {
            kind: GraphKind::Functional,
            n_nodes: kv.parse("fnc.n_nodes")?,
            hidden: fnc_hidden,
            cheb_k: 0,
            latent_dim,
        },
        sc: GraphBranchConfig {
            kind: GraphKind::Structural,
            n_nodes: kv.parse("sc.n_nodes")?,
            hidden: sc_hidden,
            cheb_k: kv.parse("sc.cheb_k")?,
            latent_dim,
        },
        classifier_hidden,
        n_classes: kv.parse("n_classes")?,
        lambda_max: lambda_max_from(&kv.str("lambda_max")?, path)?,
    })
}

fn save_parts<T: Scalar>(
    dir: &Path,
    kind: &str,
    config: &ModelConfig,
    seed: u64,
    relu_mode: ReluMode,
    names: &[String],
    tensors: &[Tensor<T>],
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut pairs = vec![
        ("schema".to_string(), CHECKPOINT_SCHEMA.to_string()),
        ("kind".to_string(), kind.to_string()),
        ("dtype".to_string(), T::DTYPE.name().to_string()),
        ("seed".to_string(), seed.to_string()),
        ("relu_mode".to_string(), relu_mode_name(relu_mode).to_string()),
    ];
    pairs.extend(config_pairs(config));
    pairs.push(("tensors".to_string(), names.len().to_string()));
    write_kv(&dir.join(MODEL_MANIFEST_FILE), &pairs)?;

    for (name, tensor) in names.iter().zip(tensors) {
        mmt1::write_scalars(&dir.join(format!("{name}.mmt1")), tensor.shape(), tensor.as_slice())?;
    }
    Ok(())
}

pub fn save_model<T: Scalar>(model: &AnyModel<T>, dir: &Path) -> Result<()> {
    match model {
        AnyModel::Fusion(m) => save_parts(
            dir,
            "fusion",
            m.config(),
            m.seed(),
            m.relu_mode(),
            m.params().names(),
            m.params().tensors(),
        ),
        AnyModel::Unimodal(m) => save_parts(
            dir,
            m.kind().name(),
            m.config(),
            m.seed(),
            m.relu_mode(),
            m.params().names(),
            m.params().tensors(),
        ),
    }
}

fn load_tensors<T: Scalar>(dir: &Path, names: &[String], tensors: &mut [Tensor<T>]) -> Result<()> {
    for (name, tensor) in names.iter().zip(tensors.iter_mut()) {
        let path = dir.join(format!("{name}.mmt1"));
        if !path.is_file() {
            return Err(Error::BadManifest {
                path,
                detail: format!("tensor file for {name:?} missing"),
            });
        }
        let raw = mmt1::read(&path)?;
        let dtype_ok = match (&raw.payload, T::DTYPE) {
            (mmt1::Payload::F32(_), mmt1::Dtype::F32) => true,
            (mmt1::Payload::F64(_), mmt1::Dtype::F64) => true,
            _ => false,
        };
        if !dtype_ok {
            return Err(Error::BadTensorFile {
                path,
                detail: format!(
                    "checkpoint stores a different precision than requested ({})",
                    T::DTYPE.name()
                ),
            });
        }
        if raw.shape != tensor.shape() {
            return Err(Error::BadTensorFile {
                path,
                detail: format!(
                    "tensor {name:?} has shape {:?}, model expects {:?}",
                    raw.shape,
                    tensor.shape()
                ),
            });
        }
        let data = raw.to_scalar::<T>(&path)?;
        *tensor = Tensor::from_vec(raw.shape, data);
    }
    Ok(())
}

pub fn load_model<T: Scalar>(dir: &Path) -> Result<AnyModel<T>> {
    let path = dir.join(MODEL_MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::MissingStage {
            needed: "model checkpoint",
            stage: "train",
            detail: format!("{} not found", path.display()),
        });
    }
    let mut kv = KvMap::new(&path, read_kv(&path)?);

    let schema: u32 = kv.parse("schema")?;
    if schema != CHECKPOINT_SCHEMA {
        return Err(Error::BadManifest {
            path,
            detail: format!("schema {schema} unsupported, expected {CHECKPOINT_SCHEMA}"),
        });
    }
    let kind = kv.str("kind")?;
    let dtype = kv.str("dtype")?;
    if dtype != T::DTYPE.name() {
        return Err(Error::BadManifest {
            path,
            detail: format!("checkpoint precision {dtype} does not match requested {}", T::DTYPE.name()),
        });
    }
    let seed: u64 = kv.parse("seed")?;
    let relu_mode = relu_mode_from(&kv.str("relu_mode")?, &path)?;
    let config = config_from(&mut kv, &path)?;
    let n_tensors: usize = kv.parse("tensors")?;
    kv.finish()?;

    let mut model = match kind.as_str() {
        "fusion" => AnyModel::Fusion(FusionModel::init(config, seed)?),
        "volume" => AnyModel::Unimodal(UnimodalModel::init(Modality::Volume, config, seed)?),
        "functional" => AnyModel::Unimodal(UnimodalModel::init(Modality::Functional, config, seed)?),
        "structural" => AnyModel::Unimodal(UnimodalModel::init(Modality::Structural, config, seed)?),
        other => {
            return Err(Error::BadManifest {
                path,
                detail: format!("unknown model kind {other:?}"),
            })
        }
    };

    {
        let params = match &mut model {
            AnyModel::Fusion(m) => {
                m.set_relu_mode(relu_mode);
                m.params_mut()
            }
            AnyModel::Unimodal(m) => {
                m.set_relu_mode(relu_mode);
                m.params_mut()
            }
        };
        if params.len() != n_tensors {
            return Err(Error::BadManifest {
                path,
                detail: format!(
                    "manifest lists {n_tensors} tensors, model has {}",
                    params.len()
                ),
            });
        }
        let names = params.names().to_vec();
        load_tensors(dir, &names, params.tensors_mut())?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ModelConfig {
        let mut c = ModelConfig::default();
        c.volume.input_shape = (8, 8, 8);
        c.volume.conv_channels = [2, 2, 2, 2, 2, 2];
        c.volume.dense_widths = [16, 12, 10];
        c.volume.latent_dim = 6;
        c.fnc.n_nodes = 5;
        c.fnc.hidden = [3, 4];
        c.fnc.latent_dim = 6;
        c.sc.n_nodes = 7;
        c.sc.hidden = [3, 4];
        c.sc.latent_dim = 6;
        c.classifier_hidden = [8, 4];
        c
    }

    #[test]
    fn fusion_checkpoint_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = FusionModel::<f32>::init(small_config(), 99).unwrap();
        m.set_relu_mode(ReluMode::Guided);
        let saved = AnyModel::Fusion(m);
        save_model(&saved, dir.path()).unwrap();

        let loaded = load_model::<f32>(dir.path()).unwrap();
        let AnyModel::Fusion(got) = loaded else {
            panic!("expected fusion model");
        };
        let AnyModel::Fusion(orig) = &saved else { unreachable!() };
        assert_eq!(got.config(), orig.config());
        assert_eq!(got.seed(), 99);
        assert_eq!(got.relu_mode(), ReluMode::Guided);
        assert_eq!(got.params().names(), orig.params().names());
        for (a, b) in got.params().tensors().iter().zip(orig.params().tensors()) {
            assert_eq!(a.shape(), b.shape());
            assert_eq!(a.as_slice(), b.as_slice());
        }
    }

    #[test]
    fn unimodal_checkpoint_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = UnimodalModel::<f64>::init(Modality::Structural, small_config(), 3).unwrap();
        save_model(&AnyModel::Unimodal(m.clone()), dir.path()).unwrap();
        let AnyModel::Unimodal(got) = load_model::<f64>(dir.path()).unwrap() else {
            panic!("expected unimodal model");
        };
        assert_eq!(got.kind(), Modality::Structural);
        for (a, b) in got.params().tensors().iter().zip(m.params().tensors()) {
            assert_eq!(a.as_slice(), b.as_slice());
        }
    }

    #[test]
    fn checkpoint_rejects_precision_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let m = FusionModel::<f32>::init(small_config(), 1).unwrap();
        save_model(&AnyModel::Fusion(m), dir.path()).unwrap();
        let err = load_model::<f64>(dir.path()).unwrap_err();
        assert!(matches!(err, Error::BadManifest { .. }), "got {err:?}");
    }

    #[test]
    fn checkpoint_rejects_missing_tensor_file() {
        let dir = tempfile::tempdir().unwrap();
        let m = FusionModel::<f32>::init(small_config(), 1).unwrap();
        save_model(&AnyModel::Fusion(m), dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("cls.dense2.weight.mmt1")).unwrap();
        let err = load_model::<f32>(dir.path()).unwrap_err();
        assert!(matches!(err, Error::BadManifest { .. }), "got {err:?}");
    }

    #[test]
    fn checkpoint_rejects_shape_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let m = FusionModel::<f32>::init(small_config(), 1).unwrap();
        save_model(&AnyModel::Fusion(m), dir.path()).unwrap();
        let path = dir.path().join("cls.dense1.bias.mmt1");
        mmt1::write_scalars::<f32>(&path, &[3], &[0.0, 0.0, 0.0]).unwrap();
        let err = load_model::<f32>(dir.path()).unwrap_err();
        assert!(matches!(err, Error::BadTensorFile { .. }), "got {err:?}");
    }

    #[test]
    fn missing_checkpoint_names_the_train_stage() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_model::<f32>(dir.path()).unwrap_err();
        assert!(matches!(err, Error::MissingStage { stage: "train", .. }), "got {err:?}");
    }

    #[test]
    fn checkpoint_bytes_are_stable() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let m = AnyModel::Fusion(FusionModel::<f32>::init(small_config(), 7).unwrap());
        save_model(&m, d1.path()).unwrap();
        save_model(&m, d2.path()).unwrap();
        for f in [MODEL_MANIFEST_FILE, "vol.conv1.weight.mmt1", "sc.g2.theta0.mmt1"] {
            let a = std::fs::read(d1.path().join(f)).unwrap();
            let b = std::fs::read(d2.path().join(f)).unwrap();
            assert_eq!(a, b, "{f} differs");
        }
    }
}
