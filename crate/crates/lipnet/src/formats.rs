//! JSON files: function specs and network checkpoints.
//!
//! A function spec is `{"breakpoints": [...], "slopes": [...], "anchor": [x0, y0]}`.
//!
//! A checkpoint lists the layers in order. Dense layers carry their kind
//! (`aol`, `cpl`, `soc` or `linear`), explicit `in_dim`/`out_dim`, the weight
//! rows under `"P"` and the bias under `"b"`. Activation stages have kind
//! `act`, their width under `dim`, and an `act` object whose `kind` is one of
//! `nact`, `maxmin`, `abs`, `relu` or `identity`. N-activations also list
//! `theta` pairs and per-channel `abs_mode` flags.

use std::fs;
use std::path::Path;

use lipnet_core::activations::{Activation, NActParams};
use lipnet_core::layers::{DenseLayer, DenseParams, LayerKind, SocTerms};
use lipnet_core::linalg::Matrix;
use lipnet_core::nn::{Layer, Network};
use lipnet_core::pwl::CpwlFunction;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub breakpoints: Vec<f64>,
    pub slopes: Vec<f64>,
    pub anchor: [f64; 2],
}

impl FunctionSpec {
    pub fn to_function(&self) -> Result<CpwlFunction> {
        Ok(CpwlFunction::new(self.breakpoints.clone(), self.slopes.clone(), (self.anchor[0], self.anchor[1]))?)
    }
}

impl From<&CpwlFunction> for FunctionSpec {
    fn from(f: &CpwlFunction) -> Self {
        let (x0, y0) = f.anchor();
        Self { breakpoints: f.breakpoints().to_vec(), slopes: f.slopes().to_vec(), anchor: [x0, y0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub input_dim: usize,
    pub output_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_offset: Option<Vec<f64>>,
    #[serde(default = "default_nact_scale")]
    pub nact_scale: f64,
    pub layers: Vec<LayerEntry>,
}

fn default_nact_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dim: Option<usize>,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    /// SOC series lengths `[train, eval]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soc_terms: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub act: Option<ActEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActEntry {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_mode: Option<Vec<bool>>,
}

fn parse_kind(name: &str) -> Option<LayerKind> {
    [LayerKind::Aol, LayerKind::Cpl, LayerKind::Soc, LayerKind::Linear].into_iter().find(|k| k.name() == name)
}

impl Checkpoint {
    pub fn from_network(net: &Network) -> Self {
        let mut dim = net.input_dim();
        let layers = net
            .layers()
            .iter()
            .map(|layer| match layer {
                Layer::Dense(d) => {
                    let p = d.params();
                    dim = d.out_dim();
                    LayerEntry {
                        kind: p.kind.name().into(),
                        in_dim: Some(d.in_dim()),
                        out_dim: Some(d.out_dim()),
                        weight: Some(p.weight.to_rows()),
                        b: Some(p.bias.clone()),
                        soc_terms: (p.kind == LayerKind::Soc).then_some([p.soc_terms.train, p.soc_terms.eval]),
                        dim: None,
                        act: None,
                    }
                }
                Layer::Act(a) => {
                    let (theta, abs_mode) = match a {
                        Activation::NAct(p) => (
                            Some(p.iter().map(|p| [p.theta1, p.theta2]).collect()),
                            Some(p.iter().map(|p| p.abs_mode).collect()),
                        ),
                        _ => (None, None),
                    };
                    LayerEntry {
                        kind: "act".into(),
                        in_dim: None,
                        out_dim: None,
                        weight: None,
                        b: None,
                        soc_terms: None,
                        dim: Some(dim),
                        act: Some(ActEntry { kind: a.name().into(), theta, abs_mode }),
                    }
                }
            })
            .collect();
        Self {
            input_dim: net.input_dim(),
            output_dim: net.output_dim(),
            input_offset: net.input_offset().map(<[f64]>::to_vec),
            nact_scale: net.nact_scale(),
            layers,
        }
    }

    pub fn to_network(&self) -> Result<Network> {
        let bad = |i: usize, what: &str| Error::Checkpoint(format!("layer {i}: {what}"));
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, entry) in self.layers.iter().enumerate() {
            if entry.kind == "act" {
                let act = entry.act.as_ref().ok_or_else(|| bad(i, "missing act"))?;
                layers.push(Layer::Act(parse_activation(act).map_err(|e| bad(i, &e))?));
                continue;
            }
            let kind = parse_kind(&entry.kind).ok_or_else(|| bad(i, &format!("unknown kind {:?}", entry.kind)))?;
            let rows = entry.weight.as_ref().ok_or_else(|| bad(i, "missing P"))?;
            let weight = Matrix::from_rows(rows).map_err(|e| bad(i, &e.to_string()))?;
            let bias = entry.b.clone().ok_or_else(|| bad(i, "missing b"))?;
            let mut params = DenseParams::new(kind, weight, bias).map_err(|e| bad(i, &e.to_string()))?;
            if let Some([train, eval]) = entry.soc_terms {
                params.soc_terms = SocTerms { train, eval };
            }
            let layer = DenseLayer::new(params).map_err(|e| bad(i, &e.to_string()))?;
            if entry.in_dim.is_some_and(|d| d != layer.in_dim()) || entry.out_dim.is_some_and(|d| d != layer.out_dim()) {
                return Err(bad(i, "declared dimensions do not match P"));
            }
            layers.push(Layer::Dense(layer));
        }
        let mut net = Network::new(self.input_dim, layers)?;
        if net.output_dim() != self.output_dim {
            return Err(Error::Checkpoint(format!(
                "declared output_dim {} but layers produce {}",
                self.output_dim,
                net.output_dim()
            )));
        }
        net.set_input_offset(self.input_offset.clone())?;
        net.set_nact_scale(self.nact_scale)?;
        Ok(net)
    }
}

fn parse_activation(entry: &ActEntry) -> std::result::Result<Activation, String> {
    Ok(match entry.kind.as_str() {
        "maxmin" => Activation::MaxMin,
        "abs" => Activation::Abs,
        "relu" => Activation::Relu,
        "identity" => Activation::Identity,
        "nact" => {
            let theta = entry.theta.as_ref().ok_or("nact needs theta")?;
            let abs = entry.abs_mode.clone().unwrap_or_else(|| vec![false; theta.len()]);
            if abs.len() != theta.len() {
                return Err("theta and abs_mode differ in length".into());
            }
            let params: Vec<NActParams> = theta
                .iter()
                .zip(abs)
                .map(|(&[theta1, theta2], abs_mode)| NActParams { theta1, theta2, abs_mode })
                .collect();
            if params.iter().any(|p| !p.is_valid()) {
                return Err("non-finite theta".into());
            }
            Activation::NAct(params)
        }
        other => return Err(format!("unknown activation {other:?}")),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.into(), source })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_function(path: &Path) -> Result<CpwlFunction> {
    read_json::<FunctionSpec>(path)?.to_function()
}

pub fn write_function(path: &Path, f: &CpwlFunction) -> Result<()> {
    write_json(path, &FunctionSpec::from(f))
}

pub fn read_network(path: &Path) -> Result<Network> {
    read_json::<Checkpoint>(path)?.to_network()
}

pub fn write_network(path: &Path, net: &Network) -> Result<()> {
    write_json(path, &Checkpoint::from_network(net))
}

#[cfg(test)]
mod tests {
    use super::*;
    use lipnet_core::compiler::compile;
    use lipnet_core::nn::{build_mlp, ActivationChoice, MlpSpec, NActInit};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn function_round_trip() {
        let f = CpwlFunction::n_function();
        let text = serde_json::to_string(&FunctionSpec::from(&f)).unwrap();
        assert_eq!(text, r#"{"breakpoints":[-0.5,0.5],"slopes":[1.0,-1.0,1.0],"anchor":[0.0,0.0]}"#);
        let back: FunctionSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_function().unwrap(), f);
    }

    #[test]
    fn invalid_function_is_rejected() {
        let spec = FunctionSpec { breakpoints: vec![0.0], slopes: vec![2.0, 0.0], anchor: [0.0, 0.0] };
        assert!(matches!(spec.to_function(), Err(Error::Core(_))));
    }

    #[test]
    fn network_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [LayerKind::Aol, LayerKind::Cpl, LayerKind::Soc, LayerKind::Linear] {
            for activation in [ActivationChoice::NAct(NActInit::Random), ActivationChoice::MaxMin, ActivationChoice::Relu] {
                let spec = MlpSpec {
                    input_dim: 3,
                    width: 4,
                    depth: 3,
                    output_dim: 2,
                    layer_kind: kind,
                    activation,
                    absid_theta1: -100.0,
                };
                let mut net = build_mlp(&spec, &mut rng).unwrap();
                net.set_input_offset(Some(vec![0.5, -1.0, 2.0])).unwrap();
                let ckpt = Checkpoint::from_network(&net);
                let text = serde_json::to_string(&ckpt).unwrap();
                let back = serde_json::from_str::<Checkpoint>(&text).unwrap().to_network().unwrap();
                assert_eq!(back.layers(), net.layers());
                assert_eq!(back.input_offset(), net.input_offset());
                let x = [0.3, -0.7, 1.1];
                assert_eq!(back.predict(&x).unwrap(), net.predict(&x).unwrap());
            }
        }
    }

    #[test]
    fn compiled_network_keeps_abs_mode() {
        let f = CpwlFunction::new(vec![-1.0, 1.0], vec![-0.5, 0.8, 0.2], (0.0, 0.0)).unwrap();
        let net = compile(&f).unwrap();
        let back = Checkpoint::from_network(&net).to_network().unwrap();
        for x in [-1e6, -3.0, 0.0, 2.0, 1e6] {
            assert_eq!(back.eval_scalar(x).unwrap(), net.eval_scalar(x).unwrap());
        }
    }

    #[test]
    fn malformed_checkpoints_are_rejected() {
        let net = Network::empty(2);
        let mut ckpt = Checkpoint::from_network(&net);
        ckpt.layers.push(LayerEntry {
            kind: "aol".into(),
            in_dim: Some(3),
            out_dim: Some(1),
            weight: Some(vec![vec![1.0, 0.0]]),
            b: Some(vec![0.0]),
            soc_terms: None,
            dim: None,
            act: None,
        });
        ckpt.output_dim = 1;
        assert!(matches!(ckpt.to_network(), Err(Error::Checkpoint(_))));
        ckpt.layers[0].in_dim = Some(2);
        assert!(ckpt.to_network().is_ok());
        ckpt.output_dim = 5;
        assert!(matches!(ckpt.to_network(), Err(Error::Checkpoint(_))));
        ckpt.output_dim = 1;
        ckpt.layers[0].kind = "conv".into();
        assert!(matches!(ckpt.to_network(), Err(Error::Checkpoint(_))));
    }
}
