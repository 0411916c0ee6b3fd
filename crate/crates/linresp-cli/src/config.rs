use std::path::PathBuf;

use linresp::lattice_model::{BlochHamiltonian, LatticeModel, TwoBodyPotential};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub kms: f64,
    pub wick: f64,
    pub continuity: f64,
    pub ward: f64,
    pub closed_form: f64,
    pub bubble: f64,
    pub decay: f64,
    pub scaling: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { kms: 1e-9, wick: 1e-8, continuity: 1e-12, ward: 1e-9, closed_form: 1e-12, bubble: 1e-3, decay: 0.3, scaling: 0.4 }
    }
}

impl Tolerances {
    fn all(&self) -> [(&'static str, f64); 8] {
        [
            ("kms", self.kms),
            ("wick", self.wick),
            ("continuity", self.continuity),
            ("ward", self.ward),
            ("closed_form", self.closed_form),
            ("bubble", self.bubble),
            ("decay", self.decay),
            ("scaling", self.scaling),
        ]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            kms: self.kms * s,
            wick: self.wick * s,
            continuity: self.continuity * s,
            ward: self.ward * s,
            closed_form: self.closed_form * s,
            bubble: self.bubble * s,
            decay: self.decay,
            scaling: self.scaling * s,
        }
    }
}

/// Parameters of one run. Every field has a default, so an empty file is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Model file; without one the nearest-neighbour chain at `mu`, `lambda` is used.
    pub model: Option<PathBuf>,
    pub mu: f64,
    pub lambda: f64,
    pub beta: f64,
    pub l: usize,
    pub etas: Vec<f64>,
    pub a: f64,
    pub nu: usize,
    pub seed: u64,
    pub ed_l: usize,
    pub ed_beta: f64,
    /// Reference-model velocity, momentum and grid spacing.
    pub v: f64,
    pub p: [f64; 2],
    pub spacing: f64,
    pub n: Vec<u32>,
    pub momenta: Vec<[f64; 2]>,
    pub offset_window: Option<[f64; 2]>,
    pub m: usize,
    pub velocities: Vec<f64>,
    pub coupling: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    pub q: Vec<f64>,
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: None,
            mu: 2.0,
            lambda: 0.0,
            beta: 400.0,
            l: 512,
            etas: vec![0.2, 0.1, 0.05],
            a: 1.0,
            nu: 0,
            seed: 0,
            ed_l: 4,
            ed_beta: 4.0,
            v: 1.0,
            p: [1.0, 0.5],
            spacing: 0.5,
            n: (4..=10).collect(),
            momenta: vec![[1.0, 1.0], [1.0, -2.0], [-2.0, 1.0]],
            offset_window: None,
            m: 4,
            velocities: vec![1.0, -1.0],
            coupling: vec![vec![0.0, 2.0], vec![2.0, 0.0]],
            z: vec![1.0, 1.0],
            q: (-10..=10).map(|i| 0.5 * i as f64).collect(),
            tolerances: Tolerances::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(s: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(s).map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::ConfigInvalid(m));
        if self.etas.is_empty() {
            return bad("eta list is empty".into());
        }
        if self.etas.iter().any(|e| !(*e > 0.0)) {
            return bad("eta values must be positive".into());
        }
        if self.etas.windows(2).any(|w| w[1] >= w[0]) {
            return bad("eta list must be sorted in strictly descending order".into());
        }
        if !(self.a > 0.0) {
            return bad(format!("a must be positive, got {}", self.a));
        }
        if !(self.beta > 0.0) || !(self.ed_beta > 0.0) || self.l == 0 || self.ed_l == 0 {
            return bad("beta and L must be positive".into());
        }
        if self.nu > 1 {
            return bad(format!("nu must be 0 or 1, got {}", self.nu));
        }
        if self.n.is_empty() {
            return bad("cutoff list n is empty".into());
        }
        if !(self.spacing > 0.0) {
            return bad("spacing must be positive".into());
        }
        for (name, t) in self.tolerances.all() {
            if !(t > 0.0) {
                return bad(format!("tolerance {name} must be positive"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the command and the canonical JSON form of the config.
    pub fn hash(&self, command: &str) -> String {
        let body = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(format!("{command}\n{body}").as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn lattice_model(&self) -> Result<LatticeModel, CliError> {
        match &self.model {
            Some(path) => {
                if !path.exists() {
                    return Err(CliError::ModelFileMissing(path.clone()));
                }
                Ok(LatticeModel::from_path(path)?)
            }
            None => Ok(LatticeModel { hamiltonian: BlochHamiltonian::laplacian(1.0), potential: TwoBodyPotential::nearest_neighbour(), mu: self.mu, lambda: self.lambda }),
        }
    }
}
