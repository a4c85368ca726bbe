//! Experiment configuration: a JSON-serializable description of a complete
//! 2D imaging run, validated against every module-level invariant before any
//! compute, plus a canonical hash covering all numerics-affecting parameters.
//!
//! All lengths share one unit, chosen so that the shear wavelength of the
//! default medium is 1; angular frequency is in radians per time unit of the
//! same system.

use crate::backprop::SearchGrid;
use crate::elastic_moment::IsoEmt;
use crate::error::{Error, Result};
use crate::forward::BOUNDARY_MARGIN_WAVELENGTHS;
use crate::kupradze::{Medium, Mode};
use crate::noise_stats::GaussianFieldSpec;
use crate::scene::{
    circle_boundary, shear_polarizations, uniform_directions, BoundaryGrid, Inclusion, PlaneWave,
    TrialInclusion,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumConfig {
    pub lambda0: f64,
    pub mu0: f64,
    pub rho0: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsoConfig {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionConfig {
    pub za: [f64; 2],
    pub delta: f64,
    pub volume_b: f64,
    pub rho1: f64,
    /// Isotropic moment-tensor coefficients; omit for a pure density contrast.
    #[serde(default)]
    pub iso: Option<IsoConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub rho1p: f64,
    pub volume_bp: f64,
    #[serde(default)]
    pub iso: Option<IsoConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    /// Radius of the circular measurement boundary.
    pub radius: f64,
    /// Number of quadrature nodes on the boundary.
    pub n_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbesConfig {
    /// Number of equispaced incidence directions per mode.
    pub n_directions: usize,
    /// Probe modes to run ("P", "S").
    pub modes: Vec<Mode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub center: [f64; 2],
    /// Half-width of the square search window.
    pub extents: f64,
    /// Requested lattice spacing (the realized spacing snaps to an integer
    /// node count).
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumNoiseConfig {
    pub sigma_gamma: f64,
    pub corr_len: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma_noise: f64,
    pub medium: MediumNoiseConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    /// Image output formats ("csv", "pgm").
    pub formats: Vec<String>,
}

/// Complete description of one 2D imaging experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub medium: MediumConfig,
    pub inclusion: InclusionConfig,
    pub trial: TrialConfig,
    pub boundary: BoundaryConfig,
    pub probes: ProbesConfig,
    pub search: SearchConfig,
    pub noise: NoiseConfig,
    pub mc: McConfig,
    pub output: OutputConfig,
}

/// Validated, ready-to-run experiment objects built from a config.
pub struct Experiment {
    pub medium: Medium,
    pub inclusion: Inclusion<2>,
    pub trial: TrialInclusion<2>,
    pub boundary: BoundaryGrid<2>,
    pub targets: SearchGrid<2>,
    pub field_spec: GaussianFieldSpec,
    /// Non-fatal validity warnings collected during validation.
    pub warnings: Vec<String>,
}

impl Default for ExperimentConfig {
    /// Desk-scale 2D default: cP/cS = √11, shear wavelength 1, boundary at
    /// 10 shear wavelengths with 512 nodes, 101×101 search lattice, 64 probe
    /// directions per mode.
    fn default() -> Self {
        ExperimentConfig {
            medium: MediumConfig {
                lambda0: 9.0,
                mu0: 1.0,
                rho0: 1.0,
                omega: 2.0 * PI,
            },
            inclusion: InclusionConfig {
                za: [0.2, -0.1],
                delta: 0.02,
                volume_b: PI,
                rho1: 3.0,
                iso: None,
            },
            trial: TrialConfig {
                rho1p: 3.0,
                volume_bp: PI,
                iso: None,
            },
            boundary: BoundaryConfig {
                radius: 10.0,
                n_nodes: 512,
            },
            probes: ProbesConfig {
                n_directions: 64,
                modes: vec![Mode::P, Mode::S],
            },
            search: SearchConfig {
                center: [0.0, 0.0],
                extents: 0.5,
                spacing: 0.01,
            },
            noise: NoiseConfig {
                sigma_noise: 0.5,
                medium: MediumNoiseConfig {
                    sigma_gamma: 0.05,
                    corr_len: 0.25,
                },
            },
            mc: McConfig {
                trials: 500,
                seed: 7,
            },
            output: OutputConfig {
                dir: "out".into(),
                formats: vec!["csv".into(), "pgm".into()],
            },
        }
    }
}

impl ExperimentConfig {
    /// Parse a config from a JSON file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Serialize to pretty JSON.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("config serialization: {e}")))
    }

    /// SHA-256 of the canonical (compact, field-ordered) JSON serialization.
    /// Every parameter that affects numerics — including the root seed — is a
    /// struct field, so any change to any of them changes the hash.
    pub fn hash(&self) -> Result<String> {
        let canon = serde_json::to_string(self)
            .map_err(|e| Error::Config(format!("config serialization: {e}")))?;
        let mut h = Sha256::new();
        h.update(canon.as_bytes());
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Number of search lattice nodes per axis implied by extents/spacing.
    pub fn search_nodes(&self) -> usize {
        (2.0 * self.search.extents / self.search.spacing).round() as usize + 1
    }

    /// Build the probe set for one mode (pressure waves, or shear waves with
    /// the in-plane polarization).
    pub fn build_probes(&self, mode: Mode) -> Result<Vec<PlaneWave<2>>> {
        uniform_directions::<2>(self.probes.n_directions)?
            .into_iter()
            .map(|e| match mode {
                Mode::P => PlaneWave::pressure(e),
                Mode::S => PlaneWave::shear(e, shear_polarizations::<2>(e)?[0]),
            })
            .collect()
    }

    /// Validate against all module invariants and build the run objects.
    pub fn build(&self) -> Result<Experiment> {
        let medium = Medium::new(
            self.medium.lambda0,
            self.medium.mu0,
            self.medium.rho0,
            self.medium.omega,
        )
        .map_err(|e| Error::Config(format!("medium: {e}")))?;
        medium.validate(2)?;

        let mk_iso = |iso: Option<IsoConfig>, field: &str| -> Result<IsoEmt> {
            match iso {
                Some(c) => IsoEmt::new(c.a, c.b)
                    .map_err(|e| Error::Config(format!("{field}.iso: {e}"))),
                None => Ok(IsoEmt { a: 0.0, b: 0.0 }),
            }
        };
        let inclusion = Inclusion::<2>::new_iso(
            self.inclusion.za,
            self.inclusion.delta,
            self.inclusion.volume_b,
            self.inclusion.rho1,
            mk_iso(self.inclusion.iso, "inclusion")?,
        )
        .map_err(|e| Error::Config(format!("inclusion: {e}")))?;
        let trial = TrialInclusion::<2>::new_iso(
            self.trial.rho1p,
            self.trial.volume_bp,
            mk_iso(self.trial.iso, "trial")?,
        );
        trial
            .check_contrast_sign(medium.rho0, inclusion.rho1)
            .map_err(|e| Error::Config(format!("trial: {e}")))?;

        let boundary = circle_boundary(self.boundary.radius, self.boundary.n_nodes)
            .map_err(|e| Error::Config(format!("boundary: {e}")))?;

        if !(self.search.spacing > 0.0) {
            return Err(Error::Config(format!(
                "search.spacing={} must be > 0",
                self.search.spacing
            )));
        }
        let targets = SearchGrid::centered(self.search.center, self.search.extents, self.search_nodes())
            .map_err(|e| Error::Config(format!("search: {e}")))?;
        let margin = BOUNDARY_MARGIN_WAVELENGTHS * 2.0 * PI / medium.kappa_s();
        targets
            .check_margin(&boundary, margin)
            .map_err(|e| Error::Config(format!("search: {e}")))?;

        if self.probes.modes.is_empty() {
            return Err(Error::Config("probes.modes must not be empty".into()));
        }
        if self.probes.n_directions == 0 {
            return Err(Error::Config("probes.n_directions must be >= 1".into()));
        }
        if self.mc.trials < 2 {
            return Err(Error::Config(format!(
                "mc.trials={} must be >= 2",
                self.mc.trials
            )));
        }
        if self.noise.sigma_noise < 0.0 {
            return Err(Error::Config(format!(
                "noise.sigma_noise={} must be >= 0",
                self.noise.sigma_noise
            )));
        }
        let field_spec = GaussianFieldSpec::new(
            self.noise.medium.sigma_gamma,
            self.noise.medium.corr_len,
        )
        .map_err(|e| Error::Config(format!("noise.medium: {e}")))?;

        let mut warnings = inclusion.validity_warnings(&medium);
        warnings.extend(field_spec.warnings());
        if self.probes.n_directions < 16 {
            warnings.push(format!(
                "probes.n_directions={} is small; directional averages carry O(1/n) error",
                self.probes.n_directions
            ));
        }

        Ok(Experiment {
            medium,
            inclusion,
            trial,
            boundary,
            targets,
            field_spec,
            warnings,
        })
    }
}
