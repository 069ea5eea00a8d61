//! The developmental pipeline that turns a seed into a habituated body:
//! random construction, readout training, then Oja habituation.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{BrgError, Result};
use crate::reservoir::habituation::Habituator;
use crate::reservoir::{
    train_readout, HabituationConfig, HabituationOutcome, ReadoutTraining, ReadoutWeights,
    ReservoirParams, ReservoirSpec, ReservoirState,
};
use crate::rng::{stream, Stream};

pub const DEFAULT_BASELINE_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BodySpec {
    pub reservoir: ReservoirSpec,
    pub training: ReadoutTraining,
    pub habituation: HabituationConfig,
    /// Trailing habituation steps averaged into the sentinel baselines.
    pub baseline_window: usize,
}

impl Default for BodySpec {
    fn default() -> Self {
        Self {
            reservoir: ReservoirSpec::default(),
            training: ReadoutTraining::default(),
            habituation: HabituationConfig::default(),
            baseline_window: DEFAULT_BASELINE_WINDOW,
        }
    }
}

impl BodySpec {
    pub fn validate(&self) -> Result<()> {
        self.reservoir.validate()?;
        self.training.validate(self.reservoir.dim)?;
        self.habituation.validate()?;
        if self.baseline_window == 0 {
            return Err(BrgError::InvalidParameter("baseline_window must be positive".into()));
        }
        Ok(())
    }
}

/// A trained, habituated body plus the statistics of its habituation.
#[derive(Debug, Clone)]
pub struct Body {
    pub params: ReservoirParams,
    pub readout: ReadoutWeights,
    /// State at the end of habituation; simulations start here by default.
    pub state: ReservoirState,
    pub baseline_state: DVector<f64>,
    pub baseline_action: f64,
    pub rho_trace: Vec<f64>,
    pub projections: usize,
}

impl Body {
    pub fn from_outcome(readout: ReadoutWeights, out: HabituationOutcome) -> Self {
        Self {
            params: out.params,
            readout,
            state: out.final_state,
            baseline_state: out.baseline_state,
            baseline_action: out.baseline_action,
            rho_trace: out.rho_trace,
            projections: out.projections,
        }
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn snapshot(&self) -> BodySnapshot {
        BodySnapshot {
            format: BodySnapshot::FORMAT.into(),
            version: BodySnapshot::VERSION,
            params: self.params.clone(),
            readout: self.readout.clone(),
            state: self.state.clone(),
            baseline_state: self.baseline_state.clone(),
            baseline_action: self.baseline_action,
        }
    }
}

/// Versioned serialisable record of a body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySnapshot {
    pub format: String,
    pub version: u32,
    pub params: ReservoirParams,
    pub readout: ReadoutWeights,
    pub state: ReservoirState,
    pub baseline_state: DVector<f64>,
    pub baseline_action: f64,
}

impl BodySnapshot {
    pub const FORMAT: &'static str = "brg-body";
    pub const VERSION: u32 = 1;

    pub fn into_body(self) -> Result<Body> {
        if self.format != Self::FORMAT || self.version != Self::VERSION {
            return Err(BrgError::InvalidParameter(format!(
                "unsupported body snapshot {} v{}",
                self.format, self.version
            )));
        }
        let d = self.params.dim();
        for len in [self.readout.w_out.len(), self.state.len(), self.baseline_state.len()] {
            if len != d {
                return Err(BrgError::DimensionMismatch { expected: d, actual: len });
            }
        }
        let params = ReservoirParams::from_parts(
            self.params.w().clone(),
            self.params.w_in().clone(),
            self.params.bias().clone(),
            self.params.noise_std(),
        )?;
        Ok(Body {
            params,
            readout: self.readout,
            state: self.state,
            baseline_state: self.baseline_state,
            baseline_action: self.baseline_action,
            rho_trace: Vec::new(),
            projections: 0,
        })
    }
}

/// Builds the reservoir and trains its readout. No habituation yet.
pub fn nascent_body(spec: &BodySpec, seed: u64) -> Result<(ReservoirParams, ReadoutWeights)> {
    spec.validate()?;
    let params = spec.reservoir.build(&mut stream(seed, Stream::Build))?;
    let readout = train_readout(&params, &spec.training, &mut stream(seed, Stream::Training))?;
    Ok((params, readout))
}

/// Incremental habituation of a freshly trained body, for measurements at
/// intermediate depths.
pub fn habituator(spec: &BodySpec, seed: u64) -> Result<(Habituator, ReadoutWeights)> {
    let (params, readout) = nascent_body(spec, seed)?;
    let h = Habituator::new(
        &params,
        &readout,
        &spec.habituation,
        spec.baseline_window,
        stream(seed, Stream::Habituation),
    )?;
    Ok((h, readout))
}

/// Full pipeline: construction, readout training and `spec.habituation.epochs`
/// rounds of habituation.
pub fn develop_body(spec: &BodySpec, seed: u64) -> Result<Body> {
    let (mut h, readout) = habituator(spec, seed)?;
    h.advance(spec.habituation.epochs)?;
    Ok(Body::from_outcome(readout, h.snapshot()))
}
