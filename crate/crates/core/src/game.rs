//! Continuous prisoner's dilemma: payoff, opponent programs and the
//! cognitive strategies.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{BrgError, Result};
use crate::rng::Rng;

/// Action assumed for the opponent before the first round.
pub const INITIAL_OPPONENT_ACTION: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffMatrix {
    pub r: f64,
    pub s: f64,
    pub t: f64,
    pub p: f64,
}

impl Default for PayoffMatrix {
    fn default() -> Self {
        Self { r: 3.0, s: 0.0, t: 5.0, p: 1.0 }
    }
}

impl PayoffMatrix {
    pub fn new(r: f64, s: f64, t: f64, p: f64) -> Result<Self> {
        let m = Self { r, s, t, p };
        m.validate()?;
        Ok(m)
    }

    /// Checks `T > R > P > S` and `2R > T + S`.
    pub fn validate(&self) -> Result<()> {
        let Self { r, s, t, p } = *self;
        if !(t > r && r > p && p > s) {
            return Err(BrgError::InvalidParameter(format!(
                "payoff ordering T > R > P > S violated: T={t} R={r} P={p} S={s}"
            )));
        }
        if !(2.0 * r > t + s) {
            return Err(BrgError::InvalidParameter(format!(
                "payoff condition 2R > T + S violated: 2R={} T+S={}",
                2.0 * r,
                t + s
            )));
        }
        Ok(())
    }

    /// Bilinear payoff to the player choosing `a_i` against `a_j`.
    pub fn payoff(&self, a_i: f64, a_j: f64) -> f64 {
        self.r * a_i * a_j
            + self.s * a_i * (1.0 - a_j)
            + self.t * (1.0 - a_i) * a_j
            + self.p * (1.0 - a_i) * (1.0 - a_j)
    }
}

pub fn payoff(a_i: f64, a_j: f64, m: &PayoffMatrix) -> f64 {
    m.payoff(a_i, a_j)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseKind {
    Cooperate,
    Defect,
    /// Cooperates with probability `1 - epsilon`, defects otherwise.
    Noisy(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub kind: PhaseKind,
    pub length: usize,
}

/// Piecewise opponent program. Phases occupy half-open round intervals
/// starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct OpponentSchedule {
    phases: Vec<Phase>,
}

impl OpponentSchedule {
    pub fn new(phases: Vec<Phase>) -> Result<Self> {
        if phases.is_empty() {
            return Err(BrgError::ScheduleParse("schedule has no phases".into()));
        }
        for ph in &phases {
            if ph.length == 0 {
                return Err(BrgError::ScheduleParse("phase length must be positive".into()));
            }
            if let PhaseKind::Noisy(eps) = ph.kind {
                if !(eps > 0.0 && eps < 1.0) {
                    return Err(BrgError::ScheduleParse(format!(
                        "noisy epsilon must lie in (0, 1), got {eps}"
                    )));
                }
            }
        }
        Ok(Self { phases })
    }

    pub fn cooperate(len: usize) -> Result<Self> {
        Self::new(vec![Phase { kind: PhaseKind::Cooperate, length: len }])
    }

    pub fn noisy(epsilon: f64, len: usize) -> Result<Self> {
        Self::new(vec![Phase { kind: PhaseKind::Noisy(epsilon), length: len }])
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn len(&self) -> usize {
        self.phases.iter().map(|p| p.length).sum()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// First round of phase `index`.
    pub fn phase_start(&self, index: usize) -> Option<usize> {
        (index < self.phases.len()).then(|| self.phases[..index].iter().map(|p| p.length).sum())
    }

    pub fn phase_at(&self, t: usize) -> Result<Phase> {
        let mut start = 0;
        for ph in &self.phases {
            if t < start + ph.length {
                return Ok(*ph);
            }
            start += ph.length;
        }
        Err(BrgError::ScheduleOutOfRange { t, len: start })
    }

    /// Opponent action at round `t`. Exactly one uniform draw is consumed
    /// per call whatever the phase kind.
    pub fn action(&self, t: usize, rng: &mut Rng) -> Result<f64> {
        let phase = self.phase_at(t)?;
        let u: f64 = rng.random();
        Ok(match phase.kind {
            PhaseKind::Cooperate => 1.0,
            PhaseKind::Defect => 0.0,
            PhaseKind::Noisy(eps) => {
                if u < eps {
                    0.0
                } else {
                    1.0
                }
            }
        })
    }
}

pub fn opponent_action(schedule: &OpponentSchedule, t: usize, rng: &mut Rng) -> Result<f64> {
    schedule.action(t, rng)
}

impl fmt::Display for OpponentSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, ph) in self.phases.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match ph.kind {
                PhaseKind::Cooperate => write!(f, "coop:{}", ph.length)?,
                PhaseKind::Defect => write!(f, "defect:{}", ph.length)?,
                PhaseKind::Noisy(eps) => write!(f, "noisy({eps}):{}", ph.length)?,
            }
        }
        Ok(())
    }
}

impl FromStr for OpponentSchedule {
    type Err = BrgError;

    /// Parses `coop:N,defect:N,noisy(eps):N` programs. Whitespace around
    /// tokens is ignored.
    fn from_str(s: &str) -> Result<Self> {
        let mut phases = Vec::new();
        for raw in s.split(',') {
            let tok = raw.trim();
            let (kind, len) = tok
                .rsplit_once(':')
                .ok_or_else(|| BrgError::ScheduleParse(format!("missing ':' in phase `{tok}`")))?;
            let length: usize = len.trim().parse().map_err(|_| {
                BrgError::ScheduleParse(format!("bad phase length `{}` in `{tok}`", len.trim()))
            })?;
            let kind = kind.trim();
            let kind = match kind {
                "coop" | "cooperate" => PhaseKind::Cooperate,
                "defect" => PhaseKind::Defect,
                _ => {
                    let inner = kind
                        .strip_prefix("noisy(")
                        .and_then(|k| k.strip_suffix(')'))
                        .ok_or_else(|| BrgError::ScheduleParse(format!("unknown phase kind `{kind}`")))?;
                    let eps: f64 = inner.trim().parse().map_err(|_| {
                        BrgError::ScheduleParse(format!("bad noisy epsilon `{inner}`"))
                    })?;
                    PhaseKind::Noisy(eps)
                }
            };
            phases.push(Phase { kind, length });
        }
        Self::new(phases)
    }
}

impl Serialize for OpponentSchedule {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for OpponentSchedule {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Configuration of a cognitive strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CognitiveKind {
    Tft,
    EmaTft { gamma: f64 },
    AllC,
}

impl CognitiveKind {
    pub fn validate(&self) -> Result<()> {
        if let CognitiveKind::EmaTft { gamma } = *self {
            if !(0.0..1.0).contains(&gamma) {
                return Err(BrgError::InvalidParameter(format!(
                    "EMA-TfT gamma must lie in [0, 1), got {gamma}"
                )));
            }
        }
        Ok(())
    }
}

/// Stateful cognitive channel. Only the EMA variant carries state, which
/// starts at the cooperative prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CognitiveStrategy {
    kind: CognitiveKind,
    ema: f64,
}

impl CognitiveStrategy {
    pub fn new(kind: CognitiveKind) -> Result<Self> {
        kind.validate()?;
        Ok(Self { kind, ema: INITIAL_OPPONENT_ACTION })
    }

    pub fn with_state(kind: CognitiveKind, ema: f64) -> Result<Self> {
        kind.validate()?;
        Ok(Self { kind, ema })
    }

    pub fn kind(&self) -> CognitiveKind {
        self.kind
    }

    /// Cognitive action given the opponent's previous action.
    pub fn action(&mut self, opp_prev: f64) -> f64 {
        match self.kind {
            CognitiveKind::Tft => opp_prev,
            CognitiveKind::EmaTft { gamma } => {
                self.ema = gamma * self.ema + (1.0 - gamma) * opp_prev;
                self.ema
            }
            CognitiveKind::AllC => 1.0,
        }
    }
}

pub fn cognitive_action(strategy: &mut CognitiveStrategy, opp_prev: f64) -> f64 {
    strategy.action(opp_prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use approx::assert_relative_eq;

    #[test]
    fn corners() {
        let m = PayoffMatrix::default();
        assert_eq!(m.payoff(1.0, 1.0), 3.0);
        assert_eq!(m.payoff(0.0, 0.0), 1.0);
        assert_eq!(m.payoff(0.0, 1.0), 5.0);
        assert_eq!(m.payoff(1.0, 0.0), 0.0);
    }

    #[test]
    fn interior_values() {
        let m = PayoffMatrix::default();
        assert_relative_eq!(m.payoff(0.5, 0.5), 2.25, epsilon = 1e-15);
        assert_relative_eq!(m.payoff(0.98, 1.0), 3.04, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_dilemma() {
        assert!(PayoffMatrix::new(3.0, 0.0, 7.0, 1.0).is_err());
        assert!(PayoffMatrix::new(3.0, 1.0, 5.0, 2.0).is_err());
        assert!(PayoffMatrix::new(4.0, 0.0, 5.0, 1.0).is_ok());
        assert!(PayoffMatrix::new(1.0, 0.0, 5.0, 3.0).is_err());
    }

    #[test]
    fn phase_boundaries_are_half_open() {
        let s: OpponentSchedule = "coop:500,defect:50".parse().unwrap();
        let mut rng = rng_from_seed(0);
        assert_eq!(s.action(499, &mut rng).unwrap(), 1.0);
        assert_eq!(s.action(500, &mut rng).unwrap(), 0.0);
        assert_eq!(s.action(549, &mut rng).unwrap(), 0.0);
        assert!(matches!(s.action(550, &mut rng), Err(BrgError::ScheduleOutOfRange { t: 550, len: 550 })));
        assert_eq!(s.phase_start(1), Some(500));
        assert_eq!(s.phase_start(2), None);
    }

    #[test]
    fn parse_roundtrip() {
        let text = "coop:500,defect:50,coop:500,noisy(0.3):200,coop:500";
        let s: OpponentSchedule = text.parse().unwrap();
        assert_eq!(s.len(), 1750);
        assert_eq!(s.phases()[3].kind, PhaseKind::Noisy(0.3));
        assert_eq!(s.to_string(), text);
        let spaced: OpponentSchedule = " coop : 5 , noisy( 0.1 ):3".parse().unwrap();
        assert_eq!(spaced.len(), 8);
    }

    #[test]
    fn parse_errors() {
        for bad in ["", "coop", "coop:0", "coop:-1", "wobble:5", "noisy(1.5):4", "noisy(x):4", "noisy(0.1:4"] {
            assert!(bad.parse::<OpponentSchedule>().is_err(), "{bad}");
        }
    }

    #[test]
    fn every_phase_consumes_one_draw() {
        let a: OpponentSchedule = "coop:10,noisy(0.5):10".parse().unwrap();
        let b: OpponentSchedule = "defect:10,noisy(0.5):10".parse().unwrap();
        let (mut ra, mut rb) = (rng_from_seed(5), rng_from_seed(5));
        let xa: Vec<f64> = (0..20).map(|t| a.action(t, &mut ra).unwrap()).collect();
        let xb: Vec<f64> = (0..20).map(|t| b.action(t, &mut rb).unwrap()).collect();
        assert_eq!(xa[10..], xb[10..]);
    }

    #[test]
    fn noisy_mean_and_variance() {
        let s = OpponentSchedule::noisy(0.1, 2000).unwrap();
        let mut rng = rng_from_seed(11);
        let xs: Vec<f64> = (0..2000).map(|t| s.action(t, &mut rng).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / 2000.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 1999.0;
        assert!((0.88..=0.92).contains(&mean), "mean {mean}");
        assert!((var - 0.09).abs() < 0.015, "var {var}");
    }

    #[test]
    fn strategies() {
        let mut tft = CognitiveStrategy::new(CognitiveKind::Tft).unwrap();
        assert_eq!(tft.action(0.3), 0.3);
        let mut ema = CognitiveStrategy::with_state(CognitiveKind::EmaTft { gamma: 0.5 }, 1.0).unwrap();
        assert_eq!(ema.action(0.0), 0.5);
        let mut allc = CognitiveStrategy::new(CognitiveKind::AllC).unwrap();
        assert_eq!(allc.action(0.0), 1.0);
        assert!(CognitiveStrategy::new(CognitiveKind::EmaTft { gamma: 1.0 }).is_err());
    }

    #[test]
    fn schedule_serde_as_string() {
        let s: OpponentSchedule = "coop:3,noisy(0.25):2".parse().unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, "\"coop:3,noisy(0.25):2\"");
        let back: OpponentSchedule = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
