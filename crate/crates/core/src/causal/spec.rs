use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ml::{ForestParams, LassoParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Infeasible,
    Cmr,
    MomIpw,
    MomDr,
    Mcm,
    McmEa,
    Rlearn,
    Cf,
    CfLc,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Infeasible,
        Method::Cmr,
        Method::MomIpw,
        Method::MomDr,
        Method::Mcm,
        Method::McmEa,
        Method::Rlearn,
        Method::Cf,
        Method::CfLc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Infeasible => "infeasible",
            Method::Cmr => "cmr",
            Method::MomIpw => "mom_ipw",
            Method::MomDr => "mom_dr",
            Method::Mcm => "mcm",
            Method::McmEa => "mcm_ea",
            Method::Rlearn => "rlearn",
            Method::Cf => "cf",
            Method::CfLc => "cf_lc",
        }
    }

    /// Nuisance functions the method needs, always cross-fitted.
    pub fn nuisances(self) -> &'static [NuisanceKind] {
        use NuisanceKind::*;
        match self {
            Method::MomIpw | Method::Mcm => &[P],
            Method::MomDr => &[P, Mu1, Mu0],
            Method::McmEa | Method::Rlearn | Method::CfLc => &[P, Mu],
            Method::Infeasible | Method::Cmr | Method::Cf => &[],
        }
    }

    /// Whether the effect regression itself runs on sample halves.
    pub fn cross_fit(self) -> bool {
        matches!(self, Method::MomIpw | Method::MomDr | Method::Mcm | Method::McmEa | Method::Rlearn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Learner {
    Forest,
    Lasso,
}

impl Learner {
    pub fn as_str(self) -> &'static str {
        match self {
            Learner::Forest => "forest",
            Learner::Lasso => "lasso",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NuisanceKind {
    P,
    Mu,
    Mu1,
    Mu0,
}

impl NuisanceKind {
    pub const ALL: [NuisanceKind; 4] = [NuisanceKind::P, NuisanceKind::Mu, NuisanceKind::Mu1, NuisanceKind::Mu0];

    pub fn as_str(self) -> &'static str {
        match self {
            NuisanceKind::P => "p",
            NuisanceKind::Mu => "mu",
            NuisanceKind::Mu1 => "mu1",
            NuisanceKind::Mu0 => "mu0",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

/// One estimator: an approach paired with a base learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EstimatorSpec {
    method: Method,
    learner: Learner,
}

impl EstimatorSpec {
    pub fn new(method: Method, learner: Learner) -> Result<Self> {
        let ok = match method {
            Method::Mcm | Method::McmEa | Method::Rlearn => learner == Learner::Lasso,
            Method::Cf | Method::CfLc => learner == Learner::Forest,
            _ => true,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "{} is not available with the {} learner",
                method.as_str(),
                learner.as_str()
            )));
        }
        Ok(Self { method, learner })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn learner(&self) -> Learner {
        self.learner
    }

    pub fn id(&self) -> String {
        format!("{}_{}", self.method.as_str(), self.learner.as_str())
    }

    /// The eleven feasible estimators followed by the two infeasible benchmarks.
    pub fn all() -> Vec<EstimatorSpec> {
        let mut out = Vec::new();
        for method in Method::ALL {
            for learner in [Learner::Forest, Learner::Lasso] {
                if let Ok(spec) = EstimatorSpec::new(method, learner) {
                    out.push(spec);
                }
            }
        }
        out
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for EstimatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (method, learner) = s
            .rsplit_once('_')
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator `{s}`")))?;
        let method = Method::ALL
            .into_iter()
            .find(|m| m.as_str() == method)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method in estimator `{s}`")))?;
        let learner = match learner {
            "forest" => Learner::Forest,
            "lasso" => Learner::Lasso,
            _ => return Err(Error::InvalidArgument(format!("unknown learner in estimator `{s}`"))),
        };
        EstimatorSpec::new(method, learner)
    }
}

impl Serialize for EstimatorSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.id())
    }
}

impl<'de> Deserialize<'de> for EstimatorSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Hyper-parameters of both base learners, shared by all estimators.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub forest: ForestParams,
    pub lasso: LassoParams,
}
