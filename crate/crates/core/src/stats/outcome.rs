use serde::{Deserialize, Serialize};

/// Test procedures known to the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "CQ")]
    Cq,
    #[serde(rename = "BS")]
    Bs,
    Oracle,
    SingleThresh,
    MultiThresh,
    TransformedSingle,
    TransformedMulti,
    #[serde(rename = "CLX_I")]
    ClxIdentity,
    #[serde(rename = "CLX_Omega")]
    ClxOmega,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Cq => "CQ",
            Method::Bs => "BS",
            Method::Oracle => "Oracle",
            Method::SingleThresh => "SingleThresh",
            Method::MultiThresh => "MultiThresh",
            Method::TransformedSingle => "TransformedSingle",
            Method::TransformedMulti => "TransformedMulti",
            Method::ClxIdentity => "CLX_I",
            Method::ClxOmega => "CLX_Omega",
        }
    }
}

/// Where a p-value (and critical value) came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PValueSource {
    Normal,
    Gumbel,
    /// The max-norm law exp(−π^{−1/2} e^{−x/2}).
    ExtremeValue,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub method: Method,
    /// Raw statistic value.
    pub statistic: f64,
    /// The quantity compared against `critical_value`.
    pub standardized: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub pvalue: Option<f64>,
    pub pvalue_source: Option<PValueSource>,
}

impl TestOutcome {
    /// Builds an outcome with the decision `standardized ≥ critical_value`.
    pub fn decide(
        method: Method,
        statistic: f64,
        standardized: f64,
        critical_value: f64,
        alpha: f64,
        pvalue: Option<(f64, PValueSource)>,
    ) -> Self {
        TestOutcome {
            method,
            statistic,
            standardized,
            critical_value,
            alpha,
            reject: standardized >= critical_value,
            pvalue: pvalue.map(|(p, _)| p.clamp(0.0, 1.0)),
            pvalue_source: pvalue.map(|(_, s)| s),
        }
    }
}
