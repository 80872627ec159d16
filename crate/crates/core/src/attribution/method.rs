//! Method identifiers, variants and the `id[variant][.rev]` label grammar.
//!
//! Labels: `sg`, `sg+`, `sg-`, `sg_a`, `sg_g`, `sg_ga`, and any of these with
//! a `.rev` suffix for the reversed variant.

use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use super::{modifier_kind_for, Interpretation, ReversalParams};
use crate::error::{Error, Result};
use crate::modify::{
    Baseline, ModifierKind, ModifierSpec, DEFAULT_MAX_BLUR, DEFAULT_MODIFICATIONS, DEFAULT_SIGMA_FRACTION,
};
use crate::saliency::ChannelMode;

pub const DEFAULT_GUIDE_PERCENTILE: f64 = 85.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodId {
    Vg,
    Sg,
    VarGrad,
    Ag,
    Gag,
    Ig,
    BlurIg,
    /// Reserved; needs rectified backprop.
    GuidedBackprop,
    /// Reserved.
    GuidedIg,
    /// Reserved; needs feature-map access.
    GradCam,
}

impl MethodId {
    pub const IMPLEMENTED: [MethodId; 7] = [
        MethodId::Vg,
        MethodId::Sg,
        MethodId::VarGrad,
        MethodId::Ag,
        MethodId::Gag,
        MethodId::Ig,
        MethodId::BlurIg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::Vg => "vg",
            MethodId::Sg => "sg",
            MethodId::VarGrad => "vargrad",
            MethodId::Ag => "ag",
            MethodId::Gag => "gag",
            MethodId::Ig => "ig",
            MethodId::BlurIg => "blurig",
            MethodId::GuidedBackprop => "gb",
            MethodId::GuidedIg => "guidedig",
            MethodId::GradCam => "gradcam",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "vg" => MethodId::Vg,
            "sg" => MethodId::Sg,
            "vargrad" => MethodId::VarGrad,
            "ag" => MethodId::Ag,
            "gag" => MethodId::Gag,
            "ig" => MethodId::Ig,
            "blurig" => MethodId::BlurIg,
            "gb" => MethodId::GuidedBackprop,
            "guidedig" => MethodId::GuidedIg,
            "gradcam" => MethodId::GradCam,
            other => return Err(Error::InvalidParameter(format!("unknown method id `{other}`"))),
        })
    }

    pub fn is_implemented(self) -> bool {
        Self::IMPLEMENTED.contains(&self)
    }

    /// Interpretation used when no variant is given.
    pub fn default_interpretation(self) -> Interpretation {
        match self {
            MethodId::Ag | MethodId::Gag => Interpretation::Absolute,
            _ => Interpretation::Signed,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum Variant {
    #[default]
    Base,
    Positive,
    Negative,
    Absolute,
    Guide,
    GuideAbsolute,
}

impl Variant {
    pub fn suffix(self) -> &'static str {
        match self {
            Variant::Base => "",
            Variant::Positive => "+",
            Variant::Negative => "-",
            Variant::Absolute => "_a",
            Variant::Guide => "_g",
            Variant::GuideAbsolute => "_ga",
        }
    }

    fn split(label: &str) -> (&str, Variant) {
        for (suffix, v) in [
            ("_ga", Variant::GuideAbsolute),
            ("_g", Variant::Guide),
            ("_a", Variant::Absolute),
            ("+", Variant::Positive),
            ("-", Variant::Negative),
        ] {
            if let Some(base) = label.strip_suffix(suffix) {
                return (base, v);
            }
        }
        (label, Variant::Base)
    }
}

/// Everything needed to reproduce one saliency map from (model, image, class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMethodConfig", into = "RawMethodConfig")]
pub struct MethodConfig {
    pub method: MethodId,
    pub variant: Variant,
    /// Guide percentile; used by GAG and the guided variants.
    pub p: f64,
    pub channel_mode: ChannelMode,
    pub modifier: ModifierSpec,
    pub reversal: Option<ReversalParams>,
    /// Report name; defaults to the label.
    pub name: Option<String>,
}

impl MethodConfig {
    /// Defaults for a method: n = 20, p = 85, mean channel reduction, and the
    /// modifier family the method differentiates through.
    pub fn new(method: MethodId) -> Self {
        let modifier = match modifier_kind_for(method) {
            Some(ModifierKind::LinearPath) => ModifierSpec::linear_path(DEFAULT_MODIFICATIONS, Baseline::Black),
            Some(ModifierKind::BlurPath) => ModifierSpec::blur_path(DEFAULT_MODIFICATIONS, DEFAULT_MAX_BLUR),
            _ => ModifierSpec::gaussian(DEFAULT_MODIFICATIONS, DEFAULT_SIGMA_FRACTION, 0),
        };
        Self {
            method,
            variant: Variant::Base,
            p: DEFAULT_GUIDE_PERCENTILE,
            channel_mode: ChannelMode::Mean,
            modifier,
            reversal: None,
            name: None,
        }
    }

    /// Parses a label with default parameters; `.rev` uses l = 20, m = 30.
    pub fn from_label(label: &str) -> Result<Self> {
        let (body, reversed) = match label.strip_suffix(".rev") {
            Some(body) => (body, true),
            None => (label, false),
        };
        let (base, variant) = Variant::split(body);
        let mut config = Self::new(MethodId::parse(base)?);
        config.variant = variant;
        if reversed {
            config.reversal = Some(ReversalParams::default());
        }
        config.validate()?;
        Ok(config)
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.modifier.n = n;
        self
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.modifier.seed = seed;
        self
    }

    pub fn with_reversal(mut self, params: ReversalParams) -> Self {
        self.reversal = Some(params);
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    /// Name used in reports: the explicit name or the label.
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.label())
    }

    pub fn n(&self) -> usize {
        self.modifier.n
    }

    pub fn label(&self) -> String {
        let mut s = format!("{}{}", self.method.as_str(), self.variant.suffix());
        if self.reversal.is_some() {
            s.push_str(".rev");
        }
        s
    }

    /// Label of the same configuration without the reversal.
    pub fn base_label(&self) -> String {
        format!("{}{}", self.method.as_str(), self.variant.suffix())
    }

    pub fn interpretation(&self) -> Interpretation {
        match self.variant {
            Variant::Base | Variant::Guide => self.method.default_interpretation(),
            Variant::Positive => Interpretation::Positive,
            Variant::Negative => Interpretation::Negative,
            Variant::Absolute | Variant::GuideAbsolute => Interpretation::Absolute,
        }
    }

    /// Guide percentile when the configuration multiplies by a variance guide.
    pub fn guide_percentile(&self) -> Option<f64> {
        let guided = self.method == MethodId::Gag || matches!(self.variant, Variant::Guide | Variant::GuideAbsolute);
        guided.then_some(self.p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.method.is_implemented() {
            return Err(Error::Unsupported(format!(
                "method {} is reserved and not implemented",
                self.method.as_str()
            )));
        }
        if self.method == MethodId::Gag && self.variant != Variant::Base {
            return Err(Error::InvalidParameter(
                "gag is already absolute and guided; it takes no variant".into(),
            ));
        }
        if self.method == MethodId::Ag && matches!(self.variant, Variant::Positive | Variant::Negative | Variant::Absolute) {
            return Err(Error::InvalidParameter(format!(
                "ag is already absolute; variant `{}` does not apply",
                self.variant.suffix()
            )));
        }
        if !(0.0..=100.0).contains(&self.p) {
            return Err(Error::InvalidParameter(format!("p must lie in [0, 100], got {}", self.p)));
        }
        if self.method != MethodId::Vg {
            if modifier_kind_for(self.method) != Some(self.modifier.kind) {
                return Err(Error::InvalidParameter(format!(
                    "method {} cannot use modifier {:?}",
                    self.method.as_str(),
                    self.modifier.kind
                )));
            }
            self.modifier.validate()?;
        }
        let gradients = if self.method == MethodId::Vg { 1 } else { self.modifier.n };
        let needs_variance =
            self.method == MethodId::VarGrad || self.guide_percentile().is_some_and(|p| p > 0.0);
        if needs_variance && gradients < 2 {
            return Err(Error::VarianceNeedsTwo(gradients));
        }
        if let Some(r) = self.reversal {
            r.validate()?;
        }
        Ok(())
    }
}

/// Flat on-disk form: `id` carries method, variant and reversal; the other
/// fields override the method defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMethodConfig {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channel_mode: Option<ChannelMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    baseline: Option<Baseline>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_blur: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reversal: Option<ReversalParams>,
}

impl TryFrom<RawMethodConfig> for MethodConfig {
    type Error = Error;

    fn try_from(raw: RawMethodConfig) -> Result<Self> {
        let mut c = MethodConfig::from_label(&raw.id)?;
        if let Some(n) = raw.n {
            c.modifier.n = n;
        }
        if let Some(p) = raw.p {
            c.p = p;
        }
        if let Some(mode) = raw.channel_mode {
            c.channel_mode = mode;
        }
        if let Some(s) = raw.sigma_fraction {
            c.modifier.sigma_fraction = s;
        }
        if let Some(b) = raw.baseline {
            c.modifier.baseline = b;
        }
        if let Some(b) = raw.max_blur {
            c.modifier.max_blur = b;
        }
        if let Some(seed) = raw.seed {
            c.modifier.seed = seed;
        }
        if raw.reversal.is_some() {
            c.reversal = raw.reversal;
        }
        c.name = raw.name;
        c.validate()?;
        Ok(c)
    }
}

impl From<MethodConfig> for RawMethodConfig {
    fn from(c: MethodConfig) -> Self {
        Self {
            id: c.label(),
            name: c.name,
            n: Some(c.modifier.n),
            p: Some(c.p),
            channel_mode: Some(c.channel_mode),
            sigma_fraction: Some(c.modifier.sigma_fraction),
            baseline: Some(c.modifier.baseline),
            max_blur: Some(c.modifier.max_blur),
            seed: Some(c.modifier.seed),
            reversal: c.reversal,
        }
    }
}

impl core::fmt::Display for MethodConfig {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.label())
    }
}

impl core::str::FromStr for MethodConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_label(s)
    }
}

impl From<MethodId> for MethodConfig {
    fn from(id: MethodId) -> Self {
        Self::new(id)
    }
}

impl core::fmt::Display for MethodId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}
