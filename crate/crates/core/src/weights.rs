use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::function::erf::erfc;

use crate::data::PairArrays;
use crate::error::{Error, Result};

/// One Gaussian weight density g, stored as mean and standard deviation.
/// Serialized with the variance (`sigma2`) to match the CLI grammar N(mu,sigma2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mu: f64,
    pub sigma: f64,
}

impl Gaussian {
    pub fn from_variance(mu: f64, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() || !mu.is_finite() {
            return Err(Error::InvalidParam {
                name: "sigma2".into(),
                reason: format!("need a finite positive variance, got {sigma2}"),
            });
        }
        Ok(Self { mu, sigma: sigma2.sqrt() })
    }

    /// CDF value Φ((x−mu)/sigma). erfc keeps absolute error below 1e−12
    /// over the whole line.
    #[inline]
    pub fn cdf(&self, x: f64) -> f64 {
        gaussian_cdf(self.mu, self.sigma, x)
    }
}

impl Serialize for Gaussian {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            mu: f64,
            sigma2: f64,
        }
        Repr { mu: self.mu, sigma2: self.sigma * self.sigma }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Gaussian {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            mu: f64,
            sigma2: f64,
        }
        let r = Repr::deserialize(d)?;
        Gaussian::from_variance(r.mu, r.sigma2).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightOrigin {
    Fixed,
    DataDriven,
}

/// The weight measure dG(r,s) = g1(r)g2(s) dr ds. The CDFs are evaluated
/// untruncated even though the statistic integrates over r,s > 0: the closed
/// forms plug distances straight into G1, G2, and this follows them literally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub g1: Gaussian,
    pub g2: Gaussian,
    pub origin: WeightOrigin,
}

impl WeightSpec {
    pub fn fixed(mu1: f64, sigma2_1: f64, mu2: f64, sigma2_2: f64) -> Result<Self> {
        Ok(Self {
            g1: Gaussian::from_variance(mu1, sigma2_1)?,
            g2: Gaussian::from_variance(mu2, sigma2_2)?,
            origin: WeightOrigin::Fixed,
        })
    }

    /// Short display form: "auto" for data-driven fits, else the grammar form.
    pub fn label(&self) -> String {
        if self.origin == WeightOrigin::DataDriven {
            return "auto".into();
        }
        let one = format_gaussian(&self.g1);
        if self.g1 == self.g2 {
            one
        } else {
            format!("{one}x{}", format_gaussian(&self.g2))
        }
    }
}

fn format_gaussian(g: &Gaussian) -> String {
    format!("N({},{})", g.mu, g.sigma * g.sigma)
}

/// Φ((x−mu)/sigma) through erfc; absolute error < 1e−12.
#[inline]
pub fn gaussian_cdf(mu: f64, sigma: f64, x: f64) -> f64 {
    let z = (mu - x) / sigma;
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Fits g1 to the X-side distances and g2 to the Y-side ones: mean and
/// population variance over the N ordered-pair values. Ordered pairs repeat
/// each unordered distance, so the population form is the natural convention.
pub fn fit_data_driven(pairs: &PairArrays) -> Result<WeightSpec> {
    let g1 = fit_side(&pairs.z, "X")?;
    let g2 = fit_side(&pairs.t, "Y")?;
    Ok(WeightSpec { g1, g2, origin: WeightOrigin::DataDriven })
}

fn fit_side(values: &[f64], side: &'static str) -> Result<Gaussian> {
    let n = values.len() as f64;
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut sum = 0.0;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    if min == max {
        return Err(Error::DegenerateDistances { side });
    }
    let mu = sum / n;
    let var = values.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / n;
    Ok(Gaussian { mu, sigma: var.sqrt() })
}

/// CLI weight grammar: `auto`, `N(mu,sigma2)`, or `N(mu1,s1)xN(mu2,s2)`,
/// plus the preset aliases matching the power-table columns (n_1_1, ...).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightChoice {
    Auto,
    Fixed { g1: Gaussian, g2: Gaussian },
}

impl WeightChoice {
    /// Materializes the choice against a concrete sample.
    pub fn resolve(&self, pairs: &PairArrays) -> Result<WeightSpec> {
        match *self {
            WeightChoice::Auto => fit_data_driven(pairs),
            WeightChoice::Fixed { g1, g2 } => {
                Ok(WeightSpec { g1, g2, origin: WeightOrigin::Fixed })
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            WeightChoice::Auto => "auto".into(),
            WeightChoice::Fixed { g1, g2 } => {
                let one = format_gaussian(g1);
                if g1 == g2 {
                    one
                } else {
                    format!("{one}x{}", format_gaussian(g2))
                }
            }
        }
    }
}

impl Serialize for WeightChoice {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for WeightChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

impl std::str::FromStr for WeightChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(WeightChoice::Auto);
        }
        if let Some(preset) = parse_preset(s) {
            return Ok(preset);
        }
        if let Some((a, b)) = split_product(s) {
            let g1 = parse_gaussian(a)?;
            let g2 = parse_gaussian(b)?;
            return Ok(WeightChoice::Fixed { g1, g2 });
        }
        let g = parse_gaussian(s)?;
        Ok(WeightChoice::Fixed { g1: g, g2: g })
    }
}

fn parse_preset(s: &str) -> Option<WeightChoice> {
    let (mu, s2) = match s {
        "n_1_1" => (1.0, 1.0),
        "n_0_1" => (0.0, 1.0),
        "n_1_4" => (1.0, 4.0),
        "n_0_4" => (0.0, 4.0),
        "n_2_4" => (2.0, 4.0),
        _ => return None,
    };
    let g = Gaussian::from_variance(mu, s2).expect("preset variance is positive");
    Some(WeightChoice::Fixed { g1: g, g2: g })
}

fn split_product(s: &str) -> Option<(&str, &str)> {
    // The separator is the 'x' between a closing paren and an opening 'N('.
    let bytes = s.as_bytes();
    for i in 1..bytes.len().saturating_sub(1) {
        if bytes[i] == b'x' && bytes[i - 1] == b')' {
            return Some((&s[..i], &s[i + 1..]));
        }
    }
    None
}

fn parse_gaussian(s: &str) -> Result<Gaussian> {
    let bad = |reason: &str| Error::InvalidParam {
        name: "weights".into(),
        reason: format!("{reason}: {s:?} (expected N(mu,sigma2))"),
    };
    let inner = s
        .strip_prefix("N(")
        .or_else(|| s.strip_prefix("n("))
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| bad("unrecognized weight"))?;
    let (mu_s, s2_s) = inner.split_once(',').ok_or_else(|| bad("missing comma"))?;
    let mu: f64 = mu_s.trim().parse().map_err(|_| bad("bad mean"))?;
    let s2: f64 = s2_s.trim().parse().map_err(|_| bad("bad variance"))?;
    Gaussian::from_variance(mu, s2)
}
