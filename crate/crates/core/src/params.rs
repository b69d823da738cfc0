//! `name:key=value,key=value` spec strings shared by kernels, perturbation
//! laws and estimator selections.

use crate::error::{Error, Result};

pub(crate) struct SpecString<'a> {
    pub name: &'a str,
    pairs: Vec<(&'a str, &'a str)>,
    source: &'a str,
}

impl<'a> SpecString<'a> {
    pub fn parse(s: &'a str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n.trim(), r.trim()),
            None => (s, ""),
        };
        let mut pairs = Vec::new();
        if !rest.is_empty() {
            for item in rest.split(',') {
                let (k, v) = item
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("expected key=value in '{s}', got '{item}'")))?;
                pairs.push((k.trim(), v.trim()));
            }
        }
        Ok(Self { name, pairs, source: s })
    }

    pub fn raw(&self, key: &str) -> Option<&'a str> {
        self.pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    pub fn num(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => parse_number(v)
                .map(Some)
                .ok_or_else(|| Error::Parse(format!("bad number '{v}' for '{key}' in '{}'", self.source))),
        }
    }

    pub fn req(&self, key: &str) -> Result<f64> {
        self.num(key)?
            .ok_or_else(|| Error::Parse(format!("missing '{key}' in '{}'", self.source)))
    }

    pub fn or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.num(key)?.unwrap_or(default))
    }

    /// Fails on keys outside `allowed`.
    pub fn only(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.pairs {
            if !allowed.contains(k) {
                return Err(Error::Parse(format!("unknown key '{k}' in '{}'", self.source)));
            }
        }
        Ok(())
    }
}

/// Accepts plain floats plus `inf`/`infinity`.
pub(crate) fn parse_number(v: &str) -> Option<f64> {
    match v.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        other => other.parse::<f64>().ok().filter(|x| !x.is_nan()),
    }
}


/// Serializes `f64::INFINITY` as the string `"inf"` so that JSON round-trips.
pub(crate) mod number_or_inf {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Text(t) => super::parse_number(&t).ok_or_else(|| de::Error::custom(format!("bad number '{t}'"))),
        }
    }
}
