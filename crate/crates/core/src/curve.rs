//! Sampled curves and their CSV form.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub value: f64,
    /// One-standard-deviation uncertainty, when the curve is measured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
}

impl Curve {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        Self {
            points: pairs
                .into_iter()
                .map(|(x, value)| CurvePoint { x, value, sigma: None })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    /// Point with the smallest value.
    pub fn min_point(&self) -> Option<CurvePoint> {
        self.points
            .iter()
            .copied()
            .min_by(|a, b| a.value.total_cmp(&b.value))
    }

    /// Writes `x,value[,sigma]` rows preceded by `# key: value` comment lines.
    pub fn write_csv<W: Write>(&self, mut out: W, x_name: &str, value_name: &str, meta: &[(&str, String)]) -> io::Result<()> {
        out.write_all(self.to_csv(x_name, value_name, meta).as_bytes())
    }

    pub fn to_csv(&self, x_name: &str, value_name: &str, meta: &[(&str, String)]) -> String {
        let mut s = String::new();
        for (k, v) in meta {
            let _ = writeln!(s, "# {k}: {v}");
        }
        let with_sigma = self.points.iter().any(|p| p.sigma.is_some());
        if with_sigma {
            let _ = writeln!(s, "{x_name},{value_name},sigma");
        } else {
            let _ = writeln!(s, "{x_name},{value_name}");
        }
        for p in &self.points {
            if with_sigma {
                let _ = writeln!(s, "{:e},{:e},{:e}", p.x, p.value, p.sigma.unwrap_or(f64::NAN));
            } else {
                let _ = writeln!(s, "{:e},{:e}", p.x, p.value);
            }
        }
        s
    }
}
