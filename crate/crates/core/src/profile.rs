//! Radial scalar profiles shared by fields, symbols and potentials.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Natural cubic spline through sampled points.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 3 || ys.len() != n {
            return Err(Error::InvalidInput("spline needs at least 3 matching samples".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("spline abscissae must be strictly increasing".into()));
        }
        // Tridiagonal solve for second derivatives, natural end conditions.
        let mut a = vec![0.0; n];
        let mut b = vec![1.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            a[i] = h0;
            b[i] = 2.0 * (h0 + h1);
            c[i] = h1;
            d[i] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
        }
        for i in 1..n {
            let w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            d[i] -= w * d[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = d[n - 1] / b[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (d[i] - c[i] * m[i + 1]) / b[i];
        }
        Ok(Self { xs, ys, m })
    }

    fn locate(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.binary_search_by(|p| p.total_cmp(&x)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    /// Value and first two derivatives; constant extrapolation past the ends.
    pub fn eval3(&self, x: f64) -> (f64, f64, f64) {
        let n = self.xs.len();
        if x >= self.xs[n - 1] {
            return (self.ys[n - 1], 0.0, 0.0);
        }
        let x = x.max(self.xs[0]);
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (self.xs[i + 1] - x) / h;
        let s = (x - self.xs[i]) / h;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let v = t * y0 + s * y1 + ((t * t * t - t) * m0 + (s * s * s - s) * m1) * h * h / 6.0;
        let d1 = (y1 - y0) / h + ((1.0 - 3.0 * t * t) * m0 + (3.0 * s * s - 1.0) * m1) * h / 6.0;
        let d2 = t * m0 + s * m1;
        (v, d1, d2)
    }

    pub fn x_max(&self) -> f64 {
        *self.xs.last().expect("nonempty spline")
    }
}

/// A named radial profile r -> f(r).
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Zero,
    Constant(f64),
    /// amp * exp(-r^2 / width^2)
    Gaussian {
        amp: f64,
        width: f64,
    },
    /// amp on r <= radius, 0 outside.
    Disk {
        amp: f64,
        radius: f64,
    },
    /// amp * (1 + r^2)^(-m/2)
    Bracket {
        amp: f64,
        m: f64,
    },
    /// Two-column table, natural cubic interpolation.
    Table {
        source: String,
        spline: Arc<CubicSpline>,
    },
}

impl Profile {
    pub fn gaussian(amp: f64, width: f64) -> Self {
        Profile::Gaussian { amp, width }
    }

    pub fn disk(amp: f64, radius: f64) -> Self {
        Profile::Disk { amp, radius }
    }

    pub fn bracket(amp: f64, m: f64) -> Self {
        Profile::Bracket { amp, m }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.eval3(r).0
    }

    /// Value, first and second radial derivatives.
    pub fn eval3(&self, r: f64) -> (f64, f64, f64) {
        match self {
            Profile::Zero => (0.0, 0.0, 0.0),
            Profile::Constant(c) => (*c, 0.0, 0.0),
            Profile::Gaussian { amp, width } => {
                let s2 = width * width;
                let v = amp * (-r * r / s2).exp();
                let d1 = -2.0 * r / s2 * v;
                let d2 = (4.0 * r * r / (s2 * s2) - 2.0 / s2) * v;
                (v, d1, d2)
            }
            Profile::Disk { amp, radius } => (if r <= *radius { *amp } else { 0.0 }, 0.0, 0.0),
            Profile::Bracket { amp, m } => {
                let q = 1.0 + r * r;
                let v = amp * q.powf(-m / 2.0);
                let d1 = -m * r * v / q;
                let d2 = -m * v / q + m * (m + 2.0) * r * r * v / (q * q);
                (v, d1, d2)
            }
            Profile::Table { spline, .. } => spline.eval3(r),
        }
    }

    /// Radii where the profile is not smooth (panel boundaries for quadrature).
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Profile::Disk { radius, .. } => vec![*radius],
            _ => Vec::new(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Profile::Zero => true,
            Profile::Constant(c) => *c == 0.0,
            Profile::Gaussian { amp, .. } | Profile::Disk { amp, .. } | Profile::Bracket { amp, .. } => *amp == 0.0,
            Profile::Table { .. } => false,
        }
    }

    /// Largest absolute value, exact for the closed forms.
    pub fn sup_abs(&self) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Constant(c) => c.abs(),
            Profile::Gaussian { amp, .. } | Profile::Disk { amp, .. } | Profile::Bracket { amp, .. } => amp.abs(),
            Profile::Table { spline, .. } => spline.ys.iter().fold(0.0, |m, y| m.max(y.abs())),
        }
    }

    /// Read a two-column CSV table `r, value` (header optional).
    pub fn from_table_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read profile table {}: {e}", path.display())))?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let (Some(a), Some(b)) = (parts.next(), parts.next()) else {
                return Err(Error::InvalidInput(format!("{}:{}: expected two columns", path.display(), lineno + 1)));
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    xs.push(x);
                    ys.push(y);
                }
                _ if lineno == 0 => continue,
                _ => {
                    return Err(Error::InvalidInput(format!("{}:{}: not a number", path.display(), lineno + 1)));
                }
            }
        }
        let spline = CubicSpline::new(xs, ys)?;
        Ok(Profile::Table { source: path.display().to_string(), spline: Arc::new(spline) })
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Zero => write!(f, "zero"),
            Profile::Constant(c) => write!(f, "constant({c:?})"),
            Profile::Gaussian { amp, width } => write!(f, "gaussian({amp:?}, {width:?})"),
            Profile::Disk { amp, radius } => write!(f, "disk({amp:?}, {radius:?})"),
            Profile::Bracket { amp, m } => write!(f, "bracket({amp:?}, {m:?})"),
            Profile::Table { source, .. } => write!(f, "table({source})"),
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "zero" {
            return Ok(Profile::Zero);
        }
        let bad = || Error::InvalidInput(format!("unrecognized profile '{s}'"));
        let open = s.find('(').ok_or_else(bad)?;
        if !s.ends_with(')') {
            return Err(bad());
        }
        let name = s[..open].trim();
        let inner = &s[open + 1..s.len() - 1];
        if name == "table" {
            return Profile::from_table_file(inner.trim());
        }
        let args: Vec<f64> = inner.split(',').map(|a| a.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?;
        let need = |n: usize| if args.len() == n { Ok(()) } else { Err(bad()) };
        match name {
            "constant" => {
                need(1)?;
                Ok(Profile::Constant(args[0]))
            }
            "gaussian" => {
                need(2)?;
                if args[1] <= 0.0 {
                    return Err(Error::InvalidInput("gaussian width must be positive".into()));
                }
                Ok(Profile::gaussian(args[0], args[1]))
            }
            "disk" => {
                need(2)?;
                if args[1] <= 0.0 {
                    return Err(Error::InvalidInput("disk radius must be positive".into()));
                }
                Ok(Profile::disk(args[0], args[1]))
            }
            "bracket" => {
                need(2)?;
                Ok(Profile::bracket(args[0], args[1]))
            }
            _ => Err(bad()),
        }
    }
}

impl Serialize for Profile {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Profile {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
