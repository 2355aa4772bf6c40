use crate::error::{Error, Result};

/// Quadrature used for cell averages and face fluxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    #[default]
    Midpoint,
    /// `k`-point Gauss–Legendre rule per axis, tensorised.
    Gauss(usize),
}

impl Quadrature {
    /// Nodes and weights on `[-1, 1]`; weights sum to 2.
    pub fn rule(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        match *self {
            Quadrature::Midpoint => Ok((vec![0.0], vec![2.0])),
            Quadrature::Gauss(k) => gauss_legendre(k),
        }
    }
}

impl std::str::FromStr for Quadrature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "midpoint" {
            return Ok(Quadrature::Midpoint);
        }
        if let Some(k) = s.strip_prefix("gauss") {
            let k = k.trim_start_matches(':');
            let k: usize = k
                .parse()
                .map_err(|_| Error::Parse(format!("bad Gauss order in '{s}'")))?;
            return Ok(Quadrature::Gauss(k));
        }
        Err(Error::Parse(format!("unknown quadrature '{s}'")))
    }
}

/// Gauss–Legendre nodes and weights by Newton iteration on `P_k`.
pub fn gauss_legendre(k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if k == 0 || k > 64 {
        return Err(Error::InvalidArgument(format!("Gauss order {k} not in 1..=64")));
    }
    let mut nodes = vec![0.0; k];
    let mut weights = vec![0.0; k];
    let kf = k as f64;
    for i in 0..k.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (kf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(k, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(k, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[k - 1 - i] = x;
        weights[i] = w;
        weights[k - 1 - i] = w;
    }
    if k % 2 == 1 {
        nodes[k / 2] = 0.0;
    }
    Ok((nodes, weights))
}

fn legendre(k: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=k {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_rules() {
        let (x, w) = gauss_legendre(2).unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert!((x[0] + r).abs() < 1e-15 && (x[1] - r).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);

        let (x, w) = gauss_legendre(3).unwrap();
        assert_eq!(x[1], 0.0);
        assert!((x[2] - (0.6f64).sqrt()).abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
        assert!((w[0] - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn polynomial_exactness() {
        for k in 1..=8 {
            let (x, w) = gauss_legendre(k).unwrap();
            for deg in 0..2 * k {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "k={k} deg={deg}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn parse() {
        assert_eq!("midpoint".parse::<Quadrature>().unwrap(), Quadrature::Midpoint);
        assert_eq!("gauss:3".parse::<Quadrature>().unwrap(), Quadrature::Gauss(3));
        assert!("simpson".parse::<Quadrature>().is_err());
        assert!(gauss_legendre(0).is_err());
    }
}
