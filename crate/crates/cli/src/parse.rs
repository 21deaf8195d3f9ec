//! Value parsers for command-line flags.

use isoweier::GridShape;
use num_complex::Complex64;

/// `NxM`, e.g. `32x16`.
pub fn shape(s: &str) -> Result<GridShape, String> {
    let (n, m) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NxM, got `{s}`"))?;
    let dim = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("`{t}` is not a positive integer"))
    };
    GridShape::new(dim(n)?, dim(m)?).map_err(|e| e.to_string())
}

/// A real number, `A+Bi`, `A-Bi`, `Bi`, or polar `R@THETA` (radians).
pub fn complex(s: &str) -> Result<Complex64, String> {
    let t = s.trim();
    let bad = || format!("`{s}` is not a number (use 0.3, 0.2+0.1i, 0.5i or 0.3@0.628)");
    let num = |x: &str| x.parse::<f64>().map_err(|_| bad());
    if let Some((r, theta)) = t.split_once('@') {
        return Ok(Complex64::from_polar(num(r)?, num(theta)?));
    }
    let Some(body) = t.strip_suffix('i') else {
        return Ok(Complex64::new(num(t)?, 0.0));
    };
    // split before the last sign that is not part of an exponent
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (num(&body[..k])?, &body[k..]),
        None => (0.0, body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        x => num(x)?,
    };
    Ok(Complex64::new(re, im))
}

/// `const:P` or `const:P,Q`.
pub fn potential(s: &str) -> Result<(Complex64, Option<f64>), String> {
    let rest = s
        .strip_prefix("const:")
        .ok_or_else(|| format!("expected const:P[,Q], got `{s}`"))?;
    match rest.split_once(',') {
        Some((p, q)) => {
            let q = q
                .trim()
                .parse::<f64>()
                .map_err(|_| format!("`{q}` is not a real number"))?;
            Ok((complex(p)?, Some(q)))
        }
        None => Ok((complex(rest)?, None)),
    }
}

/// `X0,X1,Y0,Y1`.
pub fn domain(s: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("`{t}` is not a real number"))
        })
        .collect::<Result<_, _>>()?;
    <[f64; 4]>::try_from(v).map_err(|v| format!("expected 4 values X0,X1,Y0,Y1, got {}", v.len()))
}
