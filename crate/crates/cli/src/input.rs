use std::ops::Range;
use std::path::Path;

use blbound::datum::{Datum, LocalizedRegularizedDatum};
use blbound::linalg::{LinearMap, SpdMatrix, Subspace};
use blbound::visual::PointCloud;
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use toml::Spanned;

use crate::error::CliError;

/// Relative asymmetry tolerated in symmetric matrix entries.
const SYMMETRY_TOL: f64 = 1e-12;

/// Tolerance of `P² = P` for square projector maps.
const IDEMPOTENCE_TOL: f64 = 1e-9;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDatum {
    ambient_dim: Spanned<usize>,
    /// Maps are square orthogonal projectors, stored compressed onto their range.
    #[serde(default)]
    projectors: bool,
    maps: Spanned<Vec<Spanned<RawMap>>>,
    weights: Spanned<Vec<f64>>,
    regs: Option<Spanned<Vec<Spanned<Vec<Vec<f64>>>>>>,
    loc: Option<Spanned<Vec<Vec<f64>>>>,
    alphas: Option<Spanned<Vec<f64>>>,
    beta: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    rows: usize,
    cols: usize,
    entries: Spanned<Vec<f64>>,
}

/// A validated datum file: the datum plus the optional localization data
/// and parameters it carries.
#[derive(Debug, Clone)]
pub struct DatumFile {
    pub datum: Datum,
    pub regs: Option<Vec<SpdMatrix>>,
    pub loc: Option<SpdMatrix>,
    pub alphas: Option<Vec<f64>>,
    pub beta: Option<f64>,
}

/// Maps byte offsets of a source text to 1-based line and column numbers.
struct Source<'a> {
    name: &'a str,
    text: &'a str,
}

impl Source<'_> {
    fn position(&self, offset: usize) -> (usize, usize) {
        let before = &self.text[..offset.min(self.text.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        (line, column)
    }

    fn error(&self, span: Range<usize>, field: &str, msg: impl std::fmt::Display) -> CliError {
        let (line, column) = self.position(span.start);
        CliError::Parse(format!("{}:{line}:{column}: {field}: {msg}", self.name))
    }
}

impl DatumFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read(path)?;
        Self::parse(&path.display().to_string(), &text)
    }

    pub fn parse(name: &str, text: &str) -> Result<Self, CliError> {
        let src = Source { name, text };
        let raw: RawDatum = toml::from_str(text).map_err(|e| {
            let span = e.span().unwrap_or(0..0);
            src.error(span, "syntax", e.message())
        })?;

        let d = *raw.ambient_dim.get_ref();
        if d == 0 {
            return Err(src.error(raw.ambient_dim.span(), "ambient_dim", "must be at least 1"));
        }
        if raw.maps.get_ref().is_empty() {
            return Err(src.error(raw.maps.span(), "maps", "at least one map is required"));
        }
        let mut maps = Vec::with_capacity(raw.maps.get_ref().len());
        for (j, m) in raw.maps.get_ref().iter().enumerate() {
            let field = format!("maps[{j}]");
            let r = m.get_ref();
            if r.cols != d {
                return Err(src.error(m.span(), &field, format!("cols = {} but ambient_dim = {d}", r.cols)));
            }
            if r.rows == 0 {
                return Err(src.error(m.span(), &field, "rows must be at least 1"));
            }
            let entries = r.entries.get_ref();
            if entries.len() != r.rows * r.cols {
                return Err(src.error(
                    r.entries.span(),
                    &format!("{field}.entries"),
                    format!("expected {} entries ({} x {}), found {}", r.rows * r.cols, r.rows, r.cols, entries.len()),
                ));
            }
            if entries.iter().any(|x| !x.is_finite()) {
                return Err(src.error(r.entries.span(), &format!("{field}.entries"), "entries must be finite"));
            }
            let map = LinearMap::from_rows(r.rows, r.cols, entries).map_err(|e| src.error(m.span(), &field, e))?;
            let map = if raw.projectors { compress_projector(&map).map_err(|msg| src.error(m.span(), &field, msg))? } else { map };
            maps.push(map);
        }
        let n = maps.len();
        let weights = raw.weights.get_ref().clone();
        if weights.len() != n {
            return Err(src.error(raw.weights.span(), "weights", format!("expected {n} weights, found {}", weights.len())));
        }
        let target_dims: Vec<usize> = maps.iter().map(LinearMap::rows).collect();
        let datum = Datum::new(maps, weights).map_err(|e| src.error(raw.weights.span(), "weights", e))?;

        let regs = match &raw.regs {
            None => None,
            Some(regs) => {
                if regs.get_ref().len() != n {
                    return Err(src.error(regs.span(), "regs", format!("expected {n} matrices, found {}", regs.get_ref().len())));
                }
                let mats = regs
                    .get_ref()
                    .iter()
                    .enumerate()
                    .map(|(j, m)| spd(&src, m, &format!("regs[{j}]"), target_dims[j]))
                    .collect::<Result<Vec<_>, _>>()?;
                Some(mats)
            }
        };
        let loc = raw.loc.as_ref().map(|m| spd(&src, m, "loc", d)).transpose()?;
        match (&raw.regs, &raw.loc) {
            (Some(r), None) => return Err(src.error(r.span(), "regs", "regs and loc must be given together")),
            (None, Some(l)) => return Err(src.error(l.span(), "loc", "regs and loc must be given together")),
            _ => {}
        }

        let alphas = match &raw.alphas {
            None => None,
            Some(a) => {
                let v = a.get_ref();
                if v.len() != n {
                    return Err(src.error(a.span(), "alphas", format!("expected {n} thresholds, found {}", v.len())));
                }
                if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(src.error(a.span(), "alphas", "thresholds must be finite and non-negative"));
                }
                Some(v.clone())
            }
        };
        let beta = match &raw.beta {
            None => None,
            Some(b) if b.get_ref().is_finite() && *b.get_ref() >= 0.0 => Some(*b.get_ref()),
            Some(b) => return Err(src.error(b.span(), "beta", "must be finite and non-negative")),
        };
        Ok(Self { datum, regs, loc, alphas, beta })
    }

    /// The localized regularized datum described by `regs` and `loc`, if
    /// the file provides them.
    pub fn localized(&self) -> Option<Result<LocalizedRegularizedDatum, CliError>> {
        let (regs, loc) = (self.regs.as_ref()?, self.loc.as_ref()?);
        Some(LocalizedRegularizedDatum::new(self.datum.clone(), regs.clone(), loc.clone()).map_err(CliError::from))
    }
}

/// The coisometry onto the range of a square orthogonal projector.
fn compress_projector(p: &LinearMap) -> Result<LinearMap, String> {
    let m = p.matrix();
    if p.rows() != p.cols() {
        return Err(format!("a projector must be square, got {} x {}", p.rows(), p.cols()));
    }
    if (m - m.transpose()).amax() > IDEMPOTENCE_TOL || (m * m - m).amax() > IDEMPOTENCE_TOL {
        return Err("matrix is not an orthogonal projector".to_owned());
    }
    let range = Subspace::span_columns(m).map_err(|e| e.to_string())?;
    if range.dim() == 0 {
        return Err("the zero projector has no range".to_owned());
    }
    LinearMap::coordinate_projection(&range).map_err(|e| e.to_string())
}

fn spd(src: &Source<'_>, m: &Spanned<Vec<Vec<f64>>>, field: &str, size: usize) -> Result<SpdMatrix, CliError> {
    let rows = m.get_ref();
    if rows.len() != size || rows.iter().any(|r| r.len() != size) {
        return Err(src.error(m.span(), field, format!("expected a {size} x {size} matrix")));
    }
    let mat = DMatrix::from_fn(size, size, |r, c| rows[r][c]);
    if mat.iter().any(|x| !x.is_finite()) {
        return Err(src.error(m.span(), field, "entries must be finite"));
    }
    let scale = mat.amax().max(1.0);
    if (&mat - mat.transpose()).amax() > SYMMETRY_TOL * scale {
        return Err(src.error(m.span(), field, "matrix must be symmetric"));
    }
    SpdMatrix::new(mat).map_err(|e| src.error(m.span(), field, e))
}

/// Parameters recovered from the `key=value` block of an earlier report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub alphas: Option<Vec<f64>>,
    pub beta: Option<f64>,
}

impl Overrides {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::parse(&path.display().to_string(), &read(path)?)
    }

    /// Reads `alphas` and `beta` from the lines after the `---` fence (or
    /// from the whole text when there is no fence); other keys are ignored.
    pub fn parse(name: &str, text: &str) -> Result<Self, CliError> {
        let start = text.lines().position(|l| l.trim() == "---").map_or(0, |i| i + 1);
        let mut out = Self::default();
        for (i, line) in text.lines().enumerate().skip(start) {
            let Some((k, v)) = line.split_once('=') else { continue };
            let bad = |what: &str| CliError::Parse(format!("{name}:{}: {k}: invalid {what} {v:?}", i + 1));
            match k.trim() {
                "alphas" => {
                    let parsed = v.split(',').map(|s| s.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>();
                    out.alphas = Some(parsed.map_err(|_| bad("threshold list"))?);
                }
                "beta" => out.beta = Some(v.trim().parse().map_err(|_| bad("number"))?),
                _ => {}
            }
        }
        Ok(out)
    }
}

/// Reads a subspace file: a header `"d k"` followed by `k` spanning vectors
/// of length `d`, one per line.
pub fn load_subspace(path: &Path) -> Result<Subspace, CliError> {
    let name = path.display().to_string();
    let text = read(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (line, header) = lines.next().ok_or_else(|| CliError::Parse(format!("{name}: missing header \"d k\"")))?;
    let counts: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Parse(format!("{name}:{line}: header must be two non-negative integers")))?;
    let [d, k] = counts[..] else {
        return Err(CliError::Parse(format!("{name}:{line}: header must be \"d k\"")));
    };
    let mut vectors = Vec::with_capacity(k);
    for (line, text) in lines {
        let coords: Vec<f64> = text
            .split_whitespace()
            .enumerate()
            .map(|(c, s)| {
                s.parse::<f64>().map_err(|_| CliError::Parse(format!("{name}:{line}:{}: invalid number {s:?}", c + 1)))
            })
            .collect::<Result<_, _>>()?;
        if coords.len() != d {
            return Err(CliError::Parse(format!("{name}:{line}: expected {d} coordinates, found {}", coords.len())));
        }
        vectors.push(DVector::from_vec(coords));
    }
    if vectors.len() != k {
        return Err(CliError::Parse(format!("{name}: header announces {k} vectors, found {}", vectors.len())));
    }
    let w = Subspace::span(d, &vectors).map_err(|e| CliError::Parse(format!("{name}: {e}")))?;
    if w.dim() != k {
        return Err(CliError::Parse(format!("{name}: the {k} vectors span a subspace of dimension {}", w.dim())));
    }
    Ok(w)
}

pub fn load_cloud(path: &Path) -> Result<PointCloud, CliError> {
    PointCloud::parse(&read(path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    const YOUNG: &str = r#"
ambient_dim = 2
weights = [0.6666666666666666, 0.6666666666666666, 0.6666666666666666]

[[maps]]
rows = 1
cols = 2
entries = [1.0, 0.0]

[[maps]]
rows = 1
cols = 2
entries = [0.0, 1.0]

[[maps]]
rows = 1
cols = 2
entries = [1.0, -1.0]
"#;

    #[test]
    fn parses_a_valid_file() {
        let f = DatumFile::parse("young.toml", YOUNG).unwrap();
        assert_eq!(f.datum.len(), 3);
        assert_eq!(f.datum.ambient_dim(), 2);
        assert!(f.regs.is_none() && f.alphas.is_none());
    }

    #[test]
    fn errors_name_the_field_and_line() {
        let bad = YOUNG.replace("entries = [0.0, 1.0]", "entries = [0.0]");
        let err = DatumFile::parse("young.toml", &bad).unwrap_err().to_string();
        assert!(err.starts_with("young.toml:13:11: maps[1].entries: expected 2 entries"), "{err}");

        let bad = YOUNG.replace("ambient_dim = 2", "ambient_dim = \"two\"");
        let err = DatumFile::parse("young.toml", &bad).unwrap_err().to_string();
        assert!(err.starts_with("young.toml:2:15: syntax:"), "{err}");

        let bad = YOUNG.replacen("ambient_dim = 2\n", "ambient_dim = 2\nloc = [[1.0, 0.0], [0.0, 1.0]]\n", 1);
        let err = DatumFile::parse("young.toml", &bad).unwrap_err().to_string();
        assert!(err.contains("loc: regs and loc must be given together"), "{err}");
    }

    #[test]
    fn rejects_asymmetric_regularizers() {
        let header = "ambient_dim = 2\nregs = [[[1.0]], [[1.0]], [[1.0]]]\nloc = [[1.0, 0.5], [0.0, 1.0]]\n";
        let text = YOUNG.replacen("ambient_dim = 2\n", header, 1);
        let err = DatumFile::parse("f.toml", &text).unwrap_err().to_string();
        assert!(err.contains("loc: matrix must be symmetric"), "{err}");
    }

    #[test]
    fn square_projectors_are_compressed() {
        let text = "ambient_dim = 2\nprojectors = true\nweights = [1.0, 1.0]\n\n\
                    [[maps]]\nrows = 2\ncols = 2\nentries = [0.5, 0.5, 0.5, 0.5]\n\n\
                    [[maps]]\nrows = 2\ncols = 2\nentries = [1.0, 0.0, 0.0, 0.0]\n";
        let f = DatumFile::parse("p.toml", text).unwrap();
        assert_eq!(f.datum.target_dims(), vec![1, 1]);
        assert!(f.datum.is_projector_datum());
        let bad = text.replace("[1.0, 0.0, 0.0, 0.0]", "[2.0, 0.0, 0.0, 0.0]");
        let err = DatumFile::parse("p.toml", &bad).unwrap_err().to_string();
        assert!(err.contains("maps[1]: matrix is not an orthogonal projector"), "{err}");
    }

    #[test]
    fn overrides_read_the_fenced_block() {
        let text = "table\nbeta  9\n---\nd=3\nalphas=5.0e-1,2.5e-1\nbeta=1.0e0\n";
        let o = Overrides::parse("o", text).unwrap();
        assert_eq!(o, Overrides { alphas: Some(vec![0.5, 0.25]), beta: Some(1.0) });
        assert!(Overrides::parse("o", "---\nbeta=x\n").is_err());
    }
}
