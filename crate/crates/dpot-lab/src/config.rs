//! Flat `key = value` experiment configs with dotted sections.

use dpot::geometry::GeometrySpec;
use dpot::operators::PotentialSpec;
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{field}: {message}")]
    Semantic { field: String, message: String },
}

fn semantic(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Semantic { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    Green,
    Kato,
    Possol,
    Heat,
    Parabolic,
    Riesz,
    Full,
}

impl Pipeline {
    pub fn name(&self) -> &'static str {
        match self {
            Pipeline::Green => "green",
            Pipeline::Kato => "kato",
            Pipeline::Possol => "possol",
            Pipeline::Heat => "heat",
            Pipeline::Parabolic => "parabolic",
            Pipeline::Riesz => "riesz",
            Pipeline::Full => "full",
        }
    }

    pub fn includes(&self, stage: Pipeline) -> bool {
        *self == Pipeline::Full || *self == stage
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    CsvBundle,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv-bundle" => Ok(OutputFormat::CsvBundle),
            other => Err(format!("unknown format '{other}' (json | csv-bundle)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl Comparison {
    pub fn symbol(&self) -> &'static str {
        match self {
            Comparison::Lt => "<",
            Comparison::Le => "<=",
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
            Comparison::Eq => "==",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expected {
    Number(f64),
    Text(String),
}

/// `assert.<metric> = <op> <value>`, optionally `± tol` for `==` on numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub metric: String,
    pub op: Comparison,
    pub expected: Expected,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatParams {
    pub times: Vec<f64>,
    pub norm_grid: (f64, f64, usize),
    pub pairs: Vec<(f64, f64)>,
    pub sample_columns: usize,
    pub d_max: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParabolicParams {
    pub radii: Vec<usize>,
    pub p: Vec<f64>,
    pub p_range: (f64, f64),
    pub steps: usize,
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RieszParams {
    pub radii: Vec<usize>,
    pub p: Vec<f64>,
    pub starts: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub geometry: GeometrySpec,
    pub potential: PotentialSpec,
    pub exhaustion_radii: Vec<usize>,
    pub pipeline: Pipeline,
    pub seed: u64,
    pub tol: f64,
    pub kato_eps: f64,
    pub kato_lp: f64,
    /// Truncation radii for the scale trend of the weighted-norm predictor.
    pub kato_radii: Vec<usize>,
    pub possol_t: Vec<f64>,
    pub heat: HeatParams,
    pub parabolic: ParabolicParams,
    pub riesz: RieszParams,
    pub max_vertices: usize,
    pub output_path: Option<PathBuf>,
    pub output_format: OutputFormat,
    pub assertions: Vec<Assertion>,
    /// Normalized key → value after defaults, for the report echo.
    pub echo: BTreeMap<String, String>,
}

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_VERTICES: usize = 200_000;

const GEOMETRY_KEYS: &[&str] = &["family", "n", "radius", "alpha", "cycle", "base"];
const POTENTIAL_KEYS: &[&str] = &["family", "amplitude", "radius", "center", "beta", "vertex", "values"];
const TOP_KEYS: &[&str] = &[
    "pipeline",
    "seed",
    "tol",
    "max_vertices",
    "exhaustion.radii",
    "kato.eps",
    "kato.lp",
    "kato.radii",
    "possol.t",
    "heat.t",
    "heat.t_min",
    "heat.t_max",
    "heat.t_points",
    "heat.pairs",
    "heat.sample_columns",
    "heat.d_max",
    "parabolic.radii",
    "parabolic.p",
    "parabolic.p_min",
    "parabolic.p_max",
    "parabolic.steps",
    "parabolic.horizon",
    "riesz.radii",
    "riesz.p",
    "riesz.starts",
    "riesz.iterations",
    "output.path",
    "output.format",
];

struct Entry {
    value: String,
    line: usize,
    column: usize,
}

fn key_allowed(key: &str) -> bool {
    if TOP_KEYS.contains(&key) {
        return true;
    }
    if let Some(rest) = key.strip_prefix("geometry.") {
        return GEOMETRY_KEYS.contains(&rest);
    }
    if let Some(rest) = key.strip_prefix("potential.") {
        let field = match rest.split_once('.') {
            Some((idx, f)) if idx.parse::<usize>().is_ok() => f,
            _ => rest,
        };
        return POTENTIAL_KEYS.contains(&field);
    }
    key.strip_prefix("assert.").is_some_and(|m| !m.is_empty())
}

fn lex(text: &str) -> Result<BTreeMap<String, Entry>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        let Some(eq) = content.find('=') else {
            return Err(ConfigError::Parse { line, column: indent + 1, message: "expected key = value".into() });
        };
        let key = content[..eq].trim();
        if key.is_empty() {
            return Err(ConfigError::Parse { line, column: indent + 1, message: "empty key".into() });
        }
        if !key_allowed(key) {
            return Err(ConfigError::Parse { line, column: indent + 1, message: format!("unknown key '{key}'") });
        }
        let vstart = eq + 1 + (content[eq + 1..].len() - content[eq + 1..].trim_start().len());
        let value = content[eq + 1..].trim().trim_matches('"').to_string();
        if value.is_empty() {
            return Err(ConfigError::Parse { line, column: vstart + 1, message: format!("missing value for '{key}'") });
        }
        if out.insert(key.to_string(), Entry { value, line, column: vstart + 1 }).is_some() {
            return Err(ConfigError::Parse { line, column: indent + 1, message: format!("duplicate key '{key}'") });
        }
    }
    Ok(out)
}

struct Reader {
    entries: BTreeMap<String, Entry>,
    echo: BTreeMap<String, String>,
}

impl Reader {
    fn raw(&mut self, key: &str) -> Option<(String, usize, usize)> {
        self.entries.get(key).map(|e| (e.value.clone(), e.line, e.column))
    }

    fn parse<V: std::str::FromStr>(&mut self, key: &str, default: Option<V>, show: impl Fn(&V) -> String) -> Result<Option<V>, ConfigError> {
        let v = match self.raw(key) {
            Some((s, line, column)) => Some(s.parse::<V>().map_err(|_| ConfigError::Parse {
                line,
                column,
                message: format!("invalid value '{s}' for '{key}'"),
            })?),
            None => default,
        };
        if let Some(v) = &v {
            self.echo.insert(key.into(), show(v));
        }
        Ok(v)
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.parse(key, Some(default), |v: &f64| format!("{v:?}"))?.unwrap())
    }

    fn opt_f64(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.parse(key, None, |v: &f64| format!("{v:?}"))
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.parse(key, Some(default), |v: &usize| v.to_string())?.unwrap())
    }

    fn opt_usize(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.parse(key, None, |v: &usize| v.to_string())
    }

    fn string(&mut self, key: &str) -> Option<String> {
        let v = self.raw(key).map(|r| r.0);
        if let Some(v) = &v {
            self.echo.insert(key.into(), v.clone());
        }
        v
    }

    fn list<V: std::str::FromStr + ToString>(&mut self, key: &str, default: Vec<V>) -> Result<Vec<V>, ConfigError> {
        let v = match self.raw(key) {
            Some((s, line, column)) => s
                .split(',')
                .map(|x| {
                    x.trim().parse::<V>().map_err(|_| ConfigError::Parse {
                        line,
                        column,
                        message: format!("invalid list entry '{}' for '{key}'", x.trim()),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => default,
        };
        self.echo.insert(key.into(), v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
        Ok(v)
    }
}

fn parse_exponent(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" | "infinity" => Some(f64::INFINITY),
        x => x.parse().ok(),
    }
}

fn geometry(r: &mut Reader) -> Result<GeometrySpec, ConfigError> {
    let family = r.string("geometry.family").ok_or_else(|| semantic("geometry.family", "required"))?;
    let radius = r.opt_usize("geometry.radius")?.ok_or_else(|| semantic("geometry.radius", "required"))?;
    let base = |r: &mut Reader, family: &str| -> Result<GeometrySpec, ConfigError> {
        match family {
            "lattice" => Ok(GeometrySpec::Lattice { dimension: r.usize("geometry.n", 1)?, radius }),
            "radial" => {
                let alpha = r.opt_f64("geometry.alpha")?.ok_or_else(|| semantic("geometry.alpha", "required for radial"))?;
                Ok(GeometrySpec::Radial { alpha, radius })
            }
            other => Err(semantic("geometry.family", format!("unknown family '{other}'"))),
        }
    };
    let spec = if family == "product" {
        let b = r.string("geometry.base").ok_or_else(|| semantic("geometry.base", "required for product"))?;
        let cycle = r.opt_usize("geometry.cycle")?.ok_or_else(|| semantic("geometry.cycle", "required for product"))?;
        GeometrySpec::Product { base: Box::new(base(r, &b)?), cycle }
    } else {
        base(r, &family)?
    };
    spec.validate().map_err(|e| semantic("geometry", e.to_string()))?;
    Ok(spec)
}

fn potential_term(r: &mut Reader, prefix: &str) -> Result<PotentialSpec, ConfigError> {
    let k = |f: &str| format!("{prefix}.{f}");
    let family = r.string(&k("family")).unwrap_or_else(|| "zero".into());
    r.echo.insert(k("family"), family.clone());
    let need = |r: &mut Reader, f: &str| -> Result<f64, ConfigError> {
        r.opt_f64(&k(f))?.ok_or_else(|| semantic(&k(f), format!("required for {family}")))
    };
    Ok(match family.as_str() {
        "zero" => PotentialSpec::Zero,
        "bump" => PotentialSpec::Bump {
            center: r.opt_usize(&k("center"))?,
            radius: r.usize(&k("radius"), 0)?,
            amplitude: need(r, "amplitude")?,
        },
        "power_decay" => PotentialSpec::PowerDecay { amplitude: need(r, "amplitude")?, beta: need(r, "beta")? },
        "pointmass" => PotentialSpec::PointMass { vertex: r.opt_usize(&k("vertex"))?, amplitude: need(r, "amplitude")? },
        "table" => {
            let s = r.string(&k("values")).ok_or_else(|| semantic(&k("values"), "required for table"))?;
            let pairs = s
                .split(',')
                .map(|item| {
                    let (x, v) = item.split_once(':')?;
                    Some((x.trim().parse().ok()?, v.trim().parse().ok()?))
                })
                .collect::<Option<Vec<(usize, f64)>>>()
                .ok_or_else(|| semantic(&k("values"), "expected vertex:value,…"))?;
            PotentialSpec::Table(pairs)
        }
        other => return Err(semantic(&k("family"), format!("unknown family '{other}'"))),
    })
}

fn potential(r: &mut Reader) -> Result<PotentialSpec, ConfigError> {
    let mut terms = vec![potential_term(r, "potential")?];
    let mut extra: Vec<usize> = r
        .entries
        .keys()
        .filter_map(|k| k.strip_prefix("potential.")?.split_once('.')?.0.parse().ok())
        .collect();
    extra.sort_unstable();
    extra.dedup();
    for i in extra {
        terms.push(potential_term(r, &format!("potential.{i}"))?);
    }
    Ok(if terms.len() == 1 { terms.pop().unwrap() } else { PotentialSpec::Sum(terms) })
}

fn assertion(metric: &str, e: &Entry) -> Result<Assertion, ConfigError> {
    let err = |m: &str| ConfigError::Parse { line: e.line, column: e.column, message: format!("assert.{metric}: {m}") };
    let s = e.value.trim();
    let (op, rest) = [("<=", Comparison::Le), (">=", Comparison::Ge), ("==", Comparison::Eq), ("<", Comparison::Lt), (">", Comparison::Gt)]
        .iter()
        .find_map(|(sym, op)| s.strip_prefix(sym).map(|r| (*op, r.trim())))
        .ok_or_else(|| err("expected <op> <value> with op in < <= > >= =="))?;
    let (value, tol) = match rest.split_once('±').or_else(|| rest.split_once("+-")) {
        Some((v, t)) => (v.trim(), t.trim().parse::<f64>().map_err(|_| err("invalid tolerance"))?),
        None => (rest, 0.0),
    };
    let expected = match parse_exponent(value) {
        Some(x) => Expected::Number(x),
        None if op == Comparison::Eq => Expected::Text(value.to_string()),
        None => return Err(err("ordered comparison needs a number")),
    };
    Ok(Assertion { metric: metric.to_string(), op, expected, tolerance: tol })
}

fn check_radii(field: &str, radii: &[usize], bound: usize) -> Result<(), ConfigError> {
    if radii.iter().any(|&r| r == 0) {
        return Err(semantic(field, "radii must be positive"));
    }
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(semantic(field, "radii must be strictly increasing"));
    }
    if radii.iter().any(|&r| r > bound) {
        return Err(semantic(field, "radii exceed interior radius"));
    }
    Ok(())
}

/// Parses and validates a config, filling defaults.
pub fn validate_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let entries = lex(text)?;
    let mut r = Reader { entries, echo: BTreeMap::new() };
    let seed = r.parse::<u64>("seed", None, |v| v.to_string())?.ok_or_else(|| semantic("seed", "seed is required"))?;
    let pipeline = match r.string("pipeline").as_deref().unwrap_or("full") {
        "green" => Pipeline::Green,
        "kato" => Pipeline::Kato,
        "possol" => Pipeline::Possol,
        "heat" => Pipeline::Heat,
        "parabolic" => Pipeline::Parabolic,
        "riesz" => Pipeline::Riesz,
        "full" => Pipeline::Full,
        other => return Err(semantic("pipeline", format!("unknown pipeline '{other}'"))),
    };
    r.echo.insert("pipeline".into(), pipeline.name().into());
    let tol = r.f64("tol", DEFAULT_TOL)?;
    if !(tol > 0.0) {
        return Err(semantic("tol", "must be positive"));
    }
    let geometry = geometry(&mut r)?;
    let potential = potential(&mut r)?;
    let radius = geometry.radius();
    let exhaustion_radii = r.list::<usize>("exhaustion.radii", Vec::new())?;
    // Level sets must stay strictly inside the Dirichlet shell.
    check_radii("exhaustion.radii", &exhaustion_radii, radius.saturating_sub(1))?;
    let kato_eps = r.f64("kato.eps", 0.25)?;
    let kato_lp = r.f64("kato.lp", 2.0)?;
    let kato_radii = r.list::<usize>("kato.radii", Vec::new())?;
    check_radii("kato.radii", &kato_radii, usize::MAX)?;
    let possol_t = r.list::<f64>("possol.t", Vec::new())?;
    let times = r.list::<f64>("heat.t", vec![0.5, 1.0, 2.0])?;
    let t_min = r.f64("heat.t_min", 0.1)?;
    let t_max = r.f64("heat.t_max", 50.0)?;
    let t_points = r.usize("heat.t_points", 15)?;
    if !(t_min > 0.0 && t_max > t_min && t_points >= 2) || times.iter().any(|&t| !(t > 0.0)) {
        return Err(semantic("heat", "times must be positive with t_min < t_max and t_points ≥ 2"));
    }
    let pairs_s = r.string("heat.pairs").unwrap_or_else(|| "1:2,2:4,1:inf".into());
    r.echo.insert("heat.pairs".into(), pairs_s.clone());
    let pairs = pairs_s
        .split(',')
        .map(|it| {
            let (p, q) = it.split_once(':')?;
            let (p, q) = (parse_exponent(p)?, parse_exponent(q)?);
            (p >= 1.0 && q >= p).then_some((p, q))
        })
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| semantic("heat.pairs", "expected p:q,… with 1 ≤ p ≤ q"))?;
    let sample_columns = r.usize("heat.sample_columns", 32)?;
    let d_max = r.usize("heat.d_max", radius)?;
    let parabolic = ParabolicParams {
        radii: r.list::<usize>("parabolic.radii", Vec::new())?,
        p: r.list::<f64>("parabolic.p", vec![2.0])?,
        p_range: (r.f64("parabolic.p_min", 1.5)?, r.f64("parabolic.p_max", 4.5)?),
        steps: r.usize("parabolic.steps", 3)?,
        horizon: r.opt_usize("parabolic.horizon")?,
    };
    check_radii("parabolic.radii", &parabolic.radii, usize::MAX)?;
    if parabolic.p.iter().chain([&parabolic.p_range.0, &parabolic.p_range.1]).any(|&p| !(p > 1.0)) || parabolic.p_range.0 >= parabolic.p_range.1 {
        return Err(semantic("parabolic.p", "exponents must exceed 1 with p_min < p_max"));
    }
    let riesz = RieszParams {
        radii: r.list::<usize>("riesz.radii", Vec::new())?,
        p: r.list::<f64>("riesz.p", vec![2.0, 2.5, 4.0])?,
        starts: r.usize("riesz.starts", 8)?,
        iterations: r.usize("riesz.iterations", 100)?,
    };
    check_radii("riesz.radii", &riesz.radii, usize::MAX)?;
    if riesz.p.iter().any(|&p| !(p > 1.0 && p.is_finite())) {
        return Err(semantic("riesz.p", "exponents must be finite and exceed 1"));
    }
    let max_vertices = r.usize("max_vertices", DEFAULT_MAX_VERTICES)?;
    let output_path = r.string("output.path").map(PathBuf::from);
    let fmt = r.string("output.format").unwrap_or_else(|| "json".into());
    let output_format = fmt.parse().map_err(|m: String| semantic("output.format", m))?;
    r.echo.insert("output.format".into(), fmt);
    let assertions = r
        .entries
        .iter()
        .filter_map(|(k, e)| k.strip_prefix("assert.").map(|m| assertion(m, e)))
        .collect::<Result<Vec<_>, _>>()?;
    for (k, e) in &r.entries {
        if k.starts_with("assert.") {
            r.echo.insert(k.clone(), e.value.clone());
        }
    }
    Ok(ExperimentConfig {
        geometry,
        potential,
        exhaustion_radii,
        pipeline,
        seed,
        tol,
        kato_eps,
        kato_lp,
        kato_radii,
        possol_t,
        heat: HeatParams { times, norm_grid: (t_min, t_max, t_points), pairs, sample_columns, d_max },
        parabolic,
        riesz,
        max_vertices,
        output_path,
        output_format,
        assertions,
        echo: r.echo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_filled() {
        let c = validate_config("geometry.family=lattice\ngeometry.n=3\ngeometry.radius=10\nseed=42\n").unwrap();
        assert_eq!(c.tol, 1e-10);
        assert_eq!(c.pipeline, Pipeline::Full);
        assert_eq!(c.potential, PotentialSpec::Zero);
        assert_eq!(c.echo["tol"], "1e-10");
    }

    #[test]
    fn seed_required() {
        let e = validate_config("geometry.family=lattice\ngeometry.radius=3\n").unwrap_err();
        assert!(matches!(e, ConfigError::Semantic { ref field, .. } if field == "seed"), "{e}");
    }

    #[test]
    fn unknown_key_named() {
        let e = validate_config("seed=1\n  foo = 3\n").unwrap_err();
        assert_eq!(e, ConfigError::Parse { line: 2, column: 3, message: "unknown key 'foo'".into() });
        assert!(e.to_string().contains("foo"));
    }

    #[test]
    fn radii_out_of_range() {
        let e = validate_config("seed=1\ngeometry.family=lattice\ngeometry.n=3\ngeometry.radius=10\nexhaustion.radii=4,20\n").unwrap_err();
        assert!(e.to_string().contains("radii exceed interior radius"), "{e}");
    }

    #[test]
    fn multi_term_potential_and_assertions() {
        let c = validate_config(
            "seed=3\ngeometry.family=product\ngeometry.base=lattice\ngeometry.n=3\ngeometry.radius=4\ngeometry.cycle=4\n\
             potential.family=bump\npotential.radius=1\npotential.amplitude=-0.2\n\
             potential.2.family=power_decay\npotential.2.amplitude=0.1\npotential.2.beta=3\n\
             assert.green.fixture_error = <= 1e-12\nassert.riesz.p2.trend = == bounded\nassert.x = == 1 ± 1e-3\n",
        )
        .unwrap();
        assert!(matches!(c.potential, PotentialSpec::Sum(ref t) if t.len() == 2));
        assert_eq!(c.assertions.len(), 3);
        assert_eq!(c.assertions[1].expected, Expected::Text("bounded".into()));
        assert_eq!(c.assertions[2].tolerance, 1e-3);
    }
}
