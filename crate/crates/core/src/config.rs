//! Flat `key = value` scenario files.
//!
//! ```text
//! # reference three-cell setup
//! L = 3
//! K = 10
//! N = 100
//! pathloss_exponent = 2.5
//! rho_tr_db = 6
//! rho_dl_db = 10
//! kappa = 5
//! lambda_rule = k_over_n_rho
//! los_model = ula
//! geometry = triangle_default
//! min_distance = 0.1
//! seed = 1
//! ```
//!
//! `kappa` takes one value or `L*K` comma-separated values (cell-major).
//! `lambda_rule` is `k_over_n_rho`, one number, or `L` comma-separated
//! numbers. With `geometry = explicit_positions` the file must also carry
//! `bs_positions` and `ue_positions` as flat `x,y,x,y,...` lists.
//! `min_distance`, `los_model` and `geometry` default to `0.1`, `ula` and
//! `triangle_default`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scenario::{Geometry, KappaRule, LambdaRule, LosModel, ScenarioConfig};

const KEYS: &[&str] = &[
    "L",
    "K",
    "N",
    "pathloss_exponent",
    "rho_tr_db",
    "rho_dl_db",
    "kappa",
    "lambda_rule",
    "los_model",
    "geometry",
    "min_distance",
    "seed",
    "bs_positions",
    "ue_positions",
];

struct Entry {
    line: usize,
    value: String,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn number<T: std::str::FromStr>(e: &Entry, key: &str) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| parse_err(e.line, format!("{key}: cannot parse '{}'", e.value)))
}

fn list(e: &Entry, key: &str) -> Result<Vec<f64>> {
    e.value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| parse_err(e.line, format!("{key}: cannot parse '{}'", s.trim())))
        })
        .collect()
}

fn points(e: &Entry, key: &str) -> Result<Vec<[f64; 2]>> {
    let v = list(e, key)?;
    if v.len() % 2 != 0 {
        return Err(parse_err(e.line, format!("{key}: needs x,y pairs")));
    }
    Ok(v.chunks(2).map(|p| [p[0], p[1]]).collect())
}

/// Parses a scenario file's contents. Semantic checks are left to
/// [`ScenarioConfig::validate`].
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut entries: BTreeMap<&str, Entry> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_err(line, "expected 'key = value'"))?;
        let key = key.trim();
        let known = KEYS
            .iter()
            .find(|k| **k == key)
            .ok_or_else(|| parse_err(line, format!("unknown key '{key}'")))?;
        let entry = Entry {
            line,
            value: value.trim().to_string(),
        };
        if entries.insert(known, entry).is_some() {
            return Err(parse_err(line, format!("duplicate key '{key}'")));
        }
    }

    let last_line = text.lines().count();
    let required = |key: &str| {
        entries
            .get(key)
            .ok_or_else(|| parse_err(last_line, format!("missing key '{key}'")))
    };

    let kappa_entry = required("kappa")?;
    let kappa = match list(kappa_entry, "kappa")?.as_slice() {
        [v] => KappaRule::Uniform(*v),
        v => KappaRule::PerUser(v.to_vec()),
    };
    let lambda_entry = required("lambda_rule")?;
    let lambda = if lambda_entry.value == "k_over_n_rho" {
        LambdaRule::KOverNRho
    } else {
        match list(lambda_entry, "lambda_rule")?.as_slice() {
            [v] => LambdaRule::Fixed(*v),
            v => LambdaRule::PerCell(v.to_vec()),
        }
    };
    let los_model = match entries.get("los_model") {
        None => LosModel::Ula,
        Some(e) => match e.value.as_str() {
            "ula" => LosModel::Ula,
            "dft_orthogonal" => LosModel::DftOrthogonal,
            "explicit" => {
                return Err(parse_err(
                    e.line,
                    "explicit LOS vectors can only be supplied programmatically",
                ))
            }
            other => return Err(parse_err(e.line, format!("unknown los_model '{other}'"))),
        },
    };
    let geometry = match entries.get("geometry") {
        None => Geometry::TriangleDefault,
        Some(e) => match e.value.as_str() {
            "triangle_default" => Geometry::TriangleDefault,
            "explicit_positions" => Geometry::ExplicitPositions {
                bs: points(required("bs_positions")?, "bs_positions")?,
                ue: points(required("ue_positions")?, "ue_positions")?,
            },
            other => return Err(parse_err(e.line, format!("unknown geometry '{other}'"))),
        },
    };
    let min_distance = match entries.get("min_distance") {
        Some(e) => number(e, "min_distance")?,
        None => 0.1,
    };

    Ok(ScenarioConfig {
        cells: number(required("L")?, "L")?,
        users: number(required("K")?, "K")?,
        antennas: number(required("N")?, "N")?,
        pathloss_exponent: number(required("pathloss_exponent")?, "pathloss_exponent")?,
        rho_tr_db: number(required("rho_tr_db")?, "rho_tr_db")?,
        rho_dl_db: number(required("rho_dl_db")?, "rho_dl_db")?,
        kappa,
        lambda,
        los_model,
        geometry,
        min_distance,
        seed: number(required("seed")?, "seed")?,
    })
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    parse_config(&text)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Inverse of [`parse_config`] for configs that the file format can express.
pub fn render_config(c: &ScenarioConfig) -> Result<String> {
    let kappa = match &c.kappa {
        KappaRule::Uniform(v) => v.to_string(),
        KappaRule::PerUser(v) => join(v),
    };
    let lambda = match &c.lambda {
        LambdaRule::KOverNRho => "k_over_n_rho".to_string(),
        LambdaRule::Fixed(v) => v.to_string(),
        LambdaRule::PerCell(v) => join(v),
    };
    let los = match c.los_model {
        LosModel::Ula => "ula",
        LosModel::DftOrthogonal => "dft_orthogonal",
        LosModel::Explicit(_) => {
            return Err(Error::InvalidArgument("explicit LOS has no file form".into()))
        }
    };
    let mut out = format!(
        "L = {}\nK = {}\nN = {}\npathloss_exponent = {}\nrho_tr_db = {}\nrho_dl_db = {}\nkappa = {}\nlambda_rule = {}\nlos_model = {}\n",
        c.cells, c.users, c.antennas, c.pathloss_exponent, c.rho_tr_db, c.rho_dl_db, kappa, lambda, los
    );
    match &c.geometry {
        Geometry::TriangleDefault => out.push_str("geometry = triangle_default\n"),
        Geometry::ExplicitPositions { bs, ue } => {
            let flat = |p: &[[f64; 2]]| join(&p.iter().flatten().copied().collect::<Vec<_>>());
            out.push_str("geometry = explicit_positions\n");
            out.push_str(&format!("bs_positions = {}\nue_positions = {}\n", flat(bs), flat(ue)));
        }
        Geometry::ExplicitGains(_) => {
            return Err(Error::InvalidArgument("explicit gains have no file form".into()))
        }
    }
    out.push_str(&format!("min_distance = {}\nseed = {}\n", c.min_distance, c.seed));
    Ok(out)
}
