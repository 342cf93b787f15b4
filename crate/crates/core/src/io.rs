//! Extended-XYZ reading and writing, and the JSON run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::geometry::{Mat3, Molecule, Vec3};
use crate::model::{Head, ModelConfig};
use crate::training::TrainConfig;
use crate::{Error, Result};

const SYMBOLS: [&str; 100] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca", "Sc",
    "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr",
    "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr",
    "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt",
    "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm",
];

/// Atomic number of an element symbol, ignoring case.
pub fn atomic_number(symbol: &str) -> Option<u32> {
    SYMBOLS
        .iter()
        .position(|s| s.eq_ignore_ascii_case(symbol))
        .map(|i| i as u32 + 1)
}

pub fn symbol(z: u32) -> Option<&'static str> {
    SYMBOLS.get((z as usize).checked_sub(1)?).copied()
}

/// Splits `key=value` pairs; values may be double-quoted.
fn comment_pairs(line: &str) -> std::result::Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    let mut chars = line.trim().chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        if chars.peek().is_none() {
            break;
        }
        let key: String = std::iter::from_fn(|| chars.next_if(|c| *c != '=' && !c.is_whitespace())).collect();
        if chars.next_if_eq(&'=').is_none() {
            // bare flag
            out.push((key, String::new()));
            continue;
        }
        let value = if chars.next_if_eq(&'"').is_some() {
            let v: String = std::iter::from_fn(|| chars.next_if(|c| *c != '"')).collect();
            if chars.next().is_none() {
                return Err(format!("unterminated quote in value of {key}"));
            }
            v
        } else {
            std::iter::from_fn(|| chars.next_if(|c| !c.is_whitespace())).collect()
        };
        out.push((key, value));
    }
    Ok(out)
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64> {
    let x: f64 = tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse {what} {tok:?}"),
    })?;
    if !x.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("non-finite {what}"),
        });
    }
    Ok(x)
}

/// Reads every frame of an extended-XYZ document. Recognized comment keys:
/// `energy` and a 9-value `polarizability`; others (e.g. `Lattice`) are
/// ignored. Atom lines are `symbol x y z` with optional `fx fy fz`.
pub fn parse_extxyz(text: &str) -> Result<Vec<Molecule>> {
    let lines: Vec<&str> = text.lines().collect();
    let mut mols = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let count_line = i + 1;
        let n: usize = lines[i].trim().parse().map_err(|_| Error::Parse {
            line: count_line,
            msg: format!("expected atom count, found {:?}", lines[i].trim()),
        })?;
        if n == 0 {
            return Err(Error::Parse {
                line: count_line,
                msg: "frame has zero atoms".into(),
            });
        }
        let comment = lines.get(i + 1).ok_or_else(|| Error::Parse {
            line: count_line + 1,
            msg: "missing comment line".into(),
        })?;
        let pairs = comment_pairs(comment).map_err(|msg| Error::Parse {
            line: count_line + 1,
            msg,
        })?;
        let mut energy = None;
        let mut alpha: Option<Mat3> = None;
        for (k, v) in &pairs {
            match k.to_ascii_lowercase().as_str() {
                "energy" => energy = Some(parse_f64(v, count_line + 1, "energy")?),
                "polarizability" => {
                    let vals: Vec<f64> = v
                        .split_whitespace()
                        .map(|t| parse_f64(t, count_line + 1, "polarizability"))
                        .collect::<Result<_>>()?;
                    if vals.len() != 9 {
                        return Err(Error::Parse {
                            line: count_line + 1,
                            msg: format!("polarizability needs 9 values, found {}", vals.len()),
                        });
                    }
                    alpha = Some(std::array::from_fn(|r| std::array::from_fn(|c| vals[3 * r + c])));
                }
                _ => {}
            }
        }

        let mut zs = Vec::with_capacity(n);
        let mut pos: Vec<Vec3> = Vec::with_capacity(n);
        let mut forces: Vec<Vec3> = Vec::new();
        let mut width = None;
        for a in 0..n {
            let ln = i + 2 + a;
            let line_no = ln + 1;
            let line = lines.get(ln).ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("frame declares {n} atoms but the file ends after {a}"),
            })?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 4 && toks.len() != 7 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected 4 or 7 columns, found {}", toks.len()),
                });
            }
            if *width.get_or_insert(toks.len()) != toks.len() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "inconsistent column count within frame".into(),
                });
            }
            let z = atomic_number(toks[0])
                .or_else(|| toks[0].parse::<u32>().ok().filter(|&z| z >= 1))
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    msg: format!("unknown element {:?}", toks[0]),
                })?;
            zs.push(z);
            let mut r = [0.0; 3];
            for k in 0..3 {
                r[k] = parse_f64(toks[1 + k], line_no, "coordinate")?;
            }
            pos.push(r);
            if toks.len() == 7 {
                let mut f = [0.0; 3];
                for k in 0..3 {
                    f[k] = parse_f64(toks[4 + k], line_no, "force")?;
                }
                forces.push(f);
            }
        }
        let mut mol = Molecule::new(zs, pos).map_err(|e| Error::Parse {
            line: count_line,
            msg: e.to_string(),
        })?;
        mol.energy = energy;
        mol.polarizability = alpha;
        if !forces.is_empty() {
            mol.forces = Some(forces);
        }
        mols.push(mol);
        i += 2 + n;
    }
    Ok(mols)
}

pub fn read_extxyz(path: &Path) -> Result<Vec<Molecule>> {
    parse_extxyz(&std::fs::read_to_string(path)?)
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes frames with 17 significant digits, so parsing reproduces every
/// number exactly.
pub fn write_extxyz(mols: &[Molecule]) -> String {
    let mut s = String::new();
    for m in mols {
        let _ = writeln!(s, "{}", m.n_atoms());
        let mut comment = Vec::new();
        if let Some(e) = m.energy {
            comment.push(format!("energy={}", fmt(e)));
        }
        if let Some(a) = &m.polarizability {
            let v: Vec<String> = a.iter().flatten().map(|&x| fmt(x)).collect();
            comment.push(format!("polarizability=\"{}\"", v.join(" ")));
        }
        comment.push(if m.forces.is_some() {
            "Properties=species:S:1:pos:R:3:forces:R:3".to_string()
        } else {
            "Properties=species:S:1:pos:R:3".to_string()
        });
        let _ = writeln!(s, "{}", comment.join(" "));
        for (a, p) in m.positions.iter().enumerate() {
            let sym = symbol(m.atomic_numbers[a]).map(str::to_string).unwrap_or_else(|| m.atomic_numbers[a].to_string());
            let _ = write!(s, "{sym} {} {} {}", fmt(p[0]), fmt(p[1]), fmt(p[2]));
            if let Some(f) = &m.forces {
                let _ = write!(s, " {} {} {}", fmt(f[a][0]), fmt(f[a][1]), fmt(f[a][2]));
            }
            s.push('\n');
        }
    }
    s
}

/// Which labels a run fits; selects the model head.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskName {
    #[default]
    EnergyForces,
    Scalar,
    Polarizability,
}

impl TaskName {
    pub fn head(self) -> Head {
        match self {
            TaskName::EnergyForces => Head::ScalarForce,
            TaskName::Scalar => Head::Scalar,
            TaskName::Polarizability => Head::Polarizability,
        }
    }
}

/// Everything `train` needs. Missing keys take their defaults; unknown keys
/// are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskName,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Extended-XYZ file; relative paths resolve against the config file.
    pub dataset: PathBuf,
    /// Seed for parameter initialization.
    pub init_seed: u64,
    /// Recorded only; values are never converted.
    pub energy_unit: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: TaskName::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            dataset: PathBuf::new(),
            init_seed: 0,
            energy_unit: "eV".into(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text)?;
        cfg.model.head = cfg.task.head();
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        if cfg.dataset.is_relative() && !cfg.dataset.as_os_str().is_empty() {
            if let Some(dir) = path.parent() {
                cfg.dataset = dir.join(&cfg.dataset);
            }
        }
        Ok(cfg)
    }
}
