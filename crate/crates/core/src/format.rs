//! The `smpc v1` instance text format and its JSON mirror.
//!
//! ```text
//! smpc v1
//! program <name> <quota>
//! single <name> : <prog> ...
//! couple <name1> <name2> : <p1a>,<p1b> ; <p2a>,<p2b> ...
//! progrol <name> : <doc> ...
//! ```
//!
//! `@nil` names the unmatched option. ROL terminators are implicit. Lines
//! starting with `#` are comments. Doctors are numbered in order of
//! appearance, programs in order of their `program` lines.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Couple, DoctorId, Instance, Matching, ModelError, Program, ProgramId, ProgramPair, ProgramRef,
    Single, NIL_PAIR,
};

pub const HEADER: &str = "smpc v1";
pub const NIL_TOKEN: &str = "@nil";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing `{HEADER}` header")]
    MissingHeader,
    #[error("unknown program `{0}`")]
    UnknownProgram(String),
    #[error("unknown doctor `{0}`")]
    UnknownDoctor(String),
    #[error("name `{0}` defined twice")]
    DuplicateName(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn syntax(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Syntax {
        line,
        msg: msg.into(),
    }
}

/// Name-level view of an instance; the JSON mirror serializes this directly.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawInstance {
    pub format: String,
    pub program: Vec<RawProgram>,
    pub single: Vec<RawSingle>,
    pub couple: Vec<RawCouple>,
    pub progrol: Vec<RawProgRol>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawProgram {
    pub name: String,
    pub quota: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSingle {
    pub name: String,
    pub rol: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCouple {
    pub names: [String; 2],
    pub rol: Vec<[String; 2]>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawProgRol {
    pub name: String,
    pub rol: Vec<String>,
}

impl RawInstance {
    pub fn from_instance(inst: &Instance) -> RawInstance {
        let pname = |p: ProgramRef| inst.program_name(p).to_string();
        let dname = |d: DoctorId| inst.doctor_name(d).to_string();
        // Emit participants in doctor order so ids survive a round trip.
        let mut single = Vec::new();
        let mut couple = Vec::new();
        let mut emitted = vec![false; inst.num_doctors()];
        for d in inst.doctors() {
            if emitted[d.index()] {
                continue;
            }
            match inst.role(d) {
                crate::model::Role::Single(i) => {
                    let s = &inst.singles()[i];
                    single.push((
                        d,
                        RawSingle {
                            name: dname(d),
                            rol: s.rol[..s.rol.len() - 1].iter().map(|&p| pname(p)).collect(),
                        },
                    ));
                    emitted[d.index()] = true;
                }
                crate::model::Role::Couple { couple: c, .. } => {
                    let c = inst.couple(c);
                    couple.push((
                        d,
                        RawCouple {
                            names: [dname(c.first), dname(c.second)],
                            rol: c.rol[..c.rol.len() - 1]
                                .iter()
                                .map(|&(a, b)| [pname(a), pname(b)])
                                .collect(),
                        },
                    ));
                    emitted[c.first.index()] = true;
                    emitted[c.second.index()] = true;
                }
            }
        }
        RawInstance {
            format: HEADER.to_string(),
            program: inst
                .programs()
                .iter()
                .map(|p| RawProgram {
                    name: p.name.clone(),
                    quota: p.quota,
                })
                .collect(),
            single: single.into_iter().map(|(_, s)| s).collect(),
            couple: couple.into_iter().map(|(_, c)| c).collect(),
            progrol: inst
                .programs()
                .iter()
                .map(|p| RawProgRol {
                    name: p.name.clone(),
                    rol: p.rol.iter().map(|&d| dname(d)).collect(),
                })
                .collect(),
        }
    }

    /// Resolves names. Doctor ids follow the text order: every single and
    /// couple line in the order they were read. For JSON input singles come
    /// before couples unless `order` says otherwise.
    fn build(&self, order: Option<&[Participant]>) -> Result<Instance, FormatError> {
        let mut programs = Vec::with_capacity(self.program.len());
        let mut prog_ids: HashMap<&str, ProgramId> = HashMap::new();
        for (i, p) in self.program.iter().enumerate() {
            if prog_ids.insert(&p.name, ProgramId(i as u32)).is_some() {
                return Err(FormatError::DuplicateName(p.name.clone()));
            }
            programs.push(Program {
                name: p.name.clone(),
                quota: p.quota,
                rol: Vec::new(),
            });
        }
        let lookup_prog = |name: &str| -> Result<ProgramRef, FormatError> {
            if name == NIL_TOKEN {
                return Ok(ProgramRef::Nil);
            }
            prog_ids
                .get(name)
                .map(|&p| ProgramRef::Program(p))
                .ok_or_else(|| FormatError::UnknownProgram(name.to_string()))
        };

        let default_order: Vec<Participant> = (0..self.single.len())
            .map(Participant::Single)
            .chain((0..self.couple.len()).map(Participant::Couple))
            .collect();
        let order = order.unwrap_or(&default_order);

        let mut doctor_names = Vec::new();
        let mut doc_ids: HashMap<String, DoctorId> = HashMap::new();
        let mut add_doctor = |name: &str| -> Result<DoctorId, FormatError> {
            let id = DoctorId(doctor_names.len() as u32);
            if doc_ids.insert(name.to_string(), id).is_some() {
                return Err(FormatError::DuplicateName(name.to_string()));
            }
            doctor_names.push(name.to_string());
            Ok(id)
        };
        let mut singles = Vec::new();
        let mut couples = Vec::new();
        for part in order {
            match *part {
                Participant::Single(i) => {
                    let raw = &self.single[i];
                    let doctor = add_doctor(&raw.name)?;
                    let mut rol = raw
                        .rol
                        .iter()
                        .map(|n| lookup_prog(n))
                        .collect::<Result<Vec<_>, _>>()?;
                    rol.push(ProgramRef::Nil);
                    singles.push(Single { doctor, rol });
                }
                Participant::Couple(i) => {
                    let raw = &self.couple[i];
                    let first = add_doctor(&raw.names[0])?;
                    let second = add_doctor(&raw.names[1])?;
                    let mut rol = raw
                        .rol
                        .iter()
                        .map(|[a, b]| Ok::<ProgramPair, FormatError>((lookup_prog(a)?, lookup_prog(b)?)))
                        .collect::<Result<Vec<_>, _>>()?;
                    rol.push(NIL_PAIR);
                    couples.push(Couple { first, second, rol });
                }
            }
        }
        for pr in &self.progrol {
            let pid = prog_ids
                .get(pr.name.as_str())
                .ok_or_else(|| FormatError::UnknownProgram(pr.name.clone()))?;
            programs[pid.index()].rol = pr
                .rol
                .iter()
                .map(|n| {
                    doc_ids
                        .get(n)
                        .copied()
                        .ok_or_else(|| FormatError::UnknownDoctor(n.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
        }
        Ok(Instance::new(doctor_names, programs, singles, couples)?)
    }

    pub fn to_instance(&self) -> Result<Instance, FormatError> {
        self.build(None)
    }
}

#[derive(Clone, Copy, Debug)]
enum Participant {
    Single(usize),
    Couple(usize),
}

fn check_name(line: usize, name: &str) -> Result<(), FormatError> {
    if name.is_empty() || name == NIL_TOKEN || name.contains([':', ';', ',']) {
        return Err(syntax(line, format!("invalid name `{name}`")));
    }
    Ok(())
}

pub fn parse_text(text: &str) -> Result<Instance, FormatError> {
    let mut raw = RawInstance::default();
    let mut order = Vec::new();
    let mut saw_header = false;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line.split_whitespace().collect::<Vec<_>>() != ["smpc", "v1"] {
                return Err(FormatError::MissingHeader);
            }
            saw_header = true;
            raw.format = HEADER.to_string();
            continue;
        }
        let (head, body) = match line.split_once(':') {
            Some((h, b)) => (h.trim(), Some(b.trim())),
            None => (line, None),
        };
        let mut words = head.split_whitespace();
        let keyword = words.next().unwrap_or_default();
        let args: Vec<&str> = words.collect();
        match (keyword, body) {
            ("program", None) => {
                let [name, quota] = args[..] else {
                    return Err(syntax(lineno, "expected `program <name> <quota>`"));
                };
                check_name(lineno, name)?;
                let quota = quota
                    .parse()
                    .map_err(|_| syntax(lineno, format!("bad quota `{quota}`")))?;
                raw.program.push(RawProgram {
                    name: name.to_string(),
                    quota,
                });
            }
            ("single", Some(body)) => {
                let [name] = args[..] else {
                    return Err(syntax(lineno, "expected `single <name> : ...`"));
                };
                check_name(lineno, name)?;
                order.push(Participant::Single(raw.single.len()));
                raw.single.push(RawSingle {
                    name: name.to_string(),
                    rol: body.split_whitespace().map(str::to_string).collect(),
                });
            }
            ("couple", Some(body)) => {
                let [a, b] = args[..] else {
                    return Err(syntax(lineno, "expected `couple <name1> <name2> : ...`"));
                };
                check_name(lineno, a)?;
                check_name(lineno, b)?;
                let mut rol = Vec::new();
                for chunk in body.split(';').map(str::trim).filter(|c| !c.is_empty()) {
                    let parts: Vec<&str> = chunk.split(',').map(str::trim).collect();
                    let [x, y] = parts[..] else {
                        return Err(syntax(lineno, format!("bad program pair `{chunk}`")));
                    };
                    rol.push([x.to_string(), y.to_string()]);
                }
                order.push(Participant::Couple(raw.couple.len()));
                raw.couple.push(RawCouple {
                    names: [a.to_string(), b.to_string()],
                    rol,
                });
            }
            ("progrol", Some(body)) => {
                let [name] = args[..] else {
                    return Err(syntax(lineno, "expected `progrol <name> : ...`"));
                };
                raw.progrol.push(RawProgRol {
                    name: name.to_string(),
                    rol: body.split_whitespace().map(str::to_string).collect(),
                });
            }
            _ => return Err(syntax(lineno, format!("unrecognised line `{line}`"))),
        }
    }
    if !saw_header {
        return Err(FormatError::MissingHeader);
    }
    raw.build(Some(&order))
}

pub fn write_text(inst: &Instance) -> String {
    use std::fmt::Write;
    let raw = RawInstance::from_instance(inst);
    let mut out = String::new();
    writeln!(out, "{HEADER}").unwrap();
    for p in &raw.program {
        writeln!(out, "program {} {}", p.name, p.quota).unwrap();
    }
    // Interleave singles and couples in doctor order.
    let mut si = raw.single.iter();
    let mut ci = raw.couple.iter();
    let mut emitted = vec![false; inst.num_doctors()];
    for d in inst.doctors() {
        if emitted[d.index()] {
            continue;
        }
        match inst.role(d) {
            crate::model::Role::Single(_) => {
                let s = si.next().expect("single order matches doctor order");
                write!(out, "single {} :", s.name).unwrap();
                for p in &s.rol {
                    write!(out, " {p}").unwrap();
                }
                out.push('\n');
                emitted[d.index()] = true;
            }
            crate::model::Role::Couple { couple, .. } => {
                let c = ci.next().expect("couple order matches doctor order");
                write!(out, "couple {} {} :", c.names[0], c.names[1]).unwrap();
                let pairs: Vec<String> = c.rol.iter().map(|[a, b]| format!("{a},{b}")).collect();
                if !pairs.is_empty() {
                    write!(out, " {}", pairs.join(" ; ")).unwrap();
                }
                out.push('\n');
                let cp = inst.couple(couple);
                emitted[cp.first.index()] = true;
                emitted[cp.second.index()] = true;
            }
        }
    }
    for pr in &raw.progrol {
        write!(out, "progrol {} :", pr.name).unwrap();
        for d in &pr.rol {
            write!(out, " {d}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_json(text: &str) -> Result<Instance, FormatError> {
    let raw: RawInstance = serde_json::from_str(text)?;
    if raw.format != HEADER {
        return Err(FormatError::MissingHeader);
    }
    raw.to_instance()
}

/// JSON mirror. Doctors are renumbered singles-first when read back, so ids
/// only survive a JSON round trip when singles precede couples.
pub fn write_json(inst: &Instance) -> String {
    serde_json::to_string_pretty(&RawInstance::from_instance(inst)).expect("plain data serializes")
}

/// Reads either format, choosing by the first non-blank character.
pub fn parse_any(text: &str) -> Result<Instance, FormatError> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_text(text)
    }
}

/// One line: `doctor=program ...` in doctor order.
pub fn write_matching(inst: &Instance, mu: &Matching) -> String {
    mu.display(inst).to_string()
}

pub fn parse_matching(inst: &Instance, line: &str) -> Result<Matching, FormatError> {
    let mut mu = Matching::unmatched(inst.num_doctors());
    for tok in line.split_whitespace() {
        let (d, p) = tok
            .split_once('=')
            .ok_or_else(|| syntax(1, format!("expected doctor=program, got `{tok}`")))?;
        let d = inst
            .find_doctor(d)
            .ok_or_else(|| FormatError::UnknownDoctor(d.to_string()))?;
        let p = if p == NIL_TOKEN {
            ProgramRef::Nil
        } else {
            ProgramRef::Program(
                inst.find_program(p)
                    .ok_or_else(|| FormatError::UnknownProgram(p.to_string()))?,
            )
        };
        mu.set(d, p);
    }
    Ok(mu)
}
