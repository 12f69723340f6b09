//! Shared plumbing: reading sources, binding data files and building a
//! runtime against the chosen engine.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use fpgavirt_core::engine::StateMachineEngine;
use fpgavirt_core::frontend::Pos;
use fpgavirt_core::host::TaskHost;
use fpgavirt_core::program::Init;
use fpgavirt_core::runtime::Runtime;
use fpgavirt_core::stimulus::Stimulus;
use fpgavirt_core::transform::{compile_source, Compiled};
use fpgavirt_hypervisor::{RemoteConnector, RemoteEngine};

use crate::error::{CliError, Result};

/// Source files concatenated in order. `spans` maps the first line of
/// each file in `text` back to its path.
pub struct Sources {
    pub text: String,
    spans: Vec<(u32, String)>,
}

impl Sources {
    pub fn read(paths: &[PathBuf]) -> Result<Sources> {
        if paths.is_empty() {
            return Err(CliError::user("no source files given"));
        }
        let mut text = String::new();
        let mut spans = Vec::new();
        for p in paths {
            let s = std::fs::read_to_string(p)
                .map_err(|e| CliError::user(format!("{}: {e}", p.display())))?;
            spans.push((text.lines().count() as u32 + 1, p.display().to_string()));
            text.push_str(&s);
            if !s.ends_with('\n') {
                text.push('\n');
            }
        }
        Ok(Sources { text, spans })
    }

    pub fn compile(&self, top: Option<&str>) -> Result<Arc<Compiled>> {
        compile_source(&self.text, top).map_err(|mut d| {
            let file = match d.pos {
                Some(p) => {
                    let (first, name) = self.spans.iter().rev().find(|(l, _)| *l <= p.line).unwrap_or(&self.spans[0]);
                    d.pos = Some(Pos {
                        line: p.line - first + 1,
                        col: p.col,
                    });
                    name.clone()
                }
                None => self.spans[0].1.clone(),
            };
            CliError::User(d.render(&file))
        })
    }
}

/// Where the program's engine lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Local,
    Hypervisor(String),
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Target, String> {
        match s {
            "" => Err("empty engine target".into()),
            "local" => Ok(Target::Local),
            _ => Ok(Target::Hypervisor(s.to_string())),
        }
    }
}

/// `NAME=PATH` binds `$fopen("NAME")`; a bare `PATH` takes the next
/// unbound `$fopen` name in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataBinding {
    pub name: Option<String>,
    pub path: PathBuf,
}

impl FromStr for DataBinding {
    type Err = String;

    fn from_str(s: &str) -> Result<DataBinding, String> {
        match s.split_once('=') {
            Some((n, p)) if !n.is_empty() && !p.is_empty() => Ok(DataBinding {
                name: Some(n.to_string()),
                path: p.into(),
            }),
            Some(_) => Err(format!("bad data binding '{s}'")),
            None => Ok(DataBinding {
                name: None,
                path: s.into(),
            }),
        }
    }
}

pub fn fopen_names(c: &Compiled) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for d in c.program.decls.values() {
        if let Init::Fopen(n) = &d.init {
            if !names.contains(n) {
                names.push(n.clone());
            }
        }
    }
    names
}

pub fn host(c: &Compiled, data: &[DataBinding]) -> Result<TaskHost> {
    let mut h = TaskHost::new();
    let mut free = fopen_names(c).into_iter();
    for b in data {
        let name = match &b.name {
            Some(n) => n.clone(),
            None => free.next().ok_or_else(|| {
                CliError::user(format!("no $fopen left to bind {} to", b.path.display()))
            })?,
        };
        h.bind(name, &b.path);
    }
    Ok(h)
}

pub fn runtime(
    compiled: Arc<Compiled>,
    source: &str,
    target: &Target,
    host: TaskHost,
    stim: Stimulus,
    clock: Option<&str>,
) -> Result<Runtime> {
    let engine: Box<dyn fpgavirt_core::engine::Engine> = match target {
        Target::Local => Box::new(StateMachineEngine::new(Arc::clone(&compiled))),
        Target::Hypervisor(addr) => Box::new(RemoteEngine::connect(addr.as_str(), source)?),
    };
    Ok(Runtime::new(compiled, engine, host, stim, clock)?
        .with_connector(Box::new(RemoteConnector::new(source.to_string()))))
}

pub fn read_script(path: &Path) -> Result<Stimulus> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
    Stimulus::parse(&text).map_err(|e| CliError::user(format!("{}: {e}", path.display())))
}
