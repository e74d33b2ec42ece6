//! JSON form of systems: row-major matrices, families by name or table.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NonlinearBlock, NonlinearityFamily, PersidskiiSystem, ScalarNonlinearity, Table, UnitBounds};
use crate::linalg::rowmajor;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComponentJson {
    Name(String),
    Table { tabulated: Table },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilyJson {
    PerComponent(Vec<ComponentJson>),
    Uniform(ComponentJson),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockJson {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
    pub family: FamilyJson,
    /// Per-component bounds per unit Λ; required for families without built-ins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<UnitBounds>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub relaxed_sector: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemJson {
    #[serde(rename = "A0")]
    pub a0: Vec<Vec<f64>>,
    #[serde(default)]
    pub blocks: Vec<BlockJson>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
}

fn component(c: &ComponentJson) -> Result<ScalarNonlinearity, String> {
    match c {
        ComponentJson::Name(s) => ScalarNonlinearity::parse(s),
        ComponentJson::Table { tabulated } => {
            Ok(ScalarNonlinearity::Tabulated(Table::new(tabulated.nu.clone(), tabulated.f.clone())?))
        }
    }
}

impl SystemJson {
    pub fn to_system(&self) -> Result<PersidskiiSystem, String> {
        let a0 = rowmajor::from_rows(&self.a0)?;
        let c = rowmajor::from_rows(&self.c)?;
        let mut blocks = Vec::new();
        for (j, b) in self.blocks.iter().enumerate() {
            let a = rowmajor::from_rows(&b.a)?;
            let h = rowmajor::from_rows(&b.h)?;
            let k = h.nrows();
            let comps = match &b.family {
                FamilyJson::Uniform(c) => vec![component(c)?; k],
                FamilyJson::PerComponent(cs) => cs.iter().map(component).collect::<Result<Vec<_>, _>>()?,
            };
            let mut family = match &b.bounds {
                Some(bs) => NonlinearityFamily::with_bounds(comps, bs.clone()),
                None => NonlinearityFamily::new(comps),
            }
            .map_err(|e| format!("block {j}: {e}"))?;
            family.relaxed_sector = b.relaxed_sector;
            blocks.push(NonlinearBlock { a, h, family });
        }
        Ok(PersidskiiSystem::new(a0, blocks, c))
    }

    pub fn from_system(sys: &PersidskiiSystem) -> Result<Self, String> {
        let blocks = sys
            .blocks
            .iter()
            .map(|b| {
                let comps = b
                    .family
                    .components
                    .iter()
                    .map(|c| match c {
                        ScalarNonlinearity::Tabulated(t) => Ok(ComponentJson::Table { tabulated: t.clone() }),
                        ScalarNonlinearity::Custom(f) => Err(format!("custom function {} has no JSON form", f.name)),
                        other => Ok(ComponentJson::Name(other.descriptor())),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let defaults: Option<Vec<UnitBounds>> =
                    b.family.components.iter().map(|c| c.default_unit_bounds()).collect();
                let bounds = if defaults.as_ref() == Some(&b.family.unit_bounds) {
                    None
                } else {
                    Some(b.family.unit_bounds.clone())
                };
                Ok(BlockJson {
                    a: rowmajor::to_rows(&b.a),
                    h: rowmajor::to_rows(&b.h),
                    family: FamilyJson::PerComponent(comps),
                    bounds,
                    relaxed_sector: b.family.relaxed_sector,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        Ok(Self { a0: rowmajor::to_rows(&sys.a0), blocks, c: rowmajor::to_rows(&sys.c) })
    }
}

pub fn system_from_json(text: &str) -> Result<PersidskiiSystem, String> {
    let sj: SystemJson = serde_json::from_str(text).map_err(|e| format!("invalid system JSON: {e}"))?;
    sj.to_system()
}

pub fn system_to_json(sys: &PersidskiiSystem) -> Result<String, String> {
    serde_json::to_string_pretty(&SystemJson::from_system(sys)?).map_err(|e| e.to_string())
}

pub fn read_system(path: &Path) -> Result<PersidskiiSystem, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    system_from_json(&text)
}
