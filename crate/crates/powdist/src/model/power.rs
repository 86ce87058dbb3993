//! Per-node power lookup tables and candidate power-bound sets.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// One measured operating point: power draw with `cores` active at `freq_mhz`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PowerEntry {
    pub cores: u32,
    pub freq_mhz: u32,
    pub power_mw: u32,
}

#[derive(Debug, Clone)]
struct NodePower {
    idle_mw: u32,
    entries: Vec<PowerEntry>,
}

/// Lookup table mapping (active cores, frequency) to power draw per node,
/// plus the idle power. Immutable after construction.
#[derive(Debug, Clone)]
pub struct PowerTable {
    nodes: BTreeMap<u32, NodePower>,
}

impl PowerTable {
    /// Builds a table from `(node, idle_mw)` pairs and entry rows, validating
    /// that power strictly increases with frequency at a fixed core count and
    /// that idle power sits below every operating point.
    pub fn new(idle: Vec<(u32, u32)>, entries: Vec<(u32, PowerEntry)>) -> Result<Self> {
        let mut nodes: BTreeMap<u32, NodePower> = BTreeMap::new();
        for (node, idle_mw) in idle {
            if nodes
                .insert(node, NodePower { idle_mw, entries: Vec::new() })
                .is_some()
            {
                return Err(Error::Validation(format!("node {node}: duplicate idle row")));
            }
        }
        for (node, entry) in entries {
            let slot = nodes
                .get_mut(&node)
                .ok_or_else(|| Error::Validation(format!("node {node}: entry without idle row")))?;
            if entry.freq_mhz == 0 {
                return Err(Error::Validation(format!("node {node}: frequency must be > 0")));
            }
            if entry.cores == 0 {
                return Err(Error::Validation(format!("node {node}: core count must be > 0")));
            }
            slot.entries.push(entry);
        }
        for (node, np) in &mut nodes {
            if np.entries.is_empty() {
                return Err(Error::Validation(format!("node {node}: no power entries")));
            }
            np.entries.sort_by_key(|e| (e.cores, e.freq_mhz));
            for pair in np.entries.windows(2) {
                if pair[0].cores == pair[1].cores {
                    if pair[0].freq_mhz == pair[1].freq_mhz {
                        return Err(Error::Validation(format!(
                            "node {node}: duplicate entry at {} cores, {} MHz",
                            pair[0].cores, pair[0].freq_mhz
                        )));
                    }
                    if pair[0].power_mw >= pair[1].power_mw {
                        return Err(Error::Validation(format!(
                            "node {node}: power must strictly increase with frequency at {} cores",
                            pair[0].cores
                        )));
                    }
                }
            }
            let min_power = np.entries.iter().map(|e| e.power_mw).min().unwrap();
            if np.idle_mw >= min_power {
                return Err(Error::Validation(format!(
                    "node {node}: idle power {} mW must lie below the minimum operating power {} mW",
                    np.idle_mw, min_power
                )));
            }
        }
        Ok(PowerTable { nodes })
    }

    pub fn node_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.nodes.keys().copied()
    }

    pub fn has_node(&self, node: u32) -> bool {
        self.nodes.contains_key(&node)
    }

    fn node(&self, node: u32) -> Result<&NodePower> {
        self.nodes
            .get(&node)
            .ok_or_else(|| Error::Validation(format!("power table has no node {node}")))
    }

    pub fn idle_power(&self, node: u32) -> Result<u32> {
        Ok(self.node(node)?.idle_mw)
    }

    /// Power draw with `cores` active at `freq_mhz`, if tabulated.
    pub fn power(&self, node: u32, cores: u32, freq_mhz: u32) -> Result<u32> {
        self.node(node)?
            .entries
            .iter()
            .find(|e| e.cores == cores && e.freq_mhz == freq_mhz)
            .map(|e| e.power_mw)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "node {node}: no table entry for {cores} cores at {freq_mhz} MHz"
                ))
            })
    }

    /// Highest single-core frequency whose power fits under `bound_mw`.
    pub fn max_freq_within(&self, node: u32, bound_mw: u32) -> Result<u32> {
        let np = self.node(node)?;
        np.entries
            .iter()
            .filter(|e| e.cores == 1 && e.power_mw <= bound_mw)
            .map(|e| e.freq_mhz)
            .max()
            .ok_or_else(|| Error::NoAdmissibleFrequency {
                node,
                bound_mw,
                min_mw: self.min_operating_power(node).unwrap_or(0),
            })
    }

    /// Single-core power at an exact frequency.
    pub fn power_at_freq(&self, node: u32, freq_mhz: u32) -> Result<u32> {
        self.power(node, 1, freq_mhz)
    }

    /// Highest single-core frequency of the node.
    pub fn top_freq(&self, node: u32) -> Result<u32> {
        Ok(self
            .node(node)?
            .entries
            .iter()
            .filter(|e| e.cores == 1)
            .map(|e| e.freq_mhz)
            .max()
            .ok_or_else(|| Error::Validation(format!("node {node}: no single-core entries")))?)
    }

    /// Lowest single-core operating power of the node.
    pub fn min_operating_power(&self, node: u32) -> Result<u32> {
        Ok(self
            .node(node)?
            .entries
            .iter()
            .filter(|e| e.cores == 1)
            .map(|e| e.power_mw)
            .min()
            .ok_or_else(|| Error::Validation(format!("node {node}: no single-core entries")))?)
    }

    /// Single-core powers ascending; the candidate bound list for one node.
    pub fn single_core_powers(&self, node: u32) -> Result<Vec<u32>> {
        let mut powers: Vec<u32> = self
            .node(node)?
            .entries
            .iter()
            .filter(|e| e.cores == 1)
            .map(|e| e.power_mw)
            .collect();
        powers.sort_unstable();
        Ok(powers)
    }
}

/// Finite candidate power bounds per node, one per supported single-core
/// frequency, sorted ascending.
#[derive(Debug, Clone)]
pub struct PowerBoundSet {
    per_node: BTreeMap<u32, Vec<u32>>,
}

impl PowerBoundSet {
    pub fn from_table(table: &PowerTable) -> Result<Self> {
        let mut per_node = BTreeMap::new();
        for node in table.node_ids() {
            let bounds = table.single_core_powers(node)?;
            if bounds.is_empty() {
                return Err(Error::Validation(format!("node {node}: empty power bound set")));
            }
            per_node.insert(node, bounds);
        }
        Ok(PowerBoundSet { per_node })
    }

    pub fn bounds(&self, node: u32) -> Result<&[u32]> {
        self.per_node
            .get(&node)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Validation(format!("no power bounds for node {node}")))
    }

    pub fn node_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.per_node.keys().copied()
    }
}

/// Parses the power table CSV: header `node,cores,freq_mhz,power_mw`, one
/// `node,idle,,<power_mw>` row per node for the idle draw.
pub fn parse_power_table(text: &str) -> Result<PowerTable> {
    let mut idle: Vec<(u32, u32)> = Vec::new();
    let mut entries: Vec<(u32, PowerEntry)> = Vec::new();
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty power table".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["node", "cores", "freq_mhz", "power_mw"] {
        return Err(Error::Parse {
            line: 1,
            msg: "expected header: node,cores,freq_mhz,power_mw".into(),
        });
    }

    for (lineno, raw) in lines {
        let line = lineno + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = content.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let node: u32 = fields[0].parse().map_err(|_| Error::Parse {
            line,
            msg: format!("invalid node id '{}'", fields[0]),
        })?;
        let power: u32 = fields[3].parse().map_err(|_| Error::Parse {
            line,
            msg: format!("invalid power '{}'", fields[3]),
        })?;
        if fields[1] == "idle" {
            if !fields[2].is_empty() {
                return Err(Error::Parse {
                    line,
                    msg: "idle row must leave freq_mhz empty".into(),
                });
            }
            idle.push((node, power));
        } else {
            let cores: u32 = fields[1].parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid core count '{}'", fields[1]),
            })?;
            let freq: u32 = fields[2].parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid frequency '{}'", fields[2]),
            })?;
            entries.push((
                node,
                PowerEntry {
                    cores,
                    freq_mhz: freq,
                    power_mw: power,
                },
            ));
        }
    }
    PowerTable::new(idle, entries)
}
