//! Parameter sweeps over `(p, gamma)` grids for one attack.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::baselines::{build_single_tree_chain, honest_errev, single_tree_errev, TreeParams};
use crate::model::{AttackParams, HonestArrival, DEFAULT_MAX_STATES};
use crate::par::{self, Exec};
use crate::revenue::{compute_errev, RevenueConfig, DEFAULT_EPSILON};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackKind {
    Ours,
    SingleTree,
    Honest,
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::Ours => "ours",
            AttackKind::SingleTree => "single-tree",
            AttackKind::Honest => "honest",
        })
    }
}

impl FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ours" => Ok(AttackKind::Ours),
            "single-tree" => Ok(AttackKind::SingleTree),
            "honest" => Ok(AttackKind::Honest),
            _ => Err(format!("unknown attack {s:?} (expected ours, single-tree or honest)")),
        }
    }
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let number = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("not a number: {s:?}"));
    let values = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(format!("expected start:stop:step, got {text:?}"));
        };
        let (start, stop, step) = (number(start)?, number(stop)?, number(step)?);
        if !(step > 0.0) || stop < start {
            return Err(format!("empty or unbounded range {text:?}"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect()
    } else {
        text.split(',').map(number).collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() {
        return Err("empty grid".into());
    }
    if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(format!("grid value {bad} is not in [0, 1]"));
    }
    Ok(values)
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub attack: AttackKind,
    pub ps: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Attack depth; ignored by the baselines.
    pub d: usize,
    /// Forking number, or tree width for the single-tree baseline.
    pub f: usize,
    /// Maximal fork length, or tree depth for the single-tree baseline.
    pub l: usize,
    pub epsilon: f64,
    pub arrival: HonestArrival,
    pub max_states: usize,
}

impl SweepSpec {
    pub fn new(attack: AttackKind, ps: Vec<f64>, gammas: Vec<f64>, d: usize, f: usize, l: usize) -> Self {
        Self {
            attack,
            ps,
            gammas,
            d,
            f,
            l,
            epsilon: DEFAULT_EPSILON,
            arrival: HonestArrival::default(),
            max_states: DEFAULT_MAX_STATES,
        }
    }

    /// Grid points, `p` major.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.ps
            .iter()
            .flat_map(|&p| self.gammas.iter().map(move |&g| (p, g)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub attack: AttackKind,
    pub p: f64,
    pub gamma: f64,
    pub d: Option<usize>,
    pub f: Option<usize>,
    pub l: Option<usize>,
    pub errev: Option<f64>,
    pub epsilon: f64,
    pub states: Option<usize>,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

impl SweepRow {
    pub const HEADER: [&'static str; 10] = ["attack", "p", "gamma", "d", "f", "l", "errev", "epsilon", "states", "wall_time_s"];

    pub fn fields(&self) -> [String; 10] {
        let opt = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
        [
            self.attack.to_string(),
            self.p.to_string(),
            self.gamma.to_string(),
            opt(self.d),
            opt(self.f),
            opt(self.l),
            self.errev.map(|v| v.to_string()).unwrap_or_default(),
            self.epsilon.to_string(),
            opt(self.states),
            format!("{:.6}", self.wall_time_s),
        ]
    }
}

fn run_point(spec: &SweepSpec, p: f64, gamma: f64) -> SweepRow {
    let start = Instant::now();
    let mut row = SweepRow {
        attack: spec.attack,
        p,
        gamma,
        d: None,
        f: None,
        l: None,
        errev: None,
        epsilon: 0.0,
        states: None,
        wall_time_s: 0.0,
        error: None,
    };
    let result: Result<(f64, Option<usize>), String> = match spec.attack {
        AttackKind::Honest => honest_errev(p).map(|v| (v, None)).map_err(|e| e.to_string()),
        AttackKind::SingleTree => {
            row.f = Some(spec.f);
            row.l = Some(spec.l);
            TreeParams::new(p, gamma, spec.l, spec.f)
                .and_then(|tp| {
                    let states = build_single_tree_chain(&tp)?.1.len();
                    Ok((single_tree_errev(&tp, 1e-10)?, Some(states)))
                })
                .map_err(|e| e.to_string())
        }
        AttackKind::Ours => {
            row.d = Some(spec.d);
            row.f = Some(spec.f);
            row.l = Some(spec.l);
            row.epsilon = spec.epsilon;
            let config = RevenueConfig {
                epsilon: spec.epsilon,
                max_states: spec.max_states,
                ..RevenueConfig::default()
            };
            AttackParams::new(p, gamma, spec.d, spec.f, spec.l)
                .map_err(|e| e.to_string())
                .and_then(|params| {
                    compute_errev(&params.with_arrival(spec.arrival), &config)
                        .map(|r| (r.errev_lower, Some(r.state_count)))
                        .map_err(|e| e.to_string())
                })
        }
    };
    match result {
        Ok((errev, states)) => {
            row.errev = Some(errev);
            row.states = states;
        }
        Err(e) => row.error = Some(e),
    }
    row.wall_time_s = start.elapsed().as_secs_f64();
    row
}

/// Evaluates every grid point; rows come back in grid order.
pub fn run_sweep(spec: &SweepSpec, exec: Exec) -> Vec<SweepRow> {
    par::map_slice(&spec.points(), exec, |&(p, g)| run_point(spec, p, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:0.3:0.1").unwrap(), vec![0.0, 0.1, 0.2, 0.3]);
        assert_eq!(parse_grid("0:0.3:0.05").unwrap().len(), 7);
        assert_eq!(parse_grid("0.5").unwrap(), vec![0.5]);
        assert_eq!(parse_grid("0,1").unwrap(), vec![0.0, 1.0]);
        for bad in ["", "0:1", "0.3:0:0.1", "0:1:0", "1.5", "a,b"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn honest_rows() {
        let spec = SweepSpec::new(AttackKind::Honest, parse_grid("0:0.3:0.1").unwrap(), vec![0.0, 1.0], 1, 1, 4);
        let rows = run_sweep(&spec, Exec::Sequential);
        assert_eq!(rows.len(), 8);
        for r in &rows {
            assert_eq!(r.errev, Some(r.p));
        }
        assert_eq!((rows[0].p, rows[0].gamma, rows[1].gamma), (0.0, 0.0, 1.0));
    }

    #[test]
    fn failures_leave_errev_empty() {
        let mut spec = SweepSpec::new(AttackKind::Ours, vec![0.2], vec![0.5], 2, 2, 4);
        spec.max_states = 10;
        let rows = run_sweep(&spec, Exec::Sequential);
        assert!(rows[0].errev.is_none() && rows[0].error.is_some());
        assert_eq!(rows[0].fields()[6], "");
    }
}
