use std::fmt::Write as _;

use crate::integrator::Trajectory;

/// Trajectory samples as stored on disk: followers first, then leaders,
/// one state block per grid time.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryTable {
    pub d: usize,
    pub n_followers: usize,
    pub n_leaders: usize,
    pub times: Vec<f64>,
    /// Row-major `[stamp][entity][coordinate]`.
    pub states: Vec<f64>,
}

impl TrajectoryTable {
    pub fn from_trajectory(trajectory: &Trajectory) -> Self {
        let b = &trajectory.buffer;
        let states = (0..b.len()).flat_map(|s| b.state_slice(s).iter().copied()).collect();
        TrajectoryTable {
            d: b.dim(),
            n_followers: b.follower_count(),
            n_leaders: b.entity_count() - b.follower_count(),
            times: b.times().to_vec(),
            states,
        }
    }

    pub fn entity_count(&self) -> usize {
        self.n_followers + self.n_leaders
    }

    pub fn entity_at(&self, stamp: usize, entity: usize) -> &[f64] {
        let base = (stamp * self.entity_count() + entity) * self.d;
        &self.states[base..base + self.d]
    }

    pub fn is_leader(&self, entity: usize) -> bool {
        entity >= self.n_followers
    }
}

/// `{:.16e}` carries 17 significant digits, enough to round-trip any f64.
pub fn write_csv(table: &TrajectoryTable) -> String {
    let mut out = String::from("t,entity,kind");
    for k in 0..table.d {
        let _ = write!(out, ",c{k}");
    }
    out.push('\n');
    for (s, t) in table.times.iter().enumerate() {
        for e in 0..table.entity_count() {
            let kind = if table.is_leader(e) { "leader" } else { "follower" };
            let _ = write!(out, "{t:.16e},{e},{kind}");
            for x in table.entity_at(s, e) {
                let _ = write!(out, ",{x:.16e}");
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct CsvError {
    pub line: usize,
    pub message: String,
}

fn csv_err(line: usize, message: impl Into<String>) -> CsvError {
    CsvError {
        line,
        message: message.into(),
    }
}

pub fn parse_csv(text: &str) -> Result<TrajectoryTable, CsvError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| csv_err(1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 4 || cols[..3] != ["t", "entity", "kind"] {
        return Err(csv_err(1, "header must start with t,entity,kind,c0"));
    }
    for (k, c) in cols[3..].iter().enumerate() {
        if *c != format!("c{k}") {
            return Err(csv_err(1, format!("expected column c{k}, found {c}")));
        }
    }
    let d = cols.len() - 3;

    let mut times: Vec<f64> = Vec::new();
    let mut states = Vec::new();
    let mut kinds: Vec<bool> = Vec::new();
    let mut entity_count: Option<usize> = None;
    let mut next_entity = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 + d {
            return Err(csv_err(lineno, format!("expected {} fields, got {}", 3 + d, fields.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64, CsvError> {
            s.parse::<f64>()
                .map_err(|_| csv_err(lineno, format!("bad {what} value \"{s}\"")))
        };
        let t = num(fields[0], "t")?;
        let entity: usize = fields[1]
            .parse()
            .map_err(|_| csv_err(lineno, format!("bad entity \"{}\"", fields[1])))?;
        let leader = match fields[2] {
            "follower" => false,
            "leader" => true,
            other => return Err(csv_err(lineno, format!("unknown kind \"{other}\""))),
        };

        if entity == 0 {
            if let Some(last) = times.last() {
                if entity_count.is_none() {
                    entity_count = Some(next_entity);
                }
                if next_entity != entity_count.unwrap() {
                    return Err(csv_err(lineno, "incomplete time block before this row"));
                }
                if t <= *last {
                    return Err(csv_err(lineno, "times must increase"));
                }
            }
            times.push(t);
            next_entity = 0;
        } else if times.last() != Some(&t) {
            return Err(csv_err(lineno, "entity rows of one time must share t"));
        }
        if entity != next_entity {
            return Err(csv_err(lineno, format!("expected entity {next_entity}, got {entity}")));
        }
        match entity_count {
            None => kinds.push(leader),
            Some(count) => {
                if entity >= count || kinds[entity] != leader {
                    return Err(csv_err(lineno, "entity layout differs from the first time block"));
                }
            }
        }
        for (k, s) in fields[3..].iter().enumerate() {
            states.push(num(s, &format!("c{k}"))?);
        }
        next_entity += 1;
    }
    let count = entity_count.unwrap_or(next_entity);
    if times.is_empty() {
        return Err(csv_err(2, "no data rows"));
    }
    if next_entity != count {
        return Err(csv_err(text.lines().count(), "last time block is incomplete"));
    }
    let n_followers = kinds.iter().take_while(|l| !**l).count();
    if kinds[n_followers..].iter().any(|l| !l) {
        return Err(csv_err(2, "followers must precede leaders"));
    }
    Ok(TrajectoryTable {
        d,
        n_followers,
        n_leaders: count - n_followers,
        times,
        states,
    })
}
