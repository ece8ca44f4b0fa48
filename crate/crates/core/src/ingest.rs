//! Event log ingestion.
//!
//! Events arrive as CSV rows `replicate_id,team,minutes,x_o,y_o,x_d,y_d` in
//! physical field units. Coordinates are standardized onto the half-open unit
//! square with every team attacking left to right.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use crate::error::{Error, Result};

/// Slack allowed outside the physical field before a coordinate is rejected.
pub const COORDINATE_SLACK: f64 = 1e-6;

/// Largest `f64` strictly below one.
pub const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

const HEADER: [&str; 7] = [
    "replicate_id",
    "team",
    "minutes",
    "x_o",
    "y_o",
    "x_d",
    "y_d",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackDirection {
    LeftToRight,
    RightToLeft,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldGeometry {
    pub length: f64,
    pub width: f64,
    pub attack_direction: AttackDirection,
}

impl Default for FieldGeometry {
    fn default() -> Self {
        Self {
            length: 115.0,
            width: 74.0,
            attack_direction: AttackDirection::LeftToRight,
        }
    }
}

impl FieldGeometry {
    pub fn new(length: f64, width: f64, attack_direction: AttackDirection) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) || !(width > 0.0 && width.is_finite()) {
            return Err(Error::Validation(format!(
                "field dimensions must be positive, got {length} x {width}"
            )));
        }
        Ok(Self {
            length,
            width,
            attack_direction,
        })
    }

    /// The unit square; standardizing against it leaves standardized
    /// coordinates untouched.
    pub fn unit() -> Self {
        Self {
            length: 1.0,
            width: 1.0,
            attack_direction: AttackDirection::LeftToRight,
        }
    }

    /// Maps a physical `(x, y)` onto `[0, 1)²`.
    pub fn standardize(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let x = match self.attack_direction {
            AttackDirection::LeftToRight => x,
            AttackDirection::RightToLeft => mirror_x(x, self.length),
        };
        let x = standardize_axis(x, self.length, "x")?;
        let y = standardize_axis(y, self.width, "y")?;
        Ok((x, y))
    }
}

fn standardize_axis(value: f64, extent: f64, axis: &'static str) -> Result<f64> {
    if !value.is_finite() || value < -COORDINATE_SLACK || value > extent + COORDINATE_SLACK {
        return Err(Error::OutOfRange {
            what: "coordinate",
            detail: format!("{axis} = {value} outside [0, {extent}]"),
        });
    }
    Ok(clamp_unit(value / extent))
}

/// Clamps into `[0, 1)`; the upper boundary moves to the largest float below one.
fn clamp_unit(v: f64) -> f64 {
    if v < 0.0 {
        0.0
    } else if v >= 1.0 {
        BELOW_ONE
    } else {
        v
    }
}

/// Mirrors a physical x coordinate across the halfway line.
pub fn mirror_x(x: f64, length: f64) -> f64 {
    length - x
}

/// A standardized pass. `replicate` indexes [`EventTable::replicates`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassEvent {
    pub replicate: usize,
    pub x_o: f64,
    pub y_o: f64,
    pub x_d: f64,
    pub y_d: f64,
}

impl PassEvent {
    pub fn coordinates(&self) -> [f64; 4] {
        [self.x_o, self.y_o, self.x_d, self.y_d]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub id: String,
    pub team: String,
    pub minutes_played: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventTable {
    events: Vec<PassEvent>,
    replicates: Vec<Replicate>,
}

impl EventTable {
    pub fn new(events: Vec<PassEvent>, replicates: Vec<Replicate>) -> Result<Self> {
        let mut seen = HashMap::with_capacity(replicates.len());
        for (i, rep) in replicates.iter().enumerate() {
            if seen.insert(rep.id.as_str(), i).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate replicate id `{}`",
                    rep.id
                )));
            }
            if !(rep.minutes_played >= 0.0 && rep.minutes_played.is_finite()) {
                return Err(Error::Validation(format!(
                    "replicate `{}` has invalid minutes {}",
                    rep.id, rep.minutes_played
                )));
            }
        }
        for ev in &events {
            if ev.replicate >= replicates.len() {
                return Err(Error::Validation(format!(
                    "event references unknown replicate #{}",
                    ev.replicate
                )));
            }
            if ev.coordinates().iter().any(|c| !(0.0..1.0).contains(c)) {
                return Err(Error::OutOfRange {
                    what: "standardized coordinate",
                    detail: format!("{:?}", ev.coordinates()),
                });
            }
        }
        Ok(Self { events, replicates })
    }

    pub fn events(&self) -> &[PassEvent] {
        &self.events
    }

    pub fn replicates(&self) -> &[Replicate] {
        &self.replicates
    }

    pub fn replicate_index(&self, id: &str) -> Option<usize> {
        self.replicates.iter().position(|r| r.id == id)
    }

    /// Re-standardizes every event against `geometry`, treating the current
    /// coordinates as physical.
    pub fn standardized(&self, geometry: &FieldGeometry) -> Result<Self> {
        let events = self
            .events
            .iter()
            .map(|ev| {
                let (x_o, y_o) = geometry.standardize(ev.x_o, ev.y_o)?;
                let (x_d, y_d) = geometry.standardize(ev.x_d, ev.y_d)?;
                Ok(PassEvent {
                    replicate: ev.replicate,
                    x_o,
                    y_o,
                    x_d,
                    y_d,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            events,
            replicates: self.replicates.clone(),
        })
    }

    /// Merges replicates sharing a team label into one replicate per team,
    /// summing minutes. Team order follows first appearance.
    pub fn aggregate_by_team(&self) -> Self {
        let mut teams: Vec<Replicate> = Vec::new();
        let mut team_of = Vec::with_capacity(self.replicates.len());
        for rep in &self.replicates {
            match teams.iter().position(|t| t.id == rep.team) {
                Some(i) => {
                    teams[i].minutes_played += rep.minutes_played;
                    team_of.push(i);
                }
                None => {
                    team_of.push(teams.len());
                    teams.push(Replicate {
                        id: rep.team.clone(),
                        team: rep.team.clone(),
                        minutes_played: rep.minutes_played,
                    });
                }
            }
        }
        let events = self
            .events
            .iter()
            .map(|ev| PassEvent {
                replicate: team_of[ev.replicate],
                ..*ev
            })
            .collect();
        Self {
            events,
            replicates: teams,
        }
    }
}

/// Parses a CSV event log and standardizes it against `geometry`.
///
/// A row whose four coordinate fields are all empty registers its replicate
/// without contributing an event.
pub fn parse_events<R: Read>(source: R, geometry: &FieldGeometry) -> Result<EventTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    if headers.len() != HEADER.len() || headers.iter().zip(HEADER).any(|(a, b)| a != b) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", HEADER.join(",")),
        });
    }

    let mut replicates: Vec<Replicate> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut events = Vec::new();

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            csv_error(e, line)
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", HEADER.len(), record.len()),
            });
        }
        let id = &record[0];
        let team = &record[1];
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty replicate_id".into(),
            });
        }
        let minutes = parse_number(&record[2], "minutes", line)?;

        let rep = match index.get(id) {
            Some(&i) => {
                let known = &replicates[i];
                if known.team != team || known.minutes_played != minutes {
                    return Err(Error::Validation(format!(
                        "line {line}: replicate `{id}` redeclared with different team or minutes"
                    )));
                }
                i
            }
            None => {
                if !(minutes >= 0.0) {
                    return Err(Error::Validation(format!(
                        "line {line}: negative minutes {minutes}"
                    )));
                }
                replicates.push(Replicate {
                    id: id.to_owned(),
                    team: team.to_owned(),
                    minutes_played: minutes,
                });
                index.insert(id.to_owned(), replicates.len() - 1);
                replicates.len() - 1
            }
        };

        let coords: Vec<&str> = (3..7).map(|k| &record[k]).collect();
        if coords.iter().all(|c| c.is_empty()) {
            continue;
        }
        let mut values = [0.0; 4];
        for (k, (slot, raw)) in values.iter_mut().zip(&coords).enumerate() {
            *slot = parse_number(raw, HEADER[3 + k], line)?;
        }
        let (x_o, y_o) = geometry
            .standardize(values[0], values[1])
            .map_err(|e| at_line(e, line))?;
        let (x_d, y_d) = geometry
            .standardize(values[2], values[3])
            .map_err(|e| at_line(e, line))?;
        events.push(PassEvent {
            replicate: rep,
            x_o,
            y_o,
            x_d,
            y_d,
        });
    }

    EventTable::new(events, replicates)
}

fn parse_number(raw: &str, field: &str, line: usize) -> Result<f64> {
    raw.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("field `{field}`: cannot parse `{raw}` as a number"),
    })
}

fn csv_error(e: csv::Error, line: usize) -> Error {
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn at_line(e: Error, line: usize) -> Error {
    match e {
        Error::OutOfRange { what, detail } => Error::OutOfRange {
            what,
            detail: format!("line {line}: {detail}"),
        },
        other => other,
    }
}

/// Exposure factors `reference / minutes_played` per replicate id.
///
/// Without a reference, the mean of `minutes_played` over the table's
/// replicates is used; aggregate with [`EventTable::aggregate_by_team`] first
/// to get per-team totals.
pub fn exposure_factors(
    table: &EventTable,
    reference_minutes: Option<f64>,
) -> Result<BTreeMap<String, f64>> {
    let reps = table.replicates();
    if let Some(zero) = reps.iter().find(|r| r.minutes_played <= 0.0) {
        return Err(Error::ZeroMinutes {
            replicate: zero.id.clone(),
        });
    }
    let reference = match reference_minutes {
        Some(r) if r >= 0.0 && r.is_finite() => r,
        Some(r) => return Err(Error::Validation(format!("invalid reference minutes {r}"))),
        None if reps.is_empty() => return Ok(BTreeMap::new()),
        None => reps.iter().map(|r| r.minutes_played).sum::<f64>() / reps.len() as f64,
    };
    Ok(reps
        .iter()
        .map(|r| (r.id.clone(), reference / r.minutes_played))
        .collect())
}
