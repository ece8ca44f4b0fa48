use ndarray::Array2;

use crate::error::{Error, Result};
use crate::ingest::{exposure_factors, EventTable};
use crate::mrencode::{adjacency_at_scale, build_tensor};

/// `Σ|u − v| / Σ(u + v)` for nonnegative vectors.
pub fn bray_curtis(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    if u.iter().chain(v).any(|&a| !(a.is_finite() && a >= 0.0)) {
        return Err(Error::Validation(
            "Bray-Curtis needs finite nonnegative entries".into(),
        ));
    }
    let (mut diff, mut total) = (0.0, 0.0);
    for (&a, &b) in u.iter().zip(v) {
        diff += (a - b).abs();
        total += a + b;
    }
    if total == 0.0 {
        return Err(Error::EmptyComparison);
    }
    Ok(diff / total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityMatrix {
    pub labels: Vec<String>,
    pub values: Array2<f64>,
    pub scale: usize,
}

impl DissimilarityMatrix {
    /// Labeled square CSV; the first header cell is empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        let mut header = vec![String::new()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for (label, row) in self.labels.iter().zip(self.values.rows()) {
            let mut record = vec![label.clone()];
            record.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&record).map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Pairwise Bray-Curtis between teams at scale `s`, after aggregating each
/// team's replicates and scaling its counts by `reference / minutes`.
/// `reference_minutes` defaults to the mean of the per-team minutes.
pub fn dissimilarity_matrix(
    table: &EventTable,
    s: usize,
    reference_minutes: Option<f64>,
) -> Result<DissimilarityMatrix> {
    let teams = table.aggregate_by_team();
    let exposure = exposure_factors(&teams, reference_minutes)?;
    let tensor = build_tensor(&teams, s)?;
    let mut vectors = Vec::with_capacity(teams.replicates().len());
    for (n, team) in teams.replicates().iter().enumerate() {
        let adj = adjacency_at_scale(&tensor, n, s)?;
        if adj.sum() == 0.0 {
            return Err(Error::Validation(format!(
                "team `{}` has no passes",
                team.id
            )));
        }
        let factor = exposure[&team.id];
        vectors.push(adj.iter().map(|&c| c * factor).collect::<Vec<_>>());
    }
    let k = vectors.len();
    let mut values = Array2::zeros((k, k));
    for a in 0..k {
        for b in a + 1..k {
            let d = bray_curtis(&vectors[a], &vectors[b])?;
            values[[a, b]] = d;
            values[[b, a]] = d;
        }
    }
    Ok(DissimilarityMatrix {
        labels: teams.replicates().iter().map(|r| r.id.clone()).collect(),
        values,
        scale: s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{PassEvent, Replicate};
    use proptest::prelude::*;

    #[test]
    fn worked_values() {
        assert_eq!(bray_curtis(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(bray_curtis(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!((bray_curtis(&[2.0, 1.0], &[1.0, 1.0]).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(
            bray_curtis(&[0.0], &[0.0]),
            Err(Error::EmptyComparison)
        ));
        assert!(bray_curtis(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn rep(id: &str, team: &str, minutes: f64) -> Replicate {
        Replicate {
            id: id.into(),
            team: team.into(),
            minutes_played: minutes,
        }
    }

    fn pass(replicate: usize, x_o: f64, y_o: f64, x_d: f64, y_d: f64) -> PassEvent {
        PassEvent {
            replicate,
            x_o,
            y_o,
            x_d,
            y_d,
        }
    }

    #[test]
    fn doubled_team_gives_one_third() {
        let mut events = vec![pass(0, 0.1, 0.1, 0.6, 0.7), pass(0, 0.9, 0.2, 0.3, 0.3)];
        for _ in 0..2 {
            events.push(pass(1, 0.1, 0.1, 0.6, 0.7));
            events.push(pass(1, 0.9, 0.2, 0.3, 0.3));
        }
        let table =
            EventTable::new(events, vec![rep("g1", "A", 90.0), rep("g2", "B", 90.0)]).unwrap();
        let d = dissimilarity_matrix(&table, 2, None).unwrap();
        assert!((d.values[[0, 1]] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(d.values[[0, 1]], d.values[[1, 0]]);
        assert_eq!(d.values[[0, 0]], 0.0);
        assert_eq!(d.labels, vec!["A", "B"]);
    }

    #[test]
    fn exposure_and_aggregation() {
        // A plays two 45-minute games with one pass each; B one 90-minute game with two.
        let events = vec![
            pass(0, 0.1, 0.1, 0.6, 0.7),
            pass(1, 0.1, 0.1, 0.6, 0.7),
            pass(2, 0.1, 0.1, 0.6, 0.7),
            pass(2, 0.1, 0.1, 0.6, 0.7),
        ];
        let table = EventTable::new(
            events,
            vec![
                rep("a1", "A", 45.0),
                rep("a2", "A", 45.0),
                rep("b1", "B", 90.0),
            ],
        )
        .unwrap();
        let d = dissimilarity_matrix(&table, 1, None).unwrap();
        assert_eq!(d.values[[0, 1]], 0.0);
        // a team whose rate is doubled by short minutes is no longer identical
        let short = EventTable::new(
            table.events().to_vec(),
            vec![
                rep("a1", "A", 20.0),
                rep("a2", "A", 25.0),
                rep("b1", "B", 90.0),
            ],
        )
        .unwrap();
        let d = dissimilarity_matrix(&short, 1, None).unwrap();
        assert!(d.values[[0, 1]] > 0.0);
    }

    #[test]
    fn team_without_passes_errors() {
        let table = EventTable::new(
            vec![pass(0, 0.1, 0.1, 0.6, 0.7)],
            vec![rep("g1", "A", 90.0), rep("g2", "B", 90.0)],
        )
        .unwrap();
        assert!(matches!(
            dissimilarity_matrix(&table, 1, None),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn csv_is_labeled() {
        let d = DissimilarityMatrix {
            labels: vec!["A".into(), "B,C".into()],
            values: ndarray::array![[0.0, 0.25], [0.25, 0.0]],
            scale: 1,
        };
        assert_eq!(
            d.to_csv().unwrap(),
            ",A,\"B,C\"\nA,0,0.25\n\"B,C\",0.25,0\n"
        );
    }

    proptest! {
        #[test]
        fn symmetric_scale_invariant_and_bounded(
            pairs in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..20),
            c in 0.1f64..100.0,
        ) {
            let u: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let v: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(u.iter().chain(&v).any(|&a| a > 0.0));
            let d = bray_curtis(&u, &v).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, bray_curtis(&v, &u).unwrap());
            let cu: Vec<f64> = u.iter().map(|a| a * c).collect();
            let cv: Vec<f64> = v.iter().map(|a| a * c).collect();
            prop_assert!((bray_curtis(&cu, &cv).unwrap() - d).abs() <= 1e-12);
        }
    }
}
