use strata_core::spec::{Level, Metric, SpecTarget, Specification};

/// Thresholds of one benchmark row: power ≤ µW, then gain, CMRR and PSRR ≥ dB,
/// GBW ≥ Hz, PM ≥ degrees, PSRN ≥ dB.
const ROWS: [(Level, [f64; 7]); 10] = [
    (Level::Easy, [1000.0, 45.0, 20.0, 20.0, 1e5, 60.0, 20.0]),
    (Level::Easy, [1000.0, 45.0, 40.0, 40.0, 1e6, 60.0, 40.0]),
    (Level::Easy, [100.0, 80.0, 50.0, 50.0, 1e6, 60.0, 50.0]),
    (Level::Easy, [100.0, 80.0, 70.0, 70.0, 1e6, 70.0, 70.0]),
    (Level::Easy, [100.0, 100.0, 70.0, 70.0, 1e6, 70.0, 70.0]),
    (Level::Medium, [10.0, 60.0, 70.0, 70.0, 5e5, 50.0, 70.0]),
    (Level::Medium, [10.0, 60.0, 70.0, 70.0, 5e5, 50.0, 70.0]),
    (Level::Medium, [1.0, 25.0, 55.0, 55.0, 1e5, 45.0, 55.0]),
    (Level::Medium, [2.0, 45.0, 30.0, 30.0, 1e6, 45.0, 30.0]),
    (Level::Hard, [5.0, 80.0, 30.0, 30.0, 1e6, 45.0, 30.0]),
];

pub const TASK_COUNT: u32 = ROWS.len() as u32;

pub fn task_id(number: u32) -> String {
    format!("task{number}")
}

/// Benchmark task `number` (1-based), or `None` when out of range.
pub fn builtin_task(number: u32) -> Option<Specification> {
    let (level, [power, gain, cmrr, psrr, gbw, pm, psrn]) = *ROWS.get(number.checked_sub(1)? as usize)?;
    let targets = [
        SpecTarget::at_most(Metric::Power, power),
        SpecTarget::at_least(Metric::Gain, gain),
        SpecTarget::at_least(Metric::Cmrr, cmrr),
        SpecTarget::at_least(Metric::Psrr, psrr),
        SpecTarget::at_least(Metric::Gbw, gbw),
        SpecTarget::at_least(Metric::Pm, pm),
        SpecTarget::at_least(Metric::Psrn, psrn),
    ];
    Some(Specification::new(task_id(number), level, targets).expect("built-in thresholds are finite"))
}

pub fn builtin_tasks() -> Vec<Specification> {
    (1..=TASK_COUNT).filter_map(builtin_task).collect()
}

/// The reference specification used by the `replay` walk-through.
pub fn walkthrough_spec() -> Specification {
    Specification::new(
        "walkthrough",
        Level::Easy,
        [
            SpecTarget::at_least(Metric::Gain, 70.0),
            SpecTarget::at_least(Metric::Gbw, 2e5),
            SpecTarget::at_least(Metric::Pm, 60.0),
            SpecTarget::at_least(Metric::Cmrr, 50.0),
            SpecTarget::at_least(Metric::Psrr, 40.0),
            SpecTarget::at_least(Metric::Psrn, 40.0),
            SpecTarget::at_most(Metric::Power, 35.0),
        ],
    )
    .expect("walk-through thresholds are finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn threshold(spec: &Specification, m: Metric) -> f64 {
        spec.target(m).unwrap().threshold
    }

    #[test]
    fn ten_unique_tasks() {
        let tasks = builtin_tasks();
        assert_eq!(tasks.len(), 10);
        let ids: BTreeSet<&str> = tasks.iter().map(|t| t.task_id()).collect();
        assert_eq!(ids.len(), 10);
        assert!(tasks.iter().all(|t| t.len() == 7));
        assert!(builtin_task(0).is_none() && builtin_task(11).is_none());
    }

    #[test]
    fn hard_row_matches_table() {
        let t = builtin_task(10).unwrap();
        assert_eq!(t.level(), Level::Hard);
        assert_eq!(t.target(Metric::Power).unwrap().direction, strata_core::spec::Direction::AtMost);
        let got: Vec<f64> = [Metric::Power, Metric::Gain, Metric::Cmrr, Metric::Psrr, Metric::Gbw, Metric::Pm, Metric::Psrn]
            .iter()
            .map(|m| threshold(&t, *m))
            .collect();
        assert_eq!(got, vec![5.0, 80.0, 30.0, 30.0, 1e6, 45.0, 30.0]);
    }

    #[test]
    fn spot_values_and_levels() {
        assert_eq!(threshold(&builtin_task(3).unwrap(), Metric::Power), 100.0);
        let t1 = builtin_task(1).unwrap();
        assert_eq!(threshold(&t1, Metric::Gain), 45.0);
        assert_eq!(threshold(&t1, Metric::Gbw), 1e5);
        let levels: Vec<Level> = builtin_tasks().iter().map(|t| t.level()).collect();
        assert_eq!(&levels[..5], &[Level::Easy; 5]);
        assert_eq!(&levels[5..9], &[Level::Medium; 4]);
        // tasks 6 and 7 share thresholds but stay distinct
        let (t6, t7) = (builtin_task(6).unwrap(), builtin_task(7).unwrap());
        assert_eq!(t6.clone().with_task_id("x"), t7.clone().with_task_id("x"));
        assert_ne!(t6.task_id(), t7.task_id());
    }
}
