use proptest::prelude::*;
use slas::csvlog::{read_episode, read_table, write_episode, write_table};
use slas_core::sim::{Sample, SolverSample, Stat, TableRow, VehicleSample};
use slas_core::SolveStatus;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e4..1e4f64, Just(0.0), Just(-0.0), Just(1e-300), Just(f64::MAX)]
}

fn vehicle() -> impl Strategy<Value = VehicleSample> {
    (any::<u32>(), finite(), finite(), 0usize..6).prop_map(|(id, s, v, lane)| VehicleSample { id, s, v, lane })
}

fn solver() -> impl Strategy<Value = SolverSample> {
    (
        prop::sample::select(SolveStatus::ALL.to_vec()),
        finite(),
        finite(),
        prop::option::of(finite()),
        any::<u64>(),
        any::<u16>(),
        any::<bool>(),
        any::<bool>(),
    )
        .prop_map(|(status, objective, solve_time, first, nodes, cuts, hint, fallback)| SolverSample {
            status,
            objective,
            solve_time,
            first_incumbent_time: first,
            nodes,
            lazy_cuts: cuts as usize,
            hint_accepted: hint,
            fallback,
        })
}

fn sample() -> impl Strategy<Value = Sample> {
    (
        (finite(), finite(), finite(), finite()),
        (0usize..6, 0usize..6, finite(), any::<bool>()),
        prop::option::of(solver()),
        prop::collection::vec(vehicle(), 0..4),
    )
        .prop_map(|((time, ego_s, ego_v, ego_lateral), (ego_lane, target_lane, ref_speed, planner_tick), solver, vehicles)| Sample {
            time,
            ego_s,
            ego_v,
            ego_lateral,
            ego_lane,
            target_lane,
            ref_speed,
            planner_tick,
            solver,
            vehicles,
        })
}

fn stat() -> impl Strategy<Value = Stat> {
    (finite(), 0.0..1e3f64).prop_map(|(mean, std)| Stat { mean, std })
}

fn table_row() -> impl Strategy<Value = TableRow> {
    (0usize..100, 0usize..100, prop::array::uniform7(stat()), stat(), stat(), finite()).prop_map(
        |(runs, excluded, columns, long_jerk, mean_headway, min_distance_to_closest)| TableRow {
            runs,
            excluded,
            columns,
            long_jerk,
            mean_headway,
            min_distance_to_closest,
        },
    )
}

proptest! {
    #[test]
    fn episode_csv_roundtrips(samples in prop::collection::vec(sample(), 0..12)) {
        let mut buf = Vec::new();
        write_episode(&mut buf, &samples).unwrap();
        let back = read_episode(buf.as_slice()).unwrap();
        prop_assert_eq!(back, samples);
    }

    #[test]
    fn table_csv_roundtrips(rows in prop::collection::vec(("[a-z]{1,8}", table_row()), 0..4)) {
        let mut buf = Vec::new();
        write_table(&mut buf, &rows).unwrap();
        prop_assert_eq!(read_table(buf.as_slice()).unwrap(), rows);
    }
}

#[test]
fn wrong_header_is_rejected() {
    let err = read_episode("time,s\n1,2\n".as_bytes()).unwrap_err();
    assert!(err.to_string().starts_with("unexpected header"));
}

#[test]
fn bad_field_names_the_column() {
    let mut buf = Vec::new();
    write_episode(
        &mut buf,
        &[Sample {
            time: 0.0,
            ego_s: 1.0,
            ego_v: 2.0,
            ego_lateral: 3.5,
            ego_lane: 1,
            target_lane: 1,
            ref_speed: 2.0,
            planner_tick: true,
            solver: None,
            vehicles: vec![],
        }],
    )
    .unwrap();
    let text = String::from_utf8(buf).unwrap().replace(",3.5,", ",x,");
    let err = read_episode(text.as_bytes()).unwrap_err().to_string();
    assert!(err.contains("ego_lateral_m"), "{err}");
}
