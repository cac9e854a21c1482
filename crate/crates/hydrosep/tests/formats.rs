use std::path::Path;

use hydrosep::formats::{read_events, read_events_from, read_matrix, write_events, write_matrix};
use hydrosep::Error;
use hydrosep_core::{Device, EventRecord, Matrix};

fn parse(text: &str) -> hydrosep::Result<Vec<EventRecord>> {
    read_events_from(text.as_bytes(), Path::new("events.csv"))
}

#[test]
fn events_parse_in_order() {
    let ev = parse(
        "day,device,start_interval,duration,volumes\n0,toilet,12,2,0.8;2.5\n1,faucet,3,1,0.25\n",
    )
    .unwrap();
    assert_eq!(ev.len(), 2);
    assert_eq!(ev[0].device, Device::Toilet);
    assert_eq!((ev[0].day, ev[0].start_interval), (0, 12));
    assert_eq!(ev[0].volumes, vec![0.8, 2.5]);
    assert_eq!(ev[1].device, Device::Faucet);
}

#[test]
fn extra_columns_are_ignored() {
    let ev =
        parse("id,day,device,start_interval,duration,volumes\n0,0,toilet,12,2,0.8;2.5\n").unwrap();
    assert_eq!(ev[0].volumes, vec![0.8, 2.5]);
}

#[test]
fn malformed_row_names_its_line() {
    let err =
        parse("day,device,start_interval,duration,volumes\n0,toilet,12,1,0.8\n0,toilet,x,1,0.8\n")
            .unwrap_err();
    match err {
        Error::Parse { line, .. } => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(
        parse("day,device,start_interval,duration,volumes\n0,toilet,1,2,0.8\n")
            .unwrap_err()
            .exit_code(),
        4
    );
}

#[test]
fn negative_volume_is_rejected() {
    let err =
        parse("day,device,start_interval,duration,volumes\n0,shower,4,2,1.0;-0.5\n").unwrap_err();
    assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
}

#[test]
fn unknown_device_and_missing_column_fail() {
    assert!(parse("day,device,start_interval,duration,volumes\n0,bathtub,4,1,1.0\n").is_err());
    assert!(matches!(
        parse("day,device,duration,volumes\n0,toilet,1,1.0\n"),
        Err(Error::Schema { .. })
    ));
}

#[test]
fn events_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.csv");
    let events = vec![
        EventRecord::new(Device::Shower, 2, 20, vec![17.28, 9.61, 1.69]).unwrap(),
        EventRecord::new(Device::Toilet, 0, 95, vec![0.1 + 0.2]).unwrap(),
    ];
    write_events(&path, &events).unwrap();
    assert_eq!(read_events(&path).unwrap(), events);
}

#[test]
fn matrix_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let m = Matrix::from_columns(
        3,
        &[
            vec![0.1 + 0.2, 1e-300, 0.0],
            vec![2.0 / 3.0, 5.0, f64::MIN_POSITIVE],
        ],
    )
    .unwrap();
    write_matrix(&path, "toilet", &m).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("#hydrosep-matrix v1 device=toilet N=3 P=2\n"));
    let (label, back) = read_matrix(&path).unwrap();
    assert_eq!(label, "toilet");
    assert_eq!(back, m);
}

#[test]
fn matrix_header_and_shape_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let cases = [
        "0,1\n1,2\n",
        "#hydrosep-matrix v2 device=toilet N=1 P=2\n0,1\n",
        "#hydrosep-matrix v1 device=toilet N=2 P=2\n0,1\n",
        "#hydrosep-matrix v1 device=toilet N=1 P=2\n0,1,2\n",
        "#hydrosep-matrix v1 device=toilet N=1 P=2\n0,zz\n",
    ];
    for text in cases {
        std::fs::write(&path, text).unwrap();
        let err = read_matrix(&path).unwrap_err();
        assert_eq!(err.exit_code(), 4, "{text:?} gave {err:?}");
    }
}
