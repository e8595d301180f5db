use proptest::prelude::*;
use thinfilm::io::{decode_snapshot, encode_snapshot, read_samples, write_field_csv, DiagnosticsWriter};
use thinfilm_core::{DiagnosticsRecord, Field};

#[test]
fn diagnostics_header_and_rows() {
    let mut w = DiagnosticsWriter::new(vec![]).unwrap();
    let rec = DiagnosticsRecord {
        t: 0.5,
        mass: 1.0,
        l2: 2.0,
        h1: 3.0,
        dx_l2: 1e-3,
        min_value: -0.25,
        energy_residual: None,
        positivity_measure: 1.0,
    };
    w.write(&rec).unwrap();
    w.write(&DiagnosticsRecord { energy_residual: Some(1e-12), ..rec }).unwrap();
    let text = String::from_utf8(w.finish().unwrap()).unwrap();
    assert_eq!(
        text,
        "t,mass,l2,h1,dx_l2,min,energy_residual\n5e-1,1e0,2e0,3e0,1e-3,-2.5e-1,\n5e-1,1e0,2e0,3e0,1e-3,-2.5e-1,1e-12\n"
    );
}

#[test]
fn snapshot_layout() {
    let f = Field::new(vec![1.0; 8], 2.0).unwrap();
    let bytes = encode_snapshot(&f);
    assert_eq!(&bytes[..4], b"STFM");
    assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
    assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 8);
    assert_eq!(f64::from_le_bytes(bytes[10..18].try_into().unwrap()), 2.0);
    assert_eq!(bytes.len(), 18 + 64);
}

#[test]
fn corrupt_snapshots_are_rejected() {
    let f = Field::new(vec![0.5; 8], 1.0).unwrap();
    let mut bytes = encode_snapshot(&f);
    assert!(decode_snapshot(&bytes[..bytes.len() - 1]).is_err());
    bytes[4] = 9;
    assert!(decode_snapshot(&bytes).is_err());
    assert!(decode_snapshot(b"NOPE").is_err());
}

#[test]
fn samples_from_all_formats_agree() {
    let dir = tempfile::tempdir().unwrap();
    let f = Field::from_fn(16, 1.0, |x| 1.0 + x * x).unwrap();
    let csv = dir.path().join("f.csv");
    let bin = dir.path().join("f.stfm");
    let bare = dir.path().join("bare.csv");
    write_field_csv(&csv, &f).unwrap();
    std::fs::write(&bin, encode_snapshot(&f)).unwrap();
    let lines: Vec<String> = f.values().iter().map(|v| format!("{v:e}")).collect();
    std::fs::write(&bare, lines.join("\n")).unwrap();
    for p in [&csv, &bin, &bare] {
        assert_eq!(read_samples(p).unwrap(), f.values());
    }
    std::fs::write(&bare, "1.0\nabc\n").unwrap();
    assert!(read_samples(&bare).is_err());
}

proptest! {
    #[test]
    fn snapshot_round_trip(values in prop::collection::vec(-1e6..1e6f64, 4..40), l in 1e-3..1e3f64) {
        let mut values = values;
        if values.len() % 2 == 1 {
            values.pop();
        }
        while values.len() < 8 {
            values.push(0.0);
        }
        let f = Field::new(values, l).unwrap();
        prop_assert_eq!(decode_snapshot(&encode_snapshot(&f)).unwrap(), f);
    }
}
