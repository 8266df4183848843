use std::f64::consts::PI;

use num_complex::Complex64;
use wkbsplit::{ComplexField, Grid, RealField, WkbState};
use wkbsplit_harness::dump::{self, decode, decode_header, decode_onto, encode, Dump, Endian, Kind, HEADER_LEN};
use wkbsplit_harness::HarnessError;

fn state(n: usize) -> WkbState {
    let g = Grid::new(1, n, 2.0 * PI).unwrap();
    let phase = RealField::from_fn(g.clone(), |x| -0.25 * (-x[0] * x[0]).exp() + 1e-300 * x[0]);
    let amp = ComplexField::from_fn(g, |x| Complex64::new((-x[0] * x[0]).exp(), (3.0 * x[0]).sin() / 7.0));
    WkbState::new(phase, amp, 0.375).unwrap()
}

fn bits(v: &[Complex64]) -> Vec<(u64, u64)> {
    v.iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect()
}

#[test]
fn wkb_round_trip_is_bitwise() {
    let s = state(64);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.wkbf");
    dump::dump_state(&s, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes.len(), HEADER_LEN + 2 * 64 * 16);
    match dump::load_field(&path).unwrap() {
        Dump::Wkb(back) => {
            let pb: Vec<u64> = back.phase.values.iter().map(|v| v.to_bits()).collect();
            let pa: Vec<u64> = s.phase.values.iter().map(|v| v.to_bits()).collect();
            assert_eq!(pa, pb);
            assert_eq!(bits(&back.amplitude.values), bits(&s.amplitude.values));
            assert_eq!(back.time.to_bits(), s.time.to_bits());
            assert_eq!(**back.grid(), **s.grid());
        }
        other => panic!("wrong kind {other:?}"),
    }
}

#[test]
fn field_round_trip_in_two_dimensions() {
    let g = Grid::new(2, 16, 3.0).unwrap();
    let f = ComplexField::from_fn(g.clone(), |x| Complex64::new(x[0] * x[1], x[0] - x[1]));
    let bytes = encode(&Dump::Field { field: f.clone(), time: 1.5 }, Endian::Little);
    let h = decode_header(&bytes).unwrap();
    assert_eq!((h.dim, h.points, h.half_length, h.kind), (2, [16, 16], 3.0, Kind::Field));
    match decode(&bytes).unwrap() {
        Dump::Field { field, time } => {
            assert_eq!(bits(&field.values), bits(&f.values));
            assert_eq!(time, 1.5);
        }
        other => panic!("wrong kind {other:?}"),
    }
}

#[test]
fn header_layout() {
    let bytes = encode(&Dump::Wkb(state(32)), Endian::Little);
    assert_eq!(&bytes[0..4], b"WKBF");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 32);
    assert_eq!(&bytes[20..24], b"LE\0\0");
    assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 2.0 * PI);
    assert_eq!(u32::from_le_bytes(bytes[32..36].try_into().unwrap()), 2);
    assert!(bytes[48..64].iter().all(|&b| b == 0));
}

#[test]
fn endianness_tag_is_honored() {
    let s = state(32);
    let le = encode(&Dump::Wkb(s.clone()), Endian::Little);
    let be = encode(&Dump::Wkb(s.clone()), Endian::Big);
    assert_eq!(&be[20..24], b"BE\0\0");
    assert_ne!(le[HEADER_LEN..], be[HEADER_LEN..]);
    assert_eq!(decode_header(&be).unwrap().endian, Endian::Big);
    let (Dump::Wkb(a), Dump::Wkb(b)) = (decode(&le).unwrap(), decode(&be).unwrap()) else {
        panic!("wrong kind");
    };
    assert_eq!(bits(&a.amplitude.values), bits(&b.amplitude.values));

    // big-endian words read under a little-endian tag give a nonsense version
    let mut lied = be.clone();
    lied[20..24].copy_from_slice(b"LE\0\0");
    assert!(matches!(decode(&lied), Err(HarnessError::DumpVersion { .. })));
}

#[test]
fn malformed_inputs_are_rejected() {
    let good = encode(&Dump::Wkb(state(32)), Endian::Little);

    assert!(matches!(decode(&good[..40]), Err(HarnessError::Dump(_))));

    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(matches!(decode(&magic), Err(HarnessError::Dump(_))));

    let mut version = good.clone();
    version[4..8].copy_from_slice(&7u32.to_le_bytes());
    assert!(matches!(decode(&version), Err(HarnessError::DumpVersion { found: 7, .. })));

    let mut tag = good.clone();
    tag[20..24].copy_from_slice(b"XX\0\0");
    assert!(matches!(decode(&tag), Err(HarnessError::Dump(_))));

    let mut kind = good.clone();
    kind[32..36].copy_from_slice(&9u32.to_le_bytes());
    assert!(matches!(decode(&kind), Err(HarnessError::Dump(_))));

    assert!(matches!(decode(&good[..good.len() - 8]), Err(HarnessError::DumpSize { .. })));
    let mut long = good.clone();
    long.extend_from_slice(&[0; 16]);
    assert!(matches!(decode(&long), Err(HarnessError::DumpSize { .. })));
}

#[test]
fn mismatched_grid_is_rejected() {
    let bytes = encode(&Dump::Wkb(state(32)), Endian::Little);
    let other_n = Grid::new(1, 64, 2.0 * PI).unwrap();
    let other_l = Grid::new(1, 32, PI).unwrap();
    let other_d = Grid::new(2, 32, 2.0 * PI).unwrap();
    for g in [other_n, other_l, other_d] {
        assert!(matches!(decode_onto(&bytes, &g), Err(HarnessError::GridMismatch(_))));
    }
    let same = Grid::new(1, 32, 2.0 * PI).unwrap();
    assert!(decode_onto(&bytes, &same).is_ok());
}
