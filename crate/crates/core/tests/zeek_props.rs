//! Conn-log parsing round trips over generated records.

use std::io::Cursor;
use std::net::{Ipv4Addr, Ipv6Addr};

use clem_core::zeek::{
    parse_json_line, parse_tsv_line, read_conn_log, Exclusions, FiveTuple, Proto, TsvHeader,
};
use proptest::prelude::*;

fn address() -> impl Strategy<Value = String> {
    prop_oneof![
        any::<u32>().prop_map(|v| Ipv4Addr::from(v).to_string()),
        any::<u128>().prop_map(|v| Ipv6Addr::from(v).to_string()),
    ]
}

fn proto() -> impl Strategy<Value = Proto> {
    prop_oneof![Just(Proto::Tcp), Just(Proto::Udp), Just(Proto::Icmp)]
}

fn tuple() -> impl Strategy<Value = FiveTuple> {
    (address(), any::<u16>(), address(), any::<u16>(), proto()).prop_map(
        |(orig_h, orig_p, resp_h, resp_p, proto)| FiveTuple {
            orig_h,
            orig_p,
            resp_h,
            resp_p,
            proto,
        },
    )
}

const FIELDS: [&str; 9] = [
    "ts",
    "uid",
    "id.orig_h",
    "id.orig_p",
    "id.resp_h",
    "id.resp_p",
    "proto",
    "duration",
    "conn_state",
];

proptest! {
    #[test]
    fn five_tuple_line_round_trip(t in tuple()) {
        let line = t.to_line();
        prop_assert_eq!(line.split_whitespace().count(), 10);
        prop_assert_eq!(FiveTuple::parse_line(&line).unwrap(), t);
    }

    #[test]
    fn tsv_and_json_agree(t in tuple(), duration in "[0-9]{1,3}\\.[0-9]{1,4}|-", state in "S0|SF|REJ") {
        let header = TsvHeader::new(&FIELDS).unwrap();
        let values = [
            "1591367999.305988".to_string(),
            "CUM0KZ3MLUfNB0cl11".to_string(),
            t.orig_h.clone(),
            t.orig_p.to_string(),
            t.resp_h.clone(),
            t.resp_p.to_string(),
            t.proto.to_string(),
            duration.clone(),
            state.clone(),
        ];
        let ex = Exclusions::default();
        let from_tsv = parse_tsv_line(&header, &values.join("\t"), 1, &ex).unwrap();
        let json = serde_json::json!({
            "ts": 1591367999.305988,
            "uid": "CUM0KZ3MLUfNB0cl11",
            "id.orig_h": t.orig_h,
            "id.orig_p": t.orig_p,
            "id.resp_h": t.resp_h,
            "id.resp_p": t.resp_p,
            "proto": t.proto.to_string(),
            "duration": duration,
            "conn_state": state,
        });
        let from_json = parse_json_line(&json.to_string(), 1, &ex).unwrap();
        prop_assert_eq!(from_tsv.five_tuple(), t.clone());
        prop_assert_eq!(from_json.five_tuple(), t);
        for name in ["duration", "conn_state"] {
            prop_assert_eq!(from_tsv.extra(name), from_json.extra(name));
        }
        prop_assert!(from_tsv.extras.iter().all(|(n, _)| n != "uid" && n != "ts"));
    }
}

#[test]
fn reading_a_log_keeps_header_order() {
    let mut log = format!("#separator \\x09\n#fields\t{}\n", FIELDS.join("\t"));
    for i in 0..3 {
        log.push_str(&format!(
            "1.{i}\tC{i}\t10.0.0.{i}\t5000{i}\t10.0.1.25\t25\ttcp\t0.5\tSF\n"
        ));
    }
    let recs = read_conn_log(Cursor::new(log), None, &Exclusions::default()).unwrap();
    assert_eq!(recs.len(), 3);
    for r in &recs {
        let names: Vec<&str> = r.extras.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["duration", "conn_state"]);
    }
}
