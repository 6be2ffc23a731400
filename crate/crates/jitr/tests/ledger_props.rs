use jitr::ledger::{decode, LedgerError, LedgerWriter, Record};
use jitr_core::miner::TaskId;
use proptest::prelude::*;

fn record() -> impl Strategy<Value = Record> {
    prop_oneof![
        (any::<u64>(), "\\PC{0,12}", "\\PC{0,40}").prop_map(|(t, stage, error)| Record::JobFailed {
            task_id: TaskId(t),
            stage,
            error,
        }),
        (any::<u64>(), proptest::option::of("[a-z0-9-]{1,16}"), any::<u64>()).prop_map(|(t, artifact_id, generation)| {
            Record::Routing { task_id: TaskId(t), artifact_id, generation }
        }),
        (any::<u64>(), "\\PC{0,60}", any::<u64>()).prop_map(|(t, exemplar, timestamp_ms)| Record::TaskCreated {
            task_id: TaskId(t),
            exemplar,
            timestamp_ms,
            template: None,
        }),
    ]
}

proptest! {
    #[test]
    fn appended_records_decode_in_order(records in proptest::collection::vec(record(), 0..20)) {
        let mut w = LedgerWriter::in_memory();
        for r in &records {
            w.append(r.clone());
        }
        let entries = decode(w.memory().unwrap()).unwrap();
        prop_assert_eq!(entries.len(), records.len());
        for (i, (e, r)) in entries.iter().zip(&records).enumerate() {
            prop_assert_eq!(e.offset, i as u64);
            prop_assert_eq!(&e.record, r);
        }
    }

    #[test]
    fn a_torn_tail_is_reported_at_its_offset(records in proptest::collection::vec(record(), 1..10), cut in any::<prop::sample::Index>()) {
        let mut w = LedgerWriter::in_memory();
        for r in &records {
            w.append(r.clone());
        }
        let bytes = w.memory().unwrap();
        let last = bytes[..bytes.len() - 1].iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
        let keep = last + cut.index(bytes.len() - last - 1);
        match decode(&bytes[..keep]) {
            Ok(entries) => prop_assert_eq!(keep, last, "only an empty tail decodes ({} entries)", entries.len()),
            Err(LedgerError::Corrupt { offset, .. }) => prop_assert_eq!(offset, records.len() as u64 - 1),
            Err(e) => prop_assert!(false, "unexpected {e}"),
        }
    }
}
