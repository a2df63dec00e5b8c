use super::*;
use crate::crypto::create_account;
use crate::ledger::sign_transaction;

const BOUNDS: MapBounds = MapBounds {
    width: 1440,
    height: 720,
};

fn action(
    shipment: &str,
    ts: &str,
    agent: &str,
    who: Address,
    kind: u8,
    x: i64,
    y: i64,
) -> Action {
    Action {
        shipment_id: shipment.into(),
        timestamp: ts.into(),
        action_type: kind,
        agent_name: agent.into(),
        agent_address: who,
        x,
        y,
    }
}

fn setup() -> (ContractStore, Address, Address) {
    let admin = create_account("admin").unwrap().address();
    let courier = create_account("courier-16").unwrap().address();
    (ContractStore::new(admin, [courier], BOUNDS), admin, courier)
}

#[test]
fn listing_pickup_then_delivery() {
    let (mut store, _, courier) = setup();
    let pickup = action(
        "100",
        "2018-06-12 11:48:52",
        "deliverers[16]",
        courier,
        PICKUP,
        1015,
        363,
    );
    let event = store.add_action(&courier, "100", pickup.clone()).unwrap();
    assert_eq!(event, pickup);
    assert_eq!(store.get_action_count("100").unwrap(), 1);
    assert!(!store.get_shipment("100").is_zero());

    let delivery = action(
        "100",
        "2018-06-12 13:07:01",
        "deliverers[16]",
        courier,
        DELIVERY,
        950,
        300,
    );
    store.add_action(&courier, "100", delivery.clone()).unwrap();
    assert_eq!(store.get_action_count("100").unwrap(), 2);
    assert_eq!(store.get_action("100", 0).unwrap(), pickup);
    assert_eq!(store.get_action("100", 1).unwrap(), delivery);
}

#[test]
fn unauthorized_sender_changes_nothing() {
    let (mut store, _, _) = setup();
    let stranger = create_account("stranger").unwrap().address();
    let before = store.clone();
    let a = action("7", "2018-06-12 01:00:00", "x", stranger, PICKUP, 1, 1);
    assert_eq!(
        store.add_action(&stranger, "7", a),
        Err(TxFailure::UnauthorizedSender)
    );
    assert_eq!(store, before);
    assert!(store.get_shipment("7").is_zero());
}

#[test]
fn malformed_actions_rejected() {
    let (mut store, _, courier) = setup();
    let before = store.clone();
    let base = action("1", "2018-06-12 01:00:00", "d", courier, PICKUP, 10, 10);
    let cases = [
        Action { action_type: 3, ..base.clone() },
        Action { action_type: 0, ..base.clone() },
        Action { x: 1441, ..base.clone() },
        Action { y: -1, ..base.clone() },
        Action { timestamp: "yesterday".into(), ..base.clone() },
        Action { shipment_id: "2".into(), ..base.clone() },
        Action { agent_address: Address::ZERO, ..base.clone() },
    ];
    for bad in cases {
        let err = store.add_action(&courier, "1", bad).unwrap_err();
        assert!(matches!(err, TxFailure::MalformedAction(_)), "{err:?}");
    }
    assert_eq!(store, before);
}

#[test]
fn get_shipment_unknown_is_zero_and_known_is_stable() {
    let (mut store, _, courier) = setup();
    assert_eq!(store.get_shipment("nope"), Address::ZERO);
    for id in ["100", "101"] {
        let a = action(id, "2018-06-12 01:00:00", "d", courier, PICKUP, 0, 0);
        store.add_action(&courier, id, a).unwrap();
    }
    let a = store.get_shipment("100");
    assert_eq!(a, store.get_shipment("100"));
    assert_eq!(a, shipment_address(&SHIPMENT_MANAGER_ADDRESS, "100"));
    assert_ne!(a, store.get_shipment("101"));
}

#[test]
fn action_index_bounds() {
    let (mut store, _, courier) = setup();
    let a = action("5", "2018-06-12 01:00:00", "d", courier, PICKUP, 0, 0);
    for k in 1..=4 {
        store.add_action(&courier, "5", a.clone()).unwrap();
        assert_eq!(store.get_action_count("5").unwrap(), k);
    }
    assert_eq!(
        store.get_action("5", 4),
        Err(ContractError::IndexError { index: 4, count: 4 })
    );
    assert!(matches!(
        store.get_action_count("missing"),
        Err(ContractError::UnknownShipment { .. })
    ));
}

#[test]
fn shipment_guard_rejects_non_manager() {
    let (mut store, _, courier) = setup();
    let a = action("5", "2018-06-12 01:00:00", "d", courier, PICKUP, 0, 0);
    store.add_action(&courier, "5", a.clone()).unwrap();
    let shipment = store.shipment_mut("5").unwrap();
    let prefix = shipment.actions().to_vec();
    assert_eq!(
        shipment.add_action(&courier, a.clone()),
        Err(ContractError::NotManager { caller: courier })
    );
    assert_eq!(shipment.actions(), prefix.as_slice());
    shipment.add_action(&SHIPMENT_MANAGER_ADDRESS, a).unwrap();
    assert_eq!(&shipment.actions()[..1], prefix.as_slice());
    assert_eq!(shipment.action_count(), 2);
}

#[test]
fn allowlist_admin_only() {
    let (mut store, admin, courier) = setup();
    let other = create_account("other").unwrap().address();
    assert_eq!(
        store.set_authorized(&courier, other, true),
        Err(TxFailure::NotAdmin)
    );
    assert!(!store.is_authorized(&other));

    store.set_authorized(&admin, other, true).unwrap();
    let a = action("9", "2018-06-12 01:00:00", "d", other, PICKUP, 0, 0);
    assert!(store.add_action(&other, "9", a.clone()).is_ok());

    store.set_authorized(&admin, other, false).unwrap();
    assert_eq!(
        store.add_action(&other, "9", a),
        Err(TxFailure::UnauthorizedSender)
    );
    assert_eq!(store.get_action_count("9").unwrap(), 1);
}

#[test]
fn execute_block_receipts_and_determinism() {
    let admin = create_account("admin").unwrap();
    let courier = create_account("courier-16").unwrap();
    let stranger = create_account("stranger").unwrap();
    let store = ContractStore::new(admin.address(), [courier.address()], BOUNDS);

    let empty = execute_block(&store, 1, &[]);
    assert_eq!(empty.state_hash(), store.state_hash());

    let ok = sign_transaction(
        &courier,
        0,
        ContractCall::AddAction {
            shipment_id: "100".into(),
            action: action(
                "100",
                "2018-06-12 11:48:52",
                "deliverers[16]",
                courier.address(),
                PICKUP,
                1015,
                363,
            ),
        },
    );
    let bad = sign_transaction(
        &stranger,
        0,
        ContractCall::AddAction {
            shipment_id: "100".into(),
            action: action(
                "100",
                "2018-06-12 11:49:00",
                "x",
                stranger.address(),
                PICKUP,
                1,
                1,
            ),
        },
    );
    let txs = vec![ok.clone(), bad.clone()];
    let out = execute_block(&store, 3, &txs);
    assert_eq!(out.events.len(), 1);
    assert_eq!(out.events[0].position(), (3, 0));
    assert_eq!(out.receipts.len(), 2);
    assert!(out.receipts[0].is_ok());
    assert_eq!(
        out.receipts[1].status,
        ReceiptStatus::Failed {
            failure: TxFailure::UnauthorizedSender
        }
    );
    // Failed transaction still consumed its nonce.
    assert_eq!(out.store.next_nonce(&stranger.address()), 1);
    assert_eq!(out.store.next_nonce(&courier.address()), 1);

    let again = execute_block(&store, 3, &txs);
    assert_eq!(again.state_hash(), out.state_hash());
}

#[test]
fn read_calls() {
    let (mut store, _, courier) = setup();
    let a = action("1", "2018-06-12 01:00:00", "d", courier, PICKUP, 0, 0);
    store.add_action(&courier, "1", a.clone()).unwrap();
    assert_eq!(
        call_read(&store, &ReadCall::GetActionCount { shipment_id: "1".into() }),
        Ok(ReadResult::Count(1))
    );
    assert_eq!(
        call_read(&store, &ReadCall::GetAction { shipment_id: "1".into(), index: 0 }),
        Ok(ReadResult::Action(a))
    );
    assert_eq!(
        call_read(&store, &ReadCall::GetShipment { shipment_id: "zz".into() }),
        Ok(ReadResult::Address(Address::ZERO))
    );
}

/// Every reachable shipment has at least one action: breadth-first over
/// short call sequences, checking that no explored state holds an empty one.
#[test]
fn created_shipments_never_empty() {
    let (store, admin, courier) = setup();
    let stranger = create_account("stranger").unwrap().address();
    type Call = Box<dyn Fn(&mut ContractStore)>;
    let calls: Vec<Call> = vec![
        Box::new(move |s| {
            let _ = s.add_action(
                &courier,
                "a",
                action("a", "2018-06-12 01:00:00", "d", courier, PICKUP, 0, 0),
            );
        }),
        Box::new(move |s| {
            let _ = s.add_action(
                &courier,
                "b",
                action("b", "2018-06-12 01:00:00", "d", courier, 9, 0, 0),
            );
        }),
        Box::new(move |s| {
            let _ = s.add_action(
                &stranger,
                "c",
                action("c", "2018-06-12 01:00:00", "d", stranger, PICKUP, 0, 0),
            );
        }),
        Box::new(move |s| {
            let _ = s.set_authorized(&admin, courier, false);
        }),
        Box::new(move |s| {
            let _ = s.set_authorized(&admin, stranger, true);
        }),
    ];
    let mut frontier = vec![store];
    for _depth in 0..4 {
        let mut next = Vec::new();
        for s in &frontier {
            for call in &calls {
                let mut t = s.clone();
                call(&mut t);
                for sh in t.shipments() {
                    assert!(sh.action_count() >= 1);
                }
                next.push(t);
            }
        }
        frontier = next;
    }
}
