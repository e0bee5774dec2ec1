mod common;

use common::{check_lru_ops, LruOp};
use proptest::prelude::*;

fn op() -> impl Strategy<Value = LruOp> {
    prop_oneof![
        (0u8..64, any::<bool>(), any::<bool>()).prop_map(|(page, file, active)| LruOp::Insert { page, file, active }),
        (0u8..64).prop_map(LruOp::Access),
        (any::<bool>(), 0u8..6).prop_map(|(file, n)| LruOp::Deactivate { file, n }),
        (0u8..64).prop_map(LruOp::Remove),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn lists_match_brute_force_oracle(ops in prop::collection::vec(op(), 0..200)) {
        check_lru_ops(&ops, 64).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn full_node_rejects_inserts(ops in prop::collection::vec(op(), 0..200)) {
        check_lru_ops(&ops, 8).map_err(TestCaseError::fail)?;
    }
}
