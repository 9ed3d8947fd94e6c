mod suites;

macro_rules! suite_tests {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                if let Err(e) = suites::$name() {
                    panic!("{e}");
                }
            }
        )*
    };
}

suite_tests!(
    encoding_roundtrip,
    encoding_truncation,
    synchronize_reconstruction,
    next_phase_partition,
    delta_inv_interval,
    delta_inv_at_starts,
    qc_matches_oracle,
    qc_accepts_quorums,
    filter_bound,
    trace_roundtrip,
);
