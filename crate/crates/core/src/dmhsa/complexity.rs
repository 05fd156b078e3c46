/// Estimators compared by leading-order operation count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ComplexityMethod {
    Mmse,
    CsiDmhsa,
    GeoDmhsa,
}

/// Leading term of the operation count for one group of `n_sched` users.
///
/// `n_c` is ignored by the MMSE oracle and `n_r` by the location model.
pub fn complexity_estimate(method: ComplexityMethod, n_sched: u64, n_r: u64, n_c: u64) -> u64 {
    match method {
        ComplexityMethod::Mmse => n_sched * n_sched * n_r,
        ComplexityMethod::CsiDmhsa => n_sched * n_c * n_r,
        ComplexityMethod::GeoDmhsa => n_sched * n_sched * n_c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operating_point() {
        assert_eq!(complexity_estimate(ComplexityMethod::Mmse, 24, 512, 8), 294_912);
        assert_eq!(complexity_estimate(ComplexityMethod::CsiDmhsa, 24, 512, 8), 98_304);
        assert_eq!(complexity_estimate(ComplexityMethod::GeoDmhsa, 24, 512, 8), 4_608);
        for n_c in 1..=24 {
            let mmse = complexity_estimate(ComplexityMethod::Mmse, 24, 512, n_c);
            assert_eq!(mmse, 294_912);
            assert!(complexity_estimate(ComplexityMethod::GeoDmhsa, 24, 512, n_c) < mmse);
        }
    }
}
