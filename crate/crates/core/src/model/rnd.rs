/// The splitmix64 output function for a single step from `seed`.
pub fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic 8-character lowercase string for a seed: successive 5-bit
/// groups of the mixed seed, least significant first, each taken modulo 26.
pub fn rnd_str(seed: i64) -> String {
    let z = splitmix64(seed as u64);
    (0..8)
        .map(|i| (b'a' + ((z >> (5 * i)) & 31) as u8 % 26) as char)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    // Golden values produced by an independent script implementation of the
    // same procedure.
    #[test]
    fn golden_values() {
        assert_eq!(rnd_str(0), "pntbrdfh");
        assert_eq!(rnd_str(1), "bgxeqesd");
        assert_eq!(rnd_str(10), "kelqffax");
        assert_eq!(rnd_str(11), "demayrup");
        assert_eq!(rnd_str(-1), "ablkwnco");
    }

    #[test]
    fn deterministic_and_well_spread() {
        for s in [0, 7, 10, i64::MIN, i64::MAX] {
            assert_eq!(rnd_str(s), rnd_str(s));
        }
        let distinct: HashSet<String> = (0..=1000).map(rnd_str).collect();
        assert!(distinct.len() as f64 >= 0.99 * 1001.0);
        assert!(rnd_str(3)
            .chars()
            .all(|c| c.is_ascii_lowercase()));
    }
}
