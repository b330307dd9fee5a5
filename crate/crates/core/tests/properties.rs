use proptest::prelude::*;
use trap_core::crypto::{decrypt, encrypt, pof_verify, vote_payload, CryptoError, Key, Keyring};
use trap_core::params::{compute_m, compute_t0, effective_m, feasible};
use trap_core::predecision::{extract_pofs, Certificate};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn ciphertexts_open_only_under_their_key(
        payload in proptest::collection::vec(any::<u8>(), 0..60),
        seed in any::<u64>(),
        owner in 0u32..64,
        other in 0u32..64,
    ) {
        let key = Key::derive(seed, owner);
        let ct = encrypt(&payload, &key, 64).unwrap();
        prop_assert_eq!(ct.len(), encrypt(&[], &key, 64).unwrap().len());
        prop_assert_eq!(decrypt(&ct, &key).unwrap(), payload);
        if other != owner {
            prop_assert_eq!(decrypt(&ct, &Key::derive(seed, other)), Err(CryptoError::Decrypt));
        }
    }

    #[test]
    fn tampered_ciphertexts_are_rejected(
        payload in proptest::collection::vec(any::<u8>(), 0..32),
        seed in any::<u64>(),
        pos in any::<usize>(),
        flip in 1u8..=255,
    ) {
        let key = Key::derive(seed, 0);
        let mut ct = encrypt(&payload, &key, 36).unwrap();
        let i = pos % ct.len();
        ct[i] ^= flip;
        prop_assert_eq!(decrypt(&ct, &key), Err(CryptoError::Decrypt));
    }
}

proptest! {
    #[test]
    fn baiters_never_exceed_rationals(n in 4u32..300, a in any::<u32>(), b in any::<u32>()) {
        let (k, t) = (a % n.div_ceil(2), b % n.div_ceil(4));
        prop_assume!(feasible(n, k, t));
        prop_assert!(compute_m(n, k, t) <= k as i64);
        prop_assert!(effective_m(n, k, t) <= k);
    }

    #[test]
    fn conflicting_certificates_expose_more_than_t0(n in 4u32..25, seed in any::<u64>(), mask_a in any::<u64>(), mask_b in any::<u64>()) {
        let t0 = compute_t0(n).unwrap();
        let q = (n - t0) as usize;
        let ring = Keyring::from_seed(n, seed);
        let pick = |mask: u64| {
            let mut ids: Vec<u32> = (0..n).collect();
            ids.sort_by_key(|&i| (mask.rotate_left(i * 7) ^ u64::from(i).wrapping_mul(0x9e37_79b9)) & 0xffff);
            ids.truncate(q);
            ids
        };
        let (sa, sb) = (pick(mask_a), pick(mask_b));
        let cert = |ids: &[u32], v: &[u8]| {
            Certificate::new(0, v.to_vec(), ids.iter().map(|&i| ring.signer(i).sign(vote_payload(0, v))).collect())
        };
        let v = ring.verifier();
        let pofs = extract_pofs(&v, q, &cert(&sa, b"A"), &cert(&sb, b"B")).unwrap();
        let both = sa.iter().filter(|i| sb.contains(i)).count();
        prop_assert_eq!(pofs.len(), both);
        prop_assert!(pofs.len() > t0 as usize);
        prop_assert!(pofs.iter().all(|p| pof_verify(&v, p)));
    }
}
