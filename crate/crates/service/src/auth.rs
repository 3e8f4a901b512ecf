//! Password hashing and session tokens.

use std::collections::HashMap;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use parking_lot::RwLock;
use sha2::{Digest, Sha256};

const SCHEME: &str = "sha256i";
pub const DEFAULT_ITERATIONS: u32 = 20_000;

fn stretch(password: &str, salt: &[u8], iterations: u32) -> [u8; 32] {
    let mut h: [u8; 32] = Sha256::new().chain_update(salt).chain_update(password.as_bytes()).finalize().into();
    for _ in 1..iterations {
        h = Sha256::new().chain_update(h).chain_update(salt).finalize().into();
    }
    h
}

/// `sha256i$<iterations>$<salt hex>$<hash hex>` with a fresh 16-byte salt.
pub fn hash_password(password: &str, iterations: u32) -> String {
    let salt: [u8; 16] = rand::random();
    let h = stretch(password, &salt, iterations.max(1));
    format!("{SCHEME}${}${}${}", iterations.max(1), hex::encode(salt), hex::encode(h))
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

pub fn verify_password(password: &str, stored: &str) -> bool {
    let parts: Vec<&str> = stored.split('$').collect();
    let [scheme, iters, salt, hash] = parts[..] else {
        return false;
    };
    let (Ok(iters), Ok(salt), Ok(hash)) = (iters.parse::<u32>(), hex::decode(salt), hex::decode(hash)) else {
        return false;
    };
    scheme == SCHEME && iters > 0 && constant_time_eq(&stretch(password, &salt, iters), &hash)
}

/// Burns the same work as a real check so unknown users and wrong
/// passwords take the same time.
pub fn verify_against_dummy(password: &str) {
    static DUMMY: OnceLock<String> = OnceLock::new();
    let stored = DUMMY.get_or_init(|| hash_password("\u{0}", DEFAULT_ITERATIONS));
    let _ = verify_password(password, stored);
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub user_id: String,
    pub language_id: String,
    pub expires: Instant,
}

/// In-memory session table. Several live tokens per user are allowed.
pub struct Sessions {
    ttl: Duration,
    map: RwLock<HashMap<String, Session>>,
}

impl Sessions {
    pub fn new(ttl: Duration) -> Self {
        Self { ttl, map: RwLock::new(HashMap::new()) }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub fn issue(&self, user_id: &str, language_id: &str) -> String {
        let token = hex::encode(rand::random::<[u8; 32]>());
        let now = Instant::now();
        let mut map = self.map.write();
        map.retain(|_, s| s.expires > now);
        map.insert(
            token.clone(),
            Session { user_id: user_id.to_string(), language_id: language_id.to_string(), expires: now + self.ttl },
        );
        token
    }

    /// The session behind `token` if it has not expired.
    pub fn check(&self, token: &str) -> Option<Session> {
        let now = Instant::now();
        let found = self.map.read().get(token).cloned();
        match found {
            Some(s) if s.expires > now => Some(s),
            Some(_) => {
                self.map.write().remove(token);
                None
            }
            None => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_round_trip_and_salting() {
        let a = hash_password("गुप्त", 50);
        let b = hash_password("गुप्त", 50);
        assert_ne!(a, b);
        assert!(verify_password("गुप्त", &a));
        assert!(!verify_password("गुप्", &a));
        assert!(!verify_password("x", "garbage"));
        assert!(!verify_password("x", "sha256i$0$00$00"));
    }

    #[test]
    fn known_single_iteration_digest() {
        // sha256(salt || password) with an empty salt is plain sha256.
        let stored = format!("sha256i$1$${}", "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert!(verify_password("abc", &stored));
    }

    #[test]
    fn tokens_are_distinct_and_expire() {
        let s = Sessions::new(Duration::from_millis(30));
        let t1 = s.issue("asha", "hi");
        let t2 = s.issue("asha", "hi");
        assert_ne!(t1, t2);
        assert_eq!(s.check(&t1).unwrap().user_id, "asha");
        assert!(s.check("nope").is_none());
        std::thread::sleep(Duration::from_millis(40));
        assert!(s.check(&t1).is_none());
    }
}
