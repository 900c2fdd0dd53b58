//! Deterministic synthetic evidence: identifiers, a device file tree with
//! scripted logs and credential stores, a sparse eMMC image, and cloud
//! fixtures. Everything is derived from a seed so two runs agree byte for
//! byte.

mod cloud;
mod image;
mod tree;

pub use cloud::{cloud_fixtures, CloudExpectations};
pub use image::{kernel_log_text, small_ext4_fixture, write_image, ImageFixture, SmallFixture, HIDDEN_FS_AT, IMAGE_SIZE};
pub use tree::{write_device_tree, EventScript, MotionSpec, TreeManifest};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ids::{derive_comms_id, Body, UserId, UserIdKind};

/// Reference instant of the synthetic case: 2023-08-04 12:00:00 UTC.
pub const BASE_MS: i64 = 1_691_150_400_000;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const ALNUM: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

fn alnum(rng: &mut impl Rng, n: usize) -> String {
    (0..n).map(|_| ALNUM[rng.gen_range(0..ALNUM.len())] as char).collect()
}

/// A random identifier of `kind`, built from the grammar table.
pub fn gen_id(kind: UserIdKind, rng: &mut impl Rng) -> UserId {
    let g = kind.grammar();
    let text = match g.body {
        Body::Alnum(lengths) => {
            let n = lengths[rng.gen_range(0..lengths.len())];
            format!("{}{}", g.prefix, alnum(rng, n))
        }
        Body::DirectedId => format!("{}{}", g.prefix, gen_id(UserIdKind::DirectedId, rng).as_str()),
        Body::Uuid4 => {
            let mut b: [u8; 16] = rng.gen();
            b[6] = (b[6] & 0x0f) | 0x40;
            b[8] = (b[8] & 0x3f) | 0x80;
            let h = hex::encode(b);
            format!("{}-{}-{}-{}-{}", &h[..8], &h[8..12], &h[12..16], &h[16..20], &h[20..])
        }
    };
    UserId::new(kind, text).expect("generated from the grammar")
}

/// One household account and its related identifiers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Persona {
    pub name: String,
    pub customer_id: UserId,
    pub directed_id: UserId,
    pub comms_id: UserId,
    pub person_id: UserId,
    pub person_id_v2: UserId,
    pub contact_id: UserId,
}

impl Persona {
    fn generate(name: &str, rng: &mut impl Rng) -> Self {
        let directed_id = gen_id(UserIdKind::DirectedId, rng);
        Persona {
            name: name.to_string(),
            customer_id: gen_id(UserIdKind::CustomerId, rng),
            comms_id: derive_comms_id(&directed_id).expect("directedId derives"),
            directed_id,
            person_id: gen_id(UserIdKind::PersonId, rng),
            person_id_v2: gen_id(UserIdKind::PersonIdV2, rng),
            contact_id: gen_id(UserIdKind::ContactId, rng),
        }
    }
}

/// The synthetic household: an owner and a second enrolled member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Household {
    pub owner: Persona,
    pub member: Persona,
    /// Refresh token stored (encrypted) on the device.
    pub refresh_token: String,
}

impl Household {
    pub fn generate(seed: u64) -> Self {
        let mut r = rng(seed);
        let owner = Persona::generate("Alex", &mut r);
        let member = Persona::generate("Sam", &mut r);
        let refresh_token = format!("Atnr|{}", alnum(&mut r, 48));
        Household {
            owner,
            member,
            refresh_token,
        }
    }
}
