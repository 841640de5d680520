//! Regenerates the bundled interaction fixture and its golden split files.
//!
//! The outputs are committed under `tests/fixtures/`; this generator exists
//! so they can be reproduced from scratch:
//!
//! ```text
//! cargo run -p crane-cli --example make_fixture
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crane_core::eval::{preprocess, split_811, SPLIT_SEEDS};
use crane_core::SeededRng;
use crane_cli::data::parse_interactions;

const N_USERS: usize = 40;
const N_ITEMS: usize = 60;
const N_LINES: usize = 500;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    fs::create_dir_all(dir.join("golden")).expect("fixture dir");

    // deterministic interaction log: a dedicated stream that nothing in the
    // trainer shares
    let mut rng = SeededRng::new(424_242);
    let mut tsv = String::new();
    for n in 0..N_LINES {
        let u = rng.gen_index(N_USERS);
        let i = rng.gen_index(N_ITEMS);
        let rating = 1.0 + rng.gen_index(9) as f64 * 0.5;
        if n % 3 == 0 {
            let ts = 1_600_000_000 + rng.gen_index(100_000) as i64;
            let _ = writeln!(tsv, "user_{u:03}\titem_{i:03}\t{rating}\t{ts}");
        } else {
            let _ = writeln!(tsv, "user_{u:03}\titem_{i:03}\t{rating}");
        }
    }
    fs::write(dir.join("interactions_500.tsv"), &tsv).expect("write tsv");

    let inter = parse_interactions(&tsv).expect("fixture parses");
    let pre = preprocess(&inter.pairs, inter.n_users(), inter.n_items()).expect("preprocess");
    for seed in SPLIT_SEEDS {
        let split = split_811(&pre.pairs, pre.n_users, seed);
        let mut out = String::new();
        for (section, pairs) in [
            ("train", &split.train),
            ("valid", &split.valid),
            ("test", &split.test),
        ] {
            for &(u, i) in pairs.iter() {
                let uid = &inter.user_ids[pre.user_origin[u as usize] as usize];
                let iid = &inter.item_ids[pre.item_origin[i as usize] as usize];
                let _ = writeln!(out, "{uid}\t{iid}\t{section}");
            }
        }
        fs::write(dir.join(format!("golden/split_{seed}.tsv")), out).expect("write golden");
    }
    println!("fixture and golden splits written to {}", dir.display());
}
