//! Classify account identifiers. With arguments each one is classified;
//! without, a synthetic household is used and every id found in its text
//! form is listed along with the comms id derived from the owner.
//!
//! ```bash
//! cargo run --example classify_ids -- amzn1.account.AEXAMPLE
//! ```

use echoshow::ids::{classify, derive_comms_id, find_ids};
use echoshow::synth::Household;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if !args.is_empty() {
        for a in &args {
            match classify(a) {
                Ok(id) => println!("{:<14} {a}", id.kind().name()),
                Err(e) => println!("{:<14} {a} ({e})", "rejected"),
            }
        }
        return;
    }

    let household = Household::generate(9);
    let text = format!("{household:?}");
    for id in find_ids(&text) {
        println!("{:<14} {}", id.kind().name(), id);
    }
    let owner = &household.owner.directed_id;
    match derive_comms_id(owner) {
        Ok(comms) => println!("\n{owner}\n  -> {comms}"),
        Err(e) => println!("\n{owner}: {e}"),
    }
}
