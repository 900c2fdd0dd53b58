//! Print the built-in endpoint catalog as a table, or validate a catalog
//! file given as the first argument.

use echoshow::cloud::EndpointConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let owned;
    let cfg = match std::env::args().nth(1) {
        Some(path) => {
            owned = EndpointConfig::parse(&std::fs::read_to_string(path)?)?;
            owned.validate()?;
            &owned
        }
        None => EndpointConfig::builtin(),
    };
    for ep in &cfg.endpoints {
        let paged = if ep.pagination.is_some() { "paged" } else { "" };
        println!("{:<28} {:<5} {:<40} {:?} {paged}", ep.id, ep.method, ep.display_url(), ep.auth);
    }
    println!("\nretired routes:");
    for d in &cfg.deprecated {
        println!("  {}{}", d.host, d.path);
    }
    Ok(())
}
