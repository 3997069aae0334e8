//! Prints the assumption lattice, its Hasse edges, and which settings each
//! built-in method reaches.
//!
//! `cargo run --example lattice -- dot` emits Graphviz instead.

use lattice_cl::methods::Registry;

fn main() -> lattice_cl::Result<()> {
    let reg = Registry::new();
    let catalog = reg.catalog();
    if std::env::args().nth(1).as_deref() == Some("dot") {
        print!("{}", catalog.to_dot());
        return Ok(());
    }
    println!("{} nodes:", catalog.nodes().len());
    for node in catalog.nodes() {
        let tag = if node.is_abstract() { "abstract" } else { "concrete" };
        println!("  {:<38} {tag}", node.name);
    }
    println!("\nHasse edges (general -> specific):");
    for (parent, child) in catalog.edges() {
        println!("  {parent} -> {child}");
    }
    println!("\nApplicability:");
    for entry in reg.methods() {
        let names: Vec<String> = reg.applicable_settings(&entry.name)?.iter().map(|n| n.name.clone()).collect();
        println!("  {:<12} {}", entry.name, names.join(", "));
    }
    Ok(())
}
