use nnpipe::element::{ElementFactory, PadPresence};
use nnpipe::Registry;

use crate::launch::{EXIT_INVALID, EXIT_OK};

fn describe(f: &dyn ElementFactory) {
    println!("{}", f.kind());
    println!("  {}", f.description());
    if !f.aliases().is_empty() {
        println!("  aliases: {}", f.aliases().join(", "));
    }
    println!("pads:");
    for t in f.pad_templates() {
        let presence = match t.presence {
            PadPresence::Always => "always",
            PadPresence::Request => "request",
        };
        println!("  {:<10} {:<5} {:<8} {}", t.name, t.direction, presence, t.caps);
    }
    println!("properties:");
    for p in f.properties() {
        let mut line = format!("  {:<18} {}", p.name, p.kind.type_name());
        if let Some(d) = p.default {
            line.push_str(&format!(" (default {d})"));
        }
        if p.required {
            line.push_str(" (required)");
        }
        println!("{line}");
        if !p.blurb.is_empty() {
            println!("      {}", p.blurb);
        }
        if !p.aliases.is_empty() {
            println!("      aliases: {}", p.aliases.join(", "));
        }
    }
}

pub fn run(kind: Option<&str>) -> u8 {
    let registry = Registry::shared();
    match kind {
        None => {
            println!("elements:");
            let mut kinds: Vec<&str> = registry.kinds().collect();
            kinds.sort();
            for k in kinds {
                let f = registry.factory(k).expect("listed kind");
                println!("  {k:<20} {}", f.description());
            }
            println!("filter frameworks:");
            for name in registry.framework_names() {
                println!("  {name}");
            }
            EXIT_OK
        }
        Some(k) => match registry.factory(k) {
            Some(f) => {
                describe(f.as_ref());
                EXIT_OK
            }
            None => {
                eprintln!("error: UnknownKind: no element kind '{k}'");
                EXIT_INVALID
            }
        },
    }
}
