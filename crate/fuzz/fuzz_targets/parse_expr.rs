#![no_main]

use clairaut::expr::{parse, Scope};
use clairaut::SymbolTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let table = SymbolTable::new(&["q1", "q2", "x"], &[("k", 1.5)]).unwrap();
    for scope in [Scope::LAGRANGIAN, Scope::OBSERVABLE, Scope::GAUGE] {
        if let Ok(e) = parse(text, &table, scope) {
            let printed = e.display(&table).to_string();
            let again = parse(&printed, &table, scope).expect("printed form reparses");
            let twice = parse(&again.display(&table).to_string(), &table, scope).expect("reprint reparses");
            assert!(again == twice, "print/parse not idempotent: {printed}");
        }
    }
});
