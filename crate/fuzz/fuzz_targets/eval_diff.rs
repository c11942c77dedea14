#![no_main]

use clairaut::expr::{parse, Scope, SliceBindings};
use clairaut::{Symbol, SymbolTable};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() < 8 {
        return;
    }
    let (head, rest) = data.split_at(8);
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let table = SymbolTable::new(&["q1", "q2"], &[("k", 0.5)]).unwrap();
    let Ok(e) = parse(text, &table, Scope::GAUGE) else { return };
    let x = |i: usize| f64::from(head[i]) / 64.0 - 2.0;
    let (q, v, p) = ([x(0), x(1)], [x(2), x(3)], [x(4), x(5)]);
    let b = SliceBindings { q: &q, v: &v, p: &p, params: &[0.5], t: Some(x(6)) };
    let _ = e.eval(&b);
    for s in [Symbol::Coord(0), Symbol::Coord(1), Symbol::Mom(0), Symbol::Param(0), Symbol::Time] {
        let d = e.diff(s);
        let _ = d.eval(&b);
        let _ = d.display(&table).to_string();
    }
});
