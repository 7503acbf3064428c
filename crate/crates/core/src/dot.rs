//! DOT emission for rooted labeled balls.

use std::fmt::Write;

use crate::action::GeneratorSystem;
use crate::ball::BallType;

/// Renders a ball as a DOT digraph: vertices labeled by their canonical
/// geodesic words, edges labeled by generator symbols, root marked. Each
/// unordered edge appears once, keyed by the smaller symbol of its pair.
pub fn ball_to_dot(ball: &BallType, gens: &GeneratorSystem, name: &str) -> String {
    let parents = ball.parents();
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{name}\" {{");
    let _ = writeln!(out, "  rankdir=LR;");
    for v in 0..ball.vertex_count() as u32 {
        let label = ball.word_for(v, &parents).display(gens);
        if v == 0 {
            let _ = writeln!(out, "  v0 [label=\"{label}\", shape=doublecircle];");
        } else {
            let _ = writeln!(out, "  v{v} [label=\"{label}\"];");
        }
    }
    for v in 0..ball.vertex_count() as u32 {
        for q in 0..gens.len() {
            if gens.inverse_of(q) < q {
                continue; // emit each pair once, from its smaller symbol
            }
            if let Some(t) = ball.target(v, q) {
                let sym = gens.symbol_name(q);
                if gens.inverse_of(q) == q {
                    let _ = writeln!(out, "  v{v} -> v{t} [label=\"{sym}\", dir=none];");
                } else {
                    let _ = writeln!(out, "  v{v} -> v{t} [label=\"{sym}\"];");
                }
            }
        }
    }
    out.push_str("}\n");
    out
}
