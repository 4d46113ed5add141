//! Minimal DIMACS front end over batsat with competition-style output.
//!
//! Usage: smpc-sat <file.cnf | ->
//!
//! Prints `s SATISFIABLE` plus `v` lines, or `s UNSATISFIABLE`; exits 10 or
//! 20 respectively, 1 on errors.

use std::io::{BufRead, BufReader, Write};

use batsat::{lbool, BasicSolver, SolverInterface};

fn main() {
    let Some(path) = std::env::args().nth(1) else {
        eprintln!("usage: smpc-sat <file.cnf | ->");
        std::process::exit(1);
    };
    let reader: Box<dyn BufRead> = if path == "-" {
        Box::new(BufReader::new(std::io::stdin()))
    } else {
        match std::fs::File::open(&path) {
            Ok(f) => Box::new(BufReader::new(f)),
            Err(e) => {
                eprintln!("c cannot open {path}: {e}");
                std::process::exit(1);
            }
        }
    };
    let mut reader = reader;
    let mut solver = BasicSolver::default();
    if let Err(e) = batsat::dimacs::parse(&mut reader, &mut solver, false, false) {
        eprintln!("c parse error: {e}");
        std::process::exit(1);
    }
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    let res = solver.solve_limited(&[]);
    if res == lbool::TRUE {
        writeln!(out, "s SATISFIABLE").unwrap();
        let mut line = String::from("v");
        for i in 0..solver.num_vars() {
            let v = solver.var_of_int(i);
            let lit = i as i64 + 1;
            let val = if solver.value_var(v) == lbool::TRUE { lit } else { -lit };
            line.push_str(&format!(" {val}"));
            if line.len() > 70 {
                writeln!(out, "{line}").unwrap();
                line = String::from("v");
            }
        }
        line.push_str(" 0");
        writeln!(out, "{line}").unwrap();
        out.flush().unwrap();
        std::process::exit(10);
    } else if res == lbool::FALSE {
        writeln!(out, "s UNSATISFIABLE").unwrap();
        out.flush().unwrap();
        std::process::exit(20);
    } else {
        writeln!(out, "s UNKNOWN").unwrap();
        out.flush().unwrap();
        std::process::exit(0);
    }
}
