//! Reference `evoeval/1` server backed by the synthetic cost model.

use std::io::{self, BufRead, Write};

use evoengineer_core::evaluator::{synthetic_evaluate, SyntheticRules};

use crate::protocol::{decode_request, encode_reply, EvalReply};

/// Answers one request line.
pub fn handle_line(line: &str, rules: &SyntheticRules) -> EvalReply {
    let req = match decode_request(line) {
        Ok(req) => req,
        Err(e) => return EvalReply::malformed(&e.to_string()),
    };
    let cfg = req.eval_config();
    if let Err(e) = cfg.validate() {
        return EvalReply::malformed(&e);
    }
    match synthetic_evaluate(&req.code, rules, req.n_cases, &cfg) {
        Ok(result) => EvalReply::from_result(&result),
        Err(e) => EvalReply::from_error(&e),
    }
}

/// Serves requests until EOF. Blank lines are ignored.
pub fn serve(input: impl BufRead, mut output: impl Write, rules: &SyntheticRules) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = handle_line(&line, rules);
        writeln!(output, "{}", encode_reply(&reply))?;
        output.flush()?;
    }
    Ok(())
}
