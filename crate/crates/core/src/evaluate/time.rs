use super::EvalError;
use crate::gcode::{emit_gcode, PrintProgram};

/// Constant-speed estimate: every move's 3D length over its feedrate, with
/// no acceleration. Extruder-only moves take no time.
pub fn estimate_print_time(program: &PrintProgram) -> Result<f64, EvalError> {
    estimate_print_time_text(&emit_gcode(program))
}

pub fn estimate_print_time_text(text: &str) -> Result<f64, EvalError> {
    let mut pos = [0.0f64; 3];
    let mut f = 0.0f64;
    let mut relative = false;
    let mut total = 0.0;
    for (n, raw) in text.lines().enumerate() {
        let code = raw.split(';').next().unwrap_or("").trim();
        let mut words = code.split_whitespace();
        let Some(cmd) = words.next() else { continue };
        let cmd = cmd.to_ascii_uppercase();
        let vals: Vec<(char, f64)> = words
            .filter_map(|w| {
                let mut c = w.chars();
                let l = c.next()?.to_ascii_uppercase();
                c.as_str().parse::<f64>().ok().map(|v| (l, v))
            })
            .collect();
        let get = |c: char| vals.iter().find(|(l, _)| *l == c).map(|(_, v)| *v);
        match cmd.as_str() {
            "G0" | "G1" | "G00" | "G01" => {
                if let Some(v) = get('F') {
                    f = v / 60.0;
                }
                let mut next = pos;
                for (k, c) in ['X', 'Y', 'Z'].into_iter().enumerate() {
                    if let Some(v) = get(c) {
                        next[k] = if relative { pos[k] + v } else { v };
                    }
                }
                let len = ((next[0] - pos[0]).powi(2) + (next[1] - pos[1]).powi(2) + (next[2] - pos[2]).powi(2)).sqrt();
                if len > 0.0 {
                    if f <= 0.0 {
                        return Err(EvalError::ZeroFeedrate { line: n + 1, length: len });
                    }
                    total += len / f;
                }
                pos = next;
            }
            "G90" => relative = false,
            "G91" => relative = true,
            "G92" => {
                for (k, c) in ['X', 'Y', 'Z'].into_iter().enumerate() {
                    if let Some(v) = get(c) {
                        pos[k] = v;
                    }
                }
            }
            "G28" => {
                let any = ['X', 'Y', 'Z'].iter().any(|c| code.to_ascii_uppercase().contains(*c));
                for (k, c) in ['X', 'Y', 'Z'].into_iter().enumerate() {
                    if !any || code[3..].to_ascii_uppercase().contains(c) {
                        pos[k] = 0.0;
                    }
                }
            }
            _ => {}
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcode::parse_gcode;

    #[test]
    fn single_move() {
        assert_eq!(estimate_print_time_text("G1 X20 F1200\n").unwrap(), 1.0);
        assert_eq!(estimate_print_time(&parse_gcode("").unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn zero_feedrate_is_an_error() {
        assert_eq!(estimate_print_time_text("G1 X5\n"), Err(EvalError::ZeroFeedrate { line: 1, length: 5.0 }));
    }

    #[test]
    fn travel_counts_and_extruder_moves_do_not() {
        let t = estimate_print_time_text("G0 X0 Y0 Z0.3 F600\nG1 E5\nG0 X3 Y4 Z0.3\n").unwrap();
        assert!((t - (0.3 / 10.0 + 5.0 / 10.0)).abs() < 1e-12);
    }
}
