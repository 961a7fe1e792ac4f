use log::warn;

use super::types::*;
use super::GcodeError;

/// Same-height tolerance for layer detection, mm.
const Z_EPS: f64 = 1e-9;

pub(crate) struct Word {
    pub letter: char,
    pub value: Option<f64>,
    /// Byte span of the value text.
    pub span: (usize, usize),
}

pub(crate) struct Lexed<'a> {
    pub words: Vec<Word>,
    pub comment: Option<&'a str>,
}

/// Splits a line into address words and the trailing `;` comment.
/// Parenthesized comments, line numbers and checksums are skipped.
pub(crate) fn lex(line: &str) -> Result<Lexed<'_>, String> {
    let (code, comment) = match line.find(';') {
        Some(i) => (&line[..i], Some(&line[i..])),
        None => (line, None),
    };
    let b = code.as_bytes();
    let mut words = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == b'(' {
            while i < b.len() && b[i] != b')' {
                i += 1;
            }
            i += 1;
        } else if c == b'*' {
            break;
        } else if c.is_ascii_alphabetic() {
            let letter = c.to_ascii_uppercase() as char;
            i += 1;
            while i < b.len() && b[i] == b' ' {
                i += 1;
            }
            let start = i;
            while i < b.len() && (b[i].is_ascii_digit() || matches!(b[i], b'.' | b'-' | b'+')) {
                i += 1;
            }
            let text = &code[start..i];
            let value = if text.is_empty() {
                if i < b.len() && !b[i].is_ascii_whitespace() && !b[i].is_ascii_alphabetic() && b[i] != b'*' && b[i] != b'(' {
                    return Err(format!("non-numeric value for word '{letter}'"));
                }
                None
            } else {
                Some(text.parse::<f64>().map_err(|_| format!("non-numeric value '{text}' for word '{letter}'"))?)
            };
            if letter != 'N' {
                words.push(Word { letter, value, span: (start, i) });
            }
        } else {
            return Err(format!("unexpected character '{}'", c as char));
        }
    }
    Ok(Lexed { words, comment })
}

fn command_of(line: &str) -> Option<(char, u32)> {
    let t = line.trim_start();
    let t = if t.starts_with(['N', 'n']) {
        t[1..].trim_start_matches(|c: char| c.is_ascii_digit()).trim_start()
    } else {
        t
    };
    let mut chars = t.chars();
    let letter = chars.next()?.to_ascii_uppercase();
    if letter != 'G' && letter != 'M' {
        return None;
    }
    let rest = chars.as_str();
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() {
        return None;
    }
    // G1.5 style subcodes are not ours
    if rest[digits.len()..].starts_with('.') {
        return None;
    }
    Some((letter, digits.parse().ok()?))
}

enum Flat {
    Item(Item),
    Path(Toolpath),
}

struct Builder {
    vertices: Vec<PathVertex>,
    comments: Vec<Option<String>>,
    source: Vec<Option<SourceLine>>,
    kind: PathKind,
}

struct State {
    pos: [f64; 3],
    e_pos: f64,
    f: f64,
    e_mode: ExtrusionMode,
    relative_xyz: bool,
    kind: PathKind,
    first_mode: Option<ExtrusionMode>,
}

pub fn parse_gcode(text: &str) -> Result<PrintProgram, GcodeError> {
    let crlf = text.contains("\r\n");
    let final_newline = text.ends_with('\n');
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut st = State {
        pos: [0.0; 3],
        e_pos: 0.0,
        f: 0.0,
        e_mode: ExtrusionMode::Absolute,
        relative_xyz: false,
        kind: PathKind::Unknown,
        first_mode: None,
    };
    // each entry carries the new height when it is a non-extruding z change
    let mut flat: Vec<(Flat, Option<f64>)> = Vec::new();
    let mut builder: Option<Builder> = None;
    let flush = |b: &mut Option<Builder>, flat: &mut Vec<(Flat, Option<f64>)>| {
        if let Some(b) = b.take() {
            let mut p = Toolpath::new(b.vertices, b.kind, 0);
            p.comments = b.comments;
            p.source = b.source;
            flat.push((Flat::Path(p), None));
        }
    };

    if !text.is_empty() {
        for (n, raw) in body.split('\n').enumerate() {
            let line_no = n + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            let perr = |m: String| GcodeError::Parse { line: line_no, message: m };
            let cmd = command_of(line);
            match cmd {
                Some(('G', 0)) | Some(('G', 1)) => {
                    let lx = lex(line).map_err(perr)?;
                    let rapid = cmd == Some(('G', 0));
                    let mut m = MotionLine {
                        text: line.to_string(),
                        rapid,
                        x: None,
                        y: None,
                        z: None,
                        e: None,
                        f: None,
                        e_rel: 0.0,
                        e_span: None,
                    };
                    for w in lx.words.iter().skip(1) {
                        let slot = match w.letter {
                            'X' => &mut m.x,
                            'Y' => &mut m.y,
                            'Z' => &mut m.z,
                            'E' => {
                                m.e_span = Some(w.span);
                                &mut m.e
                            }
                            'F' => &mut m.f,
                            _ => continue,
                        };
                        *slot = Some(w.value.ok_or_else(|| perr(format!("missing value for word '{}'", w.letter)))?);
                    }
                    if let Some(f) = m.f.as_mut() {
                        *f /= 60.0;
                    }
                    let prev = st.pos;
                    let mut next = prev;
                    for (k, v) in [m.x, m.y, m.z].into_iter().enumerate() {
                        if let Some(v) = v {
                            next[k] = if st.relative_xyz { prev[k] + v } else { v };
                        }
                    }
                    if let Some(e) = m.e {
                        m.e_rel = match st.e_mode {
                            ExtrusionMode::Absolute => e - st.e_pos,
                            ExtrusionMode::Relative => e,
                        };
                        st.e_pos += m.e_rel;
                        if st.e_mode == ExtrusionMode::Absolute {
                            st.e_pos = e;
                        }
                    }
                    if let Some(f) = m.f {
                        st.f = f;
                    }
                    let xy_move = (next[0] - prev[0]).hypot(next[1] - prev[1]);
                    st.pos = next;
                    if m.e_rel > 0.0 && xy_move > 1e-9 {
                        if st.relative_xyz {
                            return Err(perr("extruding moves under relative positioning (G91) are not supported".into()));
                        }
                        st.first_mode.get_or_insert(st.e_mode);
                        let b = builder.get_or_insert_with(|| Builder {
                            vertices: vec![PathVertex::new(prev[0], prev[1], prev[2], 0.0, st.f)],
                            comments: vec![None],
                            source: vec![None],
                            kind: st.kind,
                        });
                        let vertex = PathVertex::new(next[0], next[1], next[2], m.e_rel, st.f);
                        b.vertices.push(vertex);
                        b.comments.push(lx.comment.map(str::to_string));
                        b.source.push(Some(SourceLine { text: m.text.clone(), e_span: m.e_span, vertex }));
                    } else {
                        flush(&mut builder, &mut flat);
                        let zc = (m.e_rel <= 0.0 && (next[2] - prev[2]).abs() > Z_EPS).then_some(next[2]);
                        flat.push((Flat::Item(Item::Motion(m)), zc));
                    }
                }
                Some(('G', 2)) | Some(('G', 3)) => return Err(GcodeError::Arc { line: line_no }),
                Some(('G', 20)) => return Err(perr("inch units (G20) are not supported".into())),
                other => {
                    flush(&mut builder, &mut flat);
                    let effect = match other {
                        Some(('G', 92)) | Some(('G', 28)) => {
                            let lx = lex(line).map_err(perr)?;
                            let get = |c: char| lx.words.iter().find(|w| w.letter == c);
                            if other == Some(('G', 92)) {
                                let val = |c: char| get(c).map(|w| w.value.unwrap_or(0.0));
                                let (x, y, z, e) = (val('X'), val('Y'), val('Z'), val('E'));
                                for (k, v) in [x, y, z].into_iter().enumerate() {
                                    if let Some(v) = v {
                                        st.pos[k] = v;
                                    }
                                }
                                if let Some(e) = e {
                                    st.e_pos = e;
                                }
                                Effect::SetPosition { x, y, z, e }
                            } else {
                                let (mut x, mut y, mut z) = (get('X').is_some(), get('Y').is_some(), get('Z').is_some());
                                if !(x || y || z) {
                                    (x, y, z) = (true, true, true);
                                }
                                for (k, on) in [x, y, z].into_iter().enumerate() {
                                    if on {
                                        st.pos[k] = 0.0;
                                    }
                                }
                                Effect::Home { x, y, z }
                            }
                        }
                        Some(('M', 82)) => {
                            st.e_mode = ExtrusionMode::Absolute;
                            Effect::ExtrusionMode(ExtrusionMode::Absolute)
                        }
                        Some(('M', 83)) => {
                            st.e_mode = ExtrusionMode::Relative;
                            Effect::ExtrusionMode(ExtrusionMode::Relative)
                        }
                        Some(('G', 90)) => {
                            st.relative_xyz = false;
                            Effect::RelativePositioning(false)
                        }
                        Some(('G', 91)) => {
                            st.relative_xyz = true;
                            Effect::RelativePositioning(true)
                        }
                        _ => {
                            if let Some(tag) = line.trim_start().strip_prefix(";TYPE:") {
                                st.kind = PathKind::from_tag(tag);
                            }
                            Effect::None
                        }
                    };
                    flat.push((Flat::Item(Item::Raw(RawLine { text: line.to_string(), effect })), None));
                }
            }
        }
    }
    flush(&mut builder, &mut flat);

    let mut program = PrintProgram {
        prologue: Vec::new(),
        layers: Vec::new(),
        epilogue: Vec::new(),
        extrusion_mode: st.first_mode.unwrap_or(st.e_mode),
        crlf,
        final_newline,
    };
    assign_layers(&mut program, flat);
    Ok(program)
}

fn new_layer(base_z: f64) -> Layer {
    Layer { base_z, items: Vec::new(), paths: Vec::new() }
}

/// Layers open on a travel that rises above the current layer. A layer that
/// receives no path before the nozzle comes back down (z-hop) folds back into
/// the previous one.
fn assign_layers(program: &mut PrintProgram, flat: Vec<(Flat, Option<f64>)>) {
    let layers = &mut program.layers;
    for (entry, zc) in flat {
        match entry {
            Flat::Item(item) => {
                if let Some(zn) = zc {
                    let n = layers.len();
                    if n == 0 {
                        layers.push(new_layer(zn));
                    } else if layers[n - 1].paths.is_empty() {
                        if n >= 2 && zn <= layers[n - 2].base_z + Z_EPS {
                            let pending = layers.pop().unwrap();
                            layers[n - 2].items.extend(pending.items);
                        } else {
                            layers[n - 1].base_z = zn;
                        }
                    } else {
                        let base = layers[n - 1].base_z;
                        if zn > base + Z_EPS {
                            layers.push(new_layer(zn));
                        } else if zn < base - Z_EPS {
                            warn!("z decreases to {zn} below layer base {base} without a new layer");
                        }
                    }
                }
                match layers.last_mut() {
                    Some(l) => l.items.push(item),
                    None => program.prologue.push(item),
                }
            }
            Flat::Path(mut path) => {
                if layers.is_empty() {
                    layers.push(new_layer(path.vertices[0].z));
                }
                let idx = layers.len() - 1;
                let layer = &mut layers[idx];
                if path.vertices.iter().any(|v| v.z <= 0.0) {
                    warn!("deposition at or below z = 0 in layer {idx}");
                }
                path.layer = idx;
                layer.items.push(Item::Path(layer.paths.len()));
                layer.paths.push(path);
            }
        }
    }
    if layers.last().is_some_and(|l| l.paths.is_empty()) {
        program.epilogue = layers.pop().unwrap().items;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feedrate_is_converted_to_mm_per_second() {
        let p = parse_gcode("G1 X0 Y0 Z0.6\nG1 X10 Y0 E0.5 F1200\n").unwrap();
        assert_eq!(p.layers.len(), 1);
        let path = &p.layers[0].paths[0];
        assert_eq!(path.len(), 2);
        assert_eq!(path.xy_length(), 10.0);
        assert_eq!(path.vertices[1].e, 0.5);
        assert_eq!(path.vertices[1].f, 20.0);
    }

    #[test]
    fn travel_breaks_path() {
        let p = parse_gcode("G1 Z0.6\nG1 X1 E1\nG0 X5 Y5\nG1 X6 E2\n").unwrap();
        assert_eq!(p.layers[0].paths.len(), 2);
        assert!(matches!(p.layers[0].items[1], Item::Path(0)));
        assert!(matches!(&p.layers[0].items[2], Item::Motion(m) if m.rapid));
    }

    #[test]
    fn layers_follow_travel_heights() {
        let p = parse_gcode("G0 Z0.6\nG1 X1 E1\nG0 Z1.2\nG1 X2 E2\n").unwrap();
        let bases: Vec<f64> = p.layers.iter().map(|l| l.base_z).collect();
        assert_eq!(bases, vec![0.6, 1.2]);
        assert_eq!(p.layers[1].paths[0].layer, 1);
    }

    #[test]
    fn z_hop_stays_in_layer() {
        let p = parse_gcode("G0 Z0.6\nG1 X1 E1\nG0 Z1.0\nG0 X5\nG0 Z0.6\nG1 X6 E2\nG0 Z1.2\nG1 X7 E3\nG0 Z10\nM84\n").unwrap();
        assert_eq!(p.layers.len(), 2);
        assert_eq!(p.layers[0].paths.len(), 2);
        assert_eq!(p.epilogue.len(), 2);
    }

    #[test]
    fn relative_extrusion() {
        let p = parse_gcode("M83\nG0 Z0.3\nG1 X1 E0.1\nG1 X2 E0.2\n").unwrap();
        assert_eq!(p.extrusion_mode, ExtrusionMode::Relative);
        let es: Vec<f64> = p.layers[0].paths[0].vertices.iter().map(|v| v.e).collect();
        assert_eq!(es, vec![0.0, 0.1, 0.2]);
    }

    #[test]
    fn retraction_is_a_motion_line() {
        let p = parse_gcode("G0 Z0.3\nG1 X1 E1\nG1 E0.2\nG0 X3\nG1 E1\nG1 X4 E2\n").unwrap();
        let l = &p.layers[0];
        assert_eq!(l.paths.len(), 2);
        assert!(matches!(&l.items[2], Item::Motion(m) if (m.e_rel + 0.8).abs() < 1e-12));
        assert!((p.total_e() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn square_perimeter_is_closed() {
        let g = ";TYPE:WALL-OUTER\nG0 X0 Y0 Z0.6\nG1 X4 Y0 E1\nG1 X4 Y4 E2\nG1 X0 Y4 E3\nG1 X0 Y0 E4\n";
        let p = parse_gcode(g).unwrap();
        let path = &p.layers[0].paths[0];
        assert!(path.closed);
        assert_eq!(path.len(), 5);
        assert_eq!(path.kind, PathKind::Perimeter);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(parse_gcode("G1 X1\nG2 X1 Y1 I1 J0\n"), Err(GcodeError::Arc { line: 2 }));
        assert!(matches!(parse_gcode("G0 Z0.3\nG1 Xabc E1\n"), Err(GcodeError::Parse { line: 2, .. })));
        assert!(matches!(parse_gcode("G1 X1.2.3\n"), Err(GcodeError::Parse { line: 1, .. })));
    }

    #[test]
    fn lexer_handles_comments_and_compact_words() {
        let lx = lex("N10 G1X1.5Y-2 (note) E.5 ;tail*").unwrap();
        let letters: String = lx.words.iter().map(|w| w.letter).collect();
        assert_eq!(letters, "GXYE");
        assert_eq!(lx.words[3].value, Some(0.5));
        assert_eq!(lx.comment, Some(";tail*"));
    }

    #[test]
    fn travel_only_height_rebases_pending_layer() {
        let p = parse_gcode("G0 Z0.6\nG1 X1 E1\nG0 Z1.2\nG0 X5\nG0 Z1.8\nG1 X2 E2\n").unwrap();
        let bases: Vec<f64> = p.layers.iter().map(|l| l.base_z).collect();
        assert_eq!(bases, vec![0.6, 1.8]);
        assert_eq!(p.layers[1].items.len(), 4);
    }
}
