use super::types::*;

/// Positions closer than this are treated as coincident when deciding
/// whether a connecting move is needed.
const POS_EPS: f64 = 1e-9;

struct Emitter {
    out: Vec<String>,
    pos: [f64; 3],
    e_out: f64,
    f_out: Option<String>,
    e_mode: ExtrusionMode,
    relative_xyz: bool,
}

impl Emitter {
    fn raw(&mut self, r: &RawLine) {
        self.out.push(r.text.clone());
        match &r.effect {
            Effect::None => {}
            Effect::SetPosition { x, y, z, e } => {
                for (k, v) in [x, y, z].into_iter().enumerate() {
                    if let Some(v) = v {
                        self.pos[k] = *v;
                    }
                }
                if let Some(e) = e {
                    self.e_out = *e;
                }
            }
            Effect::Home { x, y, z } => {
                for (k, on) in [x, y, z].into_iter().enumerate() {
                    if *on {
                        self.pos[k] = 0.0;
                    }
                }
            }
            Effect::ExtrusionMode(m) => self.e_mode = *m,
            Effect::RelativePositioning(r) => self.relative_xyz = *r,
        }
    }

    fn motion(&mut self, m: &MotionLine) {
        let mut text = m.text.clone();
        if let Some(e) = m.e {
            match self.e_mode {
                ExtrusionMode::Absolute => {
                    let target = self.e_out + m.e_rel;
                    if (target - e).abs() > 5e-7 {
                        if let Some((a, b)) = m.e_span {
                            text.replace_range(a..b, &fmt_num(target));
                        }
                        self.e_out = target;
                    } else {
                        self.e_out = e;
                    }
                }
                ExtrusionMode::Relative => self.e_out += e,
            }
        }
        if let Some(f) = m.f {
            self.f_out = Some(fmt_num(f * 60.0));
        }
        for (k, v) in [m.x, m.y, m.z].into_iter().enumerate() {
            if let Some(v) = v {
                self.pos[k] = if self.relative_xyz { self.pos[k] + v } else { v };
            }
        }
        self.out.push(text);
    }

    fn path(&mut self, p: &Toolpath) {
        let v0 = &p.vertices[0];
        let target = [v0.x, v0.y, v0.top()];
        let differs: Vec<bool> = (0..3).map(|k| (self.pos[k] - target[k]).abs() > POS_EPS).collect();
        if differs.iter().any(|&d| d) {
            // climb before moving sideways, descend after
            let (xy, z) = (differs[0] || differs[1], differs[2]);
            let up = z && target[2] > self.pos[2];
            if up {
                self.out.push(MotionLine::travel(None, None, Some(target[2])).text);
            }
            if xy {
                self.out.push(MotionLine::travel(Some(target[0]), Some(target[1]), None).text);
            }
            if z && !up {
                self.out.push(MotionLine::travel(None, None, Some(target[2])).text);
            }
            self.pos = target;
        }
        let source = |k: usize| p.source.get(k).and_then(Option::as_ref).filter(|s| s.vertex == p.vertices[k]);
        for (k, (v, c)) in p.vertices.iter().zip(&p.comments).enumerate().skip(1) {
            if let Some(src) = source(k) {
                self.verbatim(src);
                continue;
            }
            let e = match self.e_mode {
                ExtrusionMode::Absolute => {
                    self.e_out += v.e;
                    self.e_out
                }
                ExtrusionMode::Relative => v.e,
            };
            let mut line = format!("G1 X{} Y{} Z{} E{}", fmt_num(v.x), fmt_num(v.y), fmt_num(v.top()), fmt_num(e));
            let f = fmt_num(v.f * 60.0);
            if self.f_out.as_deref() != Some(f.as_str()) {
                line.push_str(" F");
                line.push_str(&f);
                self.f_out = Some(f);
            }
            if let Some(c) = c {
                line.push(' ');
                line.push_str(c);
            }
            self.out.push(line);
            self.pos = [v.x, v.y, v.top()];
        }
    }

    /// Copies an unchanged path line, shifting an absolute `E` word when
    /// upstream flow changes moved the running total.
    fn verbatim(&mut self, src: &SourceLine) {
        let v = &src.vertex;
        let mut text = src.text.clone();
        match self.e_mode {
            ExtrusionMode::Absolute => {
                let target = self.e_out + v.e;
                let written = src.e_span.and_then(|(a, b)| text[a..b].parse::<f64>().ok());
                match written {
                    Some(w) if (target - w).abs() <= 5e-7 => self.e_out = w,
                    _ => {
                        if let Some((a, b)) = src.e_span {
                            text.replace_range(a..b, &fmt_num(target));
                        }
                        self.e_out = target;
                    }
                }
            }
            ExtrusionMode::Relative => {}
        }
        self.f_out = Some(fmt_num(v.f * 60.0));
        self.pos = [v.x, v.y, v.top()];
        self.out.push(text);
    }

    fn items(&mut self, items: &[Item], paths: &[Toolpath]) {
        for it in items {
            match it {
                Item::Raw(r) => self.raw(r),
                Item::Motion(m) => self.motion(m),
                Item::Path(i) => self.path(&paths[*i]),
            }
        }
    }
}

/// Writes the program back as G-code. Deposition moves are regenerated with
/// explicit X/Y/Z/E; everything else is copied verbatim except for absolute
/// `E` words that must shift after upstream flow changes.
pub fn emit_gcode(program: &PrintProgram) -> String {
    let mut em = Emitter {
        out: Vec::new(),
        pos: [0.0; 3],
        e_out: 0.0,
        f_out: Some(fmt_num(0.0)),
        e_mode: ExtrusionMode::Absolute,
        relative_xyz: false,
    };
    em.items(&program.prologue, &[]);
    for layer in &program.layers {
        em.items(&layer.items, &layer.paths);
    }
    em.items(&program.epilogue, &[]);
    let sep = if program.crlf { "\r\n" } else { "\n" };
    let mut s = em.out.join(sep);
    if program.final_newline && !em.out.is_empty() {
        s.push_str(sep);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::super::parse_gcode;
    use super::*;

    const SAMPLE: &str = "; header\nM82\nG28\nG92 E0\nG1 Z0.6 F3000\n;TYPE:FILL\nG1 X0 Y0\nG1 X10 Y0 E0.5 F1200 ; first\nG1 X10 Y10 E1.0\nG1 E0.2 F2400\nG0 X20 Y20\nG1 E1.0\nG1 X25 Y20 E1.25\nM107\n";

    fn motion_values(text: &str) -> Vec<Vec<(char, f64)>> {
        text.lines()
            .filter(|l| l.starts_with("G0") || l.starts_with("G1"))
            .map(|l| {
                super::super::parse::lex(l)
                    .unwrap()
                    .words
                    .iter()
                    .skip(1)
                    .map(|w| (w.letter, w.value.unwrap()))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn displaced_vertex_gets_explicit_z() {
        let mut p = parse_gcode(SAMPLE).unwrap();
        p.layers[0].paths[0].vertices[1].delta = 0.2;
        let out = emit_gcode(&p);
        assert!(out.contains("G1 X10.00000 Y0.00000 Z0.80000 E0.50000 F1200.00000 ; first"));
    }

    #[test]
    fn unmodified_round_trip() {
        let p = parse_gcode(SAMPLE).unwrap();
        let out = emit_gcode(&p);
        assert_eq!(out, SAMPLE);
        let again = parse_gcode(&out).unwrap();
        assert_eq!(again.layers.len(), p.layers.len());
        assert_eq!(again.layers[0].paths, p.layers[0].paths);
        assert!((again.total_e() - p.total_e()).abs() < 1e-9);
        for l in out.lines().filter(|l| !l.starts_with('G')) {
            assert!(SAMPLE.lines().any(|s| s == l));
        }
        let emitted = emit_gcode(&again);
        assert_eq!(motion_values(&emitted), motion_values(&out));
    }

    #[test]
    fn absolute_e_shifts_after_flow_change() {
        let mut p = parse_gcode(SAMPLE).unwrap();
        p.layers[0].paths[0].vertices[1].e = 0.7;
        let out = emit_gcode(&p);
        assert!(out.contains("G1 E0.40000 F2400"));
        assert!(out.contains("G1 X25 Y20 E1.45000"));
        let back = parse_gcode(&out).unwrap();
        assert!((back.total_e() - p.total_e()).abs() < 1e-9);
    }

    #[test]
    fn relative_mode_keeps_segment_deltas() {
        let src = "M83\nG1 Z0.3 F600\nG1 X0 Y0\nG1 X5 E0.25\nG1 X5 Y5 E0.25\nG1 E-0.8\n";
        let p = parse_gcode(src).unwrap();
        let out = emit_gcode(&p);
        assert!(out.contains("G1 X5 Y5 E0.25\n"));
        assert!(out.contains("G1 E-0.8"));
        let back = parse_gcode(&out).unwrap();
        assert_eq!(back.extrusion_mode, ExtrusionMode::Relative);
        assert!((back.total_e() - (0.5 - 0.8)).abs() < 1e-12);
    }

    #[test]
    fn crlf_is_preserved() {
        let p = parse_gcode("G0 Z0.3\r\nG1 X1 E1\r\nM84\r\n").unwrap();
        let out = emit_gcode(&p);
        assert_eq!(out, "G0 Z0.3\r\nG1 X1 E1\r\nM84\r\n");
    }

    #[test]
    fn connector_raises_to_displaced_start() {
        let mut p = parse_gcode("G0 X0 Y0 Z0.6 F600\nG1 X1 E1\n").unwrap();
        p.layers[0].paths[0].vertices[0].delta = 0.1;
        let out = emit_gcode(&p);
        assert_eq!(out.lines().nth(1), Some("G0 Z0.70000"));
    }
}
